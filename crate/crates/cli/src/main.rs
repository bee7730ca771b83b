//! Experiment runner for the exp2d library.
//!
//! Every run resolves a configuration (TOML file + command-line overrides),
//! hashes it, and writes all artifacts into a content-addressed run
//! directory that is never overwritten. Reports are JSON lines plus CSV
//! summaries; field data uses the library dump format.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use exp2d::besov::{regularity_slope, HeatQuadrature};
use exp2d::dynamics::{
    linearized_flow_x0, linearized_flow_y0, record_trajectory, simulate_stationary, Scheme,
    SimOptions, Stepper,
};
use exp2d::fields::{
    fourier_forward, l2_norm, make_grid, CutoffMode, Field, GridSpec,
};
use exp2d::functionals::{
    calibrate_lyapunov, fpk_residual, ibp_residual, lyapunov_drift_check, lyapunov_pass,
    CylinderFunction, DriftForm, Expr, Slot,
};
use exp2d::gff::{chain_rng, sample_gff, sample_gff_spectral, ModelParams};
use exp2d::params::{
    choose_indices, gamma_max, gamma_tilde_max, lemma39_feasibility_boundary, r_interval,
    s_interval, solve_system_3_20, solve_system_lemma39,
};
use exp2d::resolvent::resolvent_identity_check;
use exp2d::wick::{wick_exp, Kernels};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser, Debug)]
#[command(name = "exp2d", about = "Spectral simulator and verification suite")]
struct Cli {
    /// Path to a TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output root directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a stationary ensemble and persist it.
    Sample(ModelOverrides),
    /// Integration-by-parts residual on a stationary ensemble.
    IbpCheck(IbpArgs),
    /// Stationarity (FPK) residual on a stationary ensemble.
    FpkCheck(ModelOverrides),
    /// Lyapunov drift inequality check.
    Lyapunov(ModelOverrides),
    /// Regularity slope of Wick-exponential samples.
    BesovProbe(BesovArgs),
    /// Parameter feasibility report.
    Params(ParamsArgs),
    /// Resolvent identity check.
    Resolvent(ResolventArgs),
    /// Linearized flows against common-random-number finite differences.
    Gradcheck(ModelOverrides),
    /// Renormalization-constant table over a mollification-scale grid.
    Renorm(RenormArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct ModelOverrides {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct IbpArgs {
    #[command(flatten)]
    model: ModelOverrides,
    /// Drift form: "generator" (exact for the simulated system) or
    /// "mollified" (unprojected drift, converges only in the limit).
    #[arg(long, default_value = "generator")]
    drift: String,
}

#[derive(Args, Debug, Clone)]
struct BesovArgs {
    #[command(flatten)]
    model: ModelOverrides,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
}

#[derive(Args, Debug, Clone)]
struct ParamsArgs {
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated gamma grid for a CSV sweep of the windows.
    #[arg(long)]
    gamma_grid: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct ResolventArgs {
    #[command(flatten)]
    model: ModelOverrides,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Args, Debug, Clone)]
struct RenormArgs {
    /// Comma-separated mollification scales.
    #[arg(long, default_value = "0.2,0.1,0.05,0.025")]
    eps_grid: String,
    #[arg(long, default_value_t = 512)]
    n: usize,
}

/// The resolved experiment configuration; round-trips through TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    gamma: f64,
    mass: f64,
    epsilon: f64,
    fejer_order: usize,
    torus_size: f64,
    points_per_side: usize,
    dt: f64,
    burn_in: f64,
    n_samples: usize,
    spacing: f64,
    n_chains: usize,
    seed: u64,
    scheme: String,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            gamma: 0.1,
            mass: 1.0,
            epsilon: 0.4,
            fejer_order: 8,
            torus_size: 1.0,
            points_per_side: 32,
            dt: 0.02,
            burn_in: 5.0,
            n_samples: 200,
            spacing: 0.5,
            n_chains: 8,
            seed: 1,
            scheme: "strang".into(),
        }
    }
}

impl Config {
    fn grid(&self) -> Result<GridSpec> {
        Ok(make_grid(self.torus_size, self.points_per_side)?)
    }

    fn model(&self) -> Result<ModelParams> {
        Ok(ModelParams::from_gamma(
            self.gamma,
            self.mass,
            self.epsilon,
            self.fejer_order,
            self.grid()?,
        )?)
    }

    fn kernels(&self) -> Result<Arc<Kernels>> {
        Ok(Arc::new(Kernels::new(self.model()?, CutoffMode::TorusUnity)?))
    }

    fn scheme(&self) -> Result<Scheme> {
        match self.scheme.as_str() {
            "lie" => Ok(Scheme::LieSplit),
            "strang" => Ok(Scheme::StrangSplit),
            other => Err(anyhow!("unknown scheme {other:?} (expected \"lie\" or \"strang\")")),
        }
    }

    fn sim_options(&self) -> Result<SimOptions> {
        Ok(SimOptions {
            dt: self.dt,
            scheme: self.scheme()?,
            burn_in: self.burn_in,
            n_samples: self.n_samples,
            spacing: self.spacing,
            n_chains: self.n_chains,
        })
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: String,
    field: Option<&'a str>,
}

fn main() {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    match run(&cli) {
        Ok(()) => {}
        Err(err) => {
            // Machine-readable error with a best-effort field attribution.
            let text = format!("{err:#}");
            let field = ["gamma", "epsilon", "dt", "seed", "scheme", "points_per_side"]
                .into_iter()
                .find(|f| text.contains(f));
            let report = ErrorReport { error: text, field };
            eprintln!("{}", serde_json::to_string(&report).unwrap());
            std::process::exit(2);
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config: Config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).context("parsing config")?
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    // Apply subcommand overrides that map onto the shared model fields.
    let model = match &cli.command {
        Command::Sample(m)
        | Command::FpkCheck(m)
        | Command::Lyapunov(m)
        | Command::Gradcheck(m) => Some(m.clone()),
        Command::IbpCheck(a) => Some(a.model.clone()),
        Command::BesovProbe(a) => Some(a.model.clone()),
        Command::Resolvent(a) => Some(a.model.clone()),
        _ => None,
    };
    if let Some(m) = model {
        if let Some(g) = m.gamma {
            config.gamma = g;
        }
        if let Some(n) = m.n {
            config.points_per_side = n;
        }
        if let Some(e) = m.epsilon {
            config.epsilon = e;
        }
        if let Some(s) = m.samples {
            config.n_samples = s;
        }
    }
    // Validate early so config errors exit with code 2 before any work.
    config.model().context("validating model parameters")?;
    config.scheme()?;
    Ok(config)
}

/// Create a content-addressed run directory `<out>/<name>-<hash12>[-k]`.
/// Existing directories are never reused or overwritten.
fn run_dir(out: &Path, name: &str, config: &Config) -> Result<PathBuf> {
    let toml_text = toml::to_string_pretty(config)?;
    let hash = Sha256::digest(toml_text.as_bytes());
    let hex: String = hash.iter().take(6).map(|b| format!("{b:02x}")).collect();
    let base = out.join(format!("{name}-{hex}"));
    let dir = if base.exists() {
        let mut k = 1;
        loop {
            let candidate = out.join(format!("{name}-{hex}-{k}"));
            if !candidate.exists() {
                break candidate;
            }
            k += 1;
        }
    } else {
        base
    };
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), &toml_text)?;
    fs::write(dir.join("config.sha256"), format!("{hash:x}\n"))?;
    Ok(dir)
}

fn write_json_line<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let line = serde_json::to_string(value)?;
    let path = dir.join(name);
    let mut existing = if path.exists() {
        fs::read_to_string(&path)?
    } else {
        String::new()
    };
    existing.push_str(&line);
    existing.push('\n');
    fs::write(path, existing)?;
    println!("{line}");
    Ok(())
}

/// The default test vector: a normalized low-band field.
fn default_test_vector(grid: GridSpec) -> Field {
    let f = Field::from_fn(grid, |x, y| {
        (x / grid.torus_size).cos() + ((x + y) / grid.torus_size).sin()
    });
    f.scale(1.0 / l2_norm(&f))
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    if cli.print_config {
        print!("{}", toml::to_string_pretty(&config)?);
        return Ok(());
    }
    match &cli.command {
        Command::Sample(_) => cmd_sample(cli, &config),
        Command::IbpCheck(args) => cmd_ibp(cli, &config, args),
        Command::FpkCheck(_) => cmd_fpk(cli, &config),
        Command::Lyapunov(_) => cmd_lyapunov(cli, &config),
        Command::BesovProbe(args) => cmd_besov(cli, &config, args),
        Command::Params(args) => cmd_params(cli, &config, args),
        Command::Resolvent(args) => cmd_resolvent(cli, &config, args),
        Command::Gradcheck(_) => cmd_gradcheck(cli, &config),
        Command::Renorm(args) => cmd_renorm(cli, &config, args),
    }
}

fn cmd_sample(cli: &Cli, config: &Config) -> Result<()> {
    let dir = run_dir(&cli.out, "sample", config)?;
    let kernels = config.kernels()?;
    let ens = simulate_stationary(kernels, &config.sim_options()?, config.seed)?;
    exp2d::io::write_ensemble(&dir.join("ensemble"), &ens)?;
    #[derive(Serialize)]
    struct Summary {
        n_samples: usize,
        max_y: f64,
        warnings: Vec<String>,
        out_dir: String,
    }
    write_json_line(
        &dir,
        "report.jsonl",
        &Summary {
            n_samples: ens.samples.len(),
            max_y: ens.max_y(),
            warnings: ens.warnings.clone(),
            out_dir: dir.display().to_string(),
        },
    )
}

fn cmd_ibp(cli: &Cli, config: &Config, args: &IbpArgs) -> Result<()> {
    let dir = run_dir(&cli.out, "ibp-check", config)?;
    let kernels = config.kernels()?;
    let grid = kernels.params.grid;
    let ens = simulate_stationary(kernels.clone(), &config.sim_options()?, config.seed)?;
    let u = default_test_vector(grid);
    let h = default_test_vector(grid);
    let cf = CylinderFunction::of_phi(Expr::Tanh(Box::new(Expr::Coord(0))), vec![u])?;
    let drift = match args.drift.as_str() {
        "generator" => DriftForm::GeneratorMatched,
        "mollified" => DriftForm::MollifiedLimit,
        other => return Err(anyhow!("unknown drift form {other:?}")),
    };
    let report = ibp_residual(&ens.samples, &cf, &h, &kernels, drift)?;
    write_csv_summary(&dir, &report)?;
    write_json_line(&dir, "report.jsonl", &report)
}

fn cmd_fpk(cli: &Cli, config: &Config) -> Result<()> {
    let dir = run_dir(&cli.out, "fpk-check", config)?;
    let kernels = config.kernels()?;
    let grid = kernels.params.grid;
    let ens = simulate_stationary(kernels.clone(), &config.sim_options()?, config.seed)?;
    let u = default_test_vector(grid);
    let cf = CylinderFunction::new(
        Expr::Pow(Box::new(Expr::Coord(0)), 2),
        vec![(Slot::Phi, u)],
    )?;
    let report = fpk_residual(&ens.samples, &cf, &kernels)?;
    write_csv_summary(&dir, &report)?;
    write_json_line(&dir, "report.jsonl", &report)
}

fn cmd_lyapunov(cli: &Cli, config: &Config) -> Result<()> {
    let dir = run_dir(&cli.out, "lyapunov", config)?;
    let kernels = config.kernels()?;
    let grid = kernels.params.grid;
    let idx = choose_indices(config.gamma)?;
    let quad = HeatQuadrature::default_for(grid, config.mass);
    // Calibrate in the exactly-solvable free sector with the same sizes.
    let mut free = config.clone();
    free.gamma = 0.0;
    let free_ens = simulate_stationary(free.kernels()?, &free.sim_options()?, config.seed)?;
    let calibration = calibrate_lyapunov(&free_ens.samples, &idx, config.mass, &quad)?;
    let ens = simulate_stationary(kernels.clone(), &config.sim_options()?, config.seed)?;
    let report = lyapunov_drift_check(&ens.samples, &idx, &kernels, calibration, &quad)?;
    #[derive(Serialize)]
    struct LyapunovOut {
        indices: exp2d::params::LyapunovIndices,
        calibration: f64,
        pass: bool,
        report: exp2d::functionals::ResidualReport,
    }
    let out = LyapunovOut {
        indices: idx,
        calibration,
        pass: lyapunov_pass(&report),
        report,
    };
    write_json_line(&dir, "report.jsonl", &out)
}

fn cmd_besov(cli: &Cli, config: &Config, args: &BesovArgs) -> Result<()> {
    let dir = run_dir(&cli.out, "besov-probe", config)?;
    let kernels = config.kernels()?;
    let grid = kernels.params.grid;
    let fields: Vec<Field> = (0..config.n_samples.max(100) as u64)
        .map(|i| {
            let x = sample_gff(grid, config.mass, &mut chain_rng(config.seed, i));
            Ok(wick_exp(&x, &kernels)?.values)
        })
        .collect::<Result<_>>()?;
    let report = regularity_slope(&fields, args.p)?;
    write_json_line(&dir, "report.jsonl", &report)
}

fn cmd_params(cli: &Cli, config: &Config, args: &ParamsArgs) -> Result<()> {
    let dir = run_dir(&cli.out, "params", config)?;
    if let Some(grid_spec) = &args.gamma_grid {
        let mut csv = String::from("gamma,s_upper,r_lo,r_hi,system_3_20_slack,lemma39_slack\n");
        for token in grid_spec.split(',') {
            let gamma: f64 = token.trim().parse().context("parsing gamma grid")?;
            let (_, s_hi) = s_interval(gamma)?;
            let (r_lo, r_hi) = r_interval(gamma, 0.55 * s_hi)?
                .map(|(a, b)| (a, b))
                .unwrap_or((f64::NAN, f64::NAN));
            let t1 = solve_system_3_20(gamma)?;
            let t2 = solve_system_lemma39(gamma)?;
            csv.push_str(&format!(
                "{gamma},{s_hi},{r_lo},{r_hi},{},{}\n",
                t1.slack, t2.slack
            ));
        }
        fs::write(dir.join("sweep.csv"), &csv)?;
        println!("{}", csv.trim_end());
        return Ok(());
    }
    let gamma = args.gamma.unwrap_or(config.gamma);
    let (g_max, r_star) = gamma_max();
    let (_, s_hi) = s_interval(gamma)?;
    #[derive(Serialize)]
    struct ParamsOut {
        gamma: f64,
        gamma_tilde_max: f64,
        gamma_max: f64,
        r_star: f64,
        s_interval: (f64, f64),
        r_interval_at_mid_s: Option<(f64, f64)>,
        system_3_20: exp2d::params::FeasibleTuple,
        lemma39: exp2d::params::FeasibleTuple,
        lemma39_boundary: f64,
    }
    let out = ParamsOut {
        gamma,
        gamma_tilde_max: gamma_tilde_max(),
        gamma_max: g_max,
        r_star,
        s_interval: (0.0, s_hi),
        r_interval_at_mid_s: r_interval(gamma, 0.55 * s_hi)?,
        system_3_20: solve_system_3_20(gamma)?,
        lemma39: solve_system_lemma39(gamma)?,
        lemma39_boundary: lemma39_feasibility_boundary(5e-3)?,
    };
    write_json_line(&dir, "report.jsonl", &out)
}

fn cmd_resolvent(cli: &Cli, config: &Config, args: &ResolventArgs) -> Result<()> {
    let dir = run_dir(&cli.out, "resolvent", config)?;
    let kernels = config.kernels()?;
    let grid = kernels.params.grid;
    let ens = simulate_stationary(kernels.clone(), &config.sim_options()?, config.seed)?;
    let stepper = Stepper::new(kernels, config.dt, config.scheme()?)?;
    let u = default_test_vector(grid);
    let f = CylinderFunction::new(Expr::Coord(0), vec![(Slot::X, u)])?;
    let t_max = 8.0 / config.mass.powi(2);
    let report = resolvent_identity_check(
        &f,
        args.lambda,
        &ens.samples,
        &stepper,
        32,
        t_max,
        config.seed.wrapping_add(1),
    )?;
    write_csv_summary(&dir, &report)?;
    write_json_line(&dir, "report.jsonl", &report)
}

fn cmd_gradcheck(cli: &Cli, config: &Config) -> Result<()> {
    let dir = run_dir(&cli.out, "gradcheck", config)?;
    let kernels = config.kernels()?;
    let grid = kernels.params.grid;
    let stepper = Stepper::new(kernels, config.dt, config.scheme()?)?;
    let steps = (1.0 / config.dt).round() as usize;
    let x0 = sample_gff_spectral(grid, config.mass, &mut chain_rng(config.seed, 0));
    let y0 = Field::from_fn(grid, |x, y| -0.5 - 0.2 * (x + y).cos().powi(2));
    let traj = record_trajectory(&stepper, x0.clone(), y0.clone(), steps, chain_rng(config.seed, 1))?;
    let h = default_test_vector(grid);
    let h_neg = Field::constant(grid, -1.0).axpy(0.2, &h);
    let lambda = 1e-4;
    // Y0 direction.
    let flow_y = linearized_flow_y0(&traj, &h_neg, &stepper)?;
    let traj_py = record_trajectory(
        &stepper,
        x0.clone(),
        y0.axpy(lambda, &h_neg),
        steps,
        chain_rng(config.seed, 1),
    )?;
    let fd_y = traj_py.final_y.axpy(-1.0, &traj.final_y).scale(1.0 / lambda);
    let rel_y = l2_norm(&fd_y.axpy(-1.0, flow_y.last().unwrap())) / l2_norm(flow_y.last().unwrap());
    // X0 direction.
    let flow_x = linearized_flow_x0(&traj, &h, &stepper)?;
    let mut x0p = x0.clone();
    let pert = fourier_forward(&h);
    for (c, p) in x0p.coeffs.iter_mut().zip(&pert.coeffs) {
        *c += lambda * p;
    }
    let traj_px = record_trajectory(&stepper, x0p, y0, steps, chain_rng(config.seed, 1))?;
    let fd_x = traj_px.final_y.axpy(-1.0, &traj.final_y).scale(1.0 / lambda);
    let rel_x = l2_norm(&fd_x.axpy(-1.0, flow_x.last().unwrap())) / l2_norm(flow_x.last().unwrap());
    #[derive(Serialize)]
    struct GradOut {
        rel_error_y0: f64,
        rel_error_x0: f64,
        lambda: f64,
        steps: usize,
        pass: bool,
    }
    write_json_line(
        &dir,
        "report.jsonl",
        &GradOut {
            rel_error_y0: rel_y,
            rel_error_x0: rel_x,
            lambda,
            steps,
            pass: rel_y < 1e-3 && rel_x < 1e-3,
        },
    )
}

fn cmd_renorm(cli: &Cli, config: &Config, args: &RenormArgs) -> Result<()> {
    let dir = run_dir(&cli.out, "renorm", config)?;
    let grid = make_grid(config.torus_size, args.n)?;
    let mut eps_values = Vec::new();
    for token in args.eps_grid.split(',') {
        eps_values.push(token.trim().parse::<f64>().context("parsing eps grid")?);
    }
    let mut rows = Vec::new();
    for &eps in &eps_values {
        let c = exp2d::gff::renorm_constant(eps, config.mass, grid)?;
        rows.push((eps, c));
    }
    let mut csv = String::from("epsilon,c_eps,diff_to_next\n");
    let rate = 0.5 * std::f64::consts::FRAC_1_PI * 2.0_f64.ln();
    for i in 0..rows.len() {
        let diff = if i + 1 < rows.len() {
            // Halving eps adds about (log 2)/(2 pi) to the constant.
            format!("{}", rows[i + 1].1 - rows[i].1)
        } else {
            String::new()
        };
        csv.push_str(&format!("{},{},{diff}\n", rows[i].0, rows[i].1));
    }
    fs::write(dir.join("renorm.csv"), &csv)?;
    #[derive(Serialize)]
    struct RenormOut {
        rows: Vec<(f64, f64)>,
        expected_halving_increment: f64,
    }
    write_json_line(
        &dir,
        "report.jsonl",
        &RenormOut {
            rows,
            expected_halving_increment: rate,
        },
    )
}

fn write_csv_summary(dir: &Path, report: &exp2d::functionals::ResidualReport) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["lhs", "rhs", "residual", "stderr", "z", "n"])?;
    w.write_record([
        report.lhs_estimate.to_string(),
        report.rhs_estimate.to_string(),
        report.residual.to_string(),
        report.stderr.to_string(),
        report.z_score.to_string(),
        report.n_samples.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
