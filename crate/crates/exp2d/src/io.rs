//! Persistence: field dumps and ensemble directories.
//!
//! A field dump is a single-line JSON header (`{"M":…,"n":…,"kind":"real"}`
//! terminated by `\n`) followed by the raw little-endian `f64` values in
//! row-major order. Ensembles persist as a directory holding a
//! `manifest.json` (parameters, seeds, burn-in, spacing, warnings) plus one
//! dump per sample component.

use crate::dynamics::{Ensemble, Scheme};
use crate::error::{Error, Result};
use crate::fields::{Field, GridSpec};
use crate::gff::ModelParams;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read as _, Write as _};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    #[serde(rename = "M")]
    torus_size: f64,
    n: usize,
    kind: String,
}

/// Write a real field dump.
pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = FieldHeader {
        torus_size: field.grid.torus_size,
        n: field.grid.points_per_side,
        kind: "real".into(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a real field dump.
pub fn read_field(path: &Path) -> Result<Field> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_bytes = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
        if header_bytes.len() > 4096 {
            return Err(Error::InvalidParameter(
                "field dump header exceeds 4096 bytes".into(),
            ));
        }
    }
    let header: FieldHeader = serde_json::from_slice(&header_bytes)?;
    if header.kind != "real" {
        return Err(Error::InvalidParameter(format!(
            "unsupported field dump kind {:?}",
            header.kind
        )));
    }
    let grid = GridSpec {
        torus_size: header.torus_size,
        points_per_side: header.n,
    };
    let mut values = Vec::with_capacity(grid.len());
    let mut buf = [0u8; 8];
    for _ in 0..grid.len() {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok(Field { grid, values })
}

/// Manifest describing a persisted ensemble directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub params: ModelParams,
    pub master_seed: u64,
    pub burn_in: f64,
    pub spacing: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub n_samples: usize,
    pub warnings: Vec<String>,
}

/// Persist an ensemble as `manifest.json` plus `sample_{i}_{x,y}.dat` dumps.
pub fn write_ensemble(dir: &Path, ensemble: &Ensemble) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = EnsembleManifest {
        params: ensemble.params,
        master_seed: ensemble.master_seed,
        burn_in: ensemble.burn_in,
        spacing: ensemble.spacing,
        dt: ensemble.dt,
        scheme: ensemble.scheme,
        n_samples: ensemble.samples.len(),
        warnings: ensemble.warnings.clone(),
    };
    let file = File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
    for (i, (x, y)) in ensemble.samples.iter().enumerate() {
        write_field(&dir.join(format!("sample_{i:05}_x.dat")), x)?;
        write_field(&dir.join(format!("sample_{i:05}_y.dat")), y)?;
    }
    Ok(())
}

/// Load an ensemble directory written by [`write_ensemble`].
pub fn read_ensemble(dir: &Path) -> Result<Ensemble> {
    let file = File::open(dir.join("manifest.json"))?;
    let manifest: EnsembleManifest = serde_json::from_reader(BufReader::new(file))?;
    let mut samples = Vec::with_capacity(manifest.n_samples);
    for i in 0..manifest.n_samples {
        let x = read_field(&dir.join(format!("sample_{i:05}_x.dat")))?;
        let y = read_field(&dir.join(format!("sample_{i:05}_y.dat")))?;
        samples.push((x, y));
    }
    Ok(Ensemble {
        samples,
        burn_in: manifest.burn_in,
        spacing: manifest.spacing,
        master_seed: manifest.master_seed,
        params: manifest.params,
        dt: manifest.dt,
        scheme: manifest.scheme,
        warnings: manifest.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::make_grid;

    #[test]
    fn field_round_trip_is_bit_exact() {
        let grid = make_grid(1.0, 16).unwrap();
        let f = Field::from_fn(grid, |x, y| (x * 3.0).sin() + 0.25 * y - 1e-17 * x);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.dat");
        write_field(&path, &f).unwrap();
        let g = read_field(&path).unwrap();
        assert_eq!(f.grid, g.grid);
        assert_eq!(f.values, g.values);
    }

    #[test]
    fn ensemble_round_trip() {
        use crate::dynamics::{simulate_stationary, SimOptions};
        use crate::fields::CutoffMode;
        use crate::gff::ModelParams;
        use crate::wick::Kernels;
        use std::sync::Arc;
        let grid = make_grid(1.0, 16).unwrap();
        let params = ModelParams::from_gamma(0.1, 1.0, 0.8, 4, grid).unwrap();
        let kernels = Arc::new(Kernels::new(params, CutoffMode::TorusUnity).unwrap());
        let opts = SimOptions {
            dt: 0.05,
            scheme: Scheme::LieSplit,
            burn_in: 0.5,
            n_samples: 4,
            spacing: 0.2,
            n_chains: 2,
        };
        let ens = simulate_stationary(kernels, &opts, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("ens");
        write_ensemble(&target, &ens).unwrap();
        let back = read_ensemble(&target).unwrap();
        assert_eq!(back.samples.len(), ens.samples.len());
        for (a, b) in ens.samples.iter().zip(&back.samples) {
            assert_eq!(a.0.values, b.0.values);
            assert_eq!(a.1.values, b.1.values);
        }
        assert_eq!(back.master_seed, 5);
    }
}
