//! Per-time comparison of two stored state series.

use std::path::{Path, PathBuf};

use serde::Serialize;
use staticnoise::quantum::fidelity;
use staticnoise::{CMatrix, DensityMatrix, C64};

use crate::error::CliError;
use crate::run::{fmt, states_file};

/// Sample times are considered equal within this absolute tolerance.
const GRID_TOL: f64 = 1e-12;

pub struct Series {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

/// Picks `states_<source>.csv` in a run directory; without a source the
/// master-equation series is preferred.
pub fn locate(dir: &Path, source: Option<&str>) -> Result<PathBuf, CliError> {
    let candidates: Vec<&str> = match source {
        Some(s) => vec![s],
        None => vec!["me", "mc"],
    };
    for s in &candidates {
        let p = dir.join(states_file(s));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(CliError::Bundle(format!("{} has no states_{{{}}}.csv", dir.display(), candidates.join(","))))
}

pub fn load(path: &Path) -> Result<Series, CliError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows: Vec<(f64, usize, usize, C64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| CliError::Bundle(format!("{}: short row", path.display())));
        let num = |i: usize| -> Result<f64, CliError> {
            field(i)?.parse().map_err(|e| CliError::Bundle(format!("{}: {e}", path.display())))
        };
        let idx = |i: usize| -> Result<usize, CliError> {
            field(i)?.parse().map_err(|e| CliError::Bundle(format!("{}: {e}", path.display())))
        };
        rows.push((num(0)?, idx(1)?, idx(2)?, C64::new(num(3)?, num(4)?)));
    }
    let d = rows.iter().map(|r| r.2).max().ok_or_else(|| CliError::Bundle(format!("{} is empty", path.display())))?;
    let per_time = d * (d + 1) / 2;
    if !rows.len().is_multiple_of(per_time) {
        return Err(CliError::Bundle(format!("{}: row count is not a multiple of {per_time}", path.display())));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for chunk in rows.chunks(per_time) {
        let t = chunk[0].0;
        let mut m = CMatrix::zeros(d, d);
        for &(tt, j, k, z) in chunk {
            if tt != t || j == 0 || j > k {
                return Err(CliError::Bundle(format!("{}: unexpected row ({tt}, {j}, {k})", path.display())));
            }
            m[(j - 1, k - 1)] = z;
            m[(k - 1, j - 1)] = z.conj();
        }
        times.push(t);
        states.push(DensityMatrix::from_matrix_unchecked(m));
    }
    Ok(Series { times, states })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub min_fidelity: f64,
    pub max_purity_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Breach {
    pub quantity: &'static str,
    pub t: f64,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub times: Vec<f64>,
    pub fidelity: Vec<f64>,
    /// `Tr ρ_a² / Tr ρ_b²`.
    pub purity_ratio: Vec<f64>,
    pub coherence_diff: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub n_times: usize,
    pub min_fidelity: f64,
    pub min_fidelity_time: f64,
    pub max_purity_deviation: f64,
    pub max_purity_deviation_time: f64,
    pub max_coherence_diff: f64,
    pub breaches: Vec<Breach>,
}

pub fn compare(a: &Series, b: &Series) -> Result<Comparison, CliError> {
    if a.times.len() != b.times.len() {
        return Err(CliError::GridMismatch(format!("{} against {} samples", a.times.len(), b.times.len())));
    }
    if let Some((ta, tb)) = a.times.iter().zip(&b.times).find(|(x, y)| (*x - *y).abs() > GRID_TOL) {
        return Err(CliError::GridMismatch(format!("t = {ta} against t = {tb}")));
    }
    let mut out = Comparison {
        times: a.times.clone(),
        fidelity: Vec::with_capacity(a.times.len()),
        purity_ratio: Vec::with_capacity(a.times.len()),
        coherence_diff: Vec::with_capacity(a.times.len()),
    };
    for (x, y) in a.states.iter().zip(&b.states) {
        out.fidelity.push(fidelity(x, y)?);
        out.purity_ratio.push(x.purity() / y.purity());
        out.coherence_diff.push((x.total_coherence() - y.total_coherence()).abs());
    }
    Ok(out)
}

impl Comparison {
    pub fn report(&self, th: Thresholds) -> Report {
        let mut breaches = Vec::new();
        let (mut i_fid, mut i_pur) = (0, 0);
        for (i, &t) in self.times.iter().enumerate() {
            let f = self.fidelity[i];
            let p = (self.purity_ratio[i] - 1.0).abs();
            if f < self.fidelity[i_fid] {
                i_fid = i;
            }
            if p > (self.purity_ratio[i_pur] - 1.0).abs() {
                i_pur = i;
            }
            if f < th.min_fidelity {
                breaches.push(Breach { quantity: "fidelity", t, value: f, threshold: th.min_fidelity });
            }
            if p > th.max_purity_deviation {
                breaches.push(Breach { quantity: "purity_deviation", t, value: p, threshold: th.max_purity_deviation });
            }
        }
        Report {
            n_times: self.times.len(),
            min_fidelity: self.fidelity[i_fid],
            min_fidelity_time: self.times[i_fid],
            max_purity_deviation: (self.purity_ratio[i_pur] - 1.0).abs(),
            max_purity_deviation_time: self.times[i_pur],
            max_coherence_diff: self.coherence_diff.iter().copied().fold(0.0, f64::max),
            breaches,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "fidelity", "purity_ratio", "coherence_diff"])?;
        for i in 0..self.times.len() {
            w.write_record([
                fmt(self.times[i]),
                fmt(self.fidelity[i]),
                fmt(self.purity_ratio[i]),
                fmt(self.coherence_diff[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(times: &[f64], p: f64) -> Series {
        let states = times
            .iter()
            .map(|_| {
                let m = CMatrix::from_row_slice(
                    2,
                    2,
                    &[C64::new(p, 0.0), C64::new(0.1, 0.0), C64::new(0.1, 0.0), C64::new(1.0 - p, 0.0)],
                );
                DensityMatrix::from_matrix_unchecked(m)
            })
            .collect();
        Series { times: times.to_vec(), states }
    }

    #[test]
    fn self_comparison_is_perfect() {
        let s = series(&[0.0, 0.5, 1.0], 0.7);
        let c = compare(&s, &s).unwrap();
        let r = c.report(Thresholds { min_fidelity: 0.999, max_purity_deviation: 1e-12 });
        assert!((r.min_fidelity - 1.0).abs() < 1e-12);
        assert!(r.max_purity_deviation < 1e-15);
        assert!(r.breaches.is_empty());
    }

    #[test]
    fn breaches_are_flagged() {
        let a = series(&[0.0, 1.0], 0.9);
        let b = series(&[0.0, 1.0], 0.5);
        let r = compare(&a, &b).unwrap().report(Thresholds { min_fidelity: 0.999, max_purity_deviation: 0.1 });
        assert_eq!(r.breaches.len(), 4);
    }

    #[test]
    fn grids_must_agree() {
        let a = series(&[0.0, 1.0], 0.5);
        let b = series(&[0.0, 1.5], 0.5);
        assert!(matches!(compare(&a, &b), Err(CliError::GridMismatch(_))));
    }
}
