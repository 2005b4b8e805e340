//! Coverage and average-minimum-RMSD between generated and reference conformers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kabsch::rmsd_kabsch;
use crate::linalg::Coords;
use crate::scalar::Real;

/// Coverage threshold for drug-like molecules.
pub const DELTA_DRUGS: f64 = 0.75;
/// Coverage threshold for small molecules.
pub const DELTA_QM9: f64 = 0.5;

/// Precision scans generated → truth, recall scans truth → generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Percent of truth conformers matched below `delta`.
    pub cov_r: f64,
    /// Percent of generated conformers matched below `delta`.
    pub cov_p: f64,
    pub amr_r: f64,
    pub amr_p: f64,
    pub delta: f64,
    /// Number of generated conformers.
    pub k: usize,
    /// Number of truth conformers.
    pub l: usize,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width table, header plus one row.
    pub fn to_table(&self) -> String {
        format!(
            "{:>8} {:>8} {:>8} {:>8} {:>6} {:>5} {:>5}\n{:>8.2} {:>8.4} {:>8.2} {:>8.4} {:>6.3} {:>5} {:>5}\n",
            "COV-R", "AMR-R", "COV-P", "AMR-P", "delta", "K", "L",
            self.cov_r, self.amr_r, self.cov_p, self.amr_p, self.delta, self.k, self.l
        )
    }

    /// Averages per-molecule reports (each molecule weighted equally).
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricReport {
            cov_r: avg(|r| r.cov_r),
            cov_p: avg(|r| r.cov_p),
            amr_r: avg(|r| r.amr_r),
            amr_p: avg(|r| r.amr_p),
            delta: reports[0].delta,
            k: reports.iter().map(|r| r.k).sum(),
            l: reports.iter().map(|r| r.l).sum(),
        })
    }
}

/// Row-major `generated x truth` RMSD matrix.
pub fn rmsd_matrix<T: Real>(generated: &[Coords<T>], truth: &[Coords<T>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(generated.len() * truth.len());
    for g in generated {
        for c in truth {
            out.push(rmsd_kabsch(g, c)?.to_f64_lossy());
        }
    }
    Ok(out)
}

pub fn coverage_amr<T: Real>(
    generated: &[Coords<T>],
    truth: &[Coords<T>],
    delta: f64,
) -> Result<MetricReport> {
    if generated.is_empty() || truth.is_empty() {
        return Err(Error::InvalidArgument(
            "coverage needs nonempty generated and truth sets".into(),
        ));
    }
    let d = rmsd_matrix(generated, truth)?;
    let (k, l) = (generated.len(), truth.len());

    let min_over_truth: Vec<f64> = (0..k)
        .map(|i| (0..l).map(|j| d[i * l + j]).fold(f64::INFINITY, f64::min))
        .collect();
    let min_over_generated: Vec<f64> = (0..l)
        .map(|j| (0..k).map(|i| d[i * l + j]).fold(f64::INFINITY, f64::min))
        .collect();

    let cov = |mins: &[f64]| {
        100.0 * mins.iter().filter(|&&m| m < delta).count() as f64 / mins.len() as f64
    };
    let amr = |mins: &[f64]| mins.iter().sum::<f64>() / mins.len() as f64;

    Ok(MetricReport {
        cov_r: cov(&min_over_generated),
        cov_p: cov(&min_over_truth),
        amr_r: amr(&min_over_generated),
        amr_p: amr(&min_over_truth),
        delta,
        k,
        l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::sample_prior;

    #[test]
    fn identical_sets_are_fully_covered() {
        let truth: Vec<Coords<f64>> = (0..3).map(|s| sample_prior(6, s).unwrap()).collect();
        let r = coverage_amr(&truth, &truth, 0.5).unwrap();
        assert_eq!((r.cov_r, r.cov_p), (100.0, 100.0));
        assert!(r.amr_r < 1e-8 && r.amr_p < 1e-8);
    }

    #[test]
    fn strict_threshold_at_zero() {
        let truth: Vec<Coords<f64>> = vec![Coords::new(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])];
        let r = coverage_amr(&truth, &truth, 0.0).unwrap();
        assert_eq!(r.cov_r, 0.0);
        let r = coverage_amr(&truth, &truth, 1e-12).unwrap();
        assert_eq!(r.cov_r, 100.0);
    }

    #[test]
    fn empty_sets_error() {
        let truth = vec![sample_prior::<f64>(4, 1).unwrap()];
        assert!(coverage_amr(&[], &truth, 0.5).is_err());
        assert!(coverage_amr(&truth, &[], 0.5).is_err());
    }

    #[test]
    fn table_has_two_lines() {
        let r = MetricReport {
            cov_r: 50.0,
            cov_p: 25.0,
            amr_r: 0.1,
            amr_p: 0.2,
            delta: 0.75,
            k: 4,
            l: 2,
        };
        assert_eq!(r.to_table().lines().count(), 2);
        let back: MetricReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
