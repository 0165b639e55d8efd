//! Sparse recovery of the per-step increments from compressed measurements.
//!
//! The increments are assumed sparse in an orthonormal basis `Phi`, so the
//! measurements satisfy `Lambda = (A Phi^T) (Phi beta)`. Real and imaginary
//! parts are recovered independently with [`omp`], then mapped back through
//! `Phi^T` and summed into the amplitude trajectory.

mod basis;
mod omp;

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use basis::{DctBasis, IdentityBasis, SparsifyingBasis};
pub use omp::{omp, OmpSolution, RecoveryConfig};

use crate::error::{Error, Result};
use crate::io;
use crate::sensing::{MeasurementVector, SensingMatrix};
use crate::signal::{prefix_sum, ComplexSeries, SeriesKind, TimeGrid};

/// Per-channel residual targets, `[re, im]`.
pub type ChannelTolerance = [f64; 2];

#[derive(Clone, Debug)]
pub struct RecoveryResult {
    /// Sparse basis coefficients, `[re, im]`.
    pub coefficients: [Vec<f64>; 2],
    pub support: [Vec<usize>; 2],
    pub residual_norm: [f64; 2],
    pub rank_deficient: [bool; 2],
    pub beta: ComplexSeries,
    pub alpha: ComplexSeries,
}

/// Mean-squared errors of a recovery against a reference beta series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub beta_re: f64,
    pub beta_im: f64,
    pub alpha_re: f64,
    pub alpha_im: f64,
}

impl MseReport {
    /// Sum of the two beta channel errors (the success statistic).
    pub fn beta_sum(&self) -> f64 {
        self.beta_re + self.beta_im
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_re.max(self.alpha_im)
    }
}

impl RecoveryResult {
    /// Errors of `beta'` against `reference` and of `alpha'` against its prefix sum.
    pub fn errors_against(&self, reference: &ComplexSeries) -> Result<MseReport> {
        let reference_alpha = match reference.kind() {
            SeriesKind::Beta => prefix_sum(reference.values()),
            SeriesKind::Alpha => return Err(Error::arg("reference must be a beta series")),
        };
        let ra: Vec<f64> = reference_alpha.iter().map(|z| z.re).collect();
        let ia: Vec<f64> = reference_alpha.iter().map(|z| z.im).collect();
        Ok(MseReport {
            beta_re: mse(&reference.re(), &self.beta.re())?,
            beta_im: mse(&reference.im(), &self.beta.im())?,
            alpha_re: mse(&ra, &self.alpha.re())?,
            alpha_im: mse(&ia, &self.alpha.im())?,
        })
    }

    pub fn iterations(&self) -> [usize; 2] {
        [self.support[0].len(), self.support[1].len()]
    }

    /// Writes `n,t,re_beta,im_beta,re_alpha,im_alpha`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let grid = *self.beta.grid();
        let header = ["n", "t", "re_beta", "im_beta", "re_alpha", "im_alpha"];
        io::write_csv(path, &header, |w| {
            for (k, (b, a)) in self
                .beta
                .values()
                .iter()
                .zip(self.alpha.values())
                .enumerate()
            {
                w.serialize((k + 1, grid.time(k + 1), b.re, b.im, a.re, a.im))?;
            }
            Ok(())
        })
    }

    /// `key = value` diagnostics, one per line.
    pub fn diagnostics(&self, mse: Option<&MseReport>) -> String {
        let mut out = String::new();
        for (ch, name) in [(0, "re"), (1, "im")] {
            out.push_str(&format!(
                "support_size_{name} = {}\n",
                self.support[ch].len()
            ));
            out.push_str(&format!("residual_{name} = {:e}\n", self.residual_norm[ch]));
            out.push_str(&format!(
                "rank_deficient_{name} = {}\n",
                self.rank_deficient[ch]
            ));
        }
        if let Some(m) = mse {
            out.push_str(&format!("mse_beta_re = {:e}\n", m.beta_re));
            out.push_str(&format!("mse_beta_im = {:e}\n", m.beta_im));
            out.push_str(&format!("mse_alpha_re = {:e}\n", m.alpha_re));
            out.push_str(&format!("mse_alpha_im = {:e}\n", m.alpha_im));
        }
        out
    }
}

/// Recovers beta from `measurements` with each channel solved by OMP against `A Phi^T`.
pub fn recover_beta(
    a: &SensingMatrix,
    measurements: &MeasurementVector,
    basis: &dyn SparsifyingBasis,
    grid: &TimeGrid,
    cfg: &RecoveryConfig,
    tolerance: Option<ChannelTolerance>,
) -> Result<RecoveryResult> {
    if measurements.len() != a.rows() {
        return Err(Error::Dimension(format!(
            "{} measurements for {} matrix rows",
            measurements.len(),
            a.rows()
        )));
    }
    if basis.dim() != a.cols() || grid.steps() != a.cols() {
        return Err(Error::Dimension(format!(
            "basis dimension {} / grid steps {} / matrix columns {} disagree",
            basis.dim(),
            grid.steps(),
            a.cols()
        )));
    }
    let effective = basis.effective_matrix(a);
    recover_with_effective(&effective, measurements, basis, grid, cfg, tolerance)
}

/// Same as [`recover_beta`] with a precomputed `A Phi^T`.
pub fn recover_with_effective(
    effective: &nalgebra::DMatrix<f64>,
    measurements: &MeasurementVector,
    basis: &dyn SparsifyingBasis,
    grid: &TimeGrid,
    cfg: &RecoveryConfig,
    tolerance: Option<ChannelTolerance>,
) -> Result<RecoveryResult> {
    let channels = [measurements.re(), measurements.im()];
    let mut solutions = Vec::with_capacity(2);
    for (ch, y) in channels.iter().enumerate() {
        let mut c = *cfg;
        if let Some(t) = tolerance {
            c.tolerance = c.tolerance.max(t[ch]);
        }
        solutions.push(omp(effective, y, &c)?);
    }
    let re = basis.synthesize(&solutions[0].coefficients);
    let im = basis.synthesize(&solutions[1].coefficients);
    let beta_values: Vec<Complex64> = re
        .iter()
        .zip(&im)
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect();
    let alpha_values = prefix_sum(&beta_values);
    let [s0, s1]: [OmpSolution; 2] = solutions.try_into().expect("two channels");
    Ok(RecoveryResult {
        beta: ComplexSeries::new(SeriesKind::Beta, *grid, beta_values)?,
        alpha: ComplexSeries::new(SeriesKind::Alpha, *grid, alpha_values)?,
        residual_norm: [s0.residual_norm, s1.residual_norm],
        rank_deficient: [s0.rank_deficient, s1.rank_deficient],
        support: [s0.support, s1.support],
        coefficients: [s0.coefficients, s1.coefficients],
    })
}

/// Mean-squared error `(1/N) sum (x_n - x'_n)^2`; zero for empty inputs.
pub fn mse(x: &[f64], x_rec: &[f64]) -> Result<f64> {
    if x.len() != x_rec.len() {
        return Err(Error::Dimension(format!(
            "mse of series with lengths {} and {}",
            x.len(),
            x_rec.len()
        )));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    Ok(x.iter()
        .zip(x_rec)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / x.len() as f64)
}

/// Smallest `S` such that, in each channel, the `S` largest basis coefficients
/// carry at least `energy_fraction` of the channel energy (max over channels).
pub fn sparsity_estimate(
    series: &ComplexSeries,
    basis: &dyn SparsifyingBasis,
    energy_fraction: f64,
) -> Result<usize> {
    if !(energy_fraction > 0.0 && energy_fraction < 1.0) {
        return Err(Error::arg(format!(
            "energy fraction must be in (0, 1), got {energy_fraction}"
        )));
    }
    if basis.dim() != series.len() {
        return Err(Error::Dimension("basis and series lengths differ".into()));
    }
    let count = |channel: Vec<f64>| {
        let mut energy: Vec<f64> = basis.analyze(&channel).into_iter().map(|c| c * c).collect();
        let total: f64 = energy.iter().sum();
        if total == 0.0 {
            return 0;
        }
        energy.sort_by(|a, b| b.total_cmp(a));
        let target = energy_fraction * total;
        let mut acc = 0.0;
        for (k, e) in energy.iter().enumerate() {
            acc += e;
            if acc >= target {
                return k + 1;
            }
        }
        energy.len()
    };
    Ok(count(series.re()).max(count(series.im())))
}

/// `ceil(C * S * log2(N / S))`, the measurement count suggested for an
/// `S`-sparse signal of length `N`.
pub fn min_measurements(sparsity: usize, length: usize, constant: f64) -> Result<usize> {
    if sparsity == 0 || sparsity >= length {
        return Err(Error::arg(format!(
            "need 0 < S < N, got S = {sparsity}, N = {length}"
        )));
    }
    if !(constant > 0.0) || !constant.is_finite() {
        return Err(Error::arg(format!(
            "constant must be positive, got {constant}"
        )));
    }
    let bound = constant * sparsity as f64 * (length as f64 / sparsity as f64).log2();
    Ok(bound.ceil() as usize)
}
