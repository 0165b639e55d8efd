//! End-to-end runs: drive -> increments -> flip-modulated measurements ->
//! sparse recovery -> reconstructed amplitude, and Monte Carlo sweeps of the
//! recovery success probability over `(M, K)`.
//!
//! Every random draw is keyed off the master seed:
//!
//! | quantity          | stream                                        |
//! |-------------------|-----------------------------------------------|
//! | random drive      | `master / "drive"`                            |
//! | drive noise       | `master / "noise"`                            |
//! | flip schedules    | `master / "matrix" / "flip-schedule" / m`     |
//! | sweep trial       | `master / "sweep" / M / K / trial / ...`      |

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::recovery::{
    recover_with_effective, sparsity_estimate, ChannelTolerance, DctBasis, MseReport,
    RecoveryConfig, RecoveryResult, SparsifyingBasis,
};
use crate::seed::SeedStream;
use crate::sensing::{MeasurementVector, SensingMatrix};
use crate::signal::{
    accumulate_alpha, exp_integral, ComplexSeries, DrivenCavity, DrivingProtocol, NoiseSpec,
    RandomSmooth, Tabulated, TimeGrid,
};

/// Drive protocol as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProtocolSpec {
    Square {
        #[serde(default = "defaults::amplitude")]
        amplitude: f64,
        /// Defaults to a fifth of the window.
        #[serde(default)]
        period: Option<f64>,
        #[serde(default = "defaults::duty")]
        duty: f64,
        #[serde(default)]
        offset: f64,
    },
    Random {
        /// Defaults to a value derived from the master seed.
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "defaults::harmonics")]
        harmonics: usize,
        #[serde(default = "defaults::max_index")]
        max_index: u32,
        #[serde(default = "defaults::amplitude")]
        rms: f64,
    },
    Tabulated {
        path: PathBuf,
    },
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self::square()
    }
}

impl ProtocolSpec {
    pub fn square() -> Self {
        ProtocolSpec::Square {
            amplitude: defaults::amplitude(),
            period: None,
            duty: defaults::duty(),
            offset: 0.0,
        }
    }

    pub fn random() -> Self {
        ProtocolSpec::Random {
            seed: None,
            harmonics: defaults::harmonics(),
            max_index: defaults::max_index(),
            rms: defaults::amplitude(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProtocolSpec::Square { .. } => "square",
            ProtocolSpec::Random { .. } => "random",
            ProtocolSpec::Tabulated { .. } => "tabulated",
        }
    }

    /// Instantiates the drive on `grid`; `stream` seeds a random drive
    /// whose seed is left unset.
    pub fn build(&self, grid: &TimeGrid, stream: &SeedStream) -> Result<DrivingProtocol> {
        let window = (grid.t0(), grid.t_end());
        match *self {
            ProtocolSpec::Square {
                amplitude,
                period,
                duty,
                offset,
            } => DrivingProtocol::square_pulse(
                amplitude,
                period.unwrap_or((window.1 - window.0) / 5.0),
                duty,
                offset,
            ),
            ProtocolSpec::Random {
                seed,
                harmonics,
                max_index,
                rms,
            } => {
                let seed = seed.unwrap_or_else(|| stream.fingerprint());
                RandomSmooth::new(seed, harmonics, max_index, rms, window)
                    .map(DrivingProtocol::RandomSmooth)
            }
            ProtocolSpec::Tabulated { ref path } => {
                Tabulated::from_csv(path).map(DrivingProtocol::Tabulated)
            }
        }
    }

    /// Makes a tabulated path absolute relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let ProtocolSpec::Tabulated { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSettings {
    #[serde(default = "defaults::yes")]
    pub enabled: bool,
    #[serde(default = "defaults::noise_strength")]
    pub strength: f64,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            strength: defaults::noise_strength(),
        }
    }
}

/// Recovery options; unset values are resolved per run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySettings {
    /// Fixed support cap; by default the sparsity estimate of the noiseless
    /// increments plus `sparsity_margin`.
    #[serde(default)]
    pub max_support: Option<usize>,
    #[serde(default = "defaults::sparsity_margin")]
    pub sparsity_margin: usize,
    #[serde(default = "defaults::energy_fraction")]
    pub energy_fraction: f64,
    /// Fixed absolute residual target; by default the expected l2 norm of the
    /// noise in each measurement channel (zero without noise).
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default = "defaults::relative_tolerance")]
    pub relative_tolerance: f64,
    #[serde(default = "defaults::yes")]
    pub normalize_columns: bool,
}

impl Default for RecoverySettings {
    fn default() -> Self {
        Self {
            max_support: None,
            sparsity_margin: defaults::sparsity_margin(),
            energy_fraction: defaults::energy_fraction(),
            tolerance: None,
            relative_tolerance: defaults::relative_tolerance(),
            normalize_columns: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(rename = "M_values", default = "defaults::sweep_m")]
    pub m_values: Vec<usize>,
    #[serde(rename = "K_values", default = "defaults::sweep_k")]
    pub k_values: Vec<usize>,
    /// Success iff `mse(Re beta) + mse(Im beta)` is below this.
    #[serde(default = "defaults::success_threshold")]
    pub threshold: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            m_values: defaults::sweep_m(),
            k_values: defaults::sweep_k(),
            threshold: defaults::success_threshold(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(rename = "delta", default = "defaults::detuning")]
    pub detuning: f64,
    #[serde(default)]
    pub t0: f64,
    #[serde(rename = "N", default = "defaults::steps")]
    pub steps: usize,
    #[serde(default = "defaults::tau_b")]
    pub tau_b: f64,
    #[serde(default = "defaults::substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub noise: NoiseSettings,
    #[serde(rename = "M", default = "defaults::measurements")]
    pub measurements: usize,
    #[serde(rename = "K", default = "defaults::flips")]
    pub flips: usize,
    #[serde(default)]
    pub recovery: RecoverySettings,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            protocol: ProtocolSpec::default(),
            detuning: defaults::detuning(),
            t0: 0.0,
            steps: defaults::steps(),
            tau_b: defaults::tau_b(),
            substeps: defaults::substeps(),
            noise: NoiseSettings::default(),
            measurements: defaults::measurements(),
            flips: defaults::flips(),
            recovery: RecoverySettings::default(),
            trials: defaults::trials(),
            seed: 0,
            sweep: SweepSettings::default(),
            output_dir: None,
        }
    }
}

pub mod defaults {
    pub fn amplitude() -> f64 {
        0.1
    }
    pub fn duty() -> f64 {
        0.2
    }
    pub fn harmonics() -> usize {
        5
    }
    pub fn max_index() -> u32 {
        8
    }
    pub fn yes() -> bool {
        true
    }
    pub fn noise_strength() -> f64 {
        0.05
    }
    pub fn sparsity_margin() -> usize {
        10
    }
    pub fn energy_fraction() -> f64 {
        0.999
    }
    pub fn relative_tolerance() -> f64 {
        1e-6
    }
    pub fn sweep_m() -> Vec<usize> {
        vec![100, 140, 180, 220, 260]
    }
    pub fn sweep_k() -> Vec<usize> {
        vec![2, 5, 10, 20, 50, 100]
    }
    pub fn success_threshold() -> f64 {
        2e-3
    }
    pub fn detuning() -> f64 {
        0.02
    }
    pub fn steps() -> usize {
        1000
    }
    pub fn tau_b() -> f64 {
        1.0
    }
    pub fn substeps() -> usize {
        32
    }
    pub fn measurements() -> usize {
        220
    }
    pub fn flips() -> usize {
        30
    }
    pub fn trials() -> usize {
        200
    }
}

impl ExperimentConfig {
    /// Square-pulse reproduction: `M = 220`, `K = 30`.
    pub fn square_pulse_run() -> Self {
        Self::default()
    }

    /// Random-drive reproduction: `M = 200`, `K = 20`.
    pub fn random_drive_run() -> Self {
        Self {
            protocol: ProtocolSpec::random(),
            measurements: 200,
            flips: 20,
            ..Self::default()
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_step(self.t0, self.tau_b, self.steps, self.substeps)
    }

    /// Checks every invariant; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        if self.steps == 0 {
            return bad("N", "must be at least 1".into());
        }
        if !(self.tau_b > 0.0) || !self.tau_b.is_finite() {
            return bad("tau_b", format!("must be positive, got {}", self.tau_b));
        }
        if self.substeps == 0 {
            return bad("substeps", "must be at least 1".into());
        }
        if !self.detuning.is_finite() {
            return bad("delta", "must be finite".into());
        }
        if !self.t0.is_finite() {
            return bad("t0", "must be finite".into());
        }
        if self.measurements == 0 {
            return bad("M", "must be at least 1".into());
        }
        if self.flips > self.steps - 1 {
            return bad(
                "K",
                format!("K exceeds N-1 ({} > {})", self.flips, self.steps - 1),
            );
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if !(self.noise.strength >= 0.0) || !self.noise.strength.is_finite() {
            return bad("noise.strength", "must be non-negative".into());
        }
        let r = &self.recovery;
        if r.max_support == Some(0) {
            return bad("recovery.max_support", "must be positive".into());
        }
        if !(r.energy_fraction > 0.0 && r.energy_fraction < 1.0) {
            return bad("recovery.energy_fraction", "must be in (0, 1)".into());
        }
        if r.tolerance.is_some_and(|t| !(t >= 0.0)) {
            return bad("recovery.tolerance", "must be non-negative".into());
        }
        if !(r.relative_tolerance >= 0.0) {
            return bad("recovery.relative_tolerance", "must be non-negative".into());
        }
        if self.sweep.m_values.is_empty() || self.sweep.m_values.contains(&0) {
            return bad(
                "sweep.M_values",
                "must be a non-empty list of positive counts".into(),
            );
        }
        if self.sweep.k_values.is_empty() {
            return bad("sweep.K_values", "must be non-empty".into());
        }
        if let Some(&k) = self.sweep.k_values.iter().find(|&&k| k > self.steps - 1) {
            return bad(
                "sweep.K_values",
                format!("K exceeds N-1 ({k} > {})", self.steps - 1),
            );
        }
        if !(self.sweep.threshold > 0.0) {
            return bad("sweep.threshold", "must be positive".into());
        }
        match &self.protocol {
            ProtocolSpec::Square {
                amplitude,
                period,
                duty,
                offset,
            } => {
                if !amplitude.is_finite() || !offset.is_finite() {
                    return bad("protocol", "amplitude and offset must be finite".into());
                }
                if period.is_some_and(|p| !(p > 0.0)) {
                    return bad("protocol.period", "must be positive".into());
                }
                if !(*duty > 0.0 && *duty <= 1.0) {
                    return bad("protocol.duty", "must be in (0, 1]".into());
                }
            }
            ProtocolSpec::Random {
                harmonics,
                max_index,
                rms,
                ..
            } => {
                if *harmonics == 0 || *harmonics > *max_index as usize {
                    return bad("protocol.harmonics", format!("must be in 1..={max_index}"));
                }
                if !rms.is_finite() {
                    return bad("protocol.rms", "must be finite".into());
                }
            }
            ProtocolSpec::Tabulated { .. } => {}
        }
        Ok(())
    }
}

/// Expected l2 norm of the drive-noise contribution to each measurement
/// channel. Noise `strength * xi_n` held over step `n` adds
/// `strength * xi_n * w_n` to `beta_n`, `w_n = integral over step n of
/// exp(-i detuning s) ds`; with `E[xi^2] = 1/3` and `+-1` matrix entries each
/// of the `M` rows carries variance `strength^2 / 3 * sum_n (Re w_n)^2` in the
/// real channel (likewise imaginary).
pub fn noise_tolerance(
    grid: &TimeGrid,
    detuning: f64,
    strength: f64,
    rows: usize,
) -> ChannelTolerance {
    let (mut re2, mut im2) = (0.0, 0.0);
    for n in 0..grid.steps() {
        let w = exp_integral(detuning, grid.time(n), grid.time(n + 1));
        re2 += w.re * w.re;
        im2 += w.im * w.im;
    }
    let var = strength * strength / 3.0 * rows as f64;
    [(var * re2).sqrt(), (var * im2).sqrt()]
}

/// Stopping rule of one recovery, resolved from [`RecoverySettings`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRecovery {
    pub config: RecoveryConfig,
    pub tolerance: ChannelTolerance,
    /// Sparsity estimate of the noiseless increments.
    pub sparsity_estimate: usize,
}

/// Fills unset recovery settings: the support cap from the sparsity of
/// `clean_beta`, the residual target from the noise level seen by `rows`
/// measurements.
pub fn resolve_recovery(
    cfg: &ExperimentConfig,
    rows: usize,
    clean_beta: &ComplexSeries,
    basis: &dyn SparsifyingBasis,
) -> Result<ResolvedRecovery> {
    let settings = &cfg.recovery;
    let sparsity = sparsity_estimate(clean_beta, basis, settings.energy_fraction)?;
    let config = RecoveryConfig {
        max_support: settings
            .max_support
            .unwrap_or(sparsity + settings.sparsity_margin)
            .max(1),
        tolerance: settings.tolerance.unwrap_or(0.0),
        relative_tolerance: settings.relative_tolerance,
        normalize_columns: settings.normalize_columns,
    };
    let tolerance = if settings.tolerance.is_none() && cfg.noise.enabled {
        noise_tolerance(clean_beta.grid(), cfg.detuning, cfg.noise.strength, rows)
    } else {
        [0.0, 0.0]
    };
    Ok(ResolvedRecovery {
        config,
        tolerance,
        sparsity_estimate: sparsity,
    })
}

/// Everything one recovery run produced.
#[derive(Clone, Debug)]
pub struct RecoveryOutcome {
    pub protocol: DrivingProtocol,
    /// Drive samples `(t_n, f(t_n))` at grid points, noise included.
    pub drive: Vec<(f64, f64)>,
    /// Increments actually sensed (noise included when enabled).
    pub beta: ComplexSeries,
    /// Directly sampled amplitude, `prefix_sum(beta)`.
    pub alpha: ComplexSeries,
    /// Noiseless amplitude of the same drive.
    pub alpha_clean: ComplexSeries,
    pub matrix: SensingMatrix,
    pub measurements: MeasurementVector,
    pub recovered: RecoveryResult,
    /// Errors against the sensed increments and amplitude.
    pub mse: MseReport,
    /// Errors against the noiseless increments and amplitude.
    pub mse_clean: MseReport,
    pub resolved: ResolvedRecovery,
}

impl RecoveryOutcome {
    /// Worst-channel `mse(alpha_clean, alpha') / max |alpha_clean|^2`.
    pub fn relative_alpha_mse(&self) -> f64 {
        let peak = self
            .alpha_clean
            .values()
            .iter()
            .map(|z| z.norm_sqr())
            .fold(0.0, f64::max);
        if peak == 0.0 {
            return self.mse_clean.alpha_max();
        }
        self.mse_clean.alpha_max() / peak
    }
}

/// Seed streams of one run.
#[derive(Clone, Debug)]
pub struct RunSeeds {
    pub drive: SeedStream,
    pub noise: SeedStream,
    pub matrix: SeedStream,
}

/// Fingerprints of [`RunSeeds`], for manifests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub drive: u64,
    pub noise: u64,
    pub matrix: u64,
}

impl RunSeeds {
    pub fn new(root: &SeedStream) -> Self {
        Self {
            drive: root.child("drive"),
            noise: root.child("noise"),
            matrix: root.child("matrix"),
        }
    }

    /// Streams of a single run under master seed `master`.
    pub fn master(master: u64) -> Self {
        Self::new(&SeedStream::new(master))
    }

    pub fn record(&self) -> SeedRecord {
        SeedRecord {
            drive: self.drive.fingerprint(),
            noise: self.noise.fingerprint(),
            matrix: self.matrix.fingerprint(),
        }
    }
}

/// The drive and its increments, with and without noise.
#[derive(Clone, Debug)]
pub struct SimulatedSignal {
    pub protocol: DrivingProtocol,
    /// `(t_n, f(t_n))` without noise.
    pub drive_clean: Vec<(f64, f64)>,
    /// `(t_n, f_xi(t_n))`; equal to `drive_clean` without noise.
    pub drive: Vec<(f64, f64)>,
    /// Increments the cavity actually accumulates.
    pub beta: ComplexSeries,
    pub beta_clean: ComplexSeries,
    pub alpha: ComplexSeries,
    pub alpha_clean: ComplexSeries,
}

pub fn simulate_signal(cfg: &ExperimentConfig, seeds: &RunSeeds) -> Result<SimulatedSignal> {
    let grid = cfg.grid().map_err(|e| e.in_stage("grid"))?;
    let protocol = cfg
        .protocol
        .build(&grid, &seeds.drive)
        .map_err(|e| e.in_stage("protocol"))?;
    let signal = |spec: Option<&NoiseSpec>| -> Result<(Vec<(f64, f64)>, ComplexSeries)> {
        let cavity = DrivenCavity::new(protocol.clone(), cfg.detuning, grid, spec)?;
        Ok((cavity.sample_drive()?, cavity.discretize_beta()?))
    };
    let (drive_clean, beta_clean) = signal(None).map_err(|e| e.in_stage("signal"))?;
    let (drive, beta) = if cfg.noise.enabled {
        let spec = NoiseSpec::new(cfg.noise.strength, seeds.noise.fingerprint());
        signal(Some(&spec)).map_err(|e| e.in_stage("signal"))?
    } else {
        (drive_clean.clone(), beta_clean.clone())
    };
    Ok(SimulatedSignal {
        alpha: accumulate_alpha(&beta)?,
        alpha_clean: accumulate_alpha(&beta_clean)?,
        protocol,
        drive_clean,
        drive,
        beta,
        beta_clean,
    })
}

pub fn run_recovery_experiment(cfg: &ExperimentConfig) -> Result<RecoveryOutcome> {
    cfg.validate()?;
    let basis = DctBasis::new(cfg.steps);
    run_trial(
        cfg,
        cfg.measurements,
        cfg.flips,
        &RunSeeds::master(cfg.seed),
        &basis,
    )
}

fn run_trial(
    cfg: &ExperimentConfig,
    rows: usize,
    flips: usize,
    seeds: &RunSeeds,
    basis: &dyn SparsifyingBasis,
) -> Result<RecoveryOutcome> {
    let grid = cfg.grid()?;
    let SimulatedSignal {
        protocol,
        drive,
        beta,
        beta_clean,
        alpha,
        alpha_clean,
        ..
    } = simulate_signal(cfg, seeds)?;

    let matrix = SensingMatrix::random(&seeds.matrix, rows, flips, cfg.steps)
        .map_err(|e| e.in_stage("sensing"))?;
    let measurements = matrix.measure(&beta).map_err(|e| e.in_stage("sensing"))?;

    let resolved =
        resolve_recovery(cfg, rows, &beta_clean, basis).map_err(|e| e.in_stage("recovery"))?;
    let effective = basis.effective_matrix(&matrix);
    let recovered = recover_with_effective(
        &effective,
        &measurements,
        basis,
        &grid,
        &resolved.config,
        Some(resolved.tolerance),
    )
    .map_err(|e| e.in_stage("recovery"))?;
    let mse = recovered.errors_against(&beta)?;
    let mse_clean = recovered.errors_against(&beta_clean)?;
    Ok(RecoveryOutcome {
        protocol,
        drive,
        beta,
        alpha,
        alpha_clean,
        matrix,
        measurements,
        recovered,
        mse,
        mse_clean,
        resolved,
    })
}

/// The `N`-measurement reference: every `alpha_n` sampled directly.
pub fn nyquist_baseline(cfg: &ExperimentConfig) -> Result<ComplexSeries> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let seeds = RunSeeds::master(cfg.seed);
    let protocol = cfg.protocol.build(&grid, &seeds.drive)?;
    let noise = cfg
        .noise
        .enabled
        .then(|| NoiseSpec::new(cfg.noise.strength, seeds.noise.fingerprint()));
    let cavity = DrivenCavity::new(protocol, cfg.detuning, grid, noise.as_ref())?;
    accumulate_alpha(&cavity.discretize_beta()?)
}

/// Measurement cost of direct sampling relative to compressed sensing.
pub fn compression_ratio(steps: usize, measurements: usize) -> f64 {
    steps as f64 / measurements as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub probability: f64,
    /// Wilson 95% interval for the success probability.
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_mse: f64,
    pub max_mse: f64,
    /// Fingerprint of the cell's seed stream.
    pub seed_fingerprint: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub master_seed: u64,
    pub threshold: f64,
    pub noise: bool,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, m: usize, k: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.m == m && c.k == k)
    }

    /// `M,K,trials,successes,probability,mean_mse`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        io::write_csv(
            path,
            &["M", "K", "trials", "successes", "probability", "mean_mse"],
            |w| {
                for c in &self.cells {
                    w.serialize((c.m, c.k, c.trials, c.successes, c.probability, c.mean_mse))?;
                }
                Ok(())
            },
        )
    }
}

/// Seed stream of one sweep trial.
pub fn sweep_trial_stream(master: u64, m: usize, k: usize, trial: usize) -> SeedStream {
    SeedStream::new(master)
        .child("sweep")
        .index(m as u64)
        .index(k as u64)
        .index(trial as u64)
}

/// Runs `cfg.trials` independent trials for every `(M, K)` pair. Trials draw a
/// fresh drive (for random protocols), noise realization and sensing matrix.
pub fn success_sweep(
    cfg: &ExperimentConfig,
    m_values: &[usize],
    k_values: &[usize],
) -> Result<SweepReport> {
    cfg.validate()?;
    if m_values.is_empty() || k_values.is_empty() {
        return Err(Error::arg("sweep needs non-empty M and K lists"));
    }
    if let Some(&m) = m_values.iter().find(|&&m| m == 0) {
        return Err(Error::arg(format!(
            "M = {m} is not a valid measurement count"
        )));
    }
    let basis = DctBasis::new(cfg.steps);
    let threshold = cfg.sweep.threshold;
    let mut cells = Vec::with_capacity(m_values.len() * k_values.len());
    for &m in m_values {
        for &k in k_values {
            let errors: Vec<f64> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let seeds = RunSeeds::new(&sweep_trial_stream(cfg.seed, m, k, t));
                    run_trial(cfg, m, k, &seeds, &basis).map(|o| o.mse.beta_sum())
                })
                .collect::<Result<_>>()?;
            let successes = errors.iter().filter(|&&e| e < threshold).count();
            let (ci_low, ci_high) = wilson_interval(successes, errors.len());
            cells.push(SweepCell {
                m,
                k,
                trials: errors.len(),
                successes,
                probability: successes as f64 / errors.len() as f64,
                ci_low,
                ci_high,
                mean_mse: errors.iter().sum::<f64>() / errors.len() as f64,
                max_mse: errors.iter().copied().fold(0.0, f64::max),
                seed_fingerprint: SeedStream::new(cfg.seed)
                    .child("sweep")
                    .index(m as u64)
                    .index(k as u64)
                    .fingerprint(),
            });
        }
    }
    Ok(SweepReport {
        master_seed: cfg.seed,
        threshold,
        noise: cfg.noise.enabled,
        cells,
    })
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(protocol: ProtocolSpec) -> ExperimentConfig {
        ExperimentConfig {
            protocol,
            steps: 200,
            substeps: 8,
            measurements: 80,
            flips: 10,
            trials: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn zero_drive_gives_zero_everything() {
        let mut cfg = small(ProtocolSpec::Square {
            amplitude: 0.0,
            period: None,
            duty: 0.2,
            offset: 0.0,
        });
        cfg.noise.enabled = false;
        let out = run_recovery_experiment(&cfg).unwrap();
        assert!(out.alpha.values().iter().all(|z| z.norm() == 0.0));
        assert!(out.recovered.alpha.values().iter().all(|z| z.norm() == 0.0));
        assert_eq!(out.mse.alpha_max(), 0.0);
        assert!(nyquist_baseline(&cfg)
            .unwrap()
            .values()
            .iter()
            .all(|z| z.norm() == 0.0));
    }

    #[test]
    fn baseline_equals_accumulated_increments() {
        let cfg = small(ProtocolSpec::random());
        let out = run_recovery_experiment(&cfg).unwrap();
        assert_eq!(nyquist_baseline(&cfg).unwrap(), out.alpha);
    }

    #[test]
    fn compression_ratio_of_square_run() {
        assert!((compression_ratio(1000, 220) - 4.545454).abs() < 1e-6);
        assert_eq!(format!("{:.2}", compression_ratio(1000, 220)), "4.55");
    }

    #[test]
    fn reproducible() {
        let cfg = small(ProtocolSpec::random());
        let a = run_recovery_experiment(&cfg).unwrap();
        let b = run_recovery_experiment(&cfg).unwrap();
        assert_eq!(a.recovered.beta, b.recovered.beta);
        assert_eq!(a.mse, b.mse);
        let s1 = success_sweep(&cfg, &[60], &[5]).unwrap();
        let s2 = success_sweep(&cfg, &[60], &[5]).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn full_rank_flip_design_recovers_exactly() {
        use crate::recovery::recover_beta;
        use crate::sensing::FlipSchedule;
        let n = 120;
        let grid = TimeGrid::with_step(0.0, 1.0, n, 8).unwrap();
        let drive = ProtocolSpec::random()
            .build(&grid, &SeedStream::new(4))
            .unwrap();
        let beta = DrivenCavity::new(drive, 0.02, grid, None)
            .unwrap()
            .discretize_beta()
            .unwrap();
        // every distinct single-flip row plus the flip-free row
        let mut schedules = vec![FlipSchedule::new(0, n, vec![]).unwrap()];
        schedules.extend((1..n).map(|k| FlipSchedule::new(k, n, vec![k]).unwrap()));
        let a = SensingMatrix::from_schedules(schedules).unwrap();
        let y = a.measure(&beta).unwrap();
        let cfg = RecoveryConfig {
            max_support: n,
            tolerance: 0.0,
            relative_tolerance: 1e-12,
            normalize_columns: true,
        };
        let out = recover_beta(&a, &y, &DctBasis::new(n), &grid, &cfg, None).unwrap();
        let err = out.errors_against(&beta).unwrap();
        assert!(err.beta_sum() < 1e-20, "{err:?}");
    }

    #[test]
    fn random_single_flip_rows_repeat() {
        // M = N independent single-flip schedules leave a large null space
        let a = SensingMatrix::random(&SeedStream::new(9), 200, 1, 200).unwrap();
        let mut rows: Vec<_> = (0..200).map(|m| a.row(m).to_vec()).collect();
        rows.sort();
        rows.dedup();
        assert!(rows.len() < 150, "{}", rows.len());
    }

    #[test]
    fn validation_names_keys() {
        let cfg = ExperimentConfig {
            flips: 2000,
            ..ExperimentConfig::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("K exceeds N-1"), "{msg}");
        let cfg = ExperimentConfig {
            trials: 0,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("trials"));
    }

    #[test]
    fn stage_errors_are_labelled() {
        let cfg = ExperimentConfig {
            protocol: ProtocolSpec::Tabulated {
                path: PathBuf::from("/definitely/not/here.csv"),
            },
            ..small(ProtocolSpec::square())
        };
        let msg = run_recovery_experiment(&cfg).unwrap_err().to_string();
        assert!(msg.starts_with("protocol stage failed"), "{msg}");
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(200, 200);
        assert!(lo > 0.98 && hi == 1.0);
        let (lo, hi) = wilson_interval(0, 10);
        assert!(lo == 0.0 && hi < 0.31);
    }

    #[test]
    fn noise_tolerance_matches_monte_carlo() {
        // empirical noise norm of A * (noise-only beta) over many draws
        let grid = TimeGrid::with_step(0.0, 1.0, 300, 4).unwrap();
        let rows = 40;
        let tol = noise_tolerance(&grid, 0.02, 0.05, rows);
        let zero = DrivingProtocol::square_pulse(0.0, 10.0, 0.5, 0.0).unwrap();
        let mut acc = [0.0, 0.0];
        let draws = 200;
        for d in 0..draws {
            let noise = NoiseSpec::new(0.05, d);
            let cav = DrivenCavity::new(zero.clone(), 0.02, grid, Some(&noise)).unwrap();
            let beta = cav.discretize_beta().unwrap();
            let a = SensingMatrix::random(&SeedStream::new(d + 1000), rows, 7, 300).unwrap();
            let y = a.measure(&beta).unwrap();
            acc[0] += y.re().iter().map(|v| v * v).sum::<f64>();
            acc[1] += y.im().iter().map(|v| v * v).sum::<f64>();
        }
        for ch in 0..2 {
            let rms = (acc[ch] / draws as f64).sqrt();
            assert!(
                (rms / tol[ch] - 1.0).abs() < 0.05,
                "channel {ch}: {rms} vs {}",
                tol[ch]
            );
        }
    }
}
