//! Drive protocols and the coherent amplitude they build up in the cavity.
//!
//! Units: the cavity frequency is 1, so times are in inverse cavity
//! frequencies and drive amplitudes and detunings are in cavity frequencies.
//!
//! The coherent amplitude accumulated between `t1` and `t2` is
//! `alpha(t2, t1) = integral_{t1}^{t2} f(s) exp(-i * detuning * s) ds`.
//! It is additive over adjacent intervals, which is what lets the per-step
//! increments `beta_n = alpha(t_n, t_{n-1})` stand in for the whole trajectory.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::seed::SeedStream;

/// Uniform time grid: `steps` intervals of width `tau_b` starting at `t0`,
/// each split into `substeps` quadrature cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    steps: usize,
    substeps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, steps: usize, substeps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::arg("grid needs at least one step"));
        }
        if substeps == 0 {
            return Err(Error::arg("grid needs at least one quadrature substep"));
        }
        if !(t0.is_finite() && t_end.is_finite()) || t_end <= t0 {
            return Err(Error::arg(format!(
                "grid window [{t0}, {t_end}] must be finite with positive length"
            )));
        }
        Ok(Self {
            t0,
            t_end,
            steps,
            substeps,
        })
    }

    /// Grid starting at `t0` with `steps` intervals of width `tau_b`.
    pub fn with_step(t0: f64, tau_b: f64, steps: usize, substeps: usize) -> Result<Self> {
        if !(tau_b > 0.0) {
            return Err(Error::arg(format!("tau_b must be positive, got {tau_b}")));
        }
        Self::new(t0, t0 + tau_b * steps as f64, steps, substeps)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn tau_b(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    /// Time of grid point `n` (0 ..= steps).
    pub fn time(&self, n: usize) -> f64 {
        self.node_time(n * self.substeps)
    }

    /// Number of quadrature nodes minus one.
    pub fn node_count(&self) -> usize {
        self.steps * self.substeps
    }

    /// Time of quadrature node `i` (0 ..= node_count()).
    pub fn node_time(&self, i: usize) -> f64 {
        if i == self.node_count() {
            return self.t_end;
        }
        self.t0 + (self.t_end - self.t0) * (i as f64 / self.node_count() as f64)
    }

    /// Maps a time onto its quadrature node, rejecting off-grid times.
    pub fn node_of(&self, t: f64) -> Result<usize> {
        let x = (t - self.t0) / (self.t_end - self.t0) * self.node_count() as f64;
        let i = x.round();
        if !((x - i).abs() <= 1e-9 * x.abs().max(1.0)) {
            return Err(Error::arg(format!(
                "time {t} is not on a quadrature substep boundary"
            )));
        }
        if i < 0.0 || i > self.node_count() as f64 {
            return Err(Error::arg(format!(
                "time {t} outside grid window [{}, {}]",
                self.t0, self.t_end
            )));
        }
        Ok(i as usize)
    }

    /// Grid step (0-based) containing time `t`; the right end belongs to the last step.
    pub fn step_of(&self, t: f64) -> usize {
        let x = (t - self.t0) / self.tau_b();
        (x.floor().max(0.0) as usize).min(self.steps - 1)
    }
}

/// Classical drive amplitude `f(t)`; always real-valued.
#[derive(Clone, Debug, PartialEq)]
pub enum DrivingProtocol {
    /// `f0` during the first `duty * period` of every period, zero otherwise.
    SquarePulse {
        amplitude: f64,
        period: f64,
        duty: f64,
        offset: f64,
    },
    RandomSmooth(RandomSmooth),
    Tabulated(Tabulated),
}

/// Band-limited random drive:
/// `rms * sqrt(2/H) * sum_h cos(2 pi m_h (t - t0) / (t_end - t0) + phase_h)`,
/// with distinct integer harmonics `m_h` drawn from `1 ..= max_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomSmooth {
    seed: u64,
    rms: f64,
    window: (f64, f64),
    components: Vec<(u32, f64)>,
}

impl RandomSmooth {
    pub fn new(
        seed: u64,
        harmonics: usize,
        max_index: u32,
        rms: f64,
        window: (f64, f64),
    ) -> Result<Self> {
        if harmonics == 0 || harmonics > max_index as usize {
            return Err(Error::arg(format!(
                "harmonic count {harmonics} must be in 1..={max_index}"
            )));
        }
        if !(window.1 > window.0) {
            return Err(Error::arg("random drive window must have positive length"));
        }
        if !rms.is_finite() {
            return Err(Error::arg("random drive rms must be finite"));
        }
        let mut rng = SeedStream::new(seed).child("random-smooth").rng();
        let picks = index::sample(&mut rng, max_index as usize, harmonics);
        let mut components: Vec<(u32, f64)> =
            picks.into_iter().map(|k| (k as u32 + 1, 0.0)).collect();
        for c in &mut components {
            c.1 = rng.random_range(0.0..2.0 * PI);
        }
        Ok(Self {
            seed,
            rms,
            window,
            components,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `(harmonic index, phase)` pairs in draw order.
    pub fn components(&self) -> &[(u32, f64)] {
        &self.components
    }

    fn eval(&self, t: f64) -> f64 {
        let (a, b) = self.window;
        let x = 2.0 * PI * (t - a) / (b - a);
        let scale = self.rms * (2.0 / self.components.len() as f64).sqrt();
        scale
            * self
                .components
                .iter()
                .map(|&(m, phase)| (m as f64 * x + phase).cos())
                .sum::<f64>()
    }
}

/// Uniformly spaced samples, linearly interpolated.
#[derive(Clone, Debug, PartialEq)]
pub struct Tabulated {
    start: f64,
    spacing: f64,
    values: Vec<f64>,
}

impl Tabulated {
    pub fn new(start: f64, spacing: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::arg("tabulated drive needs at least two samples"));
        }
        if !(spacing > 0.0) || !start.is_finite() {
            return Err(Error::arg(
                "tabulated drive needs a positive sample spacing",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("tabulated drive values must be finite"));
        }
        Ok(Self {
            start,
            spacing,
            values,
        })
    }

    /// Reads a `t,f` CSV with a header row and uniformly spaced times.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(path, e.to_string()))?
            .clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "f" {
            return Err(Error::parse(path, "expected header `t,f`"));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in reader.deserialize::<(f64, f64)>().enumerate() {
            let (t, f) = rec.map_err(|e| Error::parse(path, format!("row {}: {e}", line + 1)))?;
            times.push(t);
            values.push(f);
        }
        if times.len() < 2 {
            return Err(Error::parse(path, "need at least two samples"));
        }
        let spacing = times[1] - times[0];
        for (k, w) in times.windows(2).enumerate() {
            let d = w[1] - w[0];
            if !(spacing > 0.0) || (d - spacing).abs() > 1e-9 * spacing.abs().max(1.0) {
                return Err(Error::parse(
                    path,
                    format!("times must be uniformly increasing (row {})", k + 2),
                ));
            }
        }
        Self::new(times[0], spacing, values).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.start + self.spacing * (self.values.len() - 1) as f64
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn eval(&self, t: f64) -> Result<f64> {
        let end = self.end();
        let slack = 1e-9 * self.spacing;
        if !(t >= self.start - slack && t <= end + slack) {
            return Err(Error::Domain {
                t,
                start: self.start,
                end,
            });
        }
        let x = ((t - self.start) / self.spacing).clamp(0.0, (self.values.len() - 1) as f64);
        let k = (x.floor() as usize).min(self.values.len() - 2);
        let w = x - k as f64;
        Ok(self.values[k] * (1.0 - w) + self.values[k + 1] * w)
    }
}

impl DrivingProtocol {
    pub fn square_pulse(amplitude: f64, period: f64, duty: f64, offset: f64) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::arg(format!(
                "pulse period must be positive, got {period}"
            )));
        }
        if !(duty > 0.0 && duty <= 1.0) {
            return Err(Error::arg(format!(
                "duty fraction must be in (0, 1], got {duty}"
            )));
        }
        if !amplitude.is_finite() || !offset.is_finite() {
            return Err(Error::arg("pulse amplitude and offset must be finite"));
        }
        Ok(DrivingProtocol::SquarePulse {
            amplitude,
            period,
            duty,
            offset,
        })
    }

    /// `f(t)`; right-continuous at square-pulse edges.
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            DrivingProtocol::SquarePulse { amplitude, .. } => {
                Ok(if self.pulse_on(t) { *amplitude } else { 0.0 })
            }
            DrivingProtocol::RandomSmooth(r) => Ok(r.eval(t)),
            DrivingProtocol::Tabulated(tab) => tab.eval(t),
        }
    }

    fn pulse_on(&self, t: f64) -> bool {
        let DrivingProtocol::SquarePulse {
            period,
            duty,
            offset,
            ..
        } = self
        else {
            return false;
        };
        let on = duty * period;
        (t - offset).rem_euclid(*period) < on
    }

    /// Jump discontinuities strictly inside `(a, b)`, ascending.
    fn jumps_in(&self, a: f64, b: f64) -> Vec<f64> {
        let DrivingProtocol::SquarePulse {
            period,
            duty,
            offset,
            ..
        } = self
        else {
            return Vec::new();
        };
        if *duty >= 1.0 {
            return Vec::new();
        }
        let on = duty * period;
        let mut out = Vec::new();
        let first = ((a - offset) / period).floor() as i64;
        let last = ((b - offset) / period).ceil() as i64;
        for k in first..=last {
            let start = offset + k as f64 * period;
            for edge in [start, start + on] {
                if edge > a && edge < b {
                    out.push(edge);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// `(start, end)` on-windows of a square pulse that intersect `[a, b]`, clipped.
    fn on_windows(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let DrivingProtocol::SquarePulse {
            period,
            duty,
            offset,
            ..
        } = self
        else {
            return Vec::new();
        };
        let on = duty * period;
        let first = ((a - offset) / period).floor() as i64;
        let last = ((b - offset) / period).ceil() as i64;
        (first..=last)
            .filter_map(|k| {
                let s = (offset + k as f64 * period).max(a);
                let e = (offset + k as f64 * period + on).min(b);
                (e > s).then_some((s, e))
            })
            .collect()
    }
}

/// Additive white drive noise `strength * xi` with `xi ~ U[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub enabled: bool,
    pub strength: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub const DEFAULT_STRENGTH: f64 = 0.05;

    pub fn new(strength: f64, seed: u64) -> Self {
        Self {
            enabled: true,
            strength,
            seed,
        }
    }

    pub fn disabled() -> Self {
        Self {
            enabled: false,
            strength: Self::DEFAULT_STRENGTH,
            seed: 0,
        }
    }

    /// One `xi` per grid step, held across that step's quadrature cells.
    pub fn realize(&self, grid: &TimeGrid) -> Option<NoiseRealization> {
        if !self.enabled {
            return None;
        }
        let mut rng = SeedStream::new(self.seed).child("drive-noise").rng();
        let xi = (0..grid.steps())
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        Some(NoiseRealization {
            strength: self.strength,
            xi,
        })
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::disabled()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRealization {
    strength: f64,
    xi: Vec<f64>,
}

impl NoiseRealization {
    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// Additive drive offset during grid step `step` (0-based).
    pub fn offset(&self, step: usize) -> f64 {
        self.strength * self.xi[step]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Beta,
    Alpha,
}

/// One complex value per grid step; entry `n - 1` belongs to grid time `t_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSeries {
    kind: SeriesKind,
    grid: TimeGrid,
    values: Vec<Complex64>,
}

impl ComplexSeries {
    pub fn new(kind: SeriesKind, grid: TimeGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.steps() {
            return Err(Error::Dimension(format!(
                "series has {} values but grid has {} steps",
                values.len(),
                grid.steps()
            )));
        }
        Ok(Self { kind, grid, values })
    }

    pub fn zeros(kind: SeriesKind, grid: TimeGrid) -> Self {
        Self {
            kind,
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.steps()],
        }
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.im).collect()
    }

    /// Average photon number `|alpha_n|^2` along an alpha series.
    pub fn photon_numbers(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Writes `n,t,re,im` rows, `n` counting from 1.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        io::write_csv(path, &["n", "t", "re", "im"], |w| {
            for (k, z) in self.values.iter().enumerate() {
                let n = k + 1;
                w.serialize((n, self.grid.time(n), z.re, z.im))?;
            }
            Ok(())
        })
    }
}

/// Prefix sum of a beta series, left to right.
pub fn accumulate_alpha(beta: &ComplexSeries) -> Result<ComplexSeries> {
    if beta.kind != SeriesKind::Beta {
        return Err(Error::arg("accumulate_alpha expects a beta series"));
    }
    Ok(ComplexSeries {
        kind: SeriesKind::Alpha,
        grid: beta.grid,
        values: prefix_sum(&beta.values),
    })
}

pub(crate) fn prefix_sum(values: &[Complex64]) -> Vec<Complex64> {
    values
        .iter()
        .scan(Complex64::new(0.0, 0.0), |acc, b| {
            *acc += b;
            Some(*acc)
        })
        .collect()
}

/// A protocol placed on a grid at a given detuning, with an optional noise
/// realization drawn once for the whole window.
#[derive(Clone, Debug)]
pub struct DrivenCavity {
    protocol: DrivingProtocol,
    detuning: f64,
    grid: TimeGrid,
    noise: Option<NoiseRealization>,
}

impl DrivenCavity {
    pub fn new(
        protocol: DrivingProtocol,
        detuning: f64,
        grid: TimeGrid,
        noise: Option<&NoiseSpec>,
    ) -> Result<Self> {
        if !detuning.is_finite() {
            return Err(Error::arg("detuning must be finite"));
        }
        if let DrivingProtocol::Tabulated(tab) = &protocol {
            let slack = 1e-9 * tab.spacing;
            if tab.start > grid.t0() + slack || tab.end() < grid.t_end() - slack {
                return Err(Error::Domain {
                    t: if tab.start > grid.t0() {
                        grid.t0()
                    } else {
                        grid.t_end()
                    },
                    start: tab.start,
                    end: tab.end(),
                });
            }
        }
        let noise = noise.and_then(|n| n.realize(&grid));
        Ok(Self {
            protocol,
            detuning,
            grid,
            noise,
        })
    }

    pub fn protocol(&self) -> &DrivingProtocol {
        &self.protocol
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn noise(&self) -> Option<&NoiseRealization> {
        self.noise.as_ref()
    }

    /// Drive value including the noise offset of the step containing `t`.
    pub fn eval_drive(&self, t: f64) -> Result<f64> {
        let f = self.protocol.eval(t)?;
        Ok(match &self.noise {
            Some(n) => f + n.offset(self.grid.step_of(t)),
            None => f,
        })
    }

    /// `alpha(t2, t1)`; both times must sit on quadrature nodes.
    pub fn integrate_alpha(&self, t1: f64, t2: f64) -> Result<Complex64> {
        if t2 < t1 {
            return Err(Error::arg(format!(
                "integration bounds reversed: {t2} < {t1}"
            )));
        }
        let i1 = self.grid.node_of(t1)?;
        let i2 = self.grid.node_of(t2)?;
        self.alpha_between_nodes(i1, i2)
    }

    pub(crate) fn alpha_between_nodes(&self, i1: usize, i2: usize) -> Result<Complex64> {
        if self.noise.is_none() && matches!(self.protocol, DrivingProtocol::SquarePulse { .. }) {
            return Ok(self.closed_form_nodes(i1, i2));
        }
        self.trapezoid_nodes(i1, i2)
    }

    /// Composite trapezoid over the shared substep grid, splitting cells at
    /// drive discontinuities.
    pub fn integrate_alpha_trapezoid(&self, t1: f64, t2: f64) -> Result<Complex64> {
        if t2 < t1 {
            return Err(Error::arg(format!(
                "integration bounds reversed: {t2} < {t1}"
            )));
        }
        self.trapezoid_nodes(self.grid.node_of(t1)?, self.grid.node_of(t2)?)
    }

    /// Exact integral for a noiseless square pulse; `None` for other drives.
    pub fn integrate_alpha_closed_form(&self, t1: f64, t2: f64) -> Result<Option<Complex64>> {
        if t2 < t1 {
            return Err(Error::arg(format!(
                "integration bounds reversed: {t2} < {t1}"
            )));
        }
        if self.noise.is_some() || !matches!(self.protocol, DrivingProtocol::SquarePulse { .. }) {
            return Ok(None);
        }
        Ok(Some(self.closed_form_nodes(
            self.grid.node_of(t1)?,
            self.grid.node_of(t2)?,
        )))
    }

    fn trapezoid_nodes(&self, i1: usize, i2: usize) -> Result<Complex64> {
        let q = self.grid.substeps();
        let mut sum = CompensatedSum::default();
        for i in i1..i2 {
            let a = self.grid.node_time(i);
            let b = self.grid.node_time(i + 1);
            let offset = self.noise.as_ref().map_or(0.0, |n| n.offset(i / q));
            if let DrivingProtocol::SquarePulse { .. } = self.protocol {
                let mut left = a;
                for right in self
                    .protocol
                    .jumps_in(a, b)
                    .into_iter()
                    .chain(std::iter::once(b))
                {
                    let f = self.protocol.eval(0.5 * (left + right))? + offset;
                    sum.add((self.phasor(left) + self.phasor(right)) * (0.5 * f * (right - left)));
                    left = right;
                }
            } else {
                let fa = self.protocol.eval(a)? + offset;
                let fb = self.protocol.eval(b)? + offset;
                sum.add((self.phasor(a) * fa + self.phasor(b) * fb) * (0.5 * (b - a)));
            }
        }
        Ok(sum.total())
    }

    fn closed_form_nodes(&self, i1: usize, i2: usize) -> Complex64 {
        let DrivingProtocol::SquarePulse { amplitude, .. } = self.protocol else {
            unreachable!("closed form only exists for square pulses");
        };
        if i1 == i2 {
            return Complex64::new(0.0, 0.0);
        }
        let a = self.grid.node_time(i1);
        let b = self.grid.node_time(i2);
        let mut sum = CompensatedSum::default();
        for (s, e) in self.protocol.on_windows(a, b) {
            sum.add(exp_integral(self.detuning, s, e) * amplitude);
        }
        sum.total()
    }

    fn phasor(&self, t: f64) -> Complex64 {
        Complex64::from_polar(1.0, -self.detuning * t)
    }

    /// `beta_n = alpha(t_n, t_{n-1})` for every grid step.
    pub fn discretize_beta(&self) -> Result<ComplexSeries> {
        let q = self.grid.substeps();
        let values = (0..self.grid.steps())
            .map(|n| self.alpha_between_nodes(n * q, (n + 1) * q))
            .collect::<Result<Vec<_>>>()?;
        ComplexSeries::new(SeriesKind::Beta, self.grid, values)
    }

    /// `alpha(t_n, t0)` for each grid point by direct quadrature from `t0`.
    pub fn direct_alpha(&self) -> Result<ComplexSeries> {
        let q = self.grid.substeps();
        let values = (1..=self.grid.steps())
            .map(|n| self.alpha_between_nodes(0, n * q))
            .collect::<Result<Vec<_>>>()?;
        ComplexSeries::new(SeriesKind::Alpha, self.grid, values)
    }

    /// Drive sampled at grid points `t_0 ..= t_N`, noise included.
    pub fn sample_drive(&self) -> Result<Vec<(f64, f64)>> {
        (0..=self.grid.steps())
            .map(|n| {
                let t = self.grid.time(n);
                self.eval_drive(t).map(|f| (t, f))
            })
            .collect()
    }
}

/// `integral_a^b exp(-i d s) ds`, stable as `d (b - a) -> 0`.
pub(crate) fn exp_integral(detuning: f64, a: f64, b: f64) -> Complex64 {
    let len = b - a;
    let half = 0.5 * detuning * len;
    let sinc = if half.abs() < 1e-8 {
        1.0 - half * half / 6.0
    } else {
        half.sin() / half
    };
    Complex64::from_polar(len * sinc, -detuning * 0.5 * (a + b))
}

/// Neumaier summation, applied to both components.
#[derive(Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: Complex64,
    carry: Complex64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, z: Complex64) {
        self.sum.re = neumaier(self.sum.re, z.re, &mut self.carry.re);
        self.sum.im = neumaier(self.sum.im, z.im, &mut self.carry.im);
    }

    pub(crate) fn total(&self) -> Complex64 {
        self.sum + self.carry
    }
}

fn neumaier(sum: f64, x: f64, carry: &mut f64) -> f64 {
    let t = sum + x;
    if sum.abs() >= x.abs() {
        *carry += (sum - t) + x;
    } else {
        *carry += (x - t) + sum;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
    }

    fn fig2_pulse() -> DrivingProtocol {
        DrivingProtocol::square_pulse(0.1, 200.0, 0.2, 0.0).unwrap()
    }

    #[test]
    fn square_pulse_windows() {
        let p = fig2_pulse();
        assert_eq!(p.eval(10.0).unwrap(), 0.1);
        assert_eq!(p.eval(100.0).unwrap(), 0.0);
        assert_eq!(p.eval(0.0).unwrap(), 0.1);
        assert_eq!(p.eval(40.0).unwrap(), 0.0);
        assert_eq!(p.eval(-190.0).unwrap(), 0.1);
        assert_eq!(p.jumps_in(0.0, 200.0), vec![40.0]);
        assert_eq!(p.jumps_in(30.0, 250.0), vec![40.0, 200.0, 240.0]);
    }

    #[test]
    fn trapezoid_handles_edges_between_nodes() {
        let grid = TimeGrid::with_step(0.0, 1.0, 500, 32).unwrap();
        let p = DrivingProtocol::square_pulse(0.41, 24.482774623507034, 0.4797, -5.4931).unwrap();
        let cav = DrivenCavity::new(p, 0.074, grid, None).unwrap();
        let (t1, t2) = (grid.node_time(1937), grid.node_time(15100));
        let exact = cav.integrate_alpha_closed_form(t1, t2).unwrap().unwrap();
        let trap = cav.integrate_alpha_trapezoid(t1, t2).unwrap();
        assert!((exact - trap).norm() < 1e-6 * exact.norm());
    }

    #[test]
    fn square_pulse_rejects_bad_duty() {
        assert!(DrivingProtocol::square_pulse(0.1, 200.0, 0.0, 0.0).is_err());
        assert!(DrivingProtocol::square_pulse(0.1, 200.0, 1.5, 0.0).is_err());
        assert!(DrivingProtocol::square_pulse(0.1, -1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn noisy_drive_is_reproducible_and_bounded() {
        let grid = TimeGrid::with_step(0.0, 1.0, 100, 4).unwrap();
        let noise = NoiseSpec::new(0.05, 11);
        let a = DrivenCavity::new(fig2_pulse(), 0.02, grid, Some(&noise)).unwrap();
        let b = DrivenCavity::new(fig2_pulse(), 0.02, grid, Some(&noise)).unwrap();
        for t in [0.0, 10.5, 63.25, 99.0, 100.0] {
            let clean = fig2_pulse().eval(t).unwrap();
            let x = a.eval_drive(t).unwrap();
            assert_eq!(x, b.eval_drive(t).unwrap());
            assert!((x - clean).abs() <= 0.05);
        }
        // held constant within a step
        assert_eq!(
            a.eval_drive(60.1).unwrap() - fig2_pulse().eval(60.1).unwrap(),
            a.eval_drive(60.9).unwrap() - fig2_pulse().eval(60.9).unwrap()
        );
    }

    #[test]
    fn random_smooth_is_seed_determined() {
        let a = RandomSmooth::new(3, 5, 8, 0.1, (0.0, 1000.0)).unwrap();
        let b = RandomSmooth::new(3, 5, 8, 0.1, (0.0, 1000.0)).unwrap();
        let c = RandomSmooth::new(4, 5, 8, 0.1, (0.0, 1000.0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.components(), c.components());
        let mut idx: Vec<u32> = a.components().iter().map(|c| c.0).collect();
        idx.sort();
        idx.dedup();
        assert_eq!(idx.len(), 5);
        assert!(idx.iter().all(|&m| (1..=8).contains(&m)));
        // mean square over the window equals rms^2 for distinct harmonics
        let n = 20000;
        let ms: f64 = (0..n)
            .map(|k| a.eval(1000.0 * k as f64 / n as f64).powi(2))
            .sum::<f64>()
            / n as f64;
        assert_relative_eq!(ms, 0.01, max_relative = 1e-9);
    }

    #[test]
    fn tabulated_interpolates_and_rejects_outside() {
        let tab = Tabulated::new(0.0, 2.0, vec![0.0, 1.0, 3.0]).unwrap();
        let p = DrivingProtocol::Tabulated(tab);
        assert_eq!(p.eval(1.0).unwrap(), 0.5);
        assert_eq!(p.eval(3.0).unwrap(), 2.0);
        assert_eq!(p.eval(4.0).unwrap(), 3.0);
        assert!(matches!(p.eval(4.5), Err(Error::Domain { .. })));
        assert!(matches!(p.eval(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn tabulated_must_cover_grid() {
        let tab = Tabulated::new(0.0, 1.0, vec![0.0; 5]).unwrap();
        let grid = TimeGrid::with_step(0.0, 1.0, 10, 2).unwrap();
        assert!(matches!(
            DrivenCavity::new(DrivingProtocol::Tabulated(tab), 0.0, grid, None),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn zero_and_constant_drives() {
        let grid = TimeGrid::with_step(0.0, 0.5, 8, 4).unwrap();
        let zero = DrivingProtocol::Tabulated(Tabulated::new(0.0, 1.0, vec![0.0; 5]).unwrap());
        let cav = DrivenCavity::new(zero, 0.3, grid, None).unwrap();
        assert_eq!(cav.integrate_alpha(0.0, 4.0).unwrap(), c(0.0, 0.0));
        assert!(cav
            .discretize_beta()
            .unwrap()
            .values()
            .iter()
            .all(|z| z.norm() == 0.0));

        let cst = DrivingProtocol::Tabulated(Tabulated::new(0.0, 1.0, vec![0.7; 5]).unwrap());
        let cav = DrivenCavity::new(cst, 0.0, grid, None).unwrap();
        assert_relative_eq!(
            cav.integrate_alpha(0.5, 3.0).unwrap().re,
            0.7 * 2.5,
            max_relative = 1e-14
        );
        assert_eq!(cav.integrate_alpha(0.5, 3.0).unwrap().im, 0.0);
        for b in cav.discretize_beta().unwrap().values() {
            assert_relative_eq!(b.re, 0.35, max_relative = 1e-14);
        }
        // an always-on pulse is constant too
        let on = DrivingProtocol::square_pulse(0.7, 3.0, 1.0, 0.0).unwrap();
        let cav = DrivenCavity::new(on, 0.0, grid, None).unwrap();
        assert_relative_eq!(
            cav.integrate_alpha(0.0, 4.0).unwrap().re,
            2.8,
            max_relative = 1e-14
        );
    }

    #[test]
    fn reversed_or_offgrid_bounds_are_rejected() {
        let grid = TimeGrid::with_step(0.0, 1.0, 10, 4).unwrap();
        let cav = DrivenCavity::new(fig2_pulse(), 0.02, grid, None).unwrap();
        assert!(matches!(
            cav.integrate_alpha(3.0, 2.0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            cav.integrate_alpha(0.0, 0.1),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            cav.integrate_alpha(0.0, 11.0),
            Err(Error::Argument(_))
        ));
        assert!(cav.integrate_alpha(0.25, 2.75).is_ok());
    }

    /// Fine-grid midpoint rule over each constant piece, independent of the
    /// closed form and of the trapezoid path.
    fn fine_oracle(
        f: impl Fn(f64) -> f64,
        detuning: f64,
        a: f64,
        b: f64,
        cells: usize,
    ) -> Complex64 {
        let h = (b - a) / cells as f64;
        (0..cells)
            .map(|k| {
                let s = a + (k as f64 + 0.5) * h;
                Complex64::from_polar(f(s) * h, -detuning * s)
            })
            .sum()
    }

    #[test]
    fn square_pulse_against_fine_oracle() {
        let grid = TimeGrid::with_step(0.0, 1.0, 1000, 32).unwrap();
        let cav = DrivenCavity::new(fig2_pulse(), 0.02, grid, None).unwrap();
        let oracle = fine_oracle(
            |s| if s < 40.0 { 0.1 } else { 0.0 },
            0.02,
            0.0,
            40.0,
            200_000,
        );
        let exact = cav.integrate_alpha(0.0, 40.0).unwrap();
        let trap = cav.integrate_alpha_trapezoid(0.0, 40.0).unwrap();
        assert!(rel(exact, oracle) < 1e-6, "{exact} vs {oracle}");
        assert!(rel(trap, oracle) < 1e-6, "{trap} vs {oracle}");
        // Frozen from the oracle: 0.1 * (1 - e^{-0.8i}) / 0.02i
        assert!(rel(exact, c(3.586780454497614, -1.5164664532641732)) < 1e-12);
    }

    #[test]
    fn jump_inside_a_cell_is_integrated_exactly() {
        // edges at 0.3 and 1.3, not on any node
        let pulse = DrivingProtocol::square_pulse(1.0, 5.0, 0.2, 0.3).unwrap();
        let grid = TimeGrid::with_step(0.0, 1.0, 10, 1).unwrap();
        let cav = DrivenCavity::new(pulse, 0.01, grid, None).unwrap();
        let exact = cav.integrate_alpha(0.0, 10.0).unwrap();
        let trap = cav.integrate_alpha_trapezoid(0.0, 10.0).unwrap();
        assert!(rel(exact, trap) < 1e-5);
    }

    #[test]
    fn accumulate_examples() {
        let grid = TimeGrid::with_step(0.0, 1.0, 3, 1).unwrap();
        let beta = ComplexSeries::new(
            SeriesKind::Beta,
            grid,
            vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)],
        )
        .unwrap();
        let alpha = accumulate_alpha(&beta).unwrap();
        assert_eq!(alpha.values(), &[c(1.0, 0.0), c(1.0, 1.0), c(0.0, 1.0)]);
        assert_eq!(alpha.kind(), SeriesKind::Alpha);
        assert!(accumulate_alpha(&alpha).is_err());
        let z = accumulate_alpha(&ComplexSeries::zeros(SeriesKind::Beta, grid)).unwrap();
        assert!(z.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn series_length_must_match_grid() {
        let grid = TimeGrid::with_step(0.0, 1.0, 3, 1).unwrap();
        assert!(ComplexSeries::new(SeriesKind::Beta, grid, vec![c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 1.0, 0, 1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1, 0).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 1, 1).is_err());
        let g = TimeGrid::with_step(2.0, 0.5, 4, 3).unwrap();
        assert_eq!(g.tau_b(), 0.5);
        assert_eq!(g.time(4), 4.0);
        assert_eq!(g.step_of(2.0), 0);
        assert_eq!(g.step_of(2.5), 1);
        assert_eq!(g.step_of(4.0), 3);
        assert_eq!(g.node_of(2.0 + 0.5 / 3.0).unwrap(), 1);
    }

    #[test]
    fn exp_integral_small_detuning_limit() {
        let z = exp_integral(1e-12, 0.0, 2.0);
        assert_relative_eq!(z.re, 2.0, max_relative = 1e-11);
        let w = exp_integral(0.0, 1.0, 3.0);
        assert_eq!(w, c(2.0, 0.0));
    }
}
