//! Flip-modulated compressed measurements.
//!
//! In one run the cavity is driven from `t0` to `t_N` while `K` detuned atoms
//! cross it at grid instants; each crossing negates the coherent amplitude.
//! The amplitude read out at `t_N` is therefore a signed sum of the increments
//! `beta_n`, with sign `(-1)^(number of flips at or after step n)`. Stacking
//! `M` runs gives a `M x N` matrix of `+-1` entries.

use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::seed::SeedStream;
use crate::signal::{ComplexSeries, DrivenCavity, SeriesKind};

/// Sorted, distinct flip indices in `1 ..= N-1`; flip `k` happens at `t0 + k * tau_b`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipSchedule {
    label: usize,
    steps: usize,
    flips: Vec<usize>,
}

impl FlipSchedule {
    pub fn new(label: usize, steps: usize, flips: Vec<usize>) -> Result<Self> {
        if steps == 0 {
            return Err(Error::arg("schedule needs at least one grid step"));
        }
        if let Some(&bad) = flips.iter().find(|&&k| k == 0 || k >= steps) {
            return Err(Error::arg(format!(
                "flip index {bad} outside 1..={}",
                steps - 1
            )));
        }
        if flips.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("flip indices must be strictly increasing"));
        }
        Ok(Self {
            label,
            steps,
            flips,
        })
    }

    /// Draws `flips` distinct indices uniformly from `1 ..= steps-1`.
    pub fn sample(stream: &SeedStream, label: usize, flips: usize, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::arg("schedule needs at least one grid step"));
        }
        if flips > steps - 1 {
            return Err(Error::arg(format!(
                "K = {flips} exceeds N-1 = {}",
                steps - 1
            )));
        }
        let mut rng = stream.rng();
        let mut picked: Vec<usize> = index::sample(&mut rng, steps - 1, flips)
            .into_iter()
            .map(|k| k + 1)
            .collect();
        picked.sort_unstable();
        Ok(Self {
            label,
            steps,
            flips: picked,
        })
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn flips(&self) -> &[usize] {
        &self.flips
    }

    pub fn len(&self) -> usize {
        self.flips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flips.is_empty()
    }

    /// Constant-sign column ranges `[start, end)` (0-based) with their signs.
    /// Segment signs alternate and the last one is `+1`.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize, i8)> + '_ {
        let k = self.flips.len();
        let bounds = std::iter::once(0)
            .chain(self.flips.iter().copied())
            .chain(std::iter::once(self.steps));
        bounds
            .clone()
            .zip(bounds.skip(1))
            .enumerate()
            .map(move |(j, (s, e))| (s, e, if (k - j) % 2 == 0 { 1 } else { -1 }))
    }

    /// Row of the sensing matrix: entry `n` (1-based) is
    /// `(-1)^(number of flips with index >= n)`.
    pub fn row(&self) -> Vec<i8> {
        let mut row = vec![0i8; self.steps];
        for (s, e, sign) in self.segments() {
            row[s..e].fill(sign);
        }
        row
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensingMatrix {
    cols: usize,
    schedules: Vec<FlipSchedule>,
    entries: Vec<i8>,
}

impl SensingMatrix {
    pub fn from_schedules(schedules: Vec<FlipSchedule>) -> Result<Self> {
        let cols = match schedules.first() {
            Some(s) => s.steps(),
            None => return Err(Error::arg("sensing matrix needs at least one row")),
        };
        if schedules.iter().any(|s| s.steps() != cols) {
            return Err(Error::Dimension("schedules disagree on N".into()));
        }
        let entries = schedules.iter().flat_map(|s| s.row()).collect();
        Ok(Self {
            cols,
            schedules,
            entries,
        })
    }

    /// `rows` independent schedules with `flips` flips each; row `m` draws
    /// from `seed / "flip-schedule" / m`.
    pub fn random(seed: &SeedStream, rows: usize, flips: usize, steps: usize) -> Result<Self> {
        if rows == 0 {
            return Err(Error::arg("M must be at least 1"));
        }
        let base = seed.child("flip-schedule");
        let schedules = (0..rows)
            .map(|m| FlipSchedule::sample(&base.index(m as u64), m, flips, steps))
            .collect::<Result<Vec<_>>>()?;
        Self::from_schedules(schedules)
    }

    pub fn rows(&self) -> usize {
        self.schedules.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn schedules(&self) -> &[FlipSchedule] {
        &self.schedules
    }

    pub fn row(&self, m: usize) -> &[i8] {
        &self.entries[m * self.cols..(m + 1) * self.cols]
    }

    pub fn get(&self, m: usize, n: usize) -> i8 {
        self.entries[m * self.cols + n]
    }

    /// `Lambda = A * beta`.
    pub fn measure(&self, beta: &ComplexSeries) -> Result<MeasurementVector> {
        if beta.kind() != SeriesKind::Beta {
            return Err(Error::arg("measure expects a beta series"));
        }
        if beta.len() != self.cols {
            return Err(Error::Dimension(format!(
                "matrix has {} columns but beta has {} entries",
                self.cols,
                beta.len()
            )));
        }
        let values = (0..self.rows())
            .map(|m| {
                self.row(m)
                    .iter()
                    .zip(beta.values())
                    .map(|(&a, b)| b * a as f64)
                    .sum()
            })
            .collect();
        Ok(MeasurementVector {
            values,
            provenance: Provenance::Matrix,
        })
    }

    /// Writes the `+-1` entries as `matrix` (one CSV line per row, no header)
    /// and the schedules as `schedules` (`m,k1,...,kK` per line).
    pub fn write_csv(&self, matrix: &Path, schedules: &Path) -> Result<()> {
        io::write_atomic(matrix, |w| {
            for m in 0..self.rows() {
                let line: Vec<String> = self.row(m).iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(","))?;
            }
            Ok(())
        })?;
        io::write_atomic(schedules, |w| {
            for s in &self.schedules {
                let mut line = vec![s.label().to_string()];
                line.extend(s.flips().iter().map(|k| k.to_string()));
                writeln!(w, "{}", line.join(","))?;
            }
            Ok(())
        })
    }

    /// Reads a matrix/schedule pair and checks that every row matches its schedule.
    pub fn read_csv(matrix: &Path, schedules: &Path) -> Result<Self> {
        let rows = read_int_rows(matrix)?;
        let sched_rows = read_int_rows(schedules)?;
        if rows.len() != sched_rows.len() {
            return Err(Error::parse(
                schedules,
                format!(
                    "{} schedules for {} matrix rows",
                    sched_rows.len(),
                    rows.len()
                ),
            ));
        }
        let cols = rows.first().map_or(0, |r| r.len());
        let mut parsed = Vec::with_capacity(sched_rows.len());
        for (line, r) in sched_rows.iter().enumerate() {
            let (label, flips) = r
                .split_first()
                .ok_or_else(|| Error::parse(schedules, format!("empty line {}", line + 1)))?;
            let to_usize = |v: i64| {
                usize::try_from(v).map_err(|_| {
                    Error::parse(schedules, format!("negative index on line {}", line + 1))
                })
            };
            let flips = flips
                .iter()
                .map(|&v| to_usize(v))
                .collect::<Result<Vec<_>>>()?;
            parsed.push(
                FlipSchedule::new(to_usize(*label)?, cols, flips)
                    .map_err(|e| Error::parse(schedules, e.to_string()))?,
            );
        }
        let a = Self::from_schedules(parsed).map_err(|e| Error::parse(matrix, e.to_string()))?;
        for (m, r) in rows.iter().enumerate() {
            if r.len() != cols || r.iter().zip(a.row(m)).any(|(&x, &y)| x != y as i64) {
                return Err(Error::parse(
                    matrix,
                    format!("row {} does not match its flip schedule", m + 1),
                ));
            }
        }
        Ok(a)
    }
}

fn read_int_rows(path: &Path) -> Result<Vec<Vec<i64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    reader
        .records()
        .enumerate()
        .map(|(line, rec)| {
            let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
            rec.iter()
                .map(|f| {
                    f.trim().parse::<i64>().map_err(|_| {
                        Error::parse(path, format!("bad integer {f:?} on line {}", line + 1))
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Matrix,
    Simulated,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Matrix => "matrix",
            Provenance::Simulated => "simulated",
        })
    }
}

/// Final amplitudes of `M` runs.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementVector {
    values: Vec<Complex64>,
    provenance: Provenance,
}

impl MeasurementVector {
    pub fn new(values: Vec<Complex64>, provenance: Provenance) -> Self {
        Self { values, provenance }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
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

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let tag = self.provenance.to_string();
        io::write_csv(path, &["m", "re", "im", "provenance"], |w| {
            for (m, z) in self.values.iter().enumerate() {
                w.serialize((m + 1, z.re, z.im, &tag))?;
            }
            Ok(())
        })
    }

    /// Reads the format written by [`MeasurementVector::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Record {
            m: usize,
            re: f64,
            im: f64,
            provenance: Provenance,
        }
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        let mut values = Vec::new();
        let mut provenance = Provenance::Matrix;
        for (i, rec) in reader.deserialize::<Record>().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
            if rec.m != i + 1 {
                return Err(Error::parse(
                    path,
                    format!("expected m = {} on line {}", i + 1, i + 2),
                ));
            }
            if i > 0 && rec.provenance != provenance {
                return Err(Error::parse(path, "mixed provenance tags"));
            }
            provenance = rec.provenance;
            values.push(Complex64::new(rec.re, rec.im));
        }
        Ok(Self { values, provenance })
    }
}

/// Amplitude trace of one simulated run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedRun {
    /// Amplitude just before each flip.
    pub before_flip: Vec<Complex64>,
    /// Amplitude just after each flip.
    pub after_flip: Vec<Complex64>,
    /// Amplitude read out at `t_N`.
    pub final_amplitude: Complex64,
}

/// Evolves the amplitude segment by segment: free evolution adds
/// `alpha(t_{j+1}, t_j)`, each atom negates the running amplitude.
pub fn simulate_run(cavity: &DrivenCavity, schedule: &FlipSchedule) -> Result<SimulatedRun> {
    let grid = cavity.grid();
    if schedule.steps() != grid.steps() {
        return Err(Error::Dimension(format!(
            "schedule is for N = {} but grid has {} steps",
            schedule.steps(),
            grid.steps()
        )));
    }
    let q = grid.substeps();
    let mut amp = Complex64::new(0.0, 0.0);
    let mut last = 0usize;
    let mut before_flip = Vec::with_capacity(schedule.len());
    let mut after_flip = Vec::with_capacity(schedule.len());
    for &k in schedule.flips() {
        amp += cavity.alpha_between_nodes(last * q, k * q)?;
        before_flip.push(amp);
        amp = -amp;
        after_flip.push(amp);
        last = k;
    }
    amp += cavity.alpha_between_nodes(last * q, grid.steps() * q)?;
    Ok(SimulatedRun {
        before_flip,
        after_flip,
        final_amplitude: amp,
    })
}

pub fn simulate_measurement(cavity: &DrivenCavity, schedule: &FlipSchedule) -> Result<Complex64> {
    simulate_run(cavity, schedule).map(|r| r.final_amplitude)
}

/// Runs every schedule of `a` through [`simulate_measurement`].
pub fn simulate_measurements(
    cavity: &DrivenCavity,
    a: &SensingMatrix,
) -> Result<MeasurementVector> {
    let values = a
        .schedules()
        .iter()
        .map(|s| simulate_measurement(cavity, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementVector::new(values, Provenance::Simulated))
}
