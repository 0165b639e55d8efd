use std::path::{Path, PathBuf};

use cavity_cs::experiments::{
    compression_ratio, resolve_recovery, run_recovery_experiment, simulate_signal, success_sweep,
    ExperimentConfig, ResolvedRecovery, RunSeeds, SeedRecord, SweepCell,
};
use cavity_cs::io;
use cavity_cs::recovery::{min_measurements, recover_beta, DctBasis, MseReport, RecoveryResult};
use cavity_cs::sensing::{simulate_measurements, MeasurementVector, SensingMatrix};
use cavity_cs::signal::ComplexSeries;
use log::info;
use serde::Serialize;

use crate::config::{parse_config, validation_message};
use crate::svg::{heat_map, line_figure, Panel, Series};
use crate::{Cli, CliError, Command};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    cfg.validate()
        .map_err(|e| CliError::Config(validation_message(e)))?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    match &cli.command {
        Command::Info => {
            print!("{}", info_text(&cfg)?);
            Ok(())
        }
        Command::Simulate => simulate(&cfg, &out),
        Command::Measure => measure(&cfg, &out),
        Command::Recover { input } => recover(&cfg, input, &out),
        Command::Figure2 => figure2(&cfg, &out),
        Command::Sweep => sweep(&cfg, &out),
    }
}

#[derive(Serialize)]
struct Manifest<'a, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: ExperimentConfig,
    seeds: SeedRecord,
    files: &'a [&'a str],
    results: R,
}

fn write_manifest<R: Serialize>(
    out: &Path,
    command: &'static str,
    cfg: &ExperimentConfig,
    files: &[&str],
    results: R,
) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: "cavity-cs",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config: ExperimentConfig {
            output_dir: None,
            ..cfg.clone()
        },
        seeds: RunSeeds::master(cfg.seed).record(),
        files,
        results,
    };
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Config(format!("cannot serialize manifest: {e}")))?;
    json.push('\n');
    io::write_string(&out.join("manifest.json"), &json)?;
    info!("wrote {}", out.join("manifest.json").display());
    Ok(())
}

fn write_drive(path: &Path, clean: &[(f64, f64)], noisy: &[(f64, f64)]) -> Result<(), CliError> {
    io::write_csv(path, &["t", "f", "f_noisy"], |w| {
        for (&(t, f), &(_, g)) in clean.iter().zip(noisy) {
            w.serialize((t, f, g))?;
        }
        Ok(())
    })?;
    Ok(())
}

/// `n,t,re,im,re_noisy,im_noisy`: the noiseless series next to the sensed one.
fn write_pair(path: &Path, clean: &ComplexSeries, noisy: &ComplexSeries) -> Result<(), CliError> {
    let grid = *clean.grid();
    io::write_csv(path, &["n", "t", "re", "im", "re_noisy", "im_noisy"], |w| {
        for (k, (c, z)) in clean.values().iter().zip(noisy.values()).enumerate() {
            w.serialize((k + 1, grid.time(k + 1), c.re, c.im, z.re, z.im))?;
        }
        Ok(())
    })?;
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    io::ensure_dir(out)?;
    let signal = simulate_signal(cfg, &RunSeeds::master(cfg.seed))?;
    write_drive(&out.join("drive.csv"), &signal.drive_clean, &signal.drive)?;
    write_pair(&out.join("beta.csv"), &signal.beta_clean, &signal.beta)?;
    write_pair(&out.join("alpha.csv"), &signal.alpha_clean, &signal.alpha)?;
    #[derive(Serialize)]
    struct Results {
        steps: usize,
        noise: bool,
        final_alpha: [f64; 2],
    }
    let last = signal.alpha.values().last().copied().unwrap_or_default();
    write_manifest(
        out,
        "simulate",
        cfg,
        &["drive.csv", "beta.csv", "alpha.csv", "manifest.json"],
        Results {
            steps: cfg.steps,
            noise: cfg.noise.enabled,
            final_alpha: [last.re, last.im],
        },
    )
}

fn measure(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    io::ensure_dir(out)?;
    let seeds = RunSeeds::master(cfg.seed);
    let signal = simulate_signal(cfg, &seeds)?;
    let a = SensingMatrix::random(&seeds.matrix, cfg.measurements, cfg.flips, cfg.steps)?;
    let y = a.measure(&signal.beta)?;
    // the same runs simulated segment by segment, as a consistency check
    let grid = cfg.grid()?;
    let noise = cfg
        .noise
        .enabled
        .then(|| cavity_cs::signal::NoiseSpec::new(cfg.noise.strength, seeds.noise.fingerprint()));
    let cavity = cavity_cs::signal::DrivenCavity::new(
        signal.protocol.clone(),
        cfg.detuning,
        grid,
        noise.as_ref(),
    )?;
    let simulated = simulate_measurements(&cavity, &a)?;
    let scale = y
        .values()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let discrepancy = y
        .values()
        .iter()
        .zip(simulated.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale;

    write_drive(&out.join("drive.csv"), &signal.drive_clean, &signal.drive)?;
    write_pair(&out.join("beta.csv"), &signal.beta_clean, &signal.beta)?;
    a.write_csv(&out.join("matrix.csv"), &out.join("schedules.csv"))?;
    y.write_csv(&out.join("measurements.csv"))?;
    #[derive(Serialize)]
    struct Results {
        measurements: usize,
        flips: usize,
        matrix_vs_recursion_max_rel: f64,
    }
    write_manifest(
        out,
        "measure",
        cfg,
        &[
            "drive.csv",
            "beta.csv",
            "matrix.csv",
            "schedules.csv",
            "measurements.csv",
            "manifest.json",
        ],
        Results {
            measurements: a.rows(),
            flips: cfg.flips,
            matrix_vs_recursion_max_rel: discrepancy,
        },
    )
}

#[derive(Serialize)]
struct RecoveryDiagnostics {
    support_size: [usize; 2],
    residual_norm: [f64; 2],
    rank_deficient: [bool; 2],
    resolved: ResolvedRecovery,
}

impl RecoveryDiagnostics {
    fn new(result: &RecoveryResult, resolved: ResolvedRecovery) -> Self {
        Self {
            support_size: result.iterations(),
            residual_norm: result.residual_norm,
            rank_deficient: result.rank_deficient,
            resolved,
        }
    }
}

fn recover(cfg: &ExperimentConfig, input: &Path, out: &Path) -> Result<(), CliError> {
    let a = SensingMatrix::read_csv(&input.join("matrix.csv"), &input.join("schedules.csv"))?;
    let y = MeasurementVector::read_csv(&input.join("measurements.csv"))?;
    if a.cols() != cfg.steps {
        return Err(CliError::Config(format!(
            "N: config has {} steps but the matrix has {} columns",
            cfg.steps,
            a.cols()
        )));
    }
    io::ensure_dir(out)?;
    let basis = DctBasis::new(cfg.steps);
    let signal = simulate_signal(cfg, &RunSeeds::master(cfg.seed))?;
    let resolved = resolve_recovery(cfg, a.rows(), &signal.beta_clean, &basis)?;
    let result = recover_beta(
        &a,
        &y,
        &basis,
        &cfg.grid()?,
        &resolved.config,
        Some(resolved.tolerance),
    )?;
    result.write_csv(&out.join("alpha_recovered.csv"))?;
    write_manifest(
        out,
        "recover",
        cfg,
        &["alpha_recovered.csv", "manifest.json"],
        RecoveryDiagnostics::new(&result, resolved),
    )
}

fn figure2(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    io::ensure_dir(out)?;
    let o = run_recovery_experiment(cfg)?;
    let drive_clean: Vec<(f64, f64)> = o
        .drive
        .iter()
        .map(|&(t, _)| o.protocol.eval(t).map(|f| (t, f)))
        .collect::<Result<_, _>>()?;
    write_drive(&out.join("drive.csv"), &drive_clean, &o.drive)?;
    write_pair(&out.join("alpha.csv"), &o.alpha_clean, &o.alpha)?;
    o.recovered.write_csv(&out.join("alpha_recovered.csv"))?;

    let grid = cfg.grid()?;
    let trace = |values: Vec<f64>| -> Vec<(f64, f64)> {
        values
            .into_iter()
            .enumerate()
            .map(|(k, v)| (grid.time(k + 1), v))
            .collect()
    };
    let panels = [
        Panel {
            title: "drive".into(),
            x_label: "t (1/omega_0)".into(),
            y_label: "f(t) (omega_0)".into(),
            series: vec![
                Series::new("f with noise", o.drive.clone(), "#999999"),
                Series::new("f", drive_clean, "black"),
            ],
        },
        Panel {
            title: "Re alpha".into(),
            x_label: "t (1/omega_0)".into(),
            y_label: "Re alpha".into(),
            series: vec![
                Series::new("recovered", trace(o.recovered.alpha.re()), "#d62728"),
                Series::new("original", trace(o.alpha_clean.re()), "#1f77b4").dashed(),
            ],
        },
        Panel {
            title: "Im alpha".into(),
            x_label: "t (1/omega_0)".into(),
            y_label: "Im alpha".into(),
            series: vec![
                Series::new("recovered", trace(o.recovered.alpha.im()), "#d62728"),
                Series::new("original", trace(o.alpha_clean.im()), "#1f77b4").dashed(),
            ],
        },
    ];
    let title = format!(
        "{} drive: N = {}, M = {}, K = {}",
        cfg.protocol.name(),
        cfg.steps,
        cfg.measurements,
        cfg.flips
    );
    io::write_string(&out.join("figure2.svg"), &line_figure(&title, &panels))?;

    #[derive(Serialize)]
    struct Results {
        /// Against the noiseless increments and amplitude.
        mse: MseReport,
        /// Against the noise-mixed increments that were sensed.
        mse_sensed: MseReport,
        relative_alpha_mse: f64,
        max_abs_alpha_sq: f64,
        compression_ratio: f64,
        min_measurements_estimate: Option<usize>,
        recovery: RecoveryDiagnostics,
    }
    let s = o.resolved.sparsity_estimate;
    write_manifest(
        out,
        "figure2",
        cfg,
        &[
            "drive.csv",
            "alpha.csv",
            "alpha_recovered.csv",
            "figure2.svg",
            "manifest.json",
        ],
        Results {
            mse: o.mse_clean,
            mse_sensed: o.mse,
            relative_alpha_mse: o.relative_alpha_mse(),
            max_abs_alpha_sq: o
                .alpha_clean
                .values()
                .iter()
                .map(|z| z.norm_sqr())
                .fold(0.0, f64::max),
            compression_ratio: compression_ratio(cfg.steps, cfg.measurements),
            min_measurements_estimate: min_measurements(s.max(1), cfg.steps, 1.0).ok(),
            recovery: RecoveryDiagnostics::new(&o.recovered, o.resolved),
        },
    )
}

fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    io::ensure_dir(out)?;
    let ms = &cfg.sweep.m_values;
    let ks = &cfg.sweep.k_values;
    info!(
        "sweeping {} cells x {} trials",
        ms.len() * ks.len(),
        cfg.trials
    );
    let report = success_sweep(cfg, ms, ks)?;
    report.write_csv(&out.join("sweep.csv"))?;
    let x: Vec<String> = ms.iter().map(|m| m.to_string()).collect();
    let y: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
    let title = format!(
        "success probability ({} trials, mse < {}, noise {})",
        cfg.trials,
        cfg.sweep.threshold,
        if cfg.noise.enabled { "on" } else { "off" }
    );
    let svg = heat_map(&title, "M", &x, "K", &y, |i, j| {
        report.cell(ms[i], ks[j]).map(|c| c.probability)
    });
    io::write_string(&out.join("sweep.svg"), &svg)?;
    #[derive(Serialize)]
    struct Results<'a> {
        threshold: f64,
        noise: bool,
        cells: &'a [SweepCell],
    }
    write_manifest(
        out,
        "sweep",
        cfg,
        &["sweep.csv", "sweep.svg", "manifest.json"],
        Results {
            threshold: report.threshold,
            noise: report.noise,
            cells: &report.cells,
        },
    )
}

fn info_text(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let grid = cfg.grid()?;
    let signal = simulate_signal(cfg, &RunSeeds::master(cfg.seed))?;
    let basis = DctBasis::new(cfg.steps);
    let resolved = resolve_recovery(cfg, cfg.measurements, &signal.beta_clean, &basis)?;
    let s = resolved.sparsity_estimate;
    let lines = [
        format!("protocol            {}", cfg.protocol.name()),
        format!("window              [{}, {}]", grid.t0(), grid.t_end()),
        format!("steps N             {}", cfg.steps),
        format!("tau_B               {}", grid.tau_b()),
        format!("substeps Q          {}", cfg.substeps),
        format!("detuning            {}", cfg.detuning),
        format!(
            "noise               {}",
            if cfg.noise.enabled {
                format!("uniform, strength {}", cfg.noise.strength)
            } else {
                "off".into()
            }
        ),
        format!("measurements M      {}", cfg.measurements),
        format!("flips K             {}", cfg.flips),
        format!("master seed         {}", cfg.seed),
        format!(
            "sparsity estimate   {s} (energy {})",
            cfg.recovery.energy_fraction
        ),
        format!(
            "S log2(N/S)         {}",
            min_measurements(s.max(1), cfg.steps, 1.0)
                .map(|m| m.to_string())
                .unwrap_or_else(|_| "n/a".into())
        ),
        format!("support cap         {}", resolved.config.max_support),
        format!(
            "residual targets    {:.6e}, {:.6e}",
            resolved.tolerance[0], resolved.tolerance[1]
        ),
        format!(
            "compression N/M     {:.2}",
            compression_ratio(cfg.steps, cfg.measurements)
        ),
    ];
    Ok(lines.join("\n") + "\n")
}
