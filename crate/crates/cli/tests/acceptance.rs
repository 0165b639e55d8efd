//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p cavity-cs-cli --test acceptance`. Criteria listed
//! in `EXPECTED_RED` are known to fail at the stated tolerance; the binary
//! exits non-zero only when the set of failures differs from that list.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use cavity_cs::experiments::{
    resolve_recovery, run_recovery_experiment, success_sweep, ExperimentConfig, ProtocolSpec,
};
use cavity_cs::recovery::{min_measurements, recover_beta, DctBasis, SparsifyingBasis};
use cavity_cs::sensing::{simulate_measurement, SensingMatrix};
use cavity_cs::signal::{
    ComplexSeries, DrivenCavity, DrivingProtocol, NoiseSpec, RandomSmooth, SeriesKind, TimeGrid,
};
use cavity_cs::SeedStream;
use num_complex::Complex64;
use rand::Rng;

const EXPECTED_RED: &[&str] = &["5", "6b"];

struct Verdict {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn report(id: &'static str, name: &str, pass: bool, detail: String, started: Instant) -> Verdict {
    println!(
        "[{}] criterion {id:<3} {name}: {detail} ({:.1} s)",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    Verdict { id, pass, detail }
}

fn random_cavity(rng: &mut impl Rng, seed: u64) -> DrivenCavity {
    let steps = rng.random_range(2..=1000);
    let q = rng.random_range(1..=8);
    let grid = TimeGrid::with_step(
        rng.random_range(-50.0..50.0),
        rng.random_range(0.2..2.0),
        steps,
        q,
    )
    .unwrap();
    let protocol = if rng.random_bool(0.5) {
        DrivingProtocol::square_pulse(
            rng.random_range(-1.0..1.0),
            rng.random_range(5.0..300.0),
            rng.random_range(0.05..1.0),
            rng.random_range(-20.0..20.0),
        )
        .unwrap()
    } else {
        let window = (grid.t0(), grid.t_end());
        DrivingProtocol::RandomSmooth(RandomSmooth::new(seed, 4, 10, 0.1, window).unwrap())
    };
    let noise = rng
        .random_bool(0.5)
        .then(|| NoiseSpec::new(0.05, seed.wrapping_mul(31)));
    DrivenCavity::new(protocol, rng.random_range(-0.5..0.5), grid, noise.as_ref()).unwrap()
}

fn oracle_equivalence() -> Verdict {
    let started = Instant::now();
    let trials = 500;
    let mut rng = SeedStream::new(1).child("acceptance-1").rng();
    let mut worst = 0.0f64;
    let mut rows_checked = 0;
    for trial in 0..trials {
        let cavity = random_cavity(&mut rng, trial);
        let steps = cavity.grid().steps();
        let k = rng.random_range(0..=(steps - 1).min(100));
        let beta = cavity.discretize_beta().unwrap();
        let a =
            SensingMatrix::random(&SeedStream::new(trial).child("matrix"), 2, k, steps).unwrap();
        let y = a.measure(&beta).unwrap();
        for (m, s) in a.schedules().iter().enumerate() {
            let direct = simulate_measurement(&cavity, s).unwrap();
            let scale = direct.norm().max(y.values()[m].norm());
            if scale > 0.0 {
                worst = worst.max((direct - y.values()[m]).norm() / scale);
            }
            rows_checked += 1;
        }
    }
    report(
        "1",
        "matrix path vs flip recursion",
        worst < 1e-9,
        format!("{trials} trials, {rows_checked} rows, max rel diff {worst:.2e} (tol 1e-9)"),
        started,
    )
}

fn additivity_and_quadrature() -> Verdict {
    let started = Instant::now();
    let mut rng = SeedStream::new(2).child("acceptance-2").rng();
    let mut worst_add = 0.0f64;
    for trial in 0..500 {
        let cavity = random_cavity(&mut rng, trial);
        let last = cavity.grid().node_count() - 1;
        let mut idx = [
            rng.random_range(0..=last),
            rng.random_range(0..=last),
            rng.random_range(0..=last),
        ];
        idx.sort();
        let t = idx.map(|i| cavity.grid().node_time(i));
        let whole = cavity.integrate_alpha(t[0], t[2]).unwrap();
        let parts = cavity.integrate_alpha(t[0], t[1]).unwrap()
            + cavity.integrate_alpha(t[1], t[2]).unwrap();
        let scale = whole.norm().max(parts.norm());
        if scale > 0.0 {
            worst_add = worst_add.max((whole - parts).norm() / scale);
        }
    }
    let mut worst_quad = 0.0f64;
    for _ in 0..200 {
        let steps = rng.random_range(10..=1000);
        let grid = TimeGrid::with_step(0.0, 1.0, steps, 32).unwrap();
        let protocol = DrivingProtocol::square_pulse(
            rng.random_range(0.01..1.0),
            rng.random_range(5.0..400.0),
            rng.random_range(0.05..0.95),
            rng.random_range(-50.0..50.0),
        )
        .unwrap();
        let cavity = DrivenCavity::new(protocol, rng.random_range(-0.1..0.1), grid, None).unwrap();
        let mut idx = [
            rng.random_range(0..=steps * 32),
            rng.random_range(0..=steps * 32),
        ];
        idx.sort();
        let (t1, t2) = (grid.node_time(idx[0]), grid.node_time(idx[1]));
        let exact = cavity.integrate_alpha_closed_form(t1, t2).unwrap().unwrap();
        let trap = cavity.integrate_alpha_trapezoid(t1, t2).unwrap();
        let scale = exact.norm().max(trap.norm());
        if scale > 0.0 {
            worst_quad = worst_quad.max((exact - trap).norm() / scale);
        }
    }
    report(
        "2",
        "additivity and quadrature",
        worst_add < 1e-12 && worst_quad < 1e-6,
        format!(
            "additivity max rel {worst_add:.2e} (tol 1e-12), closed form vs trapezoid Q=32 max rel {worst_quad:.2e} (tol 1e-6)"
        ),
        started,
    )
}

fn dct_orthonormality() -> Verdict {
    let started = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for n in [1usize, 2, 17, 1000] {
        let phi = DctBasis::new(n).matrix();
        let gram = &phi * phi.transpose();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        pass &= worst < 1e-12;
        parts.push(format!("N={n}: {worst:.1e}"));
    }
    report(
        "3",
        "DCT orthonormality",
        pass,
        format!("max |Phi Phi^T - I| {} (tol 1e-12)", parts.join(", ")),
        started,
    )
}

fn planted_recovery() -> Verdict {
    let started = Instant::now();
    let (n, s, m, k, trials) = (1000, 40, 200, 20, 100);
    let basis = DctBasis::new(n);
    let grid = TimeGrid::with_step(0.0, 1.0, n, 1).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.noise.enabled = false;
    let mut successes = 0;
    let mut s_max = 0;
    for trial in 0..trials {
        let root = SeedStream::new(4).child("planted").index(trial);
        let mut rng = root.child("coefficients").rng();
        let mut channels = [vec![0.0; n], vec![0.0; n]];
        for c in channels.iter_mut() {
            for idx in rand::seq::index::sample(&mut rng, n, s) {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                c[idx] = sign * rng.random_range(0.1..1.0);
            }
        }
        let re = basis.synthesize(&channels[0]);
        let im = basis.synthesize(&channels[1]);
        let values = re
            .iter()
            .zip(&im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect();
        let beta = ComplexSeries::new(SeriesKind::Beta, grid, values).unwrap();
        let a = SensingMatrix::random(&root.child("matrix"), m, k, n).unwrap();
        let y = a.measure(&beta).unwrap();
        let resolved = resolve_recovery(&cfg, m, &beta, &basis).unwrap();
        s_max = s_max.max(resolved.config.max_support);
        let out = recover_beta(&a, &y, &basis, &grid, &resolved.config, None).unwrap();
        let err = out.errors_against(&beta).unwrap();
        if err.beta_re < 1e-10 && err.beta_im < 1e-10 {
            successes += 1;
        }
    }
    report(
        "4",
        "planted S=40 recovery",
        successes * 100 >= 95 * trials,
        format!(
            "{successes}/{trials} trials with per-channel MSE < 1e-10 (need >= 95%), S_max <= {s_max}"
        ),
        started,
    )
}

fn figure2_reproduction() -> Verdict {
    let started = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, cfg) in [
        ("square", ExperimentConfig::square_pulse_run()),
        ("random", ExperimentConfig::random_drive_run()),
    ] {
        let out = run_recovery_experiment(&cfg).unwrap();
        let mse = out.mse_clean.alpha_max();
        let relative = out.relative_alpha_mse();
        let leg = mse < 5e-4 || relative < 1e-3;
        pass &= leg;
        parts.push(format!(
            "{label}: MSE {mse:.2e} (tol 5e-4), MSE/max|alpha|^2 {relative:.2e} (tol 1e-3) {}",
            if leg { "ok" } else { "fails" }
        ));
    }
    report(
        "5",
        "amplitude recovery at default settings",
        pass,
        parts.join("; "),
        started,
    )
}

fn sweep_config() -> ExperimentConfig {
    ExperimentConfig {
        protocol: ProtocolSpec::random(),
        trials: 200,
        ..ExperimentConfig::default()
    }
}

fn band(c: &cavity_cs::experiments::SweepCell) -> String {
    format!(
        "M={} K={} p={:.3} [{:.3}, {:.3}]",
        c.m, c.k, c.probability, c.ci_low, c.ci_high
    )
}

fn success_high_m() -> Verdict {
    let started = Instant::now();
    let report_ = success_sweep(&sweep_config(), &[220, 260], &[10, 20]).unwrap();
    let pass = report_.cells.iter().all(|c| c.probability >= 0.99);
    let cells: Vec<String> = report_.cells.iter().map(band).collect();
    report(
        "6a",
        "success >= 0.99 for M >= 220",
        pass,
        format!("200 trials/cell, {}", cells.join(", ")),
        started,
    )
}

fn success_peak_in_k() -> Verdict {
    let started = Instant::now();
    let report_ = success_sweep(&sweep_config(), &[200], &[2, 10, 100]).unwrap();
    let p = |k| report_.cell(200, k).unwrap().probability;
    let pass = p(10) > p(2) && p(10) > p(100);
    let cells: Vec<String> = report_.cells.iter().map(band).collect();
    report(
        "6b",
        "success at K=10 above K=2 and K=100",
        pass,
        format!("200 trials/cell, {}", cells.join(", ")),
        started,
    )
}

fn bound_calculator() -> Verdict {
    let started = Instant::now();
    let a = min_measurements(50, 1000, 1.0).unwrap();
    let b = min_measurements(40, 1000, 1.0).unwrap();
    report(
        "7",
        "measurement bound",
        a == 217 && b == 186,
        format!("min_measurements(50, 1000, 1) = {a} (want 217), (40, 1000, 1) = {b} (want 186)"),
        started,
    )
}

fn run_cli(args: &[&str], out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_cavity-cs"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .expect("cli runs");
    assert!(status.success(), "cavity-cs {args:?} failed");
}

fn determinism() -> Verdict {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.json");
    std::fs::write(
        &config,
        r#"{"protocol": "random", "sweep": {"M_values": [120, 200], "K_values": [5, 20]}}"#,
    )
    .unwrap();
    let config = config.to_str().unwrap();
    let invocations: [Vec<&str>; 5] = [
        vec!["figure2", "--seed", "3"],
        vec!["figure2", "--config", config, "--seed", "3"],
        vec!["simulate", "--config", config, "--seed", "9"],
        vec!["measure", "--seed", "9"],
        vec!["sweep", "--config", config, "--trials", "12", "--seed", "5"],
    ];
    let mut compared = 0;
    let mut differing = Vec::new();
    for (i, args) in invocations.iter().enumerate() {
        let a = dir.path().join(format!("run{i}a"));
        let b = dir.path().join(format!("run{i}b"));
        run_cli(args, &a);
        run_cli(args, &b);
        let mut names: Vec<_> = std::fs::read_dir(&a)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        for name in names {
            compared += 1;
            let x = std::fs::read(a.join(&name)).unwrap();
            let y = std::fs::read(b.join(&name)).ok();
            if y.as_deref() != Some(x.as_slice()) {
                differing.push(format!("{}:{}", args[0], name.to_string_lossy()));
            }
        }
    }
    report(
        "8",
        "byte-identical repeated CLI runs",
        differing.is_empty() && compared > 0,
        format!(
            "{compared} files compared across {} invocations, {} differ {:?}",
            invocations.len(),
            differing.len(),
            differing
        ),
        started,
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        // cargo's harness protocol; there are no individually listed tests
        return;
    }
    let verdicts = [
        oracle_equivalence(),
        additivity_and_quadrature(),
        dct_orthonormality(),
        planted_recovery(),
        figure2_reproduction(),
        success_high_m(),
        success_peak_in_k(),
        bound_calculator(),
        determinism(),
    ];
    let failed: BTreeSet<&str> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    let expected: BTreeSet<&str> = EXPECTED_RED.iter().copied().collect();
    let passed = verdicts.len() - failed.len();
    println!(
        "{passed}/{} criteria pass; failing: {:?}; known failures: {:?}",
        verdicts.len(),
        failed,
        expected
    );
    for v in verdicts
        .iter()
        .filter(|v| !v.pass && !expected.contains(v.id))
    {
        println!("unexpected failure in criterion {}: {}", v.id, v.detail);
    }
    for id in expected.difference(&failed) {
        println!("criterion {id} now passes; update EXPECTED_RED");
    }
    if failed != expected {
        std::process::exit(1);
    }
}
