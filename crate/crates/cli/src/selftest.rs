//! `hetclutter selftest` — fast built-in checks of the library's structural
//! guarantees, one line per check. Exit code 0 when every check passes,
//! 1 otherwise.

use hetclutter_core::baselines::{self, CovEstimatorSpec, CovKind};
use hetclutter_core::detector::{self, CyclicOptions};
use hetclutter_core::rng::TrialKey;
use hetclutter_core::sim::{self, ClutterScenario, Hypothesis};
use hetclutter_core::{C64, CMatrix, CVector};
use rand::Rng;

use crate::{numerical, CliError, Ctx};

const CTX_EQUIVARIANCE: u16 = 0xE1;
const CTX_ROTATION: u16 = 0xE2;
const CTX_SWEEP_ORACLE: u16 = 0xE3;
const CTX_ESTIMATORS: u16 = 0xE4;
const CTX_MONOTONICITY: u16 = 0xE5;
const CTX_TEXTURE: u16 = 0xE6;

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(checks: &[Check]) -> Result<(), CliError> {
    for c in checks {
        println!(
            "selftest {:<22} {}  {}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed == 0 {
        println!("selftest: all {} checks passed", checks.len());
        Ok(())
    } else {
        Err(numerical(format!("{failed} selftest check(s) failed")))
    }
}

/// Per-cell power scalings of the secondary data must not move the decision
/// statistic (the power-level fit absorbs them).
fn power_equivariance(seed: u64) -> Check {
    let sc = ClutterScenario::reference();
    let opts = CyclicOptions::default();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for t in 0..10u32 {
        let run = || -> Result<f64, String> {
            let ds = sim::gen_dataset(&sc, TrialKey::new(seed, CTX_EQUIVARIANCE, t))
                .map_err(|e| e.to_string())?;
            let base = detector::detect(&ds.z, &ds.secondaries, &ds.v, &opts)
                .map_err(|e| e.to_string())?;
            let mut rng = TrialKey::new(seed, CTX_EQUIVARIANCE, t).rng(1);
            let mut scaled = ds.secondaries.clone();
            for k in 0..scaled.ncols() {
                let mag: f64 = rng.random_range(1e-3..1e3);
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let c = C64::from_polar(mag, phase);
                let mut col = scaled.column_mut(k);
                col *= c;
            }
            let moved = detector::detect(&ds.z, &scaled, &ds.v, &opts)
                .map_err(|e| e.to_string())?;
            Ok((moved.log_statistic - base.log_statistic).abs())
        };
        match run() {
            Ok(d) => worst = worst.max(d),
            Err(e) => failures.push(e),
        }
    }
    Check {
        name: "power-equivariance",
        pass: failures.is_empty() && worst <= 1e-9,
        detail: if failures.is_empty() {
            format!("worst |Δstatistic| {worst:.2e} over 10 instances (tol 1e-9)")
        } else {
            failures.remove(0)
        },
    }
}

/// A common unitary rotation of every vector must not move the statistic;
/// both runs go to convergence so iteration-path rounding cancels.
fn rotation_invariance(seed: u64) -> Check {
    let sc = ClutterScenario::reference();
    let opts = CyclicOptions {
        max_iters: 500,
        epsilon: 1e-12,
        ..CyclicOptions::default()
    };
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for t in 0..10u32 {
        let run = || -> Result<f64, String> {
            let ds = sim::gen_dataset(&sc, TrialKey::new(seed, CTX_ROTATION, t))
                .map_err(|e| e.to_string())?;
            let base = detector::detect(&ds.z, &ds.secondaries, &ds.v, &opts)
                .map_err(|e| e.to_string())?;
            let mut rng = TrialKey::new(seed, CTX_ROTATION, t).rng(1);
            let n = ds.z.len();
            let g = CMatrix::from_fn(n, n, |_, _| sim::complex_standard_normal(&mut rng));
            let q = g.qr().q();
            let rot = detector::detect(
                &(&q * &ds.z),
                &(&q * &ds.secondaries),
                &(&q * &ds.v),
                &opts,
            )
            .map_err(|e| e.to_string())?;
            Ok((rot.log_statistic - base.log_statistic).abs())
        };
        match run() {
            Ok(d) => worst = worst.max(d),
            Err(e) => failures.push(e),
        }
    }
    Check {
        name: "rotation-invariance",
        pass: failures.is_empty() && worst <= 1e-9,
        detail: if failures.is_empty() {
            format!("worst |Δstatistic| {worst:.2e} over 10 rotations (tol 1e-9)")
        } else {
            failures.remove(0)
        },
    }
}

/// The incremental-update sweep must agree with full refactorization.
fn sweep_oracle(seed: u64) -> Check {
    let sc = ClutterScenario::reference();
    let fast = CyclicOptions::default();
    let naive = CyclicOptions {
        fast_path: false,
        ..fast
    };
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for t in 0..25u32 {
        let run = || -> Result<f64, String> {
            let ds = sim::gen_dataset(&sc, TrialKey::new(seed, CTX_SWEEP_ORACLE, t))
                .map_err(|e| e.to_string())?;
            let a = detector::detect(&ds.z, &ds.secondaries, &ds.v, &naive)
                .map_err(|e| e.to_string())?;
            let b = detector::detect(&ds.z, &ds.secondaries, &ds.v, &fast)
                .map_err(|e| e.to_string())?;
            Ok((a.log_statistic - b.log_statistic).abs() / a.log_statistic.abs().max(1.0))
        };
        match run() {
            Ok(d) => worst = worst.max(d),
            Err(e) => failures.push(e),
        }
    }
    Check {
        name: "sweep-oracle",
        pass: failures.is_empty() && worst <= 1e-8,
        detail: if failures.is_empty() {
            format!("worst rel Δstatistic {worst:.2e} over 25 instances (tol 1e-8)")
        } else {
            failures.remove(0)
        },
    }
}

/// Normalization, scale invariance, idempotence, and range guarantees of
/// the covariance estimators and the matched filter.
fn estimator_properties(seed: u64) -> Check {
    let n = 8usize;
    let k = 16usize;
    let mut rng = TrialKey::new(seed, CTX_ESTIMATORS, 0).rng(0);
    let mut worst_trace = 0.0f64;
    let mut worst_scale = 0.0f64;
    let mut worst_idem = 0.0f64;
    let mut range_ok = true;
    let mut run = || -> Result<(), String> {
        for _ in 0..10 {
            let s = CMatrix::from_fn(n, k, |_, _| sim::complex_standard_normal(&mut rng));
            let est = baselines::nscm(&s).map_err(|e| e.to_string())?;
            worst_trace = worst_trace.max((est.trace() - n as f64).abs());

            let c: f64 = rng.random_range(0.1..10.0);
            let scaled = &s * C64::new(c, 0.0);
            for kind in [CovKind::Nscm, CovKind::Recursive, CovKind::PersymmetricRecursive] {
                let spec = CovEstimatorSpec {
                    kind,
                    ..Default::default()
                };
                let a = spec.estimate(&s).map_err(|e| e.to_string())?;
                let b = spec.estimate(&scaled).map_err(|e| e.to_string())?;
                let dev = (a.entries() - b.entries()).norm();
                worst_scale = worst_scale.max(dev);
            }

            let p = baselines::persymmetrize(&est);
            let pp = baselines::persymmetrize(&p);
            worst_idem = worst_idem.max((p.entries() - pp.entries()).norm());

            let z = CVector::from_fn(n, |_, _| sim::complex_standard_normal(&mut rng));
            let v = sim::steering_vector(n, rng.random_range(-0.5..0.5));
            let stat = baselines::nmf_statistic(&z, &v, &est).map_err(|e| e.to_string())?;
            range_ok &= (0.0..=1.0).contains(&stat);
        }
        Ok(())
    };
    match run() {
        Ok(()) => Check {
            name: "estimator-properties",
            pass: worst_trace <= 1e-12 && worst_scale <= 1e-12 && worst_idem <= 1e-14 && range_ok,
            detail: format!(
                "trace dev {worst_trace:.1e}, scale dev {worst_scale:.1e}, \
                 idempotence dev {worst_idem:.1e}, matched-filter range ok: {range_ok}"
            ),
        },
        Err(e) => Check {
            name: "estimator-properties",
            pass: false,
            detail: e,
        },
    }
}

/// Every coordinate step of the cyclic fit must not lower the likelihood.
fn ascent_monotonicity(seed: u64) -> Check {
    let mut violations = 0u64;
    let mut runs = 0u64;
    let mut failures = Vec::new();
    for t in 0..50u32 {
        let mut sc = ClutterScenario::reference();
        if t % 2 == 1 {
            sc.hypothesis = Hypothesis::H1;
        }
        let run = || -> Result<u64, String> {
            let ds = sim::gen_dataset(&sc, TrialKey::new(seed, CTX_MONOTONICITY, t))
                .map_err(|e| e.to_string())?;
            let out = detector::detect(&ds.z, &ds.secondaries, &ds.v, &CyclicOptions::default())
                .map_err(|e| e.to_string())?;
            Ok(u64::from(
                out.estimates.h1.monotonicity_violations + out.estimates.h0.monotonicity_violations,
            ))
        };
        match run() {
            Ok(v) => {
                violations += v;
                runs += 1;
            }
            Err(e) => failures.push(e),
        }
    }
    Check {
        name: "ascent-monotonicity",
        pass: failures.is_empty() && violations == 0,
        detail: if failures.is_empty() {
            format!("{violations} likelihood decreases across {runs} detector runs")
        } else {
            failures.remove(0)
        },
    }
}

/// Texture draws must have unit mean square.
fn texture_moments(seed: u64) -> Check {
    let mut rng = TrialKey::new(seed, CTX_TEXTURE, 0).rng(0);
    let nu = 0.5;
    let ndraws = 20_000usize;
    let mut sum = 0.0f64;
    for _ in 0..ndraws {
        match sim::sample_texture(nu, &mut rng) {
            Ok(tau) => sum += tau * tau,
            Err(e) => {
                return Check {
                    name: "texture-moments",
                    pass: false,
                    detail: e.to_string(),
                }
            }
        }
    }
    let mean = sum / ndraws as f64;
    // Var(τ²) = 1/ν for the unit-mean draw; allow five standard errors.
    let band = 5.0 * (1.0 / nu / ndraws as f64).sqrt();
    Check {
        name: "texture-moments",
        pass: (mean - 1.0).abs() <= band,
        detail: format!("E[τ²] {mean:.4} over {ndraws} draws (band ±{band:.4})"),
    }
}

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let seed = ctx.seed();
    let checks = vec![
        power_equivariance(seed),
        rotation_invariance(seed),
        sweep_oracle(seed),
        estimator_properties(seed),
        ascent_monotonicity(seed),
        texture_moments(seed),
    ];
    report(&checks)
}
