//! Canned experiment plans (`--preset fig1` … `--preset fig7`) that produce
//! figure-ready CSV data for the standard study of the detector:
//!
//! - `fig1` — convergence-rate profile of the cyclic estimator.
//! - `fig2` — detection probability versus SNR, clutter only.
//! - `fig3` — false-alarm sensitivity to the speckle correlation, clutter only.
//! - `fig4` — false-alarm sensitivity to the texture shape, clutter only.
//! - `fig5`/`fig6`/`fig7` — the same three analyses with thermal noise added
//!   at one ten-thousandth of the clutter power.
//!
//! All presets share the reference scenario (8 pulses, 16 secondary cells,
//! speckle correlation 0.95, texture shape 0.5, zero-Doppler steering) and
//! desk-scale trial counts; `--pfa`, `--trials`, and `--seed` override the
//! corresponding plan fields.

use hetclutter_core::baselines::{CovEstimatorSpec, CovKind};
use hetclutter_core::mc::{ConvergenceSpec, DetectorSpec, ExperimentPlan, SweepAxis};
use hetclutter_core::sim::ClutterScenario;

/// Preset names understood by `--preset`, in presentation order.
pub const NAMES: [&str; 7] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"];

/// The detector line-up used by every curve and sweep preset: the proposed
/// detector plus the normalized matched filter over each standard
/// covariance estimate.
pub fn standard_detectors() -> Vec<DetectorSpec> {
    vec![
        DetectorSpec::Proposed {
            options: Default::default(),
        },
        DetectorSpec::Nmf {
            estimator: CovEstimatorSpec {
                kind: CovKind::Nscm,
                ..Default::default()
            },
        },
        DetectorSpec::Nmf {
            estimator: CovEstimatorSpec {
                kind: CovKind::Recursive,
                ..Default::default()
            },
        },
        DetectorSpec::Nmf {
            estimator: CovEstimatorSpec {
                kind: CovKind::PersymmetricRecursive,
                ..Default::default()
            },
        },
    ]
}

fn base_plan() -> ExperimentPlan {
    ExperimentPlan {
        scenario: ClutterScenario::reference(),
        detectors: standard_detectors(),
        pfa_target: 1e-2,
        calib_trials: None,
        pd_trials: 1000,
        snr_grid_db: Vec::new(),
        sweep: None,
        convergence: None,
        master_seed: 0,
    }
}

fn snr_grid() -> Vec<f64> {
    (0..=8).map(|i| 3.0 * i as f64).collect()
}

fn rho_sweep() -> SweepAxis {
    SweepAxis::Rho(vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99])
}

fn nu_sweep() -> SweepAxis {
    SweepAxis::Nu(vec![0.1, 0.2, 0.3, 0.5, 1.0, 2.0, 5.0])
}

/// Thermal-noise power putting the clutter forty decibels above the noise.
const NOISY_SIGMA2: f64 = 1e-4;

/// Builds the plan for a preset name; `None` when the name is unknown.
pub fn plan(name: &str) -> Option<ExperimentPlan> {
    let mut p = base_plan();
    match name {
        "fig1" => {
            p.detectors.truncate(1);
            p.calib_trials = Some(1000);
            p.convergence = Some(ConvergenceSpec {
                trials: 1000,
                max_iters: 20,
            });
        }
        "fig2" => p.snr_grid_db = snr_grid(),
        "fig3" => p.sweep = Some(rho_sweep()),
        "fig4" => p.sweep = Some(nu_sweep()),
        "fig5" => {
            p.scenario.sigma2 = NOISY_SIGMA2;
            p.snr_grid_db = snr_grid();
        }
        "fig6" => {
            p.scenario.sigma2 = NOISY_SIGMA2;
            p.sweep = Some(rho_sweep());
        }
        "fig7" => {
            p.scenario.sigma2 = NOISY_SIGMA2;
            p.sweep = Some(nu_sweep());
        }
        _ => return None,
    }
    Some(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_name_yields_a_valid_plan() {
        for name in NAMES {
            let p = plan(name).expect(name);
            p.validate().expect(name);
        }
    }

    #[test]
    fn unknown_preset_name_is_rejected() {
        assert!(plan("fig8").is_none());
        assert!(plan("").is_none());
    }

    #[test]
    fn noisy_presets_mirror_the_clean_ones_with_thermal_noise() {
        for (clean, noisy) in [("fig2", "fig5"), ("fig3", "fig6"), ("fig4", "fig7")] {
            let mut a = plan(clean).unwrap();
            let b = plan(noisy).unwrap();
            assert_eq!(a.scenario.sigma2, 0.0);
            a.scenario.sigma2 = NOISY_SIGMA2;
            assert_eq!(a, b);
        }
    }
}
