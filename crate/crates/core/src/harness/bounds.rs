//! Right-hand sides of the convergence rates for plain and accelerated descent.
//!
//! The rate statements carry a `p0⁻¹` on the noise term even though `c2`
//! already includes one. Both readings are evaluated: `printed` applies the
//! extra factor, `consistent` does not.

use crate::channel::{lemma_constants, TheoryConstants};
use crate::error::Result;
use crate::harness::config::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTerms {
    /// `4(1−β)·gap / (ηK)`; `β = 0` for plain descent.
    pub transient: f64,
    /// Error floor with `c2 d1 p0⁻¹ σ²`.
    pub floor_printed: f64,
    /// Error floor with `c2 d1 σ²`.
    pub floor_consistent: f64,
}

impl RateTerms {
    pub fn total_printed(&self) -> f64 {
        self.transient + self.floor_printed
    }

    pub fn total_consistent(&self) -> f64 {
        self.transient + self.floor_consistent
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremReport {
    pub constants: TheoryConstants,
    pub wfl: RateTerms,
    pub awfl: RateTerms,
    /// `(1/K) Σ ‖∇f(w_k)‖²` measured in the run.
    pub measured: f64,
}

/// Inputs of the rate expressions that do not come from the config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub d1: usize,
    pub empirical_g: f64,
    pub lipschitz: f64,
    pub initial_gap: f64,
    pub measured: f64,
}

pub fn rate_terms(
    constants: &TheoryConstants,
    inputs: &BoundInputs,
    eta: f64,
    beta: f64,
    frames: usize,
    workers: usize,
    noise_variance: f64,
    p0: f64,
) -> RateTerms {
    let one_minus = 1.0 - beta;
    let n = workers as f64;
    let noise = constants.c2 * inputs.d1 as f64 * noise_variance;
    let scale = eta * inputs.lipschitz / (n * one_minus * one_minus);
    RateTerms {
        transient: 4.0 * one_minus * inputs.initial_gap / (eta * frames as f64),
        floor_printed: (constants.c1 + noise / p0 + inputs.empirical_g) * scale,
        floor_consistent: (constants.c1 + noise + inputs.empirical_g) * scale,
    }
}

/// Evaluates both rate statements for the run described by `config`.
pub fn eval_theorem_bounds(config: &SimConfig, inputs: &BoundInputs) -> Result<TheoremReport> {
    let constants = lemma_constants(&config.geometries()?, config.truncation, config.power_budget)?;
    let terms = |beta| {
        rate_terms(
            &constants,
            inputs,
            config.stepsize,
            beta,
            config.num_frames,
            config.num_workers(),
            config.noise_variance,
            config.power_budget,
        )
    };
    Ok(TheoremReport {
        constants,
        wfl: terms(0.0),
        awfl: terms(config.momentum),
        measured: inputs.measured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> BoundInputs {
        BoundInputs {
            d1: 100,
            empirical_g: 0.4,
            lipschitz: 2.0,
            initial_gap: 1.5,
            measured: 0.01,
        }
    }

    const K: TheoryConstants = TheoryConstants { c1: 0.3, c2: 50.0 };

    #[test]
    fn zero_momentum_matches_plain_descent() {
        let mut config = SimConfig::default();
        config.momentum = 0.0;
        let r = eval_theorem_bounds(&config, &inputs()).unwrap();
        assert_eq!(r.wfl, r.awfl);
    }

    #[test]
    fn transient_halves_when_frames_double() {
        let a = rate_terms(&K, &inputs(), 0.1, 0.9, 1000, 6, 1e-3, 200.0);
        let b = rate_terms(&K, &inputs(), 0.1, 0.9, 2000, 6, 1e-3, 200.0);
        assert!((b.transient - a.transient / 2.0).abs() < 1e-15);
        assert_eq!(a.floor_printed, b.floor_printed);
    }

    #[test]
    fn floor_halves_when_workers_double() {
        let a = rate_terms(&K, &inputs(), 0.1, 0.5, 1000, 6, 1e-3, 200.0);
        let b = rate_terms(&K, &inputs(), 0.1, 0.5, 1000, 12, 1e-3, 200.0);
        assert!((b.floor_printed - a.floor_printed / 2.0).abs() < 1e-15);
        assert!((b.floor_consistent - a.floor_consistent / 2.0).abs() < 1e-15);
    }

    #[test]
    fn printed_and_consistent_differ_only_in_noise_scaling() {
        let t = rate_terms(&K, &inputs(), 0.1, 0.0, 1000, 4, 1e-3, 200.0);
        let scale = 0.1 * 2.0 / 4.0;
        assert!((t.floor_consistent - (0.3 + 50.0 * 100.0 * 1e-3 + 0.4) * scale).abs() < 1e-12);
        assert!((t.floor_printed - (0.3 + 50.0 * 100.0 * 1e-3 / 200.0 + 0.4) * scale).abs() < 1e-12);
        assert!((t.transient - 4.0 * 1.5 / 100.0).abs() < 1e-15);
    }
}
