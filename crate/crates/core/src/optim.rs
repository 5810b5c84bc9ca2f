//! Server-side update rules.

use crate::error::{Error, Result};
use crate::learner::{GradientVector, ModelVector};

fn check_dims(w: &ModelVector, other: usize, what: &str) -> Result<()> {
    if w.len() != other {
        return Err(Error::Shape(format!("model has {} entries, {what} has {other}", w.len())));
    }
    Ok(())
}

/// Plain descent `w ← w − η·agg`.
pub fn wfl_step(w: &mut ModelVector, agg: &GradientVector, eta: f64) -> Result<()> {
    check_dims(w, agg.len(), "aggregate")?;
    for (x, g) in w.0.iter_mut().zip(&agg.0) {
        *x -= eta * g;
    }
    Ok(())
}

/// Auxiliary sequence of the three-line Nesterov recursion. `u` starts at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub u: Vec<f64>,
    pub beta: f64,
    pub eta: f64,
}

impl MomentumState {
    pub fn new(d1: usize, beta: f64, eta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Domain(format!("momentum factor must lie in [0, 1), got {beta}")));
        }
        if !(eta > 0.0) {
            return Err(Error::Domain(format!("stepsize must be positive, got {eta}")));
        }
        Ok(Self {
            u: vec![0.0; d1],
            beta,
            eta,
        })
    }
}

/// One accelerated step:
///
/// ```text
/// u ← β u + agg
/// v ← β u + agg
/// w ← w − η v
/// ```
pub fn awfl_step(w: &mut ModelVector, state: &mut MomentumState, agg: &GradientVector) -> Result<()> {
    check_dims(w, agg.len(), "aggregate")?;
    check_dims(w, state.u.len(), "momentum state")?;
    let (beta, eta) = (state.beta, state.eta);
    for ((x, u), g) in w.0.iter_mut().zip(state.u.iter_mut()).zip(&agg.0) {
        *u = beta * *u + g;
        let v = beta * *u + g;
        *x -= eta * v;
    }
    Ok(())
}

/// State of the textbook two-line Nesterov form, which keeps the previous
/// look-ahead point `u_{k−1}` in model space.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardMomentumState {
    pub prev_u: Vec<f64>,
    pub beta: f64,
    pub eta: f64,
}

impl StandardMomentumState {
    /// Starts from `u_{−1} = w_0`, which makes the first step coincide with
    /// the three-line form started at `u_0 = 0`.
    pub fn new(w0: &ModelVector, beta: f64, eta: f64) -> Self {
        Self {
            prev_u: w0.0.clone(),
            beta,
            eta,
        }
    }
}

/// ```text
/// u_k     = w_k − η agg_k
/// w_{k+1} = (1 + β) u_k − β u_{k−1}
/// ```
pub fn awfl_standard_step(w: &mut ModelVector, state: &mut StandardMomentumState, agg: &GradientVector) -> Result<()> {
    check_dims(w, agg.len(), "aggregate")?;
    check_dims(w, state.prev_u.len(), "momentum state")?;
    let (beta, eta) = (state.beta, state.eta);
    for ((x, prev), g) in w.0.iter_mut().zip(state.prev_u.iter_mut()).zip(&agg.0) {
        let u = *x - eta * g;
        *x = (1.0 + beta) * u - beta * *prev;
        *prev = u;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_stepsize(eta: f64) -> Self {
        Self {
            eta,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.eta > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid Adam hyper-parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(d1: usize) -> Self {
        Self {
            m: vec![0.0; d1],
            v: vec![0.0; d1],
            t: 0,
        }
    }
}

/// Bias-corrected Adam on the aggregated gradient.
pub fn adam_step(w: &mut ModelVector, state: &mut AdamState, agg: &GradientVector, hyper: &AdamHyper) -> Result<()> {
    hyper.validate()?;
    check_dims(w, agg.len(), "aggregate")?;
    check_dims(w, state.m.len(), "Adam state")?;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (((x, m), v), g) in w.0.iter_mut().zip(&mut state.m).zip(&mut state.v).zip(&agg.0) {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *x -= hyper.eta * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
    Ok(())
}

/// The stepsize conditions under which the convergence rates hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsizeGuard {
    /// `3 / (4L)`
    pub wfl_threshold: f64,
    /// `3(1−β)² / (2(2+β³)L)`
    pub awfl_threshold: f64,
    pub eta: f64,
}

impl StepsizeGuard {
    pub fn wfl_ok(&self) -> bool {
        self.eta <= self.wfl_threshold
    }

    pub fn awfl_ok(&self) -> bool {
        self.eta <= self.awfl_threshold
    }

    pub fn wfl_margin(&self) -> f64 {
        self.wfl_threshold - self.eta
    }

    pub fn awfl_margin(&self) -> f64 {
        self.awfl_threshold - self.eta
    }
}

pub fn stepsize_guard(eta: f64, beta: f64, lipschitz: f64) -> Result<StepsizeGuard> {
    if !(lipschitz > 0.0) {
        return Err(Error::Domain(format!("smoothness constant must be positive, got {lipschitz}")));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!("momentum must lie in [0, 1), got {beta}")));
    }
    let one_minus = 1.0 - beta;
    Ok(StepsizeGuard {
        wfl_threshold: 3.0 / (4.0 * lipschitz),
        awfl_threshold: 3.0 * one_minus * one_minus / (2.0 * (2.0 + beta.powi(3)) * lipschitz),
        eta,
    })
}

/// Which update rule the server applies, with its state.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerOptimizer {
    Descent { eta: f64 },
    Nesterov(MomentumState),
    Adam { state: AdamState, hyper: AdamHyper },
}

impl ServerOptimizer {
    pub fn step(&mut self, w: &mut ModelVector, agg: &GradientVector) -> Result<()> {
        match self {
            ServerOptimizer::Descent { eta } => wfl_step(w, agg, *eta),
            ServerOptimizer::Nesterov(state) => awfl_step(w, state, agg),
            ServerOptimizer::Adam { state, hyper } => adam_step(w, state, agg, hyper),
        }
    }
}
