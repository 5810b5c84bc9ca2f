//! Rayleigh-fading uplink with truncated channel inversion.
//!
//! Each worker sends its normalised gradient over `d1` orthogonal channel
//! usages. Usages whose fading magnitude falls below `h0` are skipped; the
//! rest are inverted and boosted by `c = 1 / Pr[|h| ≥ h0]` so the server-side
//! estimate stays unbiased. A per-worker alignment factor `ρ` spends exactly
//! the power budget `p0`.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::learner::GradientVector;
use crate::mathkit::{exp_integral_e1, sample_complex_gaussian, sample_real_gaussian, RngStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkerGeometry {
    /// Propagation distance in metres.
    pub distance: f64,
    pub pathloss_exponent: f64,
}

impl WorkerGeometry {
    pub fn new(distance: f64, pathloss_exponent: f64) -> Result<Self> {
        if !(distance > 0.0 && distance.is_finite()) {
            return Err(Error::Domain(format!("distance must be positive, got {distance}")));
        }
        if !(pathloss_exponent > 0.0 && pathloss_exponent.is_finite()) {
            return Err(Error::Domain(format!(
                "pathloss exponent must be positive, got {pathloss_exponent}"
            )));
        }
        Ok(Self {
            distance,
            pathloss_exponent,
        })
    }

    /// `δ^α`, the inverse of the mean channel power.
    pub fn inverse_mean_gain(&self) -> f64 {
        self.distance.powf(self.pathloss_exponent)
    }

    pub fn mean_gain(&self) -> f64 {
        1.0 / self.inverse_mean_gain()
    }
}

/// One worker's channel realisation for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFrame {
    pub coefficients: Vec<Complex<f64>>,
    /// `|h[i]|²`
    pub gains: Vec<f64>,
    /// `true` where `|h[i]| ≥ h0`.
    pub mask: Vec<bool>,
    pub worker_id: u32,
    pub frame: u64,
}

impl ChannelFrame {
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn scheduled(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmitPlan {
    /// `p[i] = ρ c h*[i] / |h[i]|²` on scheduled usages, zero elsewhere.
    pub power_control: Vec<Complex<f64>>,
    /// `ρ`; infinite for a silent plan.
    pub alignment_factor: f64,
    /// `ρ⁻²`; zero for a silent plan.
    pub inv_alignment_sq: f64,
    /// `c = exp(δ^α h0²)`.
    pub inv_sched_prob: f64,
}

impl TransmitPlan {
    fn silent(d1: usize, inv_sched_prob: f64) -> Self {
        Self {
            power_control: vec![Complex::new(0.0, 0.0); d1],
            alignment_factor: f64::INFINITY,
            inv_alignment_sq: 0.0,
            inv_sched_prob,
        }
    }

    /// The worker sends nothing this frame (no usable channel or zero gradient).
    pub fn is_silent(&self) -> bool {
        self.inv_alignment_sq == 0.0
    }

    /// `‖p ⊙ y/‖y‖‖²`, the transmit power spent on `gradient`.
    pub fn transmit_power(&self, gradient: &GradientVector) -> f64 {
        let norm_sq = gradient.norm_sq();
        self.power_control
            .iter()
            .zip(&gradient.0)
            .map(|(p, y)| p.norm_sqr() * y * y / norm_sq)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Per-usage noise power `σ²`.
    pub variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::Domain(format!("noise variance must be non-negative, got {variance}")));
        }
        Ok(Self { variance })
    }

    pub fn noiseless() -> Self {
        Self { variance: 0.0 }
    }

    /// `psd · bandwidth · 10^(nf/10)`, all in linear units of the psd.
    pub fn from_spectral_density(psd: f64, bandwidth: f64, noise_figure_db: f64) -> Result<Self> {
        Self::new(psd * bandwidth * 10f64.powf(noise_figure_db / 10.0))
    }
}

/// Constants of the aggregate's second-moment bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    /// `(1/N) Σ (exp(δ_n^α h0²) − 1)`
    pub c1: f64,
    /// `(1/(N p0)) Σ δ_n^α exp(2 δ_n^α h0²) E1(δ_n^α h0²)`
    pub c2: f64,
}

/// `Pr[|h| ≥ h0] = exp(−δ^α h0²)`.
pub fn scheduling_probability(geom: &WorkerGeometry, h0: f64) -> f64 {
    (-geom.inverse_mean_gain() * h0 * h0).exp()
}

/// `c = exp(δ^α h0²)`, the inverse of [`scheduling_probability`].
pub fn inverse_scheduling_probability(geom: &WorkerGeometry, h0: f64) -> f64 {
    (geom.inverse_mean_gain() * h0 * h0).exp()
}

/// Draws `d1` i.i.d. `CN(0, δ^(−α))` coefficients and applies the threshold.
pub fn draw_channel_frame(geom: &WorkerGeometry, d1: usize, h0: f64, stream: RngStream) -> Result<ChannelFrame> {
    if d1 == 0 {
        return Err(Error::Domain("a channel frame needs at least one usage".into()));
    }
    if !(h0 >= 0.0) {
        return Err(Error::Domain(format!("truncation threshold must be non-negative, got {h0}")));
    }
    let mut rng = stream.generator();
    let variance = geom.mean_gain();
    let threshold = h0 * h0;
    let mut coefficients = Vec::with_capacity(d1);
    let mut gains = Vec::with_capacity(d1);
    let mut mask = Vec::with_capacity(d1);
    for _ in 0..d1 {
        let h = sample_complex_gaussian(variance, &mut rng)?;
        let g = h.norm_sqr();
        coefficients.push(h);
        gains.push(g);
        mask.push(g >= threshold);
    }
    Ok(ChannelFrame {
        coefficients,
        gains,
        mask,
        worker_id: stream.worker_id,
        frame: stream.frame,
    })
}

/// Truncated channel inversion with the alignment factor chosen so the
/// power budget is met exactly:
///
/// `1/ρ² = (c²/p0) Σ_i mask[i] y[i]² / (|h[i]|² ‖y‖²)`.
pub fn make_transmit_plan(
    frame: &ChannelFrame,
    gradient: &GradientVector,
    p0: f64,
    h0: f64,
    geom: &WorkerGeometry,
) -> Result<TransmitPlan> {
    if frame.len() != gradient.len() {
        return Err(Error::Shape(format!(
            "channel frame has {} usages for a {}-dimensional gradient",
            frame.len(),
            gradient.len()
        )));
    }
    if !(p0 > 0.0) {
        return Err(Error::Domain(format!("power budget must be positive, got {p0}")));
    }
    let c = inverse_scheduling_probability(geom, h0);
    let norm_sq = gradient.norm_sq();
    if norm_sq == 0.0 || frame.scheduled() == 0 {
        return Ok(TransmitPlan::silent(frame.len(), c));
    }

    let weighted: f64 = frame
        .mask
        .iter()
        .zip(&frame.gains)
        .zip(&gradient.0)
        .filter(|((&m, _), _)| m)
        .map(|((_, g), y)| y * y / g)
        .sum::<f64>()
        / norm_sq;
    let inv_alignment_sq = c * c / p0 * weighted;
    if inv_alignment_sq == 0.0 {
        // every scheduled usage carries a zero coordinate
        return Ok(TransmitPlan::silent(frame.len(), c));
    }
    let rho = inv_alignment_sq.sqrt().recip();
    let power_control = frame
        .coefficients
        .iter()
        .zip(&frame.mask)
        .map(|(h, &m)| {
            if m {
                h.conj() * (rho * c / h.norm_sqr())
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(TransmitPlan {
        power_control,
        alignment_factor: rho,
        inv_alignment_sq,
        inv_sched_prob: c,
    })
}

fn check_transmit_shapes(gradient: &GradientVector, plan: &TransmitPlan, frame: &ChannelFrame) -> Result<()> {
    if plan.power_control.len() != gradient.len() || frame.len() != gradient.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries, plan {}, frame {}",
            gradient.len(),
            plan.power_control.len(),
            frame.len()
        )));
    }
    Ok(())
}

/// Received gradient after the server undoes normalisation and alignment:
/// `c · mask ⊙ y + (‖y‖/ρ) z` with `z ~ N(0, σ² I)`.
pub fn transmit(
    gradient: &GradientVector,
    plan: &TransmitPlan,
    frame: &ChannelFrame,
    noise: &NoiseModel,
    stream: RngStream,
) -> Result<GradientVector> {
    check_transmit_shapes(gradient, plan, frame)?;
    if plan.is_silent() {
        return Ok(GradientVector::zeros(gradient.len()));
    }
    let mut rng = stream.generator();
    let scale = gradient.norm() / plan.alignment_factor;
    let c = plan.inv_sched_prob;
    let mut out = Vec::with_capacity(gradient.len());
    for (&y, &m) in gradient.0.iter().zip(&frame.mask) {
        let z = sample_real_gaussian(noise.variance, &mut rng)?;
        let signal = if m { c * y } else { 0.0 };
        out.push(signal + scale * z);
    }
    Ok(GradientVector(out))
}

/// Same as [`transmit`] but evaluated literally: the worker's normalised
/// gradient is multiplied by the complex `h ⊙ p`, noise is added to the real
/// part, and the server scales by `‖y‖/ρ`. Uses the same noise draws as
/// [`transmit`] for a given stream.
pub fn transmit_over_air(
    gradient: &GradientVector,
    plan: &TransmitPlan,
    frame: &ChannelFrame,
    noise: &NoiseModel,
    stream: RngStream,
) -> Result<Vec<Complex<f64>>> {
    check_transmit_shapes(gradient, plan, frame)?;
    if plan.is_silent() {
        return Ok(vec![Complex::new(0.0, 0.0); gradient.len()]);
    }
    let mut rng = stream.generator();
    let norm = gradient.norm();
    let scale = norm / plan.alignment_factor;
    let mut out = Vec::with_capacity(gradient.len());
    for ((h, p), &y) in frame.coefficients.iter().zip(&plan.power_control).zip(&gradient.0) {
        let z = sample_real_gaussian(noise.variance, &mut rng)?;
        let received = h * p * (y / norm) + Complex::new(z, 0.0);
        out.push(received * scale);
    }
    Ok(out)
}

/// Element-wise mean of the received gradients, summed in the given order.
pub fn aggregate(received: &[GradientVector]) -> Result<GradientVector> {
    let first = received.first().ok_or(Error::Empty("no gradients to aggregate"))?;
    let d1 = first.len();
    let mut sum = vec![0.0; d1];
    for g in received {
        if g.len() != d1 {
            return Err(Error::Shape(format!("gradient of length {} among length {d1}", g.len())));
        }
        for (s, v) in sum.iter_mut().zip(&g.0) {
            *s += v;
        }
    }
    let n = received.len() as f64;
    Ok(GradientVector(sum.into_iter().map(|s| s / n).collect()))
}

/// Closed form `E[ρ⁻²] = p0⁻¹ δ^α exp(2 δ^α h0²) E1(δ^α h0²)`.
pub fn expected_inv_rho_sq(geom: &WorkerGeometry, h0: f64, p0: f64) -> Result<f64> {
    if !(p0 > 0.0) {
        return Err(Error::Domain(format!("power budget must be positive, got {p0}")));
    }
    if !(h0 > 0.0) {
        return Err(Error::Divergence(format!(
            "E[ρ⁻²] is infinite without truncation (h0 = {h0})"
        )));
    }
    let lambda = geom.inverse_mean_gain();
    let x = lambda * h0 * h0;
    Ok(lambda * (2.0 * x).exp() * exp_integral_e1(x)? / p0)
}

pub fn lemma_constants(geoms: &[WorkerGeometry], h0: f64, p0: f64) -> Result<TheoryConstants> {
    if geoms.is_empty() {
        return Err(Error::Empty("no worker geometries"));
    }
    let n = geoms.len() as f64;
    let c1 = geoms
        .iter()
        .map(|g| inverse_scheduling_probability(g, h0) - 1.0)
        .sum::<f64>()
        / n;
    let c2 = geoms
        .iter()
        .map(|g| expected_inv_rho_sq(g, h0, p0))
        .sum::<Result<f64>>()?
        / n;
    Ok(TheoryConstants { c1, c2 })
}

/// Upper bound on `E‖aggregate‖²` for one frame:
/// `2‖∇f‖² + (c1 + c2 d1 σ² + 4G) / (2N)`.
pub fn variance_bound(
    constants: &TheoryConstants,
    d1: usize,
    noise_variance: f64,
    g: f64,
    grad_norm_sq: f64,
    n: usize,
) -> f64 {
    2.0 * grad_norm_sq + (constants.c1 + constants.c2 * d1 as f64 * noise_variance + 4.0 * g) / (2.0 * n as f64)
}
