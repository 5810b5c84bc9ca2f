//! Monte Carlo checks of the channel's statistical guarantees.
//!
//! Draws are split into a fixed number of chunks, each summed sequentially and
//! combined in chunk order, so results do not depend on the thread count.

use crate::channel::{
    aggregate, draw_channel_frame, lemma_constants, make_transmit_plan, scheduling_probability, transmit,
    variance_bound, expected_inv_rho_sq, NoiseModel, TheoryConstants, WorkerGeometry,
};
use crate::error::{Error, Result};
use crate::learner::{estimate_g, GradientVector};
use crate::mathkit::{sample_real_gaussian, Lane, RngStream};
use crate::parallel::map_indexed;

const CHUNKS: usize = 64;

/// Runs `per_draw` for every index in `0..draws` and sums the resulting
/// vectors with a thread-count-independent order.
fn chunked_sum<F>(draws: usize, width: usize, per_draw: F) -> Result<Vec<f64>>
where
    F: Fn(u64, &mut [f64]) -> Result<()> + Sync + Send,
{
    let chunks = CHUNKS.min(draws.max(1));
    let partials = map_indexed(chunks, |c| -> Result<Vec<f64>> {
        let start = draws * c / chunks;
        let end = draws * (c + 1) / chunks;
        let mut acc = vec![0.0; width];
        for t in start..end {
            per_draw(t as u64, &mut acc)?;
        }
        Ok(acc)
    });
    let mut total = vec![0.0; width];
    for partial in partials {
        for (t, p) in total.iter_mut().zip(partial?) {
            *t += p;
        }
    }
    Ok(total)
}

/// Unit-norm random gradients, one per worker, from the diagnostics lane.
pub fn random_unit_gradients(workers: usize, d1: usize, seed: u64) -> Result<Vec<GradientVector>> {
    (0..workers)
        .map(|n| {
            let mut rng = RngStream::new(seed, n as u32, 0, Lane::Diagnostics).generator();
            let v = (0..d1)
                .map(|_| sample_real_gaussian(1.0, &mut rng))
                .collect::<Result<Vec<f64>>>()?;
            let g = GradientVector(v);
            let norm = g.norm();
            Ok(GradientVector(g.0.into_iter().map(|x| x / norm).collect()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub draws: usize,
    /// `‖mean aggregate − ∇f‖ / ‖∇f‖`.
    pub relative_bias: f64,
    /// Empirical `E‖aggregate‖²`.
    pub second_moment: f64,
    /// The analytical bound on `E‖aggregate‖²`.
    pub bound: f64,
    pub constants: TheoryConstants,
    pub true_gradient_norm_sq: f64,
    pub spread_g: f64,
}

impl AggregateReport {
    /// `bound − second_moment`; non-negative when the bound holds.
    pub fn bound_slack(&self) -> f64 {
        self.bound - self.second_moment
    }
}

/// Repeats the full uplink (channel draw, alignment, noisy reception,
/// aggregation) `draws` times for fixed worker gradients.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_statistics(
    geometries: &[WorkerGeometry],
    gradients: &[GradientVector],
    h0: f64,
    p0: f64,
    noise: &NoiseModel,
    draws: usize,
    seed: u64,
) -> Result<AggregateReport> {
    if draws == 0 {
        return Err(Error::Empty("at least one Monte Carlo draw is required"));
    }
    if geometries.len() != gradients.len() {
        return Err(Error::Shape(format!(
            "{} geometries for {} gradients",
            geometries.len(),
            gradients.len()
        )));
    }
    let truth = aggregate(gradients)?;
    let d1 = truth.len();
    let sums = chunked_sum(draws, d1 + 1, |t, acc| {
        let received = gradients
            .iter()
            .zip(geometries)
            .enumerate()
            .map(|(n, (y, geom))| {
                let key = RngStream::new(seed, n as u32, t, Lane::Channel);
                let frame = draw_channel_frame(geom, d1, h0, key)?;
                let plan = make_transmit_plan(&frame, y, p0, h0, geom)?;
                transmit(y, &plan, &frame, noise, key.with_lane(Lane::Noise))
            })
            .collect::<Result<Vec<_>>>()?;
        let agg = aggregate(&received)?;
        for (a, v) in acc.iter_mut().zip(&agg.0) {
            *a += v;
        }
        acc[d1] += agg.norm_sq();
        Ok(())
    })?;
    let m = draws as f64;
    let bias_sq: f64 = sums[..d1].iter().zip(&truth.0).map(|(s, t)| (s / m - t).powi(2)).sum();
    let constants = lemma_constants(geometries, h0, p0)?;
    let spread_g = estimate_g(gradients);
    let truth_sq = truth.norm_sq();
    Ok(AggregateReport {
        draws,
        relative_bias: bias_sq.sqrt() / truth_sq.sqrt(),
        second_moment: sums[d1] / m,
        bound: variance_bound(&constants, d1, noise.variance, spread_g, truth_sq, gradients.len()),
        constants,
        true_gradient_norm_sq: truth_sq,
        spread_g,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvRhoReport {
    pub monte_carlo: f64,
    pub standard_error: f64,
    pub closed_form: f64,
}

impl InvRhoReport {
    pub fn relative_error(&self) -> f64 {
        (self.monte_carlo - self.closed_form).abs() / self.closed_form
    }
}

/// Monte Carlo mean of the realised `ρ⁻²` (zero for a silent worker) against
/// the closed form.
pub fn inv_rho_sq_statistics(
    geom: &WorkerGeometry,
    d1: usize,
    h0: f64,
    p0: f64,
    draws: usize,
    seed: u64,
) -> Result<InvRhoReport> {
    if draws < 2 {
        return Err(Error::Empty("at least two Monte Carlo draws are required"));
    }
    let y = random_unit_gradients(1, d1, seed)?.remove(0);
    let sums = chunked_sum(draws, 2, |t, acc| {
        let frame = draw_channel_frame(geom, d1, h0, RngStream::new(seed, 0, t, Lane::Channel))?;
        let plan = make_transmit_plan(&frame, &y, p0, h0, geom)?;
        acc[0] += plan.inv_alignment_sq;
        acc[1] += plan.inv_alignment_sq * plan.inv_alignment_sq;
        Ok(())
    })?;
    let m = draws as f64;
    let mean = sums[0] / m;
    let var = (sums[1] / m - mean * mean).max(0.0) * m / (m - 1.0);
    Ok(InvRhoReport {
        monte_carlo: mean,
        standard_error: (var / m).sqrt(),
        closed_form: expected_inv_rho_sq(geom, h0, p0)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanReport {
    pub plans: usize,
    pub silent_plans: usize,
    /// Largest `|power − p0| / p0` over non-silent plans.
    pub max_power_error: f64,
    /// Fraction of usages above the threshold.
    pub scheduled_fraction: f64,
    pub scheduling_probability: f64,
}

/// Builds `draws` plans for random gradients and checks each against the
/// power budget; also tallies the threshold mask.
pub fn plan_statistics(
    geom: &WorkerGeometry,
    d1: usize,
    h0: f64,
    p0: f64,
    draws: usize,
    seed: u64,
) -> Result<PlanReport> {
    if draws == 0 {
        return Err(Error::Empty("at least one Monte Carlo draw is required"));
    }
    // [silent, scheduled usages, max power error]
    let per_chunk = map_indexed(CHUNKS.min(draws), |c| -> Result<[f64; 3]> {
        let chunks = CHUNKS.min(draws);
        let mut acc = [0.0; 3];
        for t in draws * c / chunks..draws * (c + 1) / chunks {
            let mut rng = RngStream::new(seed, 0, t as u64, Lane::Diagnostics).generator();
            let y = GradientVector(
                (0..d1)
                    .map(|_| sample_real_gaussian(1.0, &mut rng))
                    .collect::<Result<Vec<_>>>()?,
            );
            let frame = draw_channel_frame(geom, d1, h0, RngStream::new(seed, 0, t as u64, Lane::Channel))?;
            let plan = make_transmit_plan(&frame, &y, p0, h0, geom)?;
            acc[1] += frame.scheduled() as f64;
            if plan.is_silent() {
                acc[0] += 1.0;
            } else {
                acc[2] = acc[2].max((plan.transmit_power(&y) - p0).abs() / p0);
            }
        }
        Ok(acc)
    });
    let mut total = [0.0; 3];
    for chunk in per_chunk {
        let chunk = chunk?;
        total[0] += chunk[0];
        total[1] += chunk[1];
        total[2] = total[2].max(chunk[2]);
    }
    Ok(PlanReport {
        plans: draws,
        silent_plans: total[0] as usize,
        max_power_error: total[2],
        scheduled_fraction: total[1] / (draws * d1) as f64,
        scheduling_probability: scheduling_probability(geom, h0),
    })
}
