//! The gain-constrained synthesis iteration.
//!
//! For a peak-gain budget below the unconstrained optimum's peak, the optimal
//! controller is characterized by a positive scalar disturbance weight `N` on
//! the circle that is a fixed point of the composite map
//!
//! ```text
//! N  ->  factor N = |L|^2          (causal factorization)
//!    ->  dual vector from L        (grid quadrature)
//!    ->  anticausal response S     (closed form from the Riccati data)
//!    ->  clip(|S|^2 / (gamma^2 - floor), 1)
//! ```
//!
//! Iterating this map from the flat weight converges (it is a contraction on
//! the relevant region), and the converged data assembles the optimal
//! controller in closed form.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lti::{hinf_norm, GridSpectrum};
use crate::spectral::spectral_factor_grid;
use crate::synthesis::SynthesisContext;

/// Options for the weight iteration.
#[derive(Clone, Debug)]
pub struct FixedPointConfig {
    /// Peak-gain budget.
    pub gamma: f64,
    /// Sup-norm tolerance on successive weights.
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Retain every intermediate state (memory-heavy; for diagnostics).
    pub keep_history: bool,
}

impl FixedPointConfig {
    pub fn new(gamma: f64) -> Self {
        FixedPointConfig {
            gamma,
            tol: 1e-9,
            max_iter: 500,
            keep_history: false,
        }
    }
}

/// A self-consistent snapshot of the iteration.
#[derive(Clone, Debug)]
pub struct IterationState {
    /// Dual vector driving the anticausal response.
    pub dual: DMatrix<f64>,
    /// Disturbance weight samples (real, >= 1).
    pub weight: GridSpectrum,
    /// Causal factor of the weight.
    pub factor: GridSpectrum,
    /// Sweeps performed to reach this state.
    pub iterations: usize,
    /// Last sup-norm change of the weight.
    pub residual: f64,
}

/// One row of the convergence trace (serializable for the CLI).
#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub dual_norm: f64,
    pub weight_min: f64,
    pub weight_max: f64,
    pub active_fraction: f64,
}

/// Result of a converged run.
#[derive(Clone, Debug)]
pub struct FixedPointOutcome {
    pub state: IterationState,
    /// Optimal controller samples under the gain budget.
    pub controller: GridSpectrum,
    /// Closed-loop response samples.
    pub closed_loop: GridSpectrum,
    pub trace: Vec<IterationRecord>,
    pub history: Option<Vec<IterationState>>,
}

/// Residuals of the optimality system at a candidate outcome.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KktReport {
    /// Sup distance between the stored weight and one sweep of the map.
    pub stationarity_gap: f64,
    /// Sup of (weight - 1) * |closed-loop power - budget| / budget^2.
    pub complementarity: f64,
    /// Relative amount by which the closed loop exceeds the budget.
    pub feasibility: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity_gap
            .max(self.complementarity)
            .max(self.feasibility)
    }
}

fn check_budget(ctx: &SynthesisContext, gamma: f64) -> Result<()> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gain budget must be positive, got {gamma}"
        )));
    }
    let g_sq = gamma * gamma;
    for (k, floor) in ctx.power_floor.iter().enumerate() {
        if g_sq <= *floor {
            return Err(Error::GammaTooSmall {
                gamma,
                omega: ctx.grid.omega(k),
            });
        }
    }
    Ok(())
}

/// Clip map: `max(|s|^2 / (gamma^2 - floor), 1)` pointwise.
fn clipped_weight(ctx: &SynthesisContext, gamma: f64, s: &GridSpectrum) -> GridSpectrum {
    let g_sq = gamma * gamma;
    GridSpectrum::from_scalar_fn(ctx.grid, |k, _| {
        let s_sq: f64 = s.value(k).iter().map(|v| v.norm_sqr()).sum();
        let n = (s_sq / (g_sq - ctx.power_floor[k])).max(1.0);
        Complex64::new(n, 0.0)
    })
}

/// One application of the composite weight map.
pub fn sweep(ctx: &SynthesisContext, gamma: f64, weight: &GridSpectrum) -> Result<GridSpectrum> {
    check_budget(ctx, gamma)?;
    let factor = spectral_factor_grid(weight)?;
    let dual = ctx.dual_vector_from_factor(&factor)?;
    let s = ctx.anticausal_response(&dual);
    Ok(clipped_weight(ctx, gamma, &s))
}

fn sup_distance(a: &GridSpectrum, b: &GridSpectrum) -> f64 {
    (0..a.len())
        .map(|k| (a.real_scalar(k) - b.real_scalar(k)).abs())
        .fold(0.0, f64::max)
}

fn active_fraction(weight: &GridSpectrum) -> f64 {
    let active = (0..weight.len())
        .filter(|&k| weight.real_scalar(k) > 1.0 + 1e-12)
        .count();
    active as f64 / weight.len() as f64
}

/// Run the weight iteration to convergence and assemble the controller.
pub fn run(ctx: &SynthesisContext, config: &FixedPointConfig) -> Result<FixedPointOutcome> {
    check_budget(ctx, config.gamma)?;
    let flat = GridSpectrum::from_scalar_fn(ctx.grid, |_, _| Complex64::new(1.0, 0.0));
    let mut weight = flat;
    let mut trace = Vec::new();
    let mut history = config.keep_history.then(Vec::new);
    let mut last = IterationState {
        dual: ctx.riccati.adjoint_b.clone(),
        weight: weight.clone(),
        factor: spectral_factor_grid(&weight)?,
        iterations: 0,
        residual: f64::INFINITY,
    };

    let mut converged = false;
    for iteration in 1..=config.max_iter {
        let factor = spectral_factor_grid(&weight)?;
        let dual = ctx.dual_vector_from_factor(&factor)?;
        let s = ctx.anticausal_response(&dual);
        let next = clipped_weight(ctx, config.gamma, &s);
        let residual = sup_distance(&next, &weight);

        last = IterationState {
            dual,
            weight: next.clone(),
            factor,
            iterations: iteration,
            residual,
        };
        trace.push(IterationRecord {
            iteration,
            residual,
            dual_norm: last.dual.norm(),
            weight_min: (0..next.len())
                .map(|k| next.real_scalar(k))
                .fold(f64::INFINITY, f64::min),
            weight_max: (0..next.len())
                .map(|k| next.real_scalar(k))
                .fold(f64::NEG_INFINITY, f64::max),
            active_fraction: active_fraction(&next),
        });
        if let Some(h) = history.as_mut() {
            h.push(last.clone());
        }
        log::debug!(
            "budget {}: sweep {iteration} residual {residual:.3e}",
            config.gamma
        );
        weight = next;
        if residual <= config.tol {
            converged = true;
            log::info!(
                "budget {}: converged after {iteration} sweeps (residual {residual:.3e})",
                config.gamma
            );
            break;
        }
    }

    // Make the final state self-consistent: refactor the converged weight and
    // regenerate the response from it.
    let factor = spectral_factor_grid(&weight)?;
    let dual = ctx.dual_vector_from_factor(&factor)?;
    let s = ctx.anticausal_response(&dual);
    let state = IterationState {
        dual,
        weight: weight.clone(),
        factor: factor.clone(),
        iterations: last.iterations,
        residual: last.residual,
    };
    let controller = ctx.controller_from_correction(&s, &factor)?;
    let closed_loop = ctx.closed_loop_with(&controller)?;

    if !converged {
        let hinf = hinf_norm(&closed_loop);
        if hinf > config.gamma * (1.0 + 1e-4) {
            return Err(Error::NonConverged {
                gamma: config.gamma,
                detail: format!(
                    "residual {:.3e} after {} sweeps; peak gain {hinf:.6} exceeds the budget",
                    state.residual, config.max_iter
                ),
                best: Some(Box::new(state)),
            });
        }
        return Err(Error::MaxIterExceeded {
            max_iter: config.max_iter,
            residual: state.residual,
            best: Box::new(state),
        });
    }

    Ok(FixedPointOutcome {
        state,
        controller,
        closed_loop,
        trace,
        history,
    })
}

/// Residuals of the optimality system for a run.
pub fn kkt_residual(
    ctx: &SynthesisContext,
    outcome: &FixedPointOutcome,
    gamma: f64,
) -> Result<KktReport> {
    let state = &outcome.state;
    // Stationarity: the stored weight must be a fixed point of the map.
    let mapped = {
        let s = ctx.anticausal_response(&state.dual);
        clipped_weight(ctx, gamma, &s)
    };
    let stationarity_gap = sup_distance(&state.weight, &mapped);

    let g_sq = gamma * gamma;
    let mut complementarity = 0.0f64;
    let mut worst_excess = 0.0f64;
    for k in 0..ctx.grid.len() {
        let power: f64 = outcome
            .closed_loop
            .value(k)
            .iter()
            .map(|v| v.norm_sqr())
            .sum();
        let multiplier = state.weight.real_scalar(k) - 1.0;
        complementarity = complementarity.max(multiplier * (power - g_sq).abs() / g_sq);
        worst_excess = worst_excess.max(power - g_sq * (1.0 + 1e-6) * (1.0 + 1e-6));
    }
    let feasibility = (worst_excess / g_sq).max(0.0);

    Ok(KktReport {
        stationarity_gap,
        complementarity,
        feasibility,
    })
}

/// Estimated contraction factor of one sweep between two random weights.
/// Values below one certify local convergence of the iteration at this budget.
pub fn contraction_ratio(ctx: &SynthesisContext, gamma: f64, seed: u64) -> Result<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // Weights of real systems are even in frequency, so the map's domain is
    // the even positive cone; draw cosine polynomials to stay inside it.
    let mut draw_weight = || {
        let mut cos_c = [0.0f64; 5];
        for c in cos_c.iter_mut() {
            *c = StandardNormal.sample(&mut rng);
        }
        GridSpectrum::from_scalar_fn(ctx.grid, |_, w| {
            let mut q = 0.0;
            for (k, a) in cos_c.iter().enumerate() {
                q += a * (k as f64 * w).cos();
            }
            Complex64::new(1.0 + q.abs(), 0.0)
        })
    };
    let n1 = draw_weight();
    let n2 = draw_weight();
    let before = sup_distance(&n1, &n2);
    if before == 0.0 {
        return Ok(0.0);
    }
    let m1 = sweep(ctx, gamma, &n1)?;
    let m2 = sweep(ctx, gamma, &n2)?;
    Ok(sup_distance(&m1, &m2) / before)
}

/// Feasible upper estimate of the smallest achievable peak gain, located by
/// bisection between the power-floor bound and the unconstrained peak.
pub fn gamma_inf_estimate(ctx: &SynthesisContext) -> Result<f64> {
    let gamma_two = ctx.gamma_two()?;
    let mut lo = ctx.floor_sup().sqrt();
    let mut hi = gamma_two;
    if hi <= lo * (1.0 + 1e-12) {
        return Ok(hi);
    }

    let feasible = |gamma: f64| -> Result<bool> {
        match run(ctx, &FixedPointConfig::new(gamma)) {
            Ok(outcome) => {
                let hinf = hinf_norm(&outcome.closed_loop);
                Ok(hinf <= gamma * (1.0 + 1e-6))
            }
            Err(Error::GammaTooSmall { .. })
            | Err(Error::NonConverged { .. })
            | Err(Error::MaxIterExceeded { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };

    if !feasible(hi)? {
        // The unconstrained peak itself should be feasible; widen defensively.
        let cap = 1e3 * gamma_two;
        loop {
            lo = hi;
            hi *= 2.0;
            if hi > cap {
                return Err(Error::BisectionBracketFailure {
                    lo,
                    hi,
                    detail: "no feasible budget found below 1000x the unconstrained peak".into(),
                });
            }
            if feasible(hi)? {
                break;
            }
        }
    }

    while (hi - lo) / hi > 1e-3 {
        let mid = 0.5 * (hi + lo);
        let ok = feasible(mid)?;
        log::debug!(
            "threshold bisection: budget {mid:.6} {}",
            if ok { "feasible" } else { "infeasible" }
        );
        if ok {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
