//! Fixed-order rational approximation of the converged disturbance weight and
//! the finite-dimensional controller it induces.
//!
//! A weight `N` on the circle is approximated by a ratio `p/q` of nonnegative
//! trigonometric polynomials of degree `m`, parameterized by a pair of
//! positive semidefinite Gram matrices. Feasibility of a given sup-norm error
//! band is decided by Dykstra's alternating projections onto the semidefinite
//! cone, a trace normalizer, and per-frequency halfspaces; the smallest
//! feasible band is located by bisection. Factoring `p` and `q` exactly then
//! yields a controller with a state-space realization of order
//! `plant order + m`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lti::{FrequencyGrid, GridSpectrum};
use crate::spectral::{polynomial_factor, CausalPolynomial, LaurentPolynomial};
use crate::synthesis::{StateSpaceController, SynthesisContext};

/// Tunables for the feasibility solver and the band bisection.
#[derive(Clone, Debug)]
pub struct RationalApproxConfig {
    /// Lower bound enforced on the denominator polynomial.
    pub denominator_floor: f64,
    /// Constraint violation below which a candidate counts as feasible.
    pub slack: f64,
    /// Hard cap on projection sweeps per feasibility call.
    pub max_sweeps: usize,
    /// Candidate extraction cadence (in sweeps).
    pub check_every: usize,
    /// Consecutive non-improving candidate checks before the solver gives up
    /// on the current band.
    pub plateau_checks: usize,
    /// Relative width at which the band bisection stops.
    pub bisection_rel_width: f64,
}

impl Default for RationalApproxConfig {
    fn default() -> Self {
        RationalApproxConfig {
            denominator_floor: 1e-6,
            slack: 1e-8,
            max_sweeps: 50_000,
            check_every: 20,
            plateau_checks: 300,
            bisection_rel_width: 1e-3,
        }
    }
}

/// Symmetric Gram pair representing `p = <Theta, P>` and `q = <Theta, Q>`
/// with `Theta(w)_{ij} = cos((i-j) w)`.
#[derive(Clone, Debug)]
pub struct GramPair {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl GramPair {
    pub fn degree(&self) -> usize {
        self.p.nrows() - 1
    }

    /// Cosine-series coefficients of `<Theta, M>`: the diagonal sums of `M`.
    fn diagonal_sums(m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut out = vec![0.0; n];
        for d in 0..n {
            for i in d..n {
                out[d] += m[(i, i - d)];
            }
        }
        // <Theta, M> = sum_d cos(dw) * (sum over both d-diagonals); the
        // cosine-series convention c_0 + 2 sum c_d cos(dw) absorbs the factor
        // of two for the off-diagonals, so the sums are used directly.
        out
    }

    pub fn numerator(&self) -> LaurentPolynomial {
        LaurentPolynomial::new(Self::diagonal_sums(&self.p))
    }

    pub fn denominator(&self) -> LaurentPolynomial {
        LaurentPolynomial::new(Self::diagonal_sums(&self.q))
    }
}

/// Raw Gram-matrix iterate `(p, q)` of the projection loop, kept for warm
/// starts before symmetrization into a [`GramPair`].
type RawIterate = (DMatrix<f64>, DMatrix<f64>);

/// Verdict of a feasibility call.
#[derive(Clone, Debug)]
pub enum FeasibilityOutcome {
    Feasible(GramPair),
    /// No candidate satisfied the band; the reported frequency carries the
    /// largest violation of the best candidate seen.
    Infeasible {
        max_violation: f64,
        omega: f64,
    },
}

/// A degree-`m` rational fit `p/q` to a weight, with the band that was
/// requested and the sup error actually measured on the full grid.
#[derive(Clone, Debug)]
pub struct RationalSpectrum {
    pub numerator: LaurentPolynomial,
    pub denominator: LaurentPolynomial,
    /// Band proved feasible by the solver (on the constraint subgrid).
    pub target_eps: f64,
    /// Dense sup-norm error measured against the weight samples.
    pub achieved_eps: f64,
}

impl RationalSpectrum {
    pub fn degree(&self) -> usize {
        self.numerator.degree().max(self.denominator.degree())
    }

    pub fn eval(&self, omega: f64) -> f64 {
        self.numerator.eval(omega) / self.denominator.eval(omega)
    }

    pub fn sample(&self, grid: FrequencyGrid) -> GridSpectrum {
        GridSpectrum::from_scalar_fn(grid, |_, w| Complex64::new(self.eval(w), 0.0))
    }
}

/// Project onto the positive semidefinite cone (eigenvalue clipping).
/// `dst += s * src` without allocating.
fn add_scaled(dst: &mut DMatrix<f64>, s: f64, src: &DMatrix<f64>) {
    dst.zip_apply(src, |d, x| *d += s * x);
}

fn psd_project(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let clipped = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0)));
    let v = &eig.eigenvectors;
    let out = v * clipped * v.transpose();
    (&out + out.transpose()) * 0.5
}

struct ConstraintPoint {
    omega: f64,
    weight: f64,
    /// Toeplitz constraint matrix `Theta` at this frequency.
    theta: DMatrix<f64>,
    theta_norm_sq: f64,
}

/// Scalar Dykstra state for one halfspace `<A, x> <= b` with un-normalized
/// normal `A`; `alpha` is the stored correction in units of `A`.
#[derive(Clone, Copy)]
struct HalfspaceState {
    alpha: f64,
}

struct FeasibilitySolver<'a> {
    points: Vec<ConstraintPoint>,
    m: usize,
    eps: f64,
    config: &'a RationalApproxConfig,
}

impl<'a> FeasibilitySolver<'a> {
    fn new(
        weight: &GridSpectrum,
        m: usize,
        eps: f64,
        config: &'a RationalApproxConfig,
    ) -> Result<Self> {
        let n = weight.len();
        let wanted = (16 * (m + 1)).next_power_of_two();
        let n_c = wanted.min(n);
        let stride = n / n_c;
        if n_c < 4 * (m + 1) {
            return Err(Error::GridTooCoarse {
                n,
                dx: m + 1,
                min: 4 * (m + 1),
            });
        }
        let mut points = Vec::with_capacity(n_c);
        for j in 0..n_c {
            let k = j * stride;
            let omega = weight.grid().omega(k);
            let theta =
                DMatrix::from_fn(m + 1, m + 1, |i, l| ((i as f64 - l as f64) * omega).cos());
            let theta_norm_sq = theta.iter().map(|v| v * v).sum();
            points.push(ConstraintPoint {
                omega,
                weight: weight.real_scalar(k),
                theta,
                theta_norm_sq,
            });
        }
        Ok(FeasibilitySolver {
            points,
            m,
            eps,
            config,
        })
    }

    fn inner(theta: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
        theta.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
    }

    /// Largest constraint violation of a candidate pair; also returns the
    /// frequency where it occurs.
    fn violation(&self, pair: &GramPair) -> (f64, f64) {
        let mut worst = 0.0f64;
        let mut worst_omega = 0.0;
        for pt in &self.points {
            let p = Self::inner(&pt.theta, &pair.p);
            let q = Self::inner(&pt.theta, &pair.q);
            let v = (p - (pt.weight + self.eps) * q)
                .max((pt.weight - self.eps) * q - p)
                .max(self.config.denominator_floor - q);
            if v > worst {
                worst = v;
                worst_omega = pt.omega;
            }
        }
        (worst, worst_omega)
    }

    /// Feasible candidate from the current iterate, if the slack allows one.
    fn candidate(&self, p: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<(GramPair, f64, f64)> {
        let cp = psd_project(p);
        let mut cq = psd_project(q);
        let tr = cq.trace();
        if tr <= 0.0 {
            return None;
        }
        cq /= tr;
        let pair = GramPair { p: cp, q: cq };
        let (v, w) = self.violation(&pair);
        Some((pair, v, w))
    }

    fn toeplitz_init(&self, weight: &GridSpectrum) -> Result<RawIterate> {
        let m = self.m;
        let trunc = LaurentPolynomial::from_spectrum(weight, m)?;
        let mut p = DMatrix::zeros(m + 1, m + 1);
        for i in 0..=m {
            for j in 0..=m {
                let d = i.abs_diff(j);
                p[(i, j)] = trunc.coeffs()[d] / (m + 1 - d) as f64;
            }
        }
        let q = DMatrix::identity(m + 1, m + 1) / (m + 1) as f64;
        Ok((psd_project(&p), q))
    }

    /// Dykstra loop. Returns the outcome and the raw final iterate for warm
    /// starts.
    fn solve(
        &self,
        init: Option<RawIterate>,
        weight: &GridSpectrum,
    ) -> Result<(FeasibilityOutcome, RawIterate)> {
        let m = self.m;
        let (mut p, mut q) = match init {
            Some(pair) => pair,
            None => self.toeplitz_init(weight)?,
        };
        let mut corr_p = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut corr_q = DMatrix::<f64>::zeros(m + 1, m + 1);
        // Three halfspaces per point: upper band, lower band, denominator floor.
        let mut half = vec![HalfspaceState { alpha: 0.0 }; 3 * self.points.len()];

        let mut best: Option<(GramPair, f64, f64)> = None;
        let mut stall_counter = 0usize;
        let mut sweeps_done = 0usize;

        for sweep in 1..=self.config.max_sweeps {
            sweeps_done = sweep;
            // Semidefinite cone (with Dykstra correction).
            let zp = &p + &corr_p;
            let proj_p = psd_project(&zp);
            corr_p = &zp - &proj_p;
            p = proj_p;
            let zq = &q + &corr_q;
            let proj_q = psd_project(&zq);
            corr_q = &zq - &proj_q;
            q = proj_q;

            // Trace normalization (affine; no correction required).
            let shift = (1.0 - q.trace()) / (m + 1) as f64;
            for i in 0..=m {
                q[(i, i)] += shift;
            }

            // Halfspaces with scalar corrections.
            for (j, pt) in self.points.iter().enumerate() {
                // Upper band: <Theta,P> - (w+eps)<Theta,Q> <= 0.
                {
                    let c = -(pt.weight + self.eps);
                    let state = &mut half[3 * j];
                    let norm_sq = pt.theta_norm_sq * (1.0 + c * c);
                    let ip = Self::inner(&pt.theta, &p);
                    let iq = Self::inner(&pt.theta, &q);
                    let val = ip + c * iq + state.alpha * norm_sq;
                    let beta = (val / norm_sq).max(0.0);
                    let delta = state.alpha - beta;
                    if delta != 0.0 {
                        add_scaled(&mut p, delta, &pt.theta);
                        add_scaled(&mut q, delta * c, &pt.theta);
                    }
                    state.alpha = beta;
                }
                // Lower band: -<Theta,P> + (w-eps)<Theta,Q> <= 0.
                {
                    let c = pt.weight - self.eps;
                    let state = &mut half[3 * j + 1];
                    let norm_sq = pt.theta_norm_sq * (1.0 + c * c);
                    let ip = Self::inner(&pt.theta, &p);
                    let iq = Self::inner(&pt.theta, &q);
                    let val = -ip + c * iq + state.alpha * norm_sq;
                    let beta = (val / norm_sq).max(0.0);
                    let delta = state.alpha - beta;
                    if delta != 0.0 {
                        add_scaled(&mut p, -delta, &pt.theta);
                        add_scaled(&mut q, delta * c, &pt.theta);
                    }
                    state.alpha = beta;
                }
                // Denominator floor: -<Theta,Q> <= -floor.
                {
                    let state = &mut half[3 * j + 2];
                    let norm_sq = pt.theta_norm_sq;
                    let iq = Self::inner(&pt.theta, &q);
                    let val = self.config.denominator_floor - iq + state.alpha * norm_sq;
                    let beta = (val / norm_sq).max(0.0);
                    let delta = state.alpha - beta;
                    if delta != 0.0 {
                        add_scaled(&mut q, -delta, &pt.theta);
                    }
                    state.alpha = beta;
                }
            }

            if sweep % self.config.check_every == 0 {
                if let Some((pair, v, w)) = self.candidate(&p, &q) {
                    if v <= self.config.slack {
                        return Ok((FeasibilityOutcome::Feasible(pair), (p, q)));
                    }
                    let improved = match &best {
                        Some((_, bv, _)) => v < bv * (1.0 - 1e-4),
                        None => true,
                    };
                    if improved {
                        best = Some((pair, v, w));
                        stall_counter = 0;
                    } else {
                        stall_counter += 1;
                    }
                    // A long plateau well above the slack is read as evidence
                    // of infeasibility; a plateau close to the slack is an
                    // inconclusive stall.
                    if stall_counter >= self.config.plateau_checks {
                        break;
                    }
                }
            }
        }

        match best {
            Some((_, v, w)) if v > 100.0 * self.config.slack => Ok((
                FeasibilityOutcome::Infeasible {
                    max_violation: v,
                    omega: w,
                },
                (p, q),
            )),
            Some((_, v, _)) => Err(Error::SolverStall {
                sweeps: sweeps_done,
                violation: v,
            }),
            None => Err(Error::SolverStall {
                sweeps: sweeps_done,
                violation: f64::INFINITY,
            }),
        }
    }
}

/// Decide whether the weight admits a degree-`m` rational fit within `eps`
/// on the constraint subgrid.
pub fn feasibility_check(
    weight: &GridSpectrum,
    m: usize,
    eps: f64,
    config: &RationalApproxConfig,
) -> Result<FeasibilityOutcome> {
    let solver = FeasibilitySolver::new(weight, m, eps, config)?;
    solver.solve(None, weight).map(|(outcome, _)| outcome)
}

fn dense_sup_error(weight: &GridSpectrum, pair: &GramPair) -> f64 {
    let p = pair.numerator();
    let q = pair.denominator();
    let mut worst = 0.0f64;
    for k in 0..weight.len() {
        let w = weight.grid().omega(k);
        let err = (p.eval(w) / q.eval(w) - weight.real_scalar(k)).abs();
        worst = worst.max(err);
    }
    worst
}

/// Find (by bisection) the smallest feasible sup-norm band for a degree-`m`
/// rational fit, and return the fit achieving it.
pub fn min_epsilon(
    weight: &GridSpectrum,
    m: usize,
    config: &RationalApproxConfig,
) -> Result<RationalSpectrum> {
    let mut max_w = f64::NEG_INFINITY;
    let mut min_w = f64::INFINITY;
    for k in 0..weight.len() {
        let v = weight.real_scalar(k);
        max_w = max_w.max(v);
        min_w = min_w.min(v);
    }
    if min_w.is_nan() || min_w <= 0.0 {
        return Err(Error::NonPositiveSpectrum(min_w));
    }

    let mut hi = (max_w - min_w).max(1e-9);
    let mut lo = 0.0f64;
    let solver_at = |eps: f64| FeasibilitySolver::new(weight, m, eps, config);

    // The full-range band admits a constant fit, so this must succeed.
    let solver = solver_at(hi)?;
    let (outcome, mut warm) = solver.solve(None, weight)?;
    let mut best_pair = match outcome {
        FeasibilityOutcome::Feasible(pair) => pair,
        FeasibilityOutcome::Infeasible { max_violation, .. } => {
            return Err(Error::BisectionBracketFailure {
                lo,
                hi,
                detail: format!(
                    "full-range band reported infeasible (violation {max_violation:.3e})"
                ),
            });
        }
    };
    let mut best_eps = hi;

    while hi - lo > config.bisection_rel_width * hi + 1e-12 {
        let mid = 0.5 * (hi + lo);
        let solver = solver_at(mid)?;
        match solver.solve(Some(warm.clone()), weight) {
            Ok((FeasibilityOutcome::Feasible(pair), w)) => {
                best_pair = pair;
                best_eps = mid;
                hi = mid;
                warm = w;
            }
            Ok((FeasibilityOutcome::Infeasible { .. }, w)) => {
                lo = mid;
                warm = w;
            }
            // An inconclusive stall is treated as infeasible: the final band
            // stays on the certified side.
            Err(Error::SolverStall { .. }) => {
                lo = mid;
            }
            Err(e) => return Err(e),
        }
    }

    Ok(RationalSpectrum {
        numerator: best_pair.numerator(),
        denominator: best_pair.denominator(),
        target_eps: best_eps,
        achieved_eps: dense_sup_error(weight, &best_pair),
    })
}

/// Impulse response of the rational factor applied to the adjoint dynamics:
/// `Lq(adjoint_a)^{-1} Lp(adjoint_a) adjoint_b`, evaluated exactly.
fn dual_vector_exact(
    ctx: &SynthesisContext,
    lp: &CausalPolynomial,
    lq: &CausalPolynomial,
) -> Result<DMatrix<f64>> {
    let a = &ctx.riccati.adjoint_a;
    let dx = a.nrows();
    let poly_of_a = |c: &CausalPolynomial| {
        let mut acc = DMatrix::<f64>::zeros(dx, dx);
        let mut pow = DMatrix::<f64>::identity(dx, dx);
        for &coeff in c.coeffs() {
            acc += &pow * coeff;
            pow = a * &pow;
        }
        acc
    };
    let mp = poly_of_a(lp);
    let mq = poly_of_a(lq);
    mq.lu()
        .solve(&(&mp * &ctx.riccati.adjoint_b))
        .ok_or_else(|| {
            Error::InvalidArgument("denominator factor is singular on the adjoint dynamics".into())
        })
}

/// Build the controller induced by a rational weight fit: grid samples and an
/// exact state-space realization of order `plant order + m`.
pub fn rational_controller(
    ctx: &SynthesisContext,
    fit: &RationalSpectrum,
) -> Result<(GridSpectrum, StateSpaceController)> {
    let lp = polynomial_factor(&fit.numerator)?;
    let lq = polynomial_factor(&fit.denominator)?;
    let m = lp.degree().max(lq.degree());
    let coeff = |c: &CausalPolynomial, i: usize| c.coeffs().get(i).copied().unwrap_or(0.0);

    let dual = dual_vector_exact(ctx, &lp, &lq)?;
    let s = ctx.anticausal_response(&dual);
    let factor = GridSpectrum::from_scalar_fn(ctx.grid, |_, w| lp.eval_omega(w) / lq.eval_omega(w));
    let k_grid = ctx.controller_from_correction(&s, &factor)?;

    let (_, base) = ctx.h2_optimal()?;
    if m == 0 {
        return Ok((k_grid, base));
    }

    // Polynomial part of the anticausal correction: v_i = adjoint_b lp_i -
    // dual lq_i, folded through the adjoint dynamics.
    let adjoint_b = &ctx.riccati.adjoint_b;
    let a_bar = &ctx.riccati.adjoint_a;
    let v: Vec<DMatrix<f64>> = (0..=m)
        .map(|i| adjoint_b * coeff(&lp, i) - &dual * coeff(&lq, i))
        .collect();
    let mut phi = vec![DMatrix::<f64>::zeros(adjoint_b.nrows(), 1); m];
    phi[m - 1] = v[m].clone();
    for i in (1..m).rev() {
        phi[i - 1] = &v[i] + a_bar * &phi[i];
    }
    let psi: Vec<DMatrix<f64>> = phi.iter().map(|f| &ctx.riccati.adjoint_c * f).collect();
    let psi_scale = psi.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if psi_scale <= 1e-14 * (1.0 + adjoint_b.norm()) {
        return Ok((k_grid, base));
    }

    // Controllable canonical realization of sum(psi_i z^-i) / Lp(z).
    let du = ctx.sys.du();
    let lp0 = lp.coeffs()[0];
    let d_c = &psi[0] / lp0;
    let mut a_c = DMatrix::<f64>::zeros(m, m);
    let mut c_c = DMatrix::<f64>::zeros(du, m);
    for i in 1..=m {
        let a_i = coeff(&lp, i) / lp0;
        a_c[(0, i - 1)] = -a_i;
        let b_i = if i < m {
            &psi[i] / lp0
        } else {
            DMatrix::zeros(du, 1)
        };
        let col = b_i - &d_c * a_i;
        c_c.view_mut((0, i - 1), (du, 1)).copy_from(&col);
    }
    for i in 1..m {
        a_c[(i, i - 1)] = 1.0;
    }
    let mut b_c = DMatrix::<f64>::zeros(m, 1);
    b_c[(0, 0)] = 1.0;

    // Merge with the base controller through the shared closed-loop dynamics.
    let dx = ctx.sys.dx();
    let u_inv = &ctx.riccati.input_gram_sqrt_inv;
    let bu = ctx.sys.bu();
    let bu_u = bu * u_inv;
    let mut a = DMatrix::<f64>::zeros(m + dx, m + dx);
    a.view_mut((0, 0), (m, m)).copy_from(&a_c);
    a.view_mut((m, 0), (dx, m)).copy_from(&(&bu_u * &c_c));
    a.view_mut((m, m), (dx, dx))
        .copy_from(&ctx.riccati.closed_a);
    let mut b = DMatrix::<f64>::zeros(m + dx, 1);
    b.view_mut((0, 0), (m, 1)).copy_from(&b_c);
    b.view_mut((m, 0), (dx, 1))
        .copy_from(&(&base.b + &bu_u * &d_c));
    let mut c = DMatrix::<f64>::zeros(du, m + dx);
    c.view_mut((0, 0), (du, m)).copy_from(&(u_inv * &c_c));
    c.view_mut((0, m), (du, dx))
        .copy_from(&(-&ctx.riccati.gain));
    let d = &base.d + u_inv * &d_c;

    Ok((k_grid, StateSpaceController { a, b, c, d }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::{run, FixedPointConfig};
    use crate::lti::{hinf_norm, StateSpaceSystem};
    use crate::synthesis::SynthesisContext;

    fn grid(n: usize) -> FrequencyGrid {
        FrequencyGrid::new(n).unwrap()
    }

    #[test]
    fn gram_pair_polynomials_match_quadratic_form() {
        // <Theta, M> must equal v(w)* M v(w) for v = (1, e^{iw}, e^{2iw}).
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, -0.2, 0.1, -0.2, 0.7]);
        let pair = GramPair {
            p: m.clone(),
            q: DMatrix::identity(3, 3),
        };
        let poly = pair.numerator();
        for w in [0.0, 0.3, 1.7, 3.0] {
            let v = nalgebra::DVector::from_fn(3, |i, _| Complex64::from_polar(1.0, i as f64 * w));
            let quad: Complex64 = (v.adjoint() * m.map(|x| Complex64::new(x, 0.0)) * &v)[(0, 0)];
            assert!((poly.eval(w) - quad.re).abs() < 1e-12);
            assert!(quad.im.abs() < 1e-12);
        }
    }

    #[test]
    fn constant_weight_is_fit_exactly() {
        let g = grid(256);
        let weight = GridSpectrum::from_scalar_fn(g, |_, _| Complex64::new(2.5, 0.0));
        let fit = min_epsilon(&weight, 0, &RationalApproxConfig::default()).unwrap();
        assert!(fit.achieved_eps < 1e-6, "eps {}", fit.achieved_eps);
        assert!((fit.eval(1.0) - 2.5).abs() < 1e-6);
    }

    #[test]
    fn exactly_rational_weight_is_recovered() {
        let g = grid(256);
        // N = (1.25 + cos w) / (1.09 - 0.6 cos w), both positive.
        let num = LaurentPolynomial::new(vec![1.25, 0.5]);
        let den = LaurentPolynomial::new(vec![1.09, -0.3]);
        let weight =
            GridSpectrum::from_scalar_fn(g, |_, w| Complex64::new(num.eval(w) / den.eval(w), 0.0));
        let fit = min_epsilon(&weight, 1, &RationalApproxConfig::default()).unwrap();
        assert!(fit.achieved_eps < 1e-3, "eps {}", fit.achieved_eps);
        for k in 0..g.len() {
            let w = g.omega(k);
            assert!((fit.eval(w) - weight.real_scalar(k)).abs() < 2e-3);
        }
    }

    #[test]
    fn denominator_respects_floor() {
        let g = grid(256);
        let weight = GridSpectrum::from_scalar_fn(g, |_, w| {
            Complex64::new(1.0 + (w.cos() + 1.0).powi(2), 0.0)
        });
        let config = RationalApproxConfig::default();
        let fit = min_epsilon(&weight, 2, &config).unwrap();
        let min_q = fit.denominator.min_value(2048);
        assert!(min_q >= 0.99 * config.denominator_floor, "min q {min_q}");
    }

    #[test]
    fn higher_degree_never_fits_worse() {
        let g = grid(256);
        let weight =
            GridSpectrum::from_scalar_fn(g, |_, w| Complex64::new((w.cos()).exp() + 0.5, 0.0));
        let config = RationalApproxConfig::default();
        let e1 = min_epsilon(&weight, 1, &config).unwrap().achieved_eps;
        let e3 = min_epsilon(&weight, 3, &config).unwrap().achieved_eps;
        assert!(
            e3 <= e1 * 1.05,
            "degree 3 fit ({e3}) should not lose to degree 1 ({e1})"
        );
        assert!(e3 < e1, "expected strict improvement: {e3} vs {e1}");
    }

    #[test]
    fn infeasible_band_is_detected() {
        let g = grid(256);
        // A sharply peaked weight cannot be matched to 1e-6 by degree 1.
        let weight = GridSpectrum::from_scalar_fn(g, |_, w| {
            Complex64::new(1.0 + 4.0 / (1.02 - w.cos()), 0.0)
        });
        let outcome =
            feasibility_check(&weight, 1, 1e-6, &RationalApproxConfig::default()).unwrap();
        match outcome {
            FeasibilityOutcome::Infeasible { max_violation, .. } => {
                assert!(max_violation > 1e-6);
            }
            FeasibilityOutcome::Feasible(_) => panic!("band should be infeasible"),
        }
    }

    fn constrained_outcome(
        n: usize,
    ) -> (SynthesisContext, f64, crate::fixed_point::FixedPointOutcome) {
        let ctx = SynthesisContext::build(StateSpaceSystem::scalar_demo(), grid(n)).unwrap();
        let gamma_two = ctx.gamma_two().unwrap();
        let gamma = 0.5 * (ctx.floor_sup().sqrt() + gamma_two);
        let outcome = run(&ctx, &FixedPointConfig::new(gamma)).unwrap();
        (ctx, gamma, outcome)
    }

    #[test]
    fn exact_dual_vector_matches_grid_quadrature() {
        let (ctx, _, outcome) = constrained_outcome(512);
        let fit = min_epsilon(&outcome.state.weight, 2, &RationalApproxConfig::default()).unwrap();
        let lp = polynomial_factor(&fit.numerator).unwrap();
        let lq = polynomial_factor(&fit.denominator).unwrap();
        let exact = dual_vector_exact(&ctx, &lp, &lq).unwrap();
        let sampled =
            GridSpectrum::from_scalar_fn(ctx.grid, |_, w| lp.eval_omega(w) / lq.eval_omega(w));
        let quad = ctx.dual_vector_from_factor(&sampled).unwrap();
        assert!(
            (&exact - &quad).norm() < 1e-9 * (1.0 + exact.norm()),
            "exact {exact:?} vs quadrature {quad:?}"
        );
    }

    #[test]
    fn realization_matches_grid_samples() {
        let (ctx, _, outcome) = constrained_outcome(512);
        for m in [1usize, 3] {
            let fit =
                min_epsilon(&outcome.state.weight, m, &RationalApproxConfig::default()).unwrap();
            let (k_grid, ctrl) = rational_controller(&ctx, &fit).unwrap();
            assert!(ctrl.order() <= ctx.sys.dx() + m);
            assert!(ctrl.spectral_radius() < 1.0);
            let sampled = ctrl.sample(ctx.grid);
            let diff = sampled.sub(&k_grid).unwrap();
            assert!(
                diff.max_abs() < 1e-9 * (1.0 + k_grid.max_abs()),
                "degree {m}: mismatch {}",
                diff.max_abs()
            );
            // The merged controller carries the plant shadow in its trailing
            // states, so the joint closed-loop realization must reproduce the
            // pointwise assembly as well.
            let joint = crate::synthesis::closed_loop_realization(&ctx.sys, &ctrl);
            let t_grid = ctx.closed_loop_with(&k_grid).unwrap();
            let jdiff = joint.sample(ctx.grid).sub(&t_grid).unwrap();
            assert!(
                jdiff.max_abs() < 1e-9 * (1.0 + t_grid.max_abs()),
                "degree {m}: joint mismatch {}",
                jdiff.max_abs()
            );
        }
    }

    #[test]
    fn rational_controller_tracks_the_budget() {
        let (ctx, gamma, outcome) = constrained_outcome(512);
        let fit = min_epsilon(&outcome.state.weight, 4, &RationalApproxConfig::default()).unwrap();
        let (k_grid, _) = rational_controller(&ctx, &fit).unwrap();
        let t = ctx.closed_loop_with(&k_grid).unwrap();
        let hinf = hinf_norm(&t);
        // A good weight fit keeps the peak near the budget.
        assert!(
            hinf <= gamma * (1.0 + 10.0 * fit.achieved_eps) + 1e-9,
            "peak {hinf} vs budget {gamma} at eps {}",
            fit.achieved_eps
        );
    }

    #[test]
    fn flat_weight_returns_base_controller() {
        let ctx = SynthesisContext::build(StateSpaceSystem::scalar_demo(), grid(256)).unwrap();
        let weight = GridSpectrum::from_scalar_fn(ctx.grid, |_, _| Complex64::new(1.0, 0.0));
        let fit = min_epsilon(&weight, 2, &RationalApproxConfig::default()).unwrap();
        let (_, ctrl) = rational_controller(&ctx, &fit).unwrap();
        assert_eq!(ctrl.order(), ctx.sys.dx());
    }
}
