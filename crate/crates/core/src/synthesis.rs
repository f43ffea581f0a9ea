//! Static synthesis data: the control Riccati solution, the outer factor of
//! the return difference, the noncausal (clairvoyant) controller and its power
//! floor, and the unconstrained-optimal causal controller.
//!
//! Everything here is independent of the disturbance-shaping fixed point; it
//! is computed once per plant/grid pair and then shared by the iterative
//! solvers.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lti::{
    self, closed_loop, eval_plant, hinf_norm_refined, FrequencyGrid, GridSpectrum, StateSpaceSystem,
};

/// Stabilizing solution of the control Riccati equation
/// `P = I + A'PA - A'PBu (I + Bu'PBu)^{-1} Bu'PA`
/// together with the derived synthesis matrices.
#[derive(Clone, Debug)]
pub struct RiccatiData {
    /// Stabilizing solution `P` (symmetric, `P >= I`).
    pub cost: DMatrix<f64>,
    /// Feedback gain `K`; `u = -K x` is the optimal state feedback.
    pub gain: DMatrix<f64>,
    /// `I + Bu' P Bu`.
    pub input_gram: DMatrix<f64>,
    /// Upper-triangular `U` with `U'U = input_gram`.
    pub input_gram_sqrt: DMatrix<f64>,
    /// `U^{-1}`.
    pub input_gram_sqrt_inv: DMatrix<f64>,
    /// Closed-loop matrix `A - Bu K` (spectral radius < 1).
    pub closed_a: DMatrix<f64>,
    /// Transition matrix of the anticausal (adjoint) system: `(A - Bu K)'`.
    pub adjoint_a: DMatrix<f64>,
    /// Output map of the anticausal system: `-U^{-T} Bu'`.
    pub adjoint_c: DMatrix<f64>,
    /// Input map of the anticausal system: `adjoint_a * P * Bw`.
    pub adjoint_b: DMatrix<f64>,
}

impl RiccatiData {
    /// Residual of the Riccati equation at `cost`.
    pub fn residual(&self, sys: &StateSpaceSystem) -> f64 {
        let a = sys.a();
        let bu = sys.bu();
        let dx = sys.dx();
        let btp = bu.transpose() * &self.cost;
        let mid = &btp * a;
        let correction = mid.transpose()
            * self
                .input_gram
                .clone()
                .lu()
                .solve(&mid)
                .expect("input gram is positive definite");
        let rhs = DMatrix::identity(dx, dx) + a.transpose() * &self.cost * a - correction;
        (&self.cost - rhs).norm()
    }
}

/// Solve the control Riccati equation by structured doubling, then polish by
/// fixed-point iteration (a local contraction around the stabilizing
/// solution).
pub fn solve_lqr_riccati(sys: &StateSpaceSystem) -> Result<RiccatiData> {
    let a = sys.a();
    let bu = sys.bu();
    let dx = sys.dx();
    let du = sys.du();
    let identity = DMatrix::<f64>::identity(dx, dx);

    let mut ak = a.clone();
    let mut gk = bu * bu.transpose();
    let mut hk = identity.clone();
    let mut converged = false;
    for _ in 0..72 {
        let w = &identity + &gk * &hk;
        let lu = w.lu();
        let wia = lu
            .solve(&ak)
            .ok_or_else(|| Error::NotStabilizable("doubling step became singular".into()))?;
        let wig = lu
            .solve(&gk)
            .ok_or_else(|| Error::NotStabilizable("doubling step became singular".into()))?;
        let a_next = &ak * &wia;
        let g_next = &gk + &ak * &wig * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &wia;
        let drift = (&h_next - &hk).norm();
        ak = a_next;
        gk = g_next;
        hk = (&h_next + h_next.transpose()) * 0.5;
        if !hk.iter().all(|v| v.is_finite()) {
            return Err(Error::NotStabilizable(
                "doubling iteration diverged; the pair (A, Bu) is likely not stabilizable".into(),
            ));
        }
        if drift <= 1e-14 * (1.0 + hk.norm()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotStabilizable(
            "doubling iteration did not settle".into(),
        ));
    }

    // Polish: the exact map P -> I + A'PA - A'PBu(I+Bu'PBu)^{-1}Bu'PA
    // contracts near the stabilizing solution.
    let mut p = hk;
    for _ in 0..200 {
        let btp = bu.transpose() * &p;
        let ru = DMatrix::identity(du, du) + &btp * bu;
        let mid = &btp * a;
        let corr = mid.transpose()
            * ru.clone()
                .lu()
                .solve(&mid)
                .ok_or_else(|| Error::NotStabilizable("input gram became singular".into()))?;
        let next = &identity + a.transpose() * &p * a - corr;
        let next = (&next + next.transpose()) * 0.5;
        let step = (&next - &p).norm();
        p = next;
        if step <= 1e-15 * (1.0 + p.norm()) {
            break;
        }
    }

    let btp = bu.transpose() * &p;
    let input_gram = DMatrix::identity(du, du) + &btp * bu;
    let gain = input_gram
        .clone()
        .lu()
        .solve(&(&btp * a))
        .ok_or_else(|| Error::NotStabilizable("input gram became singular".into()))?;
    let closed_a = a - bu * &gain;
    let rho = closed_a
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    if rho >= 1.0 - 1e-9 {
        return Err(Error::NotStabilizable(format!(
            "closed-loop spectral radius {rho:.6} is not inside the unit circle"
        )));
    }
    let chol = input_gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotStabilizable("input gram is not positive definite".into()))?;
    let lower = chol.l();
    let input_gram_sqrt = lower.transpose();
    let input_gram_sqrt_inv = input_gram_sqrt
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotStabilizable("input gram factor is singular".into()))?;
    let adjoint_a = closed_a.transpose();
    // -U^{-T} Bu' = -(L^{-1}) Bu'.
    let adjoint_c = -(input_gram_sqrt_inv.transpose() * bu.transpose());
    let adjoint_b = &adjoint_a * &p * sys.bw();

    Ok(RiccatiData {
        cost: p,
        gain,
        input_gram,
        input_gram_sqrt,
        input_gram_sqrt_inv,
        closed_a,
        adjoint_a,
        adjoint_c,
        adjoint_b,
    })
}

/// State-space realization of a controller `u = K w` mapping the scalar
/// disturbance to the control input.
#[derive(Clone, Debug)]
pub struct StateSpaceController {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpaceController {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Transfer response `D + C (zI - A)^{-1} B` at `z = e^{i omega}`.
    pub fn eval(&self, omega: f64) -> DMatrix<Complex64> {
        let n = self.order();
        let z = Complex64::from_polar(1.0, omega);
        if n == 0 {
            return lti::complexify(&self.d);
        }
        let m = DMatrix::<Complex64>::identity(n, n) * z - lti::complexify(&self.a);
        let x = m
            .lu()
            .solve(&lti::complexify(&self.b))
            .expect("resolvent is regular on the unit circle for a stable realization");
        lti::complexify(&self.d) + lti::complexify(&self.c) * x
    }

    pub fn sample(&self, grid: FrequencyGrid) -> GridSpectrum {
        GridSpectrum::from_fn(grid, self.c.nrows(), self.b.ncols(), |_, w| self.eval(w))
    }

    /// Impulse-response blocks `D, CB, CAB, CA^2B, ...`.
    pub fn markov(&self, count: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return out;
        }
        out.push(self.d.clone());
        let mut state = self.b.clone();
        for _ in 1..count {
            out.push(&self.c * &state);
            state = &self.a * state;
        }
        out
    }

    pub fn spectral_radius(&self) -> f64 {
        if self.order() == 0 {
            return 0.0;
        }
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    /// JSON view of the realization with row-major nested arrays.
    pub fn to_json(&self) -> serde_json::Value {
        let mat = |m: &DMatrix<f64>| -> serde_json::Value {
            serde_json::Value::Array(
                m.row_iter()
                    .map(|row| serde_json::Value::Array(row.iter().map(|v| (*v).into()).collect()))
                    .collect(),
            )
        };
        serde_json::json!({
            "order": self.order(),
            "a": mat(&self.a),
            "b": mat(&self.b),
            "c": mat(&self.c),
            "d": mat(&self.d),
        })
    }
}

/// Everything the iterative solvers need that does not depend on the
/// disturbance weight: plant samples, the Riccati data, the outer loop factor
/// and its inverse, the clairvoyant controller with its pointwise power floor,
/// and the anticausal response kernels.
#[derive(Clone, Debug)]
pub struct SynthesisContext {
    pub sys: StateSpaceSystem,
    pub grid: FrequencyGrid,
    pub riccati: RiccatiData,
    /// `F(z) = (zI - A)^{-1} Bu` samples.
    pub f: GridSpectrum,
    /// `G(z) = (zI - A)^{-1} Bw` samples.
    pub g: GridSpectrum,
    /// Outer factor of the return difference: `U (I + K F)`; its Gram equals
    /// `I + F*F` pointwise.
    pub loop_factor: GridSpectrum,
    pub loop_factor_inv: GridSpectrum,
    /// Clairvoyant (noncausal) controller `-(I + F*F)^{-1} F* G`.
    pub noncausal_controller: GridSpectrum,
    /// Pointwise squared response of the clairvoyant closed loop; no causal
    /// controller can beat this power spectrum at any frequency.
    pub power_floor: Vec<f64>,
    /// Strictly anticausal part of `loop_factor * noncausal_controller`,
    /// in closed form from the Riccati data.
    pub anticausal_base: GridSpectrum,
    /// Kernel mapping a dual vector `v` to the anticausal response
    /// `adjoint_c (e^{-iw}I - adjoint_a)^{-1} v`.
    anticausal_kernel: Vec<DMatrix<Complex64>>,
    /// Quadrature kernel `(I - e^{iw} adjoint_a)^{-1} adjoint_b`.
    dual_kernel: Vec<DMatrix<Complex64>>,
}

impl SynthesisContext {
    pub fn build(sys: StateSpaceSystem, grid: FrequencyGrid) -> Result<Self> {
        let riccati = solve_lqr_riccati(&sys)?;
        let (f, g) = eval_plant(&sys, grid)?;
        let dx = sys.dx();
        let du = sys.du();

        let gain_c = lti::complexify(&riccati.gain);
        let u_c = lti::complexify(&riccati.input_gram_sqrt);
        let loop_factor = GridSpectrum::from_fn(grid, du, du, |k, _| {
            &u_c * (DMatrix::<Complex64>::identity(du, du) + &gain_c * f.value(k))
        });
        // The loop factor has all singular values >= 1, so pointwise inversion
        // is safe.
        let loop_factor_inv = loop_factor.inverse()?;

        // F* G and the induced clairvoyant controller / power floor.
        let fsg = f.adjoint().mul(&g)?;
        let lf_inv_adj = loop_factor_inv.adjoint();
        let whitened = lf_inv_adj.mul(&fsg)?;
        let noncausal_controller = loop_factor_inv.mul(&whitened)?.scale(-1.0);
        let mut power_floor = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let g_sq: f64 = g.value(k).iter().map(|v| v.norm_sqr()).sum();
            let w_sq: f64 = whitened.value(k).iter().map(|v| v.norm_sqr()).sum();
            power_floor.push((g_sq - w_sq).max(0.0));
        }

        let adj_a = lti::complexify(&riccati.adjoint_a);
        let adj_c = lti::complexify(&riccati.adjoint_c);
        let adj_b = lti::complexify(&riccati.adjoint_b);
        let mut anticausal_kernel = Vec::with_capacity(grid.len());
        let mut dual_kernel = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let w = grid.omega(k);
            let zbar = Complex64::from_polar(1.0, -w);
            let m = DMatrix::<Complex64>::identity(dx, dx) * zbar - &adj_a;
            let lu = m.lu();
            let resolvent = lu
                .solve(&DMatrix::<Complex64>::identity(dx, dx))
                .ok_or(Error::SingularSample { omega: w })?;
            anticausal_kernel.push(&adj_c * &resolvent);
            let z = Complex64::from_polar(1.0, w);
            let m2 = DMatrix::<Complex64>::identity(dx, dx) - adj_a.clone() * z;
            dual_kernel.push(
                m2.lu()
                    .solve(&adj_b)
                    .ok_or(Error::SingularSample { omega: w })?,
            );
        }
        let anticausal_base =
            GridSpectrum::from_fn(grid, du, 1, |k, _| &anticausal_kernel[k] * &adj_b);

        Ok(SynthesisContext {
            sys,
            grid,
            riccati,
            f,
            g,
            loop_factor,
            loop_factor_inv,
            noncausal_controller,
            power_floor,
            anticausal_base,
            anticausal_kernel,
            dual_kernel,
        })
    }

    /// Anticausal response of a dual vector: samples of
    /// `adjoint_c (e^{-iw}I - adjoint_a)^{-1} v`.
    pub fn anticausal_response(&self, v: &DMatrix<f64>) -> GridSpectrum {
        let vc = lti::complexify(v);
        GridSpectrum::from_fn(self.grid, self.sys.du(), 1, |k, _| {
            &self.anticausal_kernel[k] * &vc
        })
    }

    /// Grid quadrature mapping a causal scalar factor `L` to the dual vector
    /// `(1/n) sum_k (I - e^{iw_k} adjoint_a)^{-1} adjoint_b L(w_k)`.
    /// The result is real for factors with Hermitian-symmetric samples.
    pub fn dual_vector_from_factor(&self, factor: &GridSpectrum) -> Result<DMatrix<f64>> {
        if factor.grid() != self.grid {
            return Err(Error::GridMismatch(
                "factor sampled on a different grid".into(),
            ));
        }
        let dx = self.sys.dx();
        let mut acc = DMatrix::<Complex64>::zeros(dx, 1);
        for k in 0..self.grid.len() {
            acc += &self.dual_kernel[k] * factor.scalar(k);
        }
        acc /= Complex64::new(self.grid.len() as f64, 0.0);
        let imag = acc.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        let scale = acc.iter().map(|v| v.norm()).fold(0.0, f64::max);
        debug_assert!(
            imag <= 1e-8 * (1.0 + scale),
            "dual vector has imaginary residue {imag}"
        );
        Ok(acc.map(|v| v.re))
    }

    /// Assemble a controller from an anticausal correction `s` and the causal
    /// factor `l` it was computed under: `K = K_free - loop_factor^{-1} s / l`.
    pub fn controller_from_correction(
        &self,
        s: &GridSpectrum,
        l: &GridSpectrum,
    ) -> Result<GridSpectrum> {
        let scaled =
            GridSpectrum::from_fn(self.grid, self.sys.du(), 1, |k, _| s.value(k) / l.scalar(k));
        self.noncausal_controller
            .sub(&self.loop_factor_inv.mul(&scaled)?)
    }

    pub fn closed_loop_with(&self, k: &GridSpectrum) -> Result<GridSpectrum> {
        closed_loop(&self.f, &self.g, k)
    }

    /// Exact closed-loop response at an arbitrary frequency for a rational
    /// controller realization.
    pub fn closed_loop_eval(&self, ctrl: &StateSpaceController, omega: f64) -> DMatrix<Complex64> {
        let dx = self.sys.dx();
        let du = self.sys.du();
        let z = Complex64::from_polar(1.0, omega);
        let a = lti::complexify(self.sys.a());
        let m = DMatrix::<Complex64>::identity(dx, dx) * z - a;
        let lu = m.lu();
        let fw = lu
            .solve(&lti::complexify(self.sys.bu()))
            .expect("plant resolvent is regular off the eigenvalues");
        let gw = lu
            .solve(&lti::complexify(self.sys.bw()))
            .expect("plant resolvent is regular off the eigenvalues");
        let kw = ctrl.eval(omega);
        let top = &fw * &kw + gw;
        let mut out = DMatrix::<Complex64>::zeros(dx + du, 1);
        out.view_mut((0, 0), (dx, 1)).copy_from(&top);
        out.view_mut((dx, 0), (du, 1)).copy_from(&kw);
        out
    }

    /// The unconstrained-optimal causal controller: grid samples and an exact
    /// state-space realization of order `dx`.
    pub fn h2_optimal(&self) -> Result<(GridSpectrum, StateSpaceController)> {
        let ones = GridSpectrum::from_scalar_fn(self.grid, |_, _| Complex64::new(1.0, 0.0));
        let k_grid = self.controller_from_correction(&self.anticausal_base, &ones)?;

        let r = &self.riccati;
        let bu = self.sys.bu();
        let bw = self.sys.bw();
        // Feedthrough and disturbance injection from the Riccati data.
        let btpw = bu.transpose() * &r.cost * bw;
        let d = -(r
            .input_gram
            .clone()
            .lu()
            .solve(&btpw)
            .expect("input gram is positive definite"));
        let b = bw + bu * &d;
        let ctrl = StateSpaceController {
            a: r.closed_a.clone(),
            b,
            c: -r.gain.clone(),
            d,
        };
        Ok((k_grid, ctrl))
    }

    /// Peak closed-loop gain of the unconstrained-optimal controller,
    /// refined off the grid. This is the threshold above which the gain
    /// constraint is inactive.
    pub fn gamma_two(&self) -> Result<f64> {
        let (k_grid, ctrl) = self.h2_optimal()?;
        let t = self.closed_loop_with(&k_grid)?;
        Ok(hinf_norm_refined(&t, |w| self.closed_loop_eval(&ctrl, w)))
    }

    /// Largest value of the pointwise power floor; its square root is an
    /// unbeatable lower bound on the achievable peak gain.
    pub fn floor_sup(&self) -> f64 {
        self.power_floor.iter().copied().fold(0.0, f64::max)
    }
}

/// Joint realization of the closed loop `[state path; input path]` driven by
/// the disturbance, for a plant under a controller produced by this library.
///
/// Every controller built here carries a copy of the plant state as the
/// trailing block of its own state (driven by the same disturbance, the block
/// reproduces the plant state exactly), so the joint response can be read off
/// the controller realization alone. This keeps the realization internally
/// stable even when the open-loop plant is not; a naive plant-plus-controller
/// stack would retain the open-loop eigenvalues as hidden modes and its
/// impulse response would be useless in floating point.
pub fn closed_loop_realization(
    sys: &StateSpaceSystem,
    ctrl: &StateSpaceController,
) -> StateSpaceController {
    let dx = sys.dx();
    let du = sys.du();
    let m = ctrl.order();
    assert!(
        m >= dx,
        "controller of order {m} cannot carry a plant shadow of order {dx}"
    );
    let mut c = DMatrix::<f64>::zeros(dx + du, m);
    c.view_mut((0, m - dx), (dx, dx))
        .copy_from(&DMatrix::identity(dx, dx));
    c.view_mut((dx, 0), (du, m)).copy_from(&ctrl.c);
    let mut d = DMatrix::<f64>::zeros(dx + du, 1);
    d.view_mut((dx, 0), (du, 1)).copy_from(&ctrl.d);
    StateSpaceController {
        a: ctrl.a.clone(),
        b: ctrl.b.clone(),
        c,
        d,
    }
}
