//! Pointwise Hamiltonian of the control problem, its exact maximization
//! over the feasible controls, and the nonlocal claim integral.
//!
//! For a state `(s, x, w)`, value `v`, gradient `(v_x, v_w)`, curvatures
//! `(v_xx, v_ww)`, nonlocal value `z` and controls `(gamma, a)`:
//!
//! ```text
//! H = (sigma^2/2) gamma^2 x^2 v_xx + [p + (r + (mu-r) gamma) x - a] v_x
//!     + v_w + lambda(w) z + (a - c v),
//! ```
//!
//! and the viscous variant adds `(eps/2)(v_xx + v_ww)`. `H` is quadratic
//! in `gamma` and affine in `a`, so the supremum over
//! `[0,1] x [0, max_dividend]` is available in closed form: clamp the
//! vertex of the parabola for `gamma`, pick an extreme dividend rate by
//! the sign of `1 - v_x`.

use crate::error::{Error, Result};
use crate::model::{ClaimLaw, ModelParams, State};

/// Value and derivatives of a candidate function at one state point,
/// together with the nonlocal integral evaluated there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivBundle {
    pub v: f64,
    pub v_x: f64,
    pub v_w: f64,
    pub v_xx: f64,
    pub v_ww: f64,
    pub i_delta: f64,
}

impl DerivBundle {
    pub fn is_finite(&self) -> bool {
        self.v.is_finite()
            && self.v_x.is_finite()
            && self.v_w.is_finite()
            && self.v_xx.is_finite()
            && self.v_ww.is_finite()
            && self.i_delta.is_finite()
    }
}

/// A feasible control: invested fraction in `[0, 1]`, dividend rate in
/// `[0, max_dividend]`. The maximizer only ever produces dividend rates
/// in `{0, p, max_dividend}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPair {
    pub gamma: f64,
    pub a: f64,
}

/// Guard tolerances for the closed-form maximizer. The investment formula
/// divides by `x * v_xx`; these keep it away from the singular set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaximizerOptions {
    /// Below this surplus the invested fraction is pinned to 1.
    pub x_tol: f64,
    /// Curvatures above `-curv_tol` are treated as degenerate and the
    /// investment fraction is decided at the endpoints.
    pub curv_tol: f64,
    /// Half-width of the `v_x = 1` band in which the dividend rate takes
    /// the premium value.
    pub tie_tol: f64,
}

impl Default for MaximizerOptions {
    fn default() -> Self {
        MaximizerOptions { x_tol: 1e-6, curv_tol: 1e-6, tie_tol: 1e-6 }
    }
}

/// The Hamiltonian at one point for a fixed control.
pub fn hamiltonian(
    theta: &State,
    d: &DerivBundle,
    ctrl: &ControlPair,
    params: &ModelParams,
    lam: f64,
) -> f64 {
    let ModelParams { premium, interest, drift, volatility, discount, .. } = *params;
    let x = theta.x;
    0.5 * volatility * volatility * ctrl.gamma * ctrl.gamma * x * x * d.v_xx
        + (premium + (interest + (drift - interest) * ctrl.gamma) * x - ctrl.a) * d.v_x
        + d.v_w
        + lam * d.i_delta
        + (ctrl.a - discount * d.v)
}

/// The Hamiltonian plus the artificial-viscosity term
/// `(eps/2)(v_xx + v_ww)`.
pub fn hamiltonian_perturbed(
    theta: &State,
    d: &DerivBundle,
    ctrl: &ControlPair,
    params: &ModelParams,
    lam: f64,
    eps_n: f64,
) -> f64 {
    hamiltonian(theta, d, ctrl, params, lam) + 0.5 * eps_n * (d.v_xx + d.v_ww)
}

/// Closed-form argmax of the perturbed Hamiltonian over the control box.
///
/// Investment: the `gamma`-dependent part is the parabola
/// `q(g) = (sigma^2/2) x^2 v_xx g^2 + (mu - r) x v_x g`. Strictly concave
/// curvature takes the clamped vertex `-(mu-r) v_x / (sigma^2 x v_xx)`;
/// near-zero surplus pins `gamma = 1`; degenerate or convex curvature is
/// decided at the endpoints. Dividends are bang-bang in `1 - v_x` with the
/// premium rate on the tie band.
pub fn maximize_hamiltonian(
    theta: &State,
    d: &DerivBundle,
    params: &ModelParams,
    lam: f64,
    eps_n: f64,
    opts: &MaximizerOptions,
) -> Result<(ControlPair, f64)> {
    if !d.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite derivative bundle at (s={}, x={}, w={})",
            theta.s, theta.x, theta.w
        )));
    }
    let x = theta.x;
    let excess = params.drift - params.interest;
    let sig2 = params.volatility * params.volatility;

    let gamma = if x <= opts.x_tol {
        1.0
    } else if d.v_xx < -opts.curv_tol {
        (-excess * d.v_x / (sig2 * x * d.v_xx)).clamp(0.0, 1.0)
    } else {
        // endpoint argmax of q(g); q(0) = 0
        let q1 = 0.5 * sig2 * x * x * d.v_xx + excess * x * d.v_x;
        if q1 >= 0.0 {
            1.0
        } else {
            0.0
        }
    };

    let a = if d.v_x < 1.0 - opts.tie_tol {
        params.max_dividend
    } else if d.v_x > 1.0 + opts.tie_tol {
        0.0
    } else {
        params.premium
    };

    let ctrl = ControlPair { gamma, a };
    let value = hamiltonian_perturbed(theta, d, &ctrl, params, lam, eps_n);
    Ok((ctrl, value))
}

/// Nonlocal claim integral against the bottom collar slice:
///
/// ```text
/// I[v](s, x, w) = ∫_0^{x+delta} v(s, x - u, -delta) dG(u) - v(s, x, w).
/// ```
///
/// `slice` maps the claim size `u` to the field value `v(s, x-u, -delta)`.
/// The quadrature weights each cell's endpoint average by the exact CDF
/// increment `G(u_{i+1}) - G(u_i)`, which keeps the operator monotone in
/// the field and exact for constant integrands, and needs no density. An
/// empty range (`x + delta <= 0`) contributes only the local term.
pub fn nonlocal_integral(
    slice: impl Fn(f64) -> f64,
    v_here: f64,
    x: f64,
    delta: f64,
    claims: &ClaimLaw,
    n_cells: usize,
) -> f64 {
    let upper = x + delta;
    if upper <= 0.0 {
        return -v_here;
    }
    let n = n_cells.max(1);
    let h = upper / n as f64;
    let mut acc = 0.0;
    // start at the left limit so an atom at zero keeps its mass
    let mut g_lo = 0.0;
    let mut v_lo = slice(0.0);
    for i in 0..n {
        let u_hi = (i + 1) as f64 * h;
        let g_hi = claims.cdf(u_hi);
        let v_hi = slice(u_hi);
        acc += 0.5 * (v_lo + v_hi) * (g_hi - g_lo);
        g_lo = g_hi;
        v_lo = v_hi;
    }
    acc - v_here
}

/// Same quadrature against precomputed node values `slice_vals[i] =
/// v(s, x - i h, -delta)` with `h = (x + delta) / (slice_vals.len()-1)`.
/// Used by the solver, whose bottom-slice nodes align with the cells.
pub fn nonlocal_integral_nodes(slice_vals: &[f64], v_here: f64, x: f64, delta: f64, claims: &ClaimLaw) -> f64 {
    let upper = x + delta;
    if upper <= 0.0 || slice_vals.len() < 2 {
        return -v_here;
    }
    let n = slice_vals.len() - 1;
    let h = upper / n as f64;
    let mut acc = 0.0;
    let mut g_lo = 0.0;
    for i in 0..n {
        let g_hi = claims.cdf((i + 1) as f64 * h);
        acc += 0.5 * (slice_vals[i] + slice_vals[i + 1]) * (g_hi - g_lo);
        g_lo = g_hi;
    }
    acc - v_here
}
