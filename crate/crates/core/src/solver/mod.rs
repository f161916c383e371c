//! Backward time-marching solver for the dynamic-programming PIDE on the
//! collar-extended domain.
//!
//! The equation is solved on `s in [0, T + delta]`, `x in [-delta,
//! x_max]`, `w in [-delta, s + delta]` with boundary data from the
//! boundary construction on the terminal slice, the ruin column, and the
//! region above the clock diagonal. The scheme is explicit and monotone:
//!
//! * drift terms use sign-split first differences;
//! * curvatures use central second differences, with the zero-curvature
//!   closure at the surplus truncation edge;
//! * the clock transport reads upward with the staircase boundary
//!   clamped, which keeps the (characteristic) diagonal boundary inert —
//!   constant-intensity instances stay exactly invariant across clock
//!   slices;
//! * the per-node supremum over controls is exact: the invested fraction
//!   maximizes a clamped quadratic vertex against the endpoints, the
//!   dividend rate is bang-bang over `{0, premium, max}`; a pointwise
//!   max of monotone updates is monotone;
//! * the claim integral uses exact CDF-increment weights against the
//!   solved bottom clock slice, whose nodes align with the surplus grid.
//!
//! A per-slab CFL bound is enforced by sub-stepping; fixed sub-step
//! counts that violate it refuse to run and report the step they would
//! have needed.

mod psi;

pub use psi::{build_psi, validate_psi, Psi, PsiSpec, PsiValidation};

use crate::error::{Error, Result};
use crate::model::{ClaimLaw, ModelParams, State, WaitingLaw};
use rayon::prelude::*;

/// Discretization of the collar-extended domain.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    pub horizon: f64,
    pub delta: f64,
    pub eps_n: f64,
    pub x_max: f64,
    pub n_s: usize,
    pub n_x: usize,
    pub n_w: usize,
    pub ds: f64,
    pub dx: f64,
    pub dw: f64,
}

impl Grid {
    pub fn new(
        horizon: f64,
        delta: f64,
        eps_n: f64,
        x_max: f64,
        n_s: usize,
        n_x: usize,
        n_w: usize,
    ) -> Result<Self> {
        if !(horizon > 0.0 && delta > 0.0 && delta < 1.0 && eps_n > 0.0) {
            return Err(Error::Config(format!(
                "grid needs horizon > 0, 0 < delta < 1, eps_n > 0 (got {horizon}, {delta}, {eps_n})"
            )));
        }
        if x_max <= delta {
            return Err(Error::Config("surplus truncation must exceed the collar".into()));
        }
        if n_s < 2 || n_x < 4 || n_w < 2 {
            return Err(Error::Config("grid too coarse: need n_s >= 2, n_x >= 4, n_w >= 2".into()));
        }
        Ok(Grid {
            horizon,
            delta,
            eps_n,
            x_max,
            n_s,
            n_x,
            n_w,
            ds: (horizon + delta) / n_s as f64,
            dx: (x_max + delta) / n_x as f64,
            dw: (horizon + 2.0 * delta) / n_w as f64,
        })
    }

    /// Default surplus truncation: far enough that the horizon cannot
    /// carry the far boundary's influence back to the query point.
    pub fn default_x_max(params: &ModelParams, claims: &ClaimLaw, x_query_max: f64) -> f64 {
        x_query_max
            + 5.0 * claims.mean()
            + (params.premium + params.drift * x_query_max) * params.horizon
    }

    #[inline]
    pub fn s(&self, i: usize) -> f64 {
        i as f64 * self.ds
    }
    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        -self.delta + j as f64 * self.dx
    }
    #[inline]
    pub fn w(&self, k: usize) -> f64 {
        -self.delta + k as f64 * self.dw
    }

    /// Largest clock index on or below the diagonal `w <= s + delta`.
    pub fn k_top(&self, s: f64) -> usize {
        let k = ((s + 2.0 * self.delta) / self.dw + 1e-12).floor();
        (k.max(0.0) as usize).min(self.n_w)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.n_x + 1) + j) * (self.n_w + 1) + k
    }

    pub fn n_nodes(&self) -> usize {
        (self.n_s + 1) * (self.n_x + 1) * (self.n_w + 1)
    }
}

/// Classification of a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum NodeClass {
    /// Solved by the scheme.
    Interior = 0,
    /// Pinned to the boundary function (terminal slice, ruin column,
    /// above the clock diagonal).
    Pinned = 1,
    /// Surplus truncation edge: solved under the zero-curvature closure.
    EdgeXMax = 2,
}

/// Solved value field over a [`Grid`].
#[derive(Debug, Clone)]
pub struct ValueField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub mask: Vec<NodeClass>,
    pub eps_n: f64,
    pub delta: f64,
}

impl ValueField {
    /// Trilinear interpolation inside the extended domain; queries with
    /// negative surplus return 0 (ruin convention), and queries outside
    /// the clock triangle or the surplus truncation clamp to it.
    ///
    /// Physical queries that land between the ruin collar and the first
    /// interior surplus node extend the interior trend (clamped at 0)
    /// instead of averaging with the collar datum: the collar column
    /// holds boundary scaffolding whose position moves with the collar
    /// width, and mixing it in would make domain-restricted comparisons
    /// across collar widths measure grid geometry rather than the field.
    pub fn eval(&self, s: f64, x: f64, w: f64) -> f64 {
        if x < -1e-12 {
            return 0.0;
        }
        let g = &self.grid;
        let sf = (s / g.ds).clamp(0.0, g.n_s as f64);
        let xf = ((x + g.delta) / g.dx).clamp(0.0, g.n_x as f64);
        let i0 = (sf.floor() as usize).min(g.n_s - 1);
        let j0 = (xf.floor() as usize).min(g.n_x - 1);
        let fi = sf - i0 as f64;
        let fj = xf - j0 as f64;
        let mut out = 0.0;
        for (di, wi) in [(0usize, 1.0 - fi), (1, fi)] {
            let i = i0 + di;
            // clamp the clock into this slab's solved staircase
            let kt = g.k_top(g.s(i));
            let wf = ((w + g.delta) / g.dw).clamp(0.0, kt as f64);
            let k0 = (wf.floor() as usize).min(kt.saturating_sub(1));
            let fk = (wf - k0 as f64).clamp(0.0, 1.0);
            let k1 = (k0 + 1).min(kt);
            let row = |j: usize| {
                self.values[g.idx(i, j, k0)] * (1.0 - fk) + self.values[g.idx(i, j, k1)] * fk
            };
            let v = if j0 == 0 && g.n_x >= 2 {
                let v1 = row(1);
                let v2 = row(2);
                (v1 - (1.0 - fj) * (v2 - v1)).max(0.0)
            } else {
                row(j0) * (1.0 - fj) + row(j0 + 1) * fj
            };
            out += wi * v;
        }
        out
    }

    pub fn value_at(&self, theta: &State) -> f64 {
        self.eval(theta.s, theta.x, theta.w)
    }

    /// FNV-1a over the raw value bits; stamps exported artifacts.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Sub-step policy for the explicit march.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Substeps {
    /// Take as many sub-steps per slab as the CFL bound requires.
    Auto,
    /// Exactly this many sub-steps per slab; refuses to run if the CFL
    /// bound needs more.
    Fixed(usize),
}

/// Options of one backward solve.
#[derive(Debug, Clone)]
pub struct SchemeOptions {
    pub substeps: Substeps,
    /// Run with this fixed control instead of the per-node supremum
    /// (degenerate-oracle instances).
    pub forced_control: Option<(f64, f64)>,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions { substeps: Substeps::Auto, forced_control: None }
    }
}

/// Per-slab CFL rate bound: the largest coefficient sum any node update
/// can place on its own previous value.
fn cfl_rate(grid: &Grid, params: &ModelParams, lam_sup: f64) -> f64 {
    let ModelParams { premium, interest, drift, volatility, discount, max_dividend, .. } = *params;
    let mut rate_max: f64 = 0.0;
    for j in 0..=grid.n_x {
        let x = grid.x(j).max(0.0);
        let drift_abs = (premium + interest * x).max((premium + interest * x - max_dividend).abs())
            + (drift - interest) * x;
        let rate = (volatility * volatility * x * x + grid.eps_n) / (grid.dx * grid.dx)
            + grid.eps_n / (grid.dw * grid.dw)
            + drift_abs / grid.dx
            + 1.0 / grid.dw
            + lam_sup
            + discount;
        rate_max = rate_max.max(rate);
    }
    rate_max
}

/// One explicit sub-step: writes the slab at `s_new = s_cur - h` from the
/// slab at `s_cur`. `conv[j]` must hold the claim integral of the current
/// bottom clock row.
#[allow(clippy::too_many_arguments)]
fn substep(
    grid: &Grid,
    params: &ModelParams,
    waiting: &WaitingLaw,
    cur: &[f64],
    new: &mut [f64],
    conv: &[f64],
    s_cur: f64,
    h: f64,
    psi: &Psi,
    opts: &SchemeOptions,
) {
    let g = grid;
    let s_new = s_cur - h;
    let kt_read = g.k_top(s_cur);
    let kt_write = g.k_top(s_new);
    let nw1 = g.n_w + 1;
    let sig2 = params.volatility * params.volatility;
    let excess = params.drift - params.interest;

    new.par_chunks_mut(nw1).enumerate().for_each(|(j, row)| {
        if j == 0 {
            // ruin column pinned to the boundary function
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = psi.eval(s_new, g.x(0), g.w(k));
            }
            return;
        }
        let x = g.x(j);
        let at_xmax = j == g.n_x;
        for (k, slot) in row.iter_mut().enumerate() {
            if k > kt_write {
                *slot = psi.eval(s_new, x, g.w(k));
                continue;
            }
            let v = cur[j * nw1 + k];
            // clock stencils, staircase-clamped
            let kp = (k + 1).min(kt_read);
            let km = k.saturating_sub(1);
            let v_up = cur[j * nw1 + kp];
            let v_dn = cur[j * nw1 + km];
            let vw = (v_up - v) / g.dw;
            let vww = (v_up - 2.0 * v + v_dn) / (g.dw * g.dw);
            // surplus stencils
            let (vx_f, vx_b, vxx) = if at_xmax {
                (0.0, (v - cur[(j - 1) * nw1 + k]) / g.dx, 0.0)
            } else {
                let v_r = cur[(j + 1) * nw1 + k];
                let v_l = cur[(j - 1) * nw1 + k];
                ((v_r - v) / g.dx, (v - v_l) / g.dx, (v_r - 2.0 * v + v_l) / (g.dx * g.dx))
            };
            let i_delta = conv[j] - v;
            let lam = waiting.intensity_clamped(g.w(k));
            let common =
                0.5 * g.eps_n * (vxx + vww) + vw + lam * i_delta - params.discount * v;

            let quad_a = 0.5 * sig2 * x * x * vxx;
            let quad_b = excess * x * vx_f;
            let update = |a_ctrl: f64, gamma: Option<f64>| -> f64 {
                let b0 = params.premium + params.interest * x - a_ctrl;
                let drift_term = b0.max(0.0) * vx_f + b0.min(0.0) * vx_b;
                let q = match gamma {
                    Some(gm) => quad_a * gm * gm + quad_b * gm,
                    None => {
                        // exact sup over [0, 1] of the quadratic
                        let mut best = 0.0f64.max(quad_a + quad_b);
                        if quad_a < 0.0 {
                            let vertex = (-quad_b / (2.0 * quad_a)).clamp(0.0, 1.0);
                            best = best.max(quad_a * vertex * vertex + quad_b * vertex);
                        }
                        best
                    }
                };
                drift_term + q + a_ctrl + common
            };

            let rhs = match opts.forced_control {
                Some((gm, a)) => update(a, Some(gm)),
                None => {
                    let h0 = update(0.0, None);
                    let hp = update(params.premium, None);
                    let hm = update(params.max_dividend, None);
                    h0.max(hp).max(hm)
                }
            };
            *slot = v + h * rhs;
        }
    });
}

/// Claim-integral row against the bottom clock slice of `cur`: the cells
/// `u_m = m dx` align with the surplus nodes, so the piecewise-linear
/// reconstruction of the slice is exact at the quadrature nodes.
fn conv_row(grid: &Grid, claims: &ClaimLaw, cur: &[f64], conv: &mut [f64]) {
    let g = grid;
    let nw1 = g.n_w + 1;
    let mut dg = vec![0.0; g.n_x + 1];
    // left limit at zero: an atom at zero keeps its mass
    let mut g_lo = 0.0;
    for (m, slot) in dg.iter_mut().enumerate() {
        let g_hi = claims.cdf((m + 1) as f64 * g.dx);
        *slot = g_hi - g_lo;
        g_lo = g_hi;
    }
    conv.par_iter_mut().enumerate().for_each(|(j, slot)| {
        // ∫_0^{x_j + delta} v(s, x_j - u, -delta) dG(u); x_j + delta = j dx
        let mut acc = 0.0;
        for m in 0..j {
            acc += 0.5 * (cur[(j - m) * nw1] + cur[(j - m - 1) * nw1]) * dg[m];
        }
        *slot = acc;
    });
}

/// Solves the PIDE backward from the terminal slice. Returns the full
/// field over the grid.
pub fn solve_backward(
    grid: &Grid,
    psi: &Psi,
    params: &ModelParams,
    waiting: &WaitingLaw,
    claims: &ClaimLaw,
    opts: &SchemeOptions,
) -> Result<ValueField> {
    let g = grid.clone();
    let nw1 = g.n_w + 1;
    let slab_len = (g.n_x + 1) * nw1;
    let lam_sup = waiting.sup_intensity(g.horizon + 2.0 * g.delta);
    let rate = cfl_rate(&g, params, lam_sup);
    let m_needed = (g.ds * rate).ceil() as usize + 1;
    let m_sub = match opts.substeps {
        Substeps::Auto => m_needed,
        Substeps::Fixed(m) => {
            if m < m_needed {
                return Err(Error::Numeric(format!(
                    "CFL violation: {m} sub-steps per slab give step {:.3e}, stability needs <= {:.3e} ({m_needed} sub-steps)",
                    g.ds / m as f64,
                    1.0 / rate
                )));
            }
            m
        }
    };

    let mut values = vec![0.0; g.n_nodes()];
    let mut mask = vec![NodeClass::Interior; g.n_nodes()];

    // terminal slice pinned to the boundary function
    let s_top = g.s(g.n_s);
    for j in 0..=g.n_x {
        for k in 0..=g.n_w {
            let id = g.idx(g.n_s, j, k);
            values[id] = psi.eval(s_top, g.x(j), g.w(k));
            mask[id] = NodeClass::Pinned;
        }
    }
    for i in 0..g.n_s {
        let kt = g.k_top(g.s(i));
        for j in 0..=g.n_x {
            for k in 0..=g.n_w {
                let id = g.idx(i, j, k);
                mask[id] = if j == 0 || k > kt {
                    NodeClass::Pinned
                } else if j == g.n_x {
                    NodeClass::EdgeXMax
                } else {
                    NodeClass::Interior
                };
            }
        }
    }

    let start = g.idx(g.n_s, 0, 0);
    let mut cur = values[start..start + slab_len].to_vec();
    let mut next = vec![0.0; slab_len];
    let mut conv = vec![0.0; g.n_x + 1];

    for i in (0..g.n_s).rev() {
        let s_hi = g.s(i + 1);
        let h = g.ds / m_sub as f64;
        for sub in 0..m_sub {
            let s_cur = s_hi - sub as f64 * h;
            conv_row(&g, claims, &cur, &mut conv);
            substep(&g, params, waiting, &cur, &mut next, &conv, s_cur, h, psi, opts);
            std::mem::swap(&mut cur, &mut next);
        }
        if let Some(bad) = cur.iter().position(|v| !v.is_finite()) {
            let (j, k) = (bad / nw1, bad % nw1);
            return Err(Error::Numeric(format!(
                "non-finite value at slab {i} (s={:.6}), node (x={:.6}, w={:.6})",
                g.s(i),
                g.x(j),
                g.w(k)
            )));
        }
        // re-pin at the exact slab time: sub-step times accumulate float
        // drift that would otherwise leak into the stored boundary data
        let s_i = g.s(i);
        let kt = g.k_top(s_i);
        for (k, slot) in cur.iter_mut().enumerate().take(g.n_w + 1) {
            *slot = psi.eval(s_i, g.x(0), g.w(k));
        }
        for j in 0..=g.n_x {
            for k in kt + 1..=g.n_w {
                cur[j * nw1 + k] = psi.eval(s_i, g.x(j), g.w(k));
            }
        }
        let off = g.idx(i, 0, 0);
        values[off..off + slab_len].copy_from_slice(&cur);
    }

    Ok(ValueField { grid: g, values, mask, eps_n: grid.eps_n, delta: grid.delta })
}

/// Derivative bundle at a grid node by the extraction rules: central
/// differences inside, one-sided at edges, curvature floored, and the
/// claim integral from the slab's bottom clock row.
pub fn extract_bundle(
    field: &ValueField,
    conv: &[f64],
    i: usize,
    j: usize,
    k: usize,
) -> crate::pide::DerivBundle {
    let g = &field.grid;
    let at = |jj: usize, kk: usize| field.values[g.idx(i, jj, kk)];
    let v = at(j, k);
    let kt = g.k_top(g.s(i));
    let (v_x, v_xx) = if j == 0 {
        ((at(1, k) - v) / g.dx, 0.0)
    } else if j == g.n_x {
        ((v - at(j - 1, k)) / g.dx, 0.0)
    } else {
        (
            (at(j + 1, k) - at(j - 1, k)) / (2.0 * g.dx),
            ((at(j + 1, k) - 2.0 * v + at(j - 1, k)) / (g.dx * g.dx)).max(-1e8),
        )
    };
    let (v_w, v_ww) = if k == 0 || k >= kt {
        let kp = (k + 1).min(kt);
        let km = k.saturating_sub(1);
        let span = (kp - km).max(1) as f64 * g.dw;
        ((at(j, kp) - at(j, km)) / span, 0.0)
    } else {
        (
            (at(j, k + 1) - at(j, k - 1)) / (2.0 * g.dw),
            ((at(j, k + 1) - 2.0 * v + at(j, k - 1)) / (g.dw * g.dw)).max(-1e8),
        )
    };
    crate::pide::DerivBundle { v, v_x, v_w, v_xx, v_ww, i_delta: conv[j] - v }
}

/// Claim-integral row of slab `i` of a solved field (bottom clock slice).
pub fn slab_claim_integrals(field: &ValueField, claims: &ClaimLaw, i: usize) -> Vec<f64> {
    let g = &field.grid;
    let off = g.idx(i, 0, 0);
    let slab = &field.values[off..off + (g.n_x + 1) * (g.n_w + 1)];
    let mut conv = vec![0.0; g.n_x + 1];
    conv_row(g, claims, slab, &mut conv);
    conv
}

/// Result of a viscosity/collar refinement study.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RefineReport {
    /// `(eps_n, delta)` per level.
    pub schedule: Vec<(f64, f64)>,
    /// Sup-norm differences between successive levels over the physical
    /// domain probe lattice.
    pub sup_diffs: Vec<f64>,
    pub strictly_decreasing: bool,
}

/// Solves the instance at each `(eps_n, delta)` of the schedule on the
/// same mesh resolution and measures successive sup-norm differences
/// over a fixed probe lattice of the physical domain.
#[allow(clippy::too_many_arguments)]
pub fn refine_study(
    params: &ModelParams,
    waiting: &WaitingLaw,
    claims: &ClaimLaw,
    psi_spec: &PsiSpec,
    schedule: &[(f64, f64)],
    x_max: f64,
    mesh: (usize, usize, usize),
    opts: &SchemeOptions,
) -> Result<RefineReport> {
    if schedule.len() < 2 {
        return Err(Error::Config("refinement schedule needs at least 2 levels".into()));
    }
    let (n_s, n_x, n_w) = mesh;
    let mut fields = Vec::new();
    for &(eps, delta) in schedule {
        let grid = Grid::new(params.horizon, delta, eps, x_max, n_s, n_x, n_w)?;
        let psi = build_psi(psi_spec, params, eps, delta)?;
        fields.push(solve_backward(&grid, &psi, params, waiting, claims, opts)?);
    }
    let (ps, px, pw) = (16usize, 24usize, 16usize);
    let mut sup_diffs = Vec::new();
    for pair in fields.windows(2) {
        let mut sup: f64 = 0.0;
        for a in 0..=ps {
            let s = params.horizon * a as f64 / ps as f64;
            for b in 0..=px {
                let x = (x_max - 1.0) * b as f64 / px as f64;
                for cq in 0..=pw {
                    let w = s * cq as f64 / pw as f64;
                    sup = sup.max((pair[0].eval(s, x, w) - pair[1].eval(s, x, w)).abs());
                }
            }
        }
        sup_diffs.push(sup);
    }
    let strictly_decreasing = sup_diffs.windows(2).all(|p| p[1] < p[0]);
    Ok(RefineReport { schedule: schedule.to_vec(), sup_diffs, strictly_decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> (ModelParams, WaitingLaw, ClaimLaw) {
        (
            ModelParams {
                premium: 1.5,
                interest: 0.03,
                drift: 0.08,
                volatility: 0.3,
                discount: 0.05,
                max_dividend: 2.0,
                horizon: 1.0,
            },
            WaitingLaw::Exponential { rate: 1.0 },
            ClaimLaw::Exponential { mean: 1.0 },
        )
    }

    fn small_grid(params: &ModelParams) -> Grid {
        Grid::new(params.horizon, 0.05, 0.05, 4.0, 12, 24, 12).unwrap()
    }

    #[test]
    fn grid_collar_nodes_exact() {
        let (p, _, _) = reference();
        let g = small_grid(&p);
        assert_eq!(g.x(0), -0.05);
        assert_eq!(g.w(0), -0.05);
        assert!((g.s(g.n_s) - (p.horizon + 0.05)).abs() < 1e-15);
    }

    #[test]
    fn staircase_flags_only_above_diagonal() {
        let (p, _, _) = reference();
        let g = small_grid(&p);
        for i in 0..=g.n_s {
            let kt = g.k_top(g.s(i));
            assert!(g.w(kt) <= g.s(i) + g.delta + 1e-12);
            if kt < g.n_w {
                assert!(g.w(kt + 1) > g.s(i) + g.delta);
            }
        }
    }

    #[test]
    fn one_explicit_step_from_zero_terminal_accrues_cap() {
        // on the all-zero terminal slice every spatial term vanishes and
        // the dividend slope 1 - v_x = 1 picks the cap: one explicit
        // step yields exactly h * max_dividend at interior nodes
        let (p, waiting, claims) = reference();
        let g = Grid::new(p.horizon, 0.05, 0.05, 4.0, 12, 24, 12).unwrap();
        let psi = build_psi(&PsiSpec { zero: true, ..Default::default() }, &p, 0.05, 0.05).unwrap();
        let slab_len = (g.n_x + 1) * (g.n_w + 1);
        let cur = vec![0.0; slab_len];
        let mut out = vec![0.0; slab_len];
        let mut conv = vec![0.0; g.n_x + 1];
        let h = 1e-3;
        conv_row(&g, &claims, &cur, &mut conv);
        substep(&g, &p, &waiting, &cur, &mut out, &conv, g.s(g.n_s), h, &psi, &Default::default());
        let kt = g.k_top(g.s(g.n_s) - h);
        for j in 1..=g.n_x {
            for k in 0..=kt {
                let v = out[j * (g.n_w + 1) + k];
                assert!(
                    (v - h * p.max_dividend).abs() < 1e-15,
                    "step value {v} at ({j},{k}) vs {}",
                    h * p.max_dividend
                );
            }
        }
    }

    #[test]
    fn pinned_nodes_hold_boundary_data() {
        let (p, waiting, claims) = reference();
        let g = small_grid(&p);
        let psi = build_psi(&PsiSpec::default(), &p, g.eps_n, g.delta).unwrap();
        let f = solve_backward(&g, &psi, &p, &waiting, &claims, &Default::default()).unwrap();
        for i in 0..=g.n_s {
            for j in 0..=g.n_x {
                for k in 0..=g.n_w {
                    if f.mask[g.idx(i, j, k)] == NodeClass::Pinned {
                        let want = psi.eval(g.s(i), g.x(j), g.w(k));
                        assert_eq!(f.values[g.idx(i, j, k)], want);
                    }
                }
            }
        }
    }

    #[test]
    fn field_monotone_in_surplus() {
        let (p, waiting, claims) = reference();
        let g = small_grid(&p);
        let psi = build_psi(&PsiSpec::default(), &p, g.eps_n, g.delta).unwrap();
        let f = solve_backward(&g, &psi, &p, &waiting, &claims, &Default::default()).unwrap();
        for i in 0..=g.n_s {
            for k in 0..=g.n_w {
                for j in 1..=g.n_x {
                    let lo = f.values[g.idx(i, j - 1, k)];
                    let hi = f.values[g.idx(i, j, k)];
                    assert!(hi >= lo - 1e-12, "monotonicity violated at ({i},{j},{k}): {lo} > {hi}");
                }
            }
        }
    }

    #[test]
    fn constant_intensity_is_clock_invariant() {
        let (p, waiting, claims) = reference();
        let g = small_grid(&p);
        let psi =
            build_psi(&PsiSpec { w_flat: true, ..Default::default() }, &p, g.eps_n, g.delta).unwrap();
        let f = solve_backward(&g, &psi, &p, &waiting, &claims, &Default::default()).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=g.n_s {
            let kt = g.k_top(g.s(i));
            for j in 0..=g.n_x {
                let base = f.values[g.idx(i, j, 0)];
                for k in 0..=kt {
                    worst = worst.max((f.values[g.idx(i, j, k)] - base).abs());
                }
            }
        }
        assert!(worst <= 1e-10, "clock-slice spread {worst}");
    }

    #[test]
    fn update_is_monotone_under_perturbation() {
        // raising any single node of the read slab never lowers any node
        // of the written slab
        let (p, waiting, claims) = reference();
        let g = Grid::new(p.horizon, 0.05, 0.05, 3.0, 4, 10, 6).unwrap();
        let psi = build_psi(&PsiSpec::default(), &p, g.eps_n, g.delta).unwrap();
        let nw1 = g.n_w + 1;
        let slab_len = (g.n_x + 1) * nw1;
        let mut rng = crate::rng::Stream::new(31, 0);
        let s_cur = 0.6;
        let h = 1e-3;
        let base: Vec<f64> = (0..slab_len).map(|_| rng.next_uniform()).collect();
        let mut conv = vec![0.0; g.n_x + 1];
        let mut out_base = vec![0.0; slab_len];
        conv_row(&g, &claims, &base, &mut conv);
        substep(&g, &p, &waiting, &base, &mut out_base, &conv, s_cur, h, &psi, &Default::default());
        for trial in 0..200 {
            let pos = (rng.next_u64() as usize) % slab_len;
            let mut bumped = base.clone();
            bumped[pos] += 0.1;
            let mut out = vec![0.0; slab_len];
            conv_row(&g, &claims, &bumped, &mut conv);
            substep(&g, &p, &waiting, &bumped, &mut out, &conv, s_cur, h, &psi, &Default::default());
            for idx in 0..slab_len {
                assert!(
                    out[idx] >= out_base[idx] - 1e-12,
                    "trial {trial}: raising node {pos} lowered node {idx}"
                );
            }
        }
    }

    #[test]
    fn fixed_substeps_below_cfl_refuse() {
        let (p, waiting, claims) = reference();
        let g = small_grid(&p);
        let psi = build_psi(&PsiSpec::default(), &p, g.eps_n, g.delta).unwrap();
        let opts = SchemeOptions { substeps: Substeps::Fixed(1), ..Default::default() };
        let err = solve_backward(&g, &psi, &p, &waiting, &claims, &opts).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "wanted CFL refusal, got {err:?}");
        assert!(err.to_string().contains("CFL"));
    }

    #[test]
    fn solve_is_deterministic_across_thread_counts() {
        let (p, waiting, claims) = reference();
        let g = small_grid(&p);
        let psi = build_psi(&PsiSpec::default(), &p, g.eps_n, g.delta).unwrap();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let f1 = pool1
            .install(|| solve_backward(&g, &psi, &p, &waiting, &claims, &Default::default()))
            .unwrap();
        let f4 = pool4
            .install(|| solve_backward(&g, &psi, &p, &waiting, &claims, &Default::default()))
            .unwrap();
        assert_eq!(f1.values, f4.values);
    }

    #[test]
    fn deterministic_annuity_instance_matches_closed_form() {
        // zero-size claims, forced (gamma, a) = (0, premium), premium =
        // cap = 1: the field is the annuity over the remaining horizon
        let p = ModelParams {
            premium: 1.0,
            interest: 0.03,
            drift: 0.08,
            volatility: 0.3,
            discount: 0.1,
            max_dividend: 1.0,
            horizon: 1.0,
        };
        let waiting = WaitingLaw::Exponential { rate: 1.0 };
        let claims = ClaimLaw::point_mass_zero();
        let delta = 0.002;
        let g = Grid::new(p.horizon, delta, 0.002, 4.0, 24, 30, 8).unwrap();
        let psi =
            build_psi(&PsiSpec { zero: true, ..Default::default() }, &p, 0.002, delta).unwrap();
        let opts = SchemeOptions { forced_control: Some((0.0, 1.0)), ..Default::default() };
        let f = solve_backward(&g, &psi, &p, &waiting, &claims, &opts).unwrap();
        let got = f.eval(0.0, 2.0, 0.0);
        let want = (1.0 - (-p.discount * p.horizon).exp()) / p.discount;
        assert!((got - want).abs() < 5e-3, "solver {got} vs closed form {want}");
    }

    #[test]
    fn refine_identical_levels_give_zero_difference() {
        let (p, waiting, claims) = reference();
        let rep = refine_study(
            &p,
            &waiting,
            &claims,
            &PsiSpec::default(),
            &[(0.05, 0.05), (0.05, 0.05)],
            4.0,
            (8, 16, 8),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(rep.sup_diffs, vec![0.0]);
    }

    #[test]
    fn row_quadrature_matches_pointwise_quadrature() {
        // the solver's per-row claim integrals and the public pointwise
        // quadrature are two implementations of the same cell rule
        let (p, _, claims) = reference();
        let g = small_grid(&p);
        let nw1 = g.n_w + 1;
        let slab_len = (g.n_x + 1) * nw1;
        let mut rng = crate::rng::Stream::new(17, 0);
        let slab: Vec<f64> = (0..slab_len).map(|_| rng.next_uniform()).collect();
        let mut conv = vec![0.0; g.n_x + 1];
        conv_row(&g, &claims, &slab, &mut conv);
        for j in [1usize, 5, g.n_x / 2, g.n_x] {
            let x = g.x(j);
            let vals: Vec<f64> = (0..=j).map(|m| slab[(j - m) * nw1]).collect();
            let want =
                crate::pide::nonlocal_integral_nodes(&vals, 0.0, x, g.delta, &claims);
            assert!((conv[j] - want).abs() < 1e-14, "j={j}: {} vs {want}", conv[j]);
        }
    }

    #[test]
    fn eval_outside_conventions() {
        let (p, waiting, claims) = reference();
        let g = small_grid(&p);
        let psi = build_psi(&PsiSpec::default(), &p, g.eps_n, g.delta).unwrap();
        let f = solve_backward(&g, &psi, &p, &waiting, &claims, &Default::default()).unwrap();
        assert_eq!(f.eval(0.2, -0.5, 0.1), 0.0);
        assert!(f.eval(0.0, 2.0, 0.0) > 0.0);
    }
}
