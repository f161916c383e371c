//! Feedback controls extracted from a solved value field.
//!
//! At every in-domain node the argmax of the perturbed Hamiltonian is
//! recomputed from the field's finite-difference derivatives through the
//! same maximizer the solver contract specifies, then tabulated. Lookup
//! interpolates the invested fraction multilinearly; the dividend rate is
//! bang-bang over `{0, premium, max}` and is read off the nearest node —
//! averaging it would manufacture rates outside that set.

use crate::error::Result;
use crate::model::{ClaimLaw, ModelParams, State, WaitingLaw};
use crate::pide::{maximize_hamiltonian, MaximizerOptions};
use crate::solver::{extract_bundle, slab_claim_integrals, NodeClass, ValueField};

/// Tabulated feedback controls over a value field's grid.
#[derive(Debug, Clone)]
pub struct PolicyField {
    pub grid: crate::solver::Grid,
    pub gamma: Vec<f64>,
    pub a: Vec<f64>,
    /// Content hash of the source value field.
    pub provenance: u64,
    /// Nodes whose derivatives were unusable and fell back to (0, 0).
    pub warnings: usize,
}

/// Anything the simulator can follow.
pub trait Policy: Sync {
    /// Control at a state: (invested fraction, dividend rate).
    fn control(&self, s: f64, x: f64, w: f64) -> (f64, f64);
}

/// A constant control, for heuristic benchmarks and degenerate oracles.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy {
    pub gamma: f64,
    pub a: f64,
}

impl Policy for ConstantPolicy {
    fn control(&self, _s: f64, _x: f64, _w: f64) -> (f64, f64) {
        (self.gamma, self.a)
    }
}

/// Extracts the feedback controls from a solved field.
pub fn extract_policy(
    field: &ValueField,
    params: &ModelParams,
    waiting: &WaitingLaw,
    claims: &ClaimLaw,
    opts: &MaximizerOptions,
) -> Result<PolicyField> {
    let g = field.grid.clone();
    let eps_n = field.eps_n;
    let mut gamma = vec![0.0; g.n_nodes()];
    let mut a = vec![0.0; g.n_nodes()];
    let mut warnings = 0usize;
    for i in 0..=g.n_s {
        let conv = slab_claim_integrals(field, claims, i);
        let kt = g.k_top(g.s(i));
        for j in 0..=g.n_x {
            let x = g.x(j);
            for k in 0..=kt.min(g.n_w) {
                let id = g.idx(i, j, k);
                if field.mask[id] == NodeClass::Pinned && x < 0.0 {
                    continue; // ruin collar keeps (0, 0)
                }
                let d = extract_bundle(field, &conv, i, j, k);
                if !d.is_finite() {
                    warnings += 1;
                    continue;
                }
                let theta = State::new(g.s(i), x, g.w(k));
                let lam = waiting.intensity_clamped(g.w(k));
                match maximize_hamiltonian(&theta, &d, params, lam, eps_n, opts) {
                    Ok((ctrl, _)) => {
                        gamma[id] = ctrl.gamma;
                        a[id] = ctrl.a;
                    }
                    Err(_) => warnings += 1,
                }
            }
        }
    }
    Ok(PolicyField { grid: g, gamma, a, provenance: field.content_hash(), warnings })
}

/// Replaces the invested fraction by a moving average over the given
/// index radius (re-clamped to [0, 1]); dividend rates are untouched.
/// Returns the smoothed field and the discrete Lipschitz constant of the
/// smoothed fraction (max slope per unit state distance over grid axes).
pub fn mollify_policy(pf: &PolicyField, radius: usize) -> (PolicyField, f64) {
    let g = pf.grid.clone();
    let mut gamma = pf.gamma.clone();
    if radius > 0 {
        let r = radius as isize;
        for i in 0..=g.n_s {
            let kt = g.k_top(g.s(i));
            for j in 0..=g.n_x {
                for k in 0..=kt {
                    let mut acc = 0.0;
                    let mut n = 0usize;
                    for dj in -r..=r {
                        for dk in -r..=r {
                            let jj = j as isize + dj;
                            let kk = k as isize + dk;
                            if jj < 0 || jj > g.n_x as isize || kk < 0 || kk > kt as isize {
                                continue;
                            }
                            acc += pf.gamma[g.idx(i, jj as usize, kk as usize)];
                            n += 1;
                        }
                    }
                    gamma[g.idx(i, j, k)] = (acc / n as f64).clamp(0.0, 1.0);
                }
            }
        }
    }
    let mut lipschitz: f64 = 0.0;
    for i in 0..=g.n_s {
        let kt = g.k_top(g.s(i));
        for j in 0..=g.n_x {
            for k in 0..=kt {
                let here = gamma[g.idx(i, j, k)];
                if j < g.n_x {
                    lipschitz = lipschitz.max((gamma[g.idx(i, j + 1, k)] - here).abs() / g.dx);
                }
                if k < kt {
                    lipschitz = lipschitz.max((gamma[g.idx(i, j, k + 1)] - here).abs() / g.dw);
                }
            }
        }
    }
    (
        PolicyField {
            grid: g,
            gamma,
            a: pf.a.clone(),
            provenance: pf.provenance,
            warnings: pf.warnings,
        },
        lipschitz,
    )
}

/// Interpolated lookup over a [`PolicyField`].
#[derive(Debug, Clone)]
pub struct FeedbackPolicy {
    pf: PolicyField,
}

impl FeedbackPolicy {
    pub fn new(pf: PolicyField) -> Self {
        FeedbackPolicy { pf }
    }

    pub fn field(&self) -> &PolicyField {
        &self.pf
    }
}

impl Policy for FeedbackPolicy {
    fn control(&self, s: f64, x: f64, w: f64) -> (f64, f64) {
        if x < 0.0 {
            return (0.0, 0.0);
        }
        let g = &self.pf.grid;
        let sf = (s / g.ds).clamp(0.0, g.n_s as f64);
        let xf = ((x + g.delta) / g.dx).clamp(0.0, g.n_x as f64);
        let i0 = (sf.floor() as usize).min(g.n_s - 1);
        let j0 = (xf.floor() as usize).min(g.n_x - 1);
        let fi = sf - i0 as f64;
        let fj = xf - j0 as f64;
        // invested fraction: multilinear with the clock clamped into each
        // slab's staircase
        let mut gm = 0.0;
        for (di, wi) in [(0usize, 1.0 - fi), (1, fi)] {
            let i = i0 + di;
            let kt = g.k_top(g.s(i));
            let wf = ((w + g.delta) / g.dw).clamp(0.0, kt as f64);
            let k0 = (wf.floor() as usize).min(kt.saturating_sub(1));
            let fk = (wf - k0 as f64).clamp(0.0, 1.0);
            let k1 = (k0 + 1).min(kt);
            for (dj, wj) in [(0usize, 1.0 - fj), (1, fj)] {
                let j = j0 + dj;
                let v = self.pf.gamma[g.idx(i, j, k0)] * (1.0 - fk)
                    + self.pf.gamma[g.idx(i, j, k1)] * fk;
                gm += wi * wj * v;
            }
        }
        // dividend rate: nearest node, never averaged
        let i = if fi < 0.5 { i0 } else { i0 + 1 };
        let kt = g.k_top(g.s(i));
        let wf = ((w + g.delta) / g.dw).clamp(0.0, kt as f64);
        let j = if fj < 0.5 { j0 } else { j0 + 1 };
        let k = (wf.round() as usize).min(kt);
        (gm.clamp(0.0, 1.0), self.pf.a[g.idx(i, j, k)])
    }
}

/// Drift, volatility and dividend rate of the closed-loop reserve at a
/// state under a policy.
pub fn closed_loop_coefficients<P: Policy + ?Sized>(
    policy: &P,
    theta: &State,
    params: &ModelParams,
) -> (f64, f64, f64) {
    let (gamma, a) = policy.control(theta.s, theta.x, theta.w);
    let drift =
        params.premium + (params.interest + (params.drift - params.interest) * gamma) * theta.x - a;
    let vol = params.volatility * gamma * theta.x;
    (drift, vol, a)
}

/// Heuristic benchmark set used by the suboptimality sweep.
pub fn heuristic_benchmarks(params: &ModelParams) -> Vec<(String, ConstantPolicy)> {
    vec![
        ("no-invest-full-dividend".into(), ConstantPolicy { gamma: 0.0, a: params.max_dividend }),
        ("full-invest-no-dividend".into(), ConstantPolicy { gamma: 1.0, a: 0.0 }),
        ("half-invest-premium-dividend".into(), ConstantPolicy { gamma: 0.5, a: params.premium }),
        ("full-invest-full-dividend".into(), ConstantPolicy { gamma: 1.0, a: params.max_dividend }),
        ("idle".into(), ConstantPolicy { gamma: 0.0, a: 0.0 }),
    ]
}
