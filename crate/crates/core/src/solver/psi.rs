//! The boundary function pinned outside the computational domain.
//!
//! The solve needs Dirichlet data on the collar complement: the terminal
//! slice, the ruin-side column `x = -delta`, and the region above the
//! clock diagonal `w > s + delta`. The data should match the value
//! function where the two meet — zero at ruin and at the horizon — while
//! carrying a slope greater than one across a strip left of `x = 0`.
//!
//! The construction is a product `P(x) * eta(s) * chi(s, w)`:
//!
//! * `P` is zero up to a hair left of the slope strip, climbs at
//!   `slope_b` across `[-x_strip, 0]`, and eases back to a flat cap. The
//!   profile starts well right of `x = -delta`, so the ruin column reads
//!   exactly zero.
//! * `eta` is one up to the horizon and descends to zero at the end of
//!   the terminal collar, so the terminal slice reads exactly zero.
//! * `chi` cuts off at `w = -1` and along `w = s + 1`; the upper cutoff
//!   depends on `s - w` only, so the transport part of the generator
//!   annihilates it. A flat variant (`chi = 1`) exists for instances
//!   that need w-independent boundary data.
//!
//! The widths trade three residual costs against each other in the
//! validation below: the terminal decay rate, the viscosity price of
//! bending the slope back down, and the dividend-drift price of the
//! slope itself. The defaults place the construction at the numerical
//! optimum of that trade-off; see `validate_psi` for what is measured.

use crate::error::{Error, Result};
use crate::model::{ClaimLaw, ModelParams, State, WaitingLaw};
use crate::pide::{hamiltonian_perturbed, nonlocal_integral, ControlPair, DerivBundle};

/// Parameters of the boundary-function construction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsiSpec {
    /// Cap on the sup of the function; building a profile that would
    /// exceed it is a configuration error.
    pub k1: f64,
    /// Plateau slope across the strip; must exceed 1.
    pub slope_b: f64,
    /// Half-width of the slope strip `[-x_strip, 0]`.
    pub x_strip: f64,
    /// Padding added on both sides of the strip before the blends.
    pub x_pad: f64,
    /// Width of the slope ramp-up left of the strip.
    pub x_blend_up: f64,
    /// Width of the slope ramp-down right of the strip. Default scales
    /// as `1.3 sqrt(eps_n * delta)`, balancing viscosity cost against
    /// terminal decay cost.
    pub x_blend_down: Option<f64>,
    /// Width of the terminal descent; defaults to the collar width.
    pub s_ramp: Option<f64>,
    /// Width of the lower w cutoff ramp starting at `w = -1`.
    pub w_ramp_lo: f64,
    /// Width of the upper cutoff ramp below `w = s + 1`.
    pub w_ramp_top: f64,
    /// Replace the w cutoffs by 1 (w-independent boundary data).
    pub w_flat: bool,
    /// Build the zero function instead (degenerate oracle instances).
    pub zero: bool,
}

impl Default for PsiSpec {
    fn default() -> Self {
        PsiSpec {
            k1: 0.5,
            slope_b: 1.05,
            x_strip: 1e-3,
            x_pad: 5e-4,
            x_blend_up: 2e-3,
            x_blend_down: None,
            s_ramp: None,
            w_ramp_lo: 0.5,
            w_ramp_top: 0.5,
            w_flat: false,
            zero: false,
        }
    }
}

/// Quasi-linear C1 ramp from 0 at `t <= 0` to 1 at `t >= 1`; the
/// derivative is a trapezoid with blend fraction `nu`, so the peak slope
/// is `1/(1 - nu)`.
fn qlr(t: f64, nu: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let m = 1.0 / (1.0 - nu);
    if t <= nu {
        0.5 * m * t * t / nu
    } else if t <= 1.0 - nu {
        0.5 * m * nu + m * (t - nu)
    } else {
        1.0 - 0.5 * m * (1.0 - t) * (1.0 - t) / nu
    }
}

/// Built boundary function.
#[derive(Debug, Clone)]
pub struct Psi {
    zero: bool,
    slope: f64,
    x_lo: f64,
    x_hi: f64,
    /// Half-width of the slope strip `[-x_strip, 0]` the validation probes.
    pub x_strip: f64,
    blend_up: f64,
    blend_down: f64,
    horizon: f64,
    s_ramp: f64,
    w_ramp_lo: f64,
    w_ramp_top: f64,
    w_flat: bool,
    pub sup: f64,
}

impl Psi {
    /// x-profile: integral of a sine-eased slope trapezoid. C2 in x.
    fn x_profile(&self, x: f64) -> f64 {
        if self.zero {
            return 0.0;
        }
        let (b, up, dn) = (self.slope, self.blend_up, self.blend_down);
        let x0 = self.x_lo - up;
        if x <= x0 {
            return 0.0;
        }
        let a_up = b * up / 2.0;
        if x <= self.x_lo {
            let t = (x - x0) / up;
            return b * up / 2.0 * (t - (std::f64::consts::PI * t).sin() / std::f64::consts::PI);
        }
        if x <= self.x_hi {
            return a_up + b * (x - self.x_lo);
        }
        let a_mid = b * (self.x_hi - self.x_lo);
        let t = ((x - self.x_hi) / dn).min(1.0);
        a_up + a_mid + b * dn / 2.0 * (t + (std::f64::consts::PI * t).sin() / std::f64::consts::PI)
    }

    fn eta(&self, s: f64) -> f64 {
        if self.zero {
            return 0.0;
        }
        1.0 - qlr((s - self.horizon) / self.s_ramp, 0.04)
    }

    fn chi(&self, s: f64, w: f64) -> f64 {
        if self.w_flat {
            return 1.0;
        }
        qlr((w + 1.0) / self.w_ramp_lo, 0.12) * qlr((s + 1.0 - w) / self.w_ramp_top, 0.12)
    }

    pub fn eval(&self, s: f64, x: f64, w: f64) -> f64 {
        if self.zero {
            return 0.0;
        }
        self.x_profile(x) * self.eta(s) * self.chi(s, w)
    }
}

/// Builds the boundary function for the given collar and viscosity.
pub fn build_psi(spec: &PsiSpec, params: &ModelParams, eps_n: f64, delta: f64) -> Result<Psi> {
    if spec.zero {
        return Ok(Psi {
            zero: true,
            slope: 0.0,
            x_lo: 0.0,
            x_hi: 0.0,
            x_strip: 0.0,
            blend_up: 1.0,
            blend_down: 1.0,
            horizon: params.horizon,
            s_ramp: delta.max(1e-6),
            w_ramp_lo: 1.0,
            w_ramp_top: 1.0,
            w_flat: true,
            sup: 0.0,
        });
    }
    if !(spec.slope_b > 1.0) {
        return Err(Error::Config(format!("boundary slope must exceed 1, got {}", spec.slope_b)));
    }
    if !(spec.k1 > 0.0) {
        return Err(Error::Config("boundary cap k1 must be positive".into()));
    }
    if spec.x_strip <= 0.0 || spec.x_pad < 0.0 || spec.x_blend_up <= 0.0 {
        return Err(Error::Config("boundary ramp widths must be positive".into()));
    }
    let blend_down = spec.x_blend_down.unwrap_or_else(|| (1.3 * (eps_n * delta).sqrt()).max(1e-3));
    let s_ramp = spec.s_ramp.unwrap_or(delta).max(1e-9);
    let x_lo = -(spec.x_strip + spec.x_pad);
    let x_hi = spec.x_pad;
    // the profile must vanish before the ruin column so the pinned data
    // there stays zero
    if x_lo - spec.x_blend_up <= -delta {
        return Err(Error::Config(format!(
            "boundary slope strip reaches the ruin collar: needs x_strip + x_pad + x_blend_up < delta = {delta}"
        )));
    }
    let psi = Psi {
        zero: false,
        slope: spec.slope_b,
        x_lo,
        x_hi,
        x_strip: spec.x_strip,
        blend_up: spec.x_blend_up,
        blend_down,
        horizon: params.horizon,
        s_ramp,
        w_ramp_lo: spec.w_ramp_lo,
        w_ramp_top: spec.w_ramp_top,
        w_flat: spec.w_flat,
        sup: 0.0,
    };
    let sup = psi.x_profile(1e9);
    if sup > spec.k1 {
        return Err(Error::Config(format!(
            "boundary profile sup {sup:.6} exceeds the cap k1 = {}; widen k1 or narrow the ramps",
            spec.k1
        )));
    }
    Ok(Psi { sup, ..psi })
}

/// Outcome of probing the boundary function against its two conditions:
/// the generator residual floor and the strip slope.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PsiValidation {
    /// Minimum over the probe lattice of `psi_t + H^n(.., gamma=0, a=M)`.
    pub min_residual: f64,
    /// Required floor `max_dividend - k2`.
    pub threshold: f64,
    /// `min_residual - threshold`; pass iff nonnegative.
    pub margin: f64,
    pub pass: bool,
    /// Probe point achieving the minimum residual.
    pub worst_at: (f64, f64, f64),
    /// Minimum finite-difference slope over the strip probes.
    pub slope_min: f64,
    /// Strip slope exceeds 1.
    pub slope_pass: bool,
}

/// Probes `psi_t + H^n(theta, psi, grad, curvatures, I[psi], 0, M)` over
/// a lattice on the unit-collar extension and reports the worst residual
/// against the floor `max_dividend - k2`, plus the finite-difference
/// slope across the strip. Report-only: callers decide what to gate on.
#[allow(clippy::too_many_arguments)]
pub fn validate_psi(
    psi: &Psi,
    params: &ModelParams,
    waiting: &WaitingLaw,
    claims: &ClaimLaw,
    eps_n: f64,
    delta: f64,
    k2: f64,
    x_max: f64,
) -> Result<PsiValidation> {
    if !(k2 > 0.0 && k2 < params.max_dividend) {
        return Err(Error::Config(format!(
            "validation margin k2 must lie in (0, max_dividend), got {k2}"
        )));
    }
    let t_hor = params.horizon;
    let h = 1e-5;
    let h2 = 5e-4;
    let eval = |s: f64, x: f64, w: f64| psi.eval(s, x, w);

    // probe lattice: coarse global cover plus refinement where the
    // profile is active (the needle in x, the terminal ramp in s, the w
    // cutoffs)
    let mut s_probes: Vec<f64> = Vec::new();
    for i in 0..=24 {
        s_probes.push(1e-3 + (t_hor - 1e-3) * i as f64 / 24.0);
    }
    for i in 0..=40 {
        s_probes.push(t_hor + psi.s_ramp * i as f64 / 40.0);
    }
    for i in 1..=6 {
        s_probes.push(t_hor + delta + (1.0 - delta) * i as f64 / 6.0);
    }
    let mut x_probes: Vec<f64> = Vec::new();
    for i in 0..=24 {
        x_probes.push(-1.0 + (x_max + 1.0) * i as f64 / 24.0);
    }
    let (x_act_lo, x_act_hi) = (psi.x_lo - psi.blend_up - 0.02, psi.x_hi + psi.blend_down + 0.03);
    for i in 0..=80 {
        x_probes.push(x_act_lo + (x_act_hi - x_act_lo) * i as f64 / 80.0);
    }

    let mut min_residual = f64::INFINITY;
    let mut worst_at = (0.0, 0.0, 0.0);
    for &s in &s_probes {
        let mut w_probes: Vec<f64> = Vec::new();
        for i in 0..=14 {
            w_probes.push(-1.0 + (s + 2.0) * i as f64 / 14.0);
        }
        for i in 0..=4 {
            w_probes.push(-1.0 + psi.w_ramp_lo * i as f64 / 4.0);
            w_probes.push(s + 1.0 - psi.w_ramp_top * i as f64 / 4.0);
        }
        for &x in &x_probes {
            for &w in &w_probes {
                let v = eval(s, x, w);
                let d = DerivBundle {
                    v,
                    v_x: (eval(s, x + h, w) - eval(s, x - h, w)) / (2.0 * h),
                    v_w: (eval(s, x, w + h) - eval(s, x, w - h)) / (2.0 * h),
                    v_xx: (eval(s, x + h2, w) - 2.0 * v + eval(s, x - h2, w)) / (h2 * h2),
                    v_ww: (eval(s, x, w + h2) - 2.0 * v + eval(s, x, w - h2)) / (h2 * h2),
                    i_delta: nonlocal_integral(|u| eval(s, x - u, -delta), v, x, delta, claims, 48),
                };
                let psi_t = (eval(s + h, x, w) - eval(s - h, x, w)) / (2.0 * h);
                let lam = waiting.intensity_clamped(w);
                let ctrl = ControlPair { gamma: 0.0, a: params.max_dividend };
                let theta = State::new(s, x, w);
                let res = psi_t + hamiltonian_perturbed(&theta, &d, &ctrl, params, lam, eps_n);
                if res < min_residual {
                    min_residual = res;
                    worst_at = (s, x, w);
                }
            }
        }
    }

    // strip slope b: finite differences across [-x_strip, 0] x (0, T] x [0, s]
    let mut slope_min = f64::INFINITY;
    if psi.zero {
        slope_min = 0.0;
    } else {
        for i in 0..=12 {
            let s = 1e-3 + (t_hor - 1e-3) * i as f64 / 12.0;
            for jj in 0..=8 {
                let x = -psi.x_strip * jj as f64 / 8.0;
                for kk in 0..=4 {
                    let w = s * kk as f64 / 4.0;
                    let slope = (eval(s, x + h, w) - eval(s, x - h, w)) / (2.0 * h);
                    slope_min = slope_min.min(slope);
                }
            }
        }
    }

    let threshold = params.max_dividend - k2;
    let margin = min_residual - threshold;
    Ok(PsiValidation {
        min_residual,
        threshold,
        margin,
        pass: margin >= 0.0,
        worst_at,
        slope_min,
        slope_pass: slope_min > 1.0,
    })
}
