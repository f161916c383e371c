//! Claim inter-arrival (waiting-time) laws.
//!
//! A waiting law is specified through its hazard rate `lambda(w)`, the
//! intensity of a claim after `w` units of quiet time. The conditional
//! survival of the *first* waiting time given an elapsed age `w` is
//!
//! ```text
//! S(w, t) = exp(-∫_w^{w+t} lambda(u) du) = Fbar(w+t) / Fbar(w),
//! ```
//!
//! which is all the simulator and the solver ever need.

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Inter-arrival law of the claim counting process.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum WaitingLaw {
    /// Constant intensity `rate`; the counting process is Poisson.
    Exponential { rate: f64 },
    /// Gamma with integer shape: the waiting time is a sum of `shape`
    /// independent exponentials of the given rate. For `shape >= 2` the
    /// intensity vanishes at `w = 0` and is strictly positive after.
    Erlang { shape: u32, rate: f64 },
    /// Piecewise-linear intensity through `(nodes[i], values[i])`. Strict
    /// queries outside `[nodes[0], nodes[last]]` are domain errors; the
    /// clamped accessors extend the endpoint values, which is what the
    /// solver collar and the samplers use (the behaviour of the hazard
    /// beyond the tabulated range is a modelling extension, not data).
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
}

impl WaitingLaw {
    pub fn tabulated(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() || nodes.len() < 2 {
            return Err(Error::Config("tabulated intensity needs >= 2 (node, value) pairs".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::Config("tabulated intensity must start at node 0".into()));
        }
        if !nodes.windows(2).all(|p| p[1] > p[0]) {
            return Err(Error::Config("tabulated intensity nodes must be strictly increasing".into()));
        }
        if !values.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Config("tabulated intensity values must be strictly positive".into()));
        }
        Ok(WaitingLaw::Tabulated { nodes, values })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WaitingLaw::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::Config("exponential waiting rate must be positive".into()));
                }
            }
            WaitingLaw::Erlang { shape, rate } => {
                if *shape == 0 || !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::Config("erlang waiting law needs shape >= 1 and rate > 0".into()));
                }
            }
            WaitingLaw::Tabulated { nodes, values } => {
                Self::tabulated(nodes.clone(), values.clone())?;
            }
        }
        Ok(())
    }

    /// Hazard rate at elapsed age `w`. Strict: `w < 0` is a domain error,
    /// and so is a query beyond a tabulated range.
    pub fn intensity(&self, w: f64) -> Result<f64> {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Domain(format!("intensity queried at negative age {w}")));
        }
        match self {
            WaitingLaw::Exponential { rate } => Ok(*rate),
            WaitingLaw::Erlang { shape, rate } => Ok(erlang_hazard(*shape, *rate, w)),
            WaitingLaw::Tabulated { nodes, values } => {
                let last = *nodes.last().unwrap();
                if w > last + 1e-12 {
                    return Err(Error::Domain(format!(
                        "intensity queried at {w}, beyond tabulated domain end {last}"
                    )));
                }
                Ok(interp_linear(nodes, values, w.min(last)))
            }
        }
    }

    /// Hazard rate with the age clamped into the law's defined range.
    /// Negative ages (the solver's `w`-collar) read the value at 0; ages
    /// beyond a tabulated range read the final value.
    pub fn intensity_clamped(&self, w: f64) -> f64 {
        match self {
            WaitingLaw::Exponential { rate } => *rate,
            WaitingLaw::Erlang { shape, rate } => erlang_hazard(*shape, *rate, w.max(0.0)),
            WaitingLaw::Tabulated { nodes, values } => {
                let last = *nodes.last().unwrap();
                interp_linear(nodes, values, w.clamp(0.0, last))
            }
        }
    }

    /// `∫_a^b lambda(u) du` with the clamped extension, `a <= b`.
    fn integrated_intensity(&self, a: f64, b: f64) -> f64 {
        debug_assert!(b >= a);
        match self {
            WaitingLaw::Exponential { rate } => rate * (b - a),
            WaitingLaw::Erlang { shape, rate } => {
                // exact via the closed-form survival: ∫ lambda = ln Fbar(a) - ln Fbar(b)
                erlang_log_survival(*shape, *rate, a.max(0.0))
                    - erlang_log_survival(*shape, *rate, b.max(0.0))
            }
            WaitingLaw::Tabulated { nodes, values } => {
                tabulated_integral(nodes, values, b) - tabulated_integral(nodes, values, a)
            }
        }
    }

    /// Conditional survival of the first waiting time: probability that no
    /// claim arrives within the next `t` given elapsed age `w`.
    pub fn survival_delayed(&self, w: f64, t: f64) -> Result<f64> {
        if !(w.is_finite() && t.is_finite()) || w < 0.0 || t < 0.0 {
            return Err(Error::Domain(format!("survival_delayed needs w >= 0, t >= 0 (got w={w}, t={t})")));
        }
        Ok((-self.integrated_intensity(w, w + t)).exp())
    }

    /// Inverse-CDF sample of the first waiting time at elapsed age `w`
    /// driven by a single uniform `u` in (0, 1]. Exponential inverts in
    /// closed form; the other laws bisect the integrated intensity.
    pub fn sample_first_waiting_from_u(&self, w: f64, u: f64) -> Result<f64> {
        if w < 0.0 {
            return Err(Error::Domain(format!("sampling needs w >= 0 (got {w})")));
        }
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain(format!("uniform draw {u} outside (0, 1]")));
        }
        let target = -u.ln(); // solve ∫_w^{w+t} lambda = target
        if let WaitingLaw::Exponential { rate } = self {
            return Ok(target / rate);
        }
        // Bracket: the clamped hazard is eventually bounded below by a
        // positive constant, so the integral grows at least linearly.
        let mut hi = 1.0;
        let mut iters = 0;
        while self.integrated_intensity(w, w + hi) < target {
            hi *= 2.0;
            iters += 1;
            if iters > 200 {
                return Err(Error::Numeric("waiting-time inversion failed to bracket".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.integrated_intensity(w, w + mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 * (1.0 + hi) {
                return Ok(0.5 * (lo + hi));
            }
        }
        Err(Error::Numeric("waiting-time inversion did not converge".into()))
    }

    pub fn sample_first_waiting(&self, w: f64, rng: &mut Stream) -> Result<f64> {
        self.sample_first_waiting_from_u(w, rng.next_uniform())
    }

    /// Supremum of the hazard over `[0, hi]`, used by the lower-barrier
    /// constant and the CFL bound. Exact for the constant and tabulated
    /// cases; the Erlang hazard is increasing so the supremum is at `hi`.
    pub fn sup_intensity(&self, hi: f64) -> f64 {
        match self {
            WaitingLaw::Exponential { rate } => *rate,
            WaitingLaw::Erlang { shape, rate } => erlang_hazard(*shape, *rate, hi.max(0.0)),
            WaitingLaw::Tabulated { nodes, values } => {
                let mut sup = f64::NEG_INFINITY;
                for (n, v) in nodes.iter().zip(values) {
                    if *n <= hi + 1e-12 {
                        sup = sup.max(*v);
                    }
                }
                sup.max(self.intensity_clamped(hi))
            }
        }
    }

    /// Density of the (undelayed) waiting time at `u >= 0`.
    pub fn density(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        match self {
            WaitingLaw::Exponential { rate } => rate * (-rate * u).exp(),
            WaitingLaw::Erlang { shape, rate } => erlang_density(*shape, *rate, u),
            WaitingLaw::Tabulated { nodes, values } => {
                let last = *nodes.last().unwrap();
                let lam = interp_linear(nodes, values, u.clamp(0.0, last));
                lam * (-(tabulated_integral(nodes, values, u))).exp()
            }
        }
    }

    /// Unconditional survival `Fbar(t)`.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        (-self.integrated_intensity(0.0, t)).exp()
    }
}

fn erlang_density(shape: u32, rate: f64, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    // rate^k t^{k-1} e^{-rate t} / (k-1)!
    let k = shape as i32;
    let mut log_num = (k as f64) * rate.ln() - rate * t;
    if k > 1 {
        log_num += ((k - 1) as f64) * t.max(f64::MIN_POSITIVE).ln();
    }
    let mut log_fact = 0.0;
    for i in 2..k {
        log_fact += (i as f64).ln();
    }
    if t == 0.0 && k > 1 {
        return 0.0;
    }
    (log_num - log_fact).exp()
}

fn erlang_log_survival(shape: u32, rate: f64, t: f64) -> f64 {
    // Fbar(t) = e^{-rate t} sum_{i<k} (rate t)^i / i!
    if t <= 0.0 {
        return 0.0;
    }
    let x = rate * t;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for i in 1..shape {
        term *= x / i as f64;
        sum += term;
    }
    -x + sum.ln()
}

fn erlang_hazard(shape: u32, rate: f64, t: f64) -> f64 {
    if shape == 1 {
        return rate;
    }
    if t <= 0.0 {
        return 0.0;
    }
    let x = rate * t;
    // f / Fbar = rate x^{k-1}/(k-1)! / sum_{i<k} x^i/i!
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for i in 1..shape {
        term *= x / i as f64;
        sum += term;
    }
    rate * term / sum
}

fn interp_linear(nodes: &[f64], values: &[f64], w: f64) -> f64 {
    let idx = match nodes.binary_search_by(|n| n.partial_cmp(&w).unwrap()) {
        Ok(i) => return values[i],
        Err(i) => i,
    };
    if idx == 0 {
        return values[0];
    }
    if idx >= nodes.len() {
        return *values.last().unwrap();
    }
    let (a, b) = (nodes[idx - 1], nodes[idx]);
    let frac = (w - a) / (b - a);
    values[idx - 1] * (1.0 - frac) + values[idx] * frac
}

/// Exact integral of the piecewise-linear intensity from 0 to `w`, with
/// constant extension outside the table.
fn tabulated_integral(nodes: &[f64], values: &[f64], w: f64) -> f64 {
    if w <= 0.0 {
        return values[0] * w; // constant extension below 0 (collar only)
    }
    let mut acc = 0.0;
    for seg in 0..nodes.len() - 1 {
        let (a, b) = (nodes[seg], nodes[seg + 1]);
        if w <= a {
            return acc;
        }
        let end = w.min(b);
        let va = values[seg];
        let vb = interp_linear(nodes, values, end);
        acc += 0.5 * (va + vb) * (end - a);
        if w <= b {
            return acc;
        }
    }
    // beyond the last node: constant extension
    acc + values.last().unwrap() * (w - nodes.last().unwrap())
}
