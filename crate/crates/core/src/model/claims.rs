//! Claim-size laws: distribution function `G`, exact CDF increments for
//! the nonlocal quadrature, and inverse-CDF sampling.

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Distribution of a single claim size, supported on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ClaimLaw {
    /// Exponential with the given mean.
    Exponential { mean: f64 },
    /// Piecewise-linear CDF through `(nodes[i], cdf[i])`; `cdf` must be
    /// nondecreasing and end at exactly 1. A strictly positive value at the
    /// first node is an atom there — the single permitted discontinuity,
    /// used for degenerate instances such as a point mass at zero.
    TabulatedCdf { nodes: Vec<f64>, cdf: Vec<f64> },
}

impl ClaimLaw {
    /// Point mass at zero: every claim has size zero. Degenerate test law.
    pub fn point_mass_zero() -> Self {
        ClaimLaw::TabulatedCdf { nodes: vec![0.0], cdf: vec![1.0] }
    }

    pub fn tabulated(nodes: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != cdf.len() {
            return Err(Error::Config("tabulated claim CDF needs matching (node, cdf) pairs".into()));
        }
        if nodes[0] < 0.0 {
            return Err(Error::Config("claim sizes are nonnegative".into()));
        }
        if !nodes.windows(2).all(|p| p[1] > p[0]) {
            return Err(Error::Config("claim CDF nodes must be strictly increasing".into()));
        }
        if !cdf.windows(2).all(|p| p[1] >= p[0]) || cdf.iter().any(|v| *v < 0.0 || *v > 1.0) {
            return Err(Error::Config("claim CDF values must be nondecreasing within [0, 1]".into()));
        }
        if (cdf.last().unwrap() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("claim CDF must reach 1 at its last node".into()));
        }
        Ok(ClaimLaw::TabulatedCdf { nodes, cdf })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClaimLaw::Exponential { mean } => {
                if !(mean.is_finite() && *mean > 0.0) {
                    return Err(Error::Config("exponential claim mean must be positive".into()));
                }
                Ok(())
            }
            ClaimLaw::TabulatedCdf { nodes, cdf } => {
                Self::tabulated(nodes.clone(), cdf.clone()).map(|_| ())
            }
        }
    }

    /// `G(u)`: probability a claim is at most `u`. Zero for `u < 0`.
    pub fn cdf(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        match self {
            ClaimLaw::Exponential { mean } => 1.0 - (-u / mean).exp(),
            ClaimLaw::TabulatedCdf { nodes, cdf } => {
                if u >= *nodes.last().unwrap() {
                    return 1.0;
                }
                if u < nodes[0] {
                    return 0.0;
                }
                let idx = match nodes.binary_search_by(|n| n.partial_cmp(&u).unwrap()) {
                    Ok(i) => return cdf[i],
                    Err(i) => i,
                };
                let (a, b) = (nodes[idx - 1], nodes[idx]);
                let frac = (u - a) / (b - a);
                cdf[idx - 1] * (1.0 - frac) + cdf[idx] * frac
            }
        }
    }

    /// Inverse-CDF sample driven by one uniform in (0, 1].
    pub fn sample_from_u(&self, u: f64) -> f64 {
        match self {
            ClaimLaw::Exponential { mean } => -mean * u.ln(),
            ClaimLaw::TabulatedCdf { nodes, cdf } => {
                let p = 1.0 - u; // u in (0,1] -> p in [0,1)
                if p <= cdf[0] {
                    return nodes[0];
                }
                // first index with cdf >= p
                let mut idx = match cdf.binary_search_by(|c| c.partial_cmp(&p).unwrap()) {
                    Ok(i) => i,
                    Err(i) => i,
                };
                idx = idx.min(cdf.len() - 1);
                let (ca, cb) = (cdf[idx - 1], cdf[idx]);
                if cb <= ca {
                    return nodes[idx];
                }
                let frac = (p - ca) / (cb - ca);
                nodes[idx - 1] + frac * (nodes[idx] - nodes[idx - 1])
            }
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        self.sample_from_u(rng.next_uniform())
    }

    /// Mean claim size (exact for the exponential, trapezoid-exact for the
    /// piecewise-linear CDF). Used by the default surplus-truncation rule.
    pub fn mean(&self) -> f64 {
        match self {
            ClaimLaw::Exponential { mean } => *mean,
            ClaimLaw::TabulatedCdf { nodes, cdf } => {
                // E[U] = ∫ (1 - G) du over the support
                let mut acc = nodes[0] * 1.0; // below the first node G = 0
                for i in 0..nodes.len() - 1 {
                    let sbar = 1.0 - 0.5 * (cdf[i] + cdf[i + 1]);
                    acc += sbar * (nodes[i + 1] - nodes[i]);
                }
                acc
            }
        }
    }
}
