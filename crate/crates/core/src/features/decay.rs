use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EWMA_LAMBDA: f64 = 0.1;

/// Weighting applied to flip-rate transitions by age.
///
/// Transition index `t = 1` is the most recent transition, `t = m` the
/// oldest of `m` transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DecayKind {
    Constant,
    Linear,
    Exponential,
    Reciprocal,
    ReciprocalSquared,
    Ewma(f64),
}

impl DecayKind {
    /// The decay functions evaluated for the outcome-only experiments.
    pub const ALL: [DecayKind; 6] = [
        DecayKind::Constant,
        DecayKind::Linear,
        DecayKind::Exponential,
        DecayKind::Reciprocal,
        DecayKind::ReciprocalSquared,
        DecayKind::Ewma(DEFAULT_EWMA_LAMBDA),
    ];

    pub fn ewma(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda < 1.0 {
            Ok(DecayKind::Ewma(lambda))
        } else {
            Err(Error::Contract(format!("ewma lambda {lambda} outside (0, 1)")))
        }
    }

    /// Unnormalized weight of transition `t` out of `m`.
    pub fn weight(self, t: usize, m: usize) -> Result<f64> {
        if m == 0 || t == 0 || t > m {
            return Err(Error::Contract(format!(
                "transition index {t} outside 1..={m}"
            )));
        }
        Ok(self.weight_unchecked(t, m))
    }

    pub(crate) fn weight_unchecked(self, t: usize, m: usize) -> f64 {
        let (t, m) = (t as f64, m as f64);
        match self {
            DecayKind::Constant => 1.0,
            DecayKind::Linear => (m - t + 1.0) / m,
            DecayKind::Exponential => (-(t - 1.0) / m).exp(),
            DecayKind::Reciprocal => 1.0 / t,
            DecayKind::ReciprocalSquared => 1.0 / (t * t),
            DecayKind::Ewma(lambda) => (1.0 - lambda).powf(t - 1.0),
        }
    }

    /// Weights for `m` transitions, most recent first, scaled to sum to 1.
    pub fn normalized_weights(self, m: usize) -> Vec<f64> {
        let raw: Vec<f64> = (1..=m).map(|t| self.weight_unchecked(t, m)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Free-function form of [`DecayKind::weight`].
pub fn decay_weight(kind: DecayKind, t: usize, m: usize) -> Result<f64> {
    kind.weight(t, m)
}

impl fmt::Display for DecayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecayKind::Constant => f.write_str("constant"),
            DecayKind::Linear => f.write_str("linear"),
            DecayKind::Exponential => f.write_str("exponential"),
            DecayKind::Reciprocal => f.write_str("reciprocal"),
            DecayKind::ReciprocalSquared => f.write_str("reciprocal_squared"),
            DecayKind::Ewma(l) if *l == DEFAULT_EWMA_LAMBDA => f.write_str("ewma"),
            DecayKind::Ewma(l) => write!(f, "ewma:{l}"),
        }
    }
}

impl FromStr for DecayKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "constant" | "unweighted" => Ok(DecayKind::Constant),
            "linear" => Ok(DecayKind::Linear),
            "exponential" => Ok(DecayKind::Exponential),
            "reciprocal" => Ok(DecayKind::Reciprocal),
            "reciprocal_squared" | "recsq" => Ok(DecayKind::ReciprocalSquared),
            "ewma" => Ok(DecayKind::Ewma(DEFAULT_EWMA_LAMBDA)),
            other => match other.strip_prefix("ewma:") {
                Some(l) => {
                    let lambda: f64 = l
                        .parse()
                        .map_err(|_| Error::Config(format!("invalid ewma lambda {l:?}")))?;
                    DecayKind::ewma(lambda)
                }
                None => Err(Error::Config(format!("unknown decay kind {s:?}"))),
            },
        }
    }
}

impl TryFrom<String> for DecayKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DecayKind> for String {
    fn from(k: DecayKind) -> String {
        k.to_string()
    }
}
