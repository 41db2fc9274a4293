use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("need at least 2 samples for a standard deviation, got {0}")]
    TooFewSamples(usize),
    #[error("sample {0} is not finite")]
    NonFinite(usize),
}

/// Mean and sample standard deviation over repeated trials. `stddev` is
/// absent when only one trial ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub n: usize,
    pub mean: f64,
    pub stddev: Option<f64>,
}

impl TrialStats {
    pub fn single(value: f64) -> Self {
        Self {
            n: 1,
            mean: value,
            stddev: None,
        }
    }

    /// `mean_stddev` for two or more samples, `single` for one.
    pub fn from_samples(samples: &[f64]) -> Result<Self, StatsError> {
        match samples {
            [only] if only.is_finite() => Ok(Self::single(*only)),
            [_] => Err(StatsError::NonFinite(0)),
            _ => mean_stddev(samples),
        }
    }
}

/// Arithmetic mean and sample standard deviation (`n - 1` denominator).
pub fn mean_stddev(samples: &[f64]) -> Result<TrialStats, StatsError> {
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples(n));
    }
    if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
    Ok(TrialStats {
        n,
        mean,
        stddev: Some((ss / (n - 1) as f64).sqrt()),
    })
}
