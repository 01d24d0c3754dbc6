use rand::Rng;

use crate::error::ConfigError;

/// Inverted dropout. With `variational` set, one mask is drawn per sequence
/// and reused at every timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
    pub variational: bool,
}

impl Default for DropoutSpec {
    fn default() -> Self {
        Self { rate: 0.5, variational: true }
    }
}

impl DropoutSpec {
    pub fn new(rate: f64, variational: bool) -> Result<Self, ConfigError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(ConfigError::new("dropout", format!("rate must be in [0, 1), got {rate}")));
        }
        Ok(Self { rate, variational })
    }

    /// Draws the mask for a `dim`-wide signal over `len` timesteps.
    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, len: usize, rng: &mut R) -> SequenceMask {
        if self.rate == 0.0 {
            return SequenceMask::Identity;
        }
        if self.variational {
            SequenceMask::Shared(sample_variational_mask(dim, self.rate, rng))
        } else {
            SequenceMask::PerStep((0..len).map(|_| sample_variational_mask(dim, self.rate, rng)).collect())
        }
    }
}

/// Bernoulli(1 - p) keep mask scaled by `1 / (1 - p)`.
pub fn sample_variational_mask<R: Rng + ?Sized>(dim: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; dim];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..dim).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

/// A dropout mask over a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceMask {
    /// Evaluation mode, or rate 0.
    Identity,
    Shared(Vec<f64>),
    PerStep(Vec<Vec<f64>>),
}

impl SequenceMask {
    pub fn at(&self, t: usize) -> Option<&[f64]> {
        match self {
            SequenceMask::Identity => None,
            SequenceMask::Shared(m) => Some(m),
            SequenceMask::PerStep(ms) => Some(&ms[t]),
        }
    }

    /// `x ⊙ mask(t)` in place.
    pub fn apply(&self, t: usize, x: &mut [f64]) {
        if let Some(m) = self.at(t) {
            x.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
        }
    }

    /// Reverses per-step masks so that step `t` of a reversed sequence sees the
    /// mask of original step `n - 1 - t`.
    pub fn reversed(&self) -> SequenceMask {
        match self {
            SequenceMask::PerStep(ms) => SequenceMask::PerStep(ms.iter().rev().cloned().collect()),
            other => other.clone(),
        }
    }
}
