//! Photon-count detection: Poisson counts per outcome, reference
//! experiments, pooled-median threshold and classification.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qsim::Outcome;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("cannot take a threshold from an empty {0} histogram")]
    EmptyHistogram(&'static str),
    #[error("photon model field `{0}` is out of range")]
    InvalidModel(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhotonModel {
    pub mean_bright: f64,
    pub mean_dark: f64,
    pub mean_leaked: f64,
    /// Probability that a `|down>` result is detected through the dark path.
    pub prep_error_down: f64,
    /// Probability that an `|up>` result is detected through the bright path.
    pub prep_error_up: f64,
}

impl Default for PhotonModel {
    fn default() -> Self {
        PhotonModel {
            mean_bright: 13.0,
            mean_dark: 0.14,
            mean_leaked: 1.3,
            prep_error_down: 0.0,
            prep_error_up: 0.0,
        }
    }
}

impl PhotonModel {
    /// Noise-free detector: bright always above any non-negative threshold.
    pub fn perfect() -> Self {
        PhotonModel {
            mean_bright: 1e3,
            mean_dark: 0.0,
            mean_leaked: 0.0,
            prep_error_down: 0.0,
            prep_error_up: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        for (name, m) in [
            ("mean_bright", self.mean_bright),
            ("mean_dark", self.mean_dark),
            ("mean_leaked", self.mean_leaked),
        ] {
            if !m.is_finite() || m < 0.0 {
                return Err(DetectorError::InvalidModel(name));
            }
        }
        for (name, p) in [
            ("prep_error_down", self.prep_error_down),
            ("prep_error_up", self.prep_error_up),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DetectorError::InvalidModel(name));
            }
        }
        Ok(())
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as u32
}

pub fn sample_counts<R: Rng + ?Sized>(outcome: Outcome, m: &PhotonModel, rng: &mut R) -> u32 {
    let effective = match outcome {
        Outcome::Down if m.prep_error_down > 0.0 && rng.random::<f64>() < m.prep_error_down => {
            Outcome::Up
        }
        Outcome::Up if m.prep_error_up > 0.0 && rng.random::<f64>() < m.prep_error_up => {
            Outcome::Down
        }
        o => o,
    };
    let mean = match effective {
        Outcome::Down => m.mean_bright,
        Outcome::Up => m.mean_dark,
        Outcome::Leaked => m.mean_leaked,
    };
    poisson(mean, rng)
}

/// Bright (`|down>` prepared) and dark (`|up>` prepared) reference counts.
pub fn reference_pair<R: Rng + ?Sized>(m: &PhotonModel, rng: &mut R) -> (u32, u32) {
    let bright = sample_counts(Outcome::Down, m, rng);
    let dark = sample_counts(Outcome::Up, m, rng);
    (bright, dark)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountHistogram {
    bins: BTreeMap<u32, u64>,
    total: u64,
}

impl CountHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, count: u32) {
        *self.bins.entry(count).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &CountHistogram) {
        for (&c, &n) in &other.bins {
            *self.bins.entry(c).or_insert(0) += n;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn get(&self, count: u32) -> u64 {
        self.bins.get(&count).copied().unwrap_or(0)
    }

    pub fn max_count(&self) -> Option<u32> {
        self.bins.keys().next_back().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.bins.iter().map(|(&c, &n)| (c, n))
    }

    /// Fraction of entries strictly above `threshold`.
    pub fn fraction_above(&self, threshold: u32) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let above: u64 = self.bins.range(threshold + 1..).map(|(_, n)| n).sum();
        above as f64 / self.total as f64
    }
}

impl FromIterator<u32> for CountHistogram {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        let mut h = CountHistogram::new();
        for c in iter {
            h.record(c);
        }
        h
    }
}

/// Median of the pooled reference histograms; for an even pooled size the
/// lower middle order statistic.
pub fn threshold_from_references(
    bright: &CountHistogram,
    dark: &CountHistogram,
) -> Result<u32, DetectorError> {
    if bright.is_empty() {
        return Err(DetectorError::EmptyHistogram("bright"));
    }
    if dark.is_empty() {
        return Err(DetectorError::EmptyHistogram("dark"));
    }
    let mut pooled = bright.clone();
    pooled.merge(dark);
    // 1-based rank of the lower median
    let rank = pooled.total.div_ceil(2);
    let mut seen = 0;
    for (c, n) in pooled.iter() {
        seen += n;
        if seen >= rank {
            return Ok(c);
        }
    }
    unreachable!("rank never exceeds the pooled total")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Bright,
    Dark,
}

/// `count > threshold` is bright; a count equal to the threshold is dark.
pub fn classify(count: u32, threshold: u32) -> Classification {
    if count > threshold {
        Classification::Bright
    } else {
        Classification::Dark
    }
}
