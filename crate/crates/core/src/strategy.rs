//! Blind threshold policies: accept the `i`-th observation iff it is the
//! largest seen so far and strictly exceeds `tau_i`.

use serde::{Deserialize, Serialize};

use crate::decision::DecisionNumbers;
use crate::distributions::{product_max_augmented_quantile, product_max_quantile, AugmentedValue, Distribution};
use crate::error::{domain, Error, Result};

/// Per-position acceptance thresholds. The last `skip_tail` positions never
/// accept, whatever their threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds<T> {
    values: Vec<T>,
    skip_tail: usize,
}

impl<T: PartialOrd + Copy> Thresholds<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        Self::with_skip_tail(values, 0)
    }

    pub fn with_skip_tail(values: Vec<T>, skip_tail: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(domain("thresholds need a positive horizon"));
        }
        if skip_tail > values.len() {
            return Err(domain("cannot skip more positions than the horizon"));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(domain("thresholds must be nonincreasing"));
        }
        Ok(Self { values, skip_tail })
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn skip_tail(&self) -> usize {
        self.skip_tail
    }

    /// Whether position `i` (zero-based) may accept at all.
    #[inline]
    pub fn may_accept(&self, i: usize) -> bool {
        i + self.skip_tail < self.values.len()
    }
}

fn check_dims(dists: &[Distribution], d: &DecisionNumbers) -> Result<()> {
    if dists.len() != d.horizon() {
        return Err(domain(format!(
            "{} distributions but {} decision numbers",
            dists.len(),
            d.horizon()
        )));
    }
    Ok(())
}

fn target(d: &DecisionNumbers, i: usize) -> f64 {
    d.get(i).powi(d.horizon() as i32)
}

/// `tau_i` with `Pr[max_k X_k <= tau_i] = d_i^n`.
pub fn thresholds_from_decision_numbers(dists: &[Distribution], d: &DecisionNumbers) -> Result<Thresholds<f64>> {
    check_dims(dists, d)?;
    let values = (0..d.horizon())
        .map(|i| product_max_quantile(dists, target(d, i)))
        .collect::<Result<Vec<_>>>()?;
    Thresholds::new(values)
}

/// As [`thresholds_from_decision_numbers`], in the lexicographic
/// `(value, tiebreak)` space used for laws with atoms.
pub fn augmented_thresholds_from_decision_numbers(
    dists: &[Distribution],
    d: &DecisionNumbers,
) -> Result<Thresholds<AugmentedValue>> {
    check_dims(dists, d)?;
    let values = (0..d.horizon())
        .map(|i| product_max_augmented_quantile(dists, target(d, i)))
        .collect::<Result<Vec<_>>>()?;
    Thresholds::new(values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

/// Running state of one episode.
#[derive(Clone, Debug)]
pub struct PolicyState<T> {
    next: usize,
    running_max: Option<T>,
    accepted: Option<usize>,
}

impl<T: PartialOrd + Copy> Default for PolicyState<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: PartialOrd + Copy> PolicyState<T> {
    pub fn new() -> Self {
        Self { next: 0, running_max: None, accepted: None }
    }

    pub fn running_max(&self) -> Option<T> {
        self.running_max
    }

    pub fn accepted(&self) -> Option<usize> {
        self.accepted
    }

    /// Feeds observation `i` (zero-based). Steps must arrive in order.
    /// After an acceptance every later observation is rejected.
    pub fn step(&mut self, i: usize, observation: T, thresholds: &Thresholds<T>) -> Result<Decision> {
        if i != self.next {
            return Err(Error::Usage(format!("expected step {}, got {i}", self.next)));
        }
        if i >= thresholds.horizon() {
            return Err(Error::Usage(format!("step {i} beyond horizon {}", thresholds.horizon())));
        }
        self.next += 1;
        let is_record = self.running_max.is_none_or(|m| observation > m);
        if is_record {
            self.running_max = Some(observation);
        }
        if self.accepted.is_some() {
            return Ok(Decision::Reject);
        }
        if is_record && thresholds.may_accept(i) && observation > thresholds.values[i] {
            self.accepted = Some(i);
            Ok(Decision::Accept)
        } else {
            Ok(Decision::Reject)
        }
    }
}

/// Result of one presentation of `n` draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    /// Zero-based position of the accepted draw, if any.
    pub picked: Option<usize>,
    /// Zero-based position of the largest draw.
    pub argmax: usize,
    pub win: bool,
}

impl EpisodeOutcome {
    fn new(picked: Option<usize>, argmax: usize) -> Self {
        Self { picked, argmax, win: picked == Some(argmax) }
    }
}

fn argmax<T: PartialOrd + Copy>(draws: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in draws.iter().enumerate().skip(1) {
        if *x > draws[best] {
            best = i;
        }
    }
    best
}

/// Runs the threshold policy over `draws` in presentation order.
pub fn run_episode<T: PartialOrd + Copy>(draws: &[T], thresholds: &Thresholds<T>) -> Result<EpisodeOutcome> {
    if draws.len() != thresholds.horizon() {
        return Err(domain(format!("{} draws for horizon {}", draws.len(), thresholds.horizon())));
    }
    Ok(episode(draws, thresholds))
}

/// [`run_episode`] without the length check, for hot loops.
#[inline]
pub(crate) fn episode<T: PartialOrd + Copy>(draws: &[T], thresholds: &Thresholds<T>) -> EpisodeOutcome {
    let mut picked = None;
    let mut running: Option<T> = None;
    for (i, &x) in draws.iter().enumerate() {
        if running.is_none_or(|m| x > m) {
            running = Some(x);
            if thresholds.may_accept(i) && x > thresholds.values[i] {
                picked = Some(i);
                break;
            }
        }
    }
    EpisodeOutcome::new(picked, argmax(draws))
}

/// Classical rule for an unknown law: observe the first `ceil(n/e)` draws
/// (at most `n - 1`), then accept the first draw beating all before it.
pub fn classical_baseline<T: PartialOrd + Copy>(draws: &[T]) -> Result<EpisodeOutcome> {
    let n = draws.len();
    if n == 0 {
        return Err(domain("classical baseline needs at least one draw"));
    }
    let skip = ((n as f64 / std::f64::consts::E).ceil() as usize).min(n - 1);
    let best = draws[..skip].iter().copied().reduce(|a, b| if b > a { b } else { a });
    let picked = draws
        .iter()
        .enumerate()
        .skip(skip)
        .find(|(_, &x)| best.is_none_or(|m| x > m))
        .map(|(i, _)| i);
    Ok(EpisodeOutcome::new(picked, argmax(draws)))
}
