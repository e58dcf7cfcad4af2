//! Seeded Monte Carlo harness.
//!
//! Trial `t` owns random stream `(seed, t)` and consumes it in a fixed order:
//! one draw per distribution, then one tiebreak per draw when augmentation is
//! active, then the presentation shuffle. Results therefore do not depend on
//! how trials are spread over workers.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{optimal_decision_numbers, DecisionNumbers};
use crate::distributions::{AugmentedValue, Distribution};
use crate::error::{domain, Error, Result};
use crate::rng::RandomStream;
use crate::samples::{self, SampleTable, SlackSchedule};
use crate::strategy::{augmented_thresholds_from_decision_numbers, episode, thresholds_from_decision_numbers, Thresholds};

/// Largest `n` for which [`lemma1_check`] enumerates subsets.
pub const LEMMA1_MAX_N: usize = 20;

/// Stream index reserved for generating sample tables in sample-based mode.
pub const SAMPLE_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    FullKnowledge,
    SampleBased,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub distributions: Vec<Distribution>,
    pub trials: u64,
    pub seed: u64,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_dist: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_csv: Option<PathBuf>,
    /// Refuse sample-based runs with fewer rows than the planner requires.
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub enforce_sample_bound: bool,
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

impl ExperimentConfig {
    pub fn full_knowledge(distributions: Vec<Distribution>, trials: u64, seed: u64) -> Self {
        Self {
            distributions,
            trials,
            seed,
            mode: Mode::FullKnowledge,
            epsilon: None,
            samples_per_dist: None,
            samples_csv: None,
            enforce_sample_bound: true,
        }
    }

    pub fn sample_based(distributions: Vec<Distribution>, trials: u64, seed: u64, epsilon: f64, samples_per_dist: u64) -> Self {
        Self {
            mode: Mode::SampleBased,
            epsilon: Some(epsilon),
            samples_per_dist: Some(samples_per_dist),
            ..Self::full_knowledge(distributions, trials, seed)
        }
    }

    pub fn horizon(&self) -> usize {
        self.distributions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(domain("trials must be at least 1"));
        }
        if self.distributions.is_empty() {
            return Err(domain("need at least one distribution"));
        }
        for d in &self.distributions {
            d.validate()?;
        }
        let has_sample_params = self.epsilon.is_some() || self.samples_per_dist.is_some() || self.samples_csv.is_some();
        match self.mode {
            Mode::FullKnowledge if has_sample_params => {
                Err(domain("sample parameters are only valid in sample-based mode"))
            }
            Mode::FullKnowledge => Ok(()),
            Mode::SampleBased => {
                let eps = self.epsilon.ok_or_else(|| domain("sample-based mode needs epsilon"))?;
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(domain(format!("epsilon must lie in (0, 1), got {eps}")));
                }
                match (self.samples_per_dist, &self.samples_csv) {
                    (Some(0), _) => Err(domain("samples_per_dist must be at least 1")),
                    (Some(_), Some(_)) => Err(domain("give samples_per_dist or samples_csv, not both")),
                    (None, None) => Err(domain("sample-based mode needs samples_per_dist or samples_csv")),
                    _ if self.distributions.iter().any(Distribution::has_atoms) => {
                        Err(domain("sample-based mode needs atomless distributions"))
                    }
                    _ => Ok(()),
                }
            }
        }
    }
}

/// Success counts with a Wilson 95% interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub trials: u64,
    pub wins: u64,
    pub rate: f64,
    pub std_error: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// The value the rate is compared against (formula value or bound).
    pub reference_bound: f64,
}

impl SimulationResult {
    pub fn from_counts(wins: u64, trials: u64, reference_bound: f64) -> Self {
        assert!(trials > 0 && wins <= trials, "invalid counts {wins}/{trials}");
        let rate = wins as f64 / trials as f64;
        let (low, high) = wilson(wins, trials, 1.959_963_984_540_054);
        Self {
            trials,
            wins,
            rate,
            std_error: (rate * (1.0 - rate) / trials as f64).sqrt(),
            ci95_low: low.min(rate),
            ci95_high: high.max(rate),
            reference_bound,
        }
    }

    /// Wilson score interval at `z` standard errors.
    pub fn wilson_interval(&self, z: f64) -> (f64, f64) {
        wilson(self.wins, self.trials, z)
    }
}

fn wilson(wins: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = wins as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Uniform shuffle of `0..n` (Fisher-Yates).
pub fn random_permutation(n: usize, rng: &mut RandomStream) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    shuffle(&mut p, rng);
    p
}

#[inline]
fn shuffle<T>(xs: &mut [T], rng: &mut RandomStream) {
    for i in (1..xs.len()).rev() {
        xs.swap(i, rng.below(i + 1));
    }
}

/// Runs `trials` episodes in parallel; `trial(stream, index)` plays one.
/// The optional `workers` bound does not affect the result.
pub(crate) fn count_wins<S, F>(seed: u64, trials: u64, workers: Option<usize>, init: impl Fn() -> S + Sync + Send, trial: F) -> Result<u64>
where
    F: Fn(&mut S, &mut RandomStream) -> bool + Sync + Send,
{
    let run = || {
        (0..trials)
            .into_par_iter()
            .map_init(
                || (RandomStream::new(seed, 0), init()),
                |(rng, scratch), t| {
                    rng.reset_to(t);
                    trial(scratch, rng) as u64
                },
            )
            .sum::<u64>()
    };
    match workers {
        None => Ok(run()),
        Some(0) => Err(domain("workers must be at least 1")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
            Ok(pool.install(run))
        }
    }
}

fn present<T: Copy>(draws: &[T], perm: &mut [usize], out: &mut Vec<T>, rng: &mut RandomStream) {
    shuffle(perm, rng);
    out.clear();
    out.extend(perm.iter().map(|&k| draws[k]));
}

struct Scratch<T> {
    draws: Vec<T>,
    perm: Vec<usize>,
    presented: Vec<T>,
}

impl<T> Scratch<T> {
    fn new(n: usize) -> Self {
        Self { draws: Vec::with_capacity(n), perm: (0..n).collect(), presented: Vec::with_capacity(n) }
    }
}

fn simulate_plain(dists: &[Distribution], thresholds: &Thresholds<f64>, seed: u64, trials: u64, workers: Option<usize>) -> Result<u64> {
    let n = dists.len();
    count_wins(seed, trials, workers, || Scratch::<f64>::new(n), |s, rng| {
        s.draws.clear();
        s.draws.extend(dists.iter().map(|d| d.sample(rng)));
        s.perm.iter_mut().enumerate().for_each(|(i, p)| *p = i);
        present(&s.draws, &mut s.perm, &mut s.presented, rng);
        episode(&s.presented, thresholds).win
    })
}

fn simulate_augmented(
    dists: &[Distribution],
    thresholds: &Thresholds<AugmentedValue>,
    seed: u64,
    trials: u64,
    workers: Option<usize>,
) -> Result<u64> {
    let n = dists.len();
    count_wins(seed, trials, workers, || Scratch::<AugmentedValue>::new(n), |s, rng| {
        s.draws.clear();
        s.draws.extend(dists.iter().map(|d| AugmentedValue::new(d.sample(rng), 0.0)));
        for v in s.draws.iter_mut() {
            v.tiebreak = rng.uniform();
        }
        s.perm.iter_mut().enumerate().for_each(|(i, p)| *p = i);
        present(&s.draws, &mut s.perm, &mut s.presented, rng);
        episode(&s.presented, thresholds).win
    })
}

/// Runs the experiment described by `config` with optimal decision numbers
/// (full knowledge) or sample-estimated thresholds.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SimulationResult> {
    run_experiment_with_workers(config, None)
}

pub fn run_experiment_with_workers(config: &ExperimentConfig, workers: Option<usize>) -> Result<SimulationResult> {
    config.validate()?;
    let n = config.horizon();
    let d = optimal_decision_numbers(n)?;
    match config.mode {
        Mode::FullKnowledge => run_with_decision_numbers(config, &d, workers),
        Mode::SampleBased => {
            let eps = config.epsilon.expect("validated");
            let table = match (&config.samples_csv, config.samples_per_dist) {
                (Some(path), _) => samples::read_sample_csv(path)?,
                (None, Some(rows)) => SampleTable::generate(&config.distributions, rows, config.seed, SAMPLE_STREAM)?,
                (None, None) => unreachable!("validated"),
            };
            if table.columns() != n {
                return Err(domain(format!("sample table has {} columns for {n} distributions", table.columns())));
            }
            let policy = samples::sample_based_policy(n, eps, &SlackSchedule::default(), &table, config.enforce_sample_bound)?;
            let wins = simulate_plain(&config.distributions, &policy.thresholds, config.seed, config.trials, workers)?;
            Ok(SimulationResult::from_counts(wins, config.trials, d.success_probability()))
        }
    }
}

/// Full-knowledge run with caller-chosen decision numbers. The reference
/// bound is the formula value of `d`.
pub fn run_with_decision_numbers(config: &ExperimentConfig, d: &DecisionNumbers, workers: Option<usize>) -> Result<SimulationResult> {
    config.validate()?;
    let dists = &config.distributions;
    let wins = if dists.iter().any(Distribution::has_atoms) {
        let t = augmented_thresholds_from_decision_numbers(dists, d)?;
        simulate_augmented(dists, &t, config.seed, config.trials, workers)?
    } else {
        let t = thresholds_from_decision_numbers(dists, d)?;
        simulate_plain(dists, &t, config.seed, config.trials, workers)?
    };
    Ok(SimulationResult::from_counts(wins, config.trials, d.success_probability()))
}

/// Runs a full-knowledge style simulation with explicit thresholds.
pub fn run_with_thresholds(
    dists: &[Distribution],
    thresholds: &Thresholds<f64>,
    trials: u64,
    seed: u64,
    workers: Option<usize>,
    reference_bound: f64,
) -> Result<SimulationResult> {
    if trials == 0 {
        return Err(domain("trials must be at least 1"));
    }
    if dists.len() != thresholds.horizon() {
        return Err(domain("threshold horizon differs from the number of distributions"));
    }
    let wins = simulate_plain(dists, thresholds, seed, trials, workers)?;
    Ok(SimulationResult::from_counts(wins, trials, reference_bound))
}

/// Exact check of the random-subset bound: returns
/// `(sum over r-subsets of prod a / C(n, r), (prod a)^(r/n))`.
/// The first is never smaller than the second.
pub fn lemma1_check(a: &[f64], r: usize) -> Result<(f64, f64)> {
    let n = a.len();
    if n == 0 || r == 0 || r > n {
        return Err(domain(format!("need 1 <= r <= n, got r={r}, n={n}")));
    }
    if n > LEMMA1_MAX_N {
        return Err(Error::Size(format!("subset enumeration capped at n = {LEMMA1_MAX_N}, got {n}")));
    }
    if let Some(x) = a.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(domain(format!("{x} is not a probability")));
    }
    let mut total = 0.0;
    let mut count = 0u64;
    for mask in subsets_of_size(n, r) {
        total += (0..n).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).product::<f64>();
        count += 1;
    }
    let product: f64 = a.iter().product();
    Ok((total / count as f64, product.powf(r as f64 / n as f64)))
}

/// Lemma 1 over `vectors` random probability vectors of length `1..=max_n`
/// (vector `k` drawn from stream `(seed, k)`) and every `r`. Returns the
/// number of checks and a line per violation.
pub fn lemma1_suite(vectors: u64, max_n: usize, seed: u64) -> Result<(u64, Vec<String>)> {
    if max_n == 0 || max_n > LEMMA1_MAX_N {
        return Err(Error::Size(format!("vector length must lie in 1..={LEMMA1_MAX_N}, got {max_n}")));
    }
    let mut checks = 0;
    let mut violations = Vec::new();
    for k in 0..vectors {
        let mut rng = RandomStream::new(seed, k);
        let n = 1 + rng.below(max_n);
        let a: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        for r in 1..=n {
            let (avg, bound) = lemma1_check(&a, r)?;
            checks += 1;
            if avg + 1e-12 < bound {
                violations.push(format!("seed={seed} vector={k} r={r} a={a:?}: {avg} < {bound}"));
            }
        }
    }
    Ok((checks, violations))
}

/// All `r`-element subsets of `0..n` as bitmasks, in increasing order.
pub fn subsets_of_size(n: usize, r: usize) -> impl Iterator<Item = u32> {
    assert!(n < 32);
    let limit = 1u32 << n;
    let first = if r == 0 { 0 } else { (1u32 << r) - 1 };
    let mut next = (r <= n).then_some(first);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            // Gosper's hack.
            let c = cur & cur.wrapping_neg();
            let ripple = cur + c;
            let succ = (((ripple ^ cur) >> 2) / c) | ripple;
            (succ < limit).then_some(succ)
        };
        Some(cur)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn u01() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn permutation_examples() {
        let mut rng = RandomStream::new(1, 0);
        assert_eq!(random_permutation(1, &mut rng), vec![0]);
        let mut a = RandomStream::new(5, 2);
        let mut b = RandomStream::new(5, 2);
        assert_eq!(random_permutation(9, &mut a), random_permutation(9, &mut b));
    }

    #[test]
    fn permutation_uniform_on_three() {
        let mut rng = RandomStream::new(2, 0);
        let mut counts = std::collections::HashMap::new();
        let trials = 600_000;
        for _ in 0..trials {
            *counts.entry(random_permutation(3, &mut rng)).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 6);
        for c in counts.values() {
            assert!((*c as f64 / trials as f64 - 1.0 / 6.0).abs() < 0.005);
        }
    }

    #[test]
    fn wilson_interval_brackets_rate() {
        for (w, t) in [(0u64, 10u64), (10, 10), (3, 7), (500, 1000)] {
            let r = SimulationResult::from_counts(w, t, 0.5);
            assert!(r.ci95_low <= r.rate && r.rate <= r.ci95_high);
            assert!(r.ci95_low >= 0.0 && r.ci95_high <= 1.0);
        }
        let r = SimulationResult::from_counts(0, 100, 0.0);
        assert_eq!(r.ci95_low, 0.0);
        assert!(r.ci95_high > 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::full_knowledge(vec![u01()], 0, 1);
        assert!(c.validate().is_err());
        c.trials = 5;
        assert!(c.validate().is_ok());
        c.epsilon = Some(0.1);
        assert!(c.validate().is_err());
        let mut s = ExperimentConfig::sample_based(vec![u01()], 5, 1, 0.1, 100);
        assert!(s.validate().is_ok());
        s.samples_per_dist = None;
        assert!(s.validate().is_err());
        let d = Distribution::discrete(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!(ExperimentConfig::sample_based(vec![d], 5, 1, 0.1, 100).validate().is_err());
    }

    #[test]
    fn single_draw_always_wins() {
        for d in [u01(), Distribution::exponential(3.0).unwrap(), Distribution::discrete(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap()] {
            let r = run_experiment(&ExperimentConfig::full_knowledge(vec![d], 1000, 4)).unwrap();
            assert_eq!(r.rate, 1.0);
        }
    }

    #[test]
    fn reproducible_across_worker_counts() {
        let dists = vec![u01(), Distribution::exponential(1.0).unwrap(), Distribution::uniform(0.0, 3.0).unwrap()];
        let cfg = ExperimentConfig::full_knowledge(dists, 20_000, 77);
        let a = run_experiment_with_workers(&cfg, Some(1)).unwrap();
        let b = run_experiment_with_workers(&cfg, Some(4)).unwrap();
        let c = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn degenerate_decision_numbers() {
        let n = 5;
        let cfg = ExperimentConfig::full_knowledge(vec![u01(); n], 200_000, 3);
        let never = DecisionNumbers::new(vec![1.0; n]).unwrap();
        assert_eq!(run_with_decision_numbers(&cfg, &never, None).unwrap().wins, 0);
        let first = DecisionNumbers::new(vec![0.0; n]).unwrap();
        let r = run_with_decision_numbers(&cfg, &first, None).unwrap();
        assert!((r.rate - 0.2).abs() <= 3.0 * r.std_error, "{}", r.rate);
    }

    #[test]
    fn discrete_instance_beats_formula() {
        // Augmentation keeps the lower bound valid with ties in the primary value.
        let d = Distribution::discrete(vec![0.0, 1.0, 2.0], vec![0.5, 0.3, 0.2]).unwrap();
        let dists = vec![d, u01(), Distribution::discrete(vec![0.5, 1.0], vec![0.9, 0.1]).unwrap(), u01()];
        let r = run_experiment(&ExperimentConfig::full_knowledge(dists, 200_000, 12)).unwrap();
        assert!(r.rate >= r.reference_bound - 3.0 * r.std_error, "{} vs {}", r.rate, r.reference_bound);
    }

    #[test]
    fn lemma1_examples() {
        assert_eq!(lemma1_check(&[0.5, 0.5], 1).unwrap(), (0.5, 0.5));
        let (avg, bound) = lemma1_check(&[0.9, 0.1], 1).unwrap();
        assert!((avg - 0.5).abs() < 1e-15 && (bound - 0.3).abs() < 1e-15);
        assert!(lemma1_check(&[0.5], 2).is_err());
        assert!(lemma1_check(&[0.5], 0).is_err());
        assert!(matches!(lemma1_check(&[0.5; 21], 3), Err(Error::Size(_))));
    }

    #[test]
    fn subset_enumeration_counts() {
        for n in 0..=10usize {
            for r in 0..=n {
                let masks: Vec<u32> = subsets_of_size(n, r).collect();
                let binom = (0..r).fold(1u64, |acc, k| acc * (n - k) as u64 / (k + 1) as u64);
                assert_eq!(masks.len() as u64, binom, "n={n} r={r}");
                assert!(masks.iter().all(|m| m.count_ones() as usize == r));
            }
        }
    }

    #[test]
    fn lemma1_suite_passes() {
        let (checks, violations) = lemma1_suite(30, 8, 5).unwrap();
        assert!(violations.is_empty());
        assert!(checks >= 30);
        assert!(lemma1_suite(1, 21, 0).is_err());
    }

    proptest! {
        #[test]
        fn lemma1_holds(a in proptest::collection::vec(0.0f64..=1.0, 1..=10)) {
            for r in 1..=a.len() {
                let (avg, bound) = lemma1_check(&a, r).unwrap();
                prop_assert!(avg + 1e-12 >= bound);
            }
        }

        #[test]
        fn lemma1_equality_for_equal_entries(x in 0.0f64..=1.0, n in 1usize..8) {
            let a = vec![x; n];
            for r in 1..=n {
                let (avg, bound) = lemma1_check(&a, r).unwrap();
                prop_assert!((avg - bound).abs() < 1e-12);
            }
        }
    }
}
