//! Balls into bins: exact joint probabilities of the events `{count_i <= T}`,
//! the set function `g(A) = log Pr[max_{i in A} count_i <= T]`, and checks of
//! submodularity, Han's inequality and the random-subset bound on it.
//!
//! All probabilities are exact integer counts over the `n^m` equally likely
//! assignments of labeled balls, divided out only at the end.

use serde::{Deserialize, Serialize};

use crate::decision::optimal_decision_numbers;
use crate::distributions::AugmentedValue;
use crate::error::{domain, Error, Result};
use crate::simulate::{count_wins, subsets_of_size, SimulationResult};
use crate::strategy::{episode, Thresholds};

/// Largest `n^m` that [`BallsBinsModel::enumerate_outcomes`] will walk.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

/// Largest bin count for a [`SubsetLogTable`] (`2^n` entries).
pub const TABLE_MAX_BINS: u32 = 20;

/// `m` labeled balls dropped uniformly and independently into `n` bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallsBinsModel {
    pub balls: u32,
    pub bins: u32,
}

impl BallsBinsModel {
    /// `bins >= 1`. Zero balls is allowed: every count is then zero.
    pub fn new(balls: u32, bins: u32) -> Result<Self> {
        if bins == 0 {
            return Err(domain("need at least one bin"));
        }
        let model = Self { balls, bins };
        model.total_outcomes()?;
        Ok(model)
    }

    /// `n^m`, if it fits the exact counting range.
    pub fn total_outcomes(&self) -> Result<u128> {
        (self.bins as u128)
            .checked_pow(self.balls)
            .ok_or_else(|| Error::Size(format!("{}^{} outcomes exceed exact counting", self.bins, self.balls)))
    }

    /// Every count vector with its number of ball assignments, by brute force.
    /// Guarded by [`ENUMERATION_LIMIT`].
    pub fn enumerate_outcomes(&self) -> Result<Vec<(Vec<u32>, u64)>> {
        let total = self.total_outcomes()?;
        if total > ENUMERATION_LIMIT {
            return Err(Error::Size(format!("{total} outcomes exceed the enumeration limit {ENUMERATION_LIMIT}")));
        }
        let (n, m) = (self.bins as usize, self.balls as usize);
        let mut tally = std::collections::BTreeMap::<Vec<u32>, u64>::new();
        let mut assignment = vec![0usize; m];
        loop {
            let mut counts = vec![0u32; n];
            for &b in &assignment {
                counts[b] += 1;
            }
            *tally.entry(counts).or_default() += 1;
            // Odometer increment over bins^balls.
            let mut pos = 0;
            loop {
                if pos == m {
                    return Ok(tally.into_iter().collect());
                }
                assignment[pos] += 1;
                if assignment[pos] < n {
                    break;
                }
                assignment[pos] = 0;
                pos += 1;
            }
        }
    }

    fn binomials(&self) -> Vec<Vec<u128>> {
        let m = self.balls as usize;
        let mut c = vec![vec![0u128; m + 1]; m + 1];
        for i in 0..=m {
            c[i][0] = 1;
            for j in 1..=i {
                c[i][j] = c[i - 1][j - 1] + c[i - 1][j];
            }
        }
        c
    }

    /// Number of assignments in which each of `size` given bins gets at most
    /// `cap` balls.
    pub fn count_capped(&self, size: usize, cap: u32) -> Result<u128> {
        let n = self.bins as usize;
        if size > n {
            return Err(domain(format!("subset of size {size} in {n} bins")));
        }
        let total = self.total_outcomes()?;
        let m = self.balls as usize;
        let cap = (cap as usize).min(m);
        let binom = self.binomials();
        let overflow = || Error::Size("exact count overflow".into());

        // capped[k]: ways to put k labeled balls into `size` bins, each <= cap.
        let mut capped = vec![0u128; m + 1];
        capped[0] = 1;
        for _ in 0..size {
            let mut next = vec![0u128; m + 1];
            for k in 0..=m {
                let mut acc = 0u128;
                for j in 0..=cap.min(k) {
                    let term = binom[k][j].checked_mul(capped[k - j]).ok_or_else(overflow)?;
                    acc = acc.checked_add(term).ok_or_else(overflow)?;
                }
                next[k] = acc;
            }
            capped = next;
        }

        let free = (n - size) as u128;
        let mut ways = 0u128;
        for k in 0..=m {
            let rest = free.checked_pow((m - k) as u32).ok_or_else(overflow)?;
            let term = binom[m][k]
                .checked_mul(capped[k])
                .and_then(|x| x.checked_mul(rest))
                .ok_or_else(overflow)?;
            ways = ways.checked_add(term).ok_or_else(overflow)?;
        }
        debug_assert!(ways <= total);
        Ok(ways)
    }

    /// `[N_0, ..., N_n]`: assignments where every bin holds at most `t` balls
    /// and exactly `s` bins hold `t`.
    fn count_at_cap(&self, t: u32) -> Result<Vec<u128>> {
        let (n, m) = (self.bins as usize, self.balls as usize);
        let t = t as usize;
        let binom = self.binomials();
        let overflow = || Error::Size("exact count overflow".into());
        // ways[k][s] over bins processed so far.
        let mut ways = vec![vec![0u128; n + 1]; m + 1];
        ways[0][0] = 1;
        for _ in 0..n {
            let mut next = vec![vec![0u128; n + 1]; m + 1];
            for k in 0..=m {
                for s in 0..n {
                    let w = ways[k][s];
                    if w == 0 {
                        continue;
                    }
                    for j in 0..=t.min(m - k) {
                        let s2 = s + usize::from(j == t);
                        let add = binom[k + j][j].checked_mul(w).ok_or_else(overflow)?;
                        next[k + j][s2] = next[k + j][s2].checked_add(add).ok_or_else(overflow)?;
                    }
                }
            }
            ways = next;
        }
        Ok(ways.swap_remove(m))
    }

    /// `Pr[max_i (count_i, U_i) <= (t, u)]` in lexicographic order with
    /// independent uniform tiebreaks `U_i`.
    pub fn augmented_max_cdf(&self, t: u32, u: f64) -> Result<f64> {
        let total = self.total_outcomes()? as f64;
        let counts = self.count_at_cap(t)?;
        Ok(augmented_poly(&counts, u) / total)
    }

    /// Smallest `(t, u)` with `augmented_max_cdf(t, u) >= p`.
    pub fn augmented_max_quantile(&self, p: f64) -> Result<AugmentedValue> {
        crate::distributions::check_probability(p)?;
        let total = self.total_outcomes()? as f64;
        for t in 0..=self.balls {
            let counts = self.count_at_cap(t)?;
            let at = |u: f64| augmented_poly(&counts, u) / total;
            if at(1.0) < p {
                continue;
            }
            if at(0.0) >= p {
                return Ok(AugmentedValue::new(t as f64, 0.0));
            }
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if at(mid) >= p {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(AugmentedValue::new(t as f64, hi));
        }
        Ok(AugmentedValue::new(self.balls as f64, 1.0))
    }
}

fn augmented_poly(counts: &[u128], u: f64) -> f64 {
    counts.iter().rev().fold(0.0, |acc, &c| acc * u + c as f64)
}

fn subset_size(model: &BallsBinsModel, subset: &[usize]) -> Result<usize> {
    let n = model.bins as usize;
    let mut seen = vec![false; n];
    for &i in subset {
        if i >= n {
            return Err(domain(format!("bin {i} outside 0..{n}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(domain(format!("bin {i} repeated in subset")));
        }
    }
    Ok(subset.len())
}

/// `Pr[every bin in subset holds <= cap balls]`; bins are zero-based.
pub fn joint_max_probability(model: &BallsBinsModel, subset: &[usize], cap: u32) -> Result<f64> {
    let size = subset_size(model, subset)?;
    Ok(model.count_capped(size, cap)? as f64 / model.total_outcomes()? as f64)
}

/// A log-probability, with an explicit marker for probability zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LogProb {
    Finite(f64),
    Impossible,
}

impl LogProb {
    pub fn from_probability(p: f64) -> Self {
        if p > 0.0 {
            LogProb::Finite(p.ln())
        } else {
            LogProb::Impossible
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            LogProb::Finite(x) => Some(x),
            LogProb::Impossible => None,
        }
    }

    fn add(self, other: Self) -> Self {
        match (self, other) {
            (LogProb::Finite(a), LogProb::Finite(b)) => LogProb::Finite(a + b),
            _ => LogProb::Impossible,
        }
    }
}

/// `g(A)` for every subset `A` of `n` bins, indexed by bitmask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetLogTable {
    n: usize,
    cap: Option<u32>,
    values: Vec<LogProb>,
}

impl SubsetLogTable {
    /// A table from explicit values, `values[mask] = g(mask)`.
    pub fn from_values(n: usize, values: Vec<LogProb>) -> Result<Self> {
        if n > TABLE_MAX_BINS as usize {
            return Err(Error::Size(format!("subset table capped at {TABLE_MAX_BINS} elements")));
        }
        if values.len() != 1 << n {
            return Err(domain(format!("need {} values for n = {n}, got {}", 1usize << n, values.len())));
        }
        Ok(Self { n, cap: None, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The count cap `T` the table was built for, if built from a model.
    pub fn cap(&self) -> Option<u32> {
        self.cap
    }

    pub fn get(&self, mask: u32) -> LogProb {
        self.values[mask as usize]
    }

    fn full(&self) -> u32 {
        ((1u64 << self.n) - 1) as u32
    }
}

pub fn build_subset_log_table(model: &BallsBinsModel, cap: u32) -> Result<SubsetLogTable> {
    if model.bins > TABLE_MAX_BINS {
        return Err(Error::Size(format!("subset table capped at {TABLE_MAX_BINS} bins, got {}", model.bins)));
    }
    let n = model.bins as usize;
    let total = model.total_outcomes()? as f64;
    // Bins are exchangeable, so g depends on |A| only.
    let by_size = (0..=n)
        .map(|s| Ok(LogProb::from_probability(model.count_capped(s, cap)? as f64 / total)))
        .collect::<Result<Vec<_>>>()?;
    let values = (0..1u32 << n).map(|mask| by_size[mask.count_ones() as usize]).collect();
    Ok(SubsetLogTable { n, cap: Some(cap), values })
}

/// Tolerance for floating comparisons of log-probabilities.
pub const LOG_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmodularCheck {
    pub holds: bool,
    /// First `(A, B)` with `g(A) + g(B) < g(A | B) + g(A & B)`.
    pub violation: Option<(u32, u32)>,
}

/// `g(A) + g(B) >= g(A | B) + g(A & B)` for all pairs. A right-hand side
/// containing an impossible event holds vacuously.
pub fn check_submodular(table: &SubsetLogTable) -> SubmodularCheck {
    let size = 1u32 << table.n;
    for a in 0..size {
        for b in (a + 1)..size {
            let rhs = table.get(a | b).add(table.get(a & b));
            let lhs = table.get(a).add(table.get(b));
            let ok = match (lhs, rhs) {
                (_, LogProb::Impossible) => true,
                (LogProb::Impossible, LogProb::Finite(_)) => false,
                (LogProb::Finite(l), LogProb::Finite(r)) => l + LOG_SLACK >= r,
            };
            if !ok {
                return SubmodularCheck { holds: false, violation: Some((a, b)) };
            }
        }
    }
    SubmodularCheck { holds: true, violation: None }
}

/// Submodularity in exact integer arithmetic:
/// `N(A) N(B) >= N(A | B) N(A & B)` with `N` counting assignments.
pub fn check_submodular_exact(model: &BallsBinsModel, cap: u32) -> Result<SubmodularCheck> {
    if model.bins > TABLE_MAX_BINS {
        return Err(Error::Size(format!("subset table capped at {TABLE_MAX_BINS} bins")));
    }
    let n = model.bins as usize;
    let by_size = (0..=n).map(|s| model.count_capped(s, cap)).collect::<Result<Vec<_>>>()?;
    let count = |mask: u32| by_size[mask.count_ones() as usize];
    let overflow = || Error::Size("exact product overflow".into());
    for a in 0..1u32 << n {
        for b in (a + 1)..1u32 << n {
            let lhs = count(a).checked_mul(count(b)).ok_or_else(overflow)?;
            let rhs = count(a | b).checked_mul(count(a & b)).ok_or_else(overflow)?;
            if lhs < rhs {
                return Ok(SubmodularCheck { holds: false, violation: Some((a, b)) });
            }
        }
    }
    Ok(SubmodularCheck { holds: true, violation: None })
}

/// `(r/n) g([n]) <= mean of g over r-subsets`.
pub fn check_hans(table: &SubsetLogTable, r: usize) -> Result<bool> {
    let n = table.n;
    if r == 0 || r > n {
        return Err(domain(format!("need 1 <= r <= n, got r={r}, n={n}")));
    }
    let Some(whole) = table.get(table.full()).finite() else {
        return Ok(true);
    };
    let mut sum = 0.0;
    let mut count = 0u64;
    for mask in subsets_of_size(n, r) {
        match table.get(mask).finite() {
            Some(g) => sum += g,
            None => return Ok(false),
        }
        count += 1;
    }
    Ok(r as f64 / n as f64 * whole <= sum / count as f64 + LOG_SLACK)
}

/// `(mean over r-subsets of Pr[max over A <= cap], Pr[max over all <= cap]^(r/n))`.
/// The first is never smaller.
pub fn check_lemma2(model: &BallsBinsModel, cap: u32, r: usize) -> Result<(f64, f64)> {
    let n = model.bins as usize;
    if r == 0 || r > n {
        return Err(domain(format!("need 1 <= r <= n, got r={r}, n={n}")));
    }
    if model.bins > TABLE_MAX_BINS {
        return Err(Error::Size(format!("subset averages capped at {TABLE_MAX_BINS} bins")));
    }
    let mut sum = 0.0;
    let mut count = 0u64;
    for mask in subsets_of_size(n, r) {
        let bins: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        sum += joint_max_probability(model, &bins, cap)?;
        count += 1;
    }
    let all: Vec<usize> = (0..n).collect();
    let whole = joint_max_probability(model, &all, cap)?;
    Ok((sum / count as f64, whole.powf(r as f64 / n as f64)))
}

/// Outcome of an exhaustive run over small models.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub checks: u64,
    /// One line per failed check, with the parameters that reproduce it.
    pub violations: Vec<String>,
}

/// Every model with `1 <= m <= max_balls`, `1 <= n <= max_bins`, every cap
/// `T` in `0..=m`: submodularity (floating and exact), Han's inequality and
/// the subset-average bound for every `r`.
pub fn verify_small_models(max_balls: u32, max_bins: u32) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    for m in 1..=max_balls {
        for n in 1..=max_bins {
            let model = BallsBinsModel::new(m, n)?;
            for cap in 0..=m {
                let mut record = |ok: bool, what: String| {
                    report.checks += 1;
                    if !ok {
                        report.violations.push(format!("m={m} n={n} T={cap}: {what}"));
                    }
                };
                let table = build_subset_log_table(&model, cap)?;
                let float = check_submodular(&table);
                record(float.holds, format!("submodularity fails at {:?}", float.violation));
                let exact = check_submodular_exact(&model, cap)?;
                record(exact.holds, format!("exact submodularity fails at {:?}", exact.violation));
                for r in 1..=n as usize {
                    record(check_hans(&table, r)?, format!("Han's inequality fails at r={r}"));
                    let (lhs, rhs) = check_lemma2(&model, cap, r)?;
                    record(lhs + LOG_SLACK >= rhs, format!("subset average {lhs} < {rhs} at r={r}"));
                }
            }
        }
    }
    Ok(report)
}

/// Thresholds for the bin-count secretary game:
/// `Pr[augmented max <= tau_i] = d_i^n` exactly.
pub fn balls_bins_thresholds(model: &BallsBinsModel) -> Result<Thresholds<AugmentedValue>> {
    let n = model.bins as usize;
    let d = optimal_decision_numbers(n)?;
    let values = d
        .values()
        .iter()
        .map(|x| model.augmented_max_quantile(x.powi(n as i32)))
        .collect::<Result<Vec<_>>>()?;
    Thresholds::new(values)
}

pub fn simulate_balls_bins_secretary(model: &BallsBinsModel, trials: u64, seed: u64) -> Result<SimulationResult> {
    simulate_balls_bins_secretary_with_workers(model, trials, seed, None)
}

/// Bins are filled, given tiebreaks, shuffled and presented; a win is
/// selecting the bin with the largest `(count, tiebreak)`.
pub fn simulate_balls_bins_secretary_with_workers(
    model: &BallsBinsModel,
    trials: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<SimulationResult> {
    if trials == 0 {
        return Err(domain("trials must be at least 1"));
    }
    let thresholds = balls_bins_thresholds(model)?;
    let n = model.bins as usize;
    let balls = model.balls;
    let reference = optimal_decision_numbers(n)?.success_probability();
    let wins = count_wins(
        seed,
        trials,
        workers,
        || (vec![0u32; n], Vec::<AugmentedValue>::with_capacity(n), (0..n).collect::<Vec<usize>>()),
        |(counts, presented, perm), rng| {
            counts.iter_mut().for_each(|c| *c = 0);
            for _ in 0..balls {
                counts[rng.below(n)] += 1;
            }
            let values: Vec<AugmentedValue> = counts.iter().map(|&c| AugmentedValue::new(c as f64, rng.uniform())).collect();
            perm.iter_mut().enumerate().for_each(|(i, p)| *p = i);
            for i in (1..n).rev() {
                perm.swap(i, rng.below(i + 1));
            }
            presented.clear();
            presented.extend(perm.iter().map(|&k| values[k]));
            episode(presented, &thresholds).win
        },
    )?;
    Ok(SimulationResult::from_counts(wins, trials, reference))
}
