//! Thresholds estimated from samples instead of known distributions.
//!
//! For bucket `k >= 1` let `m_k = floor(m / (1+eps)^k)` and `M_k` the `m_k`-th
//! smallest sample. A target probability `p` in
//! `[(1+eps)^-k, (1+eps)^-(k-1))` is served by `M_k`; with enough samples
//! `p/(1+eps)^2 <= Pr[X <= M_k] <= p(1+eps)` for every target at once.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decision::{optimal_decision_numbers, solve_c, DecisionNumbers};
use crate::distributions::Distribution;
use crate::error::{domain, Error, Result};
use crate::rng::RandomStream;
use crate::strategy::Thresholds;

/// Sorted samples of a single law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    values: Vec<f64>,
}

impl SampleSet {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(domain("sample set needs at least one value"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(domain("sample set contains NaN"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The `k`-th smallest sample, one-based.
    pub fn order_statistic(&self, k: usize) -> f64 {
        self.values[k - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Target failure probability of the simultaneous guarantee.
    pub eta: f64,
}

impl EstimationParams {
    /// The concentration guarantee is stated for `epsilon < 1/10`; larger
    /// values are accepted for exploratory use.
    pub fn new(epsilon: f64, delta: f64, eta: f64) -> Result<Self> {
        for (name, v) in [("epsilon", epsilon), ("delta", delta), ("eta", eta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(domain(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(Self { epsilon, delta, eta })
    }

    fn base(&self) -> f64 {
        1.0 + self.epsilon
    }
}

/// Bucket `k >= 1` with `(1+eps)^-k <= p < (1+eps)^-(k-1)`. `p` must be in `(0, 1)`.
pub fn bucket_index(p: f64, epsilon: f64) -> usize {
    let base = 1.0 + epsilon;
    let mut k = ((-p.ln() / epsilon.ln_1p()).ceil() as usize).max(1);
    while k > 1 && 1.0 / base.powi((k - 1) as i32) <= p {
        k -= 1;
    }
    while 1.0 / base.powi(k as i32) > p {
        k += 1;
    }
    k
}

/// Order-statistic thresholds `T_i` for target probabilities `p_i`.
pub fn empirical_thresholds(samples: &SampleSet, p: &[f64], params: &EstimationParams) -> Result<Vec<f64>> {
    let m = samples.len();
    let base = params.base();
    p.iter()
        .map(|&pi| {
            if !(pi > params.delta && pi <= 1.0) {
                return Err(domain(format!("target {pi} outside (delta = {}, 1]", params.delta)));
            }
            if pi == 1.0 {
                return Ok(samples.order_statistic(m));
            }
            let k = bucket_index(pi, params.epsilon);
            let scale = base.powi(k as i32);
            let m_k = m as f64 / scale;
            if m_k < 1.0 {
                return Err(Error::InsufficientSamples { required: scale.ceil() as u64, available: m as u64 });
            }
            Ok(samples.order_statistic((m_k.floor() as usize).clamp(1, m)))
        })
        .collect()
}

/// Union-bound failure probability of the simultaneous guarantee with `m` samples.
pub fn failure_bound(params: &EstimationParams, m: f64) -> f64 {
    let eps = params.epsilon;
    let buckets = -params.delta.ln() / eps.ln_1p();
    2.0 * (buckets + 2.0) * (-(eps * eps * params.delta * m) / (3.0 * params.base() * params.base())).exp()
}

/// Smallest `m` with `failure_bound(params, m) <= eta`. Saturates at `u64::MAX`.
pub fn required_sample_size(params: &EstimationParams) -> u64 {
    let eps = params.epsilon;
    let buckets = -params.delta.ln() / eps.ln_1p();
    let log_term = (2.0 * (buckets + 2.0) / params.eta).ln();
    if log_term <= 0.0 {
        return 1;
    }
    let m = 3.0 * params.base() * params.base() / (eps * eps * params.delta) * log_term;
    if m >= u64::MAX as f64 {
        return u64::MAX;
    }
    let mut m = (m.ceil() as u64).max(1);
    // Rounding in the closed form can leave m off by one either way.
    while m > 1 && failure_bound(params, (m - 1) as f64) <= params.eta {
        m -= 1;
    }
    while failure_bound(params, m as f64) > params.eta {
        m += 1;
    }
    m
}

/// Per-distribution samples: `rows[j][k]` is the `j`-th sample of law `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleTable {
    labels: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl SampleTable {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let labels = (1..=width).map(|k| format!("d{k}")).collect();
        Self::with_labels(labels, rows)
    }

    pub fn with_labels(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(domain("sample table has no rows"));
        }
        let width = labels.len();
        if width == 0 {
            return Err(domain("sample table has no columns"));
        }
        if let Some(j) = rows.iter().position(|r| r.len() != width) {
            return Err(domain(format!("ragged sample table: row {} has {} entries, expected {width}", j + 1, rows[j].len())));
        }
        if rows.iter().flatten().any(|v| v.is_nan()) {
            return Err(domain("sample table contains NaN"));
        }
        Ok(Self { labels, rows })
    }

    /// `rows` independent draws from each law, from stream `(seed, stream)`.
    pub fn generate(dists: &[Distribution], rows: u64, seed: u64, stream: u64) -> Result<Self> {
        if dists.is_empty() {
            return Err(domain("need at least one distribution"));
        }
        let mut rng = RandomStream::new(seed, stream);
        let rows = (0..rows).map(|_| dists.iter().map(|d| d.sample(&mut rng)).collect()).collect();
        Self::from_rows(rows)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn columns(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Reads a sample table: header row of labels, one sample row per line.
pub fn parse_sample_csv(reader: impl Read) -> Result<SampleTable> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let labels: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (j, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Table(format!("row {}: {s:?} is not a number", j + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    SampleTable::with_labels(labels, rows)
}

pub fn read_sample_csv(path: &Path) -> Result<SampleTable> {
    parse_sample_csv(std::fs::File::open(path)?)
}

/// Row-wise maxima: one sample of `max_k X_k` per row.
pub fn max_samples_from_rows(table: &SampleTable) -> Result<SampleSet> {
    SampleSet::new(
        table
            .rows()
            .iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
    )
}

/// The slack functions trading tail, failure probability and accuracy:
/// `f1(eps) = eps / tail_divisor`, `f2(eps) = eps / failure_divisor`,
/// `f3(eps) = -eps / (accuracy_divisor * ln eps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlackSchedule {
    pub tail_divisor: f64,
    pub failure_divisor: f64,
    pub accuracy_divisor: f64,
    pub delta_floor: f64,
}

impl Default for SlackSchedule {
    fn default() -> Self {
        Self { tail_divisor: 10.0, failure_divisor: 10.0, accuracy_divisor: 100.0, delta_floor: 1e-12 }
    }
}

impl SlackSchedule {
    /// Fraction of final positions that never accept.
    pub fn tail_fraction(&self, eps: f64) -> f64 {
        eps / self.tail_divisor
    }

    pub fn failure_probability(&self, eps: f64) -> f64 {
        eps / self.failure_divisor
    }

    /// Multiplicative accuracy demanded of `Pr[max <= T_i]`.
    pub fn accuracy(&self, eps: f64) -> f64 {
        -eps / (self.accuracy_divisor * eps.ln())
    }

    /// Estimation parameters for overall slack `eps`: accuracy `f3/4`,
    /// `delta = exp(-c/f1)` (floored), failure probability `f2`.
    pub fn estimation_params(&self, eps: f64) -> Result<EstimationParams> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(domain(format!("epsilon must lie in (0, 1), got {eps}")));
        }
        let delta = (-solve_c() / self.tail_fraction(eps)).exp().max(self.delta_floor);
        EstimationParams::new(self.accuracy(eps) / 4.0, delta, self.failure_probability(eps))
    }

    /// Number of final positions that never accept for horizon `n`.
    pub fn skipped_positions(&self, eps: f64, n: usize) -> usize {
        ((self.tail_fraction(eps) * n as f64 + 1e-9).floor() as usize).min(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePolicy {
    pub thresholds: Thresholds<f64>,
    pub decision_numbers: DecisionNumbers,
    pub params: EstimationParams,
    /// Rows the planner asks for at these parameters.
    pub required_rows: u64,
}

/// Estimates thresholds for horizon `n` from per-distribution samples.
///
/// Positions past `(1 - f1) n` never accept. The rest get `T_i` estimated for
/// `p_i = d_i^n` from the row-wise maxima; a target at or below `delta`
/// (in particular `d_i = 0`) accepts any running maximum. With
/// `enforce_bound`, fewer rows than [`required_sample_size`] is an error.
pub fn sample_based_policy(
    n: usize,
    eps: f64,
    schedule: &SlackSchedule,
    table: &SampleTable,
    enforce_bound: bool,
) -> Result<SamplePolicy> {
    if table.columns() != n {
        return Err(domain(format!("sample table has {} columns, horizon is {n}", table.columns())));
    }
    let params = schedule.estimation_params(eps)?;
    let required_rows = required_sample_size(&params);
    if enforce_bound && (table.len() as u64) < required_rows {
        return Err(Error::InsufficientSamples { required: required_rows, available: table.len() as u64 });
    }

    let d = optimal_decision_numbers(n)?;
    let skip = schedule.skipped_positions(eps, n);
    let maxima = max_samples_from_rows(table)?;
    let targets: Vec<f64> = d.values().iter().map(|x| x.powi(n as i32)).collect();
    let estimable: Vec<f64> = targets.iter().copied().filter(|&p| p > params.delta).collect();
    let mut estimates = empirical_thresholds(&maxima, &estimable, &params)?.into_iter();
    let values: Vec<f64> = targets
        .iter()
        .map(|&p| if p > params.delta { estimates.next().expect("one estimate per target") } else { f64::NEG_INFINITY })
        .collect();

    Ok(SamplePolicy {
        thresholds: Thresholds::with_skip_tail(values, skip)?,
        decision_numbers: d,
        params,
        required_rows,
    })
}

/// Whether `p/(1+eps)^2 <= F(T) <= p(1+eps)` holds for every target at once.
pub fn sandwich_holds(samples: &SampleSet, p: &[f64], params: &EstimationParams, cdf: impl Fn(f64) -> f64) -> Result<bool> {
    let t = empirical_thresholds(samples, p, params)?;
    let base = params.base();
    Ok(p.iter().zip(&t).all(|(&pi, &ti)| {
        let f = cdf(ti);
        pi / (base * base) <= f && f <= pi * base
    }))
}

/// Geometric grid of `points` targets in `(delta, 1]`, ending at 1.
pub fn target_grid(delta: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|k| delta.powf(1.0 - k as f64 / points as f64)).collect()
}

/// Number of repetitions, out of `repetitions`, in which a fresh sample of
/// size `m` from `dist` satisfies the sandwich on `p`. Repetition `k` draws
/// from stream `(seed, k)`.
pub fn sandwich_hits(
    dist: &Distribution,
    params: &EstimationParams,
    p: &[f64],
    m: u64,
    repetitions: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<u64> {
    dist.validate()?;
    if m == 0 {
        return Err(domain("need at least one sample"));
    }
    let one = |k: u64| -> Result<bool> {
        let mut rng = RandomStream::new(seed, k);
        let samples = SampleSet::new((0..m).map(|_| dist.sample(&mut rng)).collect())?;
        sandwich_holds(&samples, p, params, |x| dist.cdf(x))
    };
    let run = || {
        use rayon::prelude::*;
        (0..repetitions).into_par_iter().map(|k| one(k).map(u64::from)).sum::<Result<u64>>()
    };
    match workers {
        None => run(),
        Some(0) => Err(domain("workers must be at least 1")),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?
            .install(run),
    }
}
