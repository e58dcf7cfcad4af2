//! One-dimensional laws with CDF, generalized-inverse quantile and
//! inverse-transform sampling, plus the distribution of the maximum of
//! independent draws.
//!
//! Laws with atoms (`Discrete`, `Empirical`) are made continuous by pairing
//! every draw with an independent uniform tiebreak and comparing pairs
//! lexicographically; see [`AugmentedValue`].

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::RandomStream;

const PROB_SUM_TOL: f64 = 1e-12;
const BISECT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", try_from = "RawDistribution")]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    /// Finite support; `values` strictly increasing, `probs` summing to one.
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    /// Uniform law on a sorted sample.
    Empirical { samples: Vec<f64> },
}

// Deserialization target; every parsed law goes through `validate`.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawDistribution {
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Empirical { samples: Vec<f64> },
}

impl TryFrom<RawDistribution> for Distribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        match raw {
            RawDistribution::Uniform { lo, hi } => Self::uniform(lo, hi),
            RawDistribution::Exponential { rate } => Self::exponential(rate),
            RawDistribution::Discrete { values, probs } => Self::discrete(values, probs),
            RawDistribution::Empirical { samples } => Self::empirical(samples),
        }
    }
}

impl Distribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = Distribution::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        let d = Distribution::Exponential { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let d = Distribution::Discrete { values, probs };
        d.validate()?;
        Ok(d)
    }

    /// Empirical law of `samples`; the input need not be sorted.
    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(domain("empirical samples must be finite"));
        }
        samples.sort_by(f64::total_cmp);
        let d = Distribution::Empirical { samples };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Distribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(domain(format!("uniform needs finite lo < hi, got [{lo}, {hi}]")));
                }
            }
            Distribution::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(domain(format!("exponential rate must be positive, got {rate}")));
                }
            }
            Distribution::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(domain("discrete needs equally many values and probs, at least one"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(domain("discrete values must be finite"));
                }
                if values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(domain("discrete values must be strictly increasing"));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(domain("discrete probs must be nonnegative"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_SUM_TOL {
                    return Err(domain(format!("discrete probs sum to {total}, not 1")));
                }
            }
            Distribution::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(domain("empirical law needs at least one sample"));
                }
                if samples.windows(2).any(|w| w[0] > w[1]) {
                    return Err(domain("empirical samples must be sorted"));
                }
            }
        }
        Ok(())
    }

    /// Whether the law has point masses, i.e. needs augmentation to break ties.
    pub fn has_atoms(&self) -> bool {
        matches!(self, Distribution::Discrete { .. } | Distribution::Empirical { .. })
    }

    pub fn support_min(&self) -> f64 {
        match self {
            Distribution::Uniform { lo, .. } => *lo,
            Distribution::Exponential { .. } => 0.0,
            Distribution::Discrete { values, .. } => values[0],
            Distribution::Empirical { samples } => samples[0],
        }
    }

    pub fn support_max(&self) -> f64 {
        match self {
            Distribution::Uniform { hi, .. } => *hi,
            Distribution::Exponential { .. } => f64::INFINITY,
            Distribution::Discrete { values, .. } => values[values.len() - 1],
            Distribution::Empirical { samples } => samples[samples.len() - 1],
        }
    }

    /// `Pr[X <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Distribution::Uniform { lo, hi } => {
                if x <= *lo {
                    0.0
                } else if x >= *hi {
                    1.0
                } else {
                    (x - lo) / (hi - lo)
                }
            }
            Distribution::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Distribution::Discrete { values, probs } => {
                let last = values.len() - 1;
                if x >= values[last] {
                    return 1.0;
                }
                let mut cum = 0.0;
                for (v, p) in values[..last].iter().zip(probs) {
                    if *v > x {
                        break;
                    }
                    cum += p;
                }
                cum
            }
            Distribution::Empirical { samples } => {
                let k = samples.partition_point(|s| *s <= x);
                empirical_fraction(k, samples.len())
            }
        }
    }

    /// `Pr[X < x]`, the left limit of the CDF.
    pub fn cdf_below(&self, x: f64) -> f64 {
        match self {
            Distribution::Uniform { .. } | Distribution::Exponential { .. } => self.cdf(x),
            Distribution::Discrete { values, probs } => {
                let last = values.len() - 1;
                if x > values[last] {
                    return 1.0;
                }
                let mut cum = 0.0;
                for (v, p) in values[..last].iter().zip(probs) {
                    if *v >= x {
                        break;
                    }
                    cum += p;
                }
                cum
            }
            Distribution::Empirical { samples } => {
                let k = samples.partition_point(|s| *s < x);
                empirical_fraction(k, samples.len())
            }
        }
    }

    /// Generalized inverse `inf{x : cdf(x) >= p}`; `p = 0` maps to the
    /// infimum of the support.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(self.quantile_unchecked(p))
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        match self {
            Distribution::Uniform { lo, hi } => {
                if p >= 1.0 {
                    *hi
                } else {
                    lo + p * (hi - lo)
                }
            }
            Distribution::Exponential { rate } => {
                if p >= 1.0 {
                    f64::INFINITY
                } else {
                    -(-p).ln_1p() / rate
                }
            }
            Distribution::Discrete { values, probs } => {
                // Same summation order as `cdf`, so the two stay a Galois pair.
                let last = values.len() - 1;
                let mut cum = 0.0;
                for (v, q) in values[..last].iter().zip(probs) {
                    cum += q;
                    if cum >= p {
                        return *v;
                    }
                }
                values[last]
            }
            Distribution::Empirical { samples } => {
                let m = samples.len();
                // Smallest k with k/m >= p, evaluated exactly as `cdf` does.
                let (mut lo, mut hi) = (0usize, m);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if empirical_fraction(mid, m) >= p {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                samples[lo.max(1) - 1]
            }
        }
    }

    /// Inverse-transform draw.
    pub fn sample(&self, rng: &mut RandomStream) -> f64 {
        self.quantile_unchecked(rng.uniform())
    }

    /// `Pr[(X, U) <= (x, u)]` in lexicographic order with `U ~ Uniform(0,1)`
    /// independent of `X`.
    pub fn augmented_cdf(&self, at: AugmentedValue) -> f64 {
        let below = self.cdf_below(at.primary);
        let atom = self.cdf(at.primary) - below;
        below + at.tiebreak.clamp(0.0, 1.0) * atom
    }
}

fn empirical_fraction(k: usize, m: usize) -> f64 {
    k as f64 / m as f64
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(domain(format!("probability {p} outside [0, 1]")))
    }
}

/// A draw paired with a uniform tiebreak, ordered lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedValue {
    pub primary: f64,
    pub tiebreak: f64,
}

impl AugmentedValue {
    pub fn new(primary: f64, tiebreak: f64) -> Self {
        Self { primary, tiebreak }
    }
}

impl Eq for AugmentedValue {}

impl PartialOrd for AugmentedValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AugmentedValue {
    fn cmp(&self, other: &Self) -> Ordering {
        self.primary
            .total_cmp(&other.primary)
            .then(self.tiebreak.total_cmp(&other.tiebreak))
    }
}

/// `Pr[max_k X_k <= x]` for independent `X_k ~ dists[k]`.
pub fn product_max_cdf(dists: &[Distribution], x: f64) -> f64 {
    dists.iter().map(|d| d.cdf(x)).product()
}

/// `Pr[max_k (X_k, U_k) <= at]` in lexicographic order.
pub fn product_max_augmented_cdf(dists: &[Distribution], at: AugmentedValue) -> f64 {
    dists.iter().map(|d| d.augmented_cdf(at)).product()
}

/// `inf{x : product_max_cdf(dists, x) >= p}`, found by doubling out from the
/// joint support and bisecting. `p = 0` returns the infimum of the support
/// of the maximum.
pub fn product_max_quantile(dists: &[Distribution], p: f64) -> Result<f64> {
    check_probability(p)?;
    if dists.is_empty() {
        return Err(domain("product_max_quantile needs at least one distribution"));
    }
    let floor = dists.iter().map(Distribution::support_min).fold(f64::NEG_INFINITY, f64::max);
    if p == 0.0 || product_max_cdf(dists, floor) >= p {
        return Ok(floor);
    }

    let mut lo = floor;
    let ceiling = dists.iter().map(Distribution::support_max).fold(f64::NEG_INFINITY, f64::max);
    let mut hi = if ceiling.is_finite() { ceiling } else { floor + 1.0 };
    let mut width = (hi - lo).max(1.0);
    while product_max_cdf(dists, hi) < p {
        lo = hi;
        width *= 2.0;
        hi = lo + width;
        if !hi.is_finite() {
            return Err(domain(format!("could not bracket the {p}-quantile of the maximum")));
        }
    }

    while hi - lo > BISECT_TOL {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if product_max_cdf(dists, mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // With atoms the infimum sits exactly on an atom; bisection only lands near it.
    let snapped = dists
        .iter()
        .filter_map(|d| largest_atom_at_most(d, hi))
        .fold(f64::NEG_INFINITY, f64::max);
    if snapped > lo && product_max_cdf(dists, snapped) >= p {
        return Ok(snapped);
    }
    Ok(hi)
}

fn largest_atom_at_most(d: &Distribution, x: f64) -> Option<f64> {
    let atoms = match d {
        Distribution::Discrete { values, .. } => values.as_slice(),
        Distribution::Empirical { samples } => samples.as_slice(),
        _ => return None,
    };
    let k = atoms.partition_point(|a| *a <= x);
    (k > 0).then(|| atoms[k - 1])
}

/// Lexicographic quantile of the augmented maximum: the smallest `(x, u)`
/// with `product_max_augmented_cdf(dists, (x, u)) >= p`.
///
/// For continuous laws the tiebreak is irrelevant and returned as zero.
pub fn product_max_augmented_quantile(dists: &[Distribution], p: f64) -> Result<AugmentedValue> {
    let x = product_max_quantile(dists, p)?;
    let at = |u: f64| product_max_augmented_cdf(dists, AugmentedValue::new(x, u));
    if at(0.0) >= p {
        return Ok(AugmentedValue::new(x, 0.0));
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
    Ok(AugmentedValue::new(x, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn u01() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    fn two_point() -> Distribution {
        Distribution::discrete(vec![1.0, 2.0], vec![0.3, 0.7]).unwrap()
    }

    fn all_variants() -> Vec<Distribution> {
        vec![
            u01(),
            Distribution::uniform(-2.0, 3.0).unwrap(),
            Distribution::exponential(1.0).unwrap(),
            Distribution::exponential(0.2).unwrap(),
            two_point(),
            Distribution::discrete(vec![0.0, 0.5, 4.0], vec![0.2, 0.0, 0.8]).unwrap(),
            Distribution::empirical(vec![0.3, -1.0, 0.3, 2.5, 7.0]).unwrap(),
        ]
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(u01().cdf(0.5), 0.5);
        assert_eq!(Distribution::exponential(1.0).unwrap().cdf(0.0), 0.0);
        assert_eq!(two_point().cdf(1.5), 0.3);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(u01().quantile(0.25).unwrap(), 0.25);
        let e = Distribution::exponential(1.0).unwrap();
        let q = e.quantile(1.0 - (-2.0f64).exp()).unwrap();
        assert!((q - 2.0).abs() < 1e-12, "{q}");
        assert_eq!(two_point().quantile(0.3).unwrap(), 1.0);
        assert_eq!(two_point().quantile(0.31).unwrap(), 2.0);
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        assert!(matches!(u01().quantile(-0.1), Err(Error::Domain(_))));
        assert!(matches!(u01().quantile(1.5), Err(Error::Domain(_))));
        assert!(matches!(u01().quantile(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Distribution::uniform(1.0, 1.0).is_err());
        assert!(Distribution::exponential(0.0).is_err());
        assert!(Distribution::discrete(vec![2.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(Distribution::discrete(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(Distribution::discrete(vec![1.0, 2.0], vec![-0.1, 1.1]).is_err());
        assert!(Distribution::empirical(vec![]).is_err());
    }

    #[test]
    fn continuous_round_trip() {
        for d in [u01(), Distribution::uniform(-2.0, 3.0).unwrap(), Distribution::exponential(2.5).unwrap()] {
            for k in 0..1000 {
                let p = k as f64 / 1000.0;
                let x = d.quantile(p).unwrap();
                assert!((d.cdf(x) - p).abs() < 1e-10, "{d:?} p={p}");
            }
        }
    }

    #[test]
    fn galois_connection_on_grid() {
        for d in all_variants() {
            let slack = if d.has_atoms() { 0.0 } else { 1e-12 };
            for k in 0..=1000 {
                let p = k as f64 / 1000.0;
                let x = d.quantile(p).unwrap();
                assert!(d.cdf(x) + slack >= p, "{d:?}: cdf(quantile({p})) = {}", d.cdf(x));
            }
            let (lo, hi) = (d.support_min() - 1.0, d.support_max().min(40.0) + 1.0);
            for k in 0..=1000 {
                let x = lo + (hi - lo) * k as f64 / 1000.0;
                let p = d.cdf(x);
                // Below the support the infimum convention puts quantile(0) above x.
                if p > 0.0 && p < 1.0 {
                    // Inverting near p = 1 loses the precision p itself lacks.
                    let tol = if slack > 0.0 { slack * (1.0 + x.abs()) + 4.0 * f64::EPSILON / (1.0 - p) } else { 0.0 };
                    assert!(d.quantile(p).unwrap() <= x + tol, "{d:?}: x={x}");
                }
            }
        }
    }

    #[test]
    fn cdf_limits_and_monotone() {
        for d in all_variants() {
            assert_eq!(d.cdf(f64::NEG_INFINITY), 0.0);
            assert_eq!(d.cdf(f64::INFINITY), 1.0);
            let mut prev = 0.0;
            for k in -200..=800 {
                let c = d.cdf(k as f64 / 20.0);
                assert!(c >= prev);
                prev = c;
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = u01();
        let mut a = RandomStream::new(42, 0);
        let mut b = RandomStream::new(42, 0);
        assert_eq!(d.sample(&mut a).to_bits(), d.sample(&mut b).to_bits());
        assert_eq!(d.sample(&mut a).to_bits(), d.sample(&mut b).to_bits());
    }

    #[test]
    fn sample_means() {
        let mut rng = RandomStream::new(1, 0);
        let u = u01();
        let mean = (0..1_000_000).map(|_| u.sample(&mut rng)).sum::<f64>() / 1e6;
        assert!((mean - 0.5).abs() < 0.002, "{mean}");
        let e = Distribution::exponential(2.0).unwrap();
        let mean = (0..1_000_000).map(|_| e.sample(&mut rng)).sum::<f64>() / 1e6;
        assert!((mean - 0.5).abs() < 0.003, "{mean}");
    }

    #[test]
    fn product_max_cdf_examples() {
        let u2 = Distribution::uniform(0.0, 2.0).unwrap();
        assert_eq!(product_max_cdf(&[u01(), u01()], 0.5), 0.25);
        assert_eq!(product_max_cdf(&[u01()], 0.7), 0.7);
        assert_eq!(product_max_cdf(&[u01(), u2], 1.0), 0.5);
    }

    #[test]
    fn product_max_quantile_examples() {
        let q = product_max_quantile(&[u01(), u01()], 0.25).unwrap();
        assert!((q - 0.5).abs() < 1e-12);
        let e = Distribution::exponential(1.0).unwrap();
        assert_eq!(product_max_quantile(std::slice::from_ref(&e), 0.0).unwrap(), 0.0);
        assert_eq!(product_max_quantile(&[u01(), e.clone()], 0.0).unwrap(), 0.0);
        assert_eq!(
            product_max_quantile(&[Distribution::uniform(-3.0, 1.0).unwrap(), u01()], 0.0).unwrap(),
            0.0
        );

        // Independent oracle: plain bisection on the closed form x(1 - e^-x) = 0.25.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (1.0 - (-mid).exp()) >= 0.25 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let q = product_max_quantile(&[u01(), e], 0.25).unwrap();
        assert!((q - hi).abs() < 1e-11, "{q} vs {hi}");
    }

    #[test]
    fn product_max_quantile_on_atoms() {
        let d = two_point();
        assert_eq!(product_max_quantile(std::slice::from_ref(&d), 0.3).unwrap(), 1.0);
        assert_eq!(product_max_quantile(&[d.clone(), d.clone()], 0.09).unwrap(), 1.0);
        assert_eq!(product_max_quantile(&[d.clone(), d], 0.1).unwrap(), 2.0);
    }

    #[test]
    fn augmented_quantile_inverts_augmented_cdf() {
        let dists = vec![two_point(), u01(), Distribution::empirical(vec![0.1, 0.4, 0.4, 1.5]).unwrap()];
        for k in 1..100 {
            let p = k as f64 / 100.0;
            let t = product_max_augmented_quantile(&dists, p).unwrap();
            let got = product_max_augmented_cdf(&dists, t);
            assert!((got - p).abs() < 1e-9, "p={p}: {got}");
        }
    }

    #[test]
    fn product_max_cdf_matches_frequency() {
        let dists = vec![
            u01(),
            Distribution::exponential(1.0).unwrap(),
            Distribution::uniform(0.0, 2.0).unwrap(),
        ];
        let mut rng = RandomStream::new(99, 0);
        let draws = 100_000;
        let maxima: Vec<f64> = (0..draws)
            .map(|_| dists.iter().map(|d| d.sample(&mut rng)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        for x in [0.3, 0.7, 1.0, 1.4, 1.9] {
            let p = product_max_cdf(&dists, x);
            let freq = maxima.iter().filter(|m| **m <= x).count() as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se, "x={x}: {freq} vs {p}");
        }
    }

    #[test]
    fn augmented_order_is_lexicographic() {
        let a = AugmentedValue::new(1.0, 0.9);
        let b = AugmentedValue::new(2.0, 0.1);
        let c = AugmentedValue::new(2.0, 0.2);
        assert!(a < b && b < c && a < c);
        let mut rng = RandomStream::new(3, 0);
        let d = two_point();
        let mut pairs: Vec<AugmentedValue> =
            (0..10_000).map(|_| AugmentedValue::new(d.sample(&mut rng), rng.uniform())).collect();
        pairs.sort();
        assert!(pairs.windows(2).all(|w| w[0] < w[1]), "exact tie among sampled pairs");
    }

    #[test]
    fn deserialization_path_validates() {
        assert!(Distribution::try_from(RawDistribution::Uniform { lo: 1.0, hi: 0.0 }).is_err());
        assert!(Distribution::try_from(RawDistribution::Exponential { rate: -1.0 }).is_err());
        // Unsorted empirical input is sorted rather than rejected.
        let d = Distribution::try_from(RawDistribution::Empirical { samples: vec![2.0, 1.0] }).unwrap();
        assert_eq!(d, Distribution::Empirical { samples: vec![1.0, 2.0] });
    }

    proptest! {
        #[test]
        fn quantile_monotone_in_p(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for d in all_variants() {
                prop_assert!(d.quantile(lo).unwrap() <= d.quantile(hi).unwrap());
            }
            let dists = all_variants();
            prop_assert!(product_max_quantile(&dists, lo).unwrap() <= product_max_quantile(&dists, hi).unwrap());
        }
    }
}
