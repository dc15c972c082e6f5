//! Mean-shift changepoint detection under a Gaussian cost.
//!
//! Segment costs are residual sums of squares scaled by one variance
//! estimate for the whole series (half the mean squared first difference),
//! so penalties are expressed in units that do not depend on the data scale.
//! Two searches are offered: at most one change (`Amoc`) and exact
//! penalized multiple-change segmentation with pruning (`Pelt`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest segment either search will produce.
pub const MIN_SEGMENT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Amoc,
    Pelt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    /// 1-based index of the last point of each segment; the final entry is
    /// the series length.
    pub changepoints: Vec<usize>,
    pub segment_means: Vec<f64>,
    pub penalty_value: f64,
    pub method: Method,
}

impl Segmentation {
    /// Half-open 0-based ranges covered by each segment.
    pub fn segments(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.changepoints
            .iter()
            .map(|&end| {
                let r = start..end;
                start = end;
                r
            })
            .collect()
    }

    /// Interior changepoints only (excludes the series end).
    pub fn interior(&self) -> &[usize] {
        &self.changepoints[..self.changepoints.len().saturating_sub(1)]
    }

    /// The longest segment, earliest on ties.
    pub fn longest_segment(&self) -> std::ops::Range<usize> {
        self.segments()
            .into_iter()
            .fold(0..0, |best, r| if r.len() > best.len() { r } else { best })
    }

    fn from_ends(series: &[f64], ends: Vec<usize>, penalty: f64, method: Method) -> Self {
        let mut start = 0;
        let segment_means = ends
            .iter()
            .map(|&end| {
                let seg = &series[start..end];
                start = end;
                seg.iter().sum::<f64>() / seg.len() as f64
            })
            .collect();
        Segmentation {
            changepoints: ends,
            segment_means,
            penalty_value: penalty,
            method,
        }
    }
}

/// Variance estimate used to normalize costs: mean squared first difference / 2.
pub fn difference_variance(series: &[f64]) -> f64 {
    if series.len() < 2 {
        return 0.0;
    }
    let ss: f64 = series.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    ss / (series.len() - 1) as f64 / 2.0
}

/// Prefix-sum evaluator for the normalized Gaussian mean cost.
struct Cost {
    s1: Vec<f64>,
    s2: Vec<f64>,
    variance: f64,
}

impl Cost {
    fn new(series: &[f64], variance: f64) -> Self {
        let mut s1 = Vec::with_capacity(series.len() + 1);
        let mut s2 = Vec::with_capacity(series.len() + 1);
        s1.push(0.0);
        s2.push(0.0);
        for &y in series {
            s1.push(s1.last().unwrap() + y);
            s2.push(s2.last().unwrap() + y * y);
        }
        Cost { s1, s2, variance }
    }

    /// Cost of the half-open range `[a, b)`.
    fn of(&self, a: usize, b: usize) -> f64 {
        let len = (b - a) as f64;
        let sum = self.s1[b] - self.s1[a];
        let rss = (self.s2[b] - self.s2[a]) - sum * sum / len;
        rss.max(0.0) / self.variance
    }
}

/// Normalized Gaussian cost of the inclusive 0-based range `[lo, hi]`.
pub fn segment_cost(series: &[f64], lo: usize, hi: usize, variance: f64) -> Result<f64> {
    if variance.is_nan() || variance <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "variance must be positive, got {variance}"
        )));
    }
    if lo > hi || hi >= series.len() {
        return Err(Error::InvalidInput(format!(
            "invalid segment [{lo}, {hi}] for series of length {}",
            series.len()
        )));
    }
    let seg = &series[lo..=hi];
    let m = seg.iter().sum::<f64>() / seg.len() as f64;
    Ok(seg.iter().map(|y| (y - m).powi(2)).sum::<f64>() / variance)
}

/// Default penalty: 3 ln(n).
pub fn mbic_penalty(n: usize) -> Result<f64> {
    if n < 4 {
        return Err(Error::TooShort { needed: 4, got: n });
    }
    Ok(3.0 * (n as f64).ln())
}

fn check_input(series: &[f64], penalty: f64) -> Result<()> {
    if series.len() < 4 {
        return Err(Error::TooShort {
            needed: 4,
            got: series.len(),
        });
    }
    if series.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    if penalty.is_nan() || penalty < 0.0 {
        return Err(Error::InvalidInput(format!(
            "penalty must be non-negative, got {penalty}"
        )));
    }
    Ok(())
}

/// At most one changepoint: the best single split, kept only when it lowers
/// the cost by more than `penalty`.
pub fn detect_amoc(series: &[f64], penalty: f64) -> Result<Segmentation> {
    check_input(series, penalty)?;
    let n = series.len();
    let variance = difference_variance(series);
    if variance == 0.0 {
        return Ok(Segmentation::from_ends(series, vec![n], penalty, Method::Amoc));
    }
    let cost = Cost::new(series, variance);
    let whole = cost.of(0, n);
    let mut best: Option<(usize, f64)> = None;
    for split in MIN_SEGMENT..=n - MIN_SEGMENT {
        let c = cost.of(0, split) + cost.of(split, n);
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((split, c));
        }
    }
    let ends = match best {
        Some((split, c)) if whole - c > penalty => vec![split, n],
        _ => vec![n],
    };
    Ok(Segmentation::from_ends(series, ends, penalty, Method::Amoc))
}

/// Exact minimizer of total cost + penalty × (number of changepoints), with
/// every segment at least [`MIN_SEGMENT`] long.
pub fn detect_pelt(series: &[f64], penalty: f64) -> Result<Segmentation> {
    check_input(series, penalty)?;
    let n = series.len();
    let variance = difference_variance(series);
    if variance == 0.0 {
        return Ok(Segmentation::from_ends(series, vec![n], penalty, Method::Pelt));
    }
    let cost = Cost::new(series, variance);

    // best[t]: optimal penalized cost of series[..t]
    let mut best = vec![f64::INFINITY; n + 1];
    let mut last = vec![0usize; n + 1];
    best[0] = -penalty;
    // (candidate start, time from which it is no longer needed)
    let mut candidates: Vec<(usize, usize)> = Vec::new();

    for t in MIN_SEGMENT..=n {
        // the previous segment end t - MIN_SEGMENT becomes admissible now
        let fresh = t - MIN_SEGMENT;
        if fresh == 0 || best[fresh].is_finite() {
            candidates.push((fresh, usize::MAX));
        }
        candidates.retain(|&(_, expiry)| t < expiry);

        let mut arg = usize::MAX;
        let mut val = f64::INFINITY;
        for &(s, _) in &candidates {
            let v = best[s] + cost.of(s, t) + penalty;
            if v < val || (v == val && s < arg) {
                val = v;
                arg = s;
            }
        }
        best[t] = val;
        last[t] = arg;

        // A start s that is already worse than stopping at t stays worse for
        // every end T at which a segment (t, T] is admissible.
        for c in candidates.iter_mut() {
            if best[c.0] + cost.of(c.0, t) > val && c.1 == usize::MAX {
                c.1 = t + MIN_SEGMENT;
            }
        }
    }

    let mut ends = Vec::new();
    let mut t = n;
    while t > 0 {
        ends.push(t);
        t = last[t];
    }
    ends.reverse();
    Ok(Segmentation::from_ends(series, ends, penalty, Method::Pelt))
}

pub fn detect(series: &[f64], penalty: f64, method: Method) -> Result<Segmentation> {
    match method {
        Method::Amoc => detect_amoc(series, penalty),
        Method::Pelt => detect_pelt(series, penalty),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    /// Unpruned O(n²) dynamic program over every admissible segment start.
    fn exhaustive_dp(series: &[f64], penalty: f64) -> Vec<usize> {
        let n = series.len();
        let v = difference_variance(series);
        if v == 0.0 {
            return vec![n];
        }
        let seg = |a: usize, b: usize| {
            let s = &series[a..b];
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|y| (y - m).powi(2)).sum::<f64>() / v
        };
        let mut f = vec![f64::INFINITY; n + 1];
        let mut arg = vec![0; n + 1];
        f[0] = -penalty;
        for t in MIN_SEGMENT..=n {
            for s in 0..=t - MIN_SEGMENT {
                if !f[s].is_finite() {
                    continue;
                }
                let c = f[s] + seg(s, t) + penalty;
                if c < f[t] - 1e-9 * c.abs().max(1.0) {
                    f[t] = c;
                    arg[t] = s;
                }
            }
        }
        let mut ends = vec![];
        let mut t = n;
        while t > 0 {
            ends.push(t);
            t = arg[t];
        }
        ends.reverse();
        ends
    }

    /// Brute force over all admissible segmentations (small n only).
    fn enumerate(series: &[f64], penalty: f64) -> f64 {
        let n = series.len();
        let v = difference_variance(series);
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << (n - 1)) {
            let mut ends: Vec<usize> = (1..n).filter(|i| mask >> (i - 1) & 1 == 1).collect();
            ends.push(n);
            let mut start = 0;
            let mut total = -penalty;
            let mut ok = true;
            for &e in &ends {
                if e - start < MIN_SEGMENT {
                    ok = false;
                    break;
                }
                total += segment_cost(series, start, e - 1, v).unwrap() + penalty;
                start = e;
            }
            if ok {
                best = best.min(total);
            }
        }
        best
    }

    fn penalized(series: &[f64], ends: &[usize], penalty: f64) -> f64 {
        let v = difference_variance(series);
        let mut start = 0;
        let mut total = -penalty;
        for &e in ends {
            total += segment_cost(series, start, e - 1, v).unwrap() + penalty;
            start = e;
        }
        total
    }

    #[test]
    fn constant_segment_costs_nothing() {
        assert_eq!(segment_cost(&[5.0, 5.0, 5.0], 0, 2, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn two_point_segment_cost() {
        assert_eq!(segment_cost(&[0.0, 2.0], 0, 1, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn singleton_costs_nothing() {
        assert_eq!(segment_cost(&[3.0, 9.0], 1, 1, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn nonpositive_variance_rejected() {
        assert!(segment_cost(&[1.0, 2.0], 0, 1, 0.0).is_err());
        assert!(segment_cost(&[1.0, 2.0], 0, 1, -1.0).is_err());
    }

    #[test]
    fn cost_is_additive_over_disjoint_segments() {
        let y = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let c = Cost::new(&y, 1.3);
        let direct = segment_cost(&y, 0, 2, 1.3).unwrap() + segment_cost(&y, 3, 5, 1.3).unwrap();
        assert!((c.of(0, 3) + c.of(3, 6) - direct).abs() < 1e-12);
    }

    #[test]
    fn amoc_finds_perfect_step() {
        let s = detect_amoc(&[0.0, 0.0, 0.0, 10.0, 10.0, 10.0], 1.0).unwrap();
        assert_eq!(s.changepoints, vec![3, 6]);
        assert_eq!(s.segment_means, vec![0.0, 10.0]);
    }

    #[test]
    fn amoc_quiet_on_flat_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
        let pen = mbic_penalty(y.len()).unwrap();
        let s = detect_amoc(&y, pen).unwrap();
        // exhaustive split search agrees no single split clears the penalty
        let v = difference_variance(&y);
        let whole = segment_cost(&y, 0, 99, v).unwrap();
        let best = (2..=98)
            .map(|k| segment_cost(&y, 0, k - 1, v).unwrap() + segment_cost(&y, k, 99, v).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(whole - best <= pen);
        assert_eq!(s.changepoints, vec![100]);
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            detect_amoc(&[1.0, 2.0, 3.0], 1.0),
            Err(Error::TooShort { needed: 4, got: 3 })
        ));
        assert!(detect_pelt(&[1.0, 2.0, 3.0], 1.0).is_err());
    }

    #[test]
    fn pelt_finds_two_steps() {
        let y = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 0.0, 0.0, 0.0];
        let s = detect_pelt(&y, 1.0).unwrap();
        assert_eq!(s.changepoints, vec![3, 6, 9]);
        assert_eq!(s.interior(), &[3, 6]);
    }

    #[test]
    fn huge_penalty_gives_one_segment() {
        let y = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 0.0, 0.0, 0.0];
        assert_eq!(detect_pelt(&y, 1e12).unwrap().changepoints, vec![9]);
        assert_eq!(detect_amoc(&y, 1e12).unwrap().changepoints, vec![9]);
    }

    #[test]
    fn constant_series_is_one_segment() {
        let s = detect_pelt(&[2.0; 8], 0.0).unwrap();
        assert_eq!(s.changepoints, vec![8]);
        assert_eq!(s.segment_means, vec![2.0]);
    }

    #[test]
    fn pelt_matches_unpruned_dp_on_random_fixture() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(40);
        let y: Vec<f64> = (0..40)
            .map(|i| (i / 10) as f64 * 1.5 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let pen = mbic_penalty(40).unwrap();
        let s = detect_pelt(&y, pen).unwrap();
        assert_eq!(s.changepoints, exhaustive_dp(&y, pen));
    }

    #[test]
    fn mbic_values() {
        assert!((mbic_penalty(20).unwrap() - 8.987196820661973).abs() < 1e-12);
        assert!(mbic_penalty(1).is_err());
        assert!(mbic_penalty(200).unwrap() > mbic_penalty(100).unwrap());
    }

    #[test]
    fn longest_segment_prefers_earliest() {
        let s = Segmentation {
            changepoints: vec![3, 6, 8],
            segment_means: vec![0.0; 3],
            penalty_value: 0.0,
            method: Method::Pelt,
        };
        assert_eq!(s.longest_segment(), 0..3);
    }

    proptest! {
        #[test]
        fn pelt_equals_exhaustive(
            y in prop::collection::vec(-5.0f64..5.0, 4..=20),
            pen in 0.0f64..15.0,
        ) {
            let s = detect_pelt(&y, pen).unwrap();
            let oracle = exhaustive_dp(&y, pen);
            let got = penalized(&y, &s.changepoints, pen);
            let want = penalized(&y, &oracle, pen);
            prop_assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{:?} vs {:?}", s.changepoints, oracle);
        }

        #[test]
        fn pelt_reaches_enumerated_optimum(
            y in prop::collection::vec(-5.0f64..5.0, 4..=11),
            pen in 0.0f64..8.0,
        ) {
            let s = detect_pelt(&y, pen).unwrap();
            let got = penalized(&y, &s.changepoints, pen);
            prop_assert!((got - enumerate(&y, pen)).abs() < 1e-9 * got.abs().max(1.0));
        }

        #[test]
        fn shift_and_scale_leave_changepoints(
            y in prop::collection::vec(-5.0f64..5.0, 4..=30),
            shift in -100.0f64..100.0,
            scale in 0.1f64..10.0,
        ) {
            let pen = mbic_penalty(y.len()).unwrap();
            let base = detect_pelt(&y, pen).unwrap();
            let moved: Vec<f64> = y.iter().map(|v| v * scale + shift).collect();
            let other = detect_pelt(&moved, pen).unwrap();
            let vb = difference_variance(&y);
            let vo = difference_variance(&moved);
            prop_assert!((vo - vb * scale * scale).abs() < 1e-6 * vo.max(1e-12));
            prop_assert_eq!(base.changepoints, other.changepoints);
        }

        #[test]
        fn segment_means_match(y in prop::collection::vec(-5.0f64..5.0, 4..=30), pen in 0.0f64..6.0) {
            let s = detect_pelt(&y, pen).unwrap();
            prop_assert_eq!(*s.changepoints.last().unwrap(), y.len());
            prop_assert!(s.changepoints.windows(2).all(|w| w[0] < w[1]));
            for (r, m) in s.segments().into_iter().zip(&s.segment_means) {
                let direct = y[r.clone()].iter().sum::<f64>() / r.len() as f64;
                prop_assert!((direct - m).abs() < 1e-9);
            }
        }
    }
}
