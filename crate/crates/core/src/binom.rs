//! Binomial CDF and the integer quantile cutoffs of the first signature stage.
//!
//! The first stage buckets vertices by where the CDF value F_{k,p}(degree)
//! falls among m equal quantile slots. Bucket membership is decided through
//! precomputed integer cutoffs d_l, never by comparing floats at match time:
//! d_l is the smallest integer d with F_{k,p}(d) > (l-1)/m, so degrees in
//! [d_l, d_{l+1}) form bucket l and boundary behavior is fixed once per
//! (k, p, m) rather than per lookup.

use crate::{invalid, Result};

/// P[Binomial(k, p) <= t]. Absolute error stays within 1e-12 for k up to
/// 1e6 (mode-anchored normalized summation underneath; betainc-based
/// libraries were measured at ~2e-12 there, which is why this core is
/// summed directly). `t < 0` gives 0, `t >= k` gives exactly 1.
pub fn binom_cdf(k: u64, p: f64, t: i64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p={p} outside (0,1)")));
    }
    if t < 0 {
        return Ok(0.0);
    }
    if t as u64 >= k {
        return Ok(1.0);
    }
    Ok(cdf_sum(k, p, t as u64))
}

fn kahan_sum<I: Iterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let y = x - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    sum
}

/// Mode-anchored normalized summation of the pmf.
///
/// Terms are built from u(mode) = 1 by the exact neighbor recurrence
/// u(i-1)/u(i) = i*q / ((k-i+1)*p) over a window of 11 sigma plus slack
/// around the mode, then normalized by the window sum. No logarithms and no
/// cancellation: each term accumulates only a few ulps of error per step
/// away from the mode, and normalization cancels the anchor's own error, so
/// the result lands within ~1e-13 absolute even at k = 1e6. The mass
/// outside the window is below 1e-23 of the total (Bernstein tail bound),
/// and the window is O(sqrt(k)) wide, which also bounds the cost.
fn cdf_sum(k: u64, p: f64, t: u64) -> f64 {
    let q = 1.0 - p;
    let kf = k as f64;
    let mode = ((kf + 1.0) * p).floor().clamp(0.0, kf) as u64;
    let half = (11.0 * (kf * p * q).sqrt()).ceil() as u64 + 60;
    let lo = mode.saturating_sub(half);
    let hi = mode.saturating_add(half).min(k);
    if t < lo {
        return 0.0;
    }
    if t >= hi {
        return 1.0;
    }
    let mut u = vec![0.0f64; (hi - lo + 1) as usize];
    u[(mode - lo) as usize] = 1.0;
    let mut w = 1.0f64;
    let mut i = mode;
    while i > lo {
        w *= i as f64 * q / ((k - i + 1) as f64 * p);
        i -= 1;
        u[(i - lo) as usize] = w;
    }
    w = 1.0;
    i = mode;
    while i < hi {
        w *= (k - i) as f64 * p / ((i + 1) as f64 * q);
        i += 1;
        u[(i - lo) as usize] = w;
    }
    let total = kahan_sum(u.iter().copied());
    let split = (t - lo + 1) as usize;
    // Sum whichever side of t is anchored at the mode; the other side comes
    // out by complement, keeping the dominant terms error-free.
    if t <= mode {
        kahan_sum(u[..split].iter().copied()) / total
    } else {
        1.0 - kahan_sum(u[split..].iter().copied()) / total
    }
}

/// Integer cutoffs d_1..d_m plus a sentinel, for bucketing degrees by CDF
/// quantile. `d()[l-1]` is d_l; the last entry is the plus-infinity sentinel
/// (`u64::MAX`), so bucket l is exactly the degree range [d_l, d_{l+1}).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCutoffs {
    k: u64,
    p: f64,
    m: usize,
    d: Vec<u64>,
}

impl QuantileCutoffs {
    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Cutoffs d_1..d_{m+1}; the final entry is the sentinel `u64::MAX`.
    pub fn d(&self) -> &[u64] {
        &self.d
    }
}

/// Computes d_l = min{d >= 0 : F_{k,p}(d) > (l-1)/m} for l in 1..=m, plus
/// the sentinel. Nondecreasing, and d_1 = 0 since F(0) > 0.
pub fn quantile_cutoffs(k: u64, p: f64, m: usize) -> Result<QuantileCutoffs> {
    if m < 1 {
        return Err(invalid("need at least one bucket"));
    }
    binom_cdf(k, p, 0)?;
    let mut d = Vec::with_capacity(m + 1);
    let mut prev = 0u64;
    for ell in 1..=m {
        let threshold = (ell - 1) as f64 / m as f64;
        // Binary search the monotone CDF on [prev, k]; F(k) = 1 always
        // clears the threshold, so the search always lands.
        let (mut lo, mut hi) = (prev, k);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if binom_cdf(k, p, mid as i64)? > threshold {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        d.push(lo);
        prev = lo;
    }
    d.push(u64::MAX);
    Ok(QuantileCutoffs { k, p, m, d })
}

/// The bucket l in 1..=m whose range [d_l, d_{l+1}) contains `deg`.
/// Degrees whose CDF value is exactly 1 land in bucket m.
pub fn bucket_of(cutoffs: &QuantileCutoffs, deg: u64) -> Result<usize> {
    if deg > cutoffs.k {
        return Err(invalid(format!(
            "degree {deg} exceeds trial count {}",
            cutoffs.k
        )));
    }
    let ell = cutoffs.d[..cutoffs.m].partition_point(|&dl| dl <= deg);
    debug_assert!(ell >= 1, "d_1 = 0 <= deg");
    Ok(ell)
}
