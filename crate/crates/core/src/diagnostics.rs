//! Measurement helpers for the quantities the matcher's correctness story
//! rests on: how well the first and second generations of the two graphs
//! line up through the hidden permutation, how faithful a sampled instance
//! is to its model parameters, and how close a recovered permutation is to
//! the truth. Everything here is observational; nothing feeds back into the
//! matcher.

use crate::graph::VertexSet;
use crate::matcher::SecondGeneration;
use crate::model::{estimate_p, transport_set, CorrelatedInstance, Permutation};
use crate::{invalid, Result};

/// Alignment of one first-generation bucket pair: Q_l against pi(Q'_l).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FirstGenRow {
    /// 1-based bucket index l.
    pub bucket: usize,
    pub size: usize,
    pub size_prime: usize,
    /// |Q_l intersect pi(Q'_l)|.
    pub intersection: usize,
    /// |Q_l symmetric-difference pi(Q'_l)|.
    pub sym_diff: usize,
}

/// Per-bucket overlap between the two first generations, with the primed
/// buckets transported through `pi` first.
pub fn first_gen_overlap_stats(
    q: &[VertexSet],
    q_prime: &[VertexSet],
    pi: &Permutation,
) -> Result<Vec<FirstGenRow>> {
    if q.is_empty() || q.len() != q_prime.len() {
        return Err(invalid("bucket lists are empty or of different lengths"));
    }
    let n = pi.n();
    if q.iter().chain(q_prime).any(|s| s.n() != n) {
        return Err(invalid("bucket universe differs from the permutation"));
    }
    let mut rows = Vec::with_capacity(q.len());
    for (l, (ql, ql_prime)) in q.iter().zip(q_prime).enumerate() {
        let transported = transport_set(ql_prime, pi)?;
        let intersection = ql.intersection_card(&transported);
        rows.push(FirstGenRow {
            bucket: l + 1,
            size: ql.card(),
            size_prime: ql_prime.card(),
            intersection,
            sym_diff: ql.card() + ql_prime.card() - 2 * intersection,
        });
    }
    Ok(rows)
}

/// Alignment of one code's buckets: R_s against pi(R'_s) and pi(B').
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecondGenRow {
    pub code: u64,
    pub size: usize,
    pub size_prime: usize,
    pub intersection: usize,
    /// |R_s ∩ pi(B')|: how much of the bucket lands inside the primed split.
    pub b_prime_overlap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondGenStats {
    /// One row per code present in either second generation, ascending.
    pub rows: Vec<SecondGenRow>,
    /// The good-code intersection threshold beta^2 * n / 2^(m+6).
    pub threshold: f64,
    /// Codes (out of all 2^m) whose transported intersection fails to
    /// strictly exceed the threshold. Codes absent from both sides have an
    /// empty intersection and count as bad.
    pub bad_code_count: u64,
    pub m: usize,
}

/// Per-code overlap between the two second generations, the primed buckets
/// transported through `pi`, plus the bad-code census at the threshold
/// beta^2 * n / 2^(m+6).
pub fn second_gen_overlap_stats(
    sg: &SecondGeneration,
    sg_prime: &SecondGeneration,
    pi: &Permutation,
    b_prime: &VertexSet,
    beta: f64,
) -> Result<SecondGenStats> {
    if sg.m() != sg_prime.m() {
        return Err(invalid("second generations have different code widths"));
    }
    if sg.n() != pi.n() || sg_prime.n() != pi.n() || b_prime.n() != pi.n() {
        return Err(invalid("second generation universe differs from the permutation"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta={beta} outside (0,1)")));
    }
    let m = sg.m();
    let n = sg.n();
    let threshold = beta * beta * n as f64 / (1u64 << (m + 6)) as f64;
    let mut codes: Vec<u64> = sg.codes().map(|(s, _)| s).collect();
    codes.extend(sg_prime.codes().map(|(s, _)| s));
    codes.sort_unstable();
    codes.dedup();
    let empty = VertexSet::empty(n);
    let b_prime_image = transport_set(b_prime, pi)?;
    let mut rows = Vec::with_capacity(codes.len());
    let mut good = 0u64;
    for s in codes {
        let r = sg.bucket(s).unwrap_or(&empty);
        let r_prime = sg_prime.bucket(s).unwrap_or(&empty);
        let intersection = r.intersection_card(&transport_set(r_prime, pi)?);
        if intersection as f64 > threshold {
            good += 1;
        }
        rows.push(SecondGenRow {
            code: s,
            size: r.card(),
            size_prime: r_prime.card(),
            intersection,
            b_prime_overlap: r.intersection_card(&b_prime_image),
        });
    }
    Ok(SecondGenStats {
        rows,
        threshold,
        bad_code_count: (1u64 << m) - good,
        m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelStats {
    pub density_g_pi: f64,
    pub density_g_prime: f64,
    /// Fraction of g_prime edges {i,j} whose image {pi(i),pi(j)} is an edge
    /// of g_pi; None when g_prime has no edges. Estimates 1 - alpha.
    pub retention: Option<f64>,
}

pub fn model_stats(inst: &CorrelatedInstance) -> Result<ModelStats> {
    let density_g_pi = estimate_p(&inst.g_pi)?;
    let density_g_prime = estimate_p(&inst.g_prime)?;
    let mut edges = 0u64;
    let mut kept = 0u64;
    for (i, j) in inst.g_prime.edges() {
        edges += 1;
        if inst.g_pi.has_edge(inst.truth.map(i), inst.truth.map(j)) {
            kept += 1;
        }
    }
    Ok(ModelStats {
        density_g_pi,
        density_g_prime,
        retention: (edges > 0).then(|| kept as f64 / edges as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    /// Fraction of vertices j with pi_hat(j) = pi(j).
    pub fraction: f64,
    pub exact: bool,
}

pub fn accuracy(pi_hat: &Permutation, truth: &Permutation) -> Result<Accuracy> {
    let n = truth.n();
    if pi_hat.n() != n {
        return Err(invalid("permutations have different lengths"));
    }
    let hits = (0..n).filter(|&j| pi_hat.map(j) == truth.map(j)).count();
    Ok(Accuracy {
        fraction: hits as f64 / n as f64,
        exact: hits == n,
    })
}
