//! The multistage signature matcher.
//!
//! One repetition ("round") of the pipeline:
//! 1. split the vertices of each graph uniformly into stage sets A, B, C
//!    with |B| = |C| = floor(0.5*beta*n);
//! 2. first generation: partition A into m quantile buckets Q_1..Q_m by
//!    degree into A, using Binomial(|A|, p) quantile cutoffs;
//! 3. second generation: give every vertex of B an m-bit code, bit l set
//!    iff its neighbor count into Q_{l+1} weakly exceeds p*|Q_{l+1}|, and
//!    group B by code into buckets R_s;
//! 4. draw one shared random index set of omega codes;
//! 5. signatures: give every vertex of C an omega-bit vector, bit t set
//!    iff its neighbor count into R_{s_t} weakly exceeds p*|R_{s_t}|;
//! 6. a pair (i, j) in C x C' is a potential match when its signature
//!    agreement strictly exceeds (omega/2)*(1 + slack).
//!
//! Rounds are aggregated into per-pair tallies; a pair is a candidate when
//! it co-occurred at least once and was a potential match every time. The
//! matcher outputs a permutation only when the candidates form a perfect
//! matching covering all vertices on both sides, and an error marker
//! otherwise. A deterministic best-effort completion is always reported
//! alongside, so experiments can score partial progress.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::binom::{bucket_of, quantile_cutoffs};
use crate::graph::{Graph, VertexSet};
use crate::model::{CorrelatedInstance, Permutation};
use crate::{invalid, Result};

const WORD: usize = 64;

/// Paper-mode repetition counts above this trigger a feasibility warning.
pub const DEFAULT_REPS_CEILING: u64 = 1_000_000;

/// Largest m the simplified variant accepts (its index set is all 2^m codes).
pub const SIMPLIFIED_MAX_M: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Paper,
    Practical,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Paper => "paper",
            Mode::Practical => "practical",
        })
    }
}

/// Statistical knobs of the matcher. `seed` keys the round randomness:
/// round r draws from substream r of a ChaCha12 stream keyed by `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoParams {
    pub beta: f64,
    pub m: usize,
    pub omega: usize,
    pub reps: u64,
    pub threshold_slack: f64,
    pub mode: Mode,
    pub seed: u64,
    /// Set in paper mode; records the delta the parameters were derived from.
    pub delta: Option<f64>,
}

impl AlgoParams {
    /// Stage set size |B| = |C| for a given n.
    pub fn b(&self, n: usize) -> usize {
        (0.5 * self.beta * n as f64).floor() as usize
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid(format!("beta={} outside (0,1)", self.beta)));
        }
        if self.m < 1 || self.m > 63 {
            return Err(invalid(format!("m={} outside 1..=63", self.m)));
        }
        let b = self.b(n);
        if b < 1 {
            return Err(invalid(format!(
                "beta={} gives empty B and C sets at n={n}",
                self.beta
            )));
        }
        if n < 2 * b + 1 {
            return Err(invalid(format!(
                "beta={} leaves the first stage set empty at n={n}",
                self.beta
            )));
        }
        if self.omega < 1 {
            return Err(invalid("omega must be at least 1"));
        }
        if (self.omega as u64) > (1u64 << self.m) {
            return Err(invalid(format!(
                "omega={} exceeds the code space 2^{}",
                self.omega, self.m
            )));
        }
        if self.reps < 1 {
            return Err(invalid("reps must be at least 1"));
        }
        if !(self.threshold_slack >= 0.0 && self.threshold_slack.is_finite()) {
            return Err(invalid(format!(
                "threshold slack {} must be finite and nonnegative",
                self.threshold_slack
            )));
        }
        Ok(())
    }
}

/// Desk-scale defaults: beta 0.4, m 7, omega 64, 20 rounds,
/// slack beta/ln ln n. Requires n >= 16.
pub fn practical_params(n: usize, seed: u64) -> Result<AlgoParams> {
    if n < 16 {
        return Err(invalid(format!("practical defaults need n >= 16, got {n}")));
    }
    let beta = 0.4;
    let params = AlgoParams {
        beta,
        m: 7,
        omega: 64,
        reps: 20,
        threshold_slack: beta / (n as f64).ln().ln(),
        mode: Mode::Practical,
        seed,
        delta: None,
    };
    params.validate(n)?;
    Ok(params)
}

/// Theorem-driven parameters:
/// beta is the least value >= (ln ln n)^(-6-delta) with 0.5*beta*n integral,
/// m = floor(6 log2 ln n), omega = floor((ln n)^(1+2*delta)) capped at 2^m,
/// reps = ceil((ln ln n)^2 / beta^4), slack = beta / ln ln n.
/// Requires n >= 16 and 0 < delta < 0.1. Returns the parameters plus any
/// feasibility warnings (the reps formula easily exceeds desk scale).
pub fn paper_params(n: usize, delta: f64, seed: u64) -> Result<(AlgoParams, Vec<String>)> {
    paper_params_with_ceiling(n, delta, seed, DEFAULT_REPS_CEILING)
}

pub fn paper_params_with_ceiling(
    n: usize,
    delta: f64,
    seed: u64,
    reps_ceiling: u64,
) -> Result<(AlgoParams, Vec<String>)> {
    if n < 16 {
        return Err(invalid(format!("paper parameters need n >= 16, got {n}")));
    }
    if !(delta > 0.0 && delta < 0.1) {
        return Err(invalid(format!("delta={delta} outside (0, 0.1)")));
    }
    let lln = (n as f64).ln().ln();
    let target = lln.powf(-(6.0 + delta));
    let b = (target * n as f64 / 2.0).ceil().max(1.0) as u64;
    let mut beta = 2.0 * b as f64 / n as f64;
    // beta must survive the floor in split_vertices: nudge up by ulps until
    // floor(0.5*beta*n) lands back on b.
    while ((0.5 * beta * n as f64).floor() as u64) < b {
        beta = beta.next_up();
    }
    if n < 2 * b as usize + 1 {
        return Err(invalid(format!(
            "derived beta={beta} leaves the first stage set empty at n={n}"
        )));
    }
    let m = (6.0 * (n as f64).ln().log2()).floor() as usize;
    let mut warnings = Vec::new();
    let mut omega = (n as f64).ln().powf(1.0 + 2.0 * delta).floor() as u64;
    let cap = 1u64 << m.min(63);
    if omega > cap {
        warnings.push(format!("omega {omega} exceeds the code space, capped at {cap}"));
        omega = cap;
    }
    let reps = (lln * lln / beta.powi(4)).ceil() as u64;
    if reps > reps_ceiling {
        warnings.push(format!(
            "derived repetition count {reps} exceeds the feasibility ceiling {reps_ceiling}; \
             consider overriding reps"
        ));
    }
    let params = AlgoParams {
        beta,
        m,
        omega: omega as usize,
        reps,
        threshold_slack: beta / lln,
        mode: Mode::Paper,
        seed,
        delta: Some(delta),
    };
    params.validate(n)?;
    Ok((params, warnings))
}

/// One uniform split into stage sets. |B| = |C| = floor(0.5*beta*n), the
/// remainder is A.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub a: VertexSet,
    pub b: VertexSet,
    pub c: VertexSet,
}

impl Split {
    pub fn n(&self) -> usize {
        self.a.n()
    }

    /// The split with every member pushed through `pi`.
    pub fn transport(&self, pi: &Permutation) -> Result<Split> {
        Ok(Split {
            a: crate::model::transport_set(&self.a, pi)?,
            b: crate::model::transport_set(&self.b, pi)?,
            c: crate::model::transport_set(&self.c, pi)?,
        })
    }
}

/// Uniform random split: shuffle the vertices; the first b become B, the
/// next b become C, the rest A.
pub fn split_vertices<R: Rng>(n: usize, beta: f64, rng: &mut R) -> Result<Split> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta={beta} outside (0,1)")));
    }
    let b = (0.5 * beta * n as f64).floor() as usize;
    if b < 1 {
        return Err(invalid(format!(
            "beta={beta} gives empty B and C sets at n={n}"
        )));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    Ok(Split {
        b: VertexSet::from_members(n, ids[..b].iter().copied())?,
        c: VertexSet::from_members(n, ids[b..2 * b].iter().copied())?,
        a: VertexSet::from_members(n, ids[2 * b..].iter().copied())?,
    })
}

/// First generation: partition `a` into m buckets by degree into `a`,
/// bucket l holding the vertices whose induced degree falls in the l-th
/// Binomial(|a|, p) quantile interval.
pub fn first_generation(g: &Graph, a: &VertexSet, p: f64, m: usize) -> Result<Vec<VertexSet>> {
    if a.n() != g.n() {
        return Err(invalid("stage set size differs from the graph"));
    }
    if a.is_empty() {
        return Err(invalid("first generation needs a nonempty stage set"));
    }
    let cutoffs = quantile_cutoffs(a.card() as u64, p, m)?;
    let mut buckets = vec![VertexSet::empty(g.n()); m];
    for v in a.iter() {
        let deg = g.induced_degree(v, a) as u64;
        let l = bucket_of(&cutoffs, deg)?;
        buckets[l - 1].insert(v);
    }
    Ok(buckets)
}

/// Second generation: the vertices of B grouped by their m-bit codes.
/// Only codes that actually occur are stored; `bucket` returns None for
/// the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondGeneration {
    n: usize,
    m: usize,
    buckets: BTreeMap<u64, VertexSet>,
}

impl SecondGeneration {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bucket(&self, code: u64) -> Option<&VertexSet> {
        self.buckets.get(&code)
    }

    /// Occupied codes in increasing order.
    pub fn codes(&self) -> impl Iterator<Item = (u64, &VertexSet)> {
        self.buckets.iter().map(|(&s, r)| (s, r))
    }

    /// Total membership over all buckets; equals |B|.
    pub fn total(&self) -> usize {
        self.buckets.values().map(|r| r.card()).sum()
    }
}

/// Codes every vertex of `b`: bit l is set iff the neighbor count into
/// `q[l]` weakly exceeds p*|q[l]| (the one-product float rule; empty
/// buckets therefore set their bit).
pub fn second_generation(
    g: &Graph,
    b: &VertexSet,
    q: &[VertexSet],
    p: f64,
) -> Result<SecondGeneration> {
    let m = q.len();
    if !(1..=63).contains(&m) {
        return Err(invalid(format!("bucket count {m} outside 1..=63")));
    }
    if b.n() != g.n() || q.iter().any(|ql| ql.n() != g.n()) {
        return Err(invalid("stage set size differs from the graph"));
    }
    let thresholds: Vec<f64> = q.iter().map(|ql| p * ql.card() as f64).collect();
    let mut buckets: BTreeMap<u64, VertexSet> = BTreeMap::new();
    for v in b.iter() {
        let mut code = 0u64;
        for (l, ql) in q.iter().enumerate() {
            if g.neighbor_count_in(v, ql) as f64 >= thresholds[l] {
                code |= 1 << l;
            }
        }
        buckets
            .entry(code)
            .or_insert_with(|| VertexSet::empty(g.n()))
            .insert(v);
    }
    Ok(SecondGeneration {
        n: g.n(),
        m,
        buckets,
    })
}

/// Uniform random omega-subset of the 2^m codes, sorted. Floyd's algorithm:
/// exactly omega draws regardless of the code space size.
pub fn sample_index_set<R: Rng>(m: usize, omega: usize, rng: &mut R) -> Result<Vec<u64>> {
    if !(1..=63).contains(&m) {
        return Err(invalid(format!("m={m} outside 1..=63")));
    }
    let space = 1u64 << m;
    if omega < 1 || omega as u64 > space {
        return Err(invalid(format!(
            "omega={omega} outside 1..=2^{m}"
        )));
    }
    let mut chosen = std::collections::BTreeSet::new();
    for j in (space - omega as u64)..space {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    Ok(chosen.into_iter().collect())
}

/// Omega-bit signatures for the vertices of one C set, bit t per index-set
/// code s_t. Bits above omega stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureTable {
    omega: usize,
    blocks: usize,
    index_set: Vec<u64>,
    vertices: Vec<usize>,
    sigs: Vec<u64>,
}

impl SignatureTable {
    pub fn omega(&self) -> usize {
        self.omega
    }

    pub fn index_set(&self) -> &[u64] {
        &self.index_set
    }

    /// The C vertices in increasing order; row idx of the table belongs to
    /// vertices()[idx].
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn sig(&self, idx: usize) -> &[u64] {
        &self.sigs[idx * self.blocks..(idx + 1) * self.blocks]
    }

    pub fn sig_of(&self, v: usize) -> Option<&[u64]> {
        self.vertices.binary_search(&v).ok().map(|idx| self.sig(idx))
    }
}

/// Builds the signature table: bit t of vertex v is set iff the neighbor
/// count of v into bucket R_{s_t} weakly exceeds p*|R_{s_t}|. Codes absent
/// from the second generation count as empty buckets and set their bit.
pub fn signatures(
    g: &Graph,
    c: &VertexSet,
    sg: &SecondGeneration,
    index_set: &[u64],
    p: f64,
) -> Result<SignatureTable> {
    if c.n() != g.n() || sg.n() != g.n() {
        return Err(invalid("stage set size differs from the graph"));
    }
    if index_set.is_empty() {
        return Err(invalid("index set is empty"));
    }
    let space = 1u64 << sg.m();
    if !index_set.windows(2).all(|w| w[0] < w[1]) {
        return Err(invalid("index set must be strictly increasing"));
    }
    if *index_set.last().unwrap() >= space {
        return Err(invalid(format!(
            "index set contains a code outside the 2^{} space",
            sg.m()
        )));
    }
    let omega = index_set.len();
    let blocks = omega.div_ceil(WORD);
    // (bucket, threshold) per signature bit; absent codes are empty buckets
    // with threshold 0, so their bit is always set.
    let cols: Vec<(Option<&VertexSet>, f64)> = index_set
        .iter()
        .map(|&s| {
            let r = sg.bucket(s);
            (r, p * r.map_or(0, |r| r.card()) as f64)
        })
        .collect();
    let vertices: Vec<usize> = c.iter().collect();
    let mut sigs = vec![0u64; vertices.len() * blocks];
    for (idx, &v) in vertices.iter().enumerate() {
        let row = &mut sigs[idx * blocks..(idx + 1) * blocks];
        for (t, (r, thr)) in cols.iter().enumerate() {
            let cnt = r.map_or(0, |r| g.neighbor_count_in(v, r));
            if cnt as f64 >= *thr {
                row[t / WORD] |= 1u64 << (t % WORD);
            }
        }
    }
    Ok(SignatureTable {
        omega,
        blocks,
        index_set: index_set.to_vec(),
        vertices,
        sigs,
    })
}

/// Number of positions where the two omega-bit signatures agree.
pub fn agreement(fi: &[u64], fj: &[u64], omega: usize) -> usize {
    let blocks = omega.div_ceil(WORD);
    assert!(fi.len() == blocks && fj.len() == blocks, "signature width mismatch");
    let diff: u32 = fi.iter().zip(fj).map(|(a, b)| (a ^ b).count_ones()).sum();
    omega - diff as usize
}

/// The decision rule: a pair is a potential match iff its agreement count
/// strictly exceeds (omega/2)*(1 + slack).
pub fn potential_match(fi: &[u64], fj: &[u64], omega: usize, slack: f64) -> Result<bool> {
    if omega < 1 {
        return Err(invalid("omega must be at least 1"));
    }
    let blocks = omega.div_ceil(WORD);
    if fi.len() != blocks || fj.len() != blocks {
        return Err(invalid("signature width differs from omega"));
    }
    if !(slack >= 0.0 && slack.is_finite()) {
        return Err(invalid(format!("slack {slack} must be finite and nonnegative")));
    }
    Ok(agreement(fi, fj, omega) as f64 > 0.5 * omega as f64 * (1.0 + slack))
}

/// The random choices of one round, drawn in a frozen order: split for the
/// first graph, split for the second, then the shared index set.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundParts {
    pub split: Split,
    pub split_prime: Split,
    pub index_set: Vec<u64>,
}

/// Stage randomness of one round under the matcher's seeding discipline:
/// round r draws from substream r of the ChaCha12 stream keyed by
/// `params.seed`.
pub fn round_parts(n: usize, params: &AlgoParams, round: u64) -> Result<RoundParts> {
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
    rng.set_stream(round);
    draw_round_parts(n, params, &mut rng)
}

pub fn draw_round_parts<R: Rng>(n: usize, params: &AlgoParams, rng: &mut R) -> Result<RoundParts> {
    params.validate(n)?;
    let split = split_vertices(n, params.beta, rng)?;
    let split_prime = split_vertices(n, params.beta, rng)?;
    let index_set = sample_index_set(params.m, params.omega, rng)?;
    Ok(RoundParts {
        split,
        split_prime,
        index_set,
    })
}

/// Everything one round produced, kept around so each stage can be audited.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub split: Split,
    pub split_prime: Split,
    pub index_set: Vec<u64>,
    pub q: Vec<VertexSet>,
    pub q_prime: Vec<VertexSet>,
    pub sg: SecondGeneration,
    pub sg_prime: SecondGeneration,
    pub sigs: SignatureTable,
    pub sigs_prime: SignatureTable,
    potential: Vec<u64>,
    pstride: usize,
}

impl RoundResult {
    pub fn n(&self) -> usize {
        self.split.n()
    }

    /// C vertices of the first graph, ascending; the i side of pairs.
    pub fn c_vertices(&self) -> &[usize] {
        self.sigs.vertices()
    }

    /// C' vertices of the second graph, ascending; the j side of pairs.
    pub fn c_prime_vertices(&self) -> &[usize] {
        self.sigs_prime.vertices()
    }

    /// Potential-match flag by row/column position in the C and C' lists.
    pub fn is_potential_pos(&self, ci: usize, cj: usize) -> bool {
        assert!(ci < self.c_vertices().len() && cj < self.c_prime_vertices().len());
        self.potential[ci * self.pstride + cj / WORD] >> (cj % WORD) & 1 == 1
    }

    /// Potential-match flag by vertex ids; false when (i, j) is not in C x C'.
    pub fn is_potential(&self, i: usize, j: usize) -> bool {
        let (Ok(ci), Ok(cj)) = (
            self.c_vertices().binary_search(&i),
            self.c_prime_vertices().binary_search(&j),
        ) else {
            return false;
        };
        self.is_potential_pos(ci, cj)
    }

    pub fn potential_pairs(&self) -> u64 {
        self.potential.iter().map(|w| w.count_ones() as u64).sum()
    }
}

/// Runs one round with the given random choices.
pub fn run_round_with_parts(
    g_pi: &Graph,
    g_prime: &Graph,
    p: f64,
    params: &AlgoParams,
    parts: &RoundParts,
) -> Result<RoundResult> {
    let n = g_pi.n();
    if g_prime.n() != n {
        return Err(invalid("graphs have different sizes"));
    }
    if parts.split.n() != n || parts.split_prime.n() != n {
        return Err(invalid("round parts were drawn for a different n"));
    }
    if parts.index_set.len() != params.omega {
        return Err(invalid("index set size differs from omega"));
    }
    params.validate(n)?;
    let q = first_generation(g_pi, &parts.split.a, p, params.m)?;
    let q_prime = first_generation(g_prime, &parts.split_prime.a, p, params.m)?;
    let sg = second_generation(g_pi, &parts.split.b, &q, p)?;
    let sg_prime = second_generation(g_prime, &parts.split_prime.b, &q_prime, p)?;
    let sigs = signatures(g_pi, &parts.split.c, &sg, &parts.index_set, p)?;
    let sigs_prime = signatures(g_prime, &parts.split_prime.c, &sg_prime, &parts.index_set, p)?;
    let rows = sigs.vertices().len();
    let cols = sigs_prime.vertices().len();
    let pstride = cols.div_ceil(WORD);
    let threshold = 0.5 * params.omega as f64 * (1.0 + params.threshold_slack);
    let mut potential = vec![0u64; rows * pstride];
    for ci in 0..rows {
        let fi = sigs.sig(ci);
        let row = &mut potential[ci * pstride..(ci + 1) * pstride];
        for cj in 0..cols {
            let fj = sigs_prime.sig(cj);
            if agreement(fi, fj, params.omega) as f64 > threshold {
                row[cj / WORD] |= 1u64 << (cj % WORD);
            }
        }
    }
    Ok(RoundResult {
        split: parts.split.clone(),
        split_prime: parts.split_prime.clone(),
        index_set: parts.index_set.clone(),
        q,
        q_prime,
        sg,
        sg_prime,
        sigs,
        sigs_prime,
        potential,
        pstride,
    })
}

/// Draws fresh round parts from `rng` and runs one round.
pub fn run_round<R: Rng>(
    inst: &CorrelatedInstance,
    p: f64,
    params: &AlgoParams,
    rng: &mut R,
) -> Result<RoundResult> {
    let parts = draw_round_parts(inst.g_pi.n(), params, rng)?;
    run_round_with_parts(&inst.g_pi, &inst.g_prime, p, params, &parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The candidate pairs formed a perfect matching; pi_hat is it.
    Permutation,
    /// They did not; only the best-effort completion is available.
    Error,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Permutation => "permutation",
            Outcome::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundStats {
    pub round: u64,
    pub c_size: usize,
    pub c_prime_size: usize,
    pub potential_pairs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub outcome: Outcome,
    /// Present exactly when outcome is Permutation: image[j] = i.
    pub pi_hat: Option<Permutation>,
    /// Fraction of the n^2 pairs that co-occurred in some round.
    pub coverage: f64,
    pub round_stats: Vec<RoundStats>,
    /// Best-effort permutation, always present; equals pi_hat on success.
    pub completion: Permutation,
    /// Vertices the completion had to pair by index order for lack of any
    /// co-occurring partner.
    pub forced_pairs: usize,
}

/// Per-pair co-occurrence and potential-match counters over rounds.
/// Two u32 planes of n^2 entries: 8*n^2 bytes, fine through n = 2^14.
pub struct MatchTally {
    n: usize,
    cooccur: Vec<u32>,
    potential: Vec<u32>,
}

impl MatchTally {
    pub fn new(n: usize) -> Result<MatchTally> {
        if n < 1 {
            return Err(invalid("tally needs n >= 1"));
        }
        Ok(MatchTally {
            n,
            cooccur: vec![0; n * n],
            potential: vec![0; n * n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The aggregation primitive: pair (i, j) co-occurred once more, with or
    /// without a potential match.
    pub fn record_pair(&mut self, i: usize, j: usize, potential: bool) {
        assert!(i < self.n && j < self.n, "pair out of range");
        self.cooccur[i * self.n + j] += 1;
        if potential {
            self.potential[i * self.n + j] += 1;
        }
    }

    pub fn absorb_round(&mut self, rr: &RoundResult) -> Result<()> {
        if rr.n() != self.n {
            return Err(invalid("round was run on a different n"));
        }
        for (ci, &i) in rr.c_vertices().iter().enumerate() {
            for (cj, &j) in rr.c_prime_vertices().iter().enumerate() {
                self.record_pair(i, j, rr.is_potential_pos(ci, cj));
            }
        }
        Ok(())
    }

    pub fn cooccur(&self, i: usize, j: usize) -> u32 {
        self.cooccur[i * self.n + j]
    }

    pub fn potential(&self, i: usize, j: usize) -> u32 {
        self.potential[i * self.n + j]
    }

    /// Candidate pairs co-occurred at least once and were potential matches
    /// every single time.
    pub fn is_candidate(&self, i: usize, j: usize) -> bool {
        let k = i * self.n + j;
        self.cooccur[k] >= 1 && self.potential[k] == self.cooccur[k]
    }

    /// Applies the decision rule and builds the best-effort completion.
    pub fn finalize(&self, round_stats: Vec<RoundStats>) -> MatchResult {
        let n = self.n;
        let mut covered = 0u64;
        let mut candidates = Vec::new();
        for (k, &seen) in self.cooccur.iter().enumerate() {
            if seen >= 1 {
                covered += 1;
                if self.potential[k] == seen {
                    candidates.push((k / n, k % n));
                }
            }
        }
        let mut row_cand = vec![0u32; n];
        let mut col_cand = vec![0u32; n];
        for &(i, j) in &candidates {
            row_cand[i] += 1;
            col_cand[j] += 1;
        }
        let perfect = candidates.len() == n
            && row_cand.iter().all(|&c| c == 1)
            && col_cand.iter().all(|&c| c == 1);
        let pi_hat = if perfect {
            let mut image = vec![0usize; n];
            for &(i, j) in &candidates {
                image[j] = i;
            }
            Some(Permutation::from_image(image).expect("perfect matching is a bijection"))
        } else {
            None
        };

        // Best-effort completion: greedily assign covered pairs, candidates
        // first, then by potential count, fewest co-occurrences breaking
        // ties, pair index last. Unmatched vertices pair up in index order.
        let mut ranked = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                if self.cooccur[k] >= 1 {
                    let cand = self.potential[k] == self.cooccur[k];
                    ranked.push((!cand, std::cmp::Reverse(self.potential[k]), self.cooccur[k], i, j));
                }
            }
        }
        ranked.sort_unstable();
        let mut used_i = vec![false; n];
        let mut used_j = vec![false; n];
        let mut image = vec![usize::MAX; n];
        for &(_, _, _, i, j) in &ranked {
            if !used_i[i] && !used_j[j] {
                used_i[i] = true;
                used_j[j] = true;
                image[j] = i;
            }
        }
        let free_i: Vec<usize> = (0..n).filter(|&i| !used_i[i]).collect();
        let mut forced_pairs = 0;
        let mut next = free_i.into_iter();
        for (j, slot) in image.iter_mut().enumerate() {
            if !used_j[j] {
                *slot = next.next().expect("row and column deficits match");
                forced_pairs += 1;
            }
        }
        let completion =
            Permutation::from_image(image).expect("completion covers every vertex once");

        MatchResult {
            outcome: if perfect {
                Outcome::Permutation
            } else {
                Outcome::Error
            },
            pi_hat,
            coverage: covered as f64 / (n as f64 * n as f64),
            round_stats,
            completion,
            forced_pairs,
        }
    }
}

/// Tallies a batch of completed rounds and applies the decision rule.
pub fn aggregate(rounds: &[RoundResult], n: usize) -> Result<MatchResult> {
    if rounds.is_empty() {
        return Err(invalid("aggregate needs at least one round"));
    }
    let mut tally = MatchTally::new(n)?;
    let mut stats = Vec::with_capacity(rounds.len());
    for (r, rr) in rounds.iter().enumerate() {
        tally.absorb_round(rr)?;
        stats.push(RoundStats {
            round: r as u64,
            c_size: rr.c_vertices().len(),
            c_prime_size: rr.c_prime_vertices().len(),
            potential_pairs: rr.potential_pairs(),
        });
    }
    Ok(tally.finalize(stats))
}

/// The full matcher on a pair of graphs: params.reps rounds, round r keyed
/// by substream r of params.seed, tallied as they stream.
pub fn match_graphs_on(
    g_pi: &Graph,
    g_prime: &Graph,
    p: f64,
    params: &AlgoParams,
) -> Result<MatchResult> {
    let n = g_pi.n();
    if g_prime.n() != n {
        return Err(invalid("graphs have different sizes"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p={p} outside (0,1)")));
    }
    params.validate(n)?;
    let mut tally = MatchTally::new(n)?;
    let mut stats = Vec::with_capacity(params.reps as usize);
    for r in 0..params.reps {
        let parts = round_parts(n, params, r)?;
        let rr = run_round_with_parts(g_pi, g_prime, p, params, &parts)?;
        tally.absorb_round(&rr)?;
        stats.push(RoundStats {
            round: r,
            c_size: rr.c_vertices().len(),
            c_prime_size: rr.c_prime_vertices().len(),
            potential_pairs: rr.potential_pairs(),
        });
    }
    Ok(tally.finalize(stats))
}

pub fn match_graphs(
    inst: &CorrelatedInstance,
    p: f64,
    params: &AlgoParams,
) -> Result<MatchResult> {
    match_graphs_on(&inst.g_pi, &inst.g_prime, p, params)
}

/// The single-pass simplified variant: no splitting (every stage uses the
/// full vertex set), the index set is all 2^m codes, and instead of the
/// threshold rule each j is greedily assigned the free i with the highest
/// agreement (ties by smallest i, then smallest j). Always returns a
/// permutation; vertices left without a scored partner are paired in index
/// order and counted in forced_pairs.
pub fn simplified_match(g_pi: &Graph, g_prime: &Graph, p: f64, m: usize) -> Result<MatchResult> {
    let n = g_pi.n();
    if g_prime.n() != n {
        return Err(invalid("graphs have different sizes"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p={p} outside (0,1)")));
    }
    if !(1..=SIMPLIFIED_MAX_M).contains(&m) {
        return Err(invalid(format!(
            "simplified variant needs m in 1..={SIMPLIFIED_MAX_M}, got {m}"
        )));
    }
    let full = VertexSet::full(n);
    let q = first_generation(g_pi, &full, p, m)?;
    let q_prime = first_generation(g_prime, &full, p, m)?;
    let sg = second_generation(g_pi, &full, &q, p)?;
    let sg_prime = second_generation(g_prime, &full, &q_prime, p)?;
    let index_set: Vec<u64> = (0..(1u64 << m)).collect();
    let sigs = signatures(g_pi, &full, &sg, &index_set, p)?;
    let sigs_prime = signatures(g_prime, &full, &sg_prime, &index_set, p)?;
    let omega = index_set.len();

    // Bucket pairs by agreement; scanning buckets downward visits pairs in
    // (agreement desc, i asc, j asc) order, which makes ties deterministic.
    let mut buckets: Vec<Vec<(u32, u32)>> = vec![Vec::new(); omega + 1];
    for i in 0..n {
        let fi = sigs.sig(i);
        for j in 0..n {
            let a = agreement(fi, sigs_prime.sig(j), omega);
            buckets[a].push((i as u32, j as u32));
        }
    }
    let mut used_i = vec![false; n];
    let mut used_j = vec![false; n];
    let mut image = vec![usize::MAX; n];
    let mut assigned = 0usize;
    'outer: for bucket in buckets.iter().rev() {
        for &(i, j) in bucket {
            let (i, j) = (i as usize, j as usize);
            if !used_i[i] && !used_j[j] {
                used_i[i] = true;
                used_j[j] = true;
                image[j] = i;
                assigned += 1;
                if assigned == n {
                    break 'outer;
                }
            }
        }
    }
    let free_i: Vec<usize> = (0..n).filter(|&i| !used_i[i]).collect();
    let mut forced_pairs = 0;
    let mut next = free_i.into_iter();
    for (j, slot) in image.iter_mut().enumerate() {
        if !used_j[j] {
            *slot = next.next().expect("row and column deficits match");
            forced_pairs += 1;
        }
    }
    let completion = Permutation::from_image(image).expect("greedy covers every vertex once");
    Ok(MatchResult {
        outcome: Outcome::Permutation,
        pi_hat: Some(completion.clone()),
        coverage: 1.0,
        round_stats: Vec::new(),
        completion,
        forced_pairs,
    })
}

/// Optional truth-dependent numbers for [`write_match_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportMetrics {
    pub accuracy: f64,
    pub exact: bool,
    pub completion_accuracy: f64,
}

/// Writes the frozen plain-text report: key=value header, one line per
/// round, then the best-effort pairs as "j i" lines (pi_hat when the strict
/// outcome succeeded, since the completion equals it there).
pub fn write_match_report<W: Write>(
    w: &mut W,
    res: &MatchResult,
    metrics: Option<&ReportMetrics>,
) -> io::Result<()> {
    writeln!(w, "outcome={}", res.outcome)?;
    writeln!(w, "coverage={}", res.coverage)?;
    writeln!(w, "rounds={}", res.round_stats.len())?;
    writeln!(w, "forced_pairs={}", res.forced_pairs)?;
    if let Some(m) = metrics {
        writeln!(w, "accuracy={}", m.accuracy)?;
        writeln!(w, "exact={}", m.exact)?;
        writeln!(w, "completion_accuracy={}", m.completion_accuracy)?;
    }
    for s in &res.round_stats {
        writeln!(
            w,
            "round {} c={} c_prime={} potential={}",
            s.round, s.c_size, s.c_prime_size, s.potential_pairs
        )?;
    }
    writeln!(w, "pairs")?;
    for j in 0..res.completion.n() {
        writeln!(w, "{j} {}", res.completion.map(j))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_correlated, ModelParams};
    use rand::rngs::StdRng;

    fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut g = Graph::new(n).unwrap();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(p) {
                    g.add_edge(i, j);
                }
            }
        }
        g
    }

    #[test]
    fn paper_params_theorem_values() {
        let (params, warnings) = paper_params(10_000, 0.05, 0).unwrap();
        assert_eq!(params.m, 19);
        assert_eq!(params.omega, 11);
        assert_eq!(params.b(10_000), 41);
        assert!((params.beta - 0.0082).abs() < 1e-12, "beta {}", params.beta);
        assert!(
            params.reps > 1_080_000_000 && params.reps < 1_100_000_000,
            "reps {}",
            params.reps
        );
        assert_eq!(params.mode, Mode::Paper);
        assert_eq!(params.delta, Some(0.05));
        assert!(
            warnings.iter().any(|w| w.contains("ceiling")),
            "expected a feasibility warning, got {warnings:?}"
        );
    }

    #[test]
    fn paper_params_bounds() {
        assert!(paper_params(15, 0.05, 0).is_err());
        assert!(paper_params(10_000, 0.0, 0).is_err());
        assert!(paper_params(10_000, 0.1, 0).is_err());
        // n=16 derives beta so large that A would be empty.
        assert!(paper_params(16, 0.05, 0).is_err());
        // Moderate n stays under the reps ceiling: no warning.
        let (params, warnings) = paper_params(100, 0.05, 0).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert!(params.validate(100).is_ok());
        assert!(params.reps < DEFAULT_REPS_CEILING);
    }

    #[test]
    fn practical_params_defaults() {
        let params = practical_params(500, 3).unwrap();
        assert_eq!(params.beta, 0.4);
        assert_eq!(params.m, 7);
        assert_eq!(params.omega, 64);
        assert_eq!(params.reps, 20);
        assert_eq!(params.threshold_slack, 0.4 / (500f64).ln().ln());
        assert_eq!(params.mode, Mode::Practical);
        assert_eq!(params.seed, 3);
        assert!(practical_params(15, 0).is_err());
        assert!(practical_params(16, 0).is_ok());
    }

    #[test]
    fn split_sizes_and_partition() {
        let mut rng = StdRng::seed_from_u64(1);
        let s = split_vertices(10, 0.4, &mut rng).unwrap();
        assert_eq!((s.a.card(), s.b.card(), s.c.card()), (6, 2, 2));
        // 0.5*0.45*10 = 2.25 floors to 2; the odd vertex lands in A.
        let s = split_vertices(10, 0.45, &mut rng).unwrap();
        assert_eq!((s.a.card(), s.b.card(), s.c.card()), (6, 2, 2));
        assert!(s.a.is_disjoint(&s.b) && s.a.is_disjoint(&s.c) && s.b.is_disjoint(&s.c));
        assert!(split_vertices(4, 0.2, &mut rng).is_err());
        for _ in 0..50 {
            let s = split_vertices(37, 0.3, &mut rng).unwrap();
            assert_eq!(s.b.card(), 5);
            assert_eq!(s.c.card(), 5);
            assert_eq!(s.a.card(), 27);
            let mut seen = [false; 37];
            for v in s.a.iter().chain(s.b.iter()).chain(s.c.iter()) {
                assert!(!seen[v]);
                seen[v] = true;
            }
            assert!(seen.iter().all(|&x| x));
        }
    }

    #[test]
    fn split_membership_is_uniform() {
        // Every vertex should land in B with probability b/n = 0.2.
        // 1e5 draws, 3 sigma band around 2e4.
        let mut rng = StdRng::seed_from_u64(0);
        let trials = 100_000;
        let mut counts = [0u32; 10];
        for _ in 0..trials {
            let s = split_vertices(10, 0.4, &mut rng).unwrap();
            for v in s.b.iter() {
                counts[v] += 1;
            }
        }
        let mean = trials as f64 * 0.2;
        let sigma = (trials as f64 * 0.2 * 0.8).sqrt();
        for (v, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - mean).abs() <= 3.0 * sigma,
                "vertex {v} hit B {c} times, expected about {mean}"
            );
        }
    }

    #[test]
    fn first_generation_examples() {
        let g = random_graph(40, 0.3, 7);
        let a = VertexSet::from_members(40, 0..25).unwrap();
        // m=1 means a single bucket holding all of A.
        let q = first_generation(&g, &a, 0.3, 1).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0], a);
        // K5 at p=0.5: every degree is 4, far above the median, so all of A
        // sits in the top of two buckets.
        let k5 = Graph::from_edge_list(
            5,
            &[(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)],
        )
        .unwrap();
        let full = VertexSet::full(5);
        let q = first_generation(&k5, &full, 0.5, 2).unwrap();
        assert!(q[0].is_empty());
        assert_eq!(q[1], full);
        assert!(first_generation(&g, &VertexSet::empty(40), 0.3, 2).is_err());
    }

    #[test]
    fn first_generation_partitions_a() {
        let g = random_graph(300, 0.3, 11);
        let mut rng = StdRng::seed_from_u64(5);
        let s = split_vertices(300, 0.5, &mut rng).unwrap();
        let q = first_generation(&g, &s.a, 0.3, 4).unwrap();
        assert_eq!(q.len(), 4);
        let total: usize = q.iter().map(|ql| ql.card()).sum();
        assert_eq!(total, s.a.card());
        for v in s.a.iter() {
            let hits = q.iter().filter(|ql| ql.contains(v)).count();
            assert_eq!(hits, 1, "vertex {v} in {hits} buckets");
        }
        for (l, ql) in q.iter().enumerate() {
            for v in ql.iter() {
                assert!(s.a.contains(v), "bucket {l} leaked vertex {v}");
            }
        }
    }

    #[test]
    fn second_generation_examples() {
        // All-empty first generation: every bit test is 0 >= 0, so every
        // vertex of B lands on the all-ones code.
        let g = Graph::new(8).unwrap();
        let b = VertexSet::from_members(8, [0, 1, 2]).unwrap();
        let q = vec![VertexSet::empty(8); 3];
        let sg = second_generation(&g, &b, &q, 0.5).unwrap();
        assert_eq!(sg.total(), 3);
        assert_eq!(sg.bucket(0b111).unwrap(), &b);
        assert_eq!(sg.codes().count(), 1);

        // Hand-built: vertex 5 clears the Q1 test only, vertex 6 neither.
        let g = Graph::from_edge_list(7, &[(5, 0), (5, 1)]).unwrap();
        let q = vec![
            VertexSet::from_members(7, [0, 1]).unwrap(),
            VertexSet::from_members(7, [2]).unwrap(),
        ];
        let b = VertexSet::from_members(7, [5, 6]).unwrap();
        let sg = second_generation(&g, &b, &q, 0.9).unwrap();
        assert_eq!(sg.bucket(0b01).unwrap().iter().collect::<Vec<_>>(), [5]);
        assert_eq!(sg.bucket(0b00).unwrap().iter().collect::<Vec<_>>(), [6]);
        assert!(sg.bucket(0b10).is_none());
        assert!(sg.bucket(0b11).is_none());
        assert_eq!(sg.m(), 2);
    }

    #[test]
    fn second_generation_codes_match_naive_recount() {
        let g = random_graph(200, 0.3, 13);
        let mut rng = StdRng::seed_from_u64(6);
        let s = split_vertices(200, 0.4, &mut rng).unwrap();
        let q = first_generation(&g, &s.a, 0.3, 5).unwrap();
        let sg = second_generation(&g, &s.b, &q, 0.3).unwrap();
        assert_eq!(sg.total(), s.b.card());
        for v in s.b.iter() {
            let mut code = 0u64;
            for (l, ql) in q.iter().enumerate() {
                // Independent recount through explicit edge queries.
                let cnt = ql.iter().filter(|&u| g.has_edge(v, u)).count();
                if cnt as f64 >= 0.3 * ql.card() as f64 {
                    code |= 1 << l;
                }
            }
            let holder = sg.bucket(code).expect("vertex code missing");
            assert!(holder.contains(v));
            let elsewhere = sg
                .codes()
                .filter(|&(c, r)| c != code && r.contains(v))
                .count();
            assert_eq!(elsewhere, 0);
        }
    }

    #[test]
    fn index_set_examples() {
        let mut rng = StdRng::seed_from_u64(2);
        assert_eq!(sample_index_set(2, 4, &mut rng).unwrap(), vec![0, 1, 2, 3]);
        let big = sample_index_set(60, 100, &mut rng).unwrap();
        assert_eq!(big.len(), 100);
        assert!(big.windows(2).all(|w| w[0] < w[1]));
        assert!(big.iter().all(|&s| s < 1u64 << 60));
        assert!(sample_index_set(3, 9, &mut rng).is_err());
        assert!(sample_index_set(3, 0, &mut rng).is_err());
        assert!(sample_index_set(0, 1, &mut rng).is_err());
        assert!(sample_index_set(64, 1, &mut rng).is_err());
        let mut r1 = StdRng::seed_from_u64(9);
        let mut r2 = StdRng::seed_from_u64(9);
        assert_eq!(
            sample_index_set(10, 5, &mut r1).unwrap(),
            sample_index_set(10, 5, &mut r2).unwrap()
        );
    }

    #[test]
    fn index_set_is_uniform() {
        // Single-code draws over 2^10 codes, 1e5 times: chi-square against
        // uniform stays within 5 sigma of its mean, and no cell strays 5
        // sigma from E = trials/1024.
        let mut rng = StdRng::seed_from_u64(0);
        let trials = 100_000usize;
        let cells = 1usize << 10;
        let mut counts = vec![0u32; cells];
        for _ in 0..trials {
            let s = sample_index_set(10, 1, &mut rng).unwrap();
            counts[s[0] as usize] += 1;
        }
        let e = trials as f64 / cells as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        let dof = (cells - 1) as f64;
        assert!(
            (chi2 - dof).abs() <= 5.0 * (2.0 * dof).sqrt(),
            "chi-square {chi2} vs dof {dof}"
        );
        let sigma = (e * (1.0 - 1.0 / cells as f64)).sqrt();
        for (s, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - e).abs() <= 5.0 * sigma,
                "code {s} drawn {c} times, expected about {e}"
            );
        }
        // Two-element subsets of a 4-code space: all 6 subsets equally
        // likely under Floyd's algorithm.
        let mut sub = std::collections::HashMap::new();
        for _ in 0..trials {
            let s = sample_index_set(2, 2, &mut rng).unwrap();
            *sub.entry((s[0], s[1])).or_insert(0u32) += 1;
        }
        assert_eq!(sub.len(), 6);
        let e = trials as f64 / 6.0;
        let sigma = (trials as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for (&k, &c) in &sub {
            assert!(
                (c as f64 - e).abs() <= 4.0 * sigma,
                "subset {k:?} drawn {c} times, expected about {e}"
            );
        }
    }

    #[test]
    fn signatures_empty_second_generation_is_all_ones() {
        let g = random_graph(10, 0.4, 3);
        let q = vec![VertexSet::from_members(10, [0, 1]).unwrap(); 2];
        let sg = second_generation(&g, &VertexSet::empty(10), &q, 0.4).unwrap();
        let c = VertexSet::from_members(10, [4, 7]).unwrap();
        let t = signatures(&g, &c, &sg, &[0, 1, 2], 0.4).unwrap();
        assert_eq!(t.vertices(), &[4, 7]);
        assert_eq!(t.sig(0), &[0b111]);
        assert_eq!(t.sig(1), &[0b111]);
        assert_eq!(agreement(t.sig(0), t.sig(1), 3), 3);
        assert_eq!(t.sig_of(7), Some(t.sig(1)));
        assert_eq!(t.sig_of(5), None);
    }

    #[test]
    fn signatures_width_and_validation() {
        let g = random_graph(70, 0.3, 4);
        let full = VertexSet::full(70);
        let q = first_generation(&g, &full, 0.3, 3).unwrap();
        let sg = second_generation(&g, &VertexSet::empty(70), &q, 0.3).unwrap();
        // 65 codes force a second block holding exactly one live bit.
        let index_set: Vec<u64> = (0..65).collect();
        // m=3 has only 8 codes; widen through a bigger second generation.
        assert!(signatures(&g, &full, &sg, &index_set, 0.3).is_err());
        let q7 = first_generation(&g, &full, 0.3, 7).unwrap();
        let sg7 = second_generation(&g, &VertexSet::empty(70), &q7, 0.3).unwrap();
        let t = signatures(&g, &full, &sg7, &index_set, 0.3).unwrap();
        assert_eq!(t.sig(0).len(), 2);
        assert_eq!(t.sig(0)[0], !0u64);
        assert_eq!(t.sig(0)[1], 1);
        assert!(signatures(&g, &full, &sg7, &[1, 0], 0.3).is_err());
        assert!(signatures(&g, &full, &sg7, &[2, 2], 0.3).is_err());
        assert!(signatures(&g, &full, &sg7, &[], 0.3).is_err());
        assert!(signatures(&g, &full, &sg7, &[1u64 << 7], 0.3).is_err());
    }

    #[test]
    fn signatures_match_naive_recount() {
        let g = random_graph(60, 0.3, 15);
        let mut rng = StdRng::seed_from_u64(8);
        let s = split_vertices(60, 0.5, &mut rng).unwrap();
        let q = first_generation(&g, &s.a, 0.3, 4).unwrap();
        let sg = second_generation(&g, &s.b, &q, 0.3).unwrap();
        let index_set = sample_index_set(4, 9, &mut rng).unwrap();
        let t = signatures(&g, &s.c, &sg, &index_set, 0.3).unwrap();
        for (idx, &v) in t.vertices().iter().enumerate() {
            for (bit, &code) in index_set.iter().enumerate() {
                let want = match sg.bucket(code) {
                    Some(r) => {
                        let cnt = r.iter().filter(|&u| g.has_edge(v, u)).count();
                        cnt as f64 >= 0.3 * r.card() as f64
                    }
                    None => true,
                };
                let got = t.sig(idx)[bit / 64] >> (bit % 64) & 1 == 1;
                assert_eq!(got, want, "vertex {v} bit {bit}");
            }
        }
    }

    #[test]
    fn potential_match_examples() {
        // Full agreement clears any slack below 1.
        let fi = [0b1111111111u64];
        assert!(potential_match(&fi, &fi, 10, 0.1).unwrap());
        // Full disagreement never does.
        let fj = [0u64];
        assert!(!potential_match(&fi, &fj, 10, 0.1).unwrap());
        // The threshold at omega=100, slack=0.1 sits at 55: agreement 55
        // misses (strict inequality), 56 clears.
        let zero = [0u64; 2];
        let f45 = [(1u64 << 45) - 1, 0];
        assert_eq!(agreement(&zero, &f45, 100), 55);
        assert!(!potential_match(&zero, &f45, 100, 0.1).unwrap());
        let f44 = [(1u64 << 44) - 1, 0];
        assert_eq!(agreement(&zero, &f44, 100), 56);
        assert!(potential_match(&zero, &f44, 100, 0.1).unwrap());
        assert!(potential_match(&[0u64], &[0u64, 0], 100, 0.1).is_err());
        assert!(potential_match(&fi, &fi, 10, -0.1).is_err());
        assert!(potential_match(&fi, &fi, 0, 0.1).is_err());
    }

    #[test]
    fn potential_match_is_symmetric() {
        let mut rng = StdRng::seed_from_u64(14);
        for _ in 0..200 {
            let fi = [rng.random::<u64>(), rng.random::<u64>() & 0xff];
            let fj = [rng.random::<u64>(), rng.random::<u64>() & 0xff];
            assert_eq!(
                potential_match(&fi, &fj, 72, 0.05).unwrap(),
                potential_match(&fj, &fi, 72, 0.05).unwrap()
            );
            assert_eq!(agreement(&fi, &fj, 72), agreement(&fj, &fi, 72));
        }
    }

    #[test]
    fn run_round_zero_noise_shared_split_hits_diagonal() {
        let params_model = ModelParams::new(120, 0.3, 0.0).unwrap();
        let id = Permutation::identity(120);
        let inst = sample_correlated(&params_model, Some(&id), 17).unwrap();
        let params = practical_params(120, 1).unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        let drawn = draw_round_parts(120, &params, &mut rng).unwrap();
        // Force both sides onto the same split: identical pipelines.
        let parts = RoundParts {
            split: drawn.split.clone(),
            split_prime: drawn.split.clone(),
            index_set: drawn.index_set.clone(),
        };
        let rr = run_round_with_parts(&inst.g_pi, &inst.g_prime, 0.3, &params, &parts).unwrap();
        assert_eq!(rr.sigs, rr.sigs_prime);
        for &i in rr.c_vertices() {
            assert!(rr.is_potential(i, i), "diagonal pair ({i},{i}) not potential");
        }
        // The matrix agrees with the scalar rule pair by pair.
        for (ci, &i) in rr.c_vertices().iter().enumerate() {
            for (cj, &j) in rr.c_prime_vertices().iter().enumerate() {
                let want = potential_match(
                    rr.sigs.sig(ci),
                    rr.sigs_prime.sig(cj),
                    params.omega,
                    params.threshold_slack,
                )
                .unwrap();
                assert_eq!(rr.is_potential_pos(ci, cj), want, "pair ({i},{j})");
            }
        }
        assert!(rr.potential_pairs() >= rr.c_vertices().len() as u64);
        assert!(!rr.is_potential(0, 0) || rr.c_vertices().contains(&0));
    }

    #[test]
    fn tally_examples() {
        // Diagonal candidates on all three vertices: strict success.
        let mut tally = MatchTally::new(3).unwrap();
        for v in 0..3 {
            tally.record_pair(v, v, true);
        }
        let res = tally.finalize(Vec::new());
        assert_eq!(res.outcome, Outcome::Permutation);
        assert_eq!(res.pi_hat.as_ref().unwrap().image(), &[0, 1, 2]);
        assert_eq!(res.completion.image(), &[0, 1, 2]);
        assert!((res.coverage - 3.0 / 9.0).abs() < 1e-15);
        assert_eq!(res.forced_pairs, 0);

        // Row 1 carries two candidates: strict error, completion still total.
        let mut tally = MatchTally::new(3).unwrap();
        tally.record_pair(0, 0, true);
        tally.record_pair(1, 1, true);
        tally.record_pair(1, 2, true);
        tally.record_pair(2, 2, true);
        let res = tally.finalize(Vec::new());
        assert_eq!(res.outcome, Outcome::Error);
        assert!(res.pi_hat.is_none());
        assert_eq!(res.completion.image(), &[0, 1, 2]);
        assert_eq!(res.forced_pairs, 0);

        // Candidates exist but never touch vertex 3: strict error, the
        // completion pairs the leftovers by index.
        let mut tally = MatchTally::new(4).unwrap();
        tally.record_pair(0, 0, true);
        tally.record_pair(1, 1, true);
        tally.record_pair(2, 2, true);
        let res = tally.finalize(Vec::new());
        assert_eq!(res.outcome, Outcome::Error);
        assert!(res.pi_hat.is_none());
        assert_eq!(res.completion.image(), &[0, 1, 2, 3]);
        assert_eq!(res.forced_pairs, 1);

        // One failed potential disqualifies a pair for good.
        let mut tally = MatchTally::new(1).unwrap();
        tally.record_pair(0, 0, true);
        tally.record_pair(0, 0, false);
        assert!(!tally.is_candidate(0, 0));
        assert_eq!(tally.cooccur(0, 0), 2);
        assert_eq!(tally.potential(0, 0), 1);
        let res = tally.finalize(Vec::new());
        assert_eq!(res.outcome, Outcome::Error);
        assert_eq!(res.completion.image(), &[0]);
        assert_eq!(res.forced_pairs, 0);

        // Coverage counts distinct co-occurring pairs.
        let mut tally = MatchTally::new(2).unwrap();
        tally.record_pair(0, 0, false);
        let res = tally.finalize(Vec::new());
        assert!((res.coverage - 0.25).abs() < 1e-15);
    }

    #[test]
    fn aggregate_matches_streaming_and_ignores_order() {
        let params_model = ModelParams::new(80, 0.25, 0.1).unwrap();
        let inst = sample_correlated(&params_model, None, 23).unwrap();
        let mut params = practical_params(80, 5).unwrap();
        params.reps = 4;
        // Rebuild the rounds exactly as match_graphs streams them.
        let mut rounds = Vec::new();
        for r in 0..4u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
            rng.set_stream(r);
            let parts = draw_round_parts(80, &params, &mut rng).unwrap();
            rounds.push(run_round_with_parts(&inst.g_pi, &inst.g_prime, 0.25, &params, &parts).unwrap());
        }
        let agg = aggregate(&rounds, 80).unwrap();
        let streamed = match_graphs(&inst, 0.25, &params).unwrap();
        assert_eq!(agg, streamed);
        // Round order cannot change anything but the per-round stat lines.
        rounds.reverse();
        let rev = aggregate(&rounds, 80).unwrap();
        assert_eq!(rev.outcome, agg.outcome);
        assert_eq!(rev.pi_hat, agg.pi_hat);
        assert_eq!(rev.coverage, agg.coverage);
        assert_eq!(rev.completion, agg.completion);
        assert_eq!(rev.forced_pairs, agg.forced_pairs);
        assert!(aggregate(&[], 80).is_err());
    }

    #[test]
    fn match_graphs_is_deterministic() {
        let params_model = ModelParams::new(100, 0.2, 0.15).unwrap();
        let inst = sample_correlated(&params_model, None, 31).unwrap();
        let params = practical_params(100, 7).unwrap();
        let a = match_graphs(&inst, 0.2, &params).unwrap();
        let b = match_graphs(&inst, 0.2, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.round_stats.len(), 20);
        let mut other = params.clone();
        other.seed = 8;
        let c = match_graphs(&inst, 0.2, &other).unwrap();
        assert!(c.coverage > 0.0);
        let mut zero = params.clone();
        zero.reps = 0;
        assert!(match_graphs(&inst, 0.2, &zero).is_err());
        assert!(match_graphs(&inst, 0.0, &params).is_err());
    }

    #[test]
    fn simplified_two_vertex_example() {
        let g = Graph::from_edge_list(2, &[(0, 1)]).unwrap();
        let res = simplified_match(&g, &g, 0.5, 1).unwrap();
        assert_eq!(res.outcome, Outcome::Permutation);
        assert_eq!(res.pi_hat.as_ref().unwrap().image(), &[0, 1]);
        assert_eq!(res.forced_pairs, 0);
        assert_eq!(res.coverage, 1.0);
        assert!(res.round_stats.is_empty());
    }

    #[test]
    fn simplified_recovers_identity_at_zero_noise() {
        let params_model = ModelParams::new(300, 0.1, 0.0).unwrap();
        let id = Permutation::identity(300);
        let inst = sample_correlated(&params_model, Some(&id), 41).unwrap();
        let res = simplified_match(&inst.g_pi, &inst.g_prime, 0.1, 7).unwrap();
        assert_eq!(res.pi_hat.as_ref().unwrap(), &id);
        assert_eq!(res.forced_pairs, 0);
    }

    #[test]
    fn simplified_ties_break_deterministically() {
        // K6: all signatures coincide, so every agreement ties at the top
        // and the lexicographic order forces the identity.
        let mut edges = Vec::new();
        for i in 0..6 {
            for j in (i + 1)..6 {
                edges.push((i, j));
            }
        }
        let k6 = Graph::from_edge_list(6, &edges).unwrap();
        let res = simplified_match(&k6, &k6, 0.5, 2).unwrap();
        assert_eq!(res.completion.image(), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(res.forced_pairs, 0);
    }

    #[test]
    fn simplified_validation() {
        let g = random_graph(20, 0.3, 1);
        let h = random_graph(21, 0.3, 1);
        assert!(simplified_match(&g, &h, 0.3, 3).is_err());
        assert!(simplified_match(&g, &g, 0.3, 0).is_err());
        assert!(simplified_match(&g, &g, 0.3, SIMPLIFIED_MAX_M + 1).is_err());
        assert!(simplified_match(&g, &g, 0.0, 3).is_err());
        assert!(simplified_match(&g, &g, 0.3, SIMPLIFIED_MAX_M).is_ok());
    }

    #[test]
    fn report_format_is_frozen() {
        let mut tally = MatchTally::new(2).unwrap();
        tally.record_pair(0, 0, true);
        tally.record_pair(1, 1, true);
        let res = tally.finalize(vec![RoundStats {
            round: 0,
            c_size: 2,
            c_prime_size: 2,
            potential_pairs: 2,
        }]);
        let mut buf = Vec::new();
        write_match_report(&mut buf, &res, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "outcome=permutation\ncoverage=0.5\nrounds=1\nforced_pairs=0\n\
             round 0 c=2 c_prime=2 potential=2\npairs\n0 0\n1 1\n"
        );
        let metrics = ReportMetrics {
            accuracy: 1.0,
            exact: true,
            completion_accuracy: 1.0,
        };
        let mut buf = Vec::new();
        write_match_report(&mut buf, &res, Some(&metrics)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("accuracy=1\nexact=true\ncompletion_accuracy=1\n"));
    }
}
