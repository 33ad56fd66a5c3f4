//! Undirected simple graphs with bit-parallel subset neighbor counts.
//!
//! The adjacency matrix is stored as one n-bit row per vertex, so counting a
//! vertex's neighbors inside an arbitrary vertex subset reduces to word-wise
//! AND plus popcount. That operation dominates the matcher's inner loops.
//!
//! Vertices are the integers `0..n`. Construction validates its input and
//! returns errors; accessors treat an out-of-range vertex as a programming
//! error and panic.

use crate::{invalid, Result};
use std::io::{self, BufRead, Write};

const WORD: usize = 64;

fn blocks_for(n: usize) -> usize {
    n.div_ceil(WORD)
}

/// Iterates the positions of set bits in a block slice, ascending.
pub(crate) struct BitIter<'a> {
    blocks: &'a [u64],
    idx: usize,
    word: u64,
}

impl<'a> BitIter<'a> {
    pub(crate) fn new(blocks: &'a [u64]) -> Self {
        let word = if blocks.is_empty() { 0 } else { blocks[0] };
        BitIter {
            blocks,
            idx: 0,
            word,
        }
    }
}

impl Iterator for BitIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        while self.word == 0 {
            self.idx += 1;
            if self.idx >= self.blocks.len() {
                return None;
            }
            self.word = self.blocks[self.idx];
        }
        let bit = self.word.trailing_zeros() as usize;
        self.word &= self.word - 1;
        Some(self.idx * WORD + bit)
    }
}

/// A subset of `0..n` as a bit vector with cached cardinality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexSet {
    n: usize,
    blocks: Vec<u64>,
    card: usize,
}

impl VertexSet {
    pub fn empty(n: usize) -> Self {
        VertexSet {
            n,
            blocks: vec![0; blocks_for(n)],
            card: 0,
        }
    }

    pub fn full(n: usize) -> Self {
        let mut blocks = vec![!0u64; blocks_for(n)];
        let tail = n % WORD;
        if tail != 0 {
            *blocks.last_mut().expect("n >= 1 has blocks") = (1u64 << tail) - 1;
        }
        VertexSet { n, blocks, card: n }
    }

    /// Builds a set from member indices; duplicates are fine.
    pub fn from_members<I: IntoIterator<Item = usize>>(n: usize, members: I) -> Result<Self> {
        let mut s = VertexSet::empty(n);
        for v in members {
            if v >= n {
                return Err(invalid(format!("vertex {v} out of range for n={n}")));
            }
            s.insert(v);
        }
        Ok(s)
    }

    /// Panics if `v >= n`.
    pub fn insert(&mut self, v: usize) {
        assert!(v < self.n, "vertex {v} out of range for n={}", self.n);
        let w = &mut self.blocks[v / WORD];
        let bit = 1u64 << (v % WORD);
        if *w & bit == 0 {
            *w |= bit;
            self.card += 1;
        }
    }

    pub fn contains(&self, v: usize) -> bool {
        v < self.n && self.blocks[v / WORD] >> (v % WORD) & 1 == 1
    }

    /// Number of members.
    pub fn card(&self) -> usize {
        self.card
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.card == 0
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        BitIter::new(&self.blocks)
    }

    pub fn intersection_card(&self, other: &VertexSet) -> usize {
        assert_eq!(self.n, other.n, "vertex sets over different ground sets");
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn is_disjoint(&self, other: &VertexSet) -> bool {
        self.intersection_card(other) == 0
    }

    pub(crate) fn blocks(&self) -> &[u64] {
        &self.blocks
    }
}

/// Undirected simple graph on vertices `0..n`, dense bit rows.
///
/// Invariants: no self-loops, adjacency is symmetric, `n >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    bpr: usize,
    bits: Vec<u64>,
}

impl Graph {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("graph needs at least one vertex"));
        }
        let bpr = blocks_for(n);
        Ok(Graph {
            n,
            bpr,
            bits: vec![0; n * bpr],
        })
    }

    /// Builds a graph with exactly the given edges; duplicates collapse.
    pub fn from_edge_list(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::new(n)?;
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(invalid(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if i == j {
                return Err(invalid(format!("self-loop at vertex {i}")));
            }
            g.add_edge(i, j);
        }
        Ok(g)
    }

    pub(crate) fn add_edge(&mut self, i: usize, j: usize) {
        debug_assert!(i < self.n && j < self.n && i != j);
        self.bits[i * self.bpr + j / WORD] |= 1u64 << (j % WORD);
        self.bits[j * self.bpr + i / WORD] |= 1u64 << (i % WORD);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        assert!(i < self.n && j < self.n, "vertex out of range");
        self.bits[i * self.bpr + j / WORD] >> (j % WORD) & 1 == 1
    }

    pub(crate) fn row(&self, v: usize) -> &[u64] {
        &self.bits[v * self.bpr..(v + 1) * self.bpr]
    }

    /// Number of neighbors of `v`. Panics if `v >= n`.
    pub fn degree(&self, v: usize) -> usize {
        assert!(v < self.n, "vertex {v} out of range for n={}", self.n);
        self.row(v).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of neighbors of `v` inside `s`. Whether `v` itself is in `s`
    /// does not matter (no self-loops). Panics on a range mismatch.
    pub fn neighbor_count_in(&self, v: usize, s: &VertexSet) -> usize {
        assert!(v < self.n, "vertex {v} out of range for n={}", self.n);
        assert_eq!(s.n(), self.n, "vertex set over a different ground set");
        self.row(v)
            .iter()
            .zip(s.blocks())
            .map(|(r, m)| (r & m).count_ones() as usize)
            .sum()
    }

    /// Degree of `v` in the subgraph induced by `s`. Panics unless `v` is a
    /// member of `s`.
    pub fn induced_degree(&self, v: usize, s: &VertexSet) -> usize {
        assert!(s.contains(v), "vertex {v} not in the inducing set");
        self.neighbor_count_in(v, s)
    }

    pub fn edge_count(&self) -> usize {
        let twice: usize = self.bits.iter().map(|w| w.count_ones() as usize).sum();
        twice / 2
    }

    /// Edges as `(i, j)` with `i < j`, ascending lexicographic.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            BitIter::new(self.row(i))
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }
}

/// Writes the edge-list text form: first line `n`, then one `i j` line per
/// edge with `i < j`, ascending.
pub fn write_edge_list<W: Write>(g: &Graph, w: &mut W) -> io::Result<()> {
    writeln!(w, "{}", g.n())?;
    for (i, j) in g.edges() {
        writeln!(w, "{i} {j}")?;
    }
    Ok(())
}

/// Parses the edge-list text form accepted by [`write_edge_list`].
pub fn read_edge_list<R: BufRead>(r: R) -> Result<Graph> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| crate::Error::Parse("empty edge-list file".into()))??;
    let n: usize = first
        .trim()
        .parse()
        .map_err(|_| crate::Error::Parse(format!("bad vertex count line: {first:?}")))?;
    let mut edges = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let mut it = t.split_whitespace();
        let (a, b) = (it.next(), it.next());
        match (a, b, it.next()) {
            (Some(a), Some(b), None) => {
                let i: usize = a
                    .parse()
                    .map_err(|_| crate::Error::Parse(format!("bad endpoint {a:?}")))?;
                let j: usize = b
                    .parse()
                    .map_err(|_| crate::Error::Parse(format!("bad endpoint {b:?}")))?;
                edges.push((i, j));
            }
            _ => return Err(crate::Error::Parse(format!("bad edge line: {line:?}"))),
        }
    }
    Graph::from_edge_list(n, &edges)
}
