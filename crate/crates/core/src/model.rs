//! The correlated Erdos-Renyi model: a common parent graph G0 ~ G(n, p/(1-a))
//! is subsampled twice, independently keeping each edge with probability 1-a.
//! One subsample is observed with its vertices relabeled by a hidden
//! permutation pi, the other as drawn. Marginally both observations are
//! G(n, p), and an edge present in one is present in the other with
//! conditional probability 1-a.

use crate::graph::{read_edge_list, write_edge_list, Graph, VertexSet};
use crate::{invalid, Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::fs;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

/// Substream id reserved for instance sampling, so a matcher keyed with the
/// same 64-bit seed (whose round r consumes substream r) never shares a
/// random stream with the generator.
const INSTANCE_STREAM: u64 = u64::MAX;

/// n, marginal edge probability p, and noise level alpha.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub p: f64,
    pub alpha: f64,
}

impl ModelParams {
    pub fn new(n: usize, p: f64, alpha: f64) -> Result<Self> {
        let params = ModelParams { n, p, alpha };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(invalid("n must be at least 1"));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(invalid(format!("p={} outside (0,1)", self.p)));
        }
        if !(self.alpha >= 0.0 && self.alpha <= 1.0 - self.p) {
            return Err(invalid(format!(
                "alpha={} outside [0, 1-p] = [0, {}]",
                self.alpha,
                1.0 - self.p
            )));
        }
        Ok(())
    }

    /// Edge probability of the parent graph, p/(1-alpha), clamped against
    /// float overshoot when alpha is exactly 1-p.
    pub fn parent_p(&self) -> f64 {
        (self.p / (1.0 - self.alpha)).min(1.0)
    }
}

/// A bijection on 0..n, stored as its image array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            image: (0..n).collect(),
        }
    }

    /// Validates that every value in 0..n appears exactly once.
    pub fn from_image(image: Vec<usize>) -> Result<Self> {
        let n = image.len();
        let mut seen = vec![false; n];
        for &v in &image {
            if v >= n {
                return Err(invalid(format!("image value {v} out of range for n={n}")));
            }
            if seen[v] {
                return Err(invalid(format!("image value {v} repeats")));
            }
            seen[v] = true;
        }
        Ok(Permutation { image })
    }

    pub fn n(&self) -> usize {
        self.image.len()
    }

    pub fn map(&self, v: usize) -> usize {
        self.image[v]
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.image.len()];
        for (v, &w) in self.image.iter().enumerate() {
            inv[w] = v;
        }
        Permutation { image: inv }
    }

    /// The composition "apply `self`, then `next`".
    pub fn then(&self, next: &Permutation) -> Result<Permutation> {
        if self.n() != next.n() {
            return Err(invalid("composing permutations of different lengths"));
        }
        Ok(Permutation {
            image: self.image.iter().map(|&v| next.map(v)).collect(),
        })
    }
}

/// Uniform random permutation (Fisher-Yates).
pub fn sample_permutation<R: Rng>(n: usize, rng: &mut R) -> Permutation {
    assert!(n >= 1, "permutation needs n >= 1");
    let mut image: Vec<usize> = (0..n).collect();
    image.shuffle(rng);
    Permutation { image }
}

/// The image of `s` under `pi`.
pub fn transport_set(s: &VertexSet, pi: &Permutation) -> Result<VertexSet> {
    if s.n() != pi.n() {
        return Err(invalid("set and permutation sizes differ"));
    }
    let mut out = VertexSet::empty(s.n());
    for v in s.iter() {
        out.insert(pi.map(v));
    }
    Ok(out)
}

/// The graph with edge {pi(i), pi(j)} wherever `g` has edge {i, j}.
pub fn apply_permutation(g: &Graph, pi: &Permutation) -> Result<Graph> {
    if g.n() != pi.n() {
        return Err(invalid("graph and permutation sizes differ"));
    }
    let mut h = Graph::new(g.n())?;
    for (i, j) in g.edges() {
        h.add_edge(pi.map(i), pi.map(j));
    }
    Ok(h)
}

/// Edge count divided by C(n,2).
pub fn estimate_p(g: &Graph) -> Result<f64> {
    let n = g.n();
    if n < 2 {
        return Err(invalid("density needs at least two vertices"));
    }
    let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
    Ok(g.edge_count() as f64 / pairs)
}

/// One sampled experiment unit: the two observed graphs, the hidden
/// permutation, and what generated them. The parent graph and the unpermuted
/// subsample are deliberately not retained; the matcher may only see
/// `g_pi` and `g_prime`, while `truth` exists for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedInstance {
    pub g_pi: Graph,
    pub g_prime: Graph,
    pub truth: Permutation,
    pub params: ModelParams,
    pub seed: u64,
}

/// Samples an instance. With `pi = None` a uniform permutation is drawn
/// first. For every unordered pair, a parent edge appears with probability
/// p/(1-alpha); a parent edge then survives into each observation with
/// independent probability 1-alpha. An edge {i,j} of the first subsample is
/// stored as {pi(i), pi(j)} in `g_pi`; the second subsample is `g_prime`.
pub fn sample_correlated(
    params: &ModelParams,
    pi: Option<&Permutation>,
    seed: u64,
) -> Result<CorrelatedInstance> {
    params.validate()?;
    if let Some(pi) = pi {
        if pi.n() != params.n {
            return Err(invalid("permutation length differs from n"));
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(INSTANCE_STREAM);
    let truth = match pi {
        Some(pi) => pi.clone(),
        None => sample_permutation(params.n, &mut rng),
    };
    let n = params.n;
    let parent_p = params.parent_p();
    let keep = 1.0 - params.alpha;
    let mut g_pi = Graph::new(n)?;
    let mut g_prime = Graph::new(n)?;
    for i in 0..n {
        for j in (i + 1)..n {
            if !rng.random_bool(parent_p) {
                continue;
            }
            if rng.random_bool(keep) {
                g_pi.add_edge(truth.map(i), truth.map(j));
            }
            if rng.random_bool(keep) {
                g_prime.add_edge(i, j);
            }
        }
    }
    Ok(CorrelatedInstance {
        g_pi,
        g_prime,
        truth,
        params: *params,
        seed,
    })
}

/// What `load_instance` found on disk. The truth file is optional so that
/// instances shipped without ground truth can still be matched.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedInstance {
    pub g_pi: Graph,
    pub g_prime: Graph,
    pub params: ModelParams,
    pub seed: u64,
    pub truth: Option<Permutation>,
}

impl LoadedInstance {
    pub fn into_instance(self) -> Result<CorrelatedInstance> {
        let truth = self
            .truth
            .ok_or_else(|| invalid("instance has no truth file"))?;
        Ok(CorrelatedInstance {
            g_pi: self.g_pi,
            g_prime: self.g_prime,
            truth,
            params: self.params,
            seed: self.seed,
        })
    }
}

const G_PI_FILE: &str = "g_pi.txt";
const G_PRIME_FILE: &str = "g_prime.txt";
const TRUTH_FILE: &str = "truth.txt";
const PARAMS_FILE: &str = "params.txt";

/// Writes an instance directory: two edge lists, a truth file with one
/// "j pi(j)" line per vertex, and a key=value parameter record. Refuses an
/// existing directory unless `force` is set.
pub fn save_instance(dir: &Path, inst: &CorrelatedInstance, force: bool) -> Result<()> {
    if dir.exists() && !force {
        return Err(invalid(format!(
            "output directory {} exists (use force to overwrite)",
            dir.display()
        )));
    }
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(G_PI_FILE))?);
    write_edge_list(&inst.g_pi, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join(G_PRIME_FILE))?);
    write_edge_list(&inst.g_prime, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join(TRUTH_FILE))?);
    for j in 0..inst.truth.n() {
        writeln!(w, "{j} {}", inst.truth.map(j))?;
    }
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join(PARAMS_FILE))?);
    writeln!(w, "n={}", inst.params.n)?;
    writeln!(w, "p={}", inst.params.p)?;
    writeln!(w, "alpha={}", inst.params.alpha)?;
    writeln!(w, "seed={}", inst.seed)?;
    w.flush()?;
    Ok(())
}

fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad key=value line: {t:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn kv_get<'a>(kv: &'a [(String, String)], key: &str) -> Result<&'a str> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Parse(format!("missing key {key:?} in params file")))
}

/// Reads an instance directory written by [`save_instance`]. A missing truth
/// file is tolerated (`truth = None`); everything else is required.
pub fn load_instance(dir: &Path) -> Result<LoadedInstance> {
    let g_pi = read_edge_list(BufReader::new(fs::File::open(dir.join(G_PI_FILE))?))?;
    let g_prime = read_edge_list(BufReader::new(fs::File::open(dir.join(G_PRIME_FILE))?))?;
    let params_text = fs::read_to_string(dir.join(PARAMS_FILE))?;
    let kv = parse_kv(&params_text)?;
    let n: usize = kv_get(&kv, "n")?
        .parse()
        .map_err(|_| Error::Parse("bad n in params file".into()))?;
    let p: f64 = kv_get(&kv, "p")?
        .parse()
        .map_err(|_| Error::Parse("bad p in params file".into()))?;
    let alpha: f64 = kv_get(&kv, "alpha")?
        .parse()
        .map_err(|_| Error::Parse("bad alpha in params file".into()))?;
    let seed: u64 = kv_get(&kv, "seed")?
        .parse()
        .map_err(|_| Error::Parse("bad seed in params file".into()))?;
    let params = ModelParams::new(n, p, alpha)?;
    if g_pi.n() != n || g_prime.n() != n {
        return Err(Error::Parse(format!(
            "graph sizes {} and {} disagree with params n={n}",
            g_pi.n(),
            g_prime.n()
        )));
    }
    let truth_path = dir.join(TRUTH_FILE);
    let truth = if truth_path.exists() {
        let text = fs::read_to_string(truth_path)?;
        let mut image = vec![usize::MAX; n];
        for line in text.lines() {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let mut it = t.split_whitespace();
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Parse(format!("bad truth line: {t:?}")));
            };
            let j: usize = a
                .parse()
                .map_err(|_| Error::Parse(format!("bad truth index {a:?}")))?;
            let v: usize = b
                .parse()
                .map_err(|_| Error::Parse(format!("bad truth value {b:?}")))?;
            if j >= n {
                return Err(Error::Parse(format!("truth index {j} out of range")));
            }
            image[j] = v;
        }
        if image.contains(&usize::MAX) {
            return Err(Error::Parse("truth file does not cover every vertex".into()));
        }
        Some(Permutation::from_image(image)?)
    } else {
        None
    };
    Ok(LoadedInstance {
        g_pi,
        g_prime,
        params,
        seed,
        truth,
    })
}
