//! Command-line front end: generate correlated instances, match them, sweep
//! parameter grids, and dump stage-by-stage diagnostics.
//!
//! Every command is deterministic given its flags and seeds: result files
//! are byte-identical across reruns and worker counts, except for the
//! trailing wall_ms column of experiment tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use corrmatch_core::diagnostics::{
    accuracy, first_gen_overlap_stats, model_stats, second_gen_overlap_stats,
};
use corrmatch_core::graph::{Graph, VertexSet};
use corrmatch_core::matcher::{
    first_generation, match_graphs_on, paper_params, practical_params, round_parts,
    second_generation, simplified_match, write_match_report, AlgoParams, MatchResult, Outcome,
    ReportMetrics,
};
use corrmatch_core::model::{
    load_instance, sample_correlated, save_instance, ModelParams, Permutation,
};
use corrmatch_core::{Error, Result};

#[derive(Parser)]
#[command(name = "corrmatch", version, about = "Match correlated Erdos-Renyi graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a correlated instance and write it to a directory.
    Generate(GenerateArgs),
    /// Run the matcher on a stored instance and print the report.
    Match(MatchArgs),
    /// Sweep a parameter grid, one result row per grid point and seed.
    Experiment(ExperimentArgs),
    /// Measure stage overlaps and model statistics for a stored instance.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Theorem-driven parameters (beta, m, omega, reps derived from n).
    Paper,
    /// Desk-scale defaults, every knob overridable.
    Practical,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    /// The multi-round split pipeline with the strict decision rule.
    Full,
    /// Single pass over the whole vertex set, greedy assignment.
    Simplified,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentVariant {
    Full,
    Simplified,
    /// Naive control: match vertices by descending-degree rank.
    #[value(name = "degree-baseline")]
    DegreeBaseline,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    /// One "key=value" line per result row.
    StructuredText,
}

/// Statistical knobs shared by match, experiment, and diagnose.
#[derive(Args)]
struct ParamFlags {
    /// Parameter recipe.
    #[arg(long, value_enum, default_value_t = ModeArg::Practical)]
    mode: ModeArg,
    /// Theorem delta in (0, 0.1); paper mode only.
    #[arg(long)]
    delta: Option<f64>,
    /// Stage-set fraction; practical mode only.
    #[arg(long)]
    beta: Option<f64>,
    /// Quantile bucket count; practical mode only.
    #[arg(long)]
    m: Option<usize>,
    /// Sparsified code count; practical mode only.
    #[arg(long)]
    omega: Option<usize>,
    /// Repetition count (replaces the paper formula with a warning).
    #[arg(long)]
    reps: Option<u64>,
    /// Agreement threshold slack (replaces the paper formula with a warning).
    #[arg(long)]
    slack: Option<f64>,
}

impl ParamFlags {
    /// Resolves the flags against a mode preset. Paper mode owns the
    /// statistical shape, so explicit --beta/--m/--omega are rejected there;
    /// --reps/--slack replace formula values with a warning. Practical mode
    /// takes every override silently.
    fn resolve(&self, n: usize, seed: u64) -> Result<AlgoParams> {
        let mut params = match self.mode {
            ModeArg::Practical => {
                if self.delta.is_some() {
                    return Err(Error::InvalidInput(
                        "--delta only applies to --mode paper".into(),
                    ));
                }
                practical_params(n, seed)?
            }
            ModeArg::Paper => {
                if self.beta.is_some() || self.m.is_some() || self.omega.is_some() {
                    return Err(Error::InvalidInput(
                        "paper mode derives beta, m, and omega from n; use --mode practical to set them".into(),
                    ));
                }
                let (params, warnings) = paper_params(n, self.delta.unwrap_or(0.05), seed)?;
                for w in warnings {
                    // The reps feasibility warning is moot once --reps is given.
                    if self.reps.is_some() && w.contains("repetition count") {
                        continue;
                    }
                    eprintln!("warning: {w}");
                }
                params
            }
        };
        if let Some(beta) = self.beta {
            params.beta = beta;
        }
        if let Some(m) = self.m {
            params.m = m;
        }
        if let Some(omega) = self.omega {
            params.omega = omega;
        }
        if let Some(reps) = self.reps {
            if self.mode == ModeArg::Paper {
                eprintln!(
                    "warning: replacing the paper repetition count {} with {reps}",
                    params.reps
                );
            }
            params.reps = reps;
        }
        if let Some(slack) = self.slack {
            if self.mode == ModeArg::Paper {
                eprintln!(
                    "warning: replacing the paper threshold slack {} with {slack}",
                    params.threshold_slack
                );
            }
            params.threshold_slack = slack;
        }
        if params.m < 64 && params.omega > (1 << params.m) {
            let cap = 1 << params.m;
            eprintln!(
                "warning: clamping omega from {} to the code space 2^{} = {cap}",
                params.omega, params.m
            );
            params.omega = cap;
        }
        params.validate(n)?;
        Ok(params)
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of vertices.
    #[arg(long)]
    n: usize,
    /// Marginal edge density in (0, 1).
    #[arg(long)]
    p: f64,
    /// Noise level in [0, 1-p].
    #[arg(long)]
    alpha: f64,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the instance files.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct MatchArgs {
    /// Instance directory written by `generate`.
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Full)]
    variant: VariantArg,
    /// Edge density given to the matcher; defaults to the stored p.
    #[arg(long)]
    p: Option<f64>,
    /// Seed for the matcher's round randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    params: ParamFlags,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Vertex counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Edge densities, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    p: Vec<f64>,
    /// Noise levels, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    alpha: Vec<f64>,
    /// Seeds per grid point: seed, seed+1, ..., seed+seeds-1.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ExperimentVariant::Full)]
    variant: ExperimentVariant,
    #[command(flatten)]
    params: ParamFlags,
    /// Worker threads; defaults to all cores. Output order is unaffected.
    #[arg(long)]
    workers: Option<usize>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Instance directory written by `generate`. Needs the truth file.
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Full)]
    variant: VariantArg,
    /// Edge density for the partition stages; defaults to the stored p.
    #[arg(long)]
    p: Option<f64>,
    /// Seed for the split randomness (full variant).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    params: ParamFlags,
    /// Output directory for first_gen.csv, second_gen.csv, summary.txt.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite an existing output directory.
    #[arg(long)]
    force: bool,
}

fn main() {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Match(args) => cmd_match(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    };
    if let Err(e) = run {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let params = ModelParams::new(args.n, args.p, args.alpha)?;
    let inst = sample_correlated(&params, None, args.seed)?;
    save_instance(&args.out, &inst, args.force)?;
    println!(
        "wrote {} (n={}, {} + {} edges)",
        args.out.display(),
        args.n,
        inst.g_pi.edge_count(),
        inst.g_prime.edge_count()
    );
    Ok(())
}

fn cmd_match(args: MatchArgs) -> Result<()> {
    let loaded = load_instance(&args.instance)?;
    let n = loaded.g_pi.n();
    let p = args.p.unwrap_or(loaded.params.p);
    let algo = args.params.resolve(n, args.seed)?;
    let res = match args.variant {
        VariantArg::Full => match_graphs_on(&loaded.g_pi, &loaded.g_prime, p, &algo)?,
        VariantArg::Simplified => {
            simplified_match(&loaded.g_pi, &loaded.g_prime, p, algo.m)?
        }
    };
    let metrics = match &loaded.truth {
        Some(truth) => {
            // On a strict failure the completion is the returned answer, so
            // the headline accuracy is its accuracy.
            let completion = accuracy(&res.completion, truth)?;
            let strict = match &res.pi_hat {
                Some(pi_hat) => accuracy(pi_hat, truth)?,
                None => completion,
            };
            Some(ReportMetrics {
                accuracy: strict.fraction,
                exact: res.outcome == Outcome::Permutation && strict.exact,
                completion_accuracy: completion.fraction,
            })
        }
        None => None,
    };
    let mut buf = Vec::new();
    write_match_report(&mut buf, &res, metrics.as_ref())?;
    match &args.out {
        Some(path) => fs::write(path, &buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

/// One experiment result. Unused parameter columns stay empty: simplified
/// runs fill only m, the degree baseline fills none of them.
struct Row {
    n: usize,
    p: f64,
    alpha: f64,
    seed: u64,
    variant: &'static str,
    mode: String,
    beta: String,
    m: String,
    omega: String,
    reps: String,
    slack: String,
    outcome: String,
    exact: bool,
    accuracy: String,
    completion_accuracy: f64,
    coverage: f64,
    forced_pairs: usize,
    wall_ms: u64,
}

const CSV_HEADER: &str = "n,p,alpha,seed,variant,mode,beta,m,omega,reps,slack,\
outcome,exact,accuracy,completion_accuracy,coverage,forced_pairs,wall_ms";

impl Row {
    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.p.to_string(),
            self.alpha.to_string(),
            self.seed.to_string(),
            self.variant.to_string(),
            self.mode.clone(),
            self.beta.clone(),
            self.m.clone(),
            self.omega.clone(),
            self.reps.clone(),
            self.slack.clone(),
            self.outcome.clone(),
            self.exact.to_string(),
            self.accuracy.clone(),
            self.completion_accuracy.to_string(),
            self.coverage.to_string(),
            self.forced_pairs.to_string(),
            self.wall_ms.to_string(),
        ]
    }

    fn csv_line(&self) -> String {
        self.fields().join(",")
    }

    fn text_line(&self) -> String {
        let names = CSV_HEADER.split(',');
        let mut line = String::new();
        for (name, value) in names.zip(self.fields()) {
            if !line.is_empty() {
                line.push(' ');
            }
            let _ = write!(line, "{name}={value}");
        }
        line
    }
}

/// Descending-degree rank matching: the k-th highest-degree vertex of g_pi
/// is declared the image of the k-th highest-degree vertex of g_prime, ties
/// by vertex index.
fn degree_baseline(g_pi: &Graph, g_prime: &Graph) -> Result<MatchResult> {
    let n = g_pi.n();
    if g_prime.n() != n {
        return Err(Error::InvalidInput("graphs have different sizes".into()));
    }
    let rank = |g: &Graph| -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| (std::cmp::Reverse(g.degree(v)), v));
        order
    };
    let order_pi = rank(g_pi);
    let order_prime = rank(g_prime);
    let mut image = vec![0usize; n];
    for (i, j) in order_pi.into_iter().zip(order_prime) {
        image[j] = i;
    }
    let completion = Permutation::from_image(image).expect("rank lists are bijections");
    Ok(MatchResult {
        outcome: Outcome::Permutation,
        pi_hat: Some(completion.clone()),
        coverage: 1.0,
        round_stats: Vec::new(),
        completion,
        forced_pairs: 0,
    })
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    if args.n.is_empty() || args.p.is_empty() || args.alpha.is_empty() {
        return Err(Error::InvalidInput("empty parameter grid".into()));
    }
    if args.seeds < 1 {
        return Err(Error::InvalidInput("--seeds must be at least 1".into()));
    }

    // Validate the whole grid and resolve the per-n parameters up front so
    // bad configurations fail before any work is dispatched.
    let mut algo_by_n: BTreeMap<usize, AlgoParams> = BTreeMap::new();
    if args.variant != ExperimentVariant::DegreeBaseline {
        for &n in &args.n {
            if let std::collections::btree_map::Entry::Vacant(e) = algo_by_n.entry(n) {
                e.insert(args.params.resolve(n, args.seed)?);
            }
        }
    }
    let mut jobs = Vec::new();
    for &n in &args.n {
        for &p in &args.p {
            for &alpha in &args.alpha {
                let model = ModelParams::new(n, p, alpha)?;
                for s in 0..args.seeds {
                    jobs.push((model, args.seed + s));
                }
            }
        }
    }

    let variant = args.variant;
    let mode_label = match args.params.mode {
        ModeArg::Paper => "paper",
        ModeArg::Practical => "practical",
    };
    let run_job = |(model, seed): &(ModelParams, u64)| -> Result<Row> {
        let started = Instant::now();
        let inst = sample_correlated(model, None, *seed)?;
        let algo = algo_by_n.get(&model.n);
        let (res, variant_name) = match variant {
            ExperimentVariant::Full => {
                let mut algo = algo.expect("params resolved for every grid n").clone();
                algo.seed = *seed;
                (match_graphs_on(&inst.g_pi, &inst.g_prime, model.p, &algo)?, "full")
            }
            ExperimentVariant::Simplified => {
                let algo = algo.expect("params resolved for every grid n");
                (
                    simplified_match(&inst.g_pi, &inst.g_prime, model.p, algo.m)?,
                    "simplified",
                )
            }
            ExperimentVariant::DegreeBaseline => {
                (degree_baseline(&inst.g_pi, &inst.g_prime)?, "degree-baseline")
            }
        };
        let completion = accuracy(&res.completion, &inst.truth)?;
        let strict = res
            .pi_hat
            .as_ref()
            .map(|pi_hat| accuracy(pi_hat, &inst.truth))
            .transpose()?;
        let (mode, beta, m, omega, reps, slack) = match (variant, algo) {
            (ExperimentVariant::Full, Some(a)) => (
                mode_label.to_string(),
                a.beta.to_string(),
                a.m.to_string(),
                a.omega.to_string(),
                a.reps.to_string(),
                a.threshold_slack.to_string(),
            ),
            (ExperimentVariant::Simplified, Some(a)) => (
                mode_label.to_string(),
                String::new(),
                a.m.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ),
            _ => Default::default(),
        };
        Ok(Row {
            n: model.n,
            p: model.p,
            alpha: model.alpha,
            seed: *seed,
            variant: variant_name,
            mode,
            beta,
            m,
            omega,
            reps,
            slack,
            outcome: res.outcome.to_string(),
            exact: strict.as_ref().is_some_and(|a| a.exact),
            accuracy: strict.map(|a| a.fraction.to_string()).unwrap_or_default(),
            completion_accuracy: completion.fraction,
            coverage: res.coverage,
            forced_pairs: res.forced_pairs,
            wall_ms: started.elapsed().as_millis() as u64,
        })
    };

    // Rows come back in grid order no matter how the pool schedules them.
    let rows: Vec<Row> = match args.workers {
        Some(workers) => rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?
            .install(|| jobs.par_iter().map(run_job).collect::<Result<_>>())?,
        None => jobs.par_iter().map(run_job).collect::<Result<_>>()?,
    };

    let mut out = String::new();
    match args.format {
        FormatArg::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for row in &rows {
                out.push_str(&row.csv_line());
                out.push('\n');
            }
        }
        FormatArg::StructuredText => {
            for row in &rows {
                out.push_str(&row.text_line());
                out.push('\n');
            }
        }
    }
    match &args.out {
        Some(path) => fs::write(path, out.as_bytes())?,
        None => std::io::stdout().write_all(out.as_bytes())?,
    }
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let loaded = load_instance(&args.instance)?;
    if loaded.truth.is_none() {
        return Err(Error::InvalidInput(
            "diagnostics compare sets through the true permutation; the instance has no truth file".into(),
        ));
    }
    let inst = loaded.into_instance()?;
    let n = inst.g_pi.n();
    let p = args.p.unwrap_or(inst.params.p);
    let algo = args.params.resolve(n, args.seed)?;

    // The full variant reproduces the stages of round 0; the simplified one
    // partitions the whole vertex set on both sides.
    let (q, q_prime, sg, sg_prime, b_prime, split_sizes) = match args.variant {
        VariantArg::Full => {
            let parts = round_parts(n, &algo, 0)?;
            let q = first_generation(&inst.g_pi, &parts.split.a, p, algo.m)?;
            let q_prime = first_generation(&inst.g_prime, &parts.split_prime.a, p, algo.m)?;
            let sg = second_generation(&inst.g_pi, &parts.split.b, &q, p)?;
            let sg_prime = second_generation(&inst.g_prime, &parts.split_prime.b, &q_prime, p)?;
            let sizes = Some((parts.split.a.card(), parts.split.b.card(), parts.split.c.card()));
            (q, q_prime, sg, sg_prime, parts.split_prime.b, sizes)
        }
        VariantArg::Simplified => {
            let full = VertexSet::full(n);
            let q = first_generation(&inst.g_pi, &full, p, algo.m)?;
            let q_prime = first_generation(&inst.g_prime, &full, p, algo.m)?;
            let sg = second_generation(&inst.g_pi, &full, &q, p)?;
            let sg_prime = second_generation(&inst.g_prime, &full, &q_prime, p)?;
            (q, q_prime, sg, sg_prime, full, None)
        }
    };
    let first = first_gen_overlap_stats(&q, &q_prime, &inst.truth)?;
    let second = second_gen_overlap_stats(&sg, &sg_prime, &inst.truth, &b_prime, algo.beta)?;
    let model = model_stats(&inst)?;

    if args.out.exists() && !args.force {
        return Err(Error::InvalidInput(format!(
            "output directory {} exists (use --force to overwrite)",
            args.out.display()
        )));
    }
    fs::create_dir_all(&args.out)?;

    let mut first_csv = String::from("bucket,size,size_prime,intersection,sym_diff\n");
    let mut sym_diff_total = 0usize;
    let mut universe = 0usize;
    for row in &first {
        sym_diff_total += row.sym_diff;
        universe += row.size + row.size_prime;
        let _ = writeln!(
            first_csv,
            "{},{},{},{},{}",
            row.bucket, row.size, row.size_prime, row.intersection, row.sym_diff
        );
    }
    fs::write(args.out.join("first_gen.csv"), first_csv)?;

    let mut second_csv = String::from("code,size,size_prime,intersection,b_prime_overlap\n");
    for row in &second.rows {
        let _ = writeln!(
            second_csv,
            "{},{},{},{},{}",
            row.code, row.size, row.size_prime, row.intersection, row.b_prime_overlap
        );
    }
    fs::write(args.out.join("second_gen.csv"), second_csv)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "n={n}");
    let _ = writeln!(summary, "p={p}");
    let _ = writeln!(summary, "alpha={}", inst.params.alpha);
    let _ = writeln!(
        summary,
        "variant={}",
        match args.variant {
            VariantArg::Full => "full",
            VariantArg::Simplified => "simplified",
        }
    );
    let _ = writeln!(summary, "mode={}", algo.mode);
    let _ = writeln!(summary, "beta={}", algo.beta);
    let _ = writeln!(summary, "m={}", algo.m);
    let _ = writeln!(summary, "seed={}", algo.seed);
    if let Some((a, b, c)) = split_sizes {
        let _ = writeln!(summary, "split_a={a}");
        let _ = writeln!(summary, "split_b={b}");
        let _ = writeln!(summary, "split_c={c}");
    }
    let _ = writeln!(summary, "density_g_pi={}", model.density_g_pi);
    let _ = writeln!(summary, "density_g_prime={}", model.density_g_prime);
    match model.retention {
        Some(r) => {
            let _ = writeln!(summary, "retention={r}");
        }
        None => {
            let _ = writeln!(summary, "retention=undefined");
        }
    }
    let _ = writeln!(summary, "first_gen_sym_diff_total={sym_diff_total}");
    let _ = writeln!(
        summary,
        "first_gen_sym_diff_fraction={}",
        if universe == 0 { 0.0 } else { sym_diff_total as f64 / universe as f64 }
    );
    let _ = writeln!(summary, "second_gen_codes_present={}", second.rows.len());
    let _ = writeln!(summary, "second_gen_threshold={}", second.threshold);
    let _ = writeln!(summary, "bad_code_count={}", second.bad_code_count);
    fs::write(args.out.join("summary.txt"), summary)?;

    println!("wrote {}", args.out.display());
    Ok(())
}
