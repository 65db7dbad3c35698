//! Command-line entry point for the joint prediction pipeline.
//!
//! Every subcommand writes machine-readable metrics as JSON lines to stdout
//! and a human summary to stderr. Exit codes: 0 on success, 1 on a
//! validation or usage error, 2 on an internal failure. Commands with
//! tunables accept `--config file.json`; explicit flags win over config
//! values, which win over defaults, and the merged result is logged as the
//! first stdout line so any run is reproducible from its output.

use std::collections::BTreeSet;
use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use jf_core::brep::{parse_part_graph, FeatureMask, JointSet, PartGraph};
use jf_core::dataset::{
    self, consolidate, flatten_sets, load_corpus, load_splits, make_splits, save_corpus,
    save_splits, synth_corpus, Corpus, Split, SplitManifest, SynthConfig, DEFAULT_RATIOS,
};
use jf_core::eval::{axis_accuracy, EvalSample, Report};
use jf_core::geometry::{parse_obj, TriMesh};
use jf_core::heuristic::{fit_prior, heuristic_scores, random_scores, LabeledPair, PairTypePrior};
use jf_core::network::{
    gradcheck_suite, train, Model, NetworkConfig, TrainConfig, TrainSample, DEFAULT_WIDTH,
};
use jf_core::scores::ScoreMatrix;
use jf_core::search::{assemble_sequence, search_pose, SearchConfig};

/// `gradcheck` succeeds iff the worst relative gradient error is below this.
const GRAD_TOL: f64 = 1e-4;

#[derive(Debug)]
enum CliError {
    /// Bad flags, config, or input data.
    Invalid(String),
    /// The inputs were fine but the run failed anyway.
    Internal(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Internal(m) => write!(f, "{m}"),
        }
    }
}

fn invalid(e: impl fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn internal(e: impl fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Parser)]
#[command(name = "joint-forge", version, about = "Joint prediction for CAD assemblies")]
struct Cli {
    /// Cap on worker threads (fallback: JOINT_FORGE_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of part pairs with labeled joints
    GenSynthetic(GenArgs),
    /// Merge duplicate parts and deduplicate joints across a corpus
    Consolidate(ConsolidateArgs),
    /// Assign joint sets to train/val/test/test-original splits
    Split(SplitArgs),
    /// Train the joint prediction network
    Train(TrainArgs),
    /// Score entity pairs with a trained model or a baseline
    Predict(PredictArgs),
    /// Optimize the assembly pose for one part pair
    Search(SearchArgs),
    /// Evaluate stored predictions against ground-truth joints
    Eval(EvalArgs),
    /// Check tape gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Place a sequence of parts one joint at a time
    AssembleSequence(AssembleArgs),
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("joint-forge: {e}");
            e.code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
        Command::Consolidate(a) => cmd_consolidate(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Search(a) => cmd_search(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::AssembleSequence(a) => cmd_assemble(a),
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("JOINT_FORGE_THREADS") {
            Ok(s) => Some(s.parse::<usize>().map_err(|_| {
                CliError::Invalid(format!("JOINT_FORGE_THREADS={s:?} is not a thread count"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Invalid("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(internal)?;
    }
    Ok(())
}

/// One machine-readable metrics line to stdout.
fn jsonl(value: serde_json::Value) {
    println!("{value}");
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))
}

fn load_corpus_cli(root: &Path) -> Result<Corpus, CliError> {
    load_corpus(root).map_err(|e| CliError::Invalid(format!("data {}: {e}", root.display())))
}

/// The split manifest beside the corpus, if one has been written.
fn load_splits_opt(root: &Path) -> Result<Option<SplitManifest>, CliError> {
    if !root.join("splits.json").exists() {
        return Ok(None);
    }
    load_splits(root)
        .map(Some)
        .map_err(|e| CliError::Invalid(format!("splits {}: {e}", root.display())))
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        CliError::Invalid(format!(
            "unknown split {s:?} (expected train, val, test, or test_original)"
        ))
    })
}

/// Joint sets restricted to one split; without `--split`, everything.
fn select_sets<'a>(
    corpus: &'a Corpus,
    manifest: Option<&SplitManifest>,
    split: Option<Split>,
) -> Result<Vec<(&'a str, &'a JointSet)>, CliError> {
    let Some(want) = split else {
        return Ok(corpus.sets.iter().map(|(n, s)| (n.as_str(), s)).collect());
    };
    let manifest = manifest.ok_or_else(|| {
        CliError::Invalid("--split given but the data directory has no splits.json".into())
    })?;
    let mut out = Vec::new();
    for (name, set) in &corpus.sets {
        match manifest.assignment.get(name) {
            Some(&s) if s == want => out.push((name.as_str(), set)),
            Some(_) => {}
            None => {
                return Err(CliError::Invalid(format!(
                    "set {name} is missing from splits.json; regenerate the splits"
                )))
            }
        }
    }
    Ok(out)
}

/// Distinct labeled cells of a joint set, in first-seen order.
fn labels_of(set: &JointSet) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in &set.joints {
        if !out.contains(&(j.u, j.v)) {
            out.push((j.u, j.v));
        }
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    dataset::atomic_write(path, text).map_err(internal)
}

// --- gen-synthetic ---------------------------------------------------------

#[derive(Args)]
struct GenArgs {
    /// Number of joint sets to generate
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output corpus directory
    #[arg(long)]
    out: PathBuf,
    /// Fraction of peg-plate samples given a sibling hole
    #[arg(long)]
    sibling_fraction: Option<f64>,
    /// Most unlabeled decoy holes per plate
    #[arg(long)]
    max_decoy_holes: Option<usize>,
    /// JSON config; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GenFile {
    n: Option<usize>,
    seed: Option<u64>,
    peg_plate_weight: Option<f64>,
    cube_pair_weight: Option<f64>,
    plate_pair_weight: Option<f64>,
    sibling_fraction: Option<f64>,
    max_decoy_holes: Option<usize>,
}

fn cmd_gen_synthetic(a: GenArgs) -> Result<(), CliError> {
    let file: GenFile = load_config(a.config.as_deref())?;
    let base = SynthConfig::default();
    let cfg = SynthConfig {
        num_samples: a.n.or(file.n).unwrap_or(base.num_samples),
        seed: a.seed.or(file.seed).unwrap_or(base.seed),
        peg_plate_weight: file.peg_plate_weight.unwrap_or(base.peg_plate_weight),
        cube_pair_weight: file.cube_pair_weight.unwrap_or(base.cube_pair_weight),
        plate_pair_weight: file.plate_pair_weight.unwrap_or(base.plate_pair_weight),
        sibling_fraction: a
            .sibling_fraction
            .or(file.sibling_fraction)
            .unwrap_or(base.sibling_fraction),
        max_decoy_holes: a
            .max_decoy_holes
            .or(file.max_decoy_holes)
            .unwrap_or(base.max_decoy_holes),
    };
    jsonl(json!({
        "event": "config", "command": "gen-synthetic", "out": a.out,
        "n": cfg.num_samples, "seed": cfg.seed,
        "peg_plate_weight": cfg.peg_plate_weight,
        "cube_pair_weight": cfg.cube_pair_weight,
        "plate_pair_weight": cfg.plate_pair_weight,
        "sibling_fraction": cfg.sibling_fraction,
        "max_decoy_holes": cfg.max_decoy_holes,
    }));
    let corpus = synth_corpus(&cfg).map_err(invalid)?;
    save_corpus(&a.out, &corpus).map_err(internal)?;
    jsonl(json!({
        "event": "gen_synthetic",
        "sets": corpus.sets.len(),
        "parts": corpus.parts.len(),
        "out": a.out,
    }));
    eprintln!(
        "wrote {} joint sets ({} parts) to {}",
        corpus.sets.len(),
        corpus.parts.len(),
        a.out.display()
    );
    Ok(())
}

// --- consolidate -----------------------------------------------------------

#[derive(Args)]
struct ConsolidateArgs {
    /// Input corpus directory
    #[arg(long = "in")]
    input: PathBuf,
    /// Output corpus directory
    #[arg(long)]
    out: PathBuf,
}

fn cmd_consolidate(a: ConsolidateArgs) -> Result<(), CliError> {
    jsonl(json!({"event": "config", "command": "consolidate", "in": a.input, "out": a.out}));
    let corpus = load_corpus_cli(&a.input)?;
    let records = flatten_sets(corpus.sets.iter().map(|(_, s)| s));
    let sets = consolidate(&corpus.parts, &records).map_err(invalid)?;

    let mut out = Corpus::new();
    let mut kept: BTreeSet<&str> = BTreeSet::new();
    for set in &sets {
        kept.insert(&set.part1);
        kept.insert(&set.part2);
    }
    for id in &kept {
        let part = corpus.part(id).map_err(invalid)?.clone();
        let mesh = corpus.mesh(id).map_err(invalid)?.clone();
        out.insert_part(part, mesh).map_err(internal)?;
    }
    let joints_out: usize = sets.iter().map(|s| s.joints.len()).sum();
    for set in sets {
        let name = format!("{}__{}", set.part1, set.part2);
        out.push_set(name, set);
    }
    save_corpus(&a.out, &out).map_err(internal)?;

    jsonl(json!({
        "event": "consolidate",
        "sets_in": corpus.sets.len(), "sets_out": out.sets.len(),
        "joints_in": records.len(), "joints_out": joints_out,
        "parts_in": corpus.parts.len(), "parts_out": out.parts.len(),
    }));
    eprintln!(
        "{} sets / {} joints / {} parts  ->  {} sets / {} joints / {} parts",
        corpus.sets.len(),
        records.len(),
        corpus.parts.len(),
        out.sets.len(),
        joints_out,
        out.parts.len()
    );
    Ok(())
}

// --- split -----------------------------------------------------------------

#[derive(Args)]
struct SplitArgs {
    /// Corpus directory
    #[arg(long)]
    data: PathBuf,
    /// Four comma-separated fractions: train,val,test,test-original
    #[arg(long)]
    ratios: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Leave sibling-carrying samples in val/test instead of rerouting them
    #[arg(long)]
    keep_siblings: bool,
    /// Where to write splits.json (default: the data directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SplitFile {
    ratios: Option<[f64; 4]>,
    seed: Option<u64>,
    exclude_siblings: Option<bool>,
}

fn parse_ratios(s: &str) -> Result<[f64; 4], CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(CliError::Invalid(format!(
            "--ratios needs four comma-separated numbers, got {s:?}"
        )));
    }
    let mut out = [0.0; 4];
    for (slot, text) in out.iter_mut().zip(&parts) {
        *slot = text
            .trim()
            .parse()
            .map_err(|_| CliError::Invalid(format!("bad ratio {text:?} in {s:?}")))?;
    }
    Ok(out)
}

fn cmd_split(a: SplitArgs) -> Result<(), CliError> {
    let file: SplitFile = load_config(a.config.as_deref())?;
    let ratios = match &a.ratios {
        Some(s) => parse_ratios(s)?,
        None => file.ratios.unwrap_or(DEFAULT_RATIOS),
    };
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let exclude = if a.keep_siblings {
        false
    } else {
        file.exclude_siblings.unwrap_or(true)
    };
    let out = a.out.clone().unwrap_or_else(|| a.data.clone());
    jsonl(json!({
        "event": "config", "command": "split", "data": a.data, "out": out,
        "ratios": ratios, "seed": seed, "exclude_siblings": exclude,
    }));

    let corpus = load_corpus_cli(&a.data)?;
    let manifest = make_splits(&corpus, ratios, seed, exclude).map_err(invalid)?;
    save_splits(&out, &manifest).map_err(internal)?;

    let mut counts = std::collections::BTreeMap::new();
    for split in manifest.assignment.values() {
        *counts.entry(format!("{split:?}").to_lowercase()).or_insert(0usize) += 1;
    }
    jsonl(json!({"event": "split", "counts": counts, "sets": manifest.assignment.len()}));
    eprintln!(
        "assigned {} sets: {}",
        manifest.assignment.len(),
        counts
            .iter()
            .map(|(k, v)| format!("{k} {v}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

// --- train -----------------------------------------------------------------

#[derive(Args)]
struct TrainArgs {
    /// Corpus directory (uses splits.json for train/val when present)
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden width of every layer
    #[arg(long)]
    width: Option<usize>,
    /// Top-k for the final accuracy line
    #[arg(long)]
    k: Option<usize>,
    /// Skip samples with more total entities than this
    #[arg(long)]
    skip_threshold: Option<usize>,
    /// JSON config; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainFile {
    lr: Option<f64>,
    epochs: Option<usize>,
    k: Option<usize>,
    seed: Option<u64>,
    skip_threshold: Option<usize>,
    width: Option<usize>,
    feature_mask: Option<FeatureMask>,
    use_ce: Option<bool>,
    use_sym: Option<bool>,
    plateau_patience: Option<usize>,
}

fn train_samples(
    corpus: &Corpus,
    sets: &[(&str, &JointSet)],
) -> Result<Vec<TrainSample>, CliError> {
    let mut out = Vec::with_capacity(sets.len());
    for (_, set) in sets {
        out.push(TrainSample {
            g1: corpus.part(&set.part1).map_err(invalid)?.clone(),
            g2: corpus.part(&set.part2).map_err(invalid)?.clone(),
            labels: labels_of(set),
        });
    }
    Ok(out)
}

/// Fraction of samples with a labeled cell among their k best scores.
fn topk_accuracy(model: &Model, samples: &[TrainSample], k: usize) -> Result<f64, CliError> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0usize;
    for s in samples {
        let scores = model.predict(&s.g1, &s.g2).map_err(internal)?;
        if scores
            .top_k(k)
            .iter()
            .any(|&(u, v, _)| s.labels.contains(&(u, v)))
        {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let file: TrainFile = load_config(a.config.as_deref())?;
    let base = TrainConfig::default();
    let seed = a.seed.or(file.seed).unwrap_or(base.seed);
    let k = a.k.or(file.k).unwrap_or(1);
    let cfg = TrainConfig {
        lr: a.lr.or(file.lr).unwrap_or(base.lr),
        epochs: a.epochs.or(file.epochs).unwrap_or(base.epochs),
        seed,
        skip_threshold: a
            .skip_threshold
            .or(file.skip_threshold)
            .unwrap_or(base.skip_threshold),
        network: NetworkConfig {
            width: a.width.or(file.width).unwrap_or(DEFAULT_WIDTH),
            feature_mask: file.feature_mask.unwrap_or_default(),
            seed,
        },
        use_ce: file.use_ce.unwrap_or(true),
        use_sym: file.use_sym.unwrap_or(true),
        plateau_patience: file.plateau_patience.unwrap_or(base.plateau_patience),
        checkpoint_dir: Some(a.out.clone()),
    };
    if !cfg.use_ce && !cfg.use_sym {
        return Err(CliError::Invalid("both loss terms disabled".into()));
    }

    let corpus = load_corpus_cli(&a.data)?;
    let manifest = load_splits_opt(&a.data)?;
    let (train_names, val_names) = match &manifest {
        Some(m) => (
            select_sets(&corpus, Some(m), Some(Split::Train))?,
            select_sets(&corpus, Some(m), Some(Split::Val))?,
        ),
        None => (select_sets(&corpus, None, None)?, Vec::new()),
    };
    let train_set = train_samples(&corpus, &train_names)?;
    let val_set = train_samples(&corpus, &val_names)?;
    if train_set.is_empty() {
        return Err(CliError::Invalid("no training samples selected".into()));
    }

    jsonl(json!({
        "event": "config", "command": "train", "data": a.data, "out": a.out,
        "lr": cfg.lr, "epochs": cfg.epochs, "seed": seed, "k": k,
        "skip_threshold": cfg.skip_threshold, "width": cfg.network.width,
        "feature_mask": cfg.network.feature_mask,
        "use_ce": cfg.use_ce, "use_sym": cfg.use_sym,
        "plateau_patience": cfg.plateau_patience,
        "train_samples": train_set.len(), "val_samples": val_set.len(),
    }));

    fs::create_dir_all(&a.out).map_err(internal)?;
    let start = Instant::now();
    let (model, logs) = train(&train_set, &val_set, &cfg).map_err(internal)?;
    for log in &logs {
        let mut value = serde_json::to_value(log).map_err(internal)?;
        value["event"] = json!("epoch");
        jsonl(value);
        eprintln!(
            "epoch {:>4}  train {:.4}  val {:.4}  val top1 {:.3}  lr {:.2e}",
            log.epoch, log.train_loss, log.val_loss, log.val_top1, log.lr
        );
    }

    let train_acc = topk_accuracy(&model, &train_set, k)?;
    let val_acc = topk_accuracy(&model, &val_set, k)?;
    jsonl(json!({
        "event": "trained",
        "epochs": logs.len(),
        "k": k,
        "train_topk": train_acc,
        "val_topk": val_acc,
        "seconds": start.elapsed().as_secs_f64(),
        "checkpoint": a.out.join("final.ckpt.json"),
    }));
    eprintln!(
        "trained {} epochs in {:.1}s; top-{k} accuracy train {:.3}, val {}",
        logs.len(),
        start.elapsed().as_secs_f64(),
        train_acc,
        if val_acc.is_nan() { "n/a".to_string() } else { format!("{val_acc:.3}") }
    );
    Ok(())
}

// --- predict ---------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Heuristic,
    Random,
}

enum Scorer {
    Model(Box<Model>),
    Heuristic(PairTypePrior),
    Random(u64),
}

impl Scorer {
    fn name(&self) -> &'static str {
        match self {
            Scorer::Model(_) => "model",
            Scorer::Heuristic(_) => "heuristic",
            Scorer::Random(_) => "random",
        }
    }

    /// `index` keeps per-sample randomness deterministic under filtering.
    fn score(
        &self,
        g1: &PartGraph,
        g2: &PartGraph,
        index: usize,
    ) -> Result<ScoreMatrix, CliError> {
        match self {
            Scorer::Model(m) => m.predict(g1, g2).map_err(internal),
            Scorer::Heuristic(prior) => Ok(heuristic_scores(g1, g2, prior)),
            Scorer::Random(seed) => Ok(random_scores(g1, g2, seed.wrapping_add(index as u64))),
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    /// Corpus directory
    #[arg(long)]
    data: PathBuf,
    /// Output directory for per-set prediction files
    #[arg(long)]
    out: PathBuf,
    /// Trained checkpoint manifest
    #[arg(long)]
    model: Option<PathBuf>,
    /// Score with a baseline instead of a model
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Restrict to one split (train, val, test, test_original)
    #[arg(long)]
    split: Option<String>,
    /// Entries kept per sample
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PredictFile {
    k: Option<usize>,
    seed: Option<u64>,
}

/// Fit the pair-type prior on the train split, or on everything when the
/// corpus has no split manifest.
fn fit_corpus_prior(
    corpus: &Corpus,
    manifest: Option<&SplitManifest>,
) -> Result<PairTypePrior, CliError> {
    let fit_sets = match manifest {
        Some(m) => select_sets(corpus, Some(m), Some(Split::Train))?,
        None => select_sets(corpus, None, None)?,
    };
    let mut owned = Vec::with_capacity(fit_sets.len());
    for (_, set) in &fit_sets {
        owned.push((
            corpus.part(&set.part1).map_err(invalid)?,
            corpus.part(&set.part2).map_err(invalid)?,
            labels_of(set),
        ));
    }
    let pairs: Vec<LabeledPair> = owned
        .iter()
        .map(|(g1, g2, labels)| LabeledPair { g1, g2, labels })
        .collect();
    fit_prior(&pairs).map_err(invalid)
}

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    let file: PredictFile = load_config(a.config.as_deref())?;
    let k = a.k.or(file.k).unwrap_or(50);
    let seed = a.seed.or(file.seed).unwrap_or(0);
    if k == 0 {
        return Err(CliError::Invalid("--k must be at least 1".into()));
    }
    if a.model.is_some() == a.baseline.is_some() {
        return Err(CliError::Invalid(
            "pass exactly one of --model or --baseline".into(),
        ));
    }

    let corpus = load_corpus_cli(&a.data)?;
    let manifest = load_splits_opt(&a.data)?;
    let split = a.split.as_deref().map(parse_split).transpose()?;
    let selected = select_sets(&corpus, manifest.as_ref(), split)?;
    if selected.is_empty() {
        return Err(CliError::Invalid("no joint sets selected".into()));
    }

    let scorer = match (&a.model, a.baseline) {
        (Some(path), None) => Scorer::Model(Box::new(
            Model::load(path).map_err(|e| invalid(format!("model {}: {e}", path.display())))?,
        )),
        (None, Some(Baseline::Heuristic)) => {
            Scorer::Heuristic(fit_corpus_prior(&corpus, manifest.as_ref())?)
        }
        (None, Some(Baseline::Random)) => Scorer::Random(seed),
        _ => unreachable!("exclusivity checked above"),
    };

    jsonl(json!({
        "event": "config", "command": "predict", "data": a.data, "out": a.out,
        "scorer": scorer.name(), "model": a.model, "split": a.split,
        "k": k, "seed": seed, "samples": selected.len(),
    }));

    fs::create_dir_all(&a.out).map_err(internal)?;
    for (index, (name, set)) in selected.iter().enumerate() {
        let g1 = corpus.part(&set.part1).map_err(invalid)?;
        let g2 = corpus.part(&set.part2).map_err(invalid)?;
        let scores = scorer.score(g1, g2, index)?;
        let top = scores.top_k(k);
        let text = serde_json::to_string_pretty(&json!({
            "set": name,
            "part1": set.part1,
            "part2": set.part2,
            "k": k,
            "scorer": scorer.name(),
            "scores": top,
        }))
        .map_err(internal)?;
        write_text(&a.out.join(format!("{name}.json")), &text)?;
        let best = top.first().map(|&(u, v, s)| json!({"cell": [u, v], "score": s}));
        jsonl(json!({"event": "prediction", "set": name, "best": best}));
    }
    jsonl(json!({
        "event": "predicted",
        "samples": selected.len(),
        "scorer": scorer.name(),
        "out": a.out,
    }));
    eprintln!(
        "scored {} pairs with {} into {}",
        selected.len(),
        scorer.name(),
        a.out.display()
    );
    Ok(())
}

// --- search ----------------------------------------------------------------

#[derive(Args)]
struct SearchArgs {
    /// Trained checkpoint manifest
    #[arg(long)]
    model: PathBuf,
    /// Pair description file
    #[arg(long)]
    pair: PathBuf,
    /// Candidate entity pairs to try
    #[arg(long)]
    k: Option<usize>,
    /// Monte-Carlo points per mesh
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Result JSON file
    #[arg(long)]
    out: PathBuf,
    /// JSON config; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SearchFile {
    k: Option<usize>,
    samples: Option<usize>,
    seed: Option<u64>,
    max_iters: Option<usize>,
    spread_tol: Option<f64>,
    symmetry_tol: Option<f64>,
}

/// On-disk pair description: part graph paths relative to the file's
/// directory, with optional mesh overrides (defaults: each part's own mesh
/// reference, also resolved against the file's directory).
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairFile {
    part1: String,
    part2: String,
    #[serde(default)]
    mesh1: Option<String>,
    #[serde(default)]
    mesh2: Option<String>,
}

fn read_rel(root: &Path, rel: &str) -> Result<String, CliError> {
    let path = root.join(rel);
    fs::read_to_string(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_pair(path: &Path) -> Result<(PartGraph, PartGraph, TriMesh, TriMesh), CliError> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let pair: PairFile =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let root = path.parent().unwrap_or_else(|| Path::new("."));
    let g1 = parse_part_graph(&read_rel(root, &pair.part1)?).map_err(invalid)?;
    let g2 = parse_part_graph(&read_rel(root, &pair.part2)?).map_err(invalid)?;
    let mesh1_rel = pair.mesh1.as_deref().unwrap_or(&g1.mesh);
    let mesh2_rel = pair.mesh2.as_deref().unwrap_or(&g2.mesh);
    let mesh1 = parse_obj(&read_rel(root, mesh1_rel)?).map_err(invalid)?;
    let mesh2 = parse_obj(&read_rel(root, mesh2_rel)?).map_err(invalid)?;
    Ok((g1, g2, mesh1, mesh2))
}

fn merged_search_config(
    k: Option<usize>,
    samples: Option<usize>,
    file: &SearchFile,
) -> SearchConfig {
    let base = SearchConfig::default();
    let samples = samples.or(file.samples);
    SearchConfig {
        k: k.or(file.k).unwrap_or(base.k),
        surface_samples: samples.unwrap_or(base.surface_samples),
        volume_samples: samples.unwrap_or(base.volume_samples),
        max_iters: file.max_iters.unwrap_or(base.max_iters),
        spread_tol: file.spread_tol.unwrap_or(base.spread_tol),
        symmetry_tol: file.symmetry_tol.unwrap_or(base.symmetry_tol),
        ..base
    }
}

fn search_error(e: jf_core::search::Error) -> CliError {
    use jf_core::search::Error;
    match e {
        Error::InvalidConfig(_) | Error::NoValidPrediction => invalid(e),
        _ => internal(e),
    }
}

fn cmd_search(a: SearchArgs) -> Result<(), CliError> {
    let file: SearchFile = load_config(a.config.as_deref())?;
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let cfg = merged_search_config(a.k, a.samples, &file);
    jsonl(json!({
        "event": "config", "command": "search", "model": a.model, "pair": a.pair,
        "out": a.out, "k": cfg.k, "samples": cfg.surface_samples, "seed": seed,
        "max_iters": cfg.max_iters, "spread_tol": cfg.spread_tol,
        "symmetry_tol": cfg.symmetry_tol,
    }));

    let model = Model::load(&a.model)
        .map_err(|e| invalid(format!("model {}: {e}", a.model.display())))?;
    let (g1, g2, mesh1, mesh2) = load_pair(&a.pair)?;
    let scores = model.predict(&g1, &g2).map_err(internal)?;
    let predictions = scores.top_k(cfg.k);

    let start = Instant::now();
    let result = search_pose(&g1, &g2, &mesh1, &[mesh2], &predictions, &cfg, seed)
        .map_err(search_error)?;
    let seconds = start.elapsed().as_secs_f64();

    let runs: Vec<serde_json::Value> = result
        .runs
        .iter()
        .map(|r| {
            json!({
                "rank": r.rank, "u": r.u, "v": r.v, "flip": r.flip,
                "symmetric": r.symmetric, "offset": r.pose.offset,
                "rotation": r.pose.rotation, "cost": r.cost,
            })
        })
        .collect();
    let out = json!({
        "rank": result.rank,
        "u": result.u,
        "v": result.v,
        "offset": result.pose.offset,
        "rotation": result.pose.rotation,
        "flip": result.pose.flip,
        "transform": result.transform.to_mat16(),
        "cost": result.cost,
        "runs": runs,
    });
    write_text(&a.out, &serde_json::to_string_pretty(&out).map_err(internal)?)?;

    jsonl(json!({
        "event": "search", "rank": result.rank, "cell": [result.u, result.v],
        "offset": result.pose.offset, "rotation": result.pose.rotation,
        "flip": result.pose.flip, "cost": result.cost, "seconds": seconds,
    }));
    eprintln!(
        "best pose: rank {} cell ({}, {}) flip {} cost {:.4} in {:.2}s",
        result.rank, result.u, result.v, result.pose.flip, result.cost, seconds
    );
    Ok(())
}

// --- eval ------------------------------------------------------------------

#[derive(Args)]
struct EvalArgs {
    /// Directory of prediction files from `predict`
    #[arg(long)]
    pred: PathBuf,
    /// Corpus directory
    #[arg(long)]
    data: PathBuf,
    /// Top-k for the hit criterion
    #[arg(long)]
    k: Option<usize>,
    /// Restrict to one split (train, val, test, test_original)
    #[arg(long)]
    split: Option<String>,
    /// Report JSON file
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalFile {
    k: Option<usize>,
    seed: Option<u64>,
}

/// Stored prediction for one set, as written by `predict`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredPrediction {
    set: String,
    part1: String,
    part2: String,
    #[allow(dead_code)]
    k: usize,
    #[allow(dead_code)]
    scorer: String,
    scores: Vec<(usize, usize, f64)>,
}

/// Rebuild a score matrix from a stored top-k list: stored cells keep their
/// scores, everything else sinks to -inf, and NURBS cells are masked so the
/// reconstruction ranks exactly like the original prefix.
fn matrix_from_stored(
    g1: &PartGraph,
    g2: &PartGraph,
    stored: &StoredPrediction,
    want_k: usize,
) -> Result<ScoreMatrix, CliError> {
    let (n, m) = (g1.num_nodes(), g2.num_nodes());
    let bad1 = g1.nurbs_indices();
    let bad2 = g2.nurbs_indices();
    let mut valid = vec![true; n * m];
    for u in &bad1 {
        for v in 0..m {
            valid[u * m + v] = false;
        }
    }
    for v in &bad2 {
        for u in 0..n {
            valid[u * m + v] = false;
        }
    }
    let num_valid = valid.iter().filter(|&&b| b).count();
    if want_k > stored.scores.len() && stored.scores.len() < num_valid {
        return Err(CliError::Invalid(format!(
            "set {}: predictions store top-{} but --k {want_k} was requested",
            stored.set,
            stored.scores.len()
        )));
    }
    let mut scores = vec![f64::NEG_INFINITY; n * m];
    for &(u, v, s) in &stored.scores {
        if u >= n || v >= m {
            return Err(CliError::Invalid(format!(
                "set {}: predicted cell ({u}, {v}) outside the {n}x{m} matrix",
                stored.set
            )));
        }
        scores[u * m + v] = s;
    }
    Ok(ScoreMatrix::new(n, m, scores, valid))
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let file: EvalFile = load_config(a.config.as_deref())?;
    let k = a.k.or(file.k).unwrap_or(1);
    let seed = a.seed.or(file.seed).unwrap_or(0);
    jsonl(json!({
        "event": "config", "command": "eval", "pred": a.pred, "data": a.data,
        "out": a.out, "k": k, "split": a.split, "seed": seed,
    }));

    let corpus = load_corpus_cli(&a.data)?;
    let manifest = load_splits_opt(&a.data)?;
    let split = a.split.as_deref().map(parse_split).transpose()?;
    let selected = select_sets(&corpus, manifest.as_ref(), split)?;
    if selected.is_empty() {
        return Err(CliError::Invalid("no joint sets selected".into()));
    }

    let mut rows = Vec::with_capacity(selected.len());
    for (name, set) in &selected {
        let path = a.pred.join(format!("{name}.json"));
        let text = fs::read_to_string(&path)
            .map_err(|e| invalid(format!("prediction {}: {e}", path.display())))?;
        let stored: StoredPrediction = serde_json::from_str(&text)
            .map_err(|e| invalid(format!("prediction {}: {e}", path.display())))?;
        if stored.part1 != set.part1 || stored.part2 != set.part2 {
            return Err(CliError::Invalid(format!(
                "prediction {} names parts {} / {} but the set has {} / {}",
                path.display(),
                stored.part1,
                stored.part2,
                set.part1,
                set.part2
            )));
        }
        let g1 = corpus.part(&set.part1).map_err(invalid)?;
        let g2 = corpus.part(&set.part2).map_err(invalid)?;
        let matrix = matrix_from_stored(g1, g2, &stored, k)?;
        rows.push((g1, g2, matrix, labels_of(set), set.holes));
    }
    let samples: Vec<EvalSample> = rows
        .iter()
        .map(|(g1, g2, matrix, labels, holes)| EvalSample {
            g1,
            g2,
            scores: matrix,
            labels,
            holes: *holes,
        })
        .collect();
    let axis = axis_accuracy(&samples, k).map_err(invalid)?;
    let report = Report {
        split: a.split.clone(),
        k,
        seed,
        num_samples: samples.len(),
        axis,
        pose: None,
    };
    write_text(&a.out, &report.to_json())?;

    let mut line = serde_json::to_value(&report).map_err(internal)?;
    line["event"] = json!("eval");
    jsonl(line);
    eprint!("{}", report.to_text());
    Ok(())
}

// --- gradcheck -------------------------------------------------------------

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random small networks to check
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    jsonl(json!({
        "event": "config", "command": "gradcheck",
        "seed": a.seed, "count": a.count, "h": a.h,
    }));
    let start = Instant::now();
    let report = gradcheck_suite(a.count, a.seed, a.h).map_err(internal)?;
    let seconds = start.elapsed().as_secs_f64();
    jsonl(json!({
        "event": "gradcheck",
        "max_rel_err": report.max_rel_err,
        "checked": report.checked,
        "skipped_nonsmooth": report.skipped_nonsmooth,
        "tolerance": GRAD_TOL,
        "seconds": seconds,
    }));
    eprintln!(
        "max relative gradient error {:.3e} over {} coordinates ({} nonsmooth skipped) in {seconds:.2}s",
        report.max_rel_err, report.checked, report.skipped_nonsmooth
    );
    if report.max_rel_err < GRAD_TOL {
        Ok(())
    } else {
        Err(CliError::Invalid(format!(
            "gradient check failed: {:.3e} >= {GRAD_TOL:.0e}",
            report.max_rel_err
        )))
    }
}

// --- assemble-sequence -----------------------------------------------------

#[derive(Args)]
struct AssembleArgs {
    /// Corpus directory holding the parts
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ordered comma-separated part ids; the first is anchored
    #[arg(long, value_delimiter = ',')]
    parts: Vec<String>,
    /// Steps new:against over part list indices, e.g. 1:0,2:0
    #[arg(long)]
    sequence: Option<String>,
    /// Trained checkpoint manifest
    #[arg(long)]
    model: Option<PathBuf>,
    /// Use the built-in three-part stack with this generator seed
    #[arg(long)]
    stack: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    /// Monte-Carlo points per mesh
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Placements JSON file
    #[arg(long)]
    out: PathBuf,
    /// JSON config; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_sequence(s: &str) -> Result<Vec<(usize, usize)>, CliError> {
    let mut out = Vec::new();
    for step in s.split(',') {
        let (new, against) = step
            .split_once(':')
            .ok_or_else(|| invalid(format!("bad step {step:?}; expected new:against")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| invalid(format!("bad part index {t:?} in step {step:?}")))
        };
        out.push((parse(new)?, parse(against)?));
    }
    Ok(out)
}

/// Ground-truth score matrix: labeled cells get 1, everything else 0.
fn label_matrix(
    g_new: &PartGraph,
    g_against: &PartGraph,
    sets: &[JointSet],
) -> Result<ScoreMatrix, CliError> {
    let mut cells = Vec::new();
    for set in sets {
        if set.part1 == g_new.part_id && set.part2 == g_against.part_id {
            cells.extend(set.joints.iter().map(|j| (j.u, j.v)));
        } else if set.part1 == g_against.part_id && set.part2 == g_new.part_id {
            cells.extend(set.joints.iter().map(|j| (j.v, j.u)));
        }
    }
    if cells.is_empty() {
        return Err(CliError::Invalid(format!(
            "no labeled joints between {} and {}",
            g_new.part_id, g_against.part_id
        )));
    }
    let m = g_against.num_nodes();
    let mut scores = vec![0.0; g_new.num_nodes() * m];
    for (u, v) in cells {
        scores[u * m + v] = 1.0;
    }
    Ok(ScoreMatrix::from_parts(g_new, g_against, scores))
}

fn cmd_assemble(a: AssembleArgs) -> Result<(), CliError> {
    let file: SearchFile = load_config(a.config.as_deref())?;
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let cfg = merged_search_config(a.k, a.samples, &file);

    // Two input modes: a corpus with named parts, or the built-in stack.
    let mut owned: Vec<(PartGraph, TriMesh)> = Vec::new();
    let mut label_sets: Vec<JointSet> = Vec::new();
    let sequence;
    match (&a.data, a.stack) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(CliError::Invalid(
                "pass exactly one of --data or --stack".into(),
            ));
        }
        (Some(data), None) => {
            if a.parts.len() < 2 {
                return Err(CliError::Invalid(
                    "--parts needs at least two part ids".into(),
                ));
            }
            if a.model.is_none() {
                return Err(CliError::Invalid("--data mode needs --model".into()));
            }
            let corpus = load_corpus_cli(data)?;
            for id in &a.parts {
                owned.push((
                    corpus.part(id).map_err(invalid)?.clone(),
                    corpus.mesh(id).map_err(invalid)?.clone(),
                ));
            }
            let s = a.sequence.as_deref().ok_or_else(|| {
                CliError::Invalid("--data mode needs --sequence".into())
            })?;
            sequence = parse_sequence(s)?;
        }
        (None, Some(gen_seed)) => {
            let stack = dataset::gen_stack(gen_seed).map_err(internal)?;
            label_sets = stack.sets;
            owned = stack.parts;
            sequence = match a.sequence.as_deref() {
                Some(s) => parse_sequence(s)?,
                None => vec![(1, 0), (2, 0)],
            };
        }
    }
    let part_ids: Vec<&str> = owned.iter().map(|(g, _)| g.part_id.as_str()).collect();

    jsonl(json!({
        "event": "config", "command": "assemble-sequence", "out": a.out,
        "parts": part_ids, "sequence": sequence, "model": a.model,
        "stack": a.stack, "k": cfg.k, "samples": cfg.surface_samples, "seed": seed,
    }));

    let model = match &a.model {
        Some(path) => Some(
            Model::load(path).map_err(|e| invalid(format!("model {}: {e}", path.display())))?,
        ),
        None => None,
    };

    // Score every step up front so prediction failures surface before any
    // search work starts; the closure then just replays them in order.
    let mut matrices = VecDeque::with_capacity(sequence.len());
    for &(new, against) in &sequence {
        if new >= owned.len() || against >= owned.len() {
            return Err(CliError::Invalid(format!(
                "step {new}:{against} is outside the {} listed parts",
                owned.len()
            )));
        }
        let g_new = &owned[new].0;
        let g_against = &owned[against].0;
        let matrix = match &model {
            Some(m) => m.predict(g_new, g_against).map_err(internal)?,
            None => label_matrix(g_new, g_against, &label_sets)?,
        };
        matrices.push_back(matrix);
    }

    let parts: Vec<(&PartGraph, &TriMesh)> = owned.iter().map(|(g, m)| (g, m)).collect();
    let start = Instant::now();
    let placements = assemble_sequence(
        &parts,
        &sequence,
        |_, _| matrices.pop_front().expect("one matrix per step"),
        &cfg,
        seed,
    )
    .map_err(search_error)?;
    let seconds = start.elapsed().as_secs_f64();

    let out = json!({
        "parts": part_ids,
        "sequence": sequence,
        "placements": placements.iter().map(|t| t.to_mat16().to_vec()).collect::<Vec<_>>(),
    });
    write_text(&a.out, &serde_json::to_string_pretty(&out).map_err(internal)?)?;
    jsonl(json!({
        "event": "assembled",
        "parts": part_ids.len(),
        "steps": sequence.len(),
        "seconds": seconds,
    }));
    eprintln!(
        "placed {} parts in {} steps in {seconds:.2}s; wrote {}",
        part_ids.len(),
        sequence.len(),
        a.out.display()
    );
    Ok(())
}
