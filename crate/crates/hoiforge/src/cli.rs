//! Command-line interface.

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hoiforge_core::autolabel::{label_image, AnnotatedImage, LabelConfig, LabelOutcome, LabelSummary};
use hoiforge_core::eval::{ground_truth_from_manifest, map_report, rare_set_with_unit, EvalMode, EvalSettings};
use hoiforge_core::prompt::{build_generation_plan, expand_plan, GenerationPlan, PromptOptions};
use hoiforge_core::review::{export_verified, sample_batch, ExportHeader};
use hoiforge_core::setmatch::{match_and_score, CostWeights, MatchReport};
use hoiforge_core::stats::{
    clip_score, dataset_totals, histogram, make_zero_shot_split, merge, tail_report, CategoryHistogram, DatasetTotals,
    SplitKind, TailReport, Unit,
};
use hoiforge_core::vocab::CoOccurrenceTable;
use hoiforge_core::ObjectId;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::{self, ImageGroundTruth, ImagePredictions};
use crate::log::{replay_log, VerdictLog};
use crate::service::{router, ReviewService};

pub const DATA_ROOT_ENV: &str = "HOIFORGE_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(name = "hoiforge", version, about = "Synthetic HOI dataset toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compose generation prompts from a balanced plan.
    Prompts(PromptsArgs),
    /// Filter detector output and associate persons with objects.
    Label(LabelArgs),
    /// Category histogram, totals and long-tail report.
    Stats(StatsArgs),
    /// Build a zero-shot seen/unseen split.
    Split(SplitArgs),
    /// Clamped cosine between paired image and text embeddings.
    Clipscore(ClipscoreArgs),
    /// Bipartite matching and set loss for per-image predictions.
    Match(MatchArgs),
    /// HOI detection mAP.
    Eval(EvalArgs),
    /// Serve a review batch over HTTP.
    Serve(ServeArgs),
    /// Write the verified subset from a verdict log.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Images,
    Instances,
}

impl From<UnitArg> for Unit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Images => Unit::Images,
            UnitArg::Instances => Unit::Instances,
        }
    }
}

#[derive(Debug, Args)]
pub struct PromptsArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub attrs: PathBuf,
    #[arg(long)]
    pub cooc: PathBuf,
    /// Current per-category counts; all zero when omitted.
    #[arg(long)]
    pub hist: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub plan_target: u64,
    #[arg(long, default_value_t = hoiforge_core::prompt::DEFAULT_RETENTION_RATE)]
    pub retention: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum triplets per prompt.
    #[arg(long, default_value_t = hoiforge_core::prompt::DEFAULT_MAX_TRIPLETS)]
    pub max_triplets: usize,
    #[arg(long, default_value_t = hoiforge_core::prompt::DEFAULT_NEGATIVE_COUNT)]
    pub negatives: usize,
    /// JSON object mapping generator knob names to candidate values.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Sidecar written next to the prompt file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptsMeta {
    pub seed: u64,
    pub target_min: u64,
    pub triplet_cap: usize,
    pub negative_count: usize,
    pub rng: String,
    pub prompts: usize,
    pub plan: GenerationPlan,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = hoiforge_core::autolabel::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = hoiforge_core::autolabel::DEFAULT_PERSON_CLASS.0)]
    pub person_class: u32,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Labeled manifest to histogram.
    #[arg(long, required_unless_present = "hist", conflicts_with = "hist")]
    pub manifest: Option<PathBuf>,
    /// Histogram files to merge instead of reading a manifest.
    #[arg(long, num_args = 1..)]
    pub hist: Vec<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, value_enum, default_value_t = UnitArg::Images)]
    pub unit: UnitArg,
    #[arg(long, default_value_t = 50)]
    pub tail_threshold: u64,
    /// Also write the bare histogram here.
    #[arg(long)]
    pub hist_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub totals: Option<DatasetTotals>,
    pub histogram: CategoryHistogram,
    pub tail: TailReport,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, value_parser = parse_split_kind)]
    pub kind: SplitKind,
    /// Unseen count; defaults to 120 (rf-uc, nf-uc), 12 (uo) or 20 (uv).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub hist: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_split_kind(s: &str) -> Result<SplitKind, String> {
    s.parse().map_err(|e: hoiforge_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct ClipscoreArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub texts: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipscoreEntry {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipscoreReport {
    pub w: f64,
    pub pairs: usize,
    pub mean: Option<f64>,
    pub scores: Vec<ClipscoreEntry>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// lambda_b,lambda_g,lambda_c_o,lambda_c_i
    #[arg(long, default_value = "2.5,1,1,1", value_parser = parse_weights)]
    pub weights: CostWeights,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_weights(s: &str) -> Result<CostWeights, String> {
    s.parse().map_err(|e: hoiforge_core::Error| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMatch {
    pub image_id: String,
    #[serde(flatten)]
    pub report: MatchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchFileReport {
    pub weights: CostWeights,
    pub total_loss: f64,
    pub images: Vec<ImageMatch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Default,
    Known,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON-lines predictions.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth manifest (JSON-lines).
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Default)]
    pub mode: ModeArg,
    /// Object class -> image ids, required with `--mode known`.
    #[arg(long)]
    pub known_index: Option<PathBuf>,
    #[arg(long, default_value_t = hoiforge_core::eval::DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    /// Training histogram used to derive the rare set.
    #[arg(long)]
    pub rare_hist: Option<PathBuf>,
    #[arg(long, default_value_t = hoiforge_core::eval::DEFAULT_RARE_THRESHOLD)]
    pub rare_threshold: u64,
    /// Unit the rare histogram must be counted in.
    #[arg(long, value_enum, default_value_t = UnitArg::Instances)]
    pub rare_unit: UnitArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Image root; HOIFORGE_DATA_ROOT takes precedence when set.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = hoiforge_core::review::DEFAULT_FRACTION)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Verdict log; resumed when it exists.
    #[arg(long, default_value = "verdicts.jsonl")]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prompts(a) => run_prompts(&a),
        Command::Label(a) => run_label(&a).map(|_| ()),
        Command::Stats(a) => run_stats(&a).map(|_| ()),
        Command::Split(a) => run_split(&a),
        Command::Clipscore(a) => run_clipscore(&a).map(|_| ()),
        Command::Match(a) => run_match(&a).map(|_| ()),
        Command::Eval(a) => run_eval(&a),
        Command::Serve(a) => run_serve(a),
        Command::Export(a) => run_export(&a).map(|_| ()),
    }
}

/// Writes pretty JSON to `out`, or to stdout when absent.
fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, value)?,
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run_prompts(a: &PromptsArgs) -> Result<()> {
    let vocab = io::load_vocabulary(&a.vocab)?;
    let attrs = io::load_attributes(&a.attrs)?;
    let table: CoOccurrenceTable = io::load_cooccurrence(&a.cooc, &vocab)?;
    let hist = match &a.hist {
        Some(p) => io::load_histogram(p)?,
        None => CategoryHistogram::zeros(Unit::Images, vocab.len()),
    };
    hist.check_len(&vocab)?;
    let model_config_space: BTreeMap<String, Vec<String>> = match &a.model_config {
        Some(p) => io::read_json(p)?,
        None => BTreeMap::new(),
    };
    ensure!(a.max_triplets >= 1, "--max-triplets must be at least 1");
    let options = PromptOptions { negative_count: a.negatives, max_triplets: a.max_triplets, model_config_space };
    let plan = build_generation_plan(&hist, a.plan_target, a.retention)?;
    let prompts = expand_plan(&plan, &vocab, &attrs, &table, &options, a.seed)?;
    io::write_jsonl(&a.out, &prompts)?;
    let meta = PromptsMeta {
        seed: a.seed,
        target_min: a.plan_target,
        triplet_cap: a.max_triplets,
        negative_count: a.negatives,
        rng: "ChaCha8 (rand_chacha, seed_from_u64)".into(),
        prompts: prompts.len(),
        plan,
    };
    io::write_json(&sidecar(&a.out, ".meta.json"), &meta)?;
    tracing::info!(prompts = prompts.len(), out = %a.out.display(), "prompts written");
    Ok(())
}

/// Labels images in parallel; output keeps manifest order.
pub fn label_parallel(
    images: Vec<AnnotatedImage>,
    vocab: &hoiforge_core::vocab::TripletVocabulary,
    cfg: &LabelConfig,
) -> Result<(Vec<AnnotatedImage>, LabelSummary)> {
    ensure!((0.0..=1.0).contains(&cfg.threshold), "threshold {} outside [0, 1]", cfg.threshold);
    let labeled: Vec<(AnnotatedImage, LabelOutcome)> = images
        .into_par_iter()
        .map(|mut img| {
            let outcome = label_image(&mut img, vocab, cfg).with_context(|| format!("image {}", img.image_id))?;
            Ok((img, outcome))
        })
        .collect::<Result<_>>()?;
    let mut summary = LabelSummary::new(vocab.len(), cfg.threshold);
    let mut out = Vec::with_capacity(labeled.len());
    for (img, outcome) in labeled {
        summary.record(&img, &outcome);
        out.push(img);
    }
    Ok((out, summary))
}

pub fn run_label(a: &LabelArgs) -> Result<LabelSummary> {
    let vocab = io::load_vocabulary(&a.vocab)?;
    let images = io::load_manifest(&a.manifest)?;
    let cfg = LabelConfig { threshold: a.threshold, person_class: ObjectId(a.person_class) };
    let (labeled, summary) = label_parallel(images, &vocab, &cfg)?;
    io::write_jsonl(&a.out, &labeled)?;
    emit(a.summary.as_deref(), &summary)?;
    tracing::info!(total = summary.total, kept = summary.kept, flagged = summary.flagged, "labeling done");
    Ok(summary)
}

pub fn run_stats(a: &StatsArgs) -> Result<StatsReport> {
    let vocab = io::load_vocabulary(&a.vocab)?;
    let (totals, hist) = match &a.manifest {
        Some(p) => {
            let images = io::load_valid_manifest(p, &vocab)?;
            (Some(dataset_totals(&images)), histogram(&images, a.unit.into(), vocab.len())?)
        }
        None => {
            let mut merged = CategoryHistogram::zeros(a.unit.into(), vocab.len());
            for p in &a.hist {
                let h = io::load_histogram(p)?;
                merged = merge(&merged, &h).with_context(|| format!("merging {}", p.display()))?;
            }
            (None, merged)
        }
    };
    hist.check_len(&vocab)?;
    if let Some(p) = &a.hist_out {
        io::write_json(p, &hist)?;
    }
    let report = StatsReport { totals, tail: tail_report(&hist, a.tail_threshold), histogram: hist };
    emit(a.out.as_deref(), &report)?;
    Ok(report)
}

pub fn run_split(a: &SplitArgs) -> Result<()> {
    let vocab = io::load_vocabulary(&a.vocab)?;
    let hist = io::load_histogram(&a.hist)?;
    let n = a.n.unwrap_or_else(|| a.kind.default_unseen());
    let split = make_zero_shot_split(&hist, &vocab, a.kind, n, a.seed)?;
    emit(a.out.as_deref(), &split)
}

pub fn run_clipscore(a: &ClipscoreArgs) -> Result<ClipscoreReport> {
    let images = io::load_embeddings(&a.images)?;
    let texts: BTreeMap<String, Vec<f64>> = io::load_embeddings(&a.texts)?.into_iter().map(|r| (r.id, r.values)).collect();
    let mut seen = BTreeSet::new();
    let mut scores = Vec::with_capacity(images.len());
    for r in &images {
        ensure!(seen.insert(r.id.as_str()), "duplicate image embedding id {}", r.id);
        let Some(t) = texts.get(&r.id) else { bail!("no text embedding for id {}", r.id) };
        let score = clip_score(&r.values, t, a.w).with_context(|| format!("id {}", r.id))?;
        scores.push(ClipscoreEntry { id: r.id.clone(), score });
    }
    let mean = (!scores.is_empty()).then(|| scores.iter().map(|s| s.score).sum::<f64>() / scores.len() as f64);
    let report = ClipscoreReport { w: a.w, pairs: scores.len(), mean, scores };
    emit(a.out.as_deref(), &report)?;
    Ok(report)
}

pub fn run_match(a: &MatchArgs) -> Result<MatchFileReport> {
    let preds: Vec<ImagePredictions> = io::load_one_or_many(&a.pred)?;
    let gts: Vec<ImageGroundTruth> = io::load_one_or_many(&a.gt)?;
    ensure!(preds.len() == gts.len(), "{} prediction sets but {} ground-truth sets", preds.len(), gts.len());
    let mut images = Vec::with_capacity(preds.len());
    for (p, g) in preds.iter().zip(&gts) {
        ensure!(
            p.image_id.is_empty() || g.image_id.is_empty() || p.image_id == g.image_id,
            "prediction image {} paired with ground truth image {}",
            p.image_id,
            g.image_id
        );
        let report = match_and_score(&p.set, &g.set, &a.weights).with_context(|| format!("image {:?}", p.image_id))?;
        let image_id = if p.image_id.is_empty() { g.image_id.clone() } else { p.image_id.clone() };
        images.push(ImageMatch { image_id, report });
    }
    let total_loss = images.iter().map(|m| m.report.loss.total).sum();
    let report = MatchFileReport { weights: a.weights, total_loss, images };
    emit(a.report.as_deref(), &report)?;
    Ok(report)
}

pub fn run_eval(a: &EvalArgs) -> Result<()> {
    let vocab = io::load_vocabulary(&a.vocab)?;
    let preds = io::load_eval_predictions(&a.pred)?;
    let manifest = io::load_valid_manifest(&a.gt, &vocab)?;
    let gts = ground_truth_from_manifest(&manifest);
    let rare_set = match &a.rare_hist {
        Some(p) => {
            let hist = io::load_histogram(p)?;
            hist.check_len(&vocab)?;
            rare_set_with_unit(&hist, a.rare_unit.into(), a.rare_threshold)?
        }
        None => {
            tracing::warn!("no --rare-hist given; every category counts as non-rare");
            BTreeSet::new()
        }
    };
    let mode = match a.mode {
        ModeArg::Default => EvalMode::Default,
        ModeArg::Known => EvalMode::KnownObject,
    };
    let known_object_index = a.known_index.as_deref().map(io::load_known_object_index).transpose()?;
    let settings = EvalSettings { iou_threshold: a.iou, mode, rare_set, known_object_index };
    let report = map_report(&preds, &gts, &vocab, &settings)?;
    emit(a.out.as_deref(), &report)
}

/// `HOIFORGE_DATA_ROOT` wins over `--data`.
pub fn resolve_data_root(arg: Option<&Path>, env: Option<std::ffi::OsString>) -> Result<PathBuf> {
    match (env.filter(|v| !v.is_empty()), arg) {
        (Some(v), _) => Ok(PathBuf::from(v)),
        (None, Some(p)) => Ok(p.to_path_buf()),
        (None, None) => bail!("no image root: pass --data or set {DATA_ROOT_ENV}"),
    }
}

/// Opens (or resumes) the log for `a` and builds the service.
pub fn build_service(a: &ServeArgs, data_root: PathBuf) -> Result<ReviewService> {
    let (log, state) = VerdictLog::open_or_create(&a.log, || {
        let manifest = io::load_manifest(&a.manifest)?;
        Ok(sample_batch(&manifest, a.fraction, a.seed)?)
    })?;
    let batch = state.batch();
    if batch.seed != a.seed || batch.fraction != a.fraction {
        tracing::warn!(
            log_seed = batch.seed,
            log_fraction = batch.fraction,
            "resuming {} with its recorded batch; --seed/--fraction ignored",
            a.log.display()
        );
    }
    tracing::info!(items = batch.items.len(), population = batch.population, verdicts = state.applied(), "review batch ready");
    Ok(ReviewService::new(log, state, data_root))
}

pub fn run_serve(a: ServeArgs) -> Result<()> {
    let data_root = resolve_data_root(a.data.as_deref(), std::env::var_os(DATA_ROOT_ENV))?;
    let service = Arc::new(build_service(&a, data_root)?);
    let addr = SocketAddr::new(a.host, a.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, "review service listening");
        axum::serve(listener, router(service))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

pub fn run_export(a: &ExportArgs) -> Result<ExportHeader> {
    let state = replay_log(&a.log)?;
    let export = export_verified(&state);
    io::write_jsonl(&a.out, &export.records)?;
    io::write_json(&sidecar(&a.out, ".header.json"), &export.header)?;
    tracing::info!(images = export.header.exported_images, annotations = export.header.exported_annotations, "export written");
    Ok(export.header)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn env_overrides_data_flag() {
        let arg = Path::new("/from/flag");
        assert_eq!(resolve_data_root(Some(arg), Some("/from/env".into())).unwrap(), PathBuf::from("/from/env"));
        assert_eq!(resolve_data_root(Some(arg), None).unwrap(), PathBuf::from("/from/flag"));
        assert_eq!(resolve_data_root(Some(arg), Some("".into())).unwrap(), PathBuf::from("/from/flag"));
        assert!(resolve_data_root(None, None).is_err());
    }

    #[test]
    fn weights_and_kinds_parse() {
        let cli = Cli::try_parse_from(["hoiforge", "match", "--pred", "p", "--gt", "g", "--weights", "1,2,3,4"]).unwrap();
        match cli.command {
            Command::Match(m) => assert_eq!(m.weights.as_array(), [1.0, 2.0, 3.0, 4.0]),
            c => panic!("{c:?}"),
        }
        assert!(Cli::try_parse_from(["hoiforge", "split", "--kind", "xx", "--hist", "h", "--vocab", "v"]).is_err());
        assert!(Cli::try_parse_from(["hoiforge", "match", "--pred", "p", "--gt", "g", "--weights", "1,2"]).is_err());
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar(Path::new("out/sub.jsonl"), ".header.json"), PathBuf::from("out/sub.jsonl.header.json"));
    }
}
