use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;

use sre_core::backend::{
    default_effective_prior, fit_backend, fit_calibration, fit_fusion, fuse, BackendConfig, BackendError, BackendModel,
    Scoring,
};
use sre_core::det::{bootstrap_ci, det_points, eer, BootstrapConfig, CostMetric, DetError, Resampling};
use sre_core::metrics::{default_points, equalization_weights, evaluate, MetricError, OperatingPoint, PartitionSchema};
use sre_core::synthgen::{self, SynthConfig, SynthError};
use sre_core::trial_data::{
    load_embeddings, load_enrollment, parse_key, parse_scores, scan_scores, validate_scan, validate_submission,
    write_embeddings, write_enrollment, write_key, write_scores, DataError, ScoreSet, Track, TrialKey, Verdict,
};
use sre_core::visual::{score_visual_trials, VisualConfig, VisualError};

use crate::manifest::RunManifest;
use crate::{
    BackendCommand, BootstrapArgs, CalibrateArgs, Cli, Command, FitArgs, FuseArgs, GlobalOpts, MetricArg, PairArgs,
    ResamplingArg, SchemaArg, ScoringArg, SynthArgs, TrackArg, VisualCommand, VisualScoreArgs,
};

/// Failure carrying its exit code: 1 for evaluation-level problems, 2 for
/// unreadable or invalid input.
#[derive(Debug)]
pub enum Failure {
    Evaluation(anyhow::Error),
    Input(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Evaluation(_) => 1,
            Failure::Input(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Evaluation(e) | Failure::Input(e) => e,
        }
    }
}

type Outcome = Result<u8, Failure>;

fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        input(e)
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::InvalidOperatingPoint(_) | MetricError::NoOperatingPoints => input(e),
            _ => Failure::Evaluation(e.into()),
        }
    }
}

impl From<DetError> for Failure {
    fn from(e: DetError) -> Self {
        match e {
            DetError::Metric(m) => m.into(),
            DetError::InvalidBootstrap(_) | DetError::InvalidContour(_) => input(e),
            _ => Failure::Evaluation(e.into()),
        }
    }
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Data(d) => d.into(),
            BackendError::Model(_)
            | BackendError::DimensionMismatch { .. }
            | BackendError::MissingEmbedding(_)
            | BackendError::MissingEnrollment(_)
            | BackendError::MissingLabels
            | BackendError::CoverageMismatch
            | BackendError::Precondition(_) => input(e),
            _ => Failure::Evaluation(e.into()),
        }
    }
}

impl From<VisualError> for Failure {
    fn from(e: VisualError) -> Self {
        match e {
            VisualError::Data(d) => d.into(),
            VisualError::Empty | VisualError::TooManyClusters { .. } => Failure::Evaluation(e.into()),
            _ => input(e),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Data(d) => d.into(),
            SynthError::Config(_) => input(e),
            _ => Failure::Evaluation(e.into()),
        }
    }
}

/// Collects result files under the output directory and records them in
/// the manifest.
struct Run<'a> {
    dir: &'a Path,
    manifest: RunManifest,
}

impl<'a> Run<'a> {
    fn new(global: &'a GlobalOpts, command: &str, args: &impl Serialize) -> Result<Self, Failure> {
        fs::create_dir_all(&global.out_dir)
            .with_context(|| format!("cannot create {}", global.out_dir.display()))
            .map_err(Failure::Input)?;
        let mut manifest = RunManifest::new(command);
        manifest.config(&serde_json::json!({ "global": global, "args": args }));
        if let Some(seed) = global.seed {
            manifest.seed("seed", seed);
        }
        Ok(Run {
            dir: &global.out_dir,
            manifest,
        })
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<(), Failure> {
        self.manifest.input(role, path).map_err(Failure::Input)
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::Input)?;
        self.manifest.outputs.push(name.to_string());
        Ok(path)
    }

    fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<PathBuf, Failure> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(input)?;
        self.write(name, buf)
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf, Failure> {
        let text = serde_json::to_string_pretty(value).map_err(input)? + "\n";
        self.write(name, text)
    }

    fn finish(self) -> Result<(), Failure> {
        self.manifest.write(self.dir).map_err(Failure::Input)?;
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Validate(a) => validate(g, a),
        Command::Score(a) => score(g, a),
        Command::Det(a) => det(g, a),
        Command::Bootstrap(a) => bootstrap(g, a),
        Command::Backend(BackendCommand::Fit(a)) => backend_fit(g, a),
        Command::Backend(BackendCommand::Score(a)) => backend_score(g, a),
        Command::Backend(BackendCommand::Calibrate(a)) => calibrate(g, a),
        Command::Backend(BackendCommand::Fuse(a)) => fusion(g, a),
        Command::Visual(VisualCommand::Score(a)) => visual_score(g, a),
        Command::Synth(a) => synth(g, a),
    }
}

fn points(global: &GlobalOpts) -> Result<Vec<OperatingPoint>, Failure> {
    if global.points.is_empty() {
        return Ok(default_points());
    }
    global
        .points
        .iter()
        .map(|s| OperatingPoint::parse(s).map_err(Failure::from))
        .collect()
}

fn schema(global: &GlobalOpts, key: &TrialKey) -> PartitionSchema {
    let track = match global.schema {
        SchemaArg::Auto => key.track(),
        SchemaArg::Audio => Track::Audio,
        SchemaArg::AudioVisual => Track::AudioVisual,
        SchemaArg::Visual => Track::Visual,
    };
    let schema = PartitionSchema::for_track(track);
    if global.include_3seg {
        schema.with_three_segment_trials()
    } else {
        schema
    }
}

fn require_seed(global: &GlobalOpts, command: &str) -> Result<u64, Failure> {
    global
        .seed
        .ok_or_else(|| input(anyhow!("{command} is stochastic: --seed is required")))
}

fn load_pair(run: &mut Run, pair: &PairArgs) -> Result<(TrialKey, ScoreSet), Failure> {
    run.input("key", &pair.key)?;
    run.input("scores", &pair.scores)?;
    let key = parse_key(&pair.key)?;
    let scores = parse_scores(&pair.scores)?;
    Ok((key, scores))
}

/// Parses both files and refuses submissions that do not cover the key
/// exactly.
fn load_validated(run: &mut Run, pair: &PairArgs) -> Result<(TrialKey, ScoreSet), Failure> {
    let (key, scores) = load_pair(run, pair)?;
    let report = validate_submission(&scores, &key);
    if report.verdict == Verdict::Reject {
        return Err(Failure::Evaluation(anyhow!(
            "submission rejected: {} missing and {} extra trials",
            report.missing_trials.count,
            report.extra_trials.count
        )));
    }
    Ok((key, scores))
}

fn validate(g: &GlobalOpts, a: &PairArgs) -> Outcome {
    let mut run = Run::new(g, "validate", a)?;
    run.input("key", &a.key)?;
    run.input("scores", &a.scores)?;
    let key = parse_key(&a.key)?;
    let file = fs::File::open(&a.scores)
        .with_context(|| format!("cannot open {}", a.scores.display()))
        .map_err(Failure::Input)?;
    let scan = scan_scores(BufReader::new(file))?;
    let report = validate_scan(&scan, &key);
    println!("{}", serde_json::to_string_pretty(&report).map_err(input)?);
    run.write_json("validation.json", &report)?;
    run.finish()?;
    Ok(match report.verdict {
        Verdict::Accept => 0,
        Verdict::Reject => 1,
    })
}

fn score(g: &GlobalOpts, a: &PairArgs) -> Outcome {
    let mut run = Run::new(g, "score", a)?;
    let (key, scores) = load_validated(&mut run, a)?;
    let report = evaluate(&scores, &key, &schema(g, &key), &points(g)?)?;
    run.write("cost_report.json", report.to_json() + "\n")?;
    run.write_with("cost_report.tsv", |buf| report.write_tsv(buf))?;
    run.finish()?;
    println!("actual_c_primary\t{}", report.actual_c_primary);
    println!("min_c_primary\t{}", report.min_c_primary);
    println!("cells\t{}", report.per_cell.len());
    Ok(0)
}

#[derive(Serialize)]
struct DetSummary {
    eer: f64,
    n_points: usize,
    monotone: bool,
}

fn det(g: &GlobalOpts, a: &PairArgs) -> Outcome {
    let mut run = Run::new(g, "det", a)?;
    let (key, scores) = load_validated(&mut run, a)?;
    let weights = equalization_weights(&key, &schema(g, &key))?;
    let curve = det_points(&scores, &key, &weights)?;
    let summary = DetSummary {
        eer: eer(&curve),
        n_points: curve.points.len(),
        monotone: curve.is_monotone(),
    };
    run.write_with("det.tsv", |buf| curve.write_tsv(buf))?;
    run.write_json("eer.json", &summary)?;
    run.finish()?;
    println!("eer\t{}", summary.eer);
    Ok(0)
}

fn bootstrap(g: &GlobalOpts, a: &BootstrapArgs) -> Outcome {
    let seed = require_seed(g, "bootstrap")?;
    let mut run = Run::new(g, "bootstrap", a)?;
    let (key, scores) = load_validated(&mut run, &a.pair)?;
    let schema = schema(g, &key);
    let points = points(g)?;
    let mut report = evaluate(&scores, &key, &schema, &points)?;
    let metrics: &[CostMetric] = match a.metric {
        MetricArg::Actual => &[CostMetric::Actual],
        MetricArg::Min => &[CostMetric::Min],
        MetricArg::Both => &[CostMetric::Actual, CostMetric::Min],
    };
    for &metric in metrics {
        let config = BootstrapConfig {
            metric,
            n_replicates: a.replicates,
            level: a.level,
            seed,
            resampling: match a.resampling {
                ResamplingArg::Models => Resampling::Models,
                ResamplingArg::ModelsAndSegments => Resampling::ModelsAndSegments,
            },
        };
        let ci = bootstrap_ci(&scores, &key, &schema, &points, &config)?;
        println!("{:?}\t{}\t[{}, {}]", metric, ci.point_estimate, ci.lower, ci.upper);
        report.confidence_intervals.push(ci);
    }
    run.write("bootstrap.json", report.to_json() + "\n")?;
    run.finish()?;
    Ok(0)
}

fn backend_fit(g: &GlobalOpts, a: &FitArgs) -> Outcome {
    let mut run = Run::new(g, "backend fit", a)?;
    let mut config = match &a.config {
        Some(path) => {
            run.input("config", path)?;
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(Failure::Input)?;
            serde_json::from_str::<BackendConfig>(&text)
                .with_context(|| format!("invalid backend config {}", path.display()))
                .map_err(Failure::Input)?
        }
        None => BackendConfig::default(),
    };
    if let Some(d) = a.lda_dim {
        config.lda_dim = d;
    }
    if let Some(s) = a.scoring {
        config.scoring = match s {
            ScoringArg::Plda => Scoring::Plda,
            ScoringArg::Cosine => Scoring::Cosine,
        };
    }
    if let Some(alpha) = a.map_alpha {
        config.map_alpha = alpha;
    }
    if a.snorm_top_k.is_some() {
        config.snorm_top_k = a.snorm_top_k;
    }
    run.input("train", &a.train)?;
    let train = load_embeddings(&a.train)?;
    let dev = match &a.dev {
        Some(path) => {
            run.input("dev", path)?;
            Some(load_embeddings(path)?)
        }
        None => None,
    };
    let model = fit_backend(&train, dev.as_ref(), &config)?;
    run.write(&a.output, model.to_json() + "\n")?;
    run.finish()?;
    Ok(0)
}

fn backend_score(g: &GlobalOpts, a: &crate::BackendScoreArgs) -> Outcome {
    let mut run = Run::new(g, "backend score", a)?;
    run.input("model", &a.model)?;
    run.input("key", &a.key)?;
    run.input("enrollment", &a.enrollment)?;
    run.input("embeddings", &a.embeddings)?;
    let text = fs::read_to_string(&a.model)
        .with_context(|| format!("cannot read {}", a.model.display()))
        .map_err(Failure::Input)?;
    let model = BackendModel::from_json(&text)?;
    let key = parse_key(&a.key)?;
    let enrollment = load_enrollment(&a.enrollment)?;
    let embeddings = load_embeddings(&a.embeddings)?;
    let scores = model.score_trials(&key, &enrollment, &embeddings)?;
    run.write_with(&a.output, |buf| write_scores(&scores, buf))?;
    run.finish()?;
    Ok(0)
}

fn calibrate(g: &GlobalOpts, a: &CalibrateArgs) -> Outcome {
    let mut run = Run::new(g, "backend calibrate", a)?;
    let (key, scores) = load_validated(&mut run, &a.pair)?;
    let prior = match a.prior {
        Some(p) => p,
        None => default_effective_prior(&points(g)?),
    };
    let labeled: Vec<(f64, bool)> = key
        .records()
        .iter()
        .map(|r| (scores.get(&r.id).expect("validated"), r.is_target()))
        .collect();
    let map = fit_calibration(&labeled, prior)?;
    let target = match &a.apply {
        Some(path) => {
            run.input("apply", path)?;
            parse_scores(path)?
        }
        None => scores,
    };
    run.write_json("calibration.json", &map)?;
    run.write_with(&a.output, |buf| write_scores(&map.apply_set(&target), buf))?;
    run.finish()?;
    Ok(0)
}

fn fusion(g: &GlobalOpts, a: &FuseArgs) -> Outcome {
    let mut run = Run::new(g, "backend fuse", a)?;
    let mut sets = Vec::with_capacity(a.scores.len());
    for (i, path) in a.scores.iter().enumerate() {
        run.input(&format!("scores{i}"), path)?;
        sets.push(parse_scores(path)?);
    }
    let (weights, offset) = match (&a.weights, &a.key) {
        (Some(w), _) => {
            if w.len() != sets.len() {
                return Err(input(anyhow!("{} weights given for {} score files", w.len(), sets.len())));
            }
            (w.clone(), a.offset)
        }
        (None, Some(key_path)) => {
            run.input("key", key_path)?;
            let key = parse_key(key_path)?;
            let prior = match a.prior {
                Some(p) => p,
                None => default_effective_prior(&points(g)?),
            };
            let model = fit_fusion(&sets, &key, prior)?;
            run.write_json("fusion.json", &model)?;
            (model.weights, model.offset)
        }
        (None, None) => return Err(input(anyhow!("fusion needs either --weights or --key"))),
    };
    let fused = fuse(&sets, &weights, offset)?;
    run.write_with(&a.output, |buf| write_scores(&fused, buf))?;
    run.finish()?;
    Ok(0)
}

#[derive(Serialize)]
struct VisualFlags<'a> {
    empty_videos: &'a [String],
    empty_video_score: f64,
}

fn visual_score(g: &GlobalOpts, a: &VisualScoreArgs) -> Outcome {
    let seed = require_seed(g, "visual score")?;
    let mut run = Run::new(g, "visual score", a)?;
    run.input("key", &a.key)?;
    run.input("enrollment", &a.enrollment)?;
    run.input("enroll_encodings", &a.enroll_encodings)?;
    run.input("frames", &a.frames)?;
    let key = parse_key(&a.key)?;
    let enrollment = load_enrollment(&a.enrollment)?;
    let enroll_encodings = load_embeddings(&a.enroll_encodings)?;
    let frames = load_embeddings(&a.frames)?;
    let config = VisualConfig {
        k: a.k,
        n_restarts: a.restarts,
        seed,
    };
    let result = score_visual_trials(&key, &enrollment, &enroll_encodings, &frames, &config)?;
    run.write_with(&a.output, |buf| write_scores(&result.scores, buf))?;
    run.write_json(
        "visual_flags.json",
        &VisualFlags {
            empty_videos: &result.empty_videos,
            empty_video_score: sre_core::visual::EMPTY_VIDEO_SCORE,
        },
    )?;
    run.finish()?;
    if !result.empty_videos.is_empty() {
        eprintln!("warning: {} test videos had no frames", result.empty_videos.len());
    }
    Ok(0)
}

fn synth(g: &GlobalOpts, a: &SynthArgs) -> Outcome {
    let seed = require_seed(g, "synth")?;
    let mut run = Run::new(g, "synth", a)?;
    let mut config = match &a.config {
        Some(path) => {
            run.input("config", path)?;
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(Failure::Input)?;
            SynthConfig::from_json(&text)?
        }
        None => SynthConfig::default(),
    };
    config.seed = seed;
    if let Some(t) = a.track {
        config.track = match t {
            TrackArg::Audio => Track::Audio,
            TrackArg::AudioVisual => Track::AudioVisual,
            TrackArg::Visual => Track::Visual,
        };
    }
    let corpus = synthgen::generate(&config)?;
    run.write("synth_config.json", config.to_json() + "\n")?;
    run.write_with("key.tsv", |buf| write_key(&corpus.key, buf))?;
    run.write_with("scores.tsv", |buf| write_scores(&corpus.scores, buf))?;
    run.write_with("enrollment.tsv", |buf| write_enrollment(&corpus.enrollment, buf))?;
    run.write_with("embeddings.tsv", |buf| write_embeddings(&corpus.embeddings, buf))?;
    run.write_with("train.tsv", |buf| write_embeddings(&corpus.train, buf))?;
    run.write_with("dev.tsv", |buf| write_embeddings(&corpus.dev, buf))?;
    if let Some(faces) = &corpus.faces {
        run.write_with("frames.tsv", |buf| write_embeddings(&faces.frames, buf))?;
        run.write_with("enroll_encodings.tsv", |buf| write_embeddings(&faces.images, buf))?;
    }
    run.finish()?;
    println!("trials\t{}", corpus.key.len());
    Ok(0)
}
