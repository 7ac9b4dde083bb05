//! `mrhvid` command-line front-end.
//!
//! Every numeric setting can come from a flag, from a JSON `--config` file or
//! from the built-in default, in that order of precedence. Reports echo the
//! resolved settings so a run can be repeated from its output alone.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use mrhvid::clustering::{kmeans_cluster, ClusterMode, DEFAULT_MAX_ITER};
use mrhvid::dictionary::{train_dictionary, TrainConfig, VisualDictionary};
use mrhvid::evaluation::{
    full_mask, mer, plan_faces, run_experiment, run_experiment_from_images, training_features,
    video_seed, ExperimentOutput, Pipeline, ProtocolConfig, SelectionSides, SignatureBank,
    TrialSet, DEFAULT_COHORTS,
};
use mrhvid::features::RegionLayout;
use mrhvid::ingest::{load_manifest, load_signatures, save_signatures, DatasetManifest};
use mrhvid::selection::{select, SelectionMethod, SelectionSpec};
use mrhvid::signature::MrhSignature;
use mrhvid::synth::{generate_dataset, JitterMode, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "mrhvid", version, about = "Video face verification with multi-region histograms")]
struct Cli {
    /// JSON file of default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with images and a manifest.
    Synth(SynthArgs),
    /// Train a visual dictionary from the faces of train-role videos.
    TrainDict(TrainArgs),
    /// Compute per-face signatures, one file per video.
    Extract(ExtractArgs),
    /// Report which faces a selection rule picks from each video.
    Select(SelectArgs),
    /// Cluster signature files into centroids.
    Cluster(ClusterArgs),
    /// Score every probe video against every enrolled person.
    Match(MatchArgs),
    /// Run the full protocol and report error rates and costs.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: SynthOpts,
}

#[derive(Debug, Default, Args, Serialize)]
struct SynthOpts {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    persons: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    videos_per_person: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    enroll_videos: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    frames_per_video: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train_persons: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_sigma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    crop_jitter: Option<f64>,
    /// uniform or bimodal
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    jitter_mode: Option<JitterMode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    intensity_jitter: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    distinctiveness: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Dictionary file to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Debug, Default, Args, Serialize)]
struct TrainOpts {
    /// Gaussian components (default 64).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dict_components: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// EM iteration cap (default 100).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    em_max_iter: Option<usize>,
    /// Faces used from each train video (default all).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train_frames: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainSettings {
    dict_components: usize,
    seed: u64,
    em_max_iter: usize,
    train_frames: Option<usize>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    dict: PathBuf,
    /// Directory receiving `<person>/<video>.mrh`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    opts: SelectOpts,
}

#[derive(Debug, Default, Args, Serialize)]
struct SelectOpts {
    /// sequential, random or confidence
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    select_method: Option<SelectionMethod>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    select_m: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectSettings {
    select_method: SelectionMethod,
    select_m: Option<usize>,
    seed: u64,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Signature files, one per video.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Centroid signature file to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: ClusterOpts,
}

#[derive(Debug, Default, Args, Serialize)]
struct ClusterOpts {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cluster_k: Option<usize>,
    /// single (per video) or multiple (all inputs together)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cluster_mode: Option<ClusterMode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterSettings {
    cluster_k: usize,
    cluster_mode: ClusterMode,
    max_iter: usize,
}

/// Where per-face signatures come from.
#[derive(Debug, Args)]
struct Sources {
    #[arg(long)]
    manifest: PathBuf,
    /// Dictionary used to extract signatures from the images.
    #[arg(long, required_unless_present = "signatures")]
    dict: Option<PathBuf>,
    /// Directory written by `extract`, used instead of the images.
    #[arg(long)]
    signatures: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize)]
struct PipelineOpts {
    /// sequential, random or confidence
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    select_method: Option<SelectionMethod>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    select_m: Option<usize>,
    /// both, probe or gallery
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    select_sides: Option<SelectionSides>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cluster_k: Option<usize>,
    /// single or multiple
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cluster_mode: Option<ClusterMode>,
    /// Also cluster probe videos instead of averaging them.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    cluster_probe: Option<bool>,
    /// One average signature per probe video and per gallery (the default).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    all_faces_average: Option<bool>,
    /// Match every probe face against every gallery face.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    per_face: Option<bool>,
    /// Cohort signatures for distance normalisation (default 32).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cohorts: Option<usize>,
    /// k-means iteration cap (default 20).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    enroll_videos_per_person: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    probes_per_person: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PipelineSettings {
    select_method: Option<SelectionMethod>,
    select_m: Option<usize>,
    select_sides: SelectionSides,
    seed: u64,
    cluster_k: Option<usize>,
    cluster_mode: ClusterMode,
    cluster_probe: bool,
    all_faces_average: bool,
    per_face: bool,
    cohorts: usize,
    max_iter: usize,
    enroll_videos_per_person: Option<usize>,
    probes_per_person: Option<usize>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            select_method: None,
            select_m: None,
            select_sides: SelectionSides::Both,
            seed: 0,
            cluster_k: None,
            cluster_mode: ClusterMode::Multiple,
            cluster_probe: false,
            all_faces_average: false,
            per_face: false,
            cohorts: DEFAULT_COHORTS,
            max_iter: DEFAULT_MAX_ITER,
            enroll_videos_per_person: None,
            probes_per_person: None,
        }
    }
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[command(flatten)]
    sources: Sources,
    #[command(flatten)]
    opts: PipelineOpts,
    /// Output file (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, required_unless_present = "scores")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long)]
    signatures: Option<PathBuf>,
    /// Score CSV written by `match`; skips matching.
    #[arg(long, conflicts_with_all = ["manifest", "dict", "signatures"])]
    scores: Option<PathBuf>,
    #[command(flatten)]
    opts: PipelineOpts,
    #[arg(long)]
    out: Option<PathBuf>,
    /// json: full report; csv: threshold,far,frr curve.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl From<mrhvid::Error> for CliError {
    fn from(e: mrhvid::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn read_config(path: Option<&Path>) -> CliResult<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = fs::read_to_string(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(data_err(format!("{}: config must be a JSON object", path.display()))),
        Err(e) => Err(data_err(format!("{}: {e}", path.display()))),
    }
}

/// Defaults, overridden by matching config-file keys, overridden by flags.
fn layered<T: Serialize + DeserializeOwned>(
    defaults: T,
    file: &Map<String, Value>,
    flags: &impl Serialize,
) -> CliResult<T> {
    let Value::Object(mut merged) = serde_json::to_value(defaults).map_err(data_err)? else {
        unreachable!("settings serialise to objects")
    };
    for (k, v) in file {
        if let Some(slot) = merged.get_mut(k) {
            *slot = v.clone();
        }
    }
    if let Value::Object(flags) = serde_json::to_value(flags).map_err(data_err)? {
        merged.extend(flags);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| data_err(format!("config: {e}")))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| data_err(format!("{}: {e}", path.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(data_err),
    }
}

fn emit_json(out: Option<&Path>, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(data_err)?;
    text.push('\n');
    emit(out, &text)
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run_synth(args: SynthArgs, file: &Map<String, Value>) -> CliResult<()> {
    let spec: SynthSpec = layered(SynthSpec::default(), file, &args.opts)?;
    let out = generate_dataset(&spec, &args.out)?;
    let frames: usize = out.manifest.persons.iter().flat_map(|p| &p.videos).map(|v| v.frames.len()).sum();
    emit_json(
        None,
        &json!({
            "command": "synth",
            "config": spec,
            "manifest": args.out.join("manifest.json"),
            "persons": out.manifest.persons.len(),
            "frames": frames,
        }),
    )
}

fn run_train(args: TrainArgs, file: &Map<String, Value>) -> CliResult<()> {
    let defaults = TrainConfig::default();
    let settings: TrainSettings = layered(
        TrainSettings {
            dict_components: defaults.components,
            seed: defaults.seed,
            em_max_iter: defaults.max_iter,
            train_frames: None,
        },
        file,
        &args.opts,
    )?;
    let manifest = load_manifest(&args.manifest)?;
    let features = training_features(
        &manifest,
        &manifest_dir(&args.manifest),
        &RegionLayout::default(),
        settings.train_frames,
    )?;
    let config = TrainConfig {
        components: settings.dict_components,
        seed: settings.seed,
        max_iter: settings.em_max_iter,
        ..defaults
    };
    let (dict, trace) = train_dictionary(&features, &config)?;
    dict.save(&args.out)?;
    emit_json(
        None,
        &json!({
            "command": "train-dict",
            "config": settings,
            "features": features.len(),
            "trace": trace,
        }),
    )
}

fn run_extract(args: ExtractArgs) -> CliResult<()> {
    let manifest = load_manifest(&args.manifest)?;
    let dict = VisualDictionary::load(&args.dict)?;
    let bank = SignatureBank::extract(
        &manifest,
        &manifest_dir(&args.manifest),
        &dict,
        &RegionLayout::default(),
        &full_mask(&manifest),
    )?;
    bank.save_dir(&manifest, &args.out)?;
    emit_json(
        None,
        &json!({
            "command": "extract",
            "components": dict.components(),
            "signatures": bank.extracted(),
            "out": args.out,
        }),
    )
}

fn run_select(args: SelectArgs, file: &Map<String, Value>) -> CliResult<()> {
    let settings: SelectSettings = layered(
        SelectSettings {
            select_method: SelectionMethod::Sequential,
            select_m: None,
            seed: 0,
        },
        file,
        &args.opts,
    )?;
    let m = settings
        .select_m
        .ok_or_else(|| CliError::Usage("select needs --select-m".into()))?;
    let spec = SelectionSpec::new(settings.select_method, m, settings.seed)?;
    let manifest = load_manifest(&args.manifest)?;
    let mut videos = Vec::new();
    for person in &manifest.persons {
        for video in &person.videos {
            let per_video = SelectionSpec {
                seed: video_seed(spec.seed, &person.person_id, &video.video_id),
                ..spec
            };
            let s = select(video, &per_video)?;
            let frames: Vec<u64> = s.records(video).iter().map(|r| r.frame).collect();
            videos.push(json!({
                "person_id": person.person_id,
                "video_id": video.video_id,
                "indices": s.indices,
                "frames": frames,
                "truncated": s.truncated,
            }));
        }
    }
    emit_json(
        None,
        &json!({
            "command": "select",
            "config": settings,
            "selections": videos,
        }),
    )
}

fn run_cluster(args: ClusterArgs, file: &Map<String, Value>) -> CliResult<()> {
    let settings: ClusterSettings = layered(
        ClusterSettings {
            cluster_k: 1,
            cluster_mode: ClusterMode::Multiple,
            max_iter: DEFAULT_MAX_ITER,
        },
        file,
        &args.opts,
    )?;
    let videos = args
        .inputs
        .iter()
        .map(load_signatures)
        .collect::<Result<Vec<_>, _>>()?;
    let groups: Vec<Vec<MrhSignature>> = match settings.cluster_mode {
        ClusterMode::Single => videos,
        ClusterMode::Multiple => vec![videos.into_iter().flatten().collect()],
    };
    let mut centroids = Vec::new();
    let mut models = Vec::new();
    for group in &groups {
        let model = kmeans_cluster(group, settings.cluster_k, settings.max_iter)?;
        centroids.extend(model.centroids.iter().cloned());
        models.push(model.sidecar());
    }
    save_signatures(&args.out, &centroids)?;
    emit_json(
        None,
        &json!({
            "command": "cluster",
            "config": settings,
            "inputs": args.inputs,
            "centroids": centroids.len(),
            "models": models,
        }),
    )
}

fn pipeline_config(settings: &PipelineSettings) -> CliResult<ProtocolConfig> {
    let selecting = settings.select_method.is_some() || settings.select_m.is_some();
    let chosen = [
        selecting,
        settings.cluster_k.is_some(),
        settings.all_faces_average,
        settings.per_face,
    ];
    if chosen.iter().filter(|&&c| c).count() > 1 {
        return Err(CliError::Usage(
            "choose at most one of selection, --cluster-k, --all-faces-average and --per-face".into(),
        ));
    }
    let pipeline = if selecting {
        let m = settings
            .select_m
            .ok_or_else(|| CliError::Usage("--select-method needs --select-m".into()))?;
        let method = settings.select_method.unwrap_or(SelectionMethod::Sequential);
        Pipeline::Select {
            spec: SelectionSpec::new(method, m, settings.seed)?,
            sides: settings.select_sides,
        }
    } else if let Some(k) = settings.cluster_k {
        if k == 0 {
            return Err(CliError::Usage("--cluster-k must be at least 1".into()));
        }
        Pipeline::Cluster {
            k,
            mode: settings.cluster_mode,
            cluster_probe: settings.cluster_probe,
        }
    } else if settings.per_face {
        Pipeline::PerFace
    } else {
        Pipeline::AllFacesAverage
    };
    Ok(ProtocolConfig {
        enroll_videos_per_person: settings.enroll_videos_per_person,
        probes_per_person: settings.probes_per_person,
        pipeline,
        cohort_count: settings.cohorts,
        max_iter: settings.max_iter,
    })
}

fn run_protocol(
    manifest_path: &Path,
    dict: Option<&Path>,
    signatures: Option<&Path>,
    config: &ProtocolConfig,
) -> CliResult<(DatasetManifest, ExperimentOutput)> {
    let manifest = load_manifest(manifest_path)?;
    let output = if let Some(dir) = signatures {
        let bank = SignatureBank::load_dir(&manifest, dir)?;
        run_experiment(&manifest, &bank, config)?
    } else {
        let dict_path = dict.ok_or_else(|| CliError::Usage("need --dict or --signatures".into()))?;
        let dict = VisualDictionary::load(dict_path)?;
        // fail on protocol problems before any image is read
        plan_faces(&manifest, config)?;
        run_experiment_from_images(&manifest, &manifest_dir(manifest_path), &dict, config)?
    };
    Ok((manifest, output))
}

fn run_match(args: MatchArgs, file: &Map<String, Value>) -> CliResult<()> {
    let settings: PipelineSettings = layered(PipelineSettings::default(), file, &args.opts)?;
    let config = pipeline_config(&settings)?;
    let (_, output) = run_protocol(
        &args.sources.manifest,
        args.sources.dict.as_deref(),
        args.sources.signatures.as_deref(),
        &config,
    )?;
    match args.format {
        Format::Csv => {
            let mut buf = Vec::new();
            output.trials.write_csv(&mut buf)?;
            emit(args.out.as_deref(), &String::from_utf8(buf).map_err(data_err)?)
        }
        Format::Json => emit_json(
            args.out.as_deref(),
            &json!({
                "command": "match",
                "config": settings,
                "protocol": config,
                "scores": output.trials.scores,
            }),
        ),
    }
}

fn curve_csv(report: &mrhvid::evaluation::ErrorReport) -> String {
    let mut text = String::from("threshold,far,frr\n");
    for ((t, far), (_, frr)) in report.far_curve.iter().zip(&report.frr_curve) {
        text.push_str(&format!("{t},{far},{frr}\n"));
    }
    text
}

fn run_evaluate(args: EvaluateArgs, file: &Map<String, Value>) -> CliResult<()> {
    if let Some(path) = &args.scores {
        let f = fs::File::open(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        let trials = TrialSet::read_csv(io::BufReader::new(f))?;
        let report = mer(&trials)?;
        return match args.format {
            Format::Csv => emit(args.out.as_deref(), &curve_csv(&report)),
            Format::Json => emit_json(
                args.out.as_deref(),
                &json!({ "command": "evaluate", "scores": path, "report": report }),
            ),
        };
    }
    let settings: PipelineSettings = layered(PipelineSettings::default(), file, &args.opts)?;
    let config = pipeline_config(&settings)?;
    let manifest = args.manifest.as_deref().expect("clap requires --manifest without --scores");
    if args.dict.is_none() && args.signatures.is_none() {
        return Err(CliError::Usage("evaluate needs --dict or --signatures".into()));
    }
    let (_, output) = run_protocol(manifest, args.dict.as_deref(), args.signatures.as_deref(), &config)?;
    match args.format {
        Format::Csv => emit(args.out.as_deref(), &curve_csv(&output.report.errors)),
        Format::Json => emit_json(
            args.out.as_deref(),
            &json!({ "command": "evaluate", "config": settings, "report": output.report }),
        ),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(data_err)?;
    }
    let file = read_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => run_synth(a, &file),
        Command::TrainDict(a) => run_train(a, &file),
        Command::Extract(a) => run_extract(a),
        Command::Select(a) => run_select(a, &file),
        Command::Cluster(a) => run_cluster(a, &file),
        Command::Match(a) => run_match(a, &file),
        Command::Evaluate(a) => run_evaluate(a, &file),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `mrhvid --help` for usage");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            log::error!("{msg}");
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
