//! Command-line front end: `rank`, `train`, `eval`, `predict`, `synth`.
//!
//! Every run is described by a `run.conf` text (dataset digest, task,
//! learner and its parameters, selection mode, folds, seed). Its SHA-256 is
//! the config digest written next to every artifact. Worker count is not
//! part of it because it never changes results.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use drivid_core::data::{decompose_timestamp, read_csv, read_unlabeled_csv, IngestConfig};
use drivid_core::evaluation::{cross_validate, owner_experiment, CvConfig, Task};
use drivid_core::pipeline::{
    generate_model, read_bundle, train_multi_driver, write_bundle, Bundle, Learner, PipelineConfig,
};
use drivid_core::selection::{select_features, FsMode, SelectionReport};
use drivid_core::synth::Profile;
use drivid_core::{Dataset, Error, ErrorKind, Result};

#[derive(Debug, Parser)]
#[command(name = "drivid", version, about = "Driver identification from vehicle telemetry")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank features by gain ratio and report the selected subset.
    Rank(RankArgs),
    /// Train an owner or multi-driver model and write a bundle.
    Train(TrainArgs),
    /// k-fold cross-validation report.
    Eval(EvalArgs),
    /// Classify every row of a CSV with a trained bundle.
    Predict(PredictArgs),
    /// Generate a synthetic corpus from a driver profile.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskArg {
    Multi,
    Owner(String),
    OwnerAll,
}

impl FromStr for TaskArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "owner-all" => Ok(TaskArg::OwnerAll),
            _ => match s.parse::<Task>()? {
                Task::Multi => Ok(TaskArg::Multi),
                Task::Owner(id) => Ok(TaskArg::Owner(id)),
            },
        }
    }
}

impl std::fmt::Display for TaskArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskArg::Multi => f.write_str("multi"),
            TaskArg::Owner(id) => write!(f, "owner:{id}"),
            TaskArg::OwnerAll => f.write_str("owner-all"),
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub ingest_config: PathBuf,
    /// multi, owner:<id> or owner-all.
    #[arg(long, default_value = "multi")]
    pub task: TaskArg,
    /// Drivers with fewer rows are dropped before anything else.
    #[arg(long, default_value_t = 100)]
    pub min_instances: usize,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// c45 or rf.
    #[arg(long, default_value = "rf")]
    pub learner: Learner,
    /// paradigm, individual or off.
    #[arg(long, default_value = "paradigm")]
    pub fs: FsMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Forest size.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Features tried per forest node (default: floor(sqrt(n))).
    #[arg(long)]
    pub features_per_node: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// C4.5 pruning confidence.
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Disable C4.5 pruning.
    #[arg(long)]
    pub unpruned: bool,
}

impl ModelArgs {
    fn learner(&self) -> Result<Learner> {
        let mut learner = self.learner;
        match &mut learner {
            Learner::C45(p) => {
                if self.trees.is_some() || self.features_per_node.is_some() {
                    return Err(Error::Config("--trees and --features-per-node need --learner rf".into()));
                }
                if let Some(m) = self.min_leaf {
                    p.min_leaf_instances = m;
                }
                if let Some(c) = self.confidence {
                    p.confidence_factor = c;
                }
                p.pruning_enabled &= !self.unpruned;
                p.validate()?;
            }
            Learner::RandomForest(p) => {
                if self.confidence.is_some() || self.unpruned {
                    return Err(Error::Config("--confidence and --unpruned need --learner c45".into()));
                }
                if let Some(t) = self.trees {
                    p.n_trees = t;
                }
                if self.features_per_node.is_some() {
                    p.n_features_per_node = self.features_per_node;
                }
                if let Some(m) = self.min_leaf {
                    p.min_leaf_instances = m;
                }
                p.validate()?;
            }
        }
        Ok(learner)
    }

    fn pipeline(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            learner: self.learner()?,
            fs_mode: self.fs,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// paradigm, individual or off.
    #[arg(long, default_value = "paradigm")]
    pub fs: FsMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report directory; the report goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Bundle directory (one subdirectory per owner for owner-all).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Deal folds without regard to class.
    #[arg(long)]
    pub unstratified: bool,
    /// Also write per-fold, per-class metrics.
    #[arg(long)]
    pub per_fold_class: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Bundle directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Overrides the ingest config stored in the bundle.
    #[arg(long)]
    pub ingest_config: Option<PathBuf>,
    /// Prediction CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long)]
    pub rows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corpus CSV; the matching ingest config is written next to it with
    /// an `.ingest` extension.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Internal => 4,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs one command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Rank(a) => cmd_rank(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    })
}

fn say(out: &mut (dyn Write + Send), text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

struct Loaded {
    dataset: Dataset,
    ingest: IngestConfig,
    exclusions: String,
}

/// An unreadable config file is a configuration problem, not a data one.
fn config_io(e: Error) -> Error {
    match e {
        Error::Io { .. } => Error::Config(e.to_string()),
        other => other,
    }
}

fn load(args: &DataArgs) -> Result<Loaded> {
    let ingest = IngestConfig::from_file(&args.ingest_config).map_err(config_io)?;
    let raw: Dataset = read_csv(&args.dataset, &ingest)?;
    let tc = raw.time_columns();
    let full = if tc.timestamp.is_some() || tc.engine_runtime.is_some() {
        decompose_timestamp(&raw)?
    } else {
        raw
    };
    let (dataset, report) = full.exclude_sparse_drivers(args.min_instances)?;
    if let TaskArg::Owner(id) = &args.task {
        if dataset.class_index(id).is_none() {
            return Err(if full.class_index(id).is_some() {
                Error::Precondition(format!(
                    "driver `{id}` has fewer than {} rows and was excluded",
                    args.min_instances
                ))
            } else {
                Error::UnknownDriver(id.clone())
            });
        }
    }
    Ok(Loaded {
        dataset,
        ingest,
        exclusions: report.to_text(),
    })
}

/// Canonical run description; its digest identifies the configuration.
fn run_conf(command: &str, loaded: &Loaded, task: &TaskArg, fields: &[(&str, String)]) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "command = {command}");
    let _ = writeln!(s, "dataset = sha256:{}", loaded.dataset.fingerprint());
    let _ = writeln!(s, "ingest = sha256:{}", sha256_hex(loaded.ingest.to_text().as_bytes()));
    let _ = writeln!(s, "task = {task}");
    for (k, v) in fields {
        let _ = writeln!(s, "{k} = {v}");
    }
    Ok(s)
}

fn model_fields(model: &ModelArgs) -> Result<Vec<(&'static str, String)>> {
    let p = model.pipeline()?;
    Ok(vec![
        ("learner", serde_json::to_string(&p.learner)?),
        ("fs", p.fs_mode.to_string()),
        ("seed", p.seed.to_string()),
    ])
}

fn stamp(seed: u64, conf: &str) -> String {
    format!("seed: {seed}\nconfig: sha256:{}\n", sha256_hex(conf.as_bytes()))
}

/// Lists every file with its digest, after the seed and config digest.
fn write_manifest(dir: &Path, seed: u64, conf: &str, files: &[(&str, String)]) -> Result<String> {
    let mut manifest = stamp(seed, conf);
    for (name, contents) in files {
        write_text(&dir.join(name), contents)?;
        let _ = writeln!(manifest, "{}  {name}", sha256_hex(contents.as_bytes()));
    }
    write_text(&dir.join("manifest.txt"), &manifest)?;
    Ok(sha256_hex(manifest.as_bytes()))
}

fn cmd_rank(args: &RankArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let loaded = load(&args.data)?;
    let labeled = match &args.data.task {
        TaskArg::Multi => loaded.dataset.with_sorted_classes(),
        TaskArg::Owner(id) => loaded.dataset.label_for_owner(id)?,
        TaskArg::OwnerAll => {
            return Err(Error::Config("rank takes --task multi or owner:<id>".into()));
        }
    };
    let (ranking, subset) = select_features(&labeled, args.fs)?;
    let report = SelectionReport { ranking, subset };
    let conf = run_conf(
        "rank",
        &loaded,
        &args.data.task,
        &[
            ("fs", args.fs.to_string()),
            ("min_instances", args.data.min_instances.to_string()),
            ("seed", args.seed.to_string()),
        ],
    )?;
    let text = format!("{}\n{}", stamp(args.seed, &conf), report.to_text());
    match &args.out {
        None => say(out, &text),
        Some(dir) => {
            create_dir(dir)?;
            let digest = write_manifest(
                dir,
                args.seed,
                &conf,
                &[
                    ("ranking.txt", text.clone()),
                    ("ranking.csv", report.to_csv()?),
                    ("exclusions.txt", loaded.exclusions.clone()),
                    ("run.conf", conf.clone()),
                ],
            )?;
            say(out, &text)?;
            say(out, &format!("\nreport digest: sha256:{digest}\n"))
        }
    }
}

fn train_one(
    dir: &Path,
    loaded: &Loaded,
    task: &TaskArg,
    model: &ModelArgs,
    extra: &[(&str, String)],
) -> Result<String> {
    let pipeline = model.pipeline()?;
    let bundle = match task {
        TaskArg::Multi => Bundle::Multi(train_multi_driver(&loaded.dataset, &pipeline)?),
        TaskArg::Owner(id) => Bundle::Owner(generate_model(&loaded.dataset, id, &pipeline)?),
        TaskArg::OwnerAll => unreachable!("expanded by the caller"),
    };
    let mut fields = model_fields(model)?;
    fields.extend(extra.iter().map(|(k, v)| (*k, v.clone())));
    let conf = run_conf("train", loaded, task, &fields)?;
    let ingest = loaded.ingest.to_text();
    write_bundle(
        dir,
        &bundle,
        &[
            ("ingest.conf", &ingest),
            ("run.conf", &conf),
            ("exclusions.txt", &loaded.exclusions),
        ],
    )
}

fn cmd_train(args: &TrainArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let loaded = load(&args.data)?;
    let extra = [("min_instances", args.data.min_instances.to_string())];
    match &args.data.task {
        TaskArg::OwnerAll => {
            for owner in loaded.dataset.classes().to_vec() {
                if owner.is_empty() || owner.contains(['/', '\\']) || owner == "." || owner == ".." {
                    return Err(Error::Config(format!("driver id `{owner}` is not usable as a directory name")));
                }
                let task = TaskArg::Owner(owner.clone());
                let digest = train_one(&args.out.join(&owner), &loaded, &task, &args.model, &extra)?;
                say(out, &format!("{task}: sha256:{digest}\n"))?;
            }
            Ok(())
        }
        task => {
            let digest = train_one(&args.out, &loaded, task, &args.model, &extra)?;
            say(out, &format!("{task}: sha256:{digest}\n"))
        }
    }
}

fn cmd_eval(args: &EvalArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let loaded = load(&args.data)?;
    let cv = CvConfig {
        k: args.folds,
        stratified: !args.unstratified,
        pipeline: args.model.pipeline()?,
    };
    let mut fields = model_fields(&args.model)?;
    fields.extend([
        ("folds", args.folds.to_string()),
        ("stratified", (!args.unstratified).to_string()),
        ("min_instances", args.data.min_instances.to_string()),
    ]);
    let conf = run_conf("eval", &loaded, &args.data.task, &fields)?;
    let seed = args.model.seed;
    let (text, mut files) = match &args.data.task {
        TaskArg::OwnerAll => {
            let report = owner_experiment(&loaded.dataset, &cv)?;
            let files = vec![("report.csv", report.to_csv()?), ("folds.csv", report.to_fold_csv()?)];
            (report.to_text(), files)
        }
        task => {
            let task = match task {
                TaskArg::Multi => Task::Multi,
                TaskArg::Owner(id) => Task::Owner(id.clone()),
                TaskArg::OwnerAll => unreachable!(),
            };
            let report = cross_validate(&loaded.dataset, &task, &cv)?;
            let mut files = vec![("report.csv", report.to_csv()?)];
            if args.per_fold_class {
                files.push(("fold_class.csv", report.to_fold_class_csv()?));
            }
            (report.to_text(), files)
        }
    };
    let text = format!("{}\n{text}", stamp(seed, &conf));
    files.push(("report.txt", text.clone()));
    files.push(("exclusions.txt", loaded.exclusions.clone()));
    files.push(("run.conf", conf.clone()));
    create_dir(&args.out)?;
    let digest = write_manifest(&args.out, seed, &conf, &files)?;
    say(out, &text)?;
    say(out, &format!("\nreport digest: sha256:{digest}\n"))
}

fn cmd_predict(args: &PredictArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let (bundle, extras) = read_bundle::<f64>(&args.model)?;
    let ingest = match &args.ingest_config {
        Some(path) => IngestConfig::from_file(path).map_err(config_io)?,
        None => extras
            .get("ingest.conf")
            .ok_or_else(|| Error::Config("bundle has no ingest.conf; pass --ingest-config".into()))?
            .parse()?,
    };
    let file = fs::File::open(&args.input).map_err(|e| Error::io(&args.input, e))?;
    let raw: Dataset = read_unlabeled_csv(file, &ingest)?;
    let tc = raw.time_columns();
    let data = if tc.timestamp.is_some() || tc.engine_runtime.is_some() {
        decompose_timestamp(&raw)?
    } else {
        raw
    };
    let fitted = bundle.fitted();
    let classes = fitted.classifier.classes();
    let predictions = fitted.predict_dataset(&data)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "label", "confidence"])?;
    for (inst, (class, confidence)) in data.instances().iter().zip(&predictions) {
        w.write_record([inst.row_id.to_string(), classes[*class].clone(), format!("{confidence:.6}")])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Invariant(format!("csv buffer: {e}")))?;
    match &args.out {
        Some(path) => fs::write(path, &bytes).map_err(|e| Error::io(path, e)),
        None => out.write_all(&bytes).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn cmd_synth(args: &SynthArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let profile = Profile::from_file(&args.profile).map_err(config_io)?;
    let corpus = profile.generate_string(args.rows, args.seed)?;
    write_text(&args.out, &corpus)?;
    let ingest_path = args.out.with_extension("ingest");
    let ingest = format!(
        "# synthetic corpus, {} rows, seed {}\n{}",
        args.rows,
        args.seed,
        profile.ingest_config().to_text()
    );
    write_text(&ingest_path, &ingest)?;
    say(
        out,
        &format!(
            "{}: {} rows, seed {}, sha256:{}\n{}\n",
            args.out.display(),
            args.rows,
            args.seed,
            sha256_hex(corpus.as_bytes()),
            ingest_path.display()
        ),
    )
}
