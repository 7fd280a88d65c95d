//! Command-line front end.
//!
//! Every command that produces files writes them into `<out>/.staging`
//! first and moves them into `<out>` only after the whole command succeeded,
//! together with a `manifest.json` that records the resolved job, the input
//! hashes and the output hashes. `replay` re-runs a manifest and compares.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::data::{class_weights, load_trajectories, prepare, AgentKind, LabelMap, PrepConfig, PreparedDataset, Resample};
use crate::error::{Error, Result};
use crate::gradcheck::check_network;
use crate::hmm::HmmConfig;
use crate::metrics::EvalReport;
use crate::models::ModelKind;
use crate::report::{self, ComparisonEntry};
use crate::synth::{self, SynthSpec};
use crate::train::{self, variant_name, AblationCell, Precision, TrainConfig, ABLATION_GRID};

/// Default run configuration as written by `trajclass defaults`.
pub const DEFAULT_CONFIG: &str = r#"# trajclass run configuration.
# Keys flagged `# paper-silent` have no value in the method description;
# the value here is this tool's own choice.

[prep]
# kind = "vehicle"        # keep one agent kind (vehicle, pedestrian, rider); all when unset
min_len = 7
window = 5
stride = 1                # paper-silent
min_class_count = 100
train_ratio = 0.8
seed = 0                  # paper-silent
resample = "ros"          # none | ros | rus | wl
degrees = false           # paper-silent: heading column unit

[train]
epochs = 60
batch_size = 256
lr_initial = 0.005
lr_after = 0.001
lr_switch_epoch = 40
seed = 0                  # paper-silent
precision = "fast"        # paper-silent: verify trains in 64-bit, fast in 32-bit
standardize = false       # paper-silent
# loss_weights = [...]    # paper-silent: per-class; resample = "wl" derives N/(C*n_c)

[hmm]
n_states = 7
max_iters = 100           # paper-silent
tol = 1e-4                # paper-silent
var_floor = 1e-6          # paper-silent

[ablate]
seeds = [1, 2, 3]         # paper-silent
"#;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub seeds: Vec<u64>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig { seeds: vec![1, 2, 3] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub prep: PrepConfig,
    pub train: TrainConfig,
    pub hmm: HmmConfig,
    pub ablate: AblateConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Ok(toml::from_str(&fs::read_to_string(p)?)?),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "trajclass", version, about = "Driving behavior classification from ego-relative trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Generate a synthetic trajectory file from a TOML spec.
    Gen {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Window, filter and split a trajectory file into a prepared dataset.
    Prep {
        trajectories: PathBuf,
        /// Label map (`class_index,class_name`); defaults to labels.csv next to the trajectories.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        resample: Option<Resample>,
        #[arg(long)]
        kind: Option<AgentKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on a prepared dataset.
    Train {
        dataset: PathBuf,
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the resampling recorded in the dataset.
        #[arg(long)]
        resample: Option<Resample>,
        #[arg(long)]
        precision: Option<Precision>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the test split of a prepared dataset.
    Eval {
        checkpoint: PathBuf,
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the ROS × MSCNN ablation grid.
    Ablate {
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Single seed; overrides the configured seed list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        precision: Option<Precision>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check reverse-mode gradients of every network against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Combine `eval` outputs into a model × dataset comparison table.
    Table {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default run configuration.
    Defaults,
    /// Re-run the job recorded in a manifest and compare output hashes.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A fully resolved command, as stored in manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Job {
    Gen {
        spec: SynthSpec,
    },
    Prep {
        trajectories: PathBuf,
        labels: PathBuf,
        config: PrepConfig,
    },
    Train {
        dataset: PathBuf,
        model: ModelKind,
        resample: Resample,
        train: TrainConfig,
        hmm: HmmConfig,
    },
    Eval {
        checkpoint: PathBuf,
        dataset: PathBuf,
    },
    Ablate {
        dataset: PathBuf,
        seeds: Vec<u64>,
        train: TrainConfig,
    },
    Table {
        reports: Vec<PathBuf>,
    },
}

impl Job {
    fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Job::Gen { .. } => Vec::new(),
            Job::Prep { trajectories, labels, .. } => vec![trajectories.clone(), labels.clone()],
            Job::Train { dataset, .. } | Job::Ablate { dataset, .. } => vec![dataset.clone()],
            Job::Eval { checkpoint, dataset } => vec![checkpoint.clone(), dataset.clone()],
            Job::Table { reports } => reports.iter().map(|r| r.join("report.json")).collect(),
        }
    }

    fn seeds(&self) -> Vec<u64> {
        match self {
            Job::Gen { spec } => vec![spec.seed],
            Job::Prep { config, .. } => vec![config.seed],
            Job::Train { train, .. } => vec![train.seed],
            Job::Ablate { seeds, .. } => seeds.clone(),
            Job::Eval { .. } | Job::Table { .. } => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
    /// Contents include wall-clock timings and differ between runs.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub volatile: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub job: Job,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileHash>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Output directory under construction. Dropping it without `commit`
/// removes everything it wrote.
struct Staging {
    out: PathBuf,
    dir: PathBuf,
    created_out: bool,
    files: Vec<(String, bool)>,
    committed: bool,
}

impl Staging {
    fn begin(out: &Path) -> Result<Self> {
        let created_out = !out.exists();
        if !created_out && fs::read_dir(out)?.next().is_some() {
            return Err(Error::Config(format!("output directory {} is not empty", out.display())));
        }
        fs::create_dir_all(out)?;
        let dir = out.join(".staging");
        fs::create_dir(&dir)?;
        Ok(Staging {
            out: out.to_path_buf(),
            dir,
            created_out,
            files: Vec::new(),
            committed: false,
        })
    }

    /// Path to write `name` to; the file joins the outputs.
    fn path(&mut self, name: &str, volatile: bool) -> PathBuf {
        self.files.push((name.to_string(), volatile));
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name, false);
        fs::write(p, contents)?;
        Ok(())
    }

    fn write_volatile(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name, true);
        fs::write(p, contents)?;
        Ok(())
    }

    fn commit(mut self, job: &Job) -> Result<Manifest> {
        let inputs = job
            .inputs()
            .into_iter()
            .map(|p| {
                Ok(FileHash {
                    sha256: sha256_file(&p)?,
                    path: p,
                    volatile: false,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let outputs = self
            .files
            .iter()
            .map(|(name, volatile)| {
                Ok(FileHash {
                    path: PathBuf::from(name),
                    sha256: sha256_file(&self.dir.join(name))?,
                    volatile: *volatile,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            job: job.clone(),
            seeds: job.seeds(),
            inputs,
            outputs,
        };
        fs::write(self.dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        for (name, _) in &self.files {
            fs::rename(self.dir.join(name), self.out.join(name))?;
        }
        fs::rename(self.dir.join("manifest.json"), self.out.join("manifest.json"))?;
        fs::remove_dir(&self.dir)?;
        self.committed = true;
        Ok(manifest)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
            if self.created_out {
                let _ = fs::remove_dir_all(&self.out);
            }
        }
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    fs::canonicalize(p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))
}

/// Turns parsed arguments into a job, applying config files and overrides.
pub fn resolve(cmd: &Cmd) -> Result<Option<(Job, PathBuf)>> {
    let job = match cmd {
        Cmd::Gen { spec, seed, out } => {
            let mut s = SynthSpec::load(spec)?;
            if let Some(seed) = seed {
                s.seed = *seed;
            }
            (Job::Gen { spec: s }, out.clone())
        }
        Cmd::Prep {
            trajectories,
            labels,
            config,
            seed,
            resample,
            kind,
            out,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?.prep;
            if let Some(seed) = seed {
                cfg.seed = *seed;
            }
            if let Some(r) = resample {
                cfg.resample = *r;
            }
            if kind.is_some() {
                cfg.kind = *kind;
            }
            cfg.validate()?;
            let trajectories = absolute(trajectories)?;
            let labels = match labels {
                Some(l) => absolute(l)?,
                None => absolute(&trajectories.with_file_name("labels.csv"))?,
            };
            (
                Job::Prep {
                    trajectories,
                    labels,
                    config: cfg,
                },
                out.clone(),
            )
        }
        Cmd::Train {
            dataset,
            model,
            config,
            seed,
            resample,
            precision,
            out,
        } => {
            let rc = RunConfig::load(config.as_deref())?;
            let mut train = rc.train;
            if let Some(seed) = seed {
                train.seed = *seed;
            }
            if let Some(p) = precision {
                train.precision = *p;
            }
            train.validate()?;
            rc.hmm.validate()?;
            let dataset = absolute(dataset)?;
            let resample = match resample {
                Some(r) => *r,
                None => PreparedDataset::load(&dataset)?.config.resample,
            };
            (
                Job::Train {
                    dataset,
                    model: *model,
                    resample,
                    train,
                    hmm: rc.hmm,
                },
                out.clone(),
            )
        }
        Cmd::Eval { checkpoint, dataset, out } => (
            Job::Eval {
                checkpoint: absolute(checkpoint)?,
                dataset: absolute(dataset)?,
            },
            out.clone(),
        ),
        Cmd::Ablate {
            dataset,
            config,
            seed,
            precision,
            out,
        } => {
            let rc = RunConfig::load(config.as_deref())?;
            let mut train = rc.train;
            if let Some(p) = precision {
                train.precision = *p;
            }
            train.validate()?;
            let seeds = match seed {
                Some(s) => vec![*s],
                None => rc.ablate.seeds,
            };
            if seeds.is_empty() {
                return Err(Error::Config("ablation needs at least one seed".into()));
            }
            (
                Job::Ablate {
                    dataset: absolute(dataset)?,
                    seeds,
                    train,
                },
                out.clone(),
            )
        }
        Cmd::Table { reports, out } => (
            Job::Table {
                reports: reports.iter().map(|r| absolute(r)).collect::<Result<_>>()?,
            },
            out.clone(),
        ),
        Cmd::Gradcheck { .. } | Cmd::Defaults | Cmd::Replay { .. } => return Ok(None),
    };
    Ok(Some(job))
}

/// `report.json` written by `eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub model: ModelKind,
    pub title: String,
    /// Agent kind of the evaluated dataset, or `all`.
    pub dataset: String,
    pub report: EvalReport,
}

/// Progress goes to stderr; a closed stderr must not abort the run.
fn progress(msg: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stderr(), "{msg}");
}

/// Executes a job into `out`.
pub fn run_job(job: &Job, out: &Path) -> Result<Manifest> {
    // inputs are read and validated before anything is created
    let mut stage;
    match job {
        Job::Gen { spec } => {
            spec.validate()?;
            let trajs = synth::gen_dataset(spec)?;
            stage = Staging::begin(out)?;
            let labels = synth::label_map();
            crate::data::save_trajectories(&stage.path("trajectories.csv", false), &trajs, &labels)?;
            labels.save(&stage.path("labels.csv", false))?;
            stage.write("spec.toml", toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))?)?;
            progress(&format!("generated {} trajectories", trajs.len()));
        }
        Job::Prep {
            trajectories,
            labels,
            config,
        } => {
            let labels = LabelMap::load(labels)?;
            let trajs = load_trajectories(trajectories, &labels, config.degrees)?;
            let ds = prepare(&trajs, &labels, config)?;
            stage = Staging::begin(out)?;
            ds.save(&stage.path("dataset.trjd", false))?;
            stage.write("stages.txt", ds.stage_table())?;
            stage.write("stages.json", serde_json::to_vec_pretty(&ds.stages)?)?;
            progress(&ds.stage_table());
        }
        Job::Train {
            dataset,
            model,
            resample,
            train: cfg,
            hmm,
        } => {
            let ds = PreparedDataset::load(dataset)?;
            let samples = ds.training_samples_with(*resample)?;
            let mut cfg = cfg.clone();
            if *resample == Resample::Wl && cfg.loss_weights.is_none() {
                cfg.loss_weights = Some(class_weights(&ds.split.train, ds.num_classes())?);
            }
            progress(&format!(
                "training {} on {} windows ({} classes, resample {resample})",
                model.title(),
                samples.len(),
                ds.num_classes()
            ));
            let epochs = cfg.epochs;
            let (clf, log) = train::train(*model, &samples, ds.class_names(), &cfg, hmm, |e| {
                progress(&format!(
                    "epoch {:>3}/{epochs}  loss {:.6}  lr {}  {:.1}s",
                    e.epoch, e.loss, e.lr, e.seconds
                ))
            })?;
            stage = Staging::begin(out)?;
            checkpoint::save(&clf, &stage.path("model.ckpt", false))?;
            stage.write_volatile("train_log.csv", log.to_csv())?;
            let summary = serde_json::json!({
                "model": model,
                "train_windows": samples.len(),
                "train_histogram": crate::data::histogram(&samples, ds.num_classes())?,
                "loss_weights": cfg.loss_weights,
                "epoch_loss": log.epochs.iter().map(|e| e.loss).collect::<Vec<_>>(),
                "epoch_lr": log.epochs.iter().map(|e| e.lr).collect::<Vec<_>>(),
            });
            stage.write("train.json", serde_json::to_vec_pretty(&summary)?)?;
        }
        Job::Eval { checkpoint: ckpt, dataset } => {
            let clf = checkpoint::load(ckpt)?;
            let ds = PreparedDataset::load(dataset)?;
            let r = train::evaluate(&clf, &ds.split.test, ds.class_names())?;
            let kind = clf.kind();
            let output = EvalOutput {
                model: kind,
                title: kind.title().to_string(),
                dataset: ds.config.kind.map_or("all".to_string(), |k| k.to_string()),
                report: r,
            };
            stage = Staging::begin(out)?;
            let text = report::metrics_text(kind.title(), &output.report);
            stage.write("metrics.txt", &text)?;
            stage.write("per_class.csv", report::per_class_csv(&output.report))?;
            stage.write("confusion.svg", report::confusion_svg(&output.report))?;
            stage.write("per_class.svg", report::per_class_bar_svg(&output.report))?;
            stage.write("report.json", serde_json::to_vec_pretty(&output)?)?;
            progress(&text);
        }
        Job::Ablate { dataset, seeds, train: cfg } => {
            let ds = PreparedDataset::load(dataset)?;
            let cells = train::ablation_grid(&ds, seeds, cfg, |c| {
                progress(&format!(
                    "seed {} {:<20} balanced accuracy {:.4}",
                    c.seed,
                    c.name(),
                    c.report.balanced_accuracy
                ))
            })?;
            stage = Staging::begin(out)?;
            stage.write("ablation.txt", ablation_text(&cells))?;
            stage.write("ablation.csv", ablation_csv(&cells))?;
            stage.write("ablation.json", serde_json::to_vec_pretty(&cells)?)?;
        }
        Job::Table { reports } => {
            let outputs = reports
                .iter()
                .map(|r| -> Result<EvalOutput> { Ok(serde_json::from_slice(&fs::read(r.join("report.json"))?)?) })
                .collect::<Result<Vec<_>>>()?;
            let entries: Vec<ComparisonEntry> = outputs
                .iter()
                .map(|o| ComparisonEntry {
                    dataset: &o.dataset,
                    model: &o.title,
                    report: &o.report,
                })
                .collect();
            stage = Staging::begin(out)?;
            let table = report::comparison_table(&entries);
            stage.write("comparison.txt", &table)?;
            stage.write("comparison.csv", report::comparison_csv(&entries))?;
            progress(&table);
        }
    }
    stage.commit(job)
}

/// Per-seed tables followed by the mean over seeds.
pub fn ablation_text(cells: &[AblationCell]) -> String {
    let mut s = String::new();
    let row = |name: &str, ba: f64, f1: f64, rec: f64| {
        format!(
            "{name:<20} {:>18} {:>10} {:>10}\n",
            format!("{:.2}%", 100.0 * ba),
            format!("{:.2}%", 100.0 * f1),
            format!("{:.2}%", 100.0 * rec)
        )
    };
    let header = format!("{:<20} {:>18} {:>10} {:>10}\n", "model", "balanced accuracy", "F1", "recall");
    let mut seeds: Vec<u64> = cells.iter().map(|c| c.seed).collect();
    seeds.dedup();
    for seed in &seeds {
        s.push_str(&format!("seed {seed}\n"));
        s.push_str(&header);
        for c in cells.iter().filter(|c| c.seed == *seed) {
            s.push_str(&row(&c.name(), c.report.balanced_accuracy, c.report.macro_f1, c.report.micro_recall));
        }
        s.push('\n');
    }
    s.push_str(&format!("mean over {} seed(s)\n", seeds.len()));
    s.push_str(&header);
    for (ros, mscnn) in ABLATION_GRID {
        let sel: Vec<&AblationCell> = cells.iter().filter(|c| c.ros == ros && c.mscnn == mscnn).collect();
        let n = sel.len().max(1) as f64;
        let mean = |f: fn(&EvalReport) -> f64| sel.iter().map(|c| f(&c.report)).sum::<f64>() / n;
        s.push_str(&row(
            &variant_name(ros, mscnn),
            mean(|r| r.balanced_accuracy),
            mean(|r| r.macro_f1),
            mean(|r| r.micro_recall),
        ));
    }
    s
}

pub fn ablation_csv(cells: &[AblationCell]) -> String {
    let mut s = String::from("seed,model,ros,mscnn,balanced_accuracy,macro_f1,recall\n");
    for c in cells {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.seed,
            c.name(),
            c.ros,
            c.mscnn,
            c.report.balanced_accuracy,
            c.report.macro_f1,
            c.report.micro_recall
        ));
    }
    s
}

/// Max relative gradient error per network.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<(String, f64)>> {
    use crate::models::{Architecture, Conv1dConfig, FusionConfig, LstmConfig};
    let c = 5;
    let archs = [
        ("Bi-LSTM+MSCNN", Architecture::Fusion(FusionConfig::new(c))),
        ("LSTM", Architecture::Lstm(LstmConfig::new(c))),
        ("Conv1D", Architecture::Conv1d(Conv1dConfig::new(c))),
    ];
    archs
        .iter()
        .map(|(name, arch)| Ok((name.to_string(), check_network(arch, 3, seed)?.max_rel_error)))
        .collect()
}

/// Gradient errors at or above this fail `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

pub fn replay(manifest_path: &Path, out: &Path) -> Result<Manifest> {
    let original: Manifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
    for input in &original.inputs {
        let now = sha256_file(&input.path)?;
        if now != input.sha256 {
            return Err(Error::Data(format!("input {} changed since the recorded run", input.path.display())));
        }
    }
    let fresh = run_job(&original.job, out)?;
    let mismatched: Vec<String> = original
        .outputs
        .iter()
        .filter(|o| !o.volatile)
        .filter(|o| fresh.outputs.iter().find(|f| f.path == o.path).map(|f| &f.sha256) != Some(&o.sha256))
        .map(|o| o.path.display().to_string())
        .collect();
    if !mismatched.is_empty() {
        return Err(Error::Data(format!("replay outputs differ: {}", mismatched.join(", "))));
    }
    Ok(fresh)
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Cmd::Defaults => {
            print!("{DEFAULT_CONFIG}");
            Ok(())
        }
        Cmd::Gradcheck { seed } => {
            let mut worst: f64 = 0.0;
            for (name, err) in gradcheck_suite(*seed)? {
                println!("{name:<16} max relative error {err:.3e}");
                worst = worst.max(err);
            }
            if worst < GRADCHECK_TOLERANCE {
                Ok(())
            } else {
                Err(Error::GradCheck(worst))
            }
        }
        Cmd::Replay { manifest, out } => {
            let m = replay(manifest, out)?;
            println!("replayed {} outputs into {}", m.outputs.len(), out.display());
            Ok(())
        }
        cmd => {
            let (job, out) = resolve(cmd)?.expect("file-producing command");
            run_job(&job, &out)?;
            Ok(())
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_text_matches_defaults() {
        let parsed: RunConfig = toml::from_str(DEFAULT_CONFIG).unwrap();
        assert_eq!(parsed, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nepoch = 3\n").is_err());
    }
}
