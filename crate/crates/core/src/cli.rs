//! Command-line front end. `run` parses argv, executes one subcommand and
//! maps the outcome to an exit code: 0 success, 1 verification failure,
//! 2 usage error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audit;
use crate::error::{param_err, Error, Result};
use crate::group::{build_group, FiniteGroup, GroupFile, GroupName};
use crate::hspace::{build_hspace, HSpaceKind};
use crate::io::RunManifest;
use crate::mvnet::train::{
    evaluate, load_checkpoint, metrics_csv, pose_jitter_eval, run_experiment, save_checkpoint, EvalOptions,
    ExperimentConfig, ViewSubset,
};
use crate::synth::{make_dataset, DatasetMode, RenderSpec};
use crate::tape::Tape;
use crate::views::{gen_config, CameraConfig, ConfigFile, ConfigKind, ViewSpace};
use crate::viz::{hspace_mesh, pca_rgb, pentakis_mesh, ply_string};

#[derive(Parser, Debug)]
#[command(name = "finrot", version, about = "Equivariant multi-view networks on finite rotation groups")]
pub struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a finite rotation group, or verify a stored group file.
    Group(GroupArgs),
    /// Build a homogeneous space with its action table.
    Hspace(HSpaceArgs),
    /// Generate a camera configuration, or check a stored one.
    Views(ViewsArgs),
    /// Run the invariant audit and print a pass/fail matrix.
    Check(CheckArgs),
    /// Render a synthetic dataset to disk.
    Data(DataArgs),
    /// Train a model and write a checkpoint with its metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on its test split.
    Eval(EvalArgs),
    /// Evaluate a checkpoint under random camera perturbations.
    Jitter(JitterArgs),
    /// Export one feature map as a colored PLY polyhedron.
    Viz(VizArgs),
}

#[derive(Args, Debug)]
pub struct GroupArgs {
    /// c<k>, d<k>, tet, oct or ico.
    #[arg(long, default_value = "ico")]
    pub name: GroupName,
    #[arg(long, default_value = "group.json")]
    pub out: PathBuf,
    /// Re-check the axioms of an existing group file instead of building one.
    #[arg(long, value_name = "FILE")]
    pub verify: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct HSpaceArgs {
    #[arg(long, default_value = "ico")]
    pub group: GroupName,
    /// v12, f20 or group.
    #[arg(long, default_value = "v12")]
    pub kind: HSpaceKind,
    #[arg(long, default_value = "hspace.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ViewsArgs {
    /// 12x5, 20x3, 60x1, aligned12, aligned20 or panorama<k>.
    #[arg(long, default_value = "12x5")]
    pub kind: ConfigKind,
    #[arg(long, default_value_t = 3.0)]
    pub radius: f64,
    #[arg(long, default_value = "views.json")]
    pub out: PathBuf,
    /// Check the permutation equivariance of an existing configuration file.
    #[arg(long, value_name = "FILE")]
    pub check_equivariance: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Run every suite.
    #[arg(long)]
    pub all: bool,
    /// Run one suite (repeatable).
    #[arg(long, value_name = "NAME")]
    pub suite: Vec<String>,
    /// Print every check, not only failures.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub n_train: usize,
    #[arg(long, default_value_t = 30)]
    pub n_test: usize,
    /// Store objects in their canonical pose instead of rotating them.
    #[arg(long)]
    pub aligned: bool,
    #[arg(long, default_value = "60x1")]
    pub views: ConfigKind,
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    /// Dataset directory, relative to --out-dir.
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Experiment configuration (JSON); defaults are used when absent, with
    /// --seed driving both data and initialization.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Checkpoint directory, relative to --out-dir.
    #[arg(long, default_value = "ckpt")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    pub ckpt: PathBuf,
    /// Move items of the query's predicted class to the front of the ranking.
    #[arg(long)]
    pub rerank: bool,
    /// Use this many random views per object instead of all.
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long, default_value = "eval.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct JitterArgs {
    #[arg(long, value_name = "DIR")]
    pub ckpt: PathBuf,
    /// Perturbation σ in degrees (repeatable).
    #[arg(long, default_values_t = vec![0.0, 5.0, 15.0, 30.0, 45.0])]
    pub sigma: Vec<f64>,
    #[arg(long, default_value = "jitter.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VizArgs {
    #[arg(long, value_name = "DIR")]
    pub ckpt: PathBuf,
    /// 0 is the assembled view signal, l ≥ 1 the output of head layer l.
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    /// Test instance to visualize.
    #[arg(long, default_value_t = 0)]
    pub instance: usize,
    #[arg(long, default_value = "features.ply")]
    pub out: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Messages go to stderr, reports to stdout.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new().filter_level(cli.log_level).try_init();
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Verification(_) | Error::Consistency(_) | Error::Numeric(_) => 1,
        Error::Parameter(_) | Error::State(_) | Error::Io(_) | Error::Json(_) => 2,
    }
}

struct Run<'a> {
    cli: &'a Cli,
    manifest: RunManifest,
}

impl Run<'_> {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.cli.out_dir.join(p)
        }
    }

    fn write(&mut self, p: &Path, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(p);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, bytes)?;
        self.manifest.record_output(&path)?;
        Ok(path)
    }

    fn hash(&mut self, key: &str, value: String) {
        self.manifest.hashes.push((key.into(), value));
    }

    fn finish(self, stem: &str) -> Result<()> {
        self.manifest.write(&self.cli.out_dir, stem)
    }
}

fn execute(cli: &Cli, args: &[String]) -> Result<i32> {
    let stem = match &cli.command {
        Command::Group(_) => "group",
        Command::Hspace(_) => "hspace",
        Command::Views(_) => "views",
        Command::Check(_) => "check",
        Command::Data(_) => "data",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Jitter(_) => "jitter",
        Command::Viz(_) => "viz",
    };
    let mut run = Run { cli, manifest: RunManifest::new(stem, args) };
    let code = match &cli.command {
        Command::Group(a) => group(&mut run, a)?,
        Command::Hspace(a) => hspace(&mut run, a)?,
        Command::Views(a) => views(&mut run, a)?,
        Command::Check(a) => check(&mut run, a)?,
        Command::Data(a) => data(&mut run, a)?,
        Command::Train(a) => train(&mut run, a)?,
        Command::Eval(a) => eval(&mut run, a)?,
        Command::Jitter(a) => jitter(&mut run, a)?,
        Command::Viz(a) => viz(&mut run, a)?,
    };
    run.finish(stem)?;
    Ok(code)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| param_err!("cannot read {}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| param_err!("{} is not valid: {e}", path.display()))
}

/// Like [`read_json`], but a file that exists and does not parse fails verification.
fn read_checked_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| param_err!("cannot read {}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Verification(format!("{} is malformed: {e}", path.display())))
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn group(run: &mut Run, a: &GroupArgs) -> Result<i32> {
    if let Some(path) = &a.verify {
        let file: GroupFile = read_checked_json(path)?;
        let g = FiniteGroup::from_file(&file).and_then(|g| g.verify().map(|_| g)).map_err(as_verification)?;
        run.hash("group", g.hash());
        println!("{}: {} elements, all axioms hold", path.display(), g.order());
        return Ok(0);
    }
    let g = build_group(a.name)?;
    g.verify()?;
    run.hash("group", g.hash());
    let path = run.write(&a.out, json_bytes(&g.to_file())?)?;
    println!("wrote {} ({} elements)", path.display(), g.order());
    Ok(0)
}

/// A malformed file under verification is a verification failure, not a usage error.
fn as_verification(e: Error) -> Error {
    match e {
        Error::Parameter(m) => Error::Verification(m),
        other => other,
    }
}

fn hspace(run: &mut Run, a: &HSpaceArgs) -> Result<i32> {
    let g = std::sync::Arc::new(build_group(a.group)?);
    let h = build_hspace(g.clone(), a.kind)?;
    h.verify()?;
    run.hash("group", g.hash());
    let path = run.write(&a.out, json_bytes(&h.to_file())?)?;
    println!("wrote {} ({} points, stabilizer order {})", path.display(), h.len(), h.stabilizer_order());
    Ok(0)
}

fn views(run: &mut Run, a: &ViewsArgs) -> Result<i32> {
    if let Some(path) = &a.check_equivariance {
        let file: ConfigFile = read_checked_json(path)?;
        let cfg = CameraConfig::from_file(&file).map_err(as_verification)?;
        cfg.check_equivariance()?;
        run.hash("config", crate::io::config_hash(&cfg));
        println!("{}: {} views permute consistently under all {} rotations", path.display(), cfg.len(), cfg.group().order());
        return Ok(0);
    }
    let cfg = gen_config(a.kind, a.radius)?;
    cfg.check_equivariance()?;
    run.hash("config", crate::io::config_hash(&cfg));
    let path = run.write(&a.out, json_bytes(&cfg.to_file())?)?;
    println!("wrote {} ({} views)", path.display(), cfg.len());
    Ok(0)
}

fn check(run: &mut Run, a: &CheckArgs) -> Result<i32> {
    if a.all && !a.suite.is_empty() {
        return Err(param_err!("--all and --suite are mutually exclusive"));
    }
    if !a.all && a.suite.is_empty() {
        return Err(param_err!("choose --all or at least one --suite ({})", audit::SUITES.join(", ")));
    }
    let report = audit::run(&a.suite, run.cli.seed)?;
    if a.verbose {
        print!("{}", report.render_verbose());
    }
    print!("{}", report.render());
    let checks: Vec<&audit::Check> = report.checks.iter().collect();
    run.write(Path::new("check.json"), json_bytes(&checks)?)?;
    Ok(if report.passed() { 0 } else { 1 })
}

fn data(run: &mut Run, a: &DataArgs) -> Result<i32> {
    let mode = if a.aligned { DatasetMode::Aligned } else { DatasetMode::RotatedSO3 };
    let ds = make_dataset(a.classes, a.n_train, a.n_test, mode, run.cli.seed)?;
    let cfg = gen_config(a.views, 3.0)?;
    let spec = RenderSpec { size: a.size, ..Default::default() };
    spec.validate()?;
    let dir = run.path(&a.out);
    crate::synth::write_dataset(&dir, &ds, &cfg, &spec)?;
    run.manifest.record_output(&dir.join("manifest.csv"))?;
    run.hash("config", crate::io::config_hash(&cfg));
    println!("wrote {} train and {} test objects under {}", ds.train.len(), ds.test.len(), dir.display());
    Ok(0)
}

fn train(run: &mut Run, a: &TrainArgs) -> Result<i32> {
    let cfg: ExperimentConfig = match &a.config {
        Some(path) => read_json(path)?,
        None => {
            let mut c = ExperimentConfig::default();
            c.data.seed = run.cli.seed;
            c.train.seed = run.cli.seed;
            c
        }
    };
    let (outcome, _, test) = run_experiment(&cfg)?;
    let dir = run.path(&a.out);
    save_checkpoint(&dir, &outcome.model, Some(&cfg))?;
    run.manifest.record_output(&dir.join("model.tensor"))?;
    run.manifest.record_output(&dir.join("checkpoint.json"))?;
    run.write(&a.out.join("metrics.csv"), metrics_csv(&outcome.log))?;
    run.hash("group", outcome.model.group().hash());
    println!("test accuracy {:.4}, mAP {:.4}; checkpoint in {}", test.accuracy, test.retrieval.map_micro, dir.display());
    Ok(0)
}

fn experiment_of(manifest: &crate::mvnet::train::CheckpointManifest) -> Result<ExperimentConfig> {
    manifest.experiment.clone().ok_or_else(|| param_err!("checkpoint does not record its dataset configuration"))
}

fn eval(run: &mut Run, a: &EvalArgs) -> Result<i32> {
    let (model, manifest) = load_checkpoint(&a.ckpt)?;
    let exp = experiment_of(&manifest)?;
    let d = &exp.data;
    let data = make_dataset(d.classes, d.n_train, d.n_test, d.mode, d.seed)?;
    let views = match a.views {
        Some(count) => ViewSubset::Random { count, seed: run.cli.seed },
        None => ViewSubset::All,
    };
    let r = evaluate(&model, &data.test, &exp.render, &EvalOptions { views, rerank: a.rerank, ..Default::default() })?;
    let summary = serde_json::json!({
        "accuracy": r.accuracy,
        "loss": r.loss,
        "rerank": a.rerank,
        "views": a.views.unwrap_or(model.camera().len()),
        "retrieval": r.retrieval,
    });
    run.write(&a.out, json_bytes(&summary)?)?;
    println!(
        "accuracy {:.4}  mAP {:.4} (macro {:.4})  P@N {:.4}  R@N {:.4}  F1@N {:.4}",
        r.accuracy, r.retrieval.map_micro, r.retrieval.map_macro, r.retrieval.p_at_n, r.retrieval.r_at_n, r.retrieval.f1_at_n
    );
    Ok(0)
}

fn jitter(run: &mut Run, a: &JitterArgs) -> Result<i32> {
    if a.sigma.iter().any(|s| !(*s >= 0.0)) {
        return Err(param_err!("σ must be non-negative"));
    }
    let (model, manifest) = load_checkpoint(&a.ckpt)?;
    let exp = experiment_of(&manifest)?;
    let d = &exp.data;
    let data = make_dataset(d.classes, d.n_train, d.n_test, d.mode, d.seed)?;
    let mut csv = String::from("sigma_deg,accuracy,map\n");
    for (s, r) in pose_jitter_eval(&model, &data.test, &exp.render, &a.sigma, run.cli.seed)? {
        println!("σ = {s:>5.1}°  accuracy {:.4}  mAP {:.4}", r.accuracy, r.retrieval.map_micro);
        csv.push_str(&format!("{s},{},{}\n", r.accuracy, r.retrieval.map_micro));
    }
    run.write(&a.out, csv)?;
    Ok(0)
}

fn viz(run: &mut Run, a: &VizArgs) -> Result<i32> {
    let (model, manifest) = load_checkpoint(&a.ckpt)?;
    let exp = experiment_of(&manifest)?;
    let d = &exp.data;
    let data = make_dataset(d.classes, d.n_train, d.n_test, d.mode, d.seed)?;
    let inst = data.test.get(a.instance).ok_or_else(|| param_err!("test split has {} objects", data.test.len()))?;
    let depth = model.cfg.head_widths.len();
    if a.layer > depth {
        return Err(param_err!("model has {depth} head layers; --layer must be in 0..={depth}"));
    }
    let views = crate::mvnet::train::instance_views(inst, model.camera().poses(), &exp.render, None)?;
    let mut tape = Tape::new();
    let f = model.forward(&mut tape, &views, 1, None)?;
    let var = if a.layer == 0 { f.assembled } else { f.layers[a.layer - 1] };
    let t = tape.value(var);
    let (rows, c) = (t.dim(1), t.dim(2));
    let feats = t.clone().reshape(&[rows, c])?;
    let mesh = match model.camera().space() {
        ViewSpace::HSpace(h) if a.layer == 0 => hspace_mesh(h.kind())?,
        space if space.group().name() == GroupName::Icosahedral && rows == 60 => pentakis_mesh(space.group())?,
        _ => return Err(param_err!("only icosahedral feature maps can be drawn")),
    };
    let colors = if c >= 3 { pca_rgb(&feats, 0..c)? } else { vec![[0.5; 3]; rows] };
    let path = run.write(&a.out, ply_string(&mesh, &colors)?)?;
    println!("wrote {} ({} faces, layer {})", path.display(), mesh.faces.len(), a.layer);
    Ok(0)
}
