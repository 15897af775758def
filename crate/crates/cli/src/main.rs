//! `facetouch`: synthesize data, train and tune the temporal ensemble,
//! evaluate it on session logs, run streaming detection, and emit the
//! binned summaries behind the per-class motion plots.

mod config;
mod plot;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use facetouch::dataset::{
    load_session, load_trials, protocol_manifest, save_session, save_trials, session_log, synth_trials, SessionPlan,
};
use facetouch::ensemble::{
    hyperparams_for, prefix_features, read_hyperparams, train_ensemble, write_event_log, write_hyperparams,
    StreamDetector, TrainOptions, DEFAULT_FOLDS, DEFAULT_LAMBDA,
};
use facetouch::eval::{evaluate_sessions, write_f1_curve};
use facetouch::forest::{tune, Dataset, SearchSpace};
use facetouch::signal::{Resampler, StreamCsvReader};
use facetouch::{derive_seed, seeded_rng, Hyperparams, Label, PrefixSchedule, PrefixTime, PromptLog, TemporalEnsemble};

use config::RunConfig;

const TRIALS_FILE: &str = "trials.jsonl";
const SESSIONS_DIR: &str = "sessions";
const SESSION_STREAM: u64 = 0x5E55;
const TUNE_STREAM: u64 = 0x7E4E;

#[derive(Parser)]
#[command(name = "facetouch", version, about = "Face-touch detection from wrist accelerometry")]
struct Cli {
    /// Seed for every random choice; required by synth, train and tune.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with generator, session and detector settings.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training trial file and continuous participant sessions.
    Synth(SynthArgs),
    /// Train one forest per prefix instant and save the weighted ensemble.
    Train(TrainArgs),
    /// Search forest hyperparameters for each prefix instant.
    Tune(TuneArgs),
    /// Score an ensemble on session logs: recall, false-positive rate and
    /// decision instants.
    Eval(EvalArgs),
    /// Detect touches in a `t,ax,ay,az` CSV stream and write JSON-lines events.
    Detect(DetectArgs),
    /// Summarize trial windows per class in equal time bins.
    PlotBins(PlotArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory; receives trials.jsonl and sessions/P<i>/.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Number of participant sessions.
    #[arg(long, default_value_t = 3)]
    participants: usize,
    /// Override the generator's additive noise (g).
    #[arg(long)]
    noise_sigma: Option<f64>,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Comma-separated prefix instants in seconds; the last is the frame length.
    #[arg(long, default_value = "1.0,1.1,1.2,1.3,1.4,1.5")]
    schedule: String,
    /// Cross-validation folds.
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    trials: PathBuf,
    /// Output directory for the manifest and model files.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Hyperparameter table as written by `tune`; defaults to the tuned
    /// reference settings.
    #[arg(long, value_name = "FILE")]
    hyperparams: Option<PathBuf>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Weight sharpness applied to F1 differences.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long, value_name = "FILE")]
    trials: PathBuf,
    /// Output hyperparameter table (CSV).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// TOML file with candidate values per hyperparameter.
    #[arg(long, value_name = "FILE")]
    space: Option<PathBuf>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Configurations drawn in the randomized stage.
    #[arg(long, default_value_t = 60)]
    n_iter: usize,
    /// Run the grid stage over the whole space without the randomized stage.
    #[arg(long)]
    skip_random: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Ensemble directory written by `train`.
    #[arg(long, value_name = "DIR")]
    ensemble: PathBuf,
    /// Directory of session directories, each with stream.csv and prompts.csv.
    #[arg(long, value_name = "DIR")]
    sessions: PathBuf,
    /// Also score the full-window model alone.
    #[arg(long)]
    compare_full: bool,
    /// Directory for report.txt and report.toml.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long, value_name = "DIR")]
    ensemble: PathBuf,
    /// Stream CSV, or `-` for standard input.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Event log destination; standard output when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, value_name = "FILE")]
    trials: PathBuf,
    /// Output directory for bins_touch.csv and bins_no_touch.csv.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 15)]
    bins: usize,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = |name: &str| cli.seed.with_context(|| format!("`{name}` requires --seed"));
    match cli.command {
        Command::Synth(args) => synth(args, config, seed("synth")?),
        Command::Train(args) => train(args, seed("train")?),
        Command::Tune(args) => tune_cmd(args, seed("tune")?),
        Command::Eval(args) => eval(args, &config),
        // A closed downstream pipe ends detection without error.
        Command::Detect(args) => detect(args, &config).or_else(|e| match e.downcast_ref::<facetouch::Error>() {
            Some(facetouch::Error::Io(io)) if io.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            _ => Err(e),
        }),
        Command::PlotBins(args) => plot::plot_bins(&args.trials, &args.out, args.bins),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("{} is not a readable file", path.display());
    }
    Ok(())
}

fn require_dir(path: &Path) -> Result<()> {
    if !path.is_dir() {
        bail!("{} is not a directory", path.display());
    }
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn synth(args: SynthArgs, mut config: RunConfig, seed: u64) -> Result<()> {
    if let Some(sigma) = args.noise_sigma {
        config.synth.noise_sigma = sigma;
    }
    config.synth.validate()?;
    create_dir(&args.out_dir)?;

    let stubs = protocol_manifest(seed);
    let trials = synth_trials(&stubs, &config.synth, seed)?;
    save_trials(&trials, &args.out_dir.join(TRIALS_FILE))?;
    let touches = trials.iter().filter(|t| t.label() == Label::Positive).count();
    println!(
        "{TRIALS_FILE}: {} trials ({touches} touch, {} no-touch)",
        trials.len(),
        trials.len() - touches
    );

    for i in 0..args.participants {
        let name = format!("P{}", i + 1);
        let plan = SessionPlan {
            user_id: name.clone(),
            ..config.session.clone()
        };
        let mut rng = seeded_rng(derive_seed(seed, SESSION_STREAM + i as u64));
        let log = session_log(&plan, &config.synth, &mut rng)?;
        save_session(&log, &args.out_dir.join(SESSIONS_DIR).join(&name))?;
        println!(
            "{SESSIONS_DIR}/{name}: {} prompts, {:.0} s",
            log.prompts.len(),
            log.stream.len() as f64 / config.synth.rate
        );
    }
    Ok(())
}

fn load_hyperparams(path: &Option<PathBuf>, schedule: &PrefixSchedule) -> Result<BTreeMap<PrefixTime, Hyperparams>> {
    match path {
        Some(path) => {
            let table = read_hyperparams(File::open(path)?).with_context(|| format!("reading {}", path.display()))?;
            Ok(schedule
                .instants()
                .iter()
                .map(|t| {
                    table
                        .get(t)
                        .map(|hp| (*t, *hp))
                        .with_context(|| format!("{} has no row for t = {t}", path.display()))
                })
                .collect::<Result<_>>()?)
        }
        None => Ok(hyperparams_for(schedule)),
    }
}

fn train(args: TrainArgs, seed: u64) -> Result<()> {
    require_file(&args.trials)?;
    if let Some(path) = &args.hyperparams {
        require_file(path)?;
    }
    let schedule = PrefixSchedule::parse_list(&args.schedule.schedule)?;
    let hyperparams = load_hyperparams(&args.hyperparams, &schedule)?;
    create_dir(&args.out)?;

    let trials = load_trials(&args.trials).with_context(|| format!("reading {}", args.trials.display()))?;
    let options = TrainOptions {
        lambda: args.lambda,
        folds: args.schedule.folds,
        seed,
    };
    let ensemble = train_ensemble(&trials, &schedule, &hyperparams, &options)?;
    ensemble.save(&args.out)?;
    write_f1_curve(create_file(&args.out.join("f1_curve.csv"))?, &ensemble.f1)?;

    println!("{:>5}  {:>8}  {:>12}", "t", "f1", "weight");
    for (t, f1) in &ensemble.f1 {
        println!("{:>5}  {:>8.4}  {:>12.4}", t.to_string(), f1, ensemble.weights[t]);
    }
    println!("saved {} models to {}", ensemble.models.len(), args.out.display());
    Ok(())
}

fn tune_cmd(args: TuneArgs, seed: u64) -> Result<()> {
    require_file(&args.trials)?;
    let space = match &args.space {
        Some(path) => {
            require_file(path)?;
            let text = fs::read_to_string(path)?;
            toml::from_str::<SearchSpace>(&text).with_context(|| format!("reading {}", path.display()))?
        }
        None => SearchSpace::default(),
    };
    space.validate()?;
    let schedule = PrefixSchedule::parse_list(&args.schedule.schedule)?;
    let mut out = create_file(&args.out)?;

    let trials = load_trials(&args.trials).with_context(|| format!("reading {}", args.trials.display()))?;
    let labels: Vec<Label> = trials.iter().map(|t| t.label()).collect();
    let mut table = BTreeMap::new();
    for &t in schedule.instants() {
        let data = Dataset::from_features(&prefix_features(&trials, t)?, labels.clone())?;
        let seed_t = derive_seed(seed, TUNE_STREAM + u64::from(t.millis()));
        let result = tune(
            &data,
            &space,
            args.n_iter,
            args.schedule.folds,
            seed_t,
            args.skip_random,
        )?;
        eprintln!(
            "t = {t} s: mean F1 {:.4} over {} grid configurations",
            result.best.mean_f1,
            result.grid_stage.len()
        );
        table.insert(t, result.best.params);
    }
    write_hyperparams(&mut out, &table)?;
    out.flush()?;
    Ok(())
}

fn session_dirs(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).with_context(|| format!("listing {}", root.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            dirs.push((name, path));
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn eval(args: EvalArgs, config: &RunConfig) -> Result<()> {
    require_dir(&args.ensemble)?;
    require_dir(&args.sessions)?;
    let dirs = session_dirs(&args.sessions)?;
    if dirs.is_empty() {
        bail!("no session directories in {}", args.sessions.display());
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
    }

    let ensemble = TemporalEnsemble::load(&args.ensemble)?;
    let logs: Vec<(String, PromptLog)> = dirs
        .into_iter()
        .map(|(name, dir)| {
            let log = load_session(&dir)?;
            Ok((name, log))
        })
        .collect::<Result<_>>()?;
    let frames = config.frames(&ensemble)?;
    let report = evaluate_sessions(&logs, &ensemble, &frames, config.refractory, args.compare_full)?;
    let table = report.to_table();
    print!("{table}");
    if let Some(out) = &args.out {
        fs::write(out.join("report.txt"), &table)?;
        fs::write(out.join("report.toml"), report.to_toml()?)?;
    }
    Ok(())
}

fn detect(args: DetectArgs, config: &RunConfig) -> Result<()> {
    require_dir(&args.ensemble)?;
    let input: Box<dyn BufRead> = if args.input.as_os_str() == "-" {
        Box::new(io::stdin().lock())
    } else {
        require_file(&args.input)?;
        Box::new(BufReader::new(File::open(&args.input)?))
    };
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(create_file(path)?),
        None => Box::new(io::stdout().lock()),
    };

    let ensemble = TemporalEnsemble::load(&args.ensemble)?;
    let frames = config.frames(&ensemble)?;
    let mut detector = StreamDetector::new(&ensemble, &frames, config.refractory)?;
    let mut resampler = Resampler::new(ensemble.rate)?;
    let mut uniform = Vec::new();
    let mut emitted = 0;
    for sample in StreamCsvReader::new(input) {
        let sample = sample.with_context(|| format!("reading {}", args.input.display()))?;
        resampler.push(sample, &mut uniform)?;
        emitted += uniform.len();
        for s in uniform.drain(..) {
            detector.push(s)?;
        }
        let events = detector.drain_events();
        if !events.is_empty() {
            write_event_log(&mut out, &events)?;
        }
    }
    resampler.finish(emitted)?;
    out.flush()?;
    if !resampler.gaps().is_empty() {
        eprintln!(
            "warning: {} gaps longer than five sample periods",
            resampler.gaps().len()
        );
    }
    Ok(())
}
