//! Command-line entry points. Usage errors exit with 2, runtime failures with 1.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use emotive_core::evaluation::plot::{learning_curves_svg, per_emotion_svg};
use emotive_core::evaluation::report::{
    read_csv, summarize, write_results, MetricsRow, PerEmotionRow, METRICS_CSV, PER_EMOTION_CSV,
};
use emotive_core::evaluation::{run_experiment, ConfigFile, ExperimentOutput};
use emotive_core::sim::{render_frames, Trajectory, RENDER_HZ};

use crate::api::{router, vad_body, AppState, JobMode};
use crate::session::SessionConfig;
use crate::store::Store;

pub const FIG4: &str = "fig4.svg";
pub const FIG5: &str = "fig5.svg";

#[derive(Parser, Debug)]
#[command(name = "emotive", version, about = "Emotive motion style learning: experiments, sessions and the labeling service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulated experiments
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Live labeling sessions on disk
    #[command(subcommand)]
    Session(SessionCmd),
    /// Run the HTTP service
    Serve {
        #[arg(long, env = "EMOTIVE_PORT", default_value_t = 8080)]
        port: u16,
        #[command(flatten)]
        data: DataDir,
    },
    /// Resolve text to a VAD value
    Vad { text: String },
    /// Interpolate a trajectory file into playback frames
    Render {
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum ExperimentCmd {
    /// Run a config and write results/<id>/
    Run {
        config: PathBuf,
        #[arg(long, default_value = "results")]
        results_dir: PathBuf,
    },
    /// Redraw the figures of results/<id>/
    Plot {
        exp_id: String,
        #[arg(long, default_value = "results")]
        results_dir: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct DataDir {
    #[arg(long, env = "EMOTIVE_DATA_DIR", default_value = "emotive-data")]
    pub data_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum SessionCmd {
    /// Create a session and generate its first round of queries
    New {
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
        #[arg(long = "B", default_value_t = 20)]
        b: usize,
        #[arg(long = "N", default_value_t = 6)]
        n: usize,
        #[arg(long = "M", default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// defaults to a name derived from the other flags
        #[arg(long)]
        request_id: Option<String>,
        #[command(flatten)]
        data: DataDir,
    },
    /// Print a session's status
    Status {
        id: String,
        #[command(flatten)]
        data: DataDir,
    },
    /// Write the full session state as JSON
    Export {
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        data: DataDir,
    },
}

/// Parses and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
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
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn execute(cmd: Command) -> CliResult {
    match cmd {
        Command::Experiment(ExperimentCmd::Run { config, results_dir }) => experiment_run(&config, &results_dir),
        Command::Experiment(ExperimentCmd::Plot { exp_id, results_dir }) => experiment_plot(&results_dir.join(exp_id)),
        Command::Session(cmd) => session(cmd),
        Command::Serve { port, data } => serve(port, &data.data_dir),
        Command::Vad { text } => {
            let v = vad_body(&text);
            if v["found"] == true {
                let a = &v["vad"];
                println!("{} {} {}", a[0], a[1], a[2]);
                println!("matched: {}", v["matched"].as_array().map(|m| m.iter().filter_map(|x| x.as_str()).collect::<Vec<_>>().join(" ")).unwrap_or_default());
                Ok(())
            } else {
                Err(format!("no lexicon word found in {text:?}").into())
            }
        }
        Command::Render { trajectory, out } => {
            let traj: Trajectory<f64> = serde_json::from_str(&fs::read_to_string(&trajectory)?)?;
            traj.validate(f64::INFINITY, (2, usize::MAX))?;
            let frames = render_frames(&traj, RENDER_HZ);
            fs::write(&out, serde_json::to_string(&serde_json::json!({ "fps": RENDER_HZ, "frames": frames }))?)?;
            println!("{} frames -> {}", frames.len(), out.display());
            Ok(())
        }
    }
}

/// Runs every cell of the config and writes CSVs and figures.
pub fn experiment_run(config: &Path, results_dir: &Path) -> CliResult {
    let cfg = ConfigFile::from_json(&fs::read_to_string(config)?)?;
    let mut all = ExperimentOutput::default();
    for cell in cfg.cells() {
        eprintln!("running {} N={} over {} seeds", cell.method.name(), cell.n, cell.seeds.len());
        all.extend(run_experiment(&cell)?);
    }
    let dir = results_dir.join(cfg.id());
    write_results(&dir, &all)?;
    experiment_plot(&dir)?;
    for f in &all.failures {
        eprintln!("seed {} of {} N={} failed at {}: {}", f.seed, f.method.name(), f.n, f.stage, f.message);
    }
    println!("{}", dir.display());
    if !all.failures.is_empty() {
        return Err(format!("{} seed(s) failed; see failures.csv", all.failures.len()).into());
    }
    Ok(())
}

pub fn experiment_plot(dir: &Path) -> CliResult {
    let rows: Vec<MetricsRow> = read_csv(&dir.join(METRICS_CSV))?;
    let per: Vec<PerEmotionRow> = read_csv(&dir.join(PER_EMOTION_CSV))?;
    fs::write(dir.join(FIG4), learning_curves_svg(&summarize(&rows)))?;
    fs::write(dir.join(FIG5), per_emotion_svg(&per))?;
    Ok(())
}

fn session(cmd: SessionCmd) -> CliResult {
    match cmd {
        SessionCmd::New { k, b, n, m, seed, request_id, data } => {
            let store = Store::open(&data.data_dir)?;
            let rid = request_id.unwrap_or_else(|| format!("cli-K{k}-B{b}-N{n}-M{m}-seed{seed}"));
            let (h, _) = store.create(SessionConfig::new(k, b, n, m, seed), &rid)?;
            h.run_pending_job()?;
            let s = h.snapshot();
            println!("{}", serde_json::json!({ "session_id": s.id, "status": s.status, "round": s.rounds.len() }));
            Ok(())
        }
        SessionCmd::Status { id, data } => {
            let store = Store::open(&data.data_dir)?;
            let s = store.get(&id)?.snapshot();
            let m = s.metrics();
            println!("{}", serde_json::to_string_pretty(&serde_json::json!({
                "session_id": s.id,
                "status": s.status,
                "round": s.rounds.len(),
                "rounds_total": s.config.k,
                "labels": m.labels,
                "metrics": m,
            }))?);
            Ok(())
        }
        SessionCmd::Export { id, out, data } => {
            let store = Store::open(&data.data_dir)?;
            let text = serde_json::to_string_pretty(&*store.get(&id)?.snapshot())?;
            match out {
                Some(p) => fs::write(p, text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
    }
}

fn serve(port: u16, data_dir: &Path) -> CliResult {
    let store = Arc::new(Store::open(data_dir)?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let state = AppState::new(store, JobMode::Background);
        state.resume_jobs();
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}
