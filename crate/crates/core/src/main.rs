use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use resect_core::geometry::io::load_mesh_auto;
use resect_core::metrics::{format_metrics_csv, load_metrics_csv, score_trial};
use resect_core::planning::demo::{demo_fiducials, demo_plan};
use resect_core::planning::manifest::{load_plan, save_plan};
use resect_core::planning::{validate_plan, ResectionPlan};
use resect_core::registration::io::{format_result, load_fiducials, save_fiducials};
use resect_core::registration::register;
use resect_core::service::http::serve;
use resect_core::service::{GuidanceService, ServiceOptions};
use resect_core::sim::{simulate_cut_trace, Condition, CutTrace, NoiseModel};
use resect_core::stats::analyze;
use resect_core::study::{run_study, StudyConfig, DEMO_PLAN, REPORT_FILE, STATS_FILE};
use resect_core::{rng, Error, Result};

const OUT_ENV: &str = "RESECT_OUT_DIR";

#[derive(Parser)]
#[command(name = "resect", version, about = "Resection planning, registration, simulation and scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a resection plan from liver and tumor meshes (STL or PLY).
    Plan {
        #[arg(long)]
        liver: PathBuf,
        #[arg(long)]
        tumor: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        margin: f64,
        #[arg(long, env = OUT_ENV, default_value = "out")]
        out: PathBuf,
    },
    /// Fit model to measured fiducials; prints the registration record.
    Register {
        #[arg(long)]
        fiducials: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate operator traces against a plan.
    Simulate {
        /// Plan manifest, or `demo`.
        #[arg(long, default_value = DEMO_PLAN)]
        plan: String,
        #[arg(long)]
        condition: Condition,
        /// Study config supplying the operator and noise settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, env = OUT_ENV, default_value = "out")]
        out: PathBuf,
    },
    /// Score one trace; prints the CSV header and row.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = DEMO_PLAN)]
        plan: String,
        #[arg(long, default_value = "p01")]
        participant: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Paired analysis of a metrics CSV.
    Analyze {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Also write report.txt and stats.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full synthetic study.
    Study {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        participants: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, env = OUT_ENV, default_value = "out")]
        out: PathBuf,
    },
    /// Start the trial service.
    Serve {
        #[arg(long, default_value = DEMO_PLAN)]
        plan: String,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory for session event logs; replayed at startup.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the built-in demo plan and fiducials.
    Demo {
        #[arg(long, env = OUT_ENV, default_value = "out")]
        out: PathBuf,
    },
}

fn plan_arg(s: &str) -> Result<ResectionPlan> {
    if s == DEMO_PLAN {
        demo_plan()
    } else {
        let plan = load_plan(s)?;
        let report = validate_plan(&plan, plan.liver());
        if !report.all_passed() {
            return Err(Error::PlanInvalid(report.to_string()));
        }
        Ok(plan)
    }
}

fn config_arg(p: &Option<PathBuf>) -> Result<StudyConfig> {
    match p {
        Some(p) => StudyConfig::load(p),
        None => Ok(StudyConfig::default()),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io(path, e))
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Plan {
            liver,
            tumor,
            margin,
            out,
        } => {
            let liver = load_mesh_auto(&liver)?.mesh;
            let tumor = load_mesh_auto(&tumor)?.mesh;
            let outcome = ResectionPlan::build(liver, tumor, margin)?;
            let report = validate_plan(&outcome.plan, outcome.plan.liver());
            print!("{report}");
            if !report.all_passed() {
                return Err(Error::PlanInvalid(
                    report.failures().map(|c| c.name.to_string()).collect::<Vec<_>>().join(","),
                ));
            }
            let manifest = save_plan(&outcome.plan, &out)?;
            println!("manifest {}", manifest.display());
            println!("perimeter_mm {}", outcome.plan.perimeter());
        }
        Command::Register { fiducials, out } => {
            let f = load_fiducials(&fiducials)?;
            let record = format_result(&register(&f)?, f.labels());
            match out {
                Some(p) => write(&p, &record)?,
                None => print!("{record}"),
            }
        }
        Command::Simulate {
            plan,
            condition,
            config,
            seed,
            count,
            out,
        } => {
            let plan = plan_arg(&plan)?;
            let cfg = config_arg(&config)?;
            let op = cfg.condition(condition).operator(condition, 1.0, 1.0, 0.0);
            let noise = NoiseModel {
                tracker_jitter_sigma: cfg.noise.tracker_jitter_sigma_mm,
                ..NoiseModel::default()
            };
            for k in 0..count {
                let s = if count == 1 { seed } else { rng::derive_seed(seed, k as u64) };
                let trace = simulate_cut_trace(&plan, &op, &noise, s)?;
                let path = out.join(format!("trace_{condition}_{s}.txt"));
                write(&path, &trace.to_text())?;
                println!("{}", path.display());
            }
        }
        Command::Metrics {
            trace,
            plan,
            participant,
            config,
        } => {
            let trace = CutTrace::load(&trace)?;
            let plan = plan_arg(&plan)?;
            let cfg = config_arg(&config)?;
            let m = score_trial(&participant, &trace, &plan, &cfg.scoring_options()?)?;
            print!("{}", format_metrics_csv(std::slice::from_ref(&m)));
        }
        Command::Analyze { metrics, alpha, out } => {
            let rows = load_metrics_csv(&metrics)?;
            let a = analyze(&rows, alpha)?;
            print!("{}", a.report_text());
            if let Some(dir) = out {
                write(&dir.join(REPORT_FILE), &a.report_text())?;
                write(&dir.join(STATS_FILE), &a.stats_csv())?;
            }
        }
        Command::Study {
            config,
            seed,
            participants,
            workers,
            out,
        } => {
            let mut cfg = config_arg(&config)?;
            if let Some(s) = seed {
                cfg.study.seed = s;
            }
            if let Some(n) = participants {
                cfg.study.n_participants = n;
            }
            if let Some(w) = workers {
                cfg.study.workers = w;
            }
            let report = run_study(&cfg)?;
            for p in report.write(&out)? {
                println!("{}", p.display());
            }
        }
        Command::Serve {
            plan,
            addr,
            log_dir,
            config,
            seed,
        } => {
            let label = plan.clone();
            let plan = plan_arg(&plan)?;
            let cfg = config_arg(&config)?;
            let svc = GuidanceService::new(
                plan,
                label,
                ServiceOptions {
                    scoring: cfg.scoring_options()?,
                    alpha: cfg.study.alpha,
                    log_dir,
                    seed,
                    ..Default::default()
                },
            )?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| io(Path::new("tokio"), e))?;
            eprintln!("listening on http://{addr}");
            runtime
                .block_on(serve(addr, Arc::new(svc)))
                .map_err(|e| io(Path::new(&addr.to_string()), e))?;
        }
        Command::Demo { out } => {
            let manifest = save_plan(&demo_plan()?, &out)?;
            let fid = out.join("fiducials.txt");
            save_fiducials(&fid, &demo_fiducials())?;
            println!("{}", manifest.display());
            println!("{}", fid.display());
        }
    }
    Ok(())
}

fn error_line(kind: &str, message: &str) -> String {
    let escaped = message
        .trim_end()
        .replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', "\\n");
    format!("error kind={kind} message=\"{escaped}\"")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            let missing = matches!(&e, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound);
            ExitCode::from(if missing { 2 } else { 1 })
        }
    }
}
