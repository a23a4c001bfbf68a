use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracture_qs::config::RunConfig;
use fracture_qs::evolution::Evolution;
use fracture_qs::harness::refine_study;
use fracture_qs::io::{self, OutputLock};
use fracture_qs::oracle::{verify_trajectory, BarOracle};
use fracture_qs::Error;

/// Steps between periodic checkpoints.
const CHECKPOINT_EVERY: usize = 10;

#[derive(Parser)]
#[command(name = "fracture-qs", version, about = "Quasi-static brittle fracture evolutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one evolution and write ledger, trajectory, checkpoint and snapshot.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Time-refinement study over dyadic levels.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        levels: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form reference solutions.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Audit a trajectory and its ledger against a configuration.
    Verify {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Bar under a ramp: prints the crack time and sampled energies.
    Bar {
        #[arg(long = "L")]
        length: f64,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        rate: f64,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long, default_value_t = 11)]
        samples: usize,
    },
}

enum Failure {
    Usage(String),
    Invariant(String),
    NonConvergence(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Invariant(_) => 2,
            Failure::NonConvergence(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Invariant(m) | Failure::NonConvergence(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Invariant(_) => Failure::Invariant(m),
            Error::NonConvergence { .. } => Failure::NonConvergence(m),
            Error::Io(_) | Error::Parse { .. } | Error::Version { .. } | Error::Locked(_) => {
                Failure::Io(m)
            }
            _ => Failure::Usage(m),
        }
    }
}

/// Configuration problems are usage errors, including syntax errors.
fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(|e| match e {
        Error::Io(_) => Failure::Io(format!("{}: {e}", path.display())),
        other => Failure::Usage(format!("{}: {other}", path.display())),
    })
}

fn run(config: &Path, out: &Path, resume: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let problem = cfg.problem()?;
    let _lock = OutputLock::acquire(out)?;
    let mut ev = match resume {
        Some(cp) => Evolution::from_checkpoint(&problem, io::read_checkpoint(cp)?)?,
        None => Evolution::new(&problem, cfg.grid(0)?)?,
    };
    let checkpoint = out.join("checkpoint.json");
    let mut since = 0;
    loop {
        match ev.step() {
            Ok(true) => {
                since += 1;
                if since == CHECKPOINT_EVERY {
                    io::write_checkpoint(&checkpoint, &ev.checkpoint())?;
                    since = 0;
                }
            }
            Ok(false) => break,
            Err(e) => {
                // Keep the last good state for --resume.
                io::write_checkpoint(&checkpoint, &ev.checkpoint())?;
                return Err(e.into());
            }
        }
    }
    io::write_checkpoint(&checkpoint, &ev.checkpoint())?;
    let traj = ev.trajectory();
    io::write_ledger(&out.join("ledger.csv"), &traj.ledger)?;
    io::write_trajectory(&out.join("trajectory.jsonl"), &problem.mesh, &traj.knots)?;
    let last = traj.knots.last().expect("an evolution has a first knot");
    io::write_vtk(&out.join("final.vtk"), &problem.mesh, last)?;
    let row = traj.ledger.last().expect("ledger matches knots");
    match traj.first_growth() {
        Some(k) => println!("crack grows at t = {}", traj.knots[k].t),
        None => println!("crack does not grow"),
    }
    println!(
        "t = {}: bulk {} surface_c {} total {} work {}",
        row.t, row.bulk, row.surface_c, row.total, row.work_cum
    );
    Ok(())
}

fn sweep(config: &Path, levels: u32, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let problem = cfg.problem()?;
    let _lock = OutputLock::acquire(out)?;
    let base = cfg.grid(0)?.steps();
    let study = refine_study(&problem, cfg.load.horizon, base, levels)?;
    io::write_study(&out.join("study.csv"), &study.rows())?;
    let rates = study.rates();
    io::write_rates(&out.join("rates.csv"), &rates)?;
    for lv in &study.levels {
        io::write_ledger(&out.join(format!("ledger_l{}.csv", lv.level)), &lv.trajectory.ledger)?;
    }
    for r in &rates {
        match r.rate {
            Some(rate) => println!("level {} dt {} residual {} rate {rate}", r.level, r.dt, r.residual),
            None => println!("level {} dt {} residual {}", r.level, r.dt, r.residual),
        }
    }
    Ok(())
}

fn oracle(which: OracleCommand) -> Result<(), Failure> {
    let OracleCommand::Bar {
        length,
        kappa,
        rate,
        horizon,
        samples,
    } = which;
    let o = BarOracle::new(length, kappa, rate, horizon)?;
    if samples < 2 {
        return Err(Failure::Usage("--samples must be at least 2".into()));
    }
    match o.crack_time() {
        Some(t) => println!("# crack_time = {t}"),
        None => println!("# crack_time = none"),
    }
    println!("t,bulk,surface_c,total");
    for k in 0..samples {
        let t = horizon * k as f64 / (samples - 1) as f64;
        let (b, s) = o.energies(t);
        println!("{t},{b},{s},{}", b + s);
    }
    Ok(())
}

fn verify(traj: &Path, ledger: &Path, config: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let problem = cfg.problem()?;
    let (header, trajectory) = io::load_run(traj, ledger)?;
    if header.nodes != problem.mesh.node_count() || header.bonds != problem.mesh.bond_count() {
        return Err(Failure::Invariant(format!(
            "trajectory mesh ({} nodes, {} bonds) does not match the configuration ({}, {})",
            header.nodes,
            header.bonds,
            problem.mesh.node_count(),
            problem.mesh.bond_count()
        )));
    }
    let report = verify_trajectory(&problem, &trajectory)?;
    for c in &report.checks {
        if c.passed {
            println!("PASS {}", c.name);
        } else {
            println!("FAIL {}: {}", c.name, c.detail);
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Invariant("trajectory failed verification".into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = io::install_thread_cap() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Run {
            config,
            out,
            resume,
        } => run(&config, &out, resume.as_deref()),
        Command::Sweep {
            config,
            levels,
            out,
        } => sweep(&config, levels, &out),
        Command::Oracle { which } => oracle(which),
        Command::Verify {
            traj,
            ledger,
            config,
        } => verify(&traj, &ledger, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
