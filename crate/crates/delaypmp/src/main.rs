use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use delaypmp::commands::{self, Outcome};
use delaypmp::config::{load_control, load_lambda, load_problem, parse_list, Loaded};
use delaypmp::CliError;
use delaypmp_core::PiecewiseFn;

/// Mayer optimal control for delay differential equations: solve, build
/// fundamental matrices, check maximum-principle certificates, probe needle
/// variations and search multipliers.
#[derive(Parser)]
#[command(name = "delaypmp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Catalog name or path to a JSON problem file.
    #[arg(long)]
    problem: String,
    /// Mesh step; overrides the problem's default.
    #[arg(long)]
    h: Option<f64>,
    /// `reference`, `const:v1,v2,...`, or a JSON control file.
    #[arg(long, default_value = "reference")]
    control: String,
    /// Directory for CSV files and report.json. Without it the primary CSV
    /// goes to stdout and the report to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the controlled equation.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Fundamental matrix of the linearization, by both routes.
    Fundamental {
        #[command(flatten)]
        common: Common,
        /// Store and write the full lower triangle X(t, s).
        #[arg(long)]
        dump_x: bool,
    },
    /// Check every first-order condition for a candidate process.
    CheckPmp {
        #[command(flatten)]
        common: Common,
        /// `search`, a comma list, or a JSON file; defaults to (1, 0, ..., 0).
        #[arg(long)]
        lambda: Option<String>,
        /// Control samples per box axis for the maximum condition.
        #[arg(long)]
        mp_grid: Option<usize>,
        /// Node stride of the sample times when searching multipliers.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Finite-difference check of needle sensitivities.
    Needle {
        #[command(flatten)]
        common: Common,
        /// `t:v1,v2,...`; repeat for several needles.
        #[arg(long = "needle", required = true)]
        needles: Vec<String>,
        /// Comma list of widths; defaults to h, 2h, ..., 32h.
        #[arg(long)]
        eps: Option<String>,
    },
    /// Search multipliers on a sampled needle family.
    SearchMultipliers {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mp_grid: Option<usize>,
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// List the built-in problems.
    Catalog,
}

fn parse_needle(s: &str) -> Result<(f64, Vec<f64>), CliError> {
    let (t, v) = s.split_once(':').ok_or_else(|| CliError::Config(format!("needle {s:?}: expected t:v1,v2,...")))?;
    let t = t.trim().parse::<f64>().map_err(|_| CliError::Config(format!("needle time {t:?} is not a number")))?;
    Ok((t, parse_list(v)?))
}

fn prepare(common: &Common) -> Result<(Loaded, PiecewiseFn), CliError> {
    let loaded = load_problem(&common.problem, common.h)?;
    let control = load_control(&common.control, &loaded)?;
    Ok((loaded, control))
}

fn run(cli: &Cli, echo: &str) -> Result<(Outcome, Option<PathBuf>), CliError> {
    let outcome = match &cli.command {
        Command::Solve { common } => {
            let (l, u) = prepare(common)?;
            (commands::cmd_solve(&l, &u, echo)?, common.out.clone())
        }
        Command::Fundamental { common, dump_x } => {
            let (l, u) = prepare(common)?;
            (commands::cmd_fundamental(&l, &u, *dump_x, echo)?, common.out.clone())
        }
        Command::CheckPmp { common, lambda, mp_grid, stride } => {
            let (l, u) = prepare(common)?;
            let lam = load_lambda(lambda.as_deref(), l.problem.terminal.len())?;
            (commands::cmd_check_pmp(&l, &u, &lam, *mp_grid, *stride, echo)?, common.out.clone())
        }
        Command::Needle { common, needles, eps } => {
            let (l, u) = prepare(common)?;
            let needles = needles.iter().map(|s| parse_needle(s)).collect::<Result<Vec<_>, _>>()?;
            let h = l.problem.mesh.h();
            let eps = match eps {
                Some(s) => parse_list(s)?,
                None => (0..6).map(|k| h * (1u32 << k) as f64).collect(),
            };
            (commands::cmd_needle(&l, &u, &needles, &eps, echo)?, common.out.clone())
        }
        Command::SearchMultipliers { common, mp_grid, stride } => {
            let (l, u) = prepare(common)?;
            (commands::cmd_search_multipliers(&l, &u, *mp_grid, *stride, echo)?, common.out.clone())
        }
        Command::Catalog => unreachable!("handled before"),
    };
    Ok(outcome)
}

fn write(outcome: &mut Outcome, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for (name, contents) in &outcome.files {
                let path = dir.join(name);
                std::fs::write(&path, contents)?;
                outcome.report.outputs.push(path.display().to_string());
            }
            let path = dir.join("report.json");
            outcome.report.outputs.push(path.display().to_string());
            std::fs::write(&path, outcome.report.to_json())?;
            print!("{}", outcome.report.render());
        }
        None => {
            if let Some((_, primary)) = outcome.files.first() {
                print!("{primary}");
            }
            eprint!("{}", outcome.report.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Catalog = cli.command {
        print!("{}", commands::cmd_catalog().to_csv());
        return ExitCode::SUCCESS;
    }
    let echo = std::env::args().collect::<Vec<_>>().join(" ");
    let start = Instant::now();
    let result = run(&cli, &echo).and_then(|(mut outcome, out)| {
        outcome.report.timing_s = start.elapsed().as_secs_f64();
        write(&mut outcome, out.as_ref())?;
        Ok(outcome.status)
    });
    match result {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("delaypmp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
