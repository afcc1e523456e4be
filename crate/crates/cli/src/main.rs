mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nehari_core::io::{read_field_csv, write_field_csv, write_json, write_sweep_csv, TripleSummary};
use nehari_core::optimizer::lambda_sweep;
use nehari_core::verify::{verify_field, verify_triple, CheckReport};
use nehari_core::{Error, KIndex, Problem};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "nehari", version, about = "Sign-restricted Nehari minimizers of the critical p-Laplacian energy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize on K1, K2, K3; write u1.csv, u2.csv, u3.csv and triple.json.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fibering scale and minimized energies over `lambda-list`; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the check suite on field files, taken as u1, u2, u3 in order
    /// (default: the three files in `out-dir`).
    Verify {
        #[arg(long)]
        config: PathBuf,
        files: Vec<PathBuf>,
    },
}

/// Failure classes of the exit-code contract.
enum Failure {
    Checks,
    Run(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        match err {
            Error::Config(_) => Failure::Usage(err.to_string()),
            _ => Failure::Run(err.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve { config } => load(&config).and_then(|cfg| cmd_solve(&cfg)),
        Command::Sweep { config } => load(&config).and_then(|cfg| cmd_sweep(&cfg)),
        Command::Verify { config, files } => load(&config).and_then(|cfg| cmd_verify(&cfg, &files)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    config::load(path).map_err(Failure::Usage)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))
}

fn io_failure(err: std::io::Error) -> Failure {
    Failure::Run(format!("write failed: {err}"))
}

fn print_checks(checks: &[CheckReport]) -> bool {
    for check in checks {
        println!("{check}");
    }
    checks.iter().all(|c| c.passed)
}

fn cmd_solve(cfg: &RunConfig) -> Result<(), Failure> {
    let problem = Problem::new(cfg.solver.clone())?;
    let triple = problem.solve_three()?;
    let solutions = triple.solutions();
    let checks = verify_triple(&problem, solutions.map(|s| &s.field))?;

    for (i, solution) in solutions.iter().enumerate() {
        let mut out = create(&cfg.out_dir, &format!("u{}.csv", i + 1))?;
        write_field_csv(&problem.mesh, &solution.field, &mut out).map_err(io_failure)?;
        out.flush().map_err(io_failure)?;
    }
    let all_passed = checks.iter().all(|c| c.passed);
    let summary = TripleSummary {
        config: &problem.config,
        threshold: problem.threshold,
        reports: solutions.iter().map(|s| &s.report).collect(),
        checks: &checks,
        all_checks_passed: all_passed,
    };
    let mut out = create(&cfg.out_dir, "triple.json")?;
    write_json(&summary, &mut out)?;
    out.flush().map_err(io_failure)?;

    if print_checks(&checks) {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let lambdas = cfg
        .lambda_list
        .as_deref()
        .ok_or_else(|| Failure::Usage("sweep needs `lambda-list`".into()))?;
    let rows = lambda_sweep(&cfg.solver, lambdas)?;
    for row in &rows {
        for err in &row.errors {
            eprintln!("lambda = {}: {err}", row.lambda);
        }
    }
    let mut out = create(&cfg.out_dir, "sweep.csv")?;
    write_sweep_csv(&rows, &mut out).map_err(io_failure)?;
    out.flush().map_err(io_failure)?;
    if rows.iter().all(|r| r.all_failed()) {
        return Err(Failure::Run("every sweep row failed".into()));
    }
    Ok(())
}

fn cmd_verify(cfg: &RunConfig, files: &[PathBuf]) -> Result<(), Failure> {
    let files: Vec<PathBuf> = if files.is_empty() {
        (1..=3).map(|i| cfg.out_dir.join(format!("u{i}.csv"))).collect()
    } else {
        files.to_vec()
    };
    if files.len() > 3 {
        return Err(Failure::Usage(format!("expected at most 3 field files, got {}", files.len())));
    }
    let problem = Problem::new(cfg.solver.clone())?;
    let mut fields = Vec::with_capacity(files.len());
    for path in &files {
        let file = File::open(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        let field = read_field_csv(&problem.mesh, BufReader::new(file))
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        fields.push(field);
    }

    let checks = match fields.as_slice() {
        [u1, u2, u3] => verify_triple(&problem, [u1, u2, u3])?,
        _ => {
            let mut checks = Vec::new();
            for (u, k) in fields.iter().zip(KIndex::ALL) {
                checks.extend(verify_field(&problem, u, k)?);
            }
            checks
        }
    };
    if print_checks(&checks) {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}
