//! `dgocp`: convergence studies, single-level field exports, and a selftest.
//!
//! Exit codes: 0 success, 1 property or runtime failure, 2 PDAS did not
//! converge on some level, 3 bad configuration.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use dgocp_core::pdas::PdasOptions;
use dgocp_core::selftest::{run_selftest, SelftestOptions};
use dgocp_core::study::{
    export_fields, latest_cached_reference, load_or_build_reference, needs_reference, problem_by_name, reference_level,
    run_convergence, solve_nested, study_row,
};
use dgocp_core::{Error, ProblemSpec, ReferenceField};

use config::Config;

#[derive(Debug, Parser)]
#[command(name = "dgocp", version, about = "DG optimal control with state constraints")]
struct Args {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// square, lshape-uniform, or lshape-graded.
    #[arg(long)]
    problem: Option<String>,
    /// Inclusive level range, e.g. 1..6.
    #[arg(long)]
    levels: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Export the fields of one level instead of running a study.
    #[arg(long)]
    single: Option<usize>,
    /// Directory for cached psi_s references.
    #[arg(long)]
    reference_cache: Option<PathBuf>,
    /// Run the property battery and exit.
    #[arg(long)]
    selftest: bool,
    /// Penalty used by the selftest coercivity check.
    #[arg(long, hide = true, default_value_t = 6.0)]
    selftest_sigma: f64,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] Error),
    #[error("selftest failed")]
    Selftest,
    #[error("PDAS did not converge on level(s) {0:?}")]
    NotConverged(Vec<usize>),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Core(
                Error::InvalidParameter(_)
                | Error::InvalidGrading { .. }
                | Error::UnsupportedDomain(_)
                | Error::Coefficients(_)
                | Error::MissingReference(_),
            ) => 3,
            CliError::NotConverged(_) => 2,
            CliError::Core(_) | CliError::Selftest => 1,
        }
    }
}

fn load_config(args: &Args) -> Result<Config, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            Config::from_toml(&text).map_err(CliError::Config)?
        }
        None => Config::default(),
    };
    if let Some(p) = &args.problem {
        cfg.problem.name = p.clone();
    }
    if let Some(l) = &args.levels {
        cfg.mesh.levels = l.clone();
    }
    if let Some(o) = &args.out {
        cfg.output.dir = o.clone();
    }
    if let Some(s) = args.single {
        cfg.mesh.single = Some(s);
    }
    if let Some(r) = &args.reference_cache {
        cfg.output.reference_cache = Some(r.clone());
    }
    Ok(cfg)
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("DGOCP_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("DGOCP_THREADS must be a positive integer, got '{v}'")))?;
        faer::set_global_parallelism(if n == 1 { faer::Par::Seq } else { faer::Par::rayon(n) });
    }
    Ok(())
}

fn build_problem(cfg: &Config, finest: usize) -> Result<ProblemSpec, CliError> {
    let name = cfg.problem.name.as_str();
    let reference: Option<Arc<ReferenceField>> = if needs_reference(name) {
        let level = reference_level(finest);
        eprintln!("psi_s reference: graded level {level}");
        Some(load_or_build_reference(
            Some(&cfg.output.cache_dir()),
            level,
            dgocp_core::problems::DEFAULT_MU,
        )?)
    } else {
        None
    };
    let mut p = problem_by_name(name, reference, cfg.mesh.mu).map_err(|e| match e {
        Error::InvalidParameter(m) => CliError::Config(m),
        e => CliError::Core(e),
    })?;
    if let Some(b) = cfg.problem.beta {
        p.beta = b;
    }
    if let Some(s) = cfg.problem.sigma {
        p.sigma = s;
    }
    if cfg.problem.unconstrained {
        p = p.unconstrained();
    }
    p.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(p)
}

fn pdas_options(cfg: &Config) -> PdasOptions {
    PdasOptions {
        c: cfg.solver.c,
        max_iter: cfg.solver.max_iter,
        ..Default::default()
    }
}

fn run(args: &Args) -> Result<(), CliError> {
    configure_threads()?;
    let cfg = load_config(args)?;
    if args.selftest {
        let reference = latest_cached_reference(&cfg.output.cache_dir())?;
        let rep = run_selftest(&SelftestOptions {
            sigma: args.selftest_sigma,
            reference,
        });
        println!("{rep}");
        return if rep.passed() { Ok(()) } else { Err(CliError::Selftest) };
    }
    let levels = cfg.validate().map_err(CliError::Config)?;
    let finest = cfg.mesh.single.unwrap_or(*levels.end());
    let problem = build_problem(&cfg, finest)?;
    let opts = pdas_options(&cfg);
    let dir = cfg.output.dir.join(&problem.name);
    std::fs::create_dir_all(&dir)?;

    if let Some(level) = cfg.mesh.single {
        let sol = solve_nested(&problem, level, &opts)?;
        let out = dir.join(format!("level{level}"));
        let files = export_fields(&sol, &out)?;
        let umax = sol.control.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!(
            "level {level}: {} dofs, {} PDAS iterations, {} active, max |u_h| = {umax:.4e}",
            sol.disc.mesh().num_dofs(),
            sol.pdas.iterations,
            sol.pdas.num_active()
        );
        if problem.exact.is_some() {
            let row = study_row(&sol, &problem)?;
            println!(
                "errors: L2 {:.3e}, energy {:.3e}, control {:.3e}, Linf {:.3e}",
                row.e_l2, row.e_energy, row.e_ctrl, row.e_linf
            );
        }
        for f in files {
            println!("wrote {}", f.display());
        }
        return if sol.pdas.converged {
            Ok(())
        } else {
            Err(CliError::NotConverged(vec![level]))
        };
    }

    let mut log = BufWriter::new(File::create(dir.join("pdas_log.csv"))?);
    writeln!(log, "level,iter,active,changed,residual")?;
    let report = run_convergence(&problem, levels, &opts, |sol, row| {
        eprintln!(
            "level {} done: {} dofs, {} iterations",
            row.level, row.dofs, row.iterations
        );
        for r in &sol.pdas.history {
            // logging is best effort; the tables below are the product
            let _ = writeln!(
                log,
                "{},{},{},{},{:.6e}",
                row.level, r.iteration, r.active, r.changed, r.residual
            );
        }
    })?;
    log.flush()?;
    let mut csv = BufWriter::new(File::create(dir.join("study.csv"))?);
    report.write_csv(&mut csv)?;
    csv.flush()?;
    let mut text = Vec::new();
    report.write_table(&mut text)?;
    std::fs::write(dir.join("study.txt"), &text)?;
    std::io::stdout().write_all(&text)?;
    let bad: Vec<usize> = report.rows.iter().filter(|r| !r.converged).map(|r| r.level).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::NotConverged(bad))
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dgocp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
