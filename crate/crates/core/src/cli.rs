//! The `ldg` command line.
//!
//! Exit codes: 0 success, 1 usage, configuration or I/O error, 2 a solve
//! did not converge (artifacts are still written), 3 analysis anomaly.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::defect::{analyze_defect, circulation, scaling_fit, write_defect_report, DEFECT_HEADER};
use crate::field::{EnergyFunctional, TensorField};
use crate::minimizer::{continuation_sweep, solve, write_trace, SolveResult};
use crate::psi::{recover_psi, write_psi_field, write_psi_report};
use crate::selftest::{loop_length_estimate, run_checks};
use crate::snapshot::{read_snapshot, write_snapshot};
use crate::tensor::Linear;
use crate::AnalysisError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_ANOMALY: i32 = 3;

/// Accepted range of the fitted energy slope, `[0.85, 1.15] * pi/2`.
pub const SLOPE_BAND: (f64, f64) = (
    0.85 * std::f64::consts::FRAC_PI_2,
    1.15 * std::f64::consts::FRAC_PI_2,
);

pub const SCALING_HEADER: &str = "eps,energy,potential_mass,slope_so_far";

#[derive(Debug, Parser)]
#[command(
    name = "ldg",
    version,
    about = "Landau-de Gennes minimization and defect analysis"
)]
pub struct Cli {
    /// Suppress progress output on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize at a single epsilon.
    Solve(RunArgs),
    /// Continuation sweep over `eps_list` with a scaling summary.
    Sweep(RunArgs),
    /// Defect and stream-function analysis of a saved snapshot.
    Analyze(AnalyzeArgs),
    /// Run the built-in oracle checks.
    Selftest {
        #[arg(long, hide = true, default_value_t = 1.0)]
        tol_scale: f64,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Failure(i32, String);

impl Failure {
    fn usage(msg: impl std::fmt::Display) -> Self {
        Failure(EXIT_USAGE, msg.to_string())
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let quiet = cli.quiet;
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a, quiet),
        Command::Sweep(a) => cmd_sweep(&a, quiet),
        Command::Analyze(a) => cmd_analyze(&a, quiet),
        Command::Selftest { tol_scale } => Ok(cmd_selftest(tol_scale, quiet)),
    };
    match result {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            eprintln!("ldg: {msg}");
            code
        }
    }
}

fn load(config: &Path, out: &Option<PathBuf>) -> Result<(RunConfig, PathBuf), Failure> {
    let cfg = RunConfig::load(config)
        .map_err(|e| Failure::usage(format!("{}: {e}", config.display())))?;
    let dir = out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    fs::create_dir_all(&dir)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
    Ok((cfg, dir))
}

fn write_csv(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), Failure> {
    let err = |e: std::io::Error| Failure::usage(format!("cannot write {}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    body(&mut w).and_then(|_| w.flush()).map_err(err)
}

fn save_field(field: &TensorField, path: &Path) -> Result<(), Failure> {
    write_snapshot(field, path).map_err(Failure::usage)
}

fn cmd_solve(args: &RunArgs, quiet: bool) -> Result<i32, Failure> {
    let (cfg, dir) = load(&args.config, &args.out)?;
    let mask = cfg.mask().map_err(Failure::usage)?;
    let res = solve(&mask, &cfg.solve_config(), &cfg.init_mode()).map_err(Failure::usage)?;
    save_field(&res.field, &dir.join("snapshot.csv"))?;
    write_csv(&dir.join("trace.csv"), |w| {
        write_trace(&res.energy_trace, w)
    })?;
    if !quiet {
        println!(
            "eps={} energy={:.10} iterations={} converged={}",
            res.final_eps,
            res.energy.total(),
            res.iterations,
            res.converged
        );
    }
    Ok(if res.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn snapshot_name(eps: f64) -> String {
    format!("snapshot_eps{eps}.csv")
}

fn cmd_sweep(args: &RunArgs, quiet: bool) -> Result<i32, Failure> {
    let (cfg, dir) = load(&args.config, &args.out)?;
    if cfg.eps_list.len() < 3 {
        return Err(Failure::usage(format!(
            "a sweep needs at least 3 eps values for the scaling fit, got {}",
            cfg.eps_list.len()
        )));
    }
    let mask = cfg.mask().map_err(Failure::usage)?;
    let results =
        continuation_sweep(&mask, &cfg.sweep_config(), &cfg.init_mode()).map_err(Failure::usage)?;
    for r in &results {
        save_field(&r.field, &dir.join(snapshot_name(r.final_eps)))?;
    }
    let trace: Vec<_> = results
        .iter()
        .flat_map(|r| r.energy_trace.iter().copied())
        .collect();
    write_csv(&dir.join("trace.csv"), |w| write_trace(&trace, w))?;

    let samples: Vec<(f64, f64)> = results
        .iter()
        .map(|r| (r.final_eps, r.energy.total()))
        .collect();
    let slopes: Vec<f64> = (1..=samples.len())
        .map(|k| {
            scaling_fit(&samples[..k])
                .map(|f| f.slope)
                .unwrap_or(f64::NAN)
        })
        .collect();
    write_csv(&dir.join("scaling.csv"), |w| {
        write_scaling(&results, &slopes, w)
    })?;

    let slope = *slopes.last().unwrap();
    if !quiet {
        for (r, s) in results.iter().zip(&slopes) {
            println!(
                "eps={} energy={:.10} potential_mass={:.6} converged={} slope_so_far={s:.4}",
                r.final_eps,
                r.energy.total(),
                r.energy.potential_mass,
                r.converged
            );
        }
    }
    if results.iter().any(|r| !r.converged) {
        return Ok(EXIT_NOT_CONVERGED);
    }
    if !(slope >= SLOPE_BAND.0 && slope <= SLOPE_BAND.1) {
        eprintln!(
            "ldg: fitted slope {slope:.4} outside [{:.4}, {:.4}]",
            SLOPE_BAND.0, SLOPE_BAND.1
        );
        return Ok(EXIT_ANOMALY);
    }
    Ok(EXIT_OK)
}

fn write_scaling(
    results: &[SolveResult],
    slopes: &[f64],
    w: &mut impl Write,
) -> std::io::Result<()> {
    writeln!(w, "{SCALING_HEADER}")?;
    for (r, s) in results.iter().zip(slopes) {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            r.final_eps,
            r.energy.total(),
            r.energy.potential_mass,
            s
        )?;
    }
    Ok(())
}

fn anomaly(e: AnalysisError) -> Failure {
    Failure(EXIT_ANOMALY, e.to_string())
}

fn cmd_analyze(args: &AnalyzeArgs, quiet: bool) -> Result<i32, Failure> {
    let (cfg, dir) = load(&args.config, &args.out)?;
    let mask = cfg.mask().map_err(Failure::usage)?;
    let field = read_snapshot(&args.snapshot, &mask).map_err(Failure::usage)?;
    let energy = EnergyFunctional::with_potential(cfg.eps, cfg.potential).value(&field);
    let defect_path = dir.join("defect.csv");
    let report = match analyze_defect(&field, cfg.eps, energy, &cfg.analysis_radii()) {
        Ok(r) => r,
        Err(e) => {
            write_csv(&defect_path, |w| writeln!(w, "{DEFECT_HEADER}"))?;
            return Err(anomaly(e));
        }
    };
    write_csv(&defect_path, |w| {
        write_defect_report(std::slice::from_ref(&report), w)
    })?;

    let lam = circulation(&field, report.core, 0.5 * cfg.radius).map_err(anomaly)?;
    let psi = recover_psi(&field, report.core, lam).map_err(anomaly)?;
    let h = mask.grid().h;
    write_csv(&dir.join("psi_report.csv"), |w| {
        write_psi_report(&[(cfg.eps, &psi)], h, w)
    })?;
    write_csv(&dir.join("psi_field.csv"), |w| write_psi_field(&psi.psi, w))?;
    if !quiet {
        println!(
            "core=({:.4}, {:.4}) peak={:.4} energy={:.10}",
            report.core[0], report.core[1], report.peak_dist_to_p, energy
        );
        for ((r, l), (_, xi)) in report
            .circulation_by_radius
            .iter()
            .zip(&report.xi_by_radius)
        {
            println!("r={r:.3} |Lambda|={:.6} xi={xi:.6}", l.norm());
        }
        println!(
            "psi: cmc_residual_l1={:.4e} sup_norm={:.4e} z_l2={:.4e} core_gradient={:.4e}",
            psi.cmc_residual_l1, psi.sup_norm, psi.z_l2, psi.core_gradient
        );
    }
    Ok(EXIT_OK)
}

fn cmd_selftest(tol_scale: f64, quiet: bool) -> i32 {
    let checks = run_checks(tol_scale);
    let all = checks.iter().all(|c| c.passed);
    if !quiet {
        println!(
            "{:<46} {:>12} {:>12}  result",
            "check", "value", "tolerance"
        );
        for c in &checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            println!(
                "{:<46} {:>12.3e} {:>12.3e}  {verdict}",
                c.name, c.value, c.tolerance
            );
        }
        println!("loop length estimate: {:.6}", loop_length_estimate());
    }
    if all {
        EXIT_OK
    } else {
        EXIT_ANOMALY
    }
}
