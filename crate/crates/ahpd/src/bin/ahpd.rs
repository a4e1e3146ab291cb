//! Command-line front end: steady solves, sweeps, transient scenarios,
//! linearization and comparison runs, all driven by scenario files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ahpd::harness::{
    parse_quantity, run_scenario, steady_sweep, write_run_csv, write_sweep_csv, RunTable,
    Scenario, VariantSel,
};
use ahpd::linearize::linearize;
use ahpd::model::{Model, ModelParams, Variant};
use ahpd::props::{validate_params, PropertyParams};
use ahpd::solver::{check_index_one, solve_steady_state, SolverOptions};
use ahpd::{AhpdError, Result};

#[derive(Parser)]
#[command(name = "ahpd", about = "Absorption heat pump simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Output directory; created if missing.
    #[arg(short, long)]
    out: PathBuf,
    /// Model parameter file (TOML); defaults otherwise.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Run only these variants (overrides the scenario's list).
    #[arg(long = "variant")]
    variants: Vec<String>,
    /// Integration step override, e.g. "0.5 s".
    #[arg(long)]
    dt: Option<String>,
    /// Newton tolerance override (scaled residual norm).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the steady state at the scenario's initial inputs.
    Steady(Common),
    /// Sweep one input channel over a list of values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Input channel to sweep.
        #[arg(long)]
        axis: String,
        /// Comma-separated quantity list, e.g. "70 °C,80 °C,90 °C".
        #[arg(long)]
        values: String,
    },
    /// Integrate the scenario's input schedule over time.
    Simulate(Common),
    /// Linearize at the scenario's initial steady state and export the
    /// state-space model.
    Linearize(Common),
    /// Run the scenario and write the comparison report (against the
    /// referenced measurement, or model-vs-model).
    Compare(Common),
}

fn load_setup(common: &Common) -> Result<(Scenario, ModelParams, PropertyParams)> {
    let mut scenario = Scenario::load(&common.scenario)?;
    if !common.variants.is_empty() {
        scenario.variants = common
            .variants
            .iter()
            .map(|s| s.parse::<VariantSel>())
            .collect::<Result<_>>()?;
    }
    if let Some(dt) = &common.dt {
        let (v, dim) = parse_quantity(dt)?;
        if dim != ahpd::harness::Dim::Time || !(v > 0.0) {
            return Err(AhpdError::InvalidInput(format!("bad --dt '{dt}'")));
        }
        scenario.dt = v;
    }
    let mp = match &common.params {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                AhpdError::Io(std::io::Error::other(format!("{}: {e}", path.display())))
            })?;
            let mp: ModelParams = toml::from_str(&text).map_err(|e| AhpdError::Schema {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            mp.validate()?;
            mp
        }
        None => ModelParams::default(),
    };
    let pp = PropertyParams::default();
    Ok((scenario, mp, pp))
}

fn solver_options(common: &Common) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if let Some(tol) = common.tol {
        opts.tol = tol;
    }
    opts
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| AhpdError::Io(std::io::Error::other(format!("{}: {e}", dir.display()))))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| AhpdError::Io(std::io::Error::other(format!("{}: {e}", path.display()))))
}

/// Every run writes the parameter notes: which coefficient corrections the
/// validation pass adopted relative to the raw correlation tables.
fn write_provenance(dir: &Path) -> Result<()> {
    let (_, report) = validate_params(&PropertyParams::raw());
    write_text(&dir.join("params_provenance.txt"), &report.render())
}

fn cmd_steady(common: &Common) -> Result<()> {
    let (scenario, mp, pp) = load_setup(common)?;
    ensure_out(&common.out)?;
    write_provenance(&common.out)?;
    let opts = solver_options(common);
    let mut report = String::new();
    for sel in &scenario.variants {
        let variant = sel.nonlinear().ok_or_else(|| {
            AhpdError::InvalidInput("steady applies to the nonlinear variants".into())
        })?;
        let model = Model::new(variant, &mp, &pp);
        let sp = solve_steady_state(&model, &scenario.u0, None, &opts)?;
        check_index_one(&model, &sp.x, &sp.z, &sp.u)?;
        let run = RunTable {
            variant: variant.as_str().to_string(),
            times: vec![0.0],
            inputs: vec![sp.u],
            outputs: vec![sp.y],
            clamped: sp.report.clamped,
        };
        write_run_csv(&run, &common.out.join(format!("steady_{}.csv", variant.as_str())))?;
        report.push_str(&format!(
            "{}: converged in {} iterations, scaled residual {:.3e}\n  Q_G {:.1} W, Q_AC {:.1} W, Q_E {:.1} W\n",
            variant.as_str(),
            sp.report.iterations,
            sp.report.residual,
            sp.y.qdot_g,
            sp.y.qdot_ac,
            sp.y.qdot_e,
        ));
    }
    write_text(&common.out.join("steady_report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

fn cmd_sweep(common: &Common, axis: &str, values: &str) -> Result<()> {
    let (scenario, mp, pp) = load_setup(common)?;
    ensure_out(&common.out)?;
    write_provenance(&common.out)?;
    let mut parsed = Vec::new();
    for tok in values.split(',') {
        let (v, dim) = parse_quantity(tok)?;
        let want = ahpd::harness::channel_dim(axis)?;
        if dim != want {
            return Err(AhpdError::Unit(format!(
                "sweep value '{tok}' does not match channel '{axis}'"
            )));
        }
        parsed.push(v);
    }
    let table = steady_sweep(axis, &parsed, &scenario.u0, &scenario.variants, &mp, &pp)?;
    let failed: Vec<String> = table
        .outputs
        .iter()
        .zip(&table.variants)
        .flat_map(|(col, v)| {
            col.iter()
                .enumerate()
                .filter_map(move |(k, r)| r.as_ref().err().map(|e| format!("{v}@{k}: {e}")))
        })
        .collect();
    write_sweep_csv(&table, &common.out.join("sweep.csv"))?;
    if !failed.is_empty() {
        return Err(AhpdError::InvalidInput(format!(
            "sweep points failed: {}",
            failed.join("; ")
        )));
    }
    println!("sweep over {axis}: {} points, {} variants", parsed.len(), table.variants.len());
    Ok(())
}

fn cmd_simulate(common: &Common, report_only: bool) -> Result<()> {
    let (scenario, mp, pp) = load_setup(common)?;
    ensure_out(&common.out)?;
    write_provenance(&common.out)?;
    let result = run_scenario(&scenario, &mp, &pp)?;
    for run in &result.runs {
        write_run_csv(run, &common.out.join(format!("run_{}.csv", run.variant)))?;
    }
    let rendered = result.report.render();
    write_text(&common.out.join("report.txt"), &rendered)?;
    if report_only {
        print!("{rendered}");
    } else {
        println!(
            "scenario '{}': {} variants written to {}",
            scenario.name,
            result.runs.len(),
            common.out.display()
        );
    }
    if !result.report.failures.is_empty() {
        return Err(AhpdError::InvalidInput(format!(
            "variants failed: {:?}",
            result.report.failures
        )));
    }
    Ok(())
}

fn cmd_linearize(common: &Common) -> Result<()> {
    let (scenario, mp, pp) = load_setup(common)?;
    ensure_out(&common.out)?;
    write_provenance(&common.out)?;
    let model = Model::new(Variant::BaseA, &mp, &pp);
    let sp = solve_steady_state(&model, &scenario.u0, None, &solver_options(common))?;
    let ss = linearize(&model, &sp)?;
    write_text(&common.out.join("statespace.txt"), &ss.to_delimited())?;
    let mut eigs = ss.eigenvalues();
    eigs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut report = String::from("eigenvalues of A (re, im):\n");
    for (re, im) in &eigs {
        report.push_str(&format!("  {re:+.6e} {im:+.6e}\n"));
    }
    report.push_str(&format!("hurwitz: {}\n", ss.is_hurwitz(0.0)));
    write_text(&common.out.join("linearize_report.txt"), &report)?;
    print!("{report}");
    if !ss.is_hurwitz(0.0) {
        return Err(AhpdError::InvalidInput(
            "linearized model is not stable at this anchor".into(),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Steady(c) => cmd_steady(c),
        Command::Sweep {
            common,
            axis,
            values,
        } => cmd_sweep(common, axis, values),
        Command::Simulate(c) => cmd_simulate(c, false),
        Command::Compare(c) => cmd_simulate(c, true),
        Command::Linearize(c) => cmd_linearize(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
