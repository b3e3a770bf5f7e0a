use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use lochar_core::io::{
    self, correlations_from_json, correlations_to_json, CanonicalUnitaryJson, CorrelationJson,
    PhaseSolutionJson, RealMatrixJson, SettingsDataset,
};
use lochar_core::pipeline::{
    self, compare, plot_data, reconstruct_phases, reconstruct_sinkhorn, reconstruct_variance,
    simulate_dataset, PhaseOptions, PipelineConfig, Table,
};
use lochar_core::{Error, IntensityMatrix, Result, SinkhornOptions, Stage, StageExt};

/// Characterize lossy linear optical interferometers from intensity data.
///
/// Exit codes: 0 success, 2 usage or configuration error, 10 simulation,
/// 11 moduli reconstruction, 12 phase reconstruction, 13 comparison,
/// 14 plot data.
#[derive(Debug, Parser)]
#[command(name = "lochar", version)]
struct Cli {
    /// Master seed; overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Pipeline configuration (JSON). Missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if needed.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Sinkhorn,
    Variance,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the measurements of the configured device.
    Simulate,
    /// Losses and transition probabilities from intensity data.
    ReconstructModuli {
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Intensity matrix JSON (sinkhorn) or settings dataset JSON (variance).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
    },
    /// Internal phases from two-beam correlation series.
    ReconstructPhases {
        /// Directory with `series_h{h}_k{k}.csv` files.
        #[arg(long)]
        series_dir: PathBuf,
        /// JSON with the probability matrix (`p` or `entries`).
        #[arg(long)]
        moduli: PathBuf,
        #[arg(long)]
        refine: bool,
        #[arg(long, default_value_t = 0.05)]
        tol_sign: f64,
    },
    /// Simulate, reconstruct and compare against ground truth.
    Pipeline {
        /// Measure every input pair instead of the minimal set.
        #[arg(long)]
        all_pairs: bool,
        /// Record wall-clock time in the report (makes it non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Compare two reconstructions or matrices.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Correlation set JSON, for chi-square of both phase sets.
        #[arg(long)]
        correlations: Option<PathBuf>,
    },
    /// CSV data for intensity sweeps, reweighted sums and correlation curves.
    PlotData {
        #[arg(long, default_value_t = 31)]
        points: usize,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => io::read_json::<PipelineConfig>(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_value(path: &Path) -> Result<serde_json::Value> {
    io::read_json(path)
}

fn write_table(dir: &Path, name: &str, table: &Table) -> Result<()> {
    io::write_table_csv(&dir.join(name), &table.header, &table.rows)
}

fn run(cli: &Cli) -> Result<()> {
    let out = &cli.out;
    fs::create_dir_all(out)
        .map_err(Error::from)
        .stage(Stage::Config)?;
    match &cli.command {
        Command::Simulate => {
            let cfg = load_config(cli).stage(Stage::Config)?;
            let (truth, data) = simulate_dataset(&cfg)?;
            let write = || -> Result<()> {
                io::write_json(&out.join("config.json"), &cfg)?;
                io::write_json(&out.join("ground_truth.json"), &truth.document_json())?;
                if let Some(m) = &data.intensity {
                    io::write_json(&out.join("intensity_matrix.json"), &RealMatrixJson::from(m))?;
                }
                if let Some(s) = &data.settings {
                    io::write_json(&out.join("settings.json"), s)?;
                }
                for s in &data.series {
                    io::write_series_csv(&out.join(io::series_file_name(s.h, s.k)), s)?;
                }
                Ok(())
            };
            write().stage(Stage::Simulate)?;
            println!(
                "simulated {} modes, {} series -> {}",
                cfg.n,
                data.series.len(),
                out.display()
            );
        }
        Command::ReconstructModuli {
            method,
            input,
            tol,
            max_iter,
        } => {
            let run = || -> Result<()> {
                match method {
                    MethodArg::Sinkhorn => {
                        let m = io::read_json::<RealMatrixJson>(input)?.to_matrix()?;
                        let opts = SinkhornOptions {
                            tol: *tol,
                            max_iter: *max_iter,
                            ..SinkhornOptions::default()
                        };
                        let r = reconstruct_sinkhorn(&IntensityMatrix::new(m)?, &opts)?;
                        io::write_json(&out.join("moduli.json"), &r)?;
                        println!(
                            "sinkhorn: {} iterations, residual {:e}{}",
                            r.iterations,
                            r.residual,
                            if r.stalled { " (stalled)" } else { "" }
                        );
                    }
                    MethodArg::Variance => {
                        let settings: SettingsDataset = io::read_json(input)?;
                        let r = reconstruct_variance(&settings)?;
                        io::write_json(&out.join("moduli.json"), &r)?;
                        println!(
                            "variance: eigenvalue {:e}, spectral gap {:e}",
                            r.eigenvalue, r.spectral_gap
                        );
                    }
                }
                Ok(())
            };
            run().stage(Stage::Moduli)?;
        }
        Command::ReconstructPhases {
            series_dir,
            moduli,
            refine,
            tol_sign,
        } => {
            let run = || -> Result<()> {
                let p = io::matrix_document(&read_value(moduli)?)?.p;
                let series = io::read_series_dir(series_dir)?;
                if series.is_empty() {
                    return Err(Error::IncompleteData {
                        missing: Vec::new(),
                    });
                }
                let opts = PhaseOptions {
                    tol_sign: *tol_sign,
                    refine: *refine,
                };
                let outcome = reconstruct_phases(&series, &p, &opts)?;
                io::write_json(
                    &out.join("correlations.json"),
                    &correlations_to_json(&outcome.correlations),
                )?;
                io::write_json(
                    &out.join("phases.json"),
                    &PhaseSolutionJson::from(&outcome.solution),
                )?;
                io::write_json(
                    &out.join("unitary.json"),
                    &CanonicalUnitaryJson::from(&outcome.unitary),
                )?;
                println!(
                    "phases: {} correlations, reduced chi2 {:.4}, unitarity residual {:e}",
                    outcome.correlations.len(),
                    outcome.solution.chi2,
                    outcome.unitary.unitarity_residual()
                );
                Ok(())
            };
            run().stage(Stage::Phases)?;
        }
        Command::Pipeline { all_pairs, timing } => {
            let mut cfg = load_config(cli).stage(Stage::Config)?;
            cfg.all_pairs |= *all_pairs;
            let start = Instant::now();
            let mut report = pipeline::run_pipeline(&cfg)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            if *timing {
                report.timing_ms = Some(elapsed);
            } else {
                eprintln!("elapsed {elapsed:.1} ms");
            }
            io::write_json(&out.join("report.json"), &report).stage(Stage::Compare)?;
            if let Some(f) = report.fidelity_probability {
                println!("probability fidelity {f:.10}");
            }
            if let Some(cols) = &report.column_fidelity {
                let text: Vec<String> = cols.iter().map(|f| format!("{f:.10}")).collect();
                println!("column fidelity {}", text.join(" "));
            }
            if let Some(chi2) = report.chi2 {
                println!("reduced chi2 {chi2:.4}");
            }
        }
        Command::Compare { a, b, correlations } => {
            let run = || -> Result<()> {
                let da = io::matrix_document(&read_value(a)?)?;
                let db = io::matrix_document(&read_value(b)?)?;
                let corr = match correlations {
                    Some(path) => Some(correlations_from_json(&io::read_json::<
                        Vec<CorrelationJson>,
                    >(path)?)),
                    None => None,
                };
                let cmp = compare(&da, &db, corr.as_ref())?;
                io::write_json(&out.join("comparison.json"), &cmp)?;
                println!("probability fidelity {:.10}", cmp.fidelity_probability);
                if let Some(cols) = &cmp.column_fidelity {
                    let text: Vec<String> = cols.iter().map(|f| format!("{f:.10}")).collect();
                    println!("column fidelity {}", text.join(" "));
                }
                if let Some(d) = cmp.max_phase_deviation {
                    println!("max phase deviation {d:.3e} rad");
                }
                Ok(())
            };
            run().stage(Stage::Compare)?;
        }
        Command::PlotData { points } => {
            let cfg = load_config(cli).stage(Stage::Config)?;
            let data = plot_data(&cfg, *points)?;
            let write = || -> Result<()> {
                write_table(out, "intensity_sweep.csv", &data.intensity_sweep)?;
                write_table(out, "reweighted_sweep.csv", &data.reweighted_sweep)?;
                write_table(out, "correlation_sweep.csv", &data.correlation_sweep)?;
                Ok(())
            };
            write().stage(Stage::PlotData)?;
            println!(
                "plot data: {} points, correlation chi2 {:.4}",
                points,
                pipeline::correlation_sweep_chi2(&data.correlation_sweep)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match &e {
                Error::Stage { stage, source } => {
                    eprintln!("error [{stage}]: {source}");
                    stage.exit_code()
                }
                other => {
                    eprintln!("error: {other}");
                    1
                }
            };
            ExitCode::from(code as u8)
        }
    }
}
