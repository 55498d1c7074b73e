//! `qheom` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
//! 4 I/O error, 1 anything else.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qheom::harness::{self, ExperimentConfig, Method, SweepParam};
use qheom::models::{self, Conformation, TriadParams};
use qheom::propagator::{encode_initial, PropagatorSeries};
use qheom::qsim::{populations_from_counts, sample_counts, RegisterState};
use qheom::units::Units;
use qheom::{bath, dilation, Error, Result, Trajectory};
use serde_json::json;

#[derive(Parser)]
#[command(name = "qheom", version, about = "HEOM dynamics, dilation circuits and shot sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Configuration file (flat `key = value`).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Model preset when no config file is given.
    #[arg(short, long, default_value = "triad-bent")]
    model: String,
    /// Method when no config file is given.
    #[arg(long)]
    method: Option<String>,
    /// Override a configuration key, e.g. `--set K=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SeriesArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Read the propagator series from a JSON file instead of computing it.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Grid index of the propagator.
    #[arg(short, long, default_value_t = 0)]
    index: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Print the exponential expansion of the bath correlation function.
    Decompose {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of expansion terms (defaults to the config's K).
        #[arg(short = 'K', long)]
        terms: Option<usize>,
        /// Also compare C(t) against direct quadrature at these times.
        #[arg(long, value_delimiter = ',')]
        check: Vec<f64>,
    },
    /// Run an experiment and write the trajectory CSV and JSON sidecar.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compute the projected propagator series G(t) and write it as JSON.
    Propagator {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build the dilation circuit of one propagator and print its statistics.
    Compile {
        #[command(flatten)]
        src: SeriesArgs,
        /// Print statistics for every grid point.
        #[arg(long)]
        all: bool,
    },
    /// Sample the dilation circuit of one propagator.
    Sample {
        #[command(flatten)]
        src: SeriesArgs,
        #[arg(long)]
        shots: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Transfer rates from Marcus theory or fitted trajectories.
    Rates {
        /// `marcus`, `heom` or `lindblad`.
        #[arg(long, default_value = "marcus")]
        method: String,
        /// Triad conformations (`bent`, `linear`).
        #[arg(long, value_delimiter = ',', default_value = "bent,linear")]
        conformation: Vec<String>,
        /// Fit an existing trajectory CSV instead of running.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "P_DD")]
        column: String,
        #[arg(long, value_name = "T_LO,T_HI")]
        window: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare two trajectory CSVs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_name = "T_LO,T_HI")]
        window: Option<String>,
        /// Time units of the CSVs: `wavenumber` (fs) or `dimensionless`.
        #[arg(long)]
        units: Option<String>,
    },
    /// Convergence sweep over one truncation parameter.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `K`, `L`, `L1`, `D_h` or `dt`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Export the compiled circuit of one propagator as OpenQASM 2.0.
    ExportQasm {
        #[command(flatten)]
        src: SeriesArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Render trajectory columns as an SVG line chart.
    Plot {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Columns to draw (default: all).
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long)]
        title: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn parse_pairs(items: &[String]) -> Result<Vec<(String, String)>> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::config(s, "expected KEY=VALUE"))
        })
        .collect()
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::config("window", format!("expected `t_lo,t_hi`, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn load_config(args: &ConfigArgs, default_method: Method) -> Result<ExperimentConfig> {
    let mut pairs = parse_pairs(&args.overrides)?;
    if let Some(m) = &args.method {
        pairs.push(("method".into(), m.clone()));
    }
    let base = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::defaults(&args.model, default_method)?,
    };
    let cfg = if pairs.is_empty() { base } else { base.with_overrides(&pairs)? };
    cfg.validate()?;
    Ok(cfg)
}

fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    emit(&(serde_json::to_string_pretty(v).expect("json values serialize") + "\n"))
}

fn load_series(src: &SeriesArgs) -> Result<(ExperimentConfig, PropagatorSeries)> {
    let cfg = load_config(&src.cfg, Method::Circuit)?;
    let series = match &src.series {
        Some(p) => PropagatorSeries::from_json(&harness::read_json(p)?)?,
        None => harness::propagator_series(&cfg)?,
    };
    if src.index >= series.len() {
        return Err(Error::config(
            "index",
            format!("{} out of range for {} grid points", src.index, series.len()),
        ));
    }
    Ok((cfg, series))
}

fn series_phi0(cfg: &ExperimentConfig, series: &PropagatorSeries) -> Result<qheom::linalg::CVector> {
    let model = if cfg.model.name() == series.meta.model {
        cfg.model(1)?
    } else {
        models::preset(&series.meta.model, 1)?
    };
    encode_initial(&model.rho0, &series.subspace)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Decompose { cfg, terms, check } => {
            let cfg = load_config(&cfg, Method::Heom)?;
            let k = terms.unwrap_or(cfg.k_terms);
            let mut table = harness::decomposition_table(&cfg, k)?;
            if !check.is_empty() {
                let model = cfg.model(k)?;
                let b = &model.couplings[0].bath;
                let mut rows = Vec::new();
                for t in check {
                    let cf = bath::correlation_closed_form(b, t);
                    let q = bath::correlation_quadrature(&b.density, b.beta, t)?;
                    rows.push(json!({"t": t, "closed_form": [cf.re, cf.im], "quadrature": [q.re, q.im], "abs_diff": (cf - q).norm()}));
                }
                table["check"] = json!(rows);
            }
            print_json(&table)?;
        }
        Command::Run { cfg, output } => {
            let cfg = load_config(&cfg, Method::Heom)?;
            let res = harness::run(&cfg)?;
            match output.or_else(|| cfg.output.clone()) {
                Some(p) => {
                    res.write(&p)?;
                    eprintln!("wrote {} and {}", p.display(), harness::sidecar_path(&p).display());
                }
                None => emit(&res.trajectory.to_csv())?,
            }
        }
        Command::Propagator { cfg, output } => {
            let cfg = load_config(&cfg, Method::Circuit)?;
            let series = harness::propagator_series(&cfg)?;
            harness::write_json(&output, &series.to_json())?;
            eprintln!(
                "wrote {} ({} grid points, dimension {})",
                output.display(),
                series.len(),
                series.subspace.register_dim()
            );
        }
        Command::Compile { src, all } => {
            let (_, series) = load_series(&src)?;
            let indices: Vec<usize> = if all { (0..series.len()).collect() } else { vec![src.index] };
            let mut rows = Vec::new();
            for i in indices {
                let (lcu, circ) = dilation::dilate(&series.mats[i])?;
                let stats = harness::circuit_stats(&circ)?;
                rows.push(json!({"index": i, "time_fs": series.times[i], "sigma0": lcu.sigma0, "stats": stats}));
            }
            print_json(&json!(rows))?;
        }
        Command::Sample { src, shots, seed, output } => {
            let (cfg, series) = load_series(&src)?;
            let shots = shots.unwrap_or(cfg.shots);
            let seed = seed.unwrap_or(cfg.seed);
            let phi0 = series_phi0(&cfg, &series)?;
            let (lcu, circ) = dilation::dilate(&series.mats[src.index])?;
            let norm0 = phi0.norm();
            let state = RegisterState::from_main(&phi0.map(|x| x / norm0), 1)?.apply(&circ)?;
            let counts = sample_counts(&state, shots, seed)?;
            let pops = populations_from_counts(&counts, lcu.sigma0, series.subspace.register_dim())?;
            let exact: Vec<f64> = state.block(1, 0).iter().map(|a| a.norm() * lcu.sigma0 * norm0).collect();
            let report = json!({
                "index": src.index,
                "time_fs": series.times[src.index],
                "sigma0": lcu.sigma0,
                "labels": series.subspace.labels(),
                "counts": counts.to_json(),
                "estimates": pops.iter().take(series.subspace.len()).map(|p| p * norm0).collect::<Vec<_>>(),
                "statevector": &exact[..series.subspace.len()],
            });
            match output {
                Some(p) => harness::write_json(&p, &report)?,
                None => print_json(&report)?,
            }
        }
        Command::Rates {
            method,
            conformation,
            input,
            column,
            window,
            overrides,
        } => {
            let confs: Vec<Conformation> = conformation.iter().map(|c| c.parse()).collect::<Result<_>>()?;
            let window = window.as_deref().map(parse_window).transpose()?;
            if let Some(p) = input {
                let traj = Trajectory::read_csv(&p)?;
                let fit = harness::fit_column(&traj, &column, window.unwrap_or((3000.0, 4000.0)), Units::Wavenumber)?;
                print_json(&json!(fit))?;
                return Ok(());
            }
            let method_kind = match method.as_str() {
                "marcus" => None,
                "heom" => Some(Method::Heom),
                "lindblad" => Some(Method::Lindblad),
                other => {
                    return Err(Error::config(
                        "method",
                        format!("unknown rate method `{other}` (marcus, heom, lindblad)"),
                    ))
                }
            };
            let pairs = parse_pairs(&overrides)?;
            let mut rows = Vec::new();
            for conf in confs {
                let name = format!("triad-{conf}");
                let rate = match method_kind {
                    None => json!({"rate": models::marcus_rate(&TriadParams::for_conformation(conf))?, "method": "marcus"}),
                    Some(m) => {
                        let mut cfg = ExperimentConfig::defaults(&name, m)?.with_overrides(&[("subspace".into(), "DD,AA".into())])?;
                        if !pairs.is_empty() {
                            cfg = cfg.with_overrides(&pairs)?;
                        }
                        let w = window
                            .or(cfg.fit_window)
                            .ok_or_else(|| Error::config("fit_window", "no fit window"))?;
                        let res = harness::run(&cfg)?;
                        json!(harness::fit_column(&res.trajectory, &column, w, Units::Wavenumber)?)
                    }
                };
                rows.push(json!({"model": name, "fit": rate}));
            }
            print_json(&json!(rows))?;
        }
        Command::Compare { a, b, window, units } => {
            let ta = Trajectory::read_csv(&a)?;
            let tb = Trajectory::read_csv(&b)?;
            let units = match units.as_deref() {
                Some("wavenumber") => Units::Wavenumber,
                Some("dimensionless") => Units::Dimensionless,
                Some(other) => return Err(Error::config("units", format!("unknown units `{other}`"))),
                None => sidecar_units(&a).unwrap_or(Units::Wavenumber),
            };
            let window = window.as_deref().map(parse_window).transpose()?;
            print_json(&json!(harness::compare(&ta, &tb, window, units)?))?;
        }
        Command::Sweep { cfg, param, values } => {
            let cfg = load_config(&cfg, Method::Heom)?;
            let param: SweepParam = param.parse()?;
            print_json(&json!(harness::convergence_sweep(&cfg, param, &values)?))?;
        }
        Command::ExportQasm { src, output } => {
            let (_, series) = load_series(&src)?;
            let (_, circ) = dilation::dilate(&series.mats[src.index])?;
            let qasm = dilation::compile(&circ)?.to_qasm()?;
            match output {
                Some(p) => harness::write_file(&p, &qasm)?,
                None => emit(&qasm)?,
            }
        }
        Command::Plot {
            input,
            output,
            columns,
            title,
        } => {
            let traj = Trajectory::read_csv(&input)?;
            let title = title.unwrap_or_else(|| input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
            let svg = plot::render(&traj, &columns, &title)?;
            harness::write_file(&output, &svg)?;
        }
    }
    Ok(())
}

fn sidecar_units(csv: &Path) -> Option<Units> {
    let meta = harness::read_json(&harness::sidecar_path(csv)).ok()?;
    Some(if meta["model"] == "spin-boson" {
        Units::Dimensionless
    } else {
        Units::Wavenumber
    })
}
