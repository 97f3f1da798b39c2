//! Command-line front end: argument parsing, subcommands and report output.

pub mod runner;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use kinestat::io::{read_config, read_sensor_log, require_kind, write_sensor_log, Config};
use kinestat::lti::concatenation_probe;
use kinestat::manifold::{geodesic_distance, Rotation};
use kinestat::metrics::{convergence_time, rmse, rmse_attitude, Report};
use kinestat::observability::{
    o_i_probe, thin_set_probe_inter_imu, thin_set_probe_state_formulation, InterImuProbeConfig, StateProbeConfig,
};
use kinestat::sim::{simulate, LogKind, SensorLog};
use kinestat::Error;

use runner::{compare_filters, excitation_check, run_inter_imu, run_pos_imu, Formulation, PosImuRun};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Convergence bands of the calibration report: 5 mm and 1°.
pub const OFFSET_BAND: f64 = 5e-3;
pub const ROTATION_BAND_DEG: f64 = 1.0;

#[derive(Debug, Parser)]
#[command(name = "kinestat", version, about = "Error-state filtering, IMU modelling and observability tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a sensor log from the trajectory and sensor sections of a config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides both the trajectory and the sensor seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a filter over a log and report metrics and timing.
    Estimate {
        log: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "state")]
        formulation: FormulationArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the state-form filter with matched low-pass filters on the gyro channels.
    CompareFilters {
        log: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the observability rank probes.
    Observability {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the extrinsics between two rigidly mounted IMUs.
    CalibrateImu {
        log: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormulationArg {
    State,
    Input,
    InterImu,
}

impl From<FormulationArg> for Formulation {
    fn from(f: FormulationArg) -> Self {
        match f {
            FormulationArg::State => Formulation::State,
            FormulationArg::Input => Formulation::Input,
            FormulationArg::InterImu => Formulation::InterImu,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Input,
    State,
    InterImu,
    /// Series concatenation of random observable pairs.
    #[value(name = "lemma1")]
    Concatenation,
}

/// Failure of a command, mapped onto the exit-code contract.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    /// Probe completed but the expected ranks were not observed.
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) | CliError::Check(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Reports go to `stdout`, diagnostics to `stderr`.
pub fn run_from_args<I, S>(args: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(report) => {
            let _ = write!(stdout, "{report}");
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command and returns the report text printed on success.
pub fn execute(cmd: &Command) -> CliResult<String> {
    match cmd {
        Command::Simulate { config, out, seed } => cmd_simulate(config, out, *seed),
        Command::Estimate {
            log,
            config,
            formulation,
            out,
        } => cmd_estimate(log, config, (*formulation).into(), out),
        Command::CompareFilters { log, config, out } => cmd_compare_filters(log, config, out),
        Command::Observability {
            mode,
            config,
            trials,
            seed,
            out,
        } => cmd_observability(*mode, config.as_deref(), *trials, *seed, out.as_deref()),
        Command::CalibrateImu { log, config, out } => cmd_calibrate_imu(log, config, out),
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn csv_text(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn finish_report(report: &Report, out: &Path) -> CliResult<String> {
    let text = report.to_text();
    write_file(&sidecar(out, ".report.txt"), &text)?;
    Ok(text)
}

fn load(config: &Path) -> CliResult<Config> {
    Ok(read_config(config)?)
}

fn load_log(path: &Path) -> CliResult<SensorLog> {
    Ok(read_sensor_log(path)?)
}

pub fn cmd_simulate(config: &Path, out: &Path, seed: Option<u64>) -> CliResult<String> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.trajectory.seed = s;
        cfg.sensors.seed = s;
    }
    let log = simulate(&cfg.trajectory, &cfg.sensors)?;
    write_sensor_log(out, &log)?;
    let mut meta = String::new();
    let _ = writeln!(meta, "# kinestat simulation metadata");
    let _ = writeln!(meta, "# kind = {}", log.kind.name());
    let _ = writeln!(meta, "# samples = {}", log.len());
    meta.push_str(&cfg.to_toml()?);
    write_file(&sidecar(out, ".meta"), &meta)?;
    let mut r = Report::default();
    r.push("kind", log.kind.name());
    r.push("samples", log.len());
    r.push("duration", log.t[log.len() - 1] - log.t[0]);
    r.push("imu_rate", cfg.trajectory.rate);
    r.push("pose_samples", log.pose.iter().filter(|p| p.is_some()).count());
    r.push("trajectory_seed", cfg.trajectory.seed);
    r.push("sensor_seed", cfg.sensors.seed);
    Ok(r.to_text())
}

/// Metrics of a POS-IMU run against the truth columns of `log`, evaluated
/// from `skip` seconds onwards.
pub fn pos_imu_metrics(run: &PosImuRun, log: &SensorLog, cfg: &Config, r: &mut Report) -> kinestat::Result<()> {
    let n = run.t.len();
    let Some(last) = n.checked_sub(1) else {
        return Ok(());
    };
    r.push_vec3("c_final", &run.c[last]);
    r.push_vec3("ba_final", &run.ba[last]);
    r.push_vec3("bw_final", &run.bw[last]);
    let Some(tr) = &log.truth else {
        return Ok(());
    };
    let c_true = Vector3::from(cfg.sensors.c);
    r.push_vec3("c_error", &(run.c[last] - c_true).abs());
    let k0 = ((cfg.compare.skip / log.dt()).round() as usize).min(n - 1);
    let t = &run.t[k0..];
    let tt = &log.t[k0..n];
    r.push_vec3("rmse_p", &rmse(t, &run.p[k0..], tt, &tr.p[k0..n])?);
    r.push_vec3("rmse_v", &rmse(t, &run.v[k0..], tt, &tr.v[k0..n])?);
    let rot_true: Vec<Rotation> = tr.rotvec[k0..n].iter().map(Rotation::exp).collect();
    r.push_vec3("rmse_att", &rmse_attitude(t, &run.rot[k0..], tt, &rot_true)?);
    r.push_vec3("rmse_a", &rmse(t, &run.accel[k0..], tt, &tr.a[k0..n])?);
    r.push_vec3("rmse_w", &rmse(t, &run.gyro[k0..], tt, &tr.w[k0..n])?);
    let err: Vec<f64> = run.c.iter().map(|c| (c - c_true).amax()).collect();
    let conv = convergence_time(&run.t, &err, 0.0, 0.01)?;
    r.push("c_convergence_time", conv.map_or("none".to_string(), |v| v.to_string()));
    Ok(())
}

fn timing_report(r: &mut Report, t: &runner::Timing) {
    r.push("steps", t.steps);
    r.push("predict_ms", t.predict * 1e3);
    r.push("update_ms", t.update * 1e3);
    r.push("step_ms", t.total() * 1e3);
}

pub fn cmd_estimate(log_path: &Path, config: &Path, formulation: Formulation, out: &Path) -> CliResult<String> {
    let cfg = load(config)?;
    let log = load_log(log_path)?;
    if formulation == Formulation::InterImu {
        return cmd_calibrate_loaded(&log, &cfg, out);
    }
    require_kind(&log, LogKind::PosImu)?;
    let run = run_pos_imu(&log, &cfg, formulation)?;
    write_file(out, &csv_text(&run.header, &run.rows))?;
    let mut r = Report::default();
    r.push("formulation", formulation.name());
    r.push("samples", run.t.len());
    timing_report(&mut r, &run.timing);
    pos_imu_metrics(&run, &log, &cfg, &mut r)?;
    let text = finish_report(&r, out)?;
    match run.failure {
        Some(e) => Err(CliError::Numerical(format!(
            "filter diverged after {} samples (partial output written): {e}",
            run.t.len()
        ))),
        None => Ok(text),
    }
}

pub fn cmd_compare_filters(log_path: &Path, config: &Path, out: &Path) -> CliResult<String> {
    let cfg = load(config)?;
    let log = load_log(log_path)?;
    require_kind(&log, LogKind::PosImu)?;
    let cmp = compare_filters(&log, &cfg)?;
    write_file(out, &csv_text(&runner::comparison_series_header(), &cmp.series))?;
    let mut r = Report::default();
    r.push("lowpass_k", cmp.k);
    r.push("zero_phase_k", cmp.k_zero_phase);
    r.push("ekf_noise_gain", cmp.noise_gain);
    r.push("raw_noise_rms", cmp.raw_noise_rms);
    for (m, name) in runner::METHODS.iter().enumerate() {
        r.push(format!("{name}_delay"), cmp.delay[m]);
        r.push(format!("{name}_delay_samples"), cmp.delay[m] / cmp.dt);
        r.push(format!("{name}_noise_rms"), cmp.noise_rms[m]);
        r.push(format!("{name}_error_rms"), cmp.error_rms[m]);
    }
    finish_report(&r, out)
}

fn probe_config(config: Option<&Path>) -> CliResult<Config> {
    match config {
        Some(p) => load(p),
        None => Ok(Config::default()),
    }
}

pub fn cmd_observability(
    mode: ModeArg,
    config: Option<&Path>,
    trials: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> CliResult<String> {
    let cfg = probe_config(config)?.observability;
    let trials = trials.unwrap_or(cfg.trials);
    if trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let seed = seed.unwrap_or(cfg.seed);
    let mut r = Report::default();
    r.push("trials", trials);
    r.push("seed", seed);
    let (csv, ok) = match mode {
        ModeArg::Input => {
            r.push("mode", "input");
            let ranks = o_i_probe(trials, seed)?;
            let full = ranks.iter().filter(|t| t.is_full()).count();
            r.push("full_rank", full);
            r.push("min_rank", ranks.iter().map(|t| t.rank).min().unwrap_or(0));
            let mut s = String::from("trial,rank,cols\n");
            for t in &ranks {
                let _ = writeln!(s, "{},{},{}", t.trial, t.rank, t.cols);
            }
            (s, full == trials)
        }
        ModeArg::State => {
            r.push("mode", "state");
            let mut pc = StateProbeConfig::new(cfg.state_na, cfg.state_nw);
            pc.perturbation = cfg.perturbation;
            let rep = thin_set_probe_state_formulation(&pc, trials, seed)?;
            r.push("random_full_fraction", rep.random_full_fraction());
            r.push("parallel_deficient_fraction", rep.degenerate_deficient_fraction());
            r.push("perturbed_full_fraction", rep.perturbed_full_fraction());
            r.push("reduction_mismatches", rep.equivalence_violations());
            let ok = rep.random_full_fraction() >= 0.99
                && rep.degenerate_deficient_fraction() == 1.0
                && rep.perturbed_full_fraction() == 1.0
                && rep.equivalence_violations() == 0;
            (rep.to_csv(), ok)
        }
        ModeArg::InterImu => {
            r.push("mode", "inter-imu");
            let pc = InterImuProbeConfig::new(cfg.inter_nt, cfg.inter_na);
            let rep = thin_set_probe_inter_imu(&pc, trials, seed)?;
            r.push("excited_full_fraction", rep.excited_full_fraction());
            r.push("zero_lever_arm_deficient_fraction", rep.zero_lever_arm_deficient_fraction());
            r.push("constructed_rank", rep.constructed.full.rank);
            r.push("constructed_cols", rep.constructed.full.cols);
            let ok = rep.zero_lever_arm_deficient_fraction() == 1.0 && rep.constructed.full.is_full();
            (rep.to_csv(), ok)
        }
        ModeArg::Concatenation => {
            r.push("mode", "lemma1");
            let rep = concatenation_probe(trials, seed)?;
            r.push("observable_pairs", rep.observable);
            (String::new(), rep.observable == rep.pairs)
        }
    };
    r.push("expected_ranks", ok);
    let text = match out {
        Some(p) => {
            if !csv.is_empty() {
                write_file(p, &csv)?;
            }
            finish_report(&r, p)?
        }
        None => r.to_text(),
    };
    if ok {
        Ok(text)
    } else {
        Err(CliError::Check(format!("expected ranks not observed\n{text}")))
    }
}

pub fn cmd_calibrate_imu(log_path: &Path, config: &Path, out: &Path) -> CliResult<String> {
    let cfg = load(config)?;
    let log = load_log(log_path)?;
    cmd_calibrate_loaded(&log, &cfg, out)
}

/// Calibration report entries for a finished inter-IMU run.
pub fn calibration_report(log: &SensorLog, cfg: &Config, run: &runner::InterImuRun) -> CliResult<Report> {
    let mut r = Report::default();
    r.push("samples", run.t.len());
    timing_report(&mut r, &run.timing);
    let Some(last) = run.t.len().checked_sub(1) else {
        return Ok(r);
    };
    let (c, rot) = (run.c[last], run.rot[last]);
    r.push_vec3("c_final", &c);
    r.push_vec3("rotvec_final", &rot.log());
    let truth = log.truth.as_ref().and_then(|t| t.inter.as_ref());
    let (c_ref, rot_ref) = match truth {
        Some(it) => (it.c2, Rotation::exp(&it.rotvec2)),
        None => (c, rot),
    };
    let c_err: Vec<f64> = run.c.iter().map(|v| (v - c_ref).norm()).collect();
    let r_err: Vec<f64> = run.rot.iter().map(|q| geodesic_distance(q, &rot_ref).to_degrees()).collect();
    if truth.is_some() {
        r.push("c_error", c_err[last]);
        r.push("rotation_error_deg", r_err[last]);
    }
    let fmt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
    r.push("c_convergence_time", fmt(convergence_time(&run.t, &c_err, 0.0, OFFSET_BAND)?));
    r.push(
        "rotation_convergence_time",
        fmt(convergence_time(&run.t, &r_err, 0.0, ROTATION_BAND_DEG)?),
    );
    let exc = excitation_check(log, cfg, &c, &rot)?;
    r.push("excitation_windows", exc.windows);
    r.push("excitation_full_rank_windows", exc.full_rank);
    r.push("excitation_sufficient", exc.sufficient());
    if !exc.sufficient() {
        r.push(
            "warning",
            "insufficient excitation: observability matrix rank deficient in most windows, extrinsics not trusted",
        );
    }
    Ok(r)
}

fn cmd_calibrate_loaded(log: &SensorLog, cfg: &Config, out: &Path) -> CliResult<String> {
    require_kind(log, LogKind::InterImu)?;
    let run = run_inter_imu(log, cfg, false)?;
    write_file(out, &csv_text(&run.header, &run.rows))?;
    let r = calibration_report(log, cfg, &run)?;
    let text = finish_report(&r, out)?;
    match run.failure {
        Some(e) => Err(CliError::Numerical(format!(
            "filter diverged after {} samples (partial output written): {e}",
            run.t.len()
        ))),
        None => Ok(text),
    }
}
