//! Sensor-log CSV and TOML configuration.
//!
//! Logs start with a version line `# kinestat-log v1 kind=<kind>` followed
//! by a CSV header and one row per IMU sample. Pose columns are left empty
//! on rows without a pose reading. Columns not recognised by the reader are
//! carried through unchanged. Floats are written in shortest round-trip
//! form so that reading a written log reproduces it bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ExtraColumn, InterTruth, LogKind, PoseSample, SensorLog, SensorSpec, TrajectorySpec, TruthColumns};

pub const LOG_MAGIC: &str = "# kinestat-log v1";

/// Relative deviation of a sample period from the mean that is tolerated.
pub const DT_UNIFORMITY_TOL: f64 = 1e-3;

const AXES: [&str; 3] = ["x", "y", "z"];

fn vec_cols(prefix: &str) -> [String; 3] {
    AXES.map(|a| format!("{prefix}_{a}"))
}

const TRUTH_BLOCKS: [&str; 7] = ["true_p", "true_v", "true_rotvec", "true_a", "true_w", "true_ba", "true_bw"];
const INTER_TRUTH_BLOCKS: [&str; 4] = ["true_tau", "true_ba2", "true_c2", "true_rotvec2"];

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

/// Column names of `log` in file order.
pub fn log_columns(log: &SensorLog) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for p in ["w_m", "a_m", "p_m", "m_m"] {
        cols.extend(vec_cols(p));
    }
    if log.accel2.is_some() {
        cols.extend(vec_cols("a_m2"));
    }
    if let Some(tr) = &log.truth {
        for b in TRUTH_BLOCKS {
            cols.extend(vec_cols(b));
        }
        if tr.inter.is_some() {
            for b in INTER_TRUTH_BLOCKS {
                cols.extend(vec_cols(b));
            }
        }
    }
    cols.extend(log.extra.iter().map(|c| c.name.clone()));
    cols
}

/// Serialises a log to its CSV text.
pub fn log_to_string(log: &SensorLog) -> Result<String> {
    let n = log.len();
    let lens = [log.gyro.len(), log.accel.len(), log.pose.len()];
    if lens.iter().any(|&l| l != n) || log.accel2.as_ref().is_some_and(|a| a.len() != n) {
        return Err(Error::InvalidInput("sensor log channels differ in length".into()));
    }
    if log.kind == LogKind::InterImu && log.accel2.is_none() {
        return Err(Error::InvalidInput("inter-imu log without a_m2 channel".into()));
    }
    let mut out = format!(
        "{LOG_MAGIC} kind={}{}\n",
        log.kind.name(),
        if log.truth.is_some() { " synthetic=true" } else { "" }
    );
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv encoding failed: {e}"));
    w.write_record(log_columns(log)).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::new();
    let push3 = |row: &mut Vec<String>, v: &Vector3<f64>| row.extend(v.iter().map(|x| fmt(*x)));
    for k in 0..n {
        row.clear();
        row.push(fmt(log.t[k]));
        push3(&mut row, &log.gyro[k]);
        push3(&mut row, &log.accel[k]);
        match &log.pose[k] {
            Some(s) => {
                push3(&mut row, &s.p);
                push3(&mut row, &s.m);
            }
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        if let Some(a2) = &log.accel2 {
            push3(&mut row, &a2[k]);
        }
        if let Some(tr) = &log.truth {
            for v in [&tr.p, &tr.v, &tr.rotvec, &tr.a, &tr.w, &tr.ba, &tr.bw] {
                push3(&mut row, &v[k]);
            }
            if let Some(it) = &tr.inter {
                push3(&mut row, &it.tau[k]);
                push3(&mut row, &it.ba2[k]);
                push3(&mut row, &it.c2);
                push3(&mut row, &it.rotvec2);
            }
        }
        for c in &log.extra {
            row.push(c.values.get(k).cloned().unwrap_or_default());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv encoding failed: {e}")))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

pub fn write_sensor_log(path: &Path, log: &SensorLog) -> Result<()> {
    fs::write(path, log_to_string(log)?).map_err(|e| io_err(path, e))
}

pub fn read_sensor_log(path: &Path) -> Result<SensorLog> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_sensor_log(&text)
}

struct Columns {
    names: Vec<String>,
    used: Vec<bool>,
}

impl Columns {
    fn find(&mut self, name: &str) -> Option<usize> {
        let i = self.names.iter().position(|n| n == name)?;
        self.used[i] = true;
        Some(i)
    }

    fn vec3(&mut self, prefix: &str) -> Option<[usize; 3]> {
        let cols = vec_cols(prefix);
        let idx: Vec<Option<usize>> = cols.iter().map(|c| self.find(c)).collect();
        match (idx[0], idx[1], idx[2]) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        }
    }

    fn require(&mut self, prefix: &str, what: &str) -> Result<[usize; 3]> {
        self.vec3(prefix).ok_or_else(|| Error::LogFormat {
            row: 0,
            message: format!("{what} requires columns {}", vec_cols(prefix).join(",")),
        })
    }
}

fn parse_header(line: &str) -> Result<(LogKind, bool)> {
    let rest = line.strip_prefix(LOG_MAGIC).ok_or_else(|| Error::LogFormat {
        row: 0,
        message: format!("missing version line `{LOG_MAGIC} kind=...`"),
    })?;
    let mut kind = None;
    let mut synthetic = false;
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("kind", v)) => {
                kind = Some(LogKind::parse(v).ok_or_else(|| Error::LogFormat {
                    row: 0,
                    message: format!("unknown log kind `{v}` (expected pos-imu or inter-imu)"),
                })?)
            }
            Some(("synthetic", v)) => synthetic = v == "true",
            _ => {}
        }
    }
    let kind = kind.ok_or_else(|| Error::LogFormat {
        row: 0,
        message: "version line lacks kind=".into(),
    })?;
    Ok((kind, synthetic))
}

/// Parses log text. Rows are numbered from 1 (the first data row) in
/// errors.
pub fn parse_sensor_log(text: &str) -> Result<SensorLog> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let (kind, _) = parse_header(first.trim_end())?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::LogFormat {
            row: 0,
            message: format!("unreadable header: {e}"),
        })?
        .clone();
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    let mut cols = Columns {
        used: vec![false; names.len()],
        names,
    };
    let t_col = cols.find("t").ok_or_else(|| Error::LogFormat {
        row: 0,
        message: "missing column t".into(),
    })?;
    let w_cols = cols.require("w_m", "every log")?;
    let a_cols = cols.require("a_m", "every log")?;
    let p_cols = cols.require("p_m", "every log")?;
    let m_cols = cols.require("m_m", "every log")?;
    let a2_cols = match kind {
        LogKind::InterImu => Some(cols.require("a_m2", "an inter-imu log")?),
        LogKind::PosImu => None,
    };
    let truth_cols: Option<Vec<[usize; 3]>> = TRUTH_BLOCKS.iter().map(|b| cols.vec3(b)).collect();
    let inter_cols: Option<Vec<[usize; 3]>> = if kind == LogKind::InterImu && truth_cols.is_some() {
        INTER_TRUTH_BLOCKS.iter().map(|b| cols.vec3(b)).collect()
    } else {
        None
    };
    let extra_idx: Vec<usize> = (0..cols.names.len()).filter(|&i| !cols.used[i]).collect();

    let mut log = SensorLog {
        kind,
        t: Vec::new(),
        gyro: Vec::new(),
        accel: Vec::new(),
        pose: Vec::new(),
        accel2: a2_cols.map(|_| Vec::new()),
        truth: truth_cols.as_ref().map(|_| TruthColumns {
            p: vec![],
            v: vec![],
            rotvec: vec![],
            a: vec![],
            w: vec![],
            ba: vec![],
            bw: vec![],
            inter: inter_cols.as_ref().map(|_| InterTruth {
                tau: vec![],
                ba2: vec![],
                c2: Vector3::zeros(),
                rotvec2: Vector3::zeros(),
            }),
        }),
        extra: extra_idx
            .iter()
            .map(|&i| ExtraColumn {
                name: cols.names[i].clone(),
                values: Vec::new(),
            })
            .collect(),
    };

    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::LogFormat {
            row,
            message: format!("malformed record: {e}"),
        })?;
        if rec.len() != cols.names.len() {
            return Err(Error::LogFormat {
                row,
                message: format!("expected {} fields, found {}", cols.names.len(), rec.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            let s = &rec[i];
            s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::LogFormat {
                row,
                message: format!("column {}: `{s}` is not a finite number", cols.names[i]),
            })
        };
        let v3 = |c: [usize; 3]| -> Result<Vector3<f64>> { Ok(Vector3::new(num(c[0])?, num(c[1])?, num(c[2])?)) };

        let t = num(t_col)?;
        if let Some(&prev) = log.t.last() {
            if !(t > prev) {
                return Err(Error::LogFormat {
                    row,
                    message: format!("column t: timestamp {t} does not increase (previous {prev})"),
                });
            }
        }
        log.t.push(t);
        log.gyro.push(v3(w_cols)?);
        log.accel.push(v3(a_cols)?);
        let pose_idx: Vec<usize> = p_cols.iter().chain(m_cols.iter()).copied().collect();
        let empty = pose_idx.iter().filter(|&&i| rec[i].trim().is_empty()).count();
        if empty == 6 {
            log.pose.push(None);
        } else if empty == 0 {
            log.pose.push(Some(PoseSample {
                p: v3(p_cols)?,
                m: v3(m_cols)?,
            }));
        } else {
            let i = pose_idx.iter().find(|&&i| rec[i].trim().is_empty()).expect("some empty");
            return Err(Error::LogFormat {
                row,
                message: format!("column {}: pose reading is incomplete", cols.names[*i]),
            });
        }
        if let (Some(c), Some(a2)) = (a2_cols, log.accel2.as_mut()) {
            a2.push(v3(c)?);
        }
        if let (Some(tc), Some(tr)) = (&truth_cols, log.truth.as_mut()) {
            let dst = [&mut tr.p, &mut tr.v, &mut tr.rotvec, &mut tr.a, &mut tr.w, &mut tr.ba, &mut tr.bw];
            for (d, c) in dst.into_iter().zip(tc) {
                d.push(v3(*c)?);
            }
            if let (Some(ic), Some(it)) = (&inter_cols, tr.inter.as_mut()) {
                it.tau.push(v3(ic[0])?);
                it.ba2.push(v3(ic[1])?);
                it.c2 = v3(ic[2])?;
                it.rotvec2 = v3(ic[3])?;
            }
        }
        for (c, &i) in log.extra.iter_mut().zip(&extra_idx) {
            c.values.push(rec[i].to_string());
        }
    }
    check_uniform(&log.t)?;
    Ok(log)
}

fn check_uniform(t: &[f64]) -> Result<()> {
    if t.len() < 3 {
        return Ok(());
    }
    let mean = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    for k in 1..t.len() {
        let d = t[k] - t[k - 1];
        if (d - mean).abs() > DT_UNIFORMITY_TOL * mean {
            return Err(Error::LogFormat {
                row: k + 1,
                message: format!("column t: sample period {d} deviates from the mean {mean}"),
            });
        }
    }
    Ok(())
}

/// Checks that `log` carries what a consumer of `kind` needs.
pub fn require_kind(log: &SensorLog, kind: LogKind) -> Result<()> {
    if kind == LogKind::InterImu && log.accel2.is_none() {
        return Err(Error::LogFormat {
            row: 0,
            message: "inter-imu mode requires columns a_m2_x,a_m2_y,a_m2_z".into(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Configuration

/// Integrator-chain motion model for one signal (applied per axis).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionModelConfig {
    pub order: usize,
    /// Process-noise intensity per derivative order, length `order`.
    pub q: Vec<f64>,
}

impl MotionModelConfig {
    fn new(q: Vec<f64>) -> Self {
        MotionModelConfig { order: q.len(), q }
    }

    pub fn build(&self, key: &str) -> Result<crate::motion_model::StatModel> {
        if self.q.len() != self.order {
            return Err(Error::Config(format!(
                "{key}.q has {} entries but {key}.order is {}",
                self.q.len(),
                self.order
            )));
        }
        crate::motion_model::make_integrator_model(self.order, &self.q)
            .map_err(|e| Error::Config(format!("{key}: {e}")))
    }
}

impl Default for MotionModelConfig {
    fn default() -> Self {
        MotionModelConfig::new(vec![0.0, 0.0, 0.0, 1e4])
    }
}

/// Initial error-state variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialCovariance {
    pub position: f64,
    pub velocity: f64,
    /// rad².
    pub attitude: f64,
    pub offset: f64,
    pub accel_bias: f64,
    pub gyro_bias: f64,
    pub gamma: f64,
}

impl Default for InitialCovariance {
    fn default() -> Self {
        InitialCovariance {
            position: 1.0,
            velocity: 1.0,
            attitude: 0.01,
            offset: 1.0,
            accel_bias: 1e-2,
            gyro_bias: 1e-2,
            gamma: 1.0,
        }
    }
}

/// POS-IMU filters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Specific-acceleration model of the state formulation.
    pub accel: MotionModelConfig,
    /// Angular-velocity model of the state formulation.
    pub gyro: MotionModelConfig,
    /// Bias random-walk intensities assumed by the filters.
    pub q_ba: f64,
    pub q_bw: f64,
    pub gravity: [f64; 3],
    pub joseph: bool,
    pub initial: InitialCovariance,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            accel: MotionModelConfig::new(vec![0.0, 0.0, 0.0, 1e4]),
            gyro: MotionModelConfig::new(vec![0.0, 0.0, 0.0, 1e3]),
            q_ba: 1e-6,
            q_bw: 1e-8,
            gravity: [0.0, 0.0, -9.81],
            joseph: false,
            initial: InitialCovariance::default(),
        }
    }
}

/// Inter-IMU calibration filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterImuConfig {
    /// Angular-acceleration model.
    pub tau: MotionModelConfig,
    /// Specific-acceleration model of IMU 1.
    pub accel: MotionModelConfig,
    pub q_ba: f64,
    pub q_bw: f64,
    pub initial: InterImuInitial,
    /// Sliding window (s) of the excitation check.
    pub excitation_window: f64,
}

impl Default for InterImuConfig {
    fn default() -> Self {
        InterImuConfig {
            tau: MotionModelConfig::new(vec![0.0, 0.0, 0.0, 1e5]),
            accel: MotionModelConfig::new(vec![0.0, 0.0, 0.0, 1e5]),
            q_ba: 1e-6,
            q_bw: 1e-8,
            initial: InterImuInitial::default(),
            excitation_window: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterImuInitial {
    pub bias: f64,
    pub omega: f64,
    pub offset: f64,
    /// rad².
    pub rotation: f64,
    pub gamma: f64,
}

impl Default for InterImuInitial {
    fn default() -> Self {
        InterImuInitial {
            bias: 1e-2,
            omega: 1.0,
            offset: 1.0,
            rotation: 0.1,
            gamma: 1.0,
        }
    }
}

/// Filter comparison settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Largest lag searched by the delay estimator, s.
    pub max_lag: f64,
    /// Initial transient excluded from the comparison, s.
    pub skip: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig { max_lag: 0.2, skip: 3.0 }
    }
}

/// Observability probe settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservabilityConfig {
    pub trials: usize,
    pub seed: u64,
    pub state_na: usize,
    pub state_nw: usize,
    pub inter_nt: usize,
    pub inter_na: usize,
    pub perturbation: f64,
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        ObservabilityConfig {
            trials: 100,
            seed: 1,
            state_na: 4,
            state_nw: 4,
            inter_nt: 4,
            inter_na: 4,
            perturbation: 1e-3,
        }
    }
}

/// Complete configuration. Every key is optional; unknown keys are
/// rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub trajectory: TrajectorySpec,
    pub sensors: SensorSpec,
    pub filter: FilterConfig,
    pub inter_imu: InterImuConfig,
    pub compare: CompareConfig,
    pub observability: ObservabilityConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        self.sensors.validate(self.trajectory.rate)?;
        self.filter.accel.build("filter.accel")?;
        self.filter.gyro.build("filter.gyro")?;
        self.inter_imu.tau.build("inter_imu.tau")?;
        self.inter_imu.accel.build("inter_imu.accel")?;
        let init = &self.filter.initial;
        let vars = [
            ("filter.initial.position", init.position),
            ("filter.initial.velocity", init.velocity),
            ("filter.initial.attitude", init.attitude),
            ("filter.initial.offset", init.offset),
            ("filter.initial.accel_bias", init.accel_bias),
            ("filter.initial.gyro_bias", init.gyro_bias),
            ("filter.initial.gamma", init.gamma),
            ("inter_imu.initial.bias", self.inter_imu.initial.bias),
            ("inter_imu.initial.omega", self.inter_imu.initial.omega),
            ("inter_imu.initial.offset", self.inter_imu.initial.offset),
            ("inter_imu.initial.rotation", self.inter_imu.initial.rotation),
            ("inter_imu.initial.gamma", self.inter_imu.initial.gamma),
        ];
        for (k, v) in vars {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{k} must be a positive variance, got {v}")));
            }
        }
        for (k, v) in [
            ("filter.q_ba", self.filter.q_ba),
            ("filter.q_bw", self.filter.q_bw),
            ("inter_imu.q_ba", self.inter_imu.q_ba),
            ("inter_imu.q_bw", self.inter_imu.q_bw),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{k} must be non-negative, got {v}")));
            }
        }
        if self.observability.trials == 0 {
            return Err(Error::Config("observability.trials must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<Config> {
    let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_hint(&e)))?;
    cfg.validate()?;
    Ok(cfg)
}

fn span_hint(e: &toml::de::Error) -> String {
    match e.span() {
        Some(s) => format!(" (at byte {})", s.start),
        None => String::new(),
    }
}

pub fn read_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, SecondImuSpec};

    fn short_log(second: bool) -> SensorLog {
        let traj = TrajectorySpec {
            duration: 0.2,
            ..TrajectorySpec::reference()
        };
        let sensors = SensorSpec {
            second_imu: second.then(SecondImuSpec::default),
            ..SensorSpec::default()
        };
        simulate(&traj, &sensors).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        for second in [false, true] {
            let mut log = short_log(second);
            log.extra.push(ExtraColumn {
                name: "note".into(),
                values: (0..log.len()).map(|k| format!("n{k}")).collect(),
            });
            let text = log_to_string(&log).unwrap();
            let back = parse_sensor_log(&text).unwrap();
            assert_eq!(back, log);
            assert_eq!(log_to_string(&back).unwrap(), text);
        }
    }

    #[test]
    fn round_trip_through_file() {
        let log = short_log(false);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_sensor_log(&path, &log).unwrap();
        assert_eq!(read_sensor_log(&path).unwrap(), log);
    }

    #[test]
    fn non_monotone_timestamp_names_row() {
        let log = short_log(false);
        let text = log_to_string(&log).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        // line 0 is the version line, line 1 the header, data row k is line k + 1
        let row16_t = log.t[15];
        let mut fields: Vec<String> = lines[18].split(',').map(str::to_string).collect();
        fields[0] = format!("{row16_t:?}");
        lines[18] = fields.join(",");
        let err = parse_sensor_log(&(lines.join("\n") + "\n")).unwrap_err();
        assert!(matches!(err, Error::LogFormat { row: 17, .. }), "{err}");
        assert!(err.to_string().contains("row 17"));
    }

    #[test]
    fn inter_imu_log_needs_second_accelerometer() {
        let log = short_log(false);
        let text = log_to_string(&log).unwrap().replacen("kind=pos-imu", "kind=inter-imu", 1);
        let err = parse_sensor_log(&text).unwrap_err();
        assert!(err.to_string().contains("a_m2"), "{err}");
        assert!(require_kind(&log, LogKind::InterImu).is_err());
    }

    #[test]
    fn rejects_bad_cells_and_headers() {
        let text = log_to_string(&short_log(false)).unwrap();
        assert!(parse_sensor_log(&text.replacen(LOG_MAGIC, "# other", 1)).is_err());
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[5] = lines[5].replacen(',', ",abc", 1);
        let err = parse_sensor_log(&lines.join("\n")).unwrap_err();
        assert!(err.to_string().contains("row 4") && err.to_string().contains("w_m_x"), "{err}");
    }

    #[test]
    fn empty_config_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), Config::default());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_config("[filter]\nq_bz = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("q_bz"), "{err}");
    }

    #[test]
    fn type_error_names_expected_type() {
        let err = parse_config("[filter]\nq_ba = \"big\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("q_ba") || msg.contains("f64") || msg.contains("float"), "{msg}");
    }

    #[test]
    fn q_length_must_match_order() {
        let err = parse_config("[filter.accel]\norder = 3\nq = [1.0, 2.0]\n").unwrap_err();
        assert!(err.to_string().contains("filter.accel.q"), "{err}");
    }

    #[test]
    fn reference_config_values() {
        let cfg = Config::default();
        assert_eq!(cfg.trajectory.duration, 15.0);
        assert_eq!(cfg.trajectory.takeoff_time, Some(2.0));
        assert_eq!(cfg.trajectory.hover_height, 5.0);
        assert_eq!(cfg.trajectory.landing_time, Some(12.0));
        assert_eq!(cfg.sensors.c, [0.5, 0.5, 0.5]);
    }

    #[test]
    fn config_toml_round_trip() {
        let mut cfg = Config::default();
        cfg.sensors.second_imu = Some(SecondImuSpec::default());
        let text = cfg.to_toml().unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
