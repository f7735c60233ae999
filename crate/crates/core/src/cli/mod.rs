//! Command-line front end: `simulate`, `verify` and `reduce` driven by a JSON
//! configuration, writing CSV trajectories and JSON reports.

pub mod checks;

use crate::analysis::critical_state;
use crate::error::{Error, Result};
use crate::fields::{full_from_flat, full_to_flat, FullField};
use crate::hyperel::{curve_data, CurveData};
use crate::integrate::{integrate, IntegratorConfig};
use crate::model::{
    gaussian, kinetic_forms, moment_and_energy, random_rotation, sample_level_state, BodyParams, FullState,
    LevelData,
};
use crate::reduction::{horizontalize_with, level_values, pencil, Branch, HorizontalReduction, Pencil};
use crate::vecrot::{Mat3, Rotation, Vec3};
use checks::{group_criteria, run_criterion, CriterionReport, Status, Tolerances};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "chaplygin", about = "Simulate and verify the rolling Chaplygin sphere")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a trajectory and write it as CSV with a JSON summary.
    Simulate(Common),
    /// Run a group of verification checks and write a JSON report.
    Verify(Common),
    /// Reduce a level to horizontal moment and emit the curve data.
    Reduce(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Run independent checks concurrently.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub inertia: [f64; 3],
    pub mass: f64,
    pub radius: f64,
}

impl Default for BodyConfig {
    fn default() -> Self {
        BodyConfig { inertia: [1.0, 2.0, 3.0], mass: 1.0, radius: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RotationSpec {
    /// Row-major 3×3 matrix.
    Matrix([f64; 9]),
    AxisAngle { axis: [f64; 3], angle: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub rotation: RotationSpec,
    pub omega: [f64; 3],
    #[serde(default)]
    pub p: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub j: [f64; 3],
    pub energy: f64,
}

/// How `simulate` chooses its initial condition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Uniform random rotation and Gaussian angular velocity.
    #[default]
    Random,
    /// The state given under `initial`.
    Custom,
    /// A point of a critical circle of `level.j` (default j = (2, 0, 0)).
    Equilibrium {
        #[serde(default)]
        axis: usize,
        #[serde(default = "one")]
        sign: f64,
    },
    /// A random point of `level`.
    Level,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpanConfig {
    pub t0: f64,
    pub t1: f64,
    /// Write every `stride`-th accepted step (the last is always written).
    pub stride: usize,
}

impl Default for SpanConfig {
    fn default() -> Self {
        SpanConfig { t0: 0.0, t1: 10.0, stride: 1 }
    }
}

fn all() -> String {
    "all".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub body: BodyConfig,
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub level: Option<LevelConfig>,
    #[serde(default)]
    pub span: SpanConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default = "all")]
    pub group: String,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config parses")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                RunConfig::from_json(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.integrator.validate()?;
        let s = &self.span;
        if !(s.t0.is_finite() && s.t1.is_finite()) || s.t1 < s.t0 || s.stride == 0 {
            return Err(Error::Config(format!("invalid span {s:?}")));
        }
        if self.tolerances.0.values().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config("tolerances must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<BodyParams> {
        let b = self.body;
        BodyParams::new(Vec3(b.inertia), b.mass, b.radius).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn level_data(&self) -> Option<LevelData> {
        self.level.map(|l| LevelData::new(Vec3(l.j), l.energy))
    }

    /// The initial state selected by the scenario.
    pub fn initial_state(&self, seed: u64) -> Result<FullState> {
        let params = self.params()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg_err = |e: Error| Error::Config(e.to_string());
        match self.scenario {
            Scenario::Random => {
                let a = random_rotation(&mut rng);
                Ok(FullState::new(a, Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng))))
            }
            Scenario::Custom => {
                let init = self.initial.ok_or_else(|| Error::Config("scenario custom needs `initial`".into()))?;
                let a = match init.rotation {
                    RotationSpec::Matrix(m) => Rotation::try_new(Mat3::from_flat(&m), 1e-9).map_err(cfg_err)?,
                    RotationSpec::AxisAngle { axis, angle } => {
                        if Vec3(axis).norm() == 0.0 {
                            return Err(Error::Config("rotation axis is zero".into()));
                        }
                        Rotation::from_axis_angle(Vec3(axis), angle)
                    }
                };
                let mut s = FullState::new(a, Vec3(init.omega));
                s.p = Vec3::new(init.p[0], init.p[1], 0.0);
                Ok(s)
            }
            Scenario::Equilibrium { axis, sign } => {
                if axis > 2 {
                    return Err(Error::Config(format!("axis {axis} out of range")));
                }
                let j = self.level.map_or(Vec3::new(2.0, 0.0, 0.0), |l| Vec3(l.j));
                critical_state(&params, j, axis, sign, 0.0).map_err(cfg_err)
            }
            Scenario::Level => {
                let level = self.level_data().ok_or_else(|| Error::Config("scenario level needs `level`".into()))?;
                sample_level_state(&params, &level, &mut rng).map_err(cfg_err)
            }
        }
    }
}

/// Maximum drifts over the written rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    /// max_k |j_k(t) − j_k(0)| / ‖j(0)‖
    pub moment: f64,
    /// |T(t) − T(0)| / T(0)
    pub energy: f64,
    /// |⟨u,u⟩ − 1|
    pub unit_u: f64,
    /// |Y² − XZ|
    pub f_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub scenario: Scenario,
    pub seed: u64,
    pub rows: usize,
    pub t0: f64,
    pub t1: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub initial_moment: [f64; 3],
    pub initial_energy: f64,
    pub drift: DriftSummary,
    pub runtime_seconds: f64,
}

/// Column names of the trajectory CSV.
pub const CSV_HEADER: [&str; 26] = [
    "t", "a11", "a12", "a13", "a21", "a22", "a23", "a31", "a32", "a33", "omega1", "omega2", "omega3", "p1", "p2",
    "u1", "u2", "u3", "v1", "v2", "v3", "j1", "j2", "j3", "energy", "f_residual",
];

/// One CSV row of derived quantities at a state.
pub fn csv_row(t: f64, s: &FullState, params: &BodyParams) -> Vec<f64> {
    let (j, energy) = moment_and_energy(s, params);
    let (u, v) = (s.u(), s.a.inv_apply(j));
    let f = kinetic_forms(u, v, energy, params).f;
    let mut row = Vec::with_capacity(26);
    row.push(t);
    row.extend(s.a.matrix().to_flat());
    row.extend(s.omega.0);
    row.extend([s.p[0], s.p[1]]);
    row.extend(u.0);
    row.extend(v.0);
    row.extend(j.0);
    row.push(energy);
    row.push(f);
    row
}

/// Drift maxima of the rows relative to the first row.
pub fn drift_of_rows(rows: &[Vec<f64>]) -> DriftSummary {
    let mut d = DriftSummary::default();
    let Some(r0) = rows.first() else { return d };
    let j0 = Vec3::new(r0[21], r0[22], r0[23]);
    let (jn, t0) = (j0.norm(), r0[24]);
    for r in rows {
        let dj = (Vec3::new(r[21], r[22], r[23]) - j0).max_abs();
        d.moment = d.moment.max(if jn > 0.0 { dj / jn } else { dj });
        d.energy = d.energy.max(if t0 > 0.0 { (r[24] - t0).abs() / t0 } else { (r[24] - t0).abs() });
        d.unit_u = d.unit_u.max((Vec3::new(r[15], r[16], r[17]).norm2() - 1.0).abs());
        d.f_residual = d.f_residual.max(r[25].abs());
    }
    d
}

/// Integrates the configured scenario and returns the rows and summary.
pub fn simulate(cfg: &RunConfig, seed: u64) -> Result<(Vec<Vec<f64>>, SimulateSummary)> {
    let started = Instant::now();
    cfg.validate()?;
    let params = cfg.params()?;
    let s0 = cfg.initial_state(seed)?;
    let span = cfg.span;
    let traj = integrate(&FullField::new(params), &full_to_flat(&s0, 0.0), span.t0, span.t1, &cfg.integrator)?;
    let n = traj.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .filter(|&i| i % span.stride == 0 || i + 1 == n)
        .map(|i| csv_row(traj.t[i], &full_from_flat(&traj.y[i]), &params))
        .collect();
    let (j0, t0) = moment_and_energy(&s0, &params);
    let summary = SimulateSummary {
        scenario: cfg.scenario,
        seed,
        rows: rows.len(),
        t0: span.t0,
        t1: span.t1,
        accepted_steps: traj.accepted,
        rejected_steps: traj.rejected,
        initial_moment: j0.0,
        initial_energy: t0,
        drift: drift_of_rows(&rows),
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((rows, summary))
}

/// Writes rows with a header and 17 significant digits.
pub fn write_csv<W: std::io::Write>(w: W, rows: &[Vec<f64>]) -> Result<()> {
    let io = |e: csv::Error| Error::Numerical(format!("csv: {e}"));
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        wr.write_record(r.iter().map(|x| format!("{x:.16e}"))).map_err(io)?;
    }
    wr.flush().map_err(|e| Error::Numerical(format!("csv: {e}")))?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::Reader::from_reader(r);
    let bad = |e: String| Error::Config(format!("csv: {e}"));
    let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(bad("unexpected header".into()));
    }
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            rec.iter().map(|f| f.parse::<f64>().map_err(|e| bad(e.to_string()))).collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub group: String,
    pub seed: u64,
    pub parallel: bool,
    pub pass: bool,
    pub criteria: Vec<CriterionReport>,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        if self.criteria.iter().any(|c| c.status == Status::Error) {
            EXIT_NUMERICAL
        } else if self.pass {
            EXIT_PASS
        } else {
            EXIT_CHECK
        }
    }
}

pub fn verify(cfg: &RunConfig, seed: u64, parallel: bool) -> Result<VerifyReport> {
    let list = group_criteria(&cfg.group).ok_or_else(|| {
        Error::Config(format!(
            "unknown group {:?}; expected invariants | measure | commute | hyperel | geometry | all",
            cfg.group
        ))
    })?;
    let run = |n: &u8| run_criterion(*n, seed, &cfg.tolerances);
    let criteria: Vec<CriterionReport> =
        if parallel { list.par_iter().map(run).collect() } else { list.iter().map(run).collect() };
    let pass = criteria.iter().all(|c| matches!(c.status, Status::Pass | Status::Warn));
    Ok(VerifyReport { group: cfg.group.clone(), seed, parallel, pass, criteria })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReduceReport {
    pub j: [f64; 3],
    pub energy: f64,
    pub pencil: Pencil,
    pub plus: HorizontalReduction,
    pub continuous: HorizontalReduction,
    /// Curve data of the continuous-branch horizontal level.
    pub curve: CurveData,
}

pub fn reduce(cfg: &RunConfig) -> Result<ReduceReport> {
    let params = cfg.params()?;
    let level = cfg.level_data().ok_or_else(|| Error::Config("reduce needs `level`".into()))?;
    let plus = horizontalize_with(&params, &level, Branch::Plus)?;
    let continuous = horizontalize_with(&params, &level, Branch::Continuous)?;
    let curve = curve_data(&continuous.params_tilde(), &continuous.level_tilde())?;
    Ok(ReduceReport {
        j: level.j.0,
        energy: level.energy,
        pencil: pencil(&level_values(&params, &level)),
        plus,
        continuous,
        curve,
    })
}

fn exit_code_of(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::StepLimit { .. } | Error::NonFinite { .. } | Error::StepUnderflow { .. } | Error::Numerical(_) => {
            EXIT_NUMERICAL
        }
        _ => EXIT_CHECK,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
        None => {
            stdout_line(text);
            Ok(())
        }
    }
}

/// Writes a line to stdout, ignoring a closed pipe.
fn stdout_line(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = RunConfig::load(c.config.as_deref())?;
            let (rows, summary) = simulate(&cfg, c.seed)?;
            let json = to_json(&summary);
            match &c.out {
                Some(p) => {
                    let f = std::fs::File::create(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    write_csv(std::io::BufWriter::new(f), &rows)?;
                    emit(Some(&p.with_extension("json")), &json)?;
                    stdout_line(&json);
                }
                None => {
                    write_csv(std::io::stdout().lock(), &rows)?;
                    eprintln!("{json}");
                }
            }
            Ok(EXIT_PASS)
        }
        Command::Verify(c) => {
            let cfg = RunConfig::load(c.config.as_deref())?;
            let report = verify(&cfg, c.seed, c.parallel)?;
            emit(c.out.as_deref(), &to_json(&report))?;
            let mut err = std::io::stderr().lock();
            for cr in &report.criteria {
                let _ = writeln!(err, "{:>2} {:<28} {:?}", cr.criterion, cr.title, cr.status);
            }
            Ok(report.exit_code())
        }
        Command::Reduce(c) => {
            let cfg = RunConfig::load(c.config.as_deref())?;
            let report = reduce(&cfg)?;
            emit(c.out.as_deref(), &to_json(&report))?;
            Ok(EXIT_PASS)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_of(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_errors() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.group, "all");
        assert_eq!(cfg.scenario, Scenario::Random);
        assert!(matches!(RunConfig::from_json("{"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"bogus": 1}"#), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_json(r#"{"body": {"inertia": [1, 2, 3], "mass": -1, "radius": 1}}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::from_json(r#"{"span": {"t0": 1, "t1": 0}}"#), Err(Error::Config(_))));
        let c = RunConfig::from_json(r#"{"scenario": {"kind": "equilibrium", "axis": 1}}"#).unwrap();
        assert_eq!(c.scenario, Scenario::Equilibrium { axis: 1, sign: 1.0 });
    }

    #[test]
    fn rotation_specs() {
        let m = r#"{"scenario": {"kind": "custom"}, "initial": {"rotation": [1,0,0,0,1,0,0,0,1], "omega": [0,0,1]}}"#;
        let s = RunConfig::from_json(m).unwrap().initial_state(1).unwrap();
        assert_eq!(s.a, Rotation::IDENTITY);
        let aa = r#"{"scenario": {"kind": "custom"},
            "initial": {"rotation": {"axis": [0,0,1], "angle": 0.5}, "omega": [0,0,1], "p": [1, 2]}}"#;
        let s = RunConfig::from_json(aa).unwrap().initial_state(1).unwrap();
        assert_eq!(s.p, Vec3::new(1.0, 2.0, 0.0));
        let bad = r#"{"scenario": {"kind": "custom"}, "initial": {"rotation": [2,0,0,0,1,0,0,0,1], "omega": [0,0,1]}}"#;
        assert!(matches!(RunConfig::from_json(bad).unwrap().initial_state(1), Err(Error::Config(_))));
    }

    #[test]
    fn equilibrium_has_no_drift() {
        let cfg = RunConfig::from_json(r#"{"scenario": {"kind": "equilibrium"}}"#).unwrap();
        let (_, s) = simulate(&cfg, 42).unwrap();
        let d = s.drift;
        assert!(d.moment <= 1e-10 && d.energy <= 1e-10 && d.unit_u <= 1e-10 && d.f_residual <= 1e-10, "{d:?}");
    }

    #[test]
    fn zero_span_gives_one_row() {
        let cfg = RunConfig::from_json(r#"{"span": {"t0": 0, "t1": 0}}"#).unwrap();
        let (rows, _) = simulate(&cfg, 42).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn csv_round_trip() {
        let cfg = RunConfig::from_json(r#"{"span": {"t1": 2, "stride": 3}}"#).unwrap();
        let (rows, summary) = simulate(&cfg, 7).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        let p = cfg.params().unwrap();
        let recomputed: Vec<Vec<f64>> = back
            .iter()
            .map(|r| {
                let a = Rotation::from_matrix_unchecked(Mat3::from_flat(&r[1..10]));
                let mut s = FullState::new(a, Vec3::from_slice(&r[10..13]));
                s.p = Vec3::new(r[13], r[14], 0.0);
                csv_row(r[0], &s, &p)
            })
            .collect();
        let d = drift_of_rows(&recomputed);
        assert!((d.moment - summary.drift.moment).abs() <= 1e-12);
        assert!((d.energy - summary.drift.energy).abs() <= 1e-12);
        assert!((d.f_residual - summary.drift.f_residual).abs() <= 1e-12);
    }

    #[test]
    fn reduce_examples() {
        let cfg = RunConfig::from_json(r#"{"level": {"j": [2, 0, 1], "energy": 1}}"#).unwrap();
        let r = reduce(&cfg).unwrap();
        assert!((r.plus.energy_tilde - 2.780776).abs() < 1e-6);
        let cfg = RunConfig::from_json(r#"{"level": {"j": [2, 0, 0], "energy": 0.8}}"#).unwrap();
        let r = reduce(&cfg).unwrap();
        let roots = r.pencil.roots.unwrap();
        assert!((roots[0] - 0.4).abs() < 1e-12 && (roots[1] - 1.0).abs() < 1e-12);
        assert!((r.curve.gamma - 2.0 / 3.0).abs() < 1e-15 && (r.curve.c2 - 2.4).abs() < 1e-12);
        let cfg = RunConfig::from_json(r#"{"level": {"j": [0, 0, 3], "energy": 1}}"#).unwrap();
        let e = reduce(&cfg).unwrap_err();
        assert!(e.to_string().contains("vertical moment"));
        assert_eq!(exit_code_of(&e), EXIT_CHECK);
    }

    #[test]
    fn unknown_group_is_config_error() {
        let cfg = RunConfig::from_json(r#"{"group": "nope"}"#).unwrap();
        assert!(matches!(verify(&cfg, 42, false), Err(Error::Config(_))));
    }

    #[test]
    fn zero_tolerance_fails() {
        let cfg = RunConfig::from_json(r#"{"group": "geometry", "tolerances": {"*": 0}}"#).unwrap();
        assert_eq!(verify(&cfg, 42, false).unwrap().exit_code(), EXIT_CHECK);
    }
}
