//! Experiment configuration, presets, the Monte Carlo runner and CSV emission.
//!
//! Every number written to disk uses 12 significant digits. Wall time is written as zero
//! unless `run.timing` is set, so that outputs are byte-identical across runs.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::{active_bf_sdp, run_algorithm3, run_scheme_from, AoInit, AoOptions, BeamSolution, BfOptions, FullSolution, Scheme, StarsProfile};
use crate::channel::ChannelSet;
use crate::deploy::{deploy_coefficients, run_algorithm1_with, scan_sensor_count};
use crate::error::{Error, Result};
use crate::estimate::{ml_estimate, music_estimate, rmse, synthesize_echo, GridSpec};
use crate::fim::{closed_form_fim, exact_fim, fd_fim_oracle, round_trip_alpha, speb_from_fim, Scenario};
use crate::geometry::{cartesian_from_polar, CartesianPosition, PolarPosition, SystemConfig, SPEED_OF_LIGHT};
use crate::sample::rng;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

/// Geometry overrides on top of the desk defaults. Spacings are in wavelengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n_bs: Option<usize>,
    pub m_star: Option<usize>,
    pub m_sensor: Option<usize>,
    pub freq_ghz: Option<f64>,
    pub d_b_wl: Option<f64>,
    pub d_r_wl: Option<f64>,
    pub d_s_wl: Option<f64>,
    pub h_a: Option<f64>,
    pub r_br: Option<f64>,
}

impl SystemSection {
    pub fn resolve(&self) -> Result<SystemConfig> {
        let mut c = SystemConfig::desk();
        if let Some(f) = self.freq_ghz {
            c.lambda_c = SPEED_OF_LIGHT / (f * 1e9);
        }
        let lam = c.lambda_c;
        c.n_bs = self.n_bs.unwrap_or(c.n_bs);
        c.m_star = self.m_star.unwrap_or(c.m_star);
        c.m_sensor = self.m_sensor.unwrap_or(c.m_star.min(c.m_sensor));
        c.d_b = self.d_b_wl.unwrap_or(0.5) * lam;
        c.d_r = self.d_r_wl.unwrap_or(0.5) * lam;
        c.d_s = self.d_s_wl.unwrap_or(0.5) * lam;
        c.h_a = self.h_a.unwrap_or(c.h_a);
        c.r_br = self.r_br.unwrap_or(c.r_br);
        c.validate()?;
        Ok(c)
    }
}

/// Target and user placement, link budget and cost weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub st_r: f64,
    pub st_theta_deg: f64,
    /// Radius of the disc around the target centre.
    pub r_sen: f64,
    pub angle_lo_deg: f64,
    pub angle_hi_deg: f64,
    pub cu_r_lo: f64,
    pub cu_r_hi: f64,
    pub cu_angle_lo_deg: f64,
    pub cu_angle_hi_deg: f64,
    pub sigma2_dbm: f64,
    pub p_max_dbm: f64,
    pub r_min: f64,
    pub omega0: f64,
    pub eps0: f64,
    pub m0: Option<f64>,
    pub l_slots: usize,
    pub rcs: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            st_r: 8.0,
            st_theta_deg: 90.0,
            r_sen: 3.0,
            angle_lo_deg: 45.0,
            angle_hi_deg: 135.0,
            cu_r_lo: 3.0,
            cu_r_hi: 8.0,
            cu_angle_lo_deg: 45.0,
            cu_angle_hi_deg: 135.0,
            sigma2_dbm: -90.0,
            p_max_dbm: 30.0,
            r_min: 1.0,
            omega0: 0.5,
            eps0: 1e-5,
            m0: None,
            l_slots: 32,
            rcs: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    PMaxDbm,
    MStar,
    Sigma2Dbm,
    MSensor,
    DSWl,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::PMaxDbm => "p_max_dbm",
            SweepVar::MStar => "m_star",
            SweepVar::Sigma2Dbm => "sigma2_dbm",
            SweepVar::MSensor => "m_sensor",
            SweepVar::DSWl => "d_s_wl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVar,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    /// Record wall time (breaks byte-identical output).
    pub timing: bool,
    pub max_outer: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { trials: 20, seed: 1, schemes: Scheme::ALL.to_vec(), timing: false, max_outer: 15 }
    }
}

/// Estimator study settings. The target sits at the scenario centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationSection {
    pub noise_dbm: Vec<f64>,
    pub half_r: f64,
    pub half_theta_deg: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl Default for EstimationSection {
    fn default() -> Self {
        EstimationSection { noise_dbm: vec![-185.0, -180.0, -175.0], half_r: 1.5, half_theta_deg: 4.0, n_r: 61, n_theta: 61 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ValidateSpeb,
    Convergence,
    Sweep,
    Rmse,
    Solve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub estimation: EstimationSection,
}

pub const PRESET_NAMES: [&str; 6] = ["validate-speb", "convergence", "sweep-power", "sweep-elements", "rmse", "solve"];

/// Link budget shared by the optimization presets; the desk-scale arrays need a low noise floor
/// to reach the rate threshold.
fn desk_scenario() -> ScenarioSection {
    ScenarioSection { sigma2_dbm: -130.0, eps0: 100.0, ..ScenarioSection::default() }
}

fn desk_system() -> SystemSection {
    SystemSection { n_bs: Some(16), m_star: Some(8), m_sensor: Some(8), ..SystemSection::default() }
}

/// Named desk-scale configurations for each figure-style experiment.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let base = |kind| ExperimentConfig {
        name: name.to_string(),
        kind,
        system: desk_system(),
        scenario: desk_scenario(),
        sweep: None,
        run: RunSection::default(),
        estimation: EstimationSection::default(),
    };
    Some(match name {
        "validate-speb" => ExperimentConfig {
            system: SystemSection { n_bs: Some(8), m_star: Some(8), m_sensor: Some(8), ..SystemSection::default() },
            sweep: Some(SweepSection { variable: SweepVar::MSensor, values: vec![2.0, 4.0, 6.0, 8.0] }),
            run: RunSection { trials: 100, ..RunSection::default() },
            ..base(ExperimentKind::ValidateSpeb)
        },
        "convergence" => ExperimentConfig { run: RunSection { trials: 3, schemes: vec![Scheme::Proposed], ..RunSection::default() }, ..base(ExperimentKind::Convergence) },
        "sweep-power" => ExperimentConfig {
            sweep: Some(SweepSection { variable: SweepVar::PMaxDbm, values: vec![25.0, 30.0, 35.0] }),
            ..base(ExperimentKind::Sweep)
        },
        "sweep-elements" => ExperimentConfig {
            system: SystemSection { m_sensor: Some(4), ..desk_system() },
            scenario: ScenarioSection { p_max_dbm: 35.0, ..desk_scenario() },
            sweep: Some(SweepSection { variable: SweepVar::MStar, values: vec![4.0, 8.0] }),
            ..base(ExperimentKind::Sweep)
        },
        "rmse" => ExperimentConfig {
            system: SystemSection { n_bs: Some(8), m_star: Some(8), m_sensor: Some(8), ..SystemSection::default() },
            scenario: ScenarioSection { st_r: 6.0, st_theta_deg: 70.0, l_slots: 16, ..desk_scenario() },
            run: RunSection { trials: 200, ..RunSection::default() },
            ..base(ExperimentKind::Rmse)
        },
        "solve" => ExperimentConfig { run: RunSection { trials: 1, schemes: vec![Scheme::Proposed], ..RunSection::default() }, ..base(ExperimentKind::Solve) },
        _ => return None,
    })
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.trials < 1 {
            return Err(Error::Config("run.trials must be >= 1".into()));
        }
        if self.run.schemes.is_empty() {
            return Err(Error::Config("run.schemes must not be empty".into()));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() || sw.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("sweep values must be finite and nonempty".into()));
            }
            if sw.values.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config("sweep values must be strictly increasing".into()));
            }
        }
        let s = &self.scenario;
        if !(s.angle_lo_deg < s.angle_hi_deg && s.cu_r_lo > 0.0 && s.cu_r_lo <= s.cu_r_hi && s.r_sen >= 0.0 && s.st_r > 0.0) {
            return Err(Error::Config("inconsistent scenario ranges".into()));
        }
        if self.kind == ExperimentKind::Rmse && (self.estimation.noise_dbm.is_empty() || self.estimation.n_r < 3 || self.estimation.n_theta < 3) {
            return Err(Error::Config("estimation needs noise levels and at least 3 grid points per axis".into()));
        }
        for v in self.sweep_values() {
            self.resolve(v)?;
        }
        Ok(())
    }

    /// Sweep points; a single `NaN` stands for "no sweep".
    pub fn sweep_values(&self) -> Vec<f64> {
        self.sweep.as_ref().map(|s| s.values.clone()).unwrap_or_else(|| vec![f64::NAN])
    }

    /// System and scenario section with one sweep value applied.
    pub fn resolve(&self, value: f64) -> Result<(SystemConfig, ScenarioSection)> {
        let mut sys = self.system.clone();
        let mut scn = self.scenario.clone();
        if let Some(sw) = &self.sweep {
            let as_count = |v: f64| -> Result<usize> {
                if v.fract() != 0.0 || v < 2.0 {
                    return Err(Error::Config(format!("{} must be an integer >= 2, got {v}", sw.variable.name())));
                }
                Ok(v as usize)
            };
            match sw.variable {
                SweepVar::PMaxDbm => scn.p_max_dbm = value,
                SweepVar::Sigma2Dbm => scn.sigma2_dbm = value,
                SweepVar::MStar => sys.m_star = Some(as_count(value)?),
                SweepVar::MSensor => sys.m_sensor = Some(as_count(value)?),
                SweepVar::DSWl => sys.d_s_wl = Some(value),
            }
        }
        Ok((sys.resolve()?, scn))
    }

    fn fixed_deployment(&self) -> bool {
        matches!(self.sweep.as_ref().map(|s| s.variable), Some(SweepVar::MSensor | SweepVar::DSWl))
    }
}

/// Seed of trial `t`, shared by every scheme and sweep value.
pub fn trial_seed(base: u64, t: usize) -> u64 {
    let mut z = base.wrapping_add((t as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d1_049b_1331_11eb);
    z ^ (z >> 31)
}

/// Excludes the directions where the Cartesian position transform degenerates.
fn admissible(p: PolarPosition, sys: &SystemConfig) -> bool {
    p.r > 2.0 * sys.h_a.max(0.1) && (p.theta - PI / 2.0).abs() > 0.02 && (p.theta - 3.0 * PI / 4.0).abs() > 0.02 && p.theta > 0.0 && p.theta < PI
}

/// Random target in the disc around the centre (restricted to the angle interval) and a
/// random user, with the round-trip reflection at the drawn range.
pub fn draw_scenario(sec: &ScenarioSection, sys: &SystemConfig, seed: u64) -> Result<Scenario> {
    let mut r = rng(seed);
    let c = cartesian_from_polar(PolarPosition::new(sec.st_r, sec.st_theta_deg.to_radians()));
    let (lo, hi) = (sec.angle_lo_deg.to_radians(), sec.angle_hi_deg.to_radians());
    let mut st = None;
    for _ in 0..10_000 {
        let rad = sec.r_sen * r.random::<f64>().sqrt();
        let phi = r.random_range(0.0..2.0 * PI);
        let p = CartesianPosition::new(c.x + rad * phi.cos(), c.y + rad * phi.sin());
        let pol = PolarPosition::new(p.x.hypot(p.y), p.y.atan2(p.x));
        if pol.theta >= lo && pol.theta <= hi && admissible(pol, sys) {
            st = Some(pol);
            break;
        }
    }
    let st = st.ok_or_else(|| Error::Config("no admissible target position in the configured region".into()))?;
    let cu = PolarPosition::new(
        r.random_range(sec.cu_r_lo..=sec.cu_r_hi),
        r.random_range(sec.cu_angle_lo_deg.to_radians()..=sec.cu_angle_hi_deg.to_radians()),
    );
    scenario_at(sec, sys, st, cu)
}

pub fn scenario_at(sec: &ScenarioSection, sys: &SystemConfig, st: PolarPosition, cu: PolarPosition) -> Result<Scenario> {
    let scn = Scenario {
        st,
        cu,
        alpha_s: round_trip_alpha(st.r, sys.lambda_c, sec.rcs),
        sigma2: dbm_to_watts(sec.sigma2_dbm),
        l_slots: sec.l_slots,
        p_max: dbm_to_watts(sec.p_max_dbm),
        r_min: sec.r_min,
        omega0: sec.omega0,
        eps0: sec.eps0,
        m0: sec.m0.unwrap_or(sys.m_star as f64),
    };
    scn.validate()?;
    Ok(scn)
}

/// One scheme on one trial at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub seed: u64,
    pub cf: f64,
    pub speb: f64,
    pub rate: f64,
    pub m_r: usize,
    pub d_s: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub status: String,
}

impl TrialRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

pub const TRIAL_HEADER: &str = "scheme,sweep_value,seed,cf,speb,rate,m_r,d_s,iterations,wall_time,status";
pub const AGGREGATE_HEADER: &str = "sweep_value,scheme,trials_total,trials_common,mean_cf,mean_speb,mean_rate";

fn status_of(e: &Error) -> &'static str {
    match e {
        Error::Infeasible { .. } => "infeasible",
        Error::RateUnreachable { .. } => "rate_unreachable",
        Error::Solver(_) => "solver_failure",
        Error::Singular { .. } => "singular",
        _ => "error",
    }
}

const SCHEME_SALT: u64 = 0x5eed_0f5c_4e3e_0001;

fn ao_options(exp: &ExperimentConfig) -> AoOptions {
    AoOptions { max_outer: exp.run.max_outer, ..AoOptions::standard() }
}

/// Runs one scheme on the scenario of trial `t`.
pub fn run_trial(exp: &ExperimentConfig, value: f64, t: usize, scheme: Scheme) -> TrialRecord {
    let seed = trial_seed(exp.run.seed, t);
    let mut rec = TrialRecord {
        scheme,
        sweep_value: value,
        seed,
        cf: f64::NAN,
        speb: f64::NAN,
        rate: f64::NAN,
        m_r: 0,
        d_s: f64::NAN,
        iterations: 0,
        wall_time: 0.0,
        status: String::new(),
    };
    let start = Instant::now();
    let res = (|| -> Result<FullSolution> {
        let (sys, sec) = exp.resolve(value)?;
        let scn = draw_scenario(&sec, &sys, seed)?;
        let mut init = AoInit::standard(&scn, &sys);
        let mut opts = ao_options(exp);
        if exp.fixed_deployment() {
            init.m_r = sys.m_sensor;
            init.d_s = sys.d_s;
            opts.fixed_deployment = true;
        }
        let mut r = rng(seed ^ SCHEME_SALT);
        run_scheme_from(scheme, &scn, &sys, init, &opts, &mut r)
    })();
    if exp.run.timing {
        rec.wall_time = start.elapsed().as_secs_f64();
    }
    match res {
        Ok(sol) => {
            let last = sol.trace.last().cloned();
            rec.cf = sol.plan.cf_value;
            rec.speb = sol.plan.speb_value;
            rec.rate = last.as_ref().map(|r| r.rate).unwrap_or(f64::NAN);
            rec.m_r = sol.plan.m_r;
            rec.d_s = sol.plan.d_s;
            rec.iterations = sol.iterations;
            let feasible = last.map(|r| r.feasible).unwrap_or(false);
            rec.status = if !feasible {
                "infeasible".into()
            } else if rec.cf.is_finite() && rec.speb > 0.0 && rec.speb.is_finite() {
                "ok".into()
            } else {
                "error".into()
            };
        }
        Err(e) => rec.status = status_of(&e).into(),
    }
    rec
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Every (sweep value, scheme, trial) combination; output sorted by sweep value, scheme, trial.
pub fn run_montecarlo(exp: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<TrialRecord>> {
    exp.validate()?;
    let values = exp.sweep_values();
    let mut jobs = Vec::new();
    for (vi, &v) in values.iter().enumerate() {
        for &s in &exp.run.schemes {
            for t in 0..exp.run.trials {
                jobs.push((vi, v, s, t));
            }
        }
    }
    let mut out: Vec<((usize, Scheme, usize), TrialRecord)> =
        with_threads(threads, || jobs.par_iter().map(|&(vi, v, s, t)| ((vi, s, t), run_trial(exp, v, t, s))).collect())?;
    out.sort_by_key(|a| a.0);
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub trials_total: usize,
    /// Trials on which every scheme of the run succeeded; the means use these only.
    pub trials_common: usize,
    pub mean_cf: f64,
    pub mean_speb: f64,
    pub mean_rate: f64,
}

fn same_value(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// Per sweep value and scheme means over the trials common to all schemes.
pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateRow> {
    let mut values: Vec<f64> = Vec::new();
    let mut schemes: Vec<Scheme> = Vec::new();
    for r in records {
        if !values.iter().any(|v| same_value(*v, r.sweep_value)) {
            values.push(r.sweep_value);
        }
        if !schemes.contains(&r.scheme) {
            schemes.push(r.scheme);
        }
    }
    values.sort_by(f64::total_cmp);
    schemes.sort();
    let mut rows = Vec::new();
    for &v in &values {
        let at: Vec<&TrialRecord> = records.iter().filter(|r| same_value(r.sweep_value, v)).collect();
        let mut seeds: Vec<u64> = at.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let common: Vec<u64> = seeds
            .into_iter()
            .filter(|s| schemes.iter().all(|sc| at.iter().any(|r| r.seed == *s && r.scheme == *sc && r.ok())))
            .collect();
        for &sc in &schemes {
            let mine: Vec<&&TrialRecord> = at.iter().filter(|r| r.scheme == sc).collect();
            let used: Vec<&&TrialRecord> = mine.iter().copied().filter(|r| common.contains(&r.seed)).collect();
            let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
                if used.is_empty() {
                    f64::NAN
                } else {
                    used.iter().map(|r| f(r)).sum::<f64>() / used.len() as f64
                }
            };
            rows.push(AggregateRow {
                sweep_value: v,
                scheme: sc,
                trials_total: mine.len(),
                trials_common: used.len(),
                mean_cf: mean(&|r| r.cf),
                mean_speb: mean(&|r| r.speb),
                mean_rate: mean(&|r| r.rate),
            });
        }
    }
    rows
}

/// 12 significant digits.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.11e}")
    }
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<PathBuf> {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(path.to_path_buf())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes `<name>_trials.csv` and `<name>_aggregate.csv`.
pub fn emit_results(records: &[TrialRecord], dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Config("no records to emit".into()));
    }
    ensure_dir(dir)?;
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.scheme.to_string(),
                num(r.sweep_value),
                r.seed.to_string(),
                num(r.cf),
                num(r.speb),
                num(r.rate),
                r.m_r.to_string(),
                num(r.d_s),
                r.iterations.to_string(),
                num(r.wall_time),
                r.status.clone(),
            ]
        })
        .collect();
    let aggs: Vec<Vec<String>> = aggregate(records)
        .iter()
        .map(|a| {
            vec![
                num(a.sweep_value),
                a.scheme.to_string(),
                a.trials_total.to_string(),
                a.trials_common.to_string(),
                num(a.mean_cf),
                num(a.mean_speb),
                num(a.mean_rate),
            ]
        })
        .collect();
    Ok(vec![
        write_csv(&dir.join(format!("{name}_trials.csv")), TRIAL_HEADER, &rows)?,
        write_csv(&dir.join(format!("{name}_aggregate.csv")), AGGREGATE_HEADER, &aggs)?,
    ])
}

/// Parses a trial file written by [`emit_results`].
pub fn parse_trials(text: &str) -> Result<Vec<TrialRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRIAL_HEADER) {
        return Err(Error::Config("unexpected trial header".into()));
    }
    let bad = |l: &str| Error::Config(format!("malformed trial row: {l}"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 11 {
                return Err(bad(l));
            }
            let scheme = Scheme::ALL.iter().copied().find(|s| s.name() == f[0]).ok_or_else(|| bad(l))?;
            let p = |s: &str| s.parse::<f64>().map_err(|_| bad(l));
            Ok(TrialRecord {
                scheme,
                sweep_value: p(f[1])?,
                seed: f[2].parse().map_err(|_| bad(l))?,
                cf: p(f[3])?,
                speb: p(f[4])?,
                rate: p(f[5])?,
                m_r: f[6].parse().map_err(|_| bad(l))?,
                d_s: p(f[7])?,
                iterations: f[8].parse().map_err(|_| bad(l))?,
                wall_time: p(f[9])?,
                status: f[10].to_string(),
            })
        })
        .collect()
}

/// Closed-form against exact SPEB at the initial operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct SpebRow {
    pub sweep_value: f64,
    pub seed: u64,
    pub r: f64,
    pub theta: f64,
    pub speb_exact: f64,
    pub speb_closed: f64,
    pub rel_err: f64,
    pub offdiag_ratio: f64,
}

pub fn run_validate_speb(exp: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<SpebRow>> {
    exp.validate()?;
    let mut jobs = Vec::new();
    for v in exp.sweep_values() {
        for t in 0..exp.run.trials {
            jobs.push((v, t));
        }
    }
    with_threads(threads, || {
        jobs.par_iter()
            .map(|&(v, t)| {
                let (sys, sec) = exp.resolve(v)?;
                let seed = trial_seed(exp.run.seed, t);
                let scn = draw_scenario(&sec, &sys, seed)?;
                let init = AoInit::standard(&scn, &sys);
                let rx = init.solution.rx();
                let ex = exact_fim(&rx, &init.profile, scn.st, &scn, &sys)?;
                let cf = closed_form_fim(&rx, &init.profile, scn.st, &scn, &sys)?;
                let pos = cartesian_from_polar(scn.st);
                let se = speb_from_fim(&ex, pos)?;
                let sc = speb_from_fim(&cf, pos)?;
                Ok(SpebRow {
                    sweep_value: v,
                    seed,
                    r: scn.st.r,
                    theta: scn.st.theta,
                    speb_exact: se,
                    speb_closed: sc,
                    rel_err: (sc - se).abs() / se,
                    offdiag_ratio: ex.offdiag_ratio,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
}

pub fn emit_speb(rows: &[SpebRow], dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.sweep_value), r.seed.to_string(), num(r.r), num(r.theta), num(r.speb_exact), num(r.speb_closed), num(r.rel_err), num(r.offdiag_ratio)])
        .collect();
    let mut values: Vec<f64> = rows.iter().map(|r| r.sweep_value).collect();
    values.dedup_by(|a, b| same_value(*a, *b));
    let agg: Vec<Vec<String>> = values
        .iter()
        .map(|&v| {
            let at: Vec<&SpebRow> = rows.iter().filter(|r| same_value(r.sweep_value, v)).collect();
            let n = at.len() as f64;
            vec![
                num(v),
                at.len().to_string(),
                num(at.iter().map(|r| r.speb_exact).sum::<f64>() / n),
                num(at.iter().map(|r| r.speb_closed).sum::<f64>() / n),
                num(at.iter().map(|r| r.rel_err).fold(0.0, f64::max)),
                num(at.iter().map(|r| r.offdiag_ratio).fold(0.0, f64::max)),
            ]
        })
        .collect();
    Ok(vec![
        write_csv(&dir.join(format!("{name}_speb.csv")), "sweep_value,seed,r,theta,speb_exact,speb_closed,rel_err,offdiag_ratio", &body)?,
        write_csv(&dir.join(format!("{name}_aggregate.csv")), "sweep_value,trials,mean_speb_exact,mean_speb_closed,max_rel_err,max_offdiag_ratio", &agg)?,
    ])
}

/// Per-iteration cost trace of the full alternation.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub seed: u64,
    pub iteration: usize,
    pub cf: f64,
    pub speb: f64,
    pub rate: f64,
    pub penalty: f64,
    pub power: f64,
    pub feasible: bool,
}

pub fn run_convergence(exp: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<TraceRecord>> {
    exp.validate()?;
    let v = exp.sweep_values()[0];
    let rows: Vec<Result<Vec<TraceRecord>>> = with_threads(threads, || {
        (0..exp.run.trials)
            .into_par_iter()
            .map(|t| {
                let (sys, sec) = exp.resolve(v)?;
                let seed = trial_seed(exp.run.seed, t);
                let scn = draw_scenario(&sec, &sys, seed)?;
                let sol = run_algorithm3(&scn, &sys, &AoInit::standard(&scn, &sys), &ao_options(exp))?;
                Ok(sol
                    .trace
                    .iter()
                    .map(|r| TraceRecord { seed, iteration: r.iteration, cf: r.cf, speb: r.speb, rate: r.rate, penalty: r.penalty, power: r.power, feasible: r.feasible })
                    .collect())
            })
            .collect()
    })?;
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

pub fn emit_trace(rows: &[TraceRecord], dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.seed.to_string(), r.iteration.to_string(), num(r.cf), num(r.speb), num(r.rate), num(r.penalty), num(r.power), r.feasible.to_string()])
        .collect();
    Ok(vec![write_csv(&dir.join(format!("{name}_trace.csv")), "seed,iteration,cf,speb,rate,penalty,power,feasible", &body)?])
}

/// Estimates of one noise realization.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub noise_dbm: f64,
    pub seed: u64,
    pub ml: PolarPosition,
    pub music: PolarPosition,
    pub truth: PolarPosition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub noise_dbm: f64,
    pub trials: usize,
    pub speb: f64,
    pub ml_rmse: f64,
    pub music_rmse: f64,
    /// Standard error of the ML mean squared error.
    pub ml_mse_sem: f64,
}

fn sq_err(a: PolarPosition, b: PolarPosition) -> f64 {
    let (p, q) = (cartesian_from_polar(a), cartesian_from_polar(b));
    (p.x - q.x).powi(2) + (p.y - q.y).powi(2)
}

/// Operating point of the estimator study: the active beamformer at the uniform profile, or
/// the isotropic covariance if the rate threshold cannot be met.
fn estimation_operating_point(scn: &Scenario, sys: &SystemConfig) -> Result<(BeamSolution, StarsProfile)> {
    let chans = ChannelSet::new(sys, scn.cu)?;
    let prof = StarsProfile::uniform(sys.star_elements());
    let sol = active_bf_sdp(&prof, &chans, scn, sys, &BfOptions::default()).unwrap_or_else(|_| BeamSolution::isotropic(sys.bs_elements(), scn.p_max));
    Ok((sol, prof))
}

pub fn run_rmse(exp: &ExperimentConfig, threads: Option<usize>) -> Result<(Vec<EstimateRecord>, Vec<RmseRow>)> {
    exp.validate()?;
    let (sys, sec) = exp.resolve(exp.sweep_values()[0])?;
    let st = PolarPosition::new(sec.st_r, sec.st_theta_deg.to_radians());
    if !admissible(st, &sys) {
        return Err(Error::Config("estimation target sits on a degenerate direction".into()));
    }
    let cu = PolarPosition::new(0.5 * (sec.cu_r_lo + sec.cu_r_hi), 0.5 * (sec.cu_angle_lo_deg + sec.cu_angle_hi_deg).to_radians());
    let base = scenario_at(&sec, &sys, st, cu)?;
    let (sol, prof) = estimation_operating_point(&base, &sys)?;
    let est = &exp.estimation;
    let cell_r = 2.0 * est.half_r / (est.n_r - 1) as f64;
    let cell_th = 2.0 * est.half_theta_deg.to_radians() / (est.n_theta - 1) as f64;
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for &nd in &est.noise_dbm {
        let mut scn = base.clone();
        scn.sigma2 = dbm_to_watts(nd);
        let fim = exact_fim(&sol.rx(), &prof, st, &scn, &sys)?;
        let speb = speb_from_fim(&fim, cartesian_from_polar(st))?;
        let recs: Vec<Result<EstimateRecord>> = with_threads(threads, || {
            (0..exp.run.trials)
                .into_par_iter()
                .map(|t| {
                    let seed = trial_seed(exp.run.seed ^ nd.to_bits(), t);
                    let block = synthesize_echo(&sol, &prof, st, &scn, &sys, seed)?;
                    // Random sub-cell offset keeps the truth off the grid.
                    let mut r = rng(seed ^ SCHEME_SALT);
                    let centre = PolarPosition::new(st.r + cell_r * (r.random::<f64>() - 0.5), st.theta + cell_th * (r.random::<f64>() - 0.5));
                    let grid = GridSpec::around(centre, est.half_r, est.half_theta_deg.to_radians(), est.n_r, est.n_theta);
                    let ml = ml_estimate(&block, &grid, &prof, &sys)?;
                    let music = music_estimate(&block, &grid, &sys)?.estimate;
                    Ok(EstimateRecord { noise_dbm: nd, seed, ml, music, truth: st })
                })
                .collect()
        })?;
        let recs: Vec<EstimateRecord> = recs.into_iter().collect::<Result<_>>()?;
        let n = recs.len() as f64;
        let se: Vec<f64> = recs.iter().map(|r| sq_err(r.ml, r.truth)).collect();
        let mse = se.iter().sum::<f64>() / n;
        let var = se.iter().map(|v| (v - mse).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        rows.push(RmseRow {
            noise_dbm: nd,
            trials: recs.len(),
            speb,
            ml_rmse: rmse(&recs.iter().map(|r| (r.ml, r.truth)).collect::<Vec<_>>())?,
            music_rmse: rmse(&recs.iter().map(|r| (r.music, r.truth)).collect::<Vec<_>>())?,
            ml_mse_sem: (var / n).sqrt(),
        });
        records.extend(recs);
    }
    Ok((records, rows))
}

pub fn emit_rmse(records: &[EstimateRecord], rows: &[RmseRow], dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let body: Vec<Vec<String>> = records
        .iter()
        .map(|r| vec![num(r.noise_dbm), r.seed.to_string(), num(r.ml.r), num(r.ml.theta), num(r.music.r), num(r.music.theta), num(r.truth.r), num(r.truth.theta)])
        .collect();
    let agg: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.noise_dbm), r.trials.to_string(), num(r.speb), num(r.ml_rmse), num(r.music_rmse), num(r.ml_mse_sem)])
        .collect();
    Ok(vec![
        write_csv(&dir.join(format!("{name}_trials.csv")), "noise_dbm,seed,ml_r,ml_theta,music_r,music_theta,truth_r,truth_theta", &body)?,
        write_csv(&dir.join(format!("{name}_aggregate.csv")), "noise_dbm,trials,speb,ml_rmse,music_rmse,ml_mse_sem", &agg)?,
    ])
}

/// Full alternation on the scenario of trial 0.
pub fn run_solve(exp: &ExperimentConfig) -> Result<(Scenario, FullSolution)> {
    exp.validate()?;
    let (sys, sec) = exp.resolve(exp.sweep_values()[0])?;
    let scn = draw_scenario(&sec, &sys, trial_seed(exp.run.seed, 0))?;
    let sol = run_algorithm3(&scn, &sys, &AoInit::standard(&scn, &sys), &ao_options(exp))?;
    Ok((scn, sol))
}

pub fn emit_solve(scn: &Scenario, sol: &FullSolution, dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let seed = 0;
    let trace: Vec<TraceRecord> = sol
        .trace
        .iter()
        .map(|r| TraceRecord { seed, iteration: r.iteration, cf: r.cf, speb: r.speb, rate: r.rate, penalty: r.penalty, power: r.power, feasible: r.feasible })
        .collect();
    let mut paths = emit_trace(&trace, dir, name)?;
    let mut s = String::new();
    let _ = writeln!(s, "st_r,{}\nst_theta,{}\ncu_r,{}\ncu_theta,{}", num(scn.st.r), num(scn.st.theta), num(scn.cu.r), num(scn.cu.theta));
    let _ = writeln!(s, "m_r,{}\nd_s,{}\ncf,{}\nspeb,{}\niterations,{}", sol.plan.m_r, num(sol.plan.d_s), num(sol.plan.cf_value), num(sol.plan.speb_value), sol.iterations);
    let _ = writeln!(s, "power,{}\nrank_one,{}", num(sol.solution.power()), sol.rank_one);
    let path = dir.join(format!("{name}_solution.csv"));
    std::fs::write(&path, format!("key,value\n{s}"))?;
    paths.push(path);
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Quick oracle suite: each row is a measured value against its pinned threshold.
pub fn selftest() -> Result<Vec<CheckRow>> {
    use crate::sample::{random_profile, random_snapshots, small_instance};
    let mut rows = Vec::new();
    let mut push = |check, value: f64, threshold: f64, below: bool| {
        let pass = if below { value <= threshold } else { value >= threshold };
        rows.push(CheckRow { check, value, threshold, pass });
    };

    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let (cfg, scn, _, prof) = small_instance(seed);
        let xbar = random_snapshots(cfg.bs_elements(), scn.l_slots, seed + 100);
        let rx = &xbar * xbar.adjoint() / Complex64::new(scn.l_slots as f64, 0.0);
        let ex = exact_fim(&rx, &prof, scn.st, &scn, &cfg)?;
        let fd = fd_fim_oracle(&xbar, &prof, scn.st, &scn, &cfg)?;
        worst = worst.max((ex.j_polar - fd.j_polar).norm() / ex.j_polar.norm());
    }
    push("fim_oracle_rel_err", worst, 1e-6, true);

    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let (cfg, scn, _, _) = small_instance(seed);
        let init = AoInit::standard(&scn, &cfg);
        let rx = init.solution.rx();
        let pos = cartesian_from_polar(scn.st);
        let se = speb_from_fim(&exact_fim(&rx, &init.profile, scn.st, &scn, &cfg)?, pos)?;
        let sc = speb_from_fim(&closed_form_fim(&rx, &init.profile, scn.st, &scn, &cfg)?, pos)?;
        worst = worst.max((sc - se).abs() / se);
    }
    push("closed_form_speb_rel_err", worst, 0.1, true);

    let (cfg, scn, rx, _) = small_instance(7);
    let prof = random_profile(cfg.star_elements(), &mut rng(8));
    let coeffs = deploy_coefficients(&rx, &prof, scn.st, &scn, &cfg)?;
    let plan0 = coeffs.plan(cfg.m_sensor, cfg.d_s)?;
    let out = run_algorithm1_with(&coeffs, &plan0, &Default::default())?;
    let scan = scan_sensor_count(&coeffs, out.plan.d_s)?;
    let best = coeffs.cost(scan, out.plan.d_s)?;
    push("deploy_count_gap", (out.plan.cf_value - best) / best, 1e-9, true);

    Ok(rows)
}

pub fn emit_selftest(rows: &[CheckRow], dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.check.to_string(), num(r.value), num(r.threshold), if r.pass { "PASS".into() } else { "FAIL".into() }])
        .collect();
    Ok(vec![write_csv(&dir.join("selftest.csv"), "check,value,threshold,status", &body)?])
}

/// Runs an experiment of any kind and writes its files.
pub fn run_experiment(exp: &ExperimentConfig, dir: &Path, threads: Option<usize>) -> Result<Vec<PathBuf>> {
    match exp.kind {
        ExperimentKind::Sweep => emit_results(&run_montecarlo(exp, threads)?, dir, &exp.name),
        ExperimentKind::ValidateSpeb => emit_speb(&run_validate_speb(exp, threads)?, dir, &exp.name),
        ExperimentKind::Convergence => emit_trace(&run_convergence(exp, threads)?, dir, &exp.name),
        ExperimentKind::Rmse => {
            let (recs, rows) = run_rmse(exp, threads)?;
            emit_rmse(&recs, &rows, dir, &exp.name)
        }
        ExperimentKind::Solve => {
            let (scn, sol) = run_solve(exp)?;
            emit_solve(&scn, &sol, dir, &exp.name)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sweep() -> ExperimentConfig {
        let mut e = preset("sweep-power").unwrap();
        e.system = SystemSection { n_bs: Some(4), m_star: Some(4), m_sensor: Some(4), ..SystemSection::default() };
        e.run.trials = 1;
        e.run.schemes = vec![Scheme::RandM];
        e.sweep = Some(SweepSection { variable: SweepVar::PMaxDbm, values: vec![30.0] });
        e.scenario.sigma2_dbm = -130.0;
        e
    }

    #[test]
    fn presets_exist_and_validate() {
        for n in PRESET_NAMES {
            let p = preset(n).unwrap();
            p.validate().unwrap();
            let text = p.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), p);
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn unknown_keys_rejected() {
        let ok = "name = \"x\"\nkind = \"sweep\"\n[run]\ntrials = 2\n";
        assert!(ExperimentConfig::from_toml_str(ok).is_ok());
        assert!(ExperimentConfig::from_toml_str("name = \"x\"\nkind = \"sweep\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("name = \"x\"\nkind = \"sweep\"\n[run]\ntrails = 2\n").is_err());
        let unsorted = "name = \"x\"\nkind = \"sweep\"\n[sweep]\nvariable = \"p_max_dbm\"\nvalues = [30.0, 20.0]\n";
        assert!(ExperimentConfig::from_toml_str(unsorted).is_err());
        let zero = "name = \"x\"\nkind = \"sweep\"\n[run]\ntrials = 0\n";
        assert!(ExperimentConfig::from_toml_str(zero).is_err());
    }

    #[test]
    fn scenario_draws_are_admissible_and_deterministic() {
        let sys = SystemConfig::desk();
        let sec = ScenarioSection::default();
        for t in 0..50 {
            let a = draw_scenario(&sec, &sys, trial_seed(3, t)).unwrap();
            let b = draw_scenario(&sec, &sys, trial_seed(3, t)).unwrap();
            assert_eq!(a, b);
            assert!(a.st.theta >= 45f64.to_radians() && a.st.theta <= 135f64.to_radians());
            let c = cartesian_from_polar(a.st);
            let d = cartesian_from_polar(PolarPosition::new(8.0, PI / 2.0));
            assert!(c.distance(d) <= 3.0 + 1e-12);
        }
        assert_ne!(trial_seed(1, 0), trial_seed(1, 1));
    }

    #[test]
    fn randm_draws_even_counts_at_half_wavelength() {
        let e = tiny_sweep();
        for t in 0..6 {
            let r = run_trial(&e, 30.0, t, Scheme::RandM);
            if r.ok() {
                assert!(r.m_r >= 2 && r.m_r <= 4 && r.m_r.is_multiple_of(2));
                let lam = SystemConfig::desk().lambda_c;
                assert!((r.d_s - lam / 2.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rerun_is_bit_identical_and_round_trips() {
        let e = tiny_sweep();
        let a = run_montecarlo(&e, Some(1)).unwrap();
        let b = run_montecarlo(&e, Some(2)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        let dir = std::env::temp_dir().join(format!("stars-bench-{}", std::process::id()));
        let p1 = emit_results(&a, &dir, "t").unwrap();
        let first: Vec<Vec<u8>> = p1.iter().map(|p| std::fs::read(p).unwrap()).collect();
        let p2 = emit_results(&a, &dir, "t").unwrap();
        let second: Vec<Vec<u8>> = p2.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
        let text = String::from_utf8(first[0].clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "scheme,sweep_value,seed,cf,speb,rate,m_r,d_s,iterations,wall_time,status");
        let parsed = parse_trials(&text).unwrap();
        let recomputed = aggregate(&parsed);
        let direct = aggregate(&a);
        assert_eq!(recomputed.len(), direct.len());
        for (x, y) in recomputed.iter().zip(direct.iter()) {
            assert_eq!(x.trials_common, y.trials_common);
            for (u, v) in [(x.mean_cf, y.mean_cf), (x.mean_speb, y.mean_speb)] {
                assert!(same_value(u, v) || ((u - v) / v).abs() < 1e-11);
            }
        }
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn aggregate_uses_common_trials() {
        let rec = |scheme, seed, cf: f64, ok: bool| TrialRecord {
            scheme,
            sweep_value: 1.0,
            seed,
            cf,
            speb: cf,
            rate: 1.0,
            m_r: 2,
            d_s: 0.1,
            iterations: 1,
            wall_time: 0.0,
            status: if ok { "ok".into() } else { "infeasible".into() },
        };
        let recs = vec![
            rec(Scheme::Proposed, 1, 1.0, true),
            rec(Scheme::Proposed, 2, 3.0, true),
            rec(Scheme::ConRis, 1, 2.0, true),
            rec(Scheme::ConRis, 2, f64::NAN, false),
        ];
        let a = aggregate(&recs);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].scheme, Scheme::Proposed);
        assert_eq!((a[0].trials_common, a[0].mean_cf), (1, 1.0));
        assert_eq!((a[1].trials_common, a[1].mean_cf), (1, 2.0));
    }

    #[test]
    fn number_format() {
        assert_eq!(num(0.1), "1.00000000000e-1");
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(num(-2.5e10), "-2.50000000000e10");
        assert_eq!(dbm_to_watts(30.0), 1.0);
    }

    #[test]
    fn emit_fails_on_unwritable_path() {
        let r = run_trial(&tiny_sweep(), 30.0, 0, Scheme::RandM);
        let blocker = std::env::temp_dir().join(format!("stars-block-{}", std::process::id()));
        std::fs::write(&blocker, b"x").unwrap();
        assert!(emit_results(&[r], &blocker.join("sub"), "t").is_err());
        let _ = std::fs::remove_file(&blocker);
    }
}
