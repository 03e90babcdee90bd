//! Joint sensor deployment: interval by closed form or SCA, sensor count by
//! condensed geometric programming with integer rounding.
//!
//! With `d~ = d_s^2` the closed-form FIM diagonal reads
//! `J_tt = C11 d~ + C10` and `J_rr = C2 d~^2 - C1 d~ + C0`.
//! Sensor counts follow the even-count convention of the arrays.

use crate::beamform::StarsProfile;
use crate::channel::CMat;
use crate::conic::{solve_gp, GpProblem, Monomial, Posynomial, SolveStatus, GP_TOL};
use crate::error::{Error, Result};
use crate::fim::{closed_form_terms, correlation_factors, speb_weighted, CorrelationFactors, Scenario, CLOSED_FORM};
use crate::geometry::{speb_weights, PolarPosition, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeployOptions {
    /// Smallest admissible sensor interval [m]; `None` means `lambda / 2`.
    pub d_min: Option<f64>,
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for DeployOptions {
    fn default() -> Self {
        DeployOptions { d_min: None, eps: 1e-5, max_iter: 50 }
    }
}

impl DeployOptions {
    pub fn d_min(&self, cfg: &SystemConfig) -> f64 {
        self.d_min.unwrap_or(cfg.lambda_c / 2.0)
    }
}

/// Polynomial coefficients in the squared interval for one sensor count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalCoeffs {
    pub c11: f64,
    pub c10: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl IntervalCoeffs {
    pub fn j_tt(&self, dt: f64) -> f64 {
        self.c11 * dt + self.c10
    }

    pub fn j_rr(&self, dt: f64) -> f64 {
        self.c2 * dt * dt - self.c1 * dt + self.c0
    }
}

/// Count-polynomial coefficients at a fixed interval:
/// `J_rr = k_r [B2 (3M^5 + 15M^4 + 20M^3 - 8M) - B1 (M^3 + 3M^2 + 2M) + B0 (M + 1)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    /// `J_tt = k_t / 12 * f1(M)`.
    pub k_t: f64,
    pub k_r: f64,
    pub f1: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeployCoeffs {
    pub m_r: usize,
    pub c11: f64,
    pub c10: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub factors: CorrelationFactors,
    pub st: PolarPosition,
    cfg: SystemConfig,
    scn: Scenario,
}

pub fn deploy_coefficients(rx: &CMat, profile: &StarsProfile, st: PolarPosition, scn: &Scenario, cfg: &SystemConfig) -> Result<DeployCoeffs> {
    let f = correlation_factors(rx, profile, st, cfg)?;
    coefficients_from_factors(f, st, scn, cfg)
}

pub fn coefficients_from_factors(f: CorrelationFactors, st: PolarPosition, scn: &Scenario, cfg: &SystemConfig) -> Result<DeployCoeffs> {
    let mut c = DeployCoeffs {
        m_r: cfg.m_sensor,
        c11: 0.0,
        c10: 0.0,
        c2: 0.0,
        c1: 0.0,
        c0: 0.0,
        b0: 0.0,
        b1: 0.0,
        b2: 0.0,
        factors: f,
        st,
        cfg: cfg.clone(),
        scn: scn.clone(),
    };
    let ic = c.interval_coeffs(cfg.m_sensor as f64)?;
    let cc = c.count_coeffs(cfg.d_s)?;
    c.c11 = ic.c11;
    c.c10 = ic.c10;
    c.c2 = ic.c2;
    c.c1 = ic.c1;
    c.c0 = ic.c0;
    c.b0 = cc.b0;
    c.b1 = cc.b1;
    c.b2 = cc.b2;
    Ok(c)
}

impl DeployCoeffs {
    pub fn cfg(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scn
    }

    pub fn interval_coeffs(&self, m_r: f64) -> Result<IntervalCoeffs> {
        let t = closed_form_terms(m_r, self.st, &self.scn, &self.cfg, CLOSED_FORM)?;
        let f = &self.factors;
        Ok(IntervalCoeffs {
            c11: t.theta_a * f.a,
            c10: t.theta_b * f.b1,
            c2: t.range_a * f.a,
            c1: t.range_c * f.c,
            c0: t.range_b * f.b2,
        })
    }

    pub fn count_coeffs(&self, d_s: f64) -> Result<CountCoeffs> {
        // Unit-count terms recover the constants shared by all counts.
        let t = closed_form_terms(2.0, self.st, &self.scn, &self.cfg, CLOSED_FORM)?;
        let v1 = crate::fim::v1_norm_sq(2.0);
        let v2 = crate::fim::v2_norm_sq(2.0);
        let k_t = t.theta_a / v1;
        let dr2 = self.cfg.d_r * self.cfg.d_r;
        let k_r = t.range_b / (3.0 * dr2 * dr2) * (self.st.r.powi(4));
        let s2 = t.range_a / (k_r * v2);
        let s_over_r2 = t.range_c / (k_r * v1 * dr2);
        let ds2 = d_s * d_s;
        let f = &self.factors;
        let b2 = s2 * ds2 * ds2 * f.a / 240.0;
        let b1 = s_over_r2 * ds2 * dr2 * f.c / 12.0;
        let b0 = dr2 * dr2 * f.b2 / self.st.r.powi(4);
        let f1 = [12.0 * dr2 * f.b1, 2.0 * ds2 * f.a + 12.0 * dr2 * f.b1, 3.0 * ds2 * f.a, ds2 * f.a];
        Ok(CountCoeffs { b0, b1, b2, k_t, k_r, f1 })
    }

    /// Closed-form diagonal `(J_tt, J_rr)` for a real-valued count and interval.
    pub fn entries(&self, m_r: f64, d_s: f64) -> Result<(f64, f64)> {
        let ic = self.interval_coeffs(m_r)?;
        let dt = d_s * d_s;
        Ok((ic.j_tt(dt), ic.j_rr(dt)))
    }

    pub fn speb(&self, m_r: f64, d_s: f64) -> Result<f64> {
        let (jt, jr) = self.entries(m_r, d_s)?;
        if !(jt > 0.0 && jr > 0.0) {
            return Err(Error::Singular { cond: f64::INFINITY });
        }
        Ok(speb_weighted(jt, jr, self.st))
    }

    /// Weighted cost for an integer deployment.
    pub fn cost(&self, m_r: usize, d_s: f64) -> Result<f64> {
        Ok(cost_function(self.speb(m_r as f64, d_s)?, m_r as f64, &self.scn))
    }

    pub fn plan(&self, m_r: usize, d_s: f64) -> Result<DeploymentPlan> {
        let speb = self.speb(m_r as f64, d_s)?;
        Ok(DeploymentPlan { d_s, m_r, cf_value: cost_function(speb, m_r as f64, &self.scn), speb_value: speb })
    }
}

impl CountCoeffs {
    /// `(f2+, f2-)` terms as `(coefficient, exponent)` pairs, split on the sign of `B1`.
    pub fn f2_split(&self) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        let (b0, b1, b2) = (self.b0, self.b1, self.b2);
        let mut plus = vec![(3.0 * b2, 5.0), (15.0 * b2, 4.0)];
        let minus;
        if b1 >= 0.0 {
            plus.extend([(20.0 * b2, 3.0), (b0, 1.0), (b0, 0.0)]);
            minus = vec![(b1, 3.0), (3.0 * b1, 2.0), (2.0 * b1 + 8.0 * b2, 1.0)];
        } else {
            let nb = -b1;
            plus.extend([(nb + 20.0 * b2, 3.0), (3.0 * nb, 2.0), (2.0 * nb + b0, 1.0), (b0, 0.0)]);
            minus = vec![(8.0 * b2, 1.0)];
        }
        let keep = |v: Vec<(f64, f64)>| v.into_iter().filter(|(c, _)| *c != 0.0).collect();
        (keep(plus), keep(minus))
    }

    pub fn f1(&self, m: f64) -> f64 {
        self.f1.iter().enumerate().map(|(k, c)| c * m.powi(k as i32)).sum()
    }

    pub fn f2(&self, m: f64) -> f64 {
        let (p, q) = self.f2_split();
        let ev = |v: &[(f64, f64)]| v.iter().map(|(c, e)| c * m.powf(*e)).sum::<f64>();
        ev(&p) - ev(&q)
    }
}

/// `omega0 SPEB / eps0 + (1 - omega0) M_r / M0`.
pub fn cost_function(speb: f64, m_r: f64, scn: &Scenario) -> f64 {
    scn.omega0 * speb / scn.eps0 + (1.0 - scn.omega0) * m_r / scn.m0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeploymentPlan {
    pub d_s: f64,
    pub m_r: usize,
    pub cf_value: f64,
    pub speb_value: f64,
}

impl DeploymentPlan {
    pub fn validate(&self, cfg: &SystemConfig, d_min: f64) -> Result<()> {
        if self.m_r < 2 || !self.m_r.is_multiple_of(2) {
            return Err(Error::Config(format!("sensor count must be even and >= 2, got {}", self.m_r)));
        }
        if self.d_s < d_min * (1.0 - 1e-12) {
            return Err(Error::Config(format!("interval {} below the floor {d_min}", self.d_s)));
        }
        if self.m_r as f64 * self.d_s > cfg.m_star as f64 * cfg.d_r * (1.0 + 1e-12) {
            return Err(Error::Config("sensor aperture exceeds the STAR aperture".into()));
        }
        Ok(())
    }
}

/// Feasible squared-interval range `[d_min^2, (M d_R / M_r)^2]`.
pub fn interval_bounds(m_r: usize, cfg: &SystemConfig, opts: &DeployOptions) -> Result<(f64, f64)> {
    let lo = opts.d_min(cfg).powi(2);
    let hi = (cfg.m_star as f64 * cfg.d_r / m_r as f64).powi(2);
    if lo > hi * (1.0 + 1e-12) {
        return Err(Error::Config(format!("empty interval range for {m_r} sensors: {lo:e} > {hi:e}")));
    }
    Ok((lo, hi.max(lo)))
}

/// Returns the aperture-filling interval when the closed-form conditions hold.
///
/// Condition (ii) compares the parabola vertex `C1 / (2 C2)` against the two ends of the
/// feasible range.
pub fn prop2_closed_form(coeffs: &DeployCoeffs, m_r: usize, opts: &DeployOptions) -> Result<Option<f64>> {
    let cfg = coeffs.cfg();
    let ic = coeffs.interval_coeffs(m_r as f64)?;
    let f = &coeffs.factors;
    let m = m_r as f64;
    let cond_i = (3.0 * m * m + 6.0 * m - 4.0) / 5.0 * f.a * f.b2 >= (m * m + 2.0 * m) / 12.0 * f.c * f.c;
    let (lo, hi) = interval_bounds(m_r, cfg, opts)?;
    if !(ic.c2 > 0.0) {
        return Ok(None);
    }
    let v = ic.c1 / (2.0 * ic.c2);
    let cond_ii = (v - lo).abs() < (v - hi).abs();
    Ok(if cond_i && cond_ii { Some(hi.sqrt()) } else { None })
}

/// First-order lower bound of `x^2` at `x0`.
pub fn gamma_lower(x: f64, x0: f64) -> f64 {
    2.0 * x0 * x - x0 * x0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome {
    pub d_s: f64,
    /// Objective `w0 / J_tt + w1 / J_rr` after each iteration, starting at `d_init`.
    pub objective_trace: Vec<f64>,
}

fn interval_objective(ic: &IntervalCoeffs, w: [f64; 2], dt: f64) -> f64 {
    w[0] / ic.j_tt(dt) + w[1] / ic.j_rr(dt)
}

/// Minimizes the convex surrogate `w0 / (C11 x + C10) + w1 / (C2 Gamma(x) - C1 x + C0)` on `[lo, hi]`.
fn surrogate_argmin(ic: &IntervalCoeffs, w: [f64; 2], x0: f64, lo: f64, hi: f64) -> f64 {
    let beta = 2.0 * ic.c2 * x0 - ic.c1;
    let gamma = ic.c0 - ic.c2 * x0 * x0;
    let den = |x: f64| beta * x + gamma;
    let deriv = |x: f64| -w[0] * ic.c11 / ic.j_tt(x).powi(2) - w[1] * beta / den(x).powi(2);
    let mut upper = hi;
    if beta < 0.0 {
        let zero = -gamma / beta;
        upper = upper.min(zero);
    }
    if deriv(lo) >= 0.0 {
        return lo;
    }
    if upper == hi && deriv(hi) <= 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo, upper);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if den(mid) > 0.0 && deriv(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    a
}

/// SCA from `d_init`, then from the far end of the range; the objective can have a stationary
/// point at each end, so the better of the two runs is kept.
pub fn sca_interval(coeffs: &DeployCoeffs, m_r: usize, d_init: f64, opts: &DeployOptions) -> Result<ScaOutcome> {
    let cfg = coeffs.cfg();
    let (lo, hi) = interval_bounds(m_r, cfg, opts)?;
    let ic = coeffs.interval_coeffs(m_r as f64)?;
    let w = speb_weights(coeffs.st);
    let x0 = (d_init * d_init).clamp(lo, hi);
    let (x, mut trace) = sca_run(&ic, w, x0, lo, hi, opts)?;
    let far = if hi - x0 >= x0 - lo { hi } else { lo };
    let mut best = x;
    if let Ok((y, t)) = sca_run(&ic, w, far, lo, hi, opts) {
        let last = *trace.last().unwrap();
        let alt = *t.last().unwrap();
        if alt < last {
            best = y;
            trace.push(alt);
        }
    }
    Ok(ScaOutcome { d_s: best.sqrt(), objective_trace: trace })
}

fn sca_run(ic: &IntervalCoeffs, w: [f64; 2], x0: f64, lo: f64, hi: f64, opts: &DeployOptions) -> Result<(f64, Vec<f64>)> {
    let mut x = x0;
    if !(ic.j_tt(x) > 0.0 && ic.j_rr(x) > 0.0) {
        return Err(Error::Singular { cond: f64::INFINITY });
    }
    let mut obj = interval_objective(ic, w, x);
    let mut trace = vec![obj];
    for _ in 0..opts.max_iter {
        let next = surrogate_argmin(ic, w, x, lo, hi);
        let next_obj = interval_objective(ic, w, next);
        if next_obj > obj {
            break;
        }
        let change = (obj - next_obj) / obj;
        let moved = (next - x).abs() / x;
        x = next;
        obj = next_obj;
        trace.push(obj);
        if change < opts.eps && moved < opts.eps {
            break;
        }
    }
    Ok((x, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountOutcome {
    pub m_r: usize,
    /// Continuous relaxation optimum.
    pub m_continuous: f64,
    /// Slack at the GP optimum and `f2+ - f2-` at the same count.
    pub x2: f64,
    pub f2_gap: f64,
    pub gp_iterations: usize,
    /// Exhaustive integer scan replaced the GP.
    pub fallback: bool,
}

/// Largest even count with `m d_s <= M d_R`.
pub fn max_even_count(d_s: f64, cfg: &SystemConfig) -> usize {
    let bound = (cfg.m_star as f64 * cfg.d_r / d_s * (1.0 + 1e-12)).floor() as usize;
    bound - bound % 2
}

/// Exhaustive even-count scan of the weighted cost at fixed interval.
pub fn scan_sensor_count(coeffs: &DeployCoeffs, d_s: f64) -> Result<usize> {
    let top = max_even_count(d_s, coeffs.cfg());
    let mut best: Option<(f64, usize)> = None;
    for m in (2..=top).step_by(2) {
        if let Ok(cf) = coeffs.cost(m, d_s) {
            if best.is_none_or(|(b, _)| cf < b) {
                best = Some((cf, m));
            }
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::Infeasible { reason: format!("no feasible sensor count at interval {d_s:e}") })
}

fn poly(terms: &[(f64, f64)]) -> Posynomial {
    Posynomial::new(terms.iter().map(|(c, e)| Monomial::new(*c, vec![*e])).collect())
}

struct GpRun {
    m: f64,
    x2: f64,
    iterations: usize,
}

/// Condensed GP iterations from one starting count; `None` when a solve fails.
fn gp_relaxation(coeffs: &DeployCoeffs, cc: &CountCoeffs, d_s: f64, start: f64, opts: &DeployOptions) -> Option<GpRun> {
    let cfg = coeffs.cfg();
    let scn = coeffs.scenario();
    let w = speb_weights(coeffs.st);
    let f1_terms: Vec<(f64, f64)> = cc.f1.iter().enumerate().filter(|(_, c)| **c > 0.0).map(|(k, c)| (*c, k as f64)).collect();
    let (plus, minus) = cc.f2_split();
    if f1_terms.is_empty() || plus.is_empty() {
        return None;
    }
    let m_hi = cfg.m_star as f64 * cfg.d_r / d_s;
    let f1p = poly(&f1_terms);
    let f2p = poly(&plus);
    let wt = scn.omega0 / scn.eps0;
    let mut mk = start.clamp(2.0, m_hi);
    let mut x2 = f64::NAN;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let f1_hat = f1p.condense(&[mk]);
        let f2_hat = f2p.condense(&[mk]);
        let scale = cc.f2(mk);
        if !(scale > 0.0) {
            return None;
        }
        // Variables (M, z) with x2 = scale * z.
        let objective = Posynomial::new(vec![
            Monomial::new(wt * w[0] * 12.0 / (cc.k_t * f1_hat.c), vec![-f1_hat.exps[0], 0.0]),
            Monomial::new(wt * w[1] / (cc.k_r * scale), vec![0.0, -1.0]),
            Monomial::new((1.0 - scn.omega0) / scn.m0, vec![1.0, 0.0]),
        ]);
        let e = f2_hat.exps[0];
        let mut slack: Vec<Monomial> = minus.iter().map(|(c, x)| Monomial::new(c / f2_hat.c, vec![x - e, 0.0])).collect();
        slack.push(Monomial::new(scale / f2_hat.c, vec![-e, 1.0]));
        let gp = GpProblem {
            n_vars: 2,
            objective,
            inequalities: vec![
                Posynomial::new(slack),
                Posynomial::new(vec![Monomial::new(2.0, vec![-1.0, 0.0])]),
                Posynomial::new(vec![Monomial::new(1.0 / m_hi, vec![1.0, 0.0])]),
            ],
            equalities: vec![],
        };
        let rep = solve_gp(&gp, GP_TOL);
        if rep.status != SolveStatus::Optimal {
            return None;
        }
        let next = rep.primal[0].clamp(2.0, m_hi);
        x2 = scale * rep.primal[1];
        let change = (next - mk).abs() / mk;
        mk = next;
        if change < opts.eps {
            break;
        }
    }
    Some(GpRun { m: mk, x2, iterations })
}

/// Relaxed count by condensed GP from several starts, rounded to the better even neighbor.
pub fn gp_sensor_count(coeffs: &DeployCoeffs, d_s: f64, opts: &DeployOptions) -> Result<CountOutcome> {
    let cfg = coeffs.cfg();
    let top = max_even_count(d_s, cfg);
    if top < 2 {
        return Err(Error::Infeasible { reason: format!("interval {d_s:e} leaves room for fewer than 2 sensors") });
    }
    let cc = coeffs.count_coeffs(d_s)?;
    let m_hi = cfg.m_star as f64 * cfg.d_r / d_s;
    let mut best: Option<(f64, usize, GpRun)> = None;
    let mut total_iters = 0;
    for start in [coeffs.m_r as f64, 2.0, m_hi] {
        let Some(run) = gp_relaxation(coeffs, &cc, d_s, start, opts) else { continue };
        total_iters += run.iterations;
        let lo = (2.0 * (run.m / 2.0).floor()).clamp(2.0, top as f64) as usize;
        let hi = (2.0 * (run.m / 2.0).ceil()).clamp(2.0, top as f64) as usize;
        for m in [lo, hi] {
            let cf = coeffs.cost(m, d_s)?;
            if best.as_ref().is_none_or(|(b, _, _)| cf < *b) {
                best = Some((cf, m, GpRun { m: run.m, x2: run.x2, iterations: run.iterations }));
            }
        }
    }
    match best {
        Some((_, m_r, run)) => Ok(CountOutcome { m_r, m_continuous: run.m, x2: run.x2, f2_gap: cc.f2(run.m), gp_iterations: total_iters, fallback: false }),
        None => {
            let m = scan_sensor_count(coeffs, d_s)?;
            Ok(CountOutcome { m_r: m, m_continuous: m as f64, x2: f64::NAN, f2_gap: cc.f2(m as f64), gp_iterations: total_iters, fallback: true })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentOutcome {
    pub plan: DeploymentPlan,
    /// Weighted cost after each outer iteration, starting at the initial plan.
    pub cf_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub used_fallback: bool,
    pub used_closed_form: bool,
}

/// Alternates the interval and count subproblems until the weighted cost settles.
pub fn run_algorithm1(rx: &CMat, profile: &StarsProfile, st: PolarPosition, scn: &Scenario, cfg: &SystemConfig, init: &DeploymentPlan, opts: &DeployOptions) -> Result<DeploymentOutcome> {
    let coeffs = deploy_coefficients(rx, profile, st, scn, cfg)?;
    run_algorithm1_with(&coeffs, init, opts)
}

/// Interval subproblem for a fixed count: closed form when its conditions hold, SCA otherwise.
pub fn interval_step(coeffs: &DeployCoeffs, m_r: usize, d_init: f64, opts: &DeployOptions) -> Result<(f64, bool)> {
    match prop2_closed_form(coeffs, m_r, opts)? {
        Some(d) => Ok((d, true)),
        None => Ok((sca_interval(coeffs, m_r, d_init, opts)?.d_s, false)),
    }
}

pub fn run_algorithm1_with(coeffs: &DeployCoeffs, init: &DeploymentPlan, opts: &DeployOptions) -> Result<DeploymentOutcome> {
    let cfg = coeffs.cfg();
    let d_min = opts.d_min(cfg);
    init.validate(cfg, d_min)?;
    let count_cap = max_even_count(d_min, cfg);
    let mut m = init.m_r;
    let mut d = init.d_s;
    let mut cf = coeffs.cost(m, d)?;
    let mut trace = vec![cf];
    let mut used_fallback = false;
    let mut used_closed_form = false;
    let mut outer = 0;
    for _ in 0..opts.max_iter {
        outer += 1;
        let (d_new, closed) = interval_step(coeffs, m, d, opts)?;
        if coeffs.cost(m, d_new)? <= cf {
            d = d_new;
            used_closed_form |= closed;
        }
        let count = gp_sensor_count(coeffs, d, opts)?;
        used_fallback |= count.fallback;
        // The aperture constraint couples count and interval, so each candidate count is
        // scored at its own interval optimum; the neighbors of the current count let the
        // iterate move along the aperture boundary.
        let mut best = (coeffs.cost(m, d)?, m, d);
        let mut cands = vec![count.m_r, m + 2];
        if m > 2 {
            cands.push(m - 2);
        }
        for c in cands.into_iter().filter(|c| *c >= 2 && *c <= count_cap && *c != m) {
            let bound = cfg.m_star as f64 * cfg.d_r / c as f64;
            let (dc, _) = interval_step(coeffs, c, d.min(bound), opts)?;
            let cfc = coeffs.cost(c, dc)?;
            if cfc < best.0 {
                best = (cfc, c, dc);
            }
        }
        m = best.1;
        d = best.2;
        let next = best.0;
        let change = (cf - next).abs() / cf.abs().max(f64::MIN_POSITIVE);
        cf = next;
        trace.push(cf);
        if change < opts.eps {
            break;
        }
    }
    Ok(DeploymentOutcome { plan: coeffs.plan(m, d)?, cf_trace: trace, outer_iterations: outer, used_fallback, used_closed_form })
}
