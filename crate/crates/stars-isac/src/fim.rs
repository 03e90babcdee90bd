//! Fisher information and the squared position error bound.
//!
//! The polar FIM is ordered `(theta, r)`: index 0 is the angle block and
//! index 1 the range block.

use std::f64::consts::PI;

use nalgebra::{Matrix2, SymmetricEigen};
use num_complex::Complex64;

use crate::beamform::StarsProfile;
use crate::channel::{bs_stars_channel, sensor_range, sensor_steering, star_steering, steering_derivative, Axis, CMat, CVec};
use crate::error::{Error, Result};
use crate::geometry::{jacobian_t_theta_first, speb_weights, symmetric_indices, t_tilde, CartesianPosition, PolarPosition, SystemConfig};

/// Target, user and link-budget parameters of one sensing scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub st: PolarPosition,
    pub cu: PolarPosition,
    pub alpha_s: Complex64,
    pub sigma2: f64,
    pub l_slots: usize,
    pub p_max: f64,
    /// Rate threshold [bit/s/Hz].
    pub r_min: f64,
    pub omega0: f64,
    pub eps0: f64,
    pub m0: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::Config(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if self.l_slots < 1 {
            return Err(Error::Config("l_slots must be >= 1".into()));
        }
        if !(self.omega0 > 0.0 && self.omega0 < 1.0) {
            return Err(Error::Config(format!("omega0 must lie in (0, 1), got {}", self.omega0)));
        }
        if !(self.eps0 > 0.0) || !(self.m0 > 0.0) {
            return Err(Error::Config("eps0 and m0 must be positive".into()));
        }
        if !(self.p_max > 0.0) || self.r_min < 0.0 {
            return Err(Error::Config("p_max must be positive and r_min nonnegative".into()));
        }
        Ok(())
    }

    /// `2 |alpha_s|^2 L / sigma^2`.
    pub fn fim_gain(&self) -> f64 {
        2.0 * self.alpha_s.norm_sqr() * self.l_slots as f64 / self.sigma2
    }
}

/// Free-space round-trip amplitude of a point target with radar cross section `rcs`.
pub fn round_trip_alpha(r: f64, lambda_c: f64, rcs: f64) -> Complex64 {
    Complex64::new(lambda_c * rcs.sqrt() / ((4.0 * PI).powf(1.5) * r * r), 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FimMethod {
    Exact,
    ClosedForm,
    FdOracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimReport {
    pub j_polar: Matrix2<f64>,
    pub speb: f64,
    pub offdiag_ratio: f64,
    pub method: FimMethod,
}

impl FimReport {
    fn new(j: Matrix2<f64>, st: PolarPosition, method: FimMethod) -> Result<Self> {
        let j = (j + j.transpose()) * 0.5;
        let denom = (j[(0, 0)] * j[(1, 1)]).abs().sqrt();
        let offdiag_ratio = if denom > 0.0 { j[(0, 1)].abs() / denom } else { 0.0 };
        let mut rep = FimReport { j_polar: j, speb: f64::INFINITY, offdiag_ratio, method };
        // An unobservable configuration keeps an infinite bound.
        rep.speb = speb_from_fim(&rep, st.to_cartesian()).unwrap_or(f64::INFINITY);
        Ok(rep)
    }
}

/// Correlation factors `a`, `b(v1)`, `b(v2)` and `c` of the reflected covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationFactors {
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
}

/// `v1 = [-M/2, ..., M/2]` and its entrywise square.
pub fn index_vectors(count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if count < 2 || !count.is_multiple_of(2) {
        return Err(Error::Config(format!("index count must be even and >= 2, got {count}")));
    }
    let v1 = symmetric_indices(count);
    let v2 = v1.iter().map(|m| m * m).collect();
    Ok((v1, v2))
}

/// `||v1||^2 = M (M + 1) (M + 2) / 12`.
pub fn v1_norm_sq(m: f64) -> f64 {
    m * (m + 1.0) * (m + 2.0) / 12.0
}

/// `||v2||^2 = M (M + 1) (M + 2) (3 M^2 + 6 M - 4) / 240`.
pub fn v2_norm_sq(m: f64) -> f64 {
    m * (m + 1.0) * (m + 2.0) * (3.0 * m * m + 6.0 * m - 4.0) / 240.0
}

/// Response matrix `A = alpha_r alpha_t^H` and its derivatives.
#[derive(Debug, Clone)]
pub struct AMatrices {
    pub a: CMat,
    pub da_dtheta: CMat,
    pub da_dr: CMat,
}

/// Range derivative factor of the sensor-side steering, `d r_tilde / d r`.
pub fn sensor_chain_factor(r: f64, cfg: &SystemConfig) -> Result<f64> {
    Ok(r / sensor_range(r, cfg)?)
}

pub fn assemble_a(st: PolarPosition, cfg: &SystemConfig) -> Result<AMatrices> {
    let ar = sensor_steering(st.r, st.theta, cfg)?;
    let at = star_steering(st.r, st.theta, cfg)?;
    let kappa = sensor_chain_factor(st.r, cfg)?;
    let at_h = at.entries.adjoint();
    let a = &ar.entries * &at_h;
    let dar_t = steering_derivative(&ar, Axis::Angle);
    let dat_t = steering_derivative(&at, Axis::Angle);
    let dar_r = steering_derivative(&ar, Axis::Range) * Complex64::new(kappa, 0.0);
    let dat_r = steering_derivative(&at, Axis::Range);
    let da_dtheta = &dar_t * &at_h + &ar.entries * dat_t.adjoint();
    let da_dr = &dar_r * &at_h + &ar.entries * dat_r.adjoint();
    Ok(AMatrices { a, da_dtheta, da_dr })
}

/// `Theta_r H R_x H^H Theta_r^H` for `Theta_r = diag(q_r)`.
pub fn reflected_covariance(rx: &CMat, q_r: &CVec, h_br: &CMat) -> CMat {
    let b = h_br * rx * h_br.adjoint();
    CMat::from_fn(b.nrows(), b.ncols(), |m, n| q_r[m] * b[(m, n)] * q_r[n].conj())
}

fn check_psd(rx: &CMat) -> Result<()> {
    if rx.nrows() != rx.ncols() {
        return Err(Error::Config("transmit covariance must be square".into()));
    }
    let herm = (rx - rx.adjoint()).norm();
    let scale = rx.norm().max(1e-300);
    if herm > 1e-9 * scale {
        return Err(Error::Config("transmit covariance is not Hermitian".into()));
    }
    let eig = SymmetricEigen::new((rx + rx.adjoint()) * Complex64::new(0.5, 0.0));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-9 * scale {
        return Err(Error::Config(format!("transmit covariance is not PSD (min eigenvalue {min:.3e})")));
    }
    Ok(())
}

/// `Re tr(R X^H Y)`.
fn re_tr_r_xh_y(r: &CMat, x: &CMat, y: &CMat) -> f64 {
    let g = x.adjoint() * y;
    let mut acc = 0.0;
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            acc += (r[(i, j)] * g[(j, i)]).re;
        }
    }
    acc
}

/// Full trace-form FIM including off-diagonal terms.
pub fn exact_fim(rx: &CMat, profile: &StarsProfile, st: PolarPosition, scn: &Scenario, cfg: &SystemConfig) -> Result<FimReport> {
    check_psd(rx)?;
    let h = bs_stars_channel(cfg);
    let r = reflected_covariance(rx, &profile.q_r, &h);
    let am = assemble_a(st, cfg)?;
    let g = scn.fim_gain();
    let d = [&am.da_dtheta, &am.da_dr];
    let mut j = Matrix2::zeros();
    for p in 0..2 {
        for q in p..2 {
            let v = g * re_tr_r_xh_y(&r, d[p], d[q]);
            j[(p, q)] = v;
            j[(q, p)] = v;
        }
    }
    FimReport::new(j, st, FimMethod::Exact)
}

/// Weighted-steering factors of an arbitrary reflected covariance `r`.
pub fn factors_of_covariance(r: &CMat, alpha_t: &CVec, cfg: &SystemConfig) -> Result<CorrelationFactors> {
    let (v1, v2) = index_vectors(cfg.m_star)?;
    let w = |v: &[f64]| CVec::from_iterator(alpha_t.len(), alpha_t.iter().zip(v).map(|(a, m)| a * *m));
    let a1 = w(&v1);
    let a2 = w(&v2);
    let quad = |x: &CVec, y: &CVec| (x.adjoint() * r * y)[(0, 0)];
    Ok(CorrelationFactors {
        a: quad(alpha_t, alpha_t).re,
        b1: quad(&a1, &a1).re,
        b2: quad(&a2, &a2).re,
        c: 2.0 * quad(&a2, alpha_t).re,
    })
}

pub fn correlation_factors(rx: &CMat, profile: &StarsProfile, st: PolarPosition, cfg: &SystemConfig) -> Result<CorrelationFactors> {
    let h = bs_stars_channel(cfg);
    let r = reflected_covariance(rx, &profile.q_r, &h);
    let at = star_steering(st.r, st.theta, cfg)?;
    factors_of_covariance(&r, &at.entries, cfg)
}

/// Which index vector weights the STAR-side term of the angle entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexWeight {
    V1,
    V2,
}

/// Constants of the closed-form angle entry that are resolved against the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormVariant {
    pub theta_b_coeff: f64,
    pub theta_b_vector: IndexWeight,
}

/// Variant that matches the trace form exactly.
pub const CLOSED_FORM: ClosedFormVariant = ClosedFormVariant { theta_b_coeff: 12.0, theta_b_vector: IndexWeight::V1 };

/// Geometry-dependent multipliers of the closed-form diagonal entries.
///
/// `J_tt = theta_a * d_s^2 * a + theta_b * b`
/// `J_rr = range_a * d_s^4 * a - range_c * d_s^2 * c + range_b * b2`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormTerms {
    pub theta_a: f64,
    pub theta_b: f64,
    pub range_a: f64,
    pub range_c: f64,
    pub range_b: f64,
}

/// Multipliers for sensor count `m_r` (the count parameter; `m_r + 1` elements),
/// given as a real number so the sensor-count relaxation can reuse them.
pub fn closed_form_terms(m_r: f64, st: PolarPosition, scn: &Scenario, cfg: &SystemConfig, variant: ClosedFormVariant) -> Result<ClosedFormTerms> {
    let g = scn.fim_gain();
    let lam = cfg.lambda_c;
    let rt = sensor_range(st.r, cfg)?;
    // Range derivative of the sensor phase carries the factor r / r_tilde.
    let s = st.r / (rt * rt * rt);
    let n_r = m_r + 1.0;
    let kt = g * (2.0 * PI * st.theta.sin() / lam).powi(2);
    let kr = g * (PI / lam).powi(2);
    let dr2 = cfg.d_r * cfg.d_r;
    let r2 = st.r * st.r;
    Ok(ClosedFormTerms {
        theta_a: kt * v1_norm_sq(m_r),
        theta_b: kt * variant.theta_b_coeff / 12.0 * n_r * dr2,
        range_a: kr * s * s * v2_norm_sq(m_r),
        range_c: kr * s * v1_norm_sq(m_r) * dr2 / r2,
        range_b: kr * n_r * dr2 * dr2 / (r2 * r2),
    })
}

/// Diagonal FIM entries `(J_tt, J_rr)` from correlation factors.
pub fn closed_form_entries(f: &CorrelationFactors, terms: &ClosedFormTerms, d_s: f64, variant: ClosedFormVariant) -> (f64, f64) {
    let b = match variant.theta_b_vector {
        IndexWeight::V1 => f.b1,
        IndexWeight::V2 => f.b2,
    };
    let ds2 = d_s * d_s;
    let jt = terms.theta_a * ds2 * f.a + terms.theta_b * b;
    let jr = terms.range_a * ds2 * ds2 * f.a - terms.range_c * ds2 * f.c + terms.range_b * f.b2;
    (jt, jr)
}

pub fn closed_form_fim(rx: &CMat, profile: &StarsProfile, st: PolarPosition, scn: &Scenario, cfg: &SystemConfig) -> Result<FimReport> {
    closed_form_fim_variant(rx, profile, st, scn, cfg, CLOSED_FORM)
}

pub fn closed_form_fim_variant(
    rx: &CMat,
    profile: &StarsProfile,
    st: PolarPosition,
    scn: &Scenario,
    cfg: &SystemConfig,
    variant: ClosedFormVariant,
) -> Result<FimReport> {
    check_psd(rx)?;
    let f = correlation_factors(rx, profile, st, cfg)?;
    let terms = closed_form_terms(cfg.m_sensor as f64, st, scn, cfg, variant)?;
    let (jt, jr) = closed_form_entries(&f, &terms, cfg.d_s, variant);
    FimReport::new(Matrix2::new(jt, 0.0, 0.0, jr), st, FimMethod::ClosedForm)
}

/// SPEB of a diagonal FIM using the `T~` form.
pub fn speb_diagonal(j_tt: f64, j_rr: f64, pos: CartesianPosition) -> Result<f64> {
    let polar = crate::geometry::polar_from_cartesian(pos)?;
    let t = jacobian_t_theta_first(polar)?;
    let tt = t_tilde(pos, &t)?;
    let k = (pos.x * pos.y).powi(2) / (pos.x + pos.y).powi(2);
    Ok(k * (tt[(0, 0)] / j_tt + tt[(1, 1)] / j_rr))
}

/// Closed-form SPEB `r^2 / J_tt + 1 / J_rr` of a diagonal FIM.
pub fn speb_weighted(j_tt: f64, j_rr: f64, st: PolarPosition) -> f64 {
    let w = speb_weights(st);
    w[0] / j_tt + w[1] / j_rr
}

/// `tr(J_eta^{-1})` with `J_eta = T^T J T`.
pub fn speb_from_fim(rep: &FimReport, pos: CartesianPosition) -> Result<f64> {
    let j = rep.j_polar;
    let eig = SymmetricEigen::new(j);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= max * 1e-14 {
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::Singular { cond });
    }
    let polar = crate::geometry::polar_from_cartesian(pos)?;
    let t = jacobian_t_theta_first(polar)?;
    let je = t.transpose() * j * t;
    let inv = je.try_inverse().ok_or(Error::Singular { cond: max / min })?;
    Ok(inv.trace())
}

/// Noise-free echo mean `vec(alpha_s A Theta_r H X)`.
pub fn echo_mean(st: PolarPosition, xbar: &CMat, profile: &StarsProfile, scn: &Scenario, cfg: &SystemConfig) -> Result<CMat> {
    let ar = sensor_steering(st.r, st.theta, cfg)?;
    let at = star_steering(st.r, st.theta, cfg)?;
    let h = bs_stars_channel(cfg);
    let mut th = h;
    for (m, mut row) in th.row_iter_mut().enumerate() {
        row *= profile.q_r[m];
    }
    let z = at.entries.adjoint() * th * xbar;
    Ok(&ar.entries * z * scn.alpha_s)
}

/// Reference FIM from central finite differences of the echo mean with one
/// Richardson extrapolation level.
pub fn fd_fim_oracle(xbar: &CMat, profile: &StarsProfile, st: PolarPosition, scn: &Scenario, cfg: &SystemConfig) -> Result<FimReport> {
    let size = cfg.sensor_elements() * xbar.ncols() * cfg.bs_elements();
    if size > 10_000 {
        return Err(Error::Config(format!("oracle instance too large ({size} > 1e4)")));
    }
    let mean = |p: PolarPosition| echo_mean(p, xbar, profile, scn, cfg);
    let central = |axis: usize, h: f64| -> Result<CMat> {
        let shift = |s: f64| match axis {
            0 => PolarPosition::new(st.r, st.theta + s),
            _ => PolarPosition::new(st.r + s, st.theta),
        };
        Ok((mean(shift(h))? - mean(shift(-h))?) / Complex64::new(2.0 * h, 0.0))
    };
    let mut derivs = Vec::with_capacity(2);
    for (axis, x) in [(0usize, st.theta), (1usize, st.r)] {
        let h = 1e-5 * x.abs().max(1e-3);
        let d1 = central(axis, h)?;
        let d2 = central(axis, h / 2.0)?;
        let rich = (&d2 * Complex64::new(4.0, 0.0) - &d1) / Complex64::new(3.0, 0.0);
        let scale = rich.norm();
        if !(scale.is_finite()) || (&rich - &d2).norm() > 1e-3 * scale.max(1e-300) {
            return Err(Error::StepFailure(format!("axis {axis}: Richardson estimate did not settle")));
        }
        derivs.push(rich);
    }
    let mut j = Matrix2::zeros();
    for p in 0..2 {
        for q in 0..2 {
            let s: f64 = derivs[p].iter().zip(derivs[q].iter()).map(|(a, b)| (a.conj() * b).re).sum();
            j[(p, q)] = 2.0 / scn.sigma2 * s;
        }
    }
    FimReport::new(j, st, FimMethod::FdOracle)
}
