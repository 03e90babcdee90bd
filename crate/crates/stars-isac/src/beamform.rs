//! Active and passive beamforming: the penalty-based two-layer algorithm and the
//! outer alternation with sensor deployment.

use nalgebra::{Matrix2, SymmetricEigen};
use num_complex::Complex64;

use crate::channel::{star_steering, CMat, CVec, ChannelSet, SteeringVector};
use crate::conic::{solve_sdp, tr_inverse_epigraph_weighted, HermVar, LmiBlock, SdpProblem, SolveReport, SolveStatus, SDP_TOL};
use crate::deploy::{cost_function, deploy_coefficients, run_algorithm1_with, DeployOptions, DeploymentPlan};
use crate::error::{Error, Result};
use crate::fim::{closed_form_terms, speb_weighted, v1_norm_sq, ClosedFormTerms, Scenario, CLOSED_FORM};
use crate::geometry::{speb_weights, symmetric_indices, SystemConfig};

/// Transmit and reflect coefficients with their lifted outer products.
#[derive(Debug, Clone, PartialEq)]
pub struct StarsProfile {
    pub q_r: CVec,
    pub q_t: CVec,
    pub big_q_r: CMat,
    pub big_q_t: CMat,
}

impl StarsProfile {
    pub fn from_vectors(q_r: CVec, q_t: CVec) -> Self {
        let big_q_r = &q_r * q_r.adjoint();
        let big_q_t = &q_t * q_t.adjoint();
        StarsProfile { q_r, q_t, big_q_r, big_q_t }
    }

    /// Equal energy split with zero phases.
    pub fn uniform(elements: usize) -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::from_vectors(CVec::from_element(elements, a), CVec::from_element(elements, a))
    }

    /// Relaxed iterate; vectors are the scaled leading eigenvectors.
    pub fn from_matrices(big_q_r: CMat, big_q_t: CMat) -> Self {
        let q_r = leading_vector(&big_q_r);
        let q_t = leading_vector(&big_q_t);
        StarsProfile { q_r, q_t, big_q_r, big_q_t }
    }

    pub fn elements(&self) -> usize {
        self.q_r.len()
    }

    /// Largest per-element energy `|q_r|^2 + |q_t|^2`.
    pub fn max_element_energy(&self) -> f64 {
        self.q_r.iter().zip(self.q_t.iter()).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).fold(0.0, f64::max)
    }
}

/// Elements each side of the surface may use.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementSupport {
    pub reflect: Vec<usize>,
    pub transmit: Vec<usize>,
}

impl ElementSupport {
    pub fn full(elements: usize) -> Self {
        ElementSupport { reflect: (0..elements).collect(), transmit: (0..elements).collect() }
    }

    /// Two one-sided surfaces: transmission on the lower half of the indices, reflection on the rest.
    pub fn split(elements: usize) -> Self {
        let half = elements / 2;
        ElementSupport { reflect: (half..elements).collect(), transmit: (0..half).collect() }
    }

    pub fn initial_profile(&self, elements: usize) -> StarsProfile {
        let mut q_r = CVec::zeros(elements);
        let mut q_t = CVec::zeros(elements);
        for &m in &self.reflect {
            q_r[m] = Complex64::new(1.0, 0.0);
        }
        for &m in &self.transmit {
            q_t[m] = Complex64::new(1.0, 0.0);
        }
        for m in 0..elements {
            let e = q_r[m].norm_sqr() + q_t[m].norm_sqr();
            if e > 1.0 {
                let s = Complex64::new(1.0 / e.sqrt(), 0.0);
                q_r[m] *= s;
                q_t[m] *= s;
            }
        }
        StarsProfile::from_vectors(q_r, q_t)
    }
}

fn leading_eig(q: &CMat) -> (f64, CVec) {
    let herm = (q + q.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let (mut best, mut idx) = (f64::NEG_INFINITY, 0);
    for (i, v) in eig.eigenvalues.iter().enumerate() {
        if *v > best {
            best = *v;
            idx = i;
        }
    }
    (best, eig.eigenvectors.column(idx).into_owned())
}

fn leading_vector(q: &CMat) -> CVec {
    let (l, u) = leading_eig(q);
    let mut v = u * Complex64::new(l.max(0.0).sqrt(), 0.0);
    fix_phase(&mut v);
    v
}

/// Rotates the global phase so that the first non-negligible entry is real and nonnegative.
fn fix_phase(v: &mut CVec) {
    let scale = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if let Some(p) = v.iter().find(|x| x.norm() > 1e-12 * scale).copied() {
        let rot = Complex64::from_polar(1.0, -p.arg());
        for x in v.iter_mut() {
            *x *= rot;
        }
    }
}

fn herm(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn re_trace(a: &CMat, b: &CMat) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

fn weighted(v: &CVec, w: &[f64]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().zip(w).map(|(a, b)| a * *b))
}

/// `H^H diag(x) conj(Q) diag(y)^H H`.
fn lift(x: &CVec, q: &CMat, y: &CVec, h: &CMat) -> CMat {
    let inner = CMat::from_fn(q.nrows(), q.ncols(), |m, n| x[m] * q[(m, n)].conj() * y[n].conj());
    h.adjoint() * inner * h
}

/// `conj(diag(x)^H B diag(y))` for `B = H R H^H`.
fn upsilon(x: &CVec, b: &CMat, y: &CVec) -> CMat {
    CMat::from_fn(b.nrows(), b.ncols(), |m, n| (x[m].conj() * b[(m, n)] * y[n]).conj())
}

/// Transmit-side quadratic forms: `a = tr(R_x s)`, `b_i = tr(R_x b_i)`, `c = tr(R_x prime)`,
/// and the CU gain `|g^H Theta_t H v|^2 = tr(v v^H c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSet {
    pub s: CMat,
    pub b1: CMat,
    pub b2: CMat,
    /// Hermitian part `Gamma' + Gamma'^H`.
    pub prime: CMat,
    pub c: CMat,
}

pub fn build_gamma_matrices(profile: &StarsProfile, chans: &ChannelSet, sv_t: &SteeringVector, cfg: &SystemConfig) -> GammaSet {
    let h = &chans.h_br;
    let v1 = symmetric_indices(cfg.m_star);
    let v2: Vec<f64> = v1.iter().map(|m| m * m).collect();
    let alpha = &sv_t.entries;
    let a1 = weighted(alpha, &v1);
    let a2 = weighted(alpha, &v2);
    let q = &profile.big_q_r;
    let gp = lift(alpha, q, &a2, h);
    GammaSet {
        s: herm(&lift(alpha, q, alpha, h)),
        b1: herm(&lift(&a1, q, &a1, h)),
        b2: herm(&lift(&a2, q, &a2, h)),
        prime: &gp + gp.adjoint(),
        c: herm(&lift(&chans.g_c, &profile.big_q_t, &chans.g_c, h)),
    }
}

/// Surface-side forms: sensing factors are `Re tr(Q_r .)`, CU terms `Re tr(Q_t .)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsilonSet {
    pub s: CMat,
    pub b1: CMat,
    pub b2: CMat,
    pub prime: CMat,
    /// Signal term from `V_c`.
    pub c: CMat,
    /// Interference term from `R_s0`.
    pub c_interf: CMat,
}

pub fn build_upsilon_matrices(r_s0: &CMat, v_big: &CMat, chans: &ChannelSet, sv_t: &SteeringVector, cfg: &SystemConfig) -> UpsilonSet {
    let h = &chans.h_br;
    let rx = r_s0 + v_big;
    let b = h * &rx * h.adjoint();
    let v1 = symmetric_indices(cfg.m_star);
    let v2: Vec<f64> = v1.iter().map(|m| m * m).collect();
    let alpha = &sv_t.entries;
    let a1 = weighted(alpha, &v1);
    let a2 = weighted(alpha, &v2);
    let up = upsilon(&a2, &b, alpha);
    let g = &chans.g_c;
    UpsilonSet {
        s: herm(&upsilon(alpha, &b, alpha)),
        b1: herm(&upsilon(&a1, &b, &a1)),
        b2: herm(&upsilon(&a2, &b, &a2)),
        prime: &up + up.adjoint(),
        c: herm(&upsilon(g, &(h * v_big * h.adjoint()), g)),
        c_interf: herm(&upsilon(g, &(h * r_s0 * h.adjoint()), g)),
    }
}

/// Matrices whose traces against a covariance give `(J_tt, J_rr)` of the closed form.
fn fim_forms(s: &CMat, b1: &CMat, b2: &CMat, prime: &CMat, t: &ClosedFormTerms, d_s: f64) -> (CMat, CMat) {
    let c = |x: f64| Complex64::new(x, 0.0);
    let ds2 = d_s * d_s;
    let gt = s * c(t.theta_a * ds2) + b1 * c(t.theta_b);
    let gr = s * c(t.range_a * ds2 * ds2) - prime * c(t.range_c * ds2) + b2 * c(t.range_b);
    (herm(&gt), herm(&gr))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamSolution {
    pub r_s0: CMat,
    pub v_big: CMat,
    pub v_c: Option<CVec>,
    pub u_mat: Matrix2<f64>,
    /// `tr(U^{-1})` at the solution.
    pub objective: f64,
    pub status: SolveStatus,
}

impl BeamSolution {
    pub fn rx(&self) -> CMat {
        &self.r_s0 + &self.v_big
    }

    pub fn power(&self) -> f64 {
        self.rx().trace().re
    }

    /// Starting point with the covariance `(P / n) I` carried entirely by the sensing beam.
    pub fn isotropic(n: usize, p_max: f64) -> Self {
        BeamSolution {
            r_s0: CMat::identity(n, n) * Complex64::new(p_max / n as f64, 0.0),
            v_big: CMat::zeros(n, n),
            v_c: None,
            u_mat: Matrix2::zeros(),
            objective: f64::INFINITY,
            status: SolveStatus::Optimal,
        }
    }
}

/// `log2(1 + tr(V_c Gamma_c) / (tr(R_s0 Gamma_c) + sigma^2))`.
pub fn achievable_rate(sol: &BeamSolution, profile: &StarsProfile, chans: &ChannelSet, sigma2: f64) -> f64 {
    let u = cu_effective_channel(profile, chans);
    let gamma_c = &u * u.adjoint();
    rate_from_gamma(sol, &herm(&gamma_c_general(profile, chans, &gamma_c)), sigma2)
}

fn gamma_c_general(profile: &StarsProfile, chans: &ChannelSet, rank_one: &CMat) -> CMat {
    // Relaxed profiles need the lifted form; rank-one ones agree with `u u^H`.
    let lifted = lift(&chans.g_c, &profile.big_q_t, &chans.g_c, &chans.h_br);
    if (&lifted - rank_one).norm() <= 1e-12 * lifted.norm().max(1e-300) {
        rank_one.clone()
    } else {
        lifted
    }
}

fn rate_from_gamma(sol: &BeamSolution, gamma_c: &CMat, sigma2: f64) -> f64 {
    let sig = re_trace(&sol.v_big, gamma_c).max(0.0);
    let intf = re_trace(&sol.r_s0, gamma_c).max(0.0);
    (1.0 + sig / (intf + sigma2)).log2()
}

/// `u_c = H^H Theta_t^H g_c`.
pub fn cu_effective_channel(profile: &StarsProfile, chans: &ChannelSet) -> CVec {
    let w = CVec::from_iterator(chans.g_c.len(), profile.q_t.iter().zip(chans.g_c.iter()).map(|(q, g)| q.conj() * g));
    chans.h_br.adjoint() * w
}

/// Options shared by the beamforming layers.
#[derive(Debug, Clone, PartialEq)]
pub struct BfOptions {
    pub eps: f64,
    pub eps1: f64,
    pub inner_cap: usize,
    pub outer_cap: usize,
    pub c_shrink: f64,
    pub penalty_tol: f64,
    pub sdp_tol: f64,
    /// Allow the dedicated sensing beam `w_s`.
    pub dedicated_sensing: bool,
    pub support: Option<ElementSupport>,
}

impl Default for BfOptions {
    fn default() -> Self {
        BfOptions {
            eps: 1e-3,
            eps1: 1e-3,
            inner_cap: 20,
            outer_cap: 30,
            c_shrink: 0.5,
            penalty_tol: 1e-5,
            sdp_tol: SDP_TOL,
            dedicated_sensing: true,
            support: None,
        }
    }
}

/// Orthonormal basis of the row space of `H_BR`; covariance outside it never reaches the surface.
fn range_basis(h: &CMat) -> CMat {
    let svd = h.clone().svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-10 * smax).collect();
    CMat::from_fn(h.ncols(), keep.len(), |i, k| vt[(keep[k], i)].conj())
}

fn project(b: &CMat, m: &CMat) -> CMat {
    herm(&(b.adjoint() * m * b))
}

fn spectral_norm(m: &CMat) -> f64 {
    SymmetricEigen::new(herm(m)).eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Relaxed active beamforming SDP: minimize `tr(U^{-1})` subject to the rate, power and
/// U-coupling constraints. The returned `V_c` is not yet rank one.
pub fn active_bf_sdp(profile: &StarsProfile, chans: &ChannelSet, scn: &Scenario, cfg: &SystemConfig, opts: &BfOptions) -> Result<BeamSolution> {
    scn.validate()?;
    let st = scn.st;
    let sv_t = star_steering(st.r, st.theta, cfg)?;
    let gs = build_gamma_matrices(profile, chans, &sv_t, cfg);
    let terms = closed_form_terms(cfg.m_sensor as f64, st, scn, cfg, CLOSED_FORM)?;
    let (gt, gr) = fim_forms(&gs.s, &gs.b1, &gs.b2, &gs.prime, &terms, cfg.d_s);
    let w = speb_weights(st);
    let p = scn.p_max;
    let gamma = 2f64.powf(scn.r_min) - 1.0;

    let max_snr = p * SymmetricEigen::new(gs.c.clone()).eigenvalues.max().max(0.0) / scn.sigma2;
    if gamma > max_snr * (1.0 - 1e-9) {
        return Err(Error::RateUnreachable { required: scn.r_min, max_rate: (1.0 + max_snr).log2() });
    }

    let basis = range_basis(&chans.h_br);
    let k = basis.ncols();
    let gt_h = project(&basis, &gt);
    let gr_h = project(&basis, &gr);
    let gc_h = project(&basis, &gs.c);
    // Reference covariance (P / k) I sets the per-entry scales.
    let reference = |g: &CMat, wi: f64| {
        let v = p * g.trace().re / k as f64 / wi;
        if v > 0.0 { v } else { p * spectral_norm(g) / wi }
    };
    let kappa = [reference(&gt_h, w[0]), reference(&gr_h, w[1])];
    if !(kappa[0] > 0.0 && kappa[1] > 0.0) {
        return Err(Error::DegenerateChannel("zero effective gain".into()));
    }
    let wmax = (1.0 / kappa[0]).max(1.0 / kappa[1]);
    let weights = [1.0 / kappa[0] / wmax, 1.0 / kappa[1] / wmax];

    let mut sdp = SdpProblem::new();
    let (u, wv) = tr_inverse_epigraph_weighted(&mut sdp, 2, &weights);
    let v = sdp.add_hermitian(k);
    sdp.add_psd_hermitian(&v, "v_c");
    let rs = if opts.dedicated_sensing {
        let rs = sdp.add_hermitian(k);
        sdp.add_psd_hermitian(&rs, "r_s0");
        Some(rs)
    } else {
        None
    };
    let covs: Vec<HermVar> = std::iter::once(v).chain(rs).collect();

    // diag(J_tt / w0, J_rr / w1) - U PSD, scaled by kappa.
    let scale_p = Complex64::new(p, 0.0);
    let forms = [&gt_h * (scale_p / (w[0] * kappa[0])), &gr_h * (scale_p / (w[1] * kappa[1]))];
    let mut blk = LmiBlock::new("u_coupling", 2);
    for (i, f) in forms.iter().enumerate() {
        for x in &covs {
            blk.add_linear(i, i, &x.trace_coeffs(f));
        }
    }
    blk.add(u.var(0, 0), 0, 0, -1.0);
    blk.add(u.var(1, 1), 1, 1, -1.0);
    blk.add(u.var(0, 1), 0, 1, -1.0);
    sdp.add_block(blk);

    let gc_scale = SymmetricEigen::new(gc_h.clone()).eigenvalues.max().max(1e-300);
    let gc_n = &gc_h * Complex64::new(1.0 / gc_scale, 0.0);
    let mut rate = v.trace_coeffs(&gc_n);
    if let Some(rs) = &rs {
        rate.extend(rs.trace_coeffs(&gc_n).into_iter().map(|(i, c)| (i, -gamma * c)));
    }
    sdp.add_linear_geq(&rate, -gamma * scn.sigma2 / (p * gc_scale), "rate");
    let eye = CMat::identity(k, k);
    let mut power: Vec<(usize, f64)> = Vec::new();
    for x in &covs {
        power.extend(x.trace_coeffs(&eye).into_iter().map(|(i, c)| (i, -c)));
    }
    sdp.add_linear_geq(&power, 1.0, "power");

    let rep = solve_sdp(&sdp, opts.sdp_tol);
    match rep.status {
        SolveStatus::Optimal => {}
        SolveStatus::MaxIter if usable(&rep) => {}
        SolveStatus::Infeasible => return Err(Error::Infeasible { reason: "active beamforming SDP".into() }),
        s => return Err(Error::Solver(format!("active beamforming SDP ended with {s:?}"))),
    }
    let expand = |x: &HermVar| {
        let m = x.value(&rep.primal);
        herm(&(&basis * m * basis.adjoint())) * scale_p
    };
    let v_big = psd_clip(&expand(&v));
    let r_s0 = match &rs {
        Some(x) => psd_clip(&expand(x)),
        None => CMat::zeros(basis.nrows(), basis.nrows()),
    };
    let _ = wv;
    let ut = u.value(&rep.primal);
    let u_mat = Matrix2::new(
        ut[(0, 0)] * kappa[0],
        ut[(0, 1)] * (kappa[0] * kappa[1]).sqrt(),
        ut[(1, 0)] * (kappa[0] * kappa[1]).sqrt(),
        ut[(1, 1)] * kappa[1],
    );
    let rx = &r_s0 + &v_big;
    let jt = re_trace(&rx, &gt);
    let jr = re_trace(&rx, &gr);
    let objective = if jt > 0.0 && jr > 0.0 { w[0] / jt + w[1] / jr } else { f64::INFINITY };
    Ok(BeamSolution { r_s0, v_big, v_c: None, u_mat, objective, status: rep.status })
}

/// Stalled solves are kept when every residual is within the square root of the target.
fn usable(rep: &SolveReport) -> bool {
    let loose = SDP_TOL.sqrt();
    rep.duality_gap.abs() <= loose * (1.0 + rep.objective.abs()) && rep.primal_infeasibility <= loose && rep.dual_infeasibility <= loose
}

/// Clears negative eigenvalues left by solver tolerance.
fn psd_clip(m: &CMat) -> CMat {
    let eig = SymmetricEigen::new(herm(m));
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for (i, l) in eig.eigenvalues.iter().enumerate() {
        if *l > 0.0 {
            let u = eig.eigenvectors.column(i);
            out += u * u.adjoint() * Complex64::new(*l, 0.0);
        }
    }
    out
}

/// Rank-one C&S beam `v = (u^H V u)^{-1/2} V u`. The remainder `V - v v^H` (PSD) moves to
/// the sensing covariance so that `R_x`, the rate and the sensing terms are all unchanged.
pub fn rank_one_recovery(sol: &BeamSolution, chans: &ChannelSet, profile: &StarsProfile) -> Result<BeamSolution> {
    let u = cu_effective_channel(profile, chans);
    let vu = &sol.v_big * &u;
    let quad = u.dotc(&vu).re;
    let scale = sol.v_big.trace().re.max(1e-300) * u.norm_squared();
    if !(quad > 1e-14 * scale) {
        return Err(Error::DegenerateChannel("zero effective gain".into()));
    }
    let v = vu * Complex64::new(quad.powf(-0.5), 0.0);
    let vv = &v * v.adjoint();
    let mut out = sol.clone();
    out.r_s0 = psd_clip(&(&sol.r_s0 + &sol.v_big - &vv));
    out.v_big = vv;
    out.v_c = Some(v);
    Ok(out)
}

/// `sum_l (||Q_l||_* - ||Q_l||_2)` for PSD arguments.
pub fn penalty_value(q_r: &CMat, q_t: &CMat) -> f64 {
    [q_r, q_t]
        .iter()
        .map(|q| {
            let eig = SymmetricEigen::new(herm(q)).eigenvalues;
            let nuc: f64 = eig.iter().map(|l| l.abs()).sum();
            let spec = eig.iter().fold(0.0f64, |a, l| a.max(l.abs()));
            (nuc - spec).max(0.0)
        })
        .sum()
}

/// Penalty bookkeeping across outer iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyState {
    pub rho: f64,
    pub c_shrink: f64,
    pub penalty_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassiveOutcome {
    pub big_q_r: CMat,
    pub big_q_t: CMat,
    pub penalty_value: f64,
    /// Linearized penalty `(1 / rho) sum_l (tr Q_l - Q_bar_l)` at the new point.
    pub linearized: f64,
}

fn submatrix(m: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

fn scatter(m: &CMat, idx: &[usize], n: usize) -> CMat {
    let mut out = CMat::zeros(n, n);
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            out[(a, b)] = m[(i, j)];
        }
    }
    out
}

/// One convexified penalty step over `(Q_r, Q_t)` with the active solution and `U` fixed.
pub fn passive_bf_penalty_step(
    prev: &StarsProfile,
    sol: &BeamSolution,
    chans: &ChannelSet,
    scn: &Scenario,
    cfg: &SystemConfig,
    rho: f64,
    opts: &BfOptions,
) -> Result<PassiveOutcome> {
    let st = scn.st;
    let n = prev.elements();
    let support = opts.support.clone().unwrap_or_else(|| ElementSupport::full(n));
    let sv_t = star_steering(st.r, st.theta, cfg)?;
    let ys = build_upsilon_matrices(&sol.r_s0, &sol.v_big, chans, &sv_t, cfg);
    let terms = closed_form_terms(cfg.m_sensor as f64, st, scn, cfg, CLOSED_FORM)?;
    let (yt, yr) = fim_forms(&ys.s, &ys.b1, &ys.b2, &ys.prime, &terms, cfg.d_s);
    let w = speb_weights(st);
    let gamma = 2f64.powf(scn.r_min) - 1.0;

    let rsup = &support.reflect;
    let tsup = &support.transmit;
    let mut sdp = SdpProblem::new();
    let qr = sdp.add_hermitian(rsup.len());
    let qt = sdp.add_hermitian(tsup.len());
    sdp.add_psd_hermitian(&qr, "q_r");
    sdp.add_psd_hermitian(&qt, "q_t");

    // Linearized penalty: tr Q_l - u_l^H Q_l u_l (constants dropped).
    for (x, q, idx) in [(&qr, &prev.big_q_r, rsup), (&qt, &prev.big_q_t, tsup)] {
        let (_, u) = leading_eig(&submatrix(q, idx));
        let c = CMat::identity(idx.len(), idx.len()) - &u * u.adjoint();
        let coeffs: Vec<(usize, f64)> = x.trace_coeffs(&c).into_iter().map(|(i, v)| (i, v / rho)).collect();
        sdp.add_objective(&coeffs);
    }

    // Per-element energy: diag(Q_r) + diag(Q_t) = 1 where both sides exist, else the side's own diag.
    for m in 0..n {
        let mut row = Vec::new();
        if let Some(i) = rsup.iter().position(|&e| e == m) {
            row.push((qr.diag(i), 1.0));
        }
        if let Some(i) = tsup.iter().position(|&e| e == m) {
            row.push((qt.diag(i), 1.0));
        }
        if !row.is_empty() {
            sdp.add_equality(&row, 1.0);
        }
    }

    // Rate: Re tr(Q_t (Y_c - gamma Y_c')) >= gamma sigma^2.
    let yc = submatrix(&(&ys.c - &ys.c_interf * Complex64::new(gamma, 0.0)), tsup);
    let yc_scale = spectral_norm(&submatrix(&ys.c, tsup)).max(1e-300);
    let coeffs: Vec<(usize, f64)> = qt.trace_coeffs(&yc).into_iter().map(|(i, v)| (i, v / yc_scale)).collect();
    sdp.add_linear_geq(&coeffs, -gamma * scn.sigma2 / yc_scale, "rate");

    // diag(J_tt / w0, J_rr / w1) - U PSD with U fixed; a relative margin keeps an interior.
    let u = sol.u_mat * (1.0 - 1e-7);
    let kappa = [u[(0, 0)].abs().max(1e-300), u[(1, 1)].abs().max(1e-300)];
    let mut blk = LmiBlock::new("u_coupling", 2);
    for (i, (f, wi)) in [(&yt, w[0]), (&yr, w[1])].into_iter().enumerate() {
        let sub = submatrix(f, rsup) * Complex64::new(1.0 / (wi * kappa[i]), 0.0);
        blk.add_linear(i, i, &qr.trace_coeffs(&sub));
        blk.add_constant(i, i, -u[(i, i)] / kappa[i]);
    }
    blk.add_constant(0, 1, -u[(0, 1)] / (kappa[0] * kappa[1]).sqrt());
    sdp.add_block(blk);

    let rep = solve_sdp(&sdp, opts.sdp_tol);
    if !(rep.status == SolveStatus::Optimal || rep.status == SolveStatus::MaxIter && usable(&rep)) {
        return Err(Error::Infeasible { reason: format!("passive beamforming step ended with {:?}", rep.status) });
    }
    let big_q_r = psd_clip(&scatter(&qr.value(&rep.primal), rsup, n));
    let big_q_t = psd_clip(&scatter(&qt.value(&rep.primal), tsup, n));
    Ok(PassiveOutcome { penalty_value: penalty_value(&big_q_r, &big_q_t), linearized: rep.objective, big_q_r, big_q_t })
}

/// Leading-eigenpair extraction with the per-element energy cap enforced exactly.
pub fn extract_diag_profile(big_q_r: &CMat, big_q_t: &CMat, penalty_tol: f64) -> Result<StarsProfile> {
    let pen = penalty_value(big_q_r, big_q_t);
    let scale = big_q_r.trace().re.abs() + big_q_t.trace().re.abs();
    if pen > penalty_tol * scale.max(1.0) {
        return Err(Error::Solver(format!("profile is not rank one (penalty {pen:.3e})")));
    }
    let mut q_r = leading_vector(big_q_r);
    let mut q_t = leading_vector(big_q_t);
    for m in 0..q_r.len() {
        let e = q_r[m].norm_sqr() + q_t[m].norm_sqr();
        if e > 1.0 {
            let s = Complex64::new(1.0 / e.sqrt(), 0.0);
            q_r[m] *= s;
            q_t[m] *= s;
        }
    }
    Ok(StarsProfile::from_vectors(q_r, q_t))
}

/// Closed-form SPEB at a transmit covariance and profile.
pub fn closed_form_speb(rx: &CMat, profile: &StarsProfile, chans: &ChannelSet, scn: &Scenario, cfg: &SystemConfig) -> Result<f64> {
    let st = scn.st;
    let sv_t = star_steering(st.r, st.theta, cfg)?;
    let gs = build_gamma_matrices(profile, chans, &sv_t, cfg);
    let terms = closed_form_terms(cfg.m_sensor as f64, st, scn, cfg, CLOSED_FORM)?;
    let (gt, gr) = fim_forms(&gs.s, &gs.b1, &gs.b2, &gs.prime, &terms, cfg.d_s);
    let jt = re_trace(rx, &gt);
    let jr = re_trace(rx, &gr);
    if !(jt > 0.0 && jr > 0.0) {
        return Err(Error::Singular { cond: f64::INFINITY });
    }
    Ok(speb_weighted(jt, jr, st))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfTraceRow {
    pub outer: usize,
    pub inner: usize,
    /// `tr(U^{-1})` of the accepted active solution.
    pub objective: f64,
    pub penalty: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfOutcome {
    pub solution: BeamSolution,
    pub profile: StarsProfile,
    pub trace: Vec<BfTraceRow>,
    pub penalty: PenaltyState,
    pub rank_one: bool,
    pub rate: f64,
    pub speb: f64,
}

/// Active step of the selected scheme: without a sensing beam the covariance is one joint beam,
/// and `U` is the matching diagonal.
fn active_step(profile: &StarsProfile, chans: &ChannelSet, scn: &Scenario, cfg: &SystemConfig, opts: &BfOptions) -> Result<BeamSolution> {
    let mut sol = active_bf_sdp(profile, chans, scn, cfg, opts)?;
    let beam = joint_beam(&sol, profile, chans, scn, cfg);
    if !opts.dedicated_sensing {
        let mut beam = beam?;
        rescore(&mut beam, profile, chans, scn, cfg)?;
        return Ok(beam);
    }
    // The optimum is not unique in the split of R_x; V_c = R_x is optimal too and leaves the
    // passive rate constraint free of interference.
    sol.v_big = sol.rx();
    sol.r_s0 = CMat::zeros(sol.v_big.nrows(), sol.v_big.ncols());
    rescore(&mut sol, profile, chans, scn, cfg)?;
    // A single beam is feasible here as well; it wins only within the solver tolerance.
    if let Ok(mut b) = beam {
        rescore(&mut b, profile, chans, scn, cfg)?;
        if b.objective < sol.objective {
            return Ok(b);
        }
    }
    Ok(sol)
}

/// Sets `U = diag(J / w)` from the closed-form FIM so that `tr(U^-1)` is the SPEB.
fn rescore(beam: &mut BeamSolution, profile: &StarsProfile, chans: &ChannelSet, scn: &Scenario, cfg: &SystemConfig) -> Result<()> {
    let st = scn.st;
    let sv_t = star_steering(st.r, st.theta, cfg)?;
    let gs = build_gamma_matrices(profile, chans, &sv_t, cfg);
    let terms = closed_form_terms(cfg.m_sensor as f64, st, scn, cfg, CLOSED_FORM)?;
    let (gt, gr) = fim_forms(&gs.s, &gs.b1, &gs.b2, &gs.prime, &terms, cfg.d_s);
    let w = speb_weights(st);
    let rx = beam.rx();
    let (jt, jr) = (re_trace(&rx, &gt), re_trace(&rx, &gr));
    beam.u_mat = Matrix2::new(jt / w[0], 0.0, 0.0, jr / w[1]);
    beam.objective = if jt > 0.0 && jr > 0.0 { w[0] / jt + w[1] / jr } else { f64::INFINITY };
    Ok(())
}

/// Penalty-based two-layer beamforming from a feasible rank-one profile.
pub fn run_algorithm2(init: &StarsProfile, chans: &ChannelSet, scn: &Scenario, cfg: &SystemConfig, opts: &BfOptions) -> Result<BfOutcome> {
    let mut profile = init.clone();
    let mut sol = active_step(&profile, chans, scn, cfg, opts)?;
    let mut obj = sol.objective;
    let mut trace = vec![BfTraceRow { outer: 0, inner: 0, objective: obj, penalty: penalty_value(&profile.big_q_r, &profile.big_q_t), rho: f64::NAN }];
    // The penalty is the whole passive objective, so rho rescales it without moving the minimizer.
    let initial_pen = penalty_value(&profile.big_q_r, &profile.big_q_t);
    let mut state = PenaltyState { rho: 10.0 * initial_pen.max(1.0), c_shrink: opts.c_shrink, penalty_value: initial_pen };
    let mut prev_outer_obj = obj;
    for outer in 1..=opts.outer_cap {
        let mut inner_obj = obj;
        for inner in 1..=opts.inner_cap {
            let step = match passive_bf_penalty_step(&profile, &sol, chans, scn, cfg, state.rho, opts) {
                Ok(s) => s,
                Err(_) => break,
            };
            let cand = StarsProfile::from_matrices(step.big_q_r, step.big_q_t);
            let next = match active_step(&cand, chans, scn, cfg, opts) {
                Ok(s) => s,
                Err(_) => break,
            };
            if !(next.objective <= obj) {
                break;
            }
            let change = (obj - next.objective) / obj;
            profile = cand;
            sol = next;
            obj = sol.objective;
            state.penalty_value = step.penalty_value;
            trace.push(BfTraceRow { outer, inner, objective: obj, penalty: state.penalty_value, rho: state.rho });
            if change < opts.eps {
                break;
            }
            inner_obj = obj;
        }
        let _ = inner_obj;
        state.rho *= state.c_shrink;
        let outer_change = (prev_outer_obj - obj).abs() / prev_outer_obj;
        prev_outer_obj = obj;
        if state.penalty_value <= opts.penalty_tol && outer_change < opts.eps1 {
            break;
        }
    }
    let rank_one = state.penalty_value <= opts.penalty_tol;
    let extracted = extract_diag_profile(&profile.big_q_r, &profile.big_q_t, f64::INFINITY)?;
    // The extracted profile gets its own active solve; keep the better of the two
    // rank-one candidates (extracted or initial) by sensing objective.
    let mut final_sol = match active_step(&extracted, chans, scn, cfg, opts) {
        Ok(s) => s,
        Err(_) => active_step(init, chans, scn, cfg, opts)?,
    };
    let mut final_profile = extracted;
    if !final_sol.objective.is_finite() {
        final_sol = active_step(init, chans, scn, cfg, opts)?;
        final_profile = init.clone();
    }
    let recovered = if opts.dedicated_sensing { rank_one_recovery(&final_sol, chans, &final_profile)? } else { final_sol };
    let rate = achievable_rate(&recovered, &final_profile, chans, scn.sigma2);
    let speb = closed_form_speb(&recovered.rx(), &final_profile, chans, scn, cfg)?;
    Ok(BfOutcome { solution: recovered, profile: final_profile, trace, penalty: state, rank_one, rate, speb })
}

/// Single C&S beam at full power when no sensing beam is allowed. Directions on the arc from the
/// leading eigenvector of `V_c` to the CU matched filter are scanned; the rate-feasible one with
/// the lowest SPEB wins.
pub fn joint_beam(sol: &BeamSolution, profile: &StarsProfile, chans: &ChannelSet, scn: &Scenario, cfg: &SystemConfig) -> Result<BeamSolution> {
    let u = cu_effective_channel(profile, chans);
    let un = u.norm();
    if !(un > 0.0) {
        return Err(Error::DegenerateChannel("zero effective gain".into()));
    }
    let mrt = &u / Complex64::new(un, 0.0);
    let (_, mut e) = leading_eig(&sol.v_big);
    let ph = mrt.dotc(&e);
    if ph.norm() > 0.0 {
        e *= ph.conj() / ph.norm();
    }
    let gamma = 2f64.powf(scn.r_min) - 1.0;
    let mut best: Option<(f64, CVec)> = None;
    for i in 0..=40 {
        let t = i as f64 / 40.0;
        let d = &e * Complex64::new(1.0 - t, 0.0) + &mrt * Complex64::new(t, 0.0);
        let n = d.norm();
        if n < 1e-12 {
            continue;
        }
        let v = d * Complex64::new(scn.p_max.sqrt() / n, 0.0);
        if u.dotc(&v).norm_sqr() < gamma * scn.sigma2 {
            continue;
        }
        let vv = &v * v.adjoint();
        if let Ok(speb) = closed_form_speb(&vv, profile, chans, scn, cfg) {
            if best.as_ref().is_none_or(|(b, _)| speb < *b) {
                best = Some((speb, v));
            }
        }
    }
    let (_, v) = best.ok_or_else(|| Error::Infeasible { reason: "no single beam meets the rate threshold".into() })?;
    let mut out = sol.clone();
    out.v_big = &v * v.adjoint();
    out.r_s0 = CMat::zeros(v.len(), v.len());
    out.v_c = Some(v);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoTraceRow {
    pub iteration: usize,
    pub cf: f64,
    pub speb: f64,
    pub rate: f64,
    pub penalty: f64,
    pub power: f64,
    /// Rate threshold met; the isotropic start generally is not.
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullSolution {
    pub plan: DeploymentPlan,
    pub cfg: SystemConfig,
    pub solution: BeamSolution,
    pub profile: StarsProfile,
    pub trace: Vec<AoTraceRow>,
    pub iterations: usize,
    pub rank_one: bool,
}

/// Starting point of the alternation.
#[derive(Debug, Clone, PartialEq)]
pub struct AoInit {
    pub m_r: usize,
    pub d_s: f64,
    pub profile: StarsProfile,
    pub solution: BeamSolution,
}

impl AoInit {
    /// `R_x = (P / n) I`, equal energy split, `M_r = M`, `d_s = lambda / 2`.
    pub fn standard(scn: &Scenario, cfg: &SystemConfig) -> Self {
        AoInit {
            m_r: cfg.m_star,
            d_s: cfg.lambda_c / 2.0,
            profile: StarsProfile::uniform(cfg.star_elements()),
            solution: BeamSolution::isotropic(cfg.bs_elements(), scn.p_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoOptions {
    pub bf: BfOptions,
    pub deploy: DeployOptions,
    pub max_outer: usize,
    /// Relative cost change that ends the alternation.
    pub eps: f64,
    /// Keep the initial deployment fixed (random-deployment benchmark).
    pub fixed_deployment: bool,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self::standard()
    }
}

impl AoOptions {
    pub fn standard() -> Self {
        AoOptions { bf: BfOptions::default(), deploy: DeployOptions::default(), max_outer: 15, eps: 1e-3, fixed_deployment: false }
    }
}

fn ao_cost(rx: &CMat, profile: &StarsProfile, chans: &ChannelSet, scn: &Scenario, cfg: &SystemConfig) -> Result<(f64, f64)> {
    let speb = closed_form_speb(rx, profile, chans, scn, cfg)?;
    Ok((cost_function(speb, cfg.m_sensor as f64, scn), speb))
}

/// Alternates sensor deployment and beamforming; every accepted iterate lowers the cost.
pub fn run_algorithm3(scn: &Scenario, cfg: &SystemConfig, init: &AoInit, opts: &AoOptions) -> Result<FullSolution> {
    let chans = ChannelSet::new(cfg, scn.cu)?;
    let mut cur_cfg = cfg.with_sensors(init.m_r, init.d_s)?;
    let mut profile = init.profile.clone();
    let mut sol = init.solution.clone();
    let (mut cf, speb0) = ao_cost(&sol.rx(), &profile, &chans, scn, &cur_cfg)?;
    let is_feasible = |sol: &BeamSolution, profile: &StarsProfile| achievable_rate(sol, profile, &chans, scn.sigma2) >= scn.r_min * (1.0 - 1e-6);
    let row = |it: usize, cf: f64, speb: f64, sol: &BeamSolution, profile: &StarsProfile, pen: f64| {
        let rate = achievable_rate(sol, profile, &chans, scn.sigma2);
        AoTraceRow { iteration: it, cf, speb, rate, penalty: pen, power: sol.power(), feasible: rate >= scn.r_min * (1.0 - 1e-6) }
    };
    let mut feasible = is_feasible(&sol, &profile);
    let mut trace = vec![row(0, cf, speb0, &sol, &profile, penalty_value(&profile.big_q_r, &profile.big_q_t))];
    let mut rank_one = true;
    let mut iterations = 0;
    for it in 1..=opts.max_outer {
        iterations = it;
        let start_cf = cf;
        if !opts.fixed_deployment {
            let rx = sol.rx();
            let coeffs = deploy_coefficients(&rx, &profile, scn.st, scn, &cur_cfg)?;
            let plan0 = coeffs.plan(cur_cfg.m_sensor, cur_cfg.d_s)?;
            let out = run_algorithm1_with(&coeffs, &plan0, &opts.deploy)?;
            let cand_cfg = cur_cfg.with_sensors(out.plan.m_r, out.plan.d_s)?;
            let (cand_cf, _) = ao_cost(&rx, &profile, &chans, scn, &cand_cfg)?;
            if cand_cf <= cf {
                cur_cfg = cand_cfg;
                cf = cand_cf;
            }
        }
        let bf = run_algorithm2(&profile, &chans, scn, &cur_cfg, &opts.bf)?;
        let (cand_cf, _) = ao_cost(&bf.solution.rx(), &bf.profile, &chans, scn, &cur_cfg)?;
        // An infeasible incumbent yields to any feasible candidate.
        let cand_feasible = is_feasible(&bf.solution, &bf.profile);
        if cand_feasible && (!feasible || cand_cf <= cf) {
            feasible = true;
            sol = bf.solution;
            profile = bf.profile;
            cf = cand_cf;
            rank_one = bf.rank_one;
        }
        let (_, speb) = ao_cost(&sol.rx(), &profile, &chans, scn, &cur_cfg)?;
        trace.push(row(it, cf, speb, &sol, &profile, penalty_value(&profile.big_q_r, &profile.big_q_t)));
        if feasible && (start_cf - cf).abs() / start_cf.abs().max(f64::MIN_POSITIVE) < opts.eps {
            break;
        }
    }
    let speb = trace.last().map(|r| r.speb).unwrap_or(f64::NAN);
    let plan = DeploymentPlan { d_s: cur_cfg.d_s, m_r: cur_cfg.m_sensor, cf_value: cf, speb_value: speb };
    Ok(FullSolution { plan, cfg: cur_cfg, solution: sol, profile, trace, iterations, rank_one })
}

/// Compared schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    Proposed,
    RandM,
    ConRis,
    ConIsac,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::RandM, Scheme::ConRis, Scheme::ConIsac];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "PROPOSED",
            Scheme::RandM => "RANDM",
            Scheme::ConRis => "CONRIS",
            Scheme::ConIsac => "CONISAC",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Runs one scheme from the standard initialization.
///
/// * `RandM`: half-wavelength sensor spacing and a random even sensor count, deployment held fixed.
/// * `ConRis`: separate transmitting and reflecting surfaces of half the elements each.
/// * `ConIsac`: no dedicated sensing beam.
pub fn run_scheme<R: rand::Rng + ?Sized>(scheme: Scheme, scn: &Scenario, cfg: &SystemConfig, base: &AoOptions, rng: &mut R) -> Result<FullSolution> {
    run_scheme_from(scheme, scn, cfg, AoInit::standard(scn, cfg), base, rng)
}

/// As [`run_scheme`] from a caller-chosen starting point; the scheme overrides its own fields.
pub fn run_scheme_from<R: rand::Rng + ?Sized>(scheme: Scheme, scn: &Scenario, cfg: &SystemConfig, mut init: AoInit, base: &AoOptions, rng: &mut R) -> Result<FullSolution> {
    let mut opts = base.clone();
    match scheme {
        Scheme::Proposed => {}
        Scheme::RandM => {
            init.m_r = 2 * rng.random_range(1..=cfg.m_star / 2);
            init.d_s = cfg.lambda_c / 2.0;
            opts.fixed_deployment = true;
        }
        Scheme::ConRis => {
            let support = ElementSupport::split(cfg.star_elements());
            init.profile = support.initial_profile(cfg.star_elements());
            opts.bf.support = Some(support);
        }
        Scheme::ConIsac => opts.bf.dedicated_sensing = false,
    }
    run_algorithm3(scn, cfg, &init, &opts)
}

/// `||v1||^2` check helper for the index weights used by the closed form.
pub fn index_weight_norm(m_r: usize) -> f64 {
    v1_norm_sq(m_r as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fim::{closed_form_fim, correlation_factors, reflected_covariance};
    use crate::geometry::PolarPosition;
    use crate::sample::*;

    /// Noise set so the uniform-profile capacity is `log2(9)`: the rate threshold binds.
    fn setup(seed: u64) -> (SystemConfig, Scenario, ChannelSet) {
        let (cfg, mut scn, _, _) = small_instance(seed);
        let chans = ChannelSet::new(&cfg, scn.cu).unwrap();
        let u = cu_effective_channel(&StarsProfile::uniform(cfg.star_elements()), &chans);
        scn.sigma2 = scn.p_max * u.norm_squared() / 8.0;
        (cfg, scn, chans)
    }

    #[test]
    fn gamma_forms_match_correlation_factors() {
        let mut r = rng(1);
        for seed in 0..10 {
            let (cfg, scn, rx, prof) = small_instance(seed);
            let chans = ChannelSet::new(&cfg, scn.cu).unwrap();
            let sv = star_steering(scn.st.r, scn.st.theta, &cfg).unwrap();
            let gs = build_gamma_matrices(&prof, &chans, &sv, &cfg);
            let f = correlation_factors(&rx, &prof, scn.st, &cfg).unwrap();
            assert!(rel(re_trace(&rx, &gs.s), f.a) < 1e-10);
            assert!(rel(re_trace(&rx, &gs.b1), f.b1) < 1e-10);
            assert!(rel(re_trace(&rx, &gs.b2), f.b2) < 1e-10);
            assert!((re_trace(&rx, &gs.prime) - f.c).abs() < 1e-10 * f.a.abs().max(f.c.abs()));
            // Surface-side forms agree as well.
            let ys = build_upsilon_matrices(&rx, &CMat::zeros(rx.nrows(), rx.ncols()), &chans, &sv, &cfg);
            assert!(rel(re_trace(&prof.big_q_r, &ys.s), f.a) < 1e-10);
            assert!(rel(re_trace(&prof.big_q_r, &ys.b2), f.b2) < 1e-10);
            assert!((re_trace(&prof.big_q_r, &ys.prime) - f.c).abs() < 1e-10 * f.a.abs().max(f.c.abs()));
            let g = random_profile(cfg.star_elements(), &mut r);
            let gc = build_gamma_matrices(&g, &chans, &sv, &cfg).c;
            assert!(SymmetricEigen::new(gc).eigenvalues.min() > -1e-12 * gs.s.norm().max(1e-300));
        }
    }

    #[test]
    fn zero_reflection_gives_zero_gamma() {
        let (cfg, scn, chans) = setup(2);
        let n = cfg.star_elements();
        let prof = StarsProfile::from_vectors(CVec::zeros(n), CVec::from_element(n, Complex64::new(1.0, 0.0)));
        let sv = star_steering(scn.st.r, scn.st.theta, &cfg).unwrap();
        assert_eq!(build_gamma_matrices(&prof, &chans, &sv, &cfg).s.norm(), 0.0);
    }

    #[test]
    fn rate_identities() {
        let (cfg, scn, chans) = setup(3);
        let mut r = rng(4);
        let prof = random_profile(cfg.star_elements(), &mut r);
        let v = cn_matrix(cfg.bs_elements(), 1, &mut r).column(0).into_owned();
        let sol = BeamSolution {
            r_s0: CMat::zeros(cfg.bs_elements(), cfg.bs_elements()),
            v_big: &v * v.adjoint(),
            v_c: Some(v.clone()),
            u_mat: Matrix2::zeros(),
            objective: 0.0,
            status: SolveStatus::Optimal,
        };
        let u = cu_effective_channel(&prof, &chans);
        let sv = star_steering(scn.st.r, scn.st.theta, &cfg).unwrap();
        let gc = build_gamma_matrices(&prof, &chans, &sv, &cfg).c;
        let direct = u.dotc(&v).norm_sqr();
        assert!(rel(re_trace(&sol.v_big, &gc), direct) < 1e-10);
        let rate = achievable_rate(&sol, &prof, &chans, scn.sigma2);
        assert!(rel(rate, (1.0 + direct / scn.sigma2).log2()) < 1e-10);
        let zero = BeamSolution { v_big: CMat::zeros(v.len(), v.len()), ..sol };
        assert_eq!(achievable_rate(&zero, &prof, &chans, scn.sigma2), 0.0);
    }

    #[test]
    fn active_sdp_contracts() {
        let (cfg, scn, chans) = setup(5);
        let prof = StarsProfile::uniform(cfg.star_elements());
        let opts = BfOptions::default();
        let sol = active_bf_sdp(&prof, &chans, &scn, &cfg, &opts).unwrap();
        assert!(sol.power() <= scn.p_max * (1.0 + 1e-8));
        let gamma = 2f64.powf(scn.r_min) - 1.0;
        let sv = star_steering(scn.st.r, scn.st.theta, &cfg).unwrap();
        let gc = build_gamma_matrices(&prof, &chans, &sv, &cfg).c;
        let lhs = re_trace(&sol.v_big, &gc);
        let rhs = gamma * (re_trace(&sol.r_s0, &gc) + scn.sigma2);
        assert!(lhs >= rhs * (1.0 - 1e-6));
        // U meets the coupling with equality on the diagonal at the optimum.
        let speb = closed_form_speb(&sol.rx(), &prof, &chans, &scn, &cfg).unwrap();
        let tr_uinv = sol.u_mat.try_inverse().unwrap().trace();
        assert!(rel(tr_uinv, speb) < 1e-6, "{tr_uinv} {speb}");
        assert!(rel(sol.objective, speb) < 1e-12);
        // The optimum beats the isotropic covariance.
        let iso = BeamSolution::isotropic(cfg.bs_elements(), scn.p_max);
        assert!(speb <= closed_form_speb(&iso.rx(), &prof, &chans, &scn, &cfg).unwrap());
        // More power never hurts.
        let mut scn2 = scn.clone();
        scn2.p_max *= 2.0;
        let sol2 = active_bf_sdp(&prof, &chans, &scn2, &cfg, &opts).unwrap();
        assert!(sol2.objective <= sol.objective * (1.0 + 1e-7));
    }

    #[test]
    fn unreachable_rate_reports_capacity() {
        let (cfg, mut scn, chans) = setup(6);
        scn.r_min = 60.0;
        let err = active_bf_sdp(&StarsProfile::uniform(cfg.star_elements()), &chans, &scn, &cfg, &BfOptions::default()).unwrap_err();
        assert!(matches!(err, Error::RateUnreachable { .. }));
    }

    #[test]
    fn recovery_preserves_rate_and_power() {
        let (cfg, scn, chans) = setup(7);
        let prof = StarsProfile::uniform(cfg.star_elements());
        let sol = active_bf_sdp(&prof, &chans, &scn, &cfg, &BfOptions::default()).unwrap();
        let rec = rank_one_recovery(&sol, &chans, &prof).unwrap();
        let sv = star_steering(scn.st.r, scn.st.theta, &cfg).unwrap();
        let gc = build_gamma_matrices(&prof, &chans, &sv, &cfg).c;
        let before = re_trace(&sol.v_big, &gc);
        assert!((re_trace(&rec.v_big, &gc) - before).abs() <= 1e-8 * before);
        assert!((re_trace(&rec.r_s0, &gc) - re_trace(&sol.r_s0, &gc)).abs() <= 1e-8 * before);
        assert!(rec.v_big.trace().re <= sol.v_big.trace().re + 1e-8 * scn.p_max);
        assert!(rec.power() <= sol.power() * (1.0 + 1e-10));
        // Random PSD inputs obey the Cauchy-Schwarz bound.
        let mut r = rng(8);
        for _ in 0..50 {
            let v = random_psd(cfg.bs_elements(), &mut r);
            let s = BeamSolution { v_big: v.clone(), ..sol.clone() };
            let out = rank_one_recovery(&s, &chans, &prof).unwrap();
            assert!(out.v_big.trace().re <= v.trace().re + 1e-8);
        }
        // Rank-one input is returned up to a global phase.
        let v = rec.v_c.clone().unwrap();
        let again = rank_one_recovery(&rec, &chans, &prof).unwrap();
        let w = again.v_c.unwrap();
        assert!((w.dotc(&v).norm() - v.norm_squared()).abs() < 1e-8 * v.norm_squared());
    }

    #[test]
    fn penalty_properties() {
        let mut r = rng(9);
        let n = 6;
        for _ in 0..20 {
            let a = cn_matrix(n, 1, &mut r);
            let b = cn_matrix(n, 1, &mut r);
            let q1 = &a * a.adjoint();
            let q2 = &q1 + &b * b.adjoint();
            assert!(penalty_value(&q1, &q1) < 1e-10 * q1.norm());
            assert!(penalty_value(&q2, &q1) > 1e-3);
            // Linearized bound: tr Q - Q_bar >= tr Q - ||Q||_2 with equality at Q^n.
            let (lam, u) = leading_eig(&q1);
            let q = random_psd(n, &mut r);
            let qbar = lam + re_trace(&(&u * u.adjoint()), &(&q - &q1));
            let spec = leading_eig(&q).0;
            assert!(q.trace().re - qbar >= q.trace().re - spec - 1e-12);
            let qbar_n = lam + re_trace(&(&u * u.adjoint()), &(&q1 - &q1));
            assert!((qbar_n - lam).abs() < 1e-12);
        }
    }

    #[test]
    fn extraction_recovers_vectors_and_caps_energy() {
        let mut r = rng(10);
        let prof = random_profile(9, &mut r);
        let out = extract_diag_profile(&prof.big_q_r, &prof.big_q_t, 1e-5).unwrap();
        for (a, b) in [(&out.q_r, &prof.q_r), (&out.q_t, &prof.q_t)] {
            assert!((a.dotc(b).norm() - b.norm_squared()).abs() < 1e-10);
        }
        assert!(out.q_r[0].im.abs() < 1e-12 && out.q_r[0].re >= 0.0);
        let inflated = &prof.big_q_r * Complex64::new(1.5, 0.0);
        let capped = extract_diag_profile(&inflated, &prof.big_q_t, 1e-5).unwrap();
        assert!(capped.max_element_energy() <= 1.0 + 1e-12);
        let a = cn_matrix(9, 2, &mut r);
        assert!(extract_diag_profile(&(&a * a.adjoint()), &prof.big_q_t, 1e-5).is_err());
    }

    #[test]
    fn passive_step_fixed_point_for_rank_one() {
        let (cfg, scn, chans) = setup(11);
        let prof = StarsProfile::uniform(cfg.star_elements());
        let opts = BfOptions::default();
        let sol = active_bf_sdp(&prof, &chans, &scn, &cfg, &opts).unwrap();
        let step = passive_bf_penalty_step(&prof, &sol, &chans, &scn, &cfg, 1.0, &opts).unwrap();
        assert!(step.penalty_value < 1e-5, "{}", step.penalty_value);
        for m in 0..cfg.star_elements() {
            let s = step.big_q_r[(m, m)].re + step.big_q_t[(m, m)].re;
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn algorithm2_contracts() {
        let (cfg, scn, chans) = setup(12);
        let opts = BfOptions::default();
        let out = run_algorithm2(&StarsProfile::uniform(cfg.star_elements()), &chans, &scn, &cfg, &opts).unwrap();
        assert!(out.trace.windows(2).all(|w| w[1].objective <= w[0].objective));
        assert!(out.penalty.penalty_value <= 1e-5);
        assert!(out.solution.power() <= scn.p_max + 1e-8);
        assert!(out.profile.max_element_energy() <= 1.0 + 1e-12);
        assert!(out.rate >= scn.r_min * (1.0 - 1e-6));
        let rep = closed_form_fim(&out.solution.rx(), &out.profile, scn.st, &scn, &cfg).unwrap();
        assert!(rel(rep.speb, out.speb) < 1e-9);
    }

    #[test]
    fn algorithm3_descends() {
        let (cfg, mut scn, _) = setup(13);
        let chans = ChannelSet::new(&cfg, scn.cu).unwrap();
        let init = AoInit::standard(&scn, &cfg);
        let speb0 = closed_form_speb(&init.solution.rx(), &init.profile, &chans, &scn, &cfg.with_sensors(init.m_r, init.d_s).unwrap()).unwrap();
        scn.eps0 = speb0;
        let out = run_algorithm3(&scn, &cfg, &init, &AoOptions::standard()).unwrap();
        assert!(out.trace.windows(2).all(|w| w[1].cf <= w[0].cf));
        assert!(out.iterations <= 15);
        assert!(out.solution.power() <= scn.p_max + 1e-8);
        let _ = PolarPosition::new(1.0, 1.0);
        let _ = reflected_covariance;
    }
}
