//! Embedded convex solvers: a primal-dual interior-point method for linear
//! matrix inequalities and a barrier method for geometric programs.
//!
//! SDP form solved here:
//!
//! ```text
//! minimize    c^T y
//! subject to  F_k0 + sum_i y_i F_ki  PSD   for every block k
//!             A y = b
//! ```
//!
//! Hermitian matrix variables are lowered to the real-symmetric embedding
//! `[[Re X, -Im X], [Im X, Re X]]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::channel::CMat;

pub const SDP_TOL: f64 = 1e-8;
pub const GP_TOL: f64 = 1e-9;
const MAX_LOG_STEP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub dual_objective: f64,
    /// Variable values at the reported point.
    pub primal: Vec<f64>,
    pub duality_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    /// Normalized residual of the infeasibility or unboundedness certificate.
    pub certificate_norm: Option<f64>,
}

/// One linear matrix inequality `F0 + sum_i y_i F_i PSD` stored as full symmetric triplets.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub name: String,
    pub dim: usize,
    constant: Vec<(usize, usize, f64)>,
    terms: BTreeMap<usize, Vec<(usize, usize, f64)>>,
}

impl LmiBlock {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        LmiBlock { name: name.into(), dim, constant: Vec::new(), terms: BTreeMap::new() }
    }

    /// Adds `v` at `(r, c)` and its mirror for the variable `var`.
    pub fn add(&mut self, var: usize, r: usize, c: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let e = self.terms.entry(var).or_default();
        e.push((r, c, v));
        if r != c {
            e.push((c, r, v));
        }
    }

    pub fn add_constant(&mut self, r: usize, c: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        self.constant.push((r, c, v));
        if r != c {
            self.constant.push((c, r, v));
        }
    }

    /// Adds `sum coeffs * y` to entry `(r, c)` (and its mirror).
    pub fn add_linear(&mut self, r: usize, c: usize, coeffs: &[(usize, f64)]) {
        for &(var, v) in coeffs {
            self.add(var, r, c, v);
        }
    }
}

/// Real-symmetric `n x n` matrix variable.
#[derive(Debug, Clone, Copy)]
pub struct SymVar {
    pub offset: usize,
    pub n: usize,
}

impl SymVar {
    pub fn len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn var(&self, p: usize, q: usize) -> usize {
        let (p, q) = if p <= q { (p, q) } else { (q, p) };
        self.offset + p * self.n - p * (p + 1) / 2 + q
    }

    pub fn value(&self, y: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |p, q| y[self.var(p, q)])
    }

    pub fn trace_coeffs(&self) -> Vec<(usize, f64)> {
        (0..self.n).map(|p| (self.var(p, p), 1.0)).collect()
    }
}

/// Complex-Hermitian `n x n` matrix variable with `n^2` real coordinates.
#[derive(Debug, Clone, Copy)]
pub struct HermVar {
    pub offset: usize,
    pub n: usize,
}

impl HermVar {
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn diag(&self, p: usize) -> usize {
        self.offset + p
    }

    fn pair(&self, p: usize, q: usize) -> usize {
        debug_assert!(p < q);
        p * self.n - p * (p + 1) / 2 + (q - p - 1)
    }

    /// Variable holding `Re X_pq` for `p < q`.
    pub fn re(&self, p: usize, q: usize) -> usize {
        self.offset + self.n + 2 * self.pair(p, q)
    }

    /// Variable holding `Im X_pq` for `p < q`.
    pub fn im(&self, p: usize, q: usize) -> usize {
        self.re(p, q) + 1
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Coefficients of `Re tr(C X)` for Hermitian `C`.
    pub fn trace_coeffs(&self, c: &CMat) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for p in 0..self.n {
            out.push((self.diag(p), c[(p, p)].re));
        }
        for p in 0..self.n {
            for q in p + 1..self.n {
                // C_qp X_pq + C_pq X_qp = 2 Re(C_qp X_pq).
                let cqp = c[(q, p)];
                out.push((self.re(p, q), 2.0 * cqp.re));
                out.push((self.im(p, q), -2.0 * cqp.im));
            }
        }
        out
    }

    pub fn value(&self, y: &[f64]) -> CMat {
        let mut x = CMat::zeros(self.n, self.n);
        for p in 0..self.n {
            x[(p, p)] = Complex64::new(y[self.diag(p)], 0.0);
            for q in p + 1..self.n {
                let v = Complex64::new(y[self.re(p, q)], y[self.im(p, q)]);
                x[(p, q)] = v;
                x[(q, p)] = v.conj();
            }
        }
        x
    }

    /// Writes the embedding of `X` into `blk` at row/column offset `at`, scaled by `s`.
    pub fn embed_into(&self, blk: &mut LmiBlock, at: usize, s: f64) {
        let n = self.n;
        for p in 0..n {
            blk.add(self.diag(p), at + p, at + p, s);
            blk.add(self.diag(p), at + n + p, at + n + p, s);
            for q in p + 1..n {
                let re = self.re(p, q);
                blk.add(re, at + p, at + q, s);
                blk.add(re, at + n + p, at + n + q, s);
                let im = self.im(p, q);
                blk.add(im, at + n + p, at + q, s);
                blk.add(im, at + n + q, at + p, -s);
            }
        }
    }
}

/// Real embedding of a Hermitian matrix.
pub fn hermitian_embedding(x: &CMat) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, bj) = (i / n, j / n);
        let v = x[(i % n, j % n)];
        match (bi, bj) {
            (0, 0) | (1, 1) => v.re,
            (0, 1) => -v.im,
            _ => v.im,
        }
    })
}

#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    n_vars: usize,
    objective: Vec<f64>,
    objective_offset: f64,
    blocks: Vec<LmiBlock>,
    eq_rows: Vec<Vec<(usize, f64)>>,
    eq_rhs: Vec<f64>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    pub fn add_vars(&mut self, k: usize) -> Range<usize> {
        let start = self.n_vars;
        self.n_vars += k;
        self.objective.resize(self.n_vars, 0.0);
        start..self.n_vars
    }

    pub fn add_symmetric(&mut self, n: usize) -> SymVar {
        let v = SymVar { offset: self.n_vars, n };
        self.add_vars(v.len());
        v
    }

    pub fn add_hermitian(&mut self, n: usize) -> HermVar {
        let v = HermVar { offset: self.n_vars, n };
        self.add_vars(v.len());
        v
    }

    pub fn add_objective(&mut self, coeffs: &[(usize, f64)]) {
        for &(i, v) in coeffs {
            self.objective[i] += v;
        }
    }

    pub fn add_objective_offset(&mut self, v: f64) {
        self.objective_offset += v;
    }

    pub fn add_block(&mut self, blk: LmiBlock) {
        self.blocks.push(blk);
    }

    pub fn add_psd_hermitian(&mut self, x: &HermVar, name: &str) {
        let mut blk = LmiBlock::new(name, 2 * x.n);
        x.embed_into(&mut blk, 0, 1.0);
        self.blocks.push(blk);
    }

    pub fn add_psd_symmetric(&mut self, x: &SymVar, name: &str) {
        let mut blk = LmiBlock::new(name, x.n);
        for p in 0..x.n {
            for q in p..x.n {
                blk.add(x.var(p, q), p, q, 1.0);
            }
        }
        self.blocks.push(blk);
    }

    /// `constant + sum coeffs * y >= 0`.
    pub fn add_linear_geq(&mut self, coeffs: &[(usize, f64)], constant: f64, name: &str) {
        let mut blk = LmiBlock::new(name, 1);
        blk.add_constant(0, 0, constant);
        blk.add_linear(0, 0, coeffs);
        self.blocks.push(blk);
    }

    /// `sum coeffs * y = rhs`.
    pub fn add_equality(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        self.eq_rows.push(coeffs.to_vec());
        self.eq_rhs.push(rhs);
    }

    /// Human-readable listing for debugging; not a stable format.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vars {}", self.n_vars);
        let _ = writeln!(s, "objective offset {:e}", self.objective_offset);
        for (i, c) in self.objective.iter().enumerate().filter(|(_, c)| **c != 0.0) {
            let _ = writeln!(s, "  c[{i}] = {c:e}");
        }
        for b in &self.blocks {
            let _ = writeln!(s, "block {} dim {}", b.name, b.dim);
            for (r, c, v) in &b.constant {
                let _ = writeln!(s, "  F0[{r},{c}] = {v:e}");
            }
            for (var, es) in &b.terms {
                for (r, c, v) in es {
                    let _ = writeln!(s, "  F{var}[{r},{c}] = {v:e}");
                }
            }
        }
        for (row, rhs) in self.eq_rows.iter().zip(&self.eq_rhs) {
            let terms: Vec<String> = row.iter().map(|(i, v)| format!("{v:e}*y{i}")).collect();
            let _ = writeln!(s, "eq {} = {rhs:e}", terms.join(" + "));
        }
        s
    }
}

/// Adds `[[W, I], [I, U]] PSD` for a fresh symmetric `U` and `W`, and the objective
/// `sum_i weights[i] W_ii`. At the optimum `W = U^{-1}`.
pub fn tr_inverse_epigraph_weighted(p: &mut SdpProblem, u_dim: usize, weights: &[f64]) -> (SymVar, SymVar) {
    assert_eq!(weights.len(), u_dim);
    let u = p.add_symmetric(u_dim);
    let w = p.add_symmetric(u_dim);
    let mut blk = LmiBlock::new("tr_inverse_epigraph", 2 * u_dim);
    for i in 0..u_dim {
        for j in i..u_dim {
            blk.add(w.var(i, j), i, j, 1.0);
            blk.add(u.var(i, j), u_dim + i, u_dim + j, 1.0);
        }
        blk.add_constant(i, u_dim + i, 1.0);
    }
    p.add_block(blk);
    let obj: Vec<(usize, f64)> = (0..u_dim).map(|i| (w.var(i, i), weights[i])).collect();
    p.add_objective(&obj);
    (u, w)
}

pub fn tr_inverse_epigraph(p: &mut SdpProblem, u_dim: usize) -> (SymVar, SymVar) {
    tr_inverse_epigraph_weighted(p, u_dim, &vec![1.0; u_dim])
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions { tol: SDP_TOL, max_iter: 100 }
    }
}

struct Block {
    dim: usize,
    f0: DMatrix<f64>,
    vars: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

impl Block {
    fn apply(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (var, es) in &self.vars {
            let yv = y[*var];
            if yv != 0.0 {
                for &(r, c, v) in es {
                    m[(r, c)] += v * yv;
                }
            }
        }
        m
    }

    fn adjoint_into(&self, z: &DMatrix<f64>, out: &mut [f64]) {
        for (var, es) in &self.vars {
            out[*var] += es.iter().map(|&(r, c, v)| v * z[(r, c)]).sum::<f64>();
        }
    }
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Largest `alpha` with `x + alpha dx PSD` (infinite when unbounded).
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    if x.nrows() == 1 {
        let d = dx[(0, 0)];
        return if d < 0.0 { -x[(0, 0)] / d } else { f64::INFINITY };
    }
    let Some(ch) = Cholesky::new(x.clone()) else { return 0.0 };
    let l = ch.l();
    let linv = match l.clone().try_inverse() {
        Some(v) => v,
        None => return 0.0,
    };
    let m = sym(&linv * dx * linv.transpose());
    let min = SymmetricEigen::new(m).eigenvalues.min();
    if min < 0.0 {
        -1.0 / min
    } else {
        f64::INFINITY
    }
}

fn spd_inverse(x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if x.nrows() == 1 {
        let v = x[(0, 0)];
        return if v > 0.0 { Some(DMatrix::from_element(1, 1, 1.0 / v)) } else { None };
    }
    Cholesky::new(x.clone()).map(|c| sym(c.inverse()))
}

struct Kkt {
    chol: Cholesky<f64, nalgebra::Dyn>,
    a: DMatrix<f64>,
    hinv_at: DMatrix<f64>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Kkt {
    fn new(mut h: DMatrix<f64>, a: &DMatrix<f64>) -> Option<Kkt> {
        let m = h.nrows();
        let maxd = (0..m).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut reg = 1e-14 * maxd;
        let chol = loop {
            for i in 0..m {
                h[(i, i)] += reg;
            }
            if let Some(c) = Cholesky::new(h.clone()) {
                break c;
            }
            for i in 0..m {
                h[(i, i)] -= reg;
            }
            reg *= 100.0;
            if reg > 1e-2 * maxd {
                return None;
            }
        };
        let (hinv_at, schur) = if a.nrows() > 0 {
            let hinv_at = chol.solve(&a.transpose());
            let s = a * &hinv_at;
            (hinv_at, Some(s.lu()))
        } else {
            (DMatrix::zeros(m, 0), None)
        };
        Some(Kkt { chol, a: a.clone(), hinv_at, schur })
    }

    /// Solves `H dy - A^T dnu = g`, `A dy = re`.
    fn solve(&self, g: &DVector<f64>, re: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let hg = self.chol.solve(g);
        match &self.schur {
            None => (hg, DVector::zeros(0)),
            Some(lu) => {
                let rhs = re - &self.a * &hg;
                let dnu = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(rhs.len()));
                let dy = hg + &self.hinv_at * &dnu;
                (dy, dnu)
            }
        }
    }
}

/// Primal-dual interior-point solve (HKM direction, Mehrotra predictor-corrector).
pub fn solve_sdp(p: &SdpProblem, tol: f64) -> SolveReport {
    solve_sdp_with(p, SdpOptions { tol, ..SdpOptions::default() })
}

pub fn solve_sdp_with(p: &SdpProblem, opts: SdpOptions) -> SolveReport {
    let m = p.n_vars;
    let blocks: Vec<Block> = p
        .blocks
        .iter()
        .map(|b| {
            let mut f0 = DMatrix::zeros(b.dim, b.dim);
            for &(r, c, v) in &b.constant {
                f0[(r, c)] += v;
            }
            Block { dim: b.dim, f0, vars: b.terms.iter().map(|(k, v)| (*k, v.clone())).collect() }
        })
        .collect();
    let n_total: usize = blocks.iter().map(|b| b.dim).sum();
    let c = DVector::from_vec(p.objective.clone());
    let neq = p.eq_rows.len();
    let mut a = DMatrix::zeros(neq, m);
    for (i, row) in p.eq_rows.iter().enumerate() {
        for &(j, v) in row {
            a[(i, j)] += v;
        }
    }
    let b = DVector::from_vec(p.eq_rhs.clone());

    let mut max_fi = 0.0f64;
    let mut ratio = 0.0f64;
    let mut fi_norm = vec![0.0f64; m];
    for blk in &blocks {
        for (var, es) in &blk.vars {
            fi_norm[*var] += es.iter().map(|e| e.2 * e.2).sum::<f64>();
        }
    }
    for i in 0..m {
        let nrm = fi_norm[i].sqrt();
        max_fi = max_fi.max(nrm);
        ratio = ratio.max((1.0 + c[i].abs()) / (1.0 + nrm));
    }
    let f0_norm: f64 = blocks.iter().map(|b| b.f0.norm_squared()).sum::<f64>().sqrt();
    let nt = n_total as f64;
    let xi_z = 10f64.max(nt.sqrt()).max(nt * ratio);
    let eta_s = 10f64.max(nt.sqrt()).max(max_fi.max(f0_norm));

    let mut y = vec![0.0; m];
    let mut nu = DVector::zeros(neq);
    let mut s: Vec<DMatrix<f64>> = blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim) * eta_s).collect();
    let mut z: Vec<DMatrix<f64>> = blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim) * xi_z).collect();

    let c_norm = c.norm();
    let b_norm = b.norm();
    let mut report = SolveReport {
        status: SolveStatus::MaxIter,
        objective: f64::NAN,
        dual_objective: f64::NAN,
        primal: y.clone(),
        duality_gap: f64::INFINITY,
        primal_infeasibility: f64::INFINITY,
        dual_infeasibility: f64::INFINITY,
        iterations: 0,
        certificate_norm: None,
    };
    let mut stall = 0usize;

    for iter in 0..opts.max_iter {
        report.iterations = iter;
        let yv = DVector::from_vec(y.clone());
        let rp: Vec<DMatrix<f64>> = blocks.iter().zip(&s).map(|(blk, sk)| sk - (&blk.f0 + blk.apply(&y))).collect();
        let mut fz = vec![0.0; m];
        for (blk, zk) in blocks.iter().zip(&z) {
            blk.adjoint_into(zk, &mut fz);
        }
        let fz = DVector::from_vec(fz);
        let atnu = a.transpose() * &nu;
        let rd = &c - &fz - &atnu;
        let re = &b - &a * &yv;
        let pobj = c.dot(&yv);
        let f0z: f64 = blocks.iter().zip(&z).map(|(blk, zk)| inner(&blk.f0, zk)).sum();
        let dobj = -f0z + b.dot(&nu);
        let sz: f64 = s.iter().zip(&z).map(|(a, b)| inner(a, b)).sum();
        let mu = sz / nt.max(1.0);

        let rp_norm = rp.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt();
        let pinf = (rp_norm / (1.0 + f0_norm)).max(re.norm() / (1.0 + b_norm));
        let dinf = rd.norm() / (1.0 + c_norm);
        let gap = (pobj - dobj).abs().max(sz.abs()) / (1.0 + pobj.abs() + dobj.abs());
        report.objective = pobj + p.objective_offset;
        report.dual_objective = dobj + p.objective_offset;
        report.primal = y.clone();
        report.duality_gap = pobj - dobj;
        report.primal_infeasibility = pinf;
        report.dual_infeasibility = dinf;
        if pinf <= opts.tol && dinf <= opts.tol && gap <= opts.tol {
            report.status = SolveStatus::Optimal;
            return report;
        }
        // Infeasibility certificate: Z PSD with F*(Z) + A^T nu ~ 0 and positive dual value.
        let dual_ray = -f0z + b.dot(&nu);
        if dual_ray > 0.0 {
            let cert = (&fz + &atnu).norm() / dual_ray;
            if cert < opts.tol && pinf > opts.tol {
                report.status = SolveStatus::Infeasible;
                report.certificate_norm = Some(cert);
                return report;
            }
        }
        // Unboundedness: c^T y -> -inf with residuals negligible relative to it.
        if pobj < 0.0 {
            let cert = (f0_norm + rp_norm + b_norm + re.norm()) / (-pobj);
            if cert < opts.tol && dinf > opts.tol {
                report.status = SolveStatus::Unbounded;
                report.certificate_norm = Some(cert);
                return report;
            }
        }

        let sinv: Vec<DMatrix<f64>> = match s.iter().map(spd_inverse).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => return report,
        };

        // Schur complement H_ij = sum_k tr(F_i Z F_j S^{-1}).
        let mut h = DMatrix::zeros(m, m);
        for (k, blk) in blocks.iter().enumerate() {
            let d = blk.dim;
            let zk = &z[k];
            let si = &sinv[k];
            let mut pmat = DMatrix::zeros(d, d);
            for (ii, (vi, ei)) in blk.vars.iter().enumerate() {
                // P = S^{-1} F_i Z, so tr(F_i Z F_j S^{-1}) = sum_{(c,d,g) in F_j} g P[d, c].
                pmat.fill(0.0);
                for &(r, cc, v) in ei {
                    for row in 0..d {
                        let sr = si[(row, r)] * v;
                        if sr != 0.0 {
                            for col in 0..d {
                                pmat[(row, col)] += sr * zk[(cc, col)];
                            }
                        }
                    }
                }
                for (vj, ej) in &blk.vars[ii..] {
                    let val: f64 = ej.iter().map(|&(r, cc, g)| g * pmat[(cc, r)]).sum();
                    h[(*vi, *vj)] += val;
                    if vi != vj {
                        h[(*vj, *vi)] += val;
                    }
                }
            }
        }
        let Some(kkt) = Kkt::new(h, &a) else { return report };

        let direction = |gmats: &[DMatrix<f64>]| -> (DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>) {
            let mut g = vec![0.0; m];
            for (blk, gk) in blocks.iter().zip(gmats) {
                blk.adjoint_into(gk, &mut g);
            }
            let g = DVector::from_vec(g) - &rd;
            let (dy, dnu) = kkt.solve(&g, &re);
            let dys: Vec<f64> = dy.iter().cloned().collect();
            let ds: Vec<DMatrix<f64>> = blocks.iter().zip(&rp).map(|(blk, r)| blk.apply(&dys) - r).collect();
            (dy, dnu, ds)
        };
        let steps = |ds: &[DMatrix<f64>], dz: &[DMatrix<f64>]| -> (f64, f64) {
            let ap = s.iter().zip(ds).map(|(x, d)| max_step(x, d)).fold(f64::INFINITY, f64::min);
            let ad = z.iter().zip(dz).map(|(x, d)| max_step(x, d)).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        // Predictor.
        let g_aff: Vec<DMatrix<f64>> = (0..blocks.len()).map(|k| -&z[k] + &z[k] * &rp[k] * &sinv[k]).collect();
        let (_, _, ds_a) = direction(&g_aff);
        let dz_a: Vec<DMatrix<f64>> = (0..blocks.len()).map(|k| sym(-&z[k] - &z[k] * &ds_a[k] * &sinv[k])).collect();
        let (ap_a, ad_a) = steps(&ds_a, &dz_a);
        let (ap_a, ad_a) = (ap_a.min(1.0), ad_a.min(1.0));
        let mu_aff: f64 = (0..blocks.len())
            .map(|k| inner(&(&s[k] + &ds_a[k] * ap_a), &(&z[k] + &dz_a[k] * ad_a)))
            .sum::<f64>()
            / nt.max(1.0);
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let corr: Vec<DMatrix<f64>> = (0..blocks.len()).map(|k| &dz_a[k] * &ds_a[k] * &sinv[k]).collect();
        let g_cor: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|k| &sinv[k] * (sigma * mu) - &z[k] + &z[k] * &rp[k] * &sinv[k] - &corr[k])
            .collect();
        let (dy, dnu, ds) = direction(&g_cor);
        let dz: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|k| sym(&sinv[k] * (sigma * mu) - &z[k] - &z[k] * &ds[k] * &sinv[k] - &corr[k]))
            .collect();
        let (ap, ad) = steps(&ds, &dz);
        let gamma = 0.9 + 0.09 * ap_a.min(ad_a);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stall += 1;
            if stall > 3 {
                return report;
            }
        } else {
            stall = 0;
        }
        for i in 0..m {
            y[i] += ap * dy[i];
        }
        nu += dnu * ad;
        for k in 0..blocks.len() {
            s[k] = sym(&s[k] + &ds[k] * ap);
            z[k] = sym(&z[k] + &dz[k] * ad);
        }
    }
    report.iterations = opts.max_iter;
    report
}

/// `c * prod x_i^{a_i}` with `c > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub c: f64,
    pub exps: Vec<f64>,
}

impl Monomial {
    pub fn new(c: f64, exps: Vec<f64>) -> Self {
        Monomial { c, exps }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.c * self.exps.iter().zip(x).map(|(a, xi)| xi.powf(*a)).product::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posynomial {
    pub terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Posynomial { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    /// AGM condensation: monomial lower bound tight at `x0`.
    pub fn condense(&self, x0: &[f64]) -> Monomial {
        let vals: Vec<f64> = self.terms.iter().map(|t| t.eval(x0)).collect();
        let total: f64 = vals.iter().sum();
        let n = x0.len();
        let mut exps = vec![0.0; n];
        let mut logc = 0.0;
        for (t, v) in self.terms.iter().zip(&vals) {
            let w = v / total;
            if w == 0.0 {
                continue;
            }
            logc += w * (t.c / w).ln();
            for i in 0..n {
                exps[i] += w * t.exps[i];
            }
        }
        Monomial { c: logc.exp(), exps }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpProblem {
    pub n_vars: usize,
    pub objective: Posynomial,
    /// `p(x) <= 1`.
    pub inequalities: Vec<Posynomial>,
    /// `m(x) = 1`.
    pub equalities: Vec<Monomial>,
}

impl GpProblem {
    pub fn validate(&self) -> Result<(), String> {
        let all = std::iter::once(&self.objective).chain(self.inequalities.iter());
        for p in all {
            for t in &p.terms {
                if !(t.c > 0.0) || t.exps.len() != self.n_vars {
                    return Err("posynomial terms need positive coefficients and full exponent vectors".into());
                }
            }
        }
        for t in &self.equalities {
            if !(t.c > 0.0) || t.exps.len() != self.n_vars {
                return Err("monomial equality malformed".into());
            }
        }
        Ok(())
    }
}

/// Log-sum-exp form of a posynomial in `y = log x`: value, gradient, Hessian.
pub fn log_posynomial(p: &Posynomial, y: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = y.len();
    let zs: Vec<f64> = p
        .terms
        .iter()
        .map(|t| t.c.ln() + t.exps.iter().zip(y.iter()).map(|(a, yi)| a * yi).sum::<f64>())
        .collect();
    let zmax = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ws: Vec<f64> = zs.iter().map(|z| (z - zmax).exp()).collect();
    let sw: f64 = ws.iter().sum();
    let val = zmax + sw.ln();
    let mut g = DVector::zeros(n);
    let mut hm = DMatrix::zeros(n, n);
    for (t, w) in p.terms.iter().zip(&ws) {
        let pk = w / sw;
        let a = DVector::from_vec(t.exps.clone());
        g += &a * pk;
        hm += &a * a.transpose() * pk;
    }
    hm -= &g * g.transpose();
    (val, g, hm)
}

struct LogGp {
    f0: Posynomial,
    fi: Vec<Posynomial>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl LogGp {
    fn constraint_vals(&self, y: &DVector<f64>) -> Vec<f64> {
        self.fi.iter().map(|p| log_posynomial(p, y).0).collect()
    }

    /// Barrier minimization of `t * obj(y) - sum log(-f_i(y))` from a strictly feasible point.
    /// `obj` is `f0` unless `phase1_s` is used, in which case the variable vector carries `s` last.
    fn centering(&self, y: &mut DVector<f64>, t: f64, phase1: bool, max_newton: usize) -> Result<(), ()> {
        let n = y.len();
        let neq = self.a.nrows();
        for _ in 0..max_newton {
            let (val, grad, hess) = self.barrier(y, t, phase1).ok_or(())?;
            let mut kkt = DMatrix::zeros(n + neq, n + neq);
            kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
            // A single dominant term leaves the log-sum-exp Hessian near singular.
            let hmax = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
            for i in 0..n {
                kkt[(i, i)] += 1e-10 * hmax;
            }
            if neq > 0 {
                let aa = self.a_ext(phase1);
                kkt.view_mut((n, 0), (neq, n)).copy_from(&aa);
                kkt.view_mut((0, n), (n, neq)).copy_from(&aa.transpose());
            }
            let mut rhs = DVector::zeros(n + neq);
            rhs.rows_mut(0, n).copy_from(&(-&grad));
            let sol = match kkt.clone().lu().solve(&rhs) {
                Some(s) => s,
                None => {
                    let mut k2 = kkt;
                    for i in 0..n {
                        k2[(i, i)] += 1e-10;
                    }
                    k2.lu().solve(&rhs).ok_or(())?
                }
            };
            let mut dy = sol.rows(0, n).into_owned();
            let dec = -grad.dot(&dy);
            if dec / 2.0 <= 1e-12 {
                return Ok(());
            }
            // Log-space trust region.
            let amax = dy.amax();
            if amax > MAX_LOG_STEP {
                dy *= MAX_LOG_STEP / amax;
            }
            let dec = -grad.dot(&dy);
            let mut step = 1.0;
            loop {
                let cand = &*y + &dy * step;
                if let Some((v2, _, _)) = self.barrier(&cand, t, phase1) {
                    if v2 <= val - 0.25 * step * dec {
                        *y = cand;
                        break;
                    }
                }
                step *= 0.5;
                if step < 1e-14 {
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    fn a_ext(&self, phase1: bool) -> DMatrix<f64> {
        if phase1 {
            let mut aa = DMatrix::zeros(self.a.nrows(), self.a.ncols() + 1);
            aa.view_mut((0, 0), (self.a.nrows(), self.a.ncols())).copy_from(&self.a);
            aa
        } else {
            self.a.clone()
        }
    }

    fn barrier(&self, y: &DVector<f64>, t: f64, phase1: bool) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let n = y.len();
        let (x, s) = if phase1 { (y.rows(0, n - 1).into_owned(), y[n - 1]) } else { (y.clone(), 0.0) };
        let nx = x.len();
        let mut val;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        if phase1 {
            val = t * s;
            grad[n - 1] = t;
        } else {
            let (v, g, h) = log_posynomial(&self.f0, &x);
            val = t * v;
            grad.rows_mut(0, nx).copy_from(&(g * t));
            hess.view_mut((0, 0), (nx, nx)).copy_from(&(h * t));
        }
        for p in &self.fi {
            let (v, g, h) = log_posynomial(p, &x);
            let slack = if phase1 { s - v } else { -v };
            if !(slack > 0.0) {
                return None;
            }
            val -= slack.ln();
            let mut gfull = DVector::zeros(n);
            gfull.rows_mut(0, nx).copy_from(&g);
            if phase1 {
                gfull[n - 1] = -1.0;
            }
            // d(-log(slack)) = grad f / slack where f = v - s.
            grad += &gfull / slack;
            hess += &gfull * gfull.transpose() / (slack * slack);
            let mut hv = hess.view_mut((0, 0), (nx, nx));
            hv += h / slack;
        }
        Some((val, grad, hess))
    }
}

/// Solves a GP through its log-variable convex transform with a barrier method.
pub fn solve_gp(p: &GpProblem, tol: f64) -> SolveReport {
    let n = p.n_vars;
    let mut report = SolveReport {
        status: SolveStatus::MaxIter,
        objective: f64::NAN,
        dual_objective: f64::NAN,
        primal: vec![1.0; n],
        duality_gap: f64::INFINITY,
        primal_infeasibility: f64::INFINITY,
        dual_infeasibility: f64::INFINITY,
        iterations: 0,
        certificate_norm: None,
    };
    if p.validate().is_err() {
        report.status = SolveStatus::Infeasible;
        return report;
    }
    let neq = p.equalities.len();
    let mut a = DMatrix::zeros(neq, n);
    let mut b = DVector::zeros(neq);
    for (i, mono) in p.equalities.iter().enumerate() {
        for j in 0..n {
            a[(i, j)] = mono.exps[j];
        }
        b[i] = -mono.c.ln();
    }
    let lg = LogGp { f0: p.objective.clone(), fi: p.inequalities.clone(), a, b };

    // Start on the equality manifold (least-norm solution).
    let mut y = if neq > 0 {
        let aat = &lg.a * lg.a.transpose();
        match aat.lu().solve(&lg.b) {
            Some(w) => lg.a.transpose() * w,
            None => {
                report.status = SolveStatus::Infeasible;
                return report;
            }
        }
    } else {
        DVector::zeros(n)
    };

    let m = lg.fi.len();
    if m > 0 {
        let vals = lg.constraint_vals(&y);
        let maxv = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if maxv >= -1e-9 {
            // Phase I: minimize s subject to f_i(y) <= s.
            let mut ys = DVector::zeros(n + 1);
            ys.rows_mut(0, n).copy_from(&y);
            ys[n] = maxv + 1.0;
            let mut t = 1.0;
            let mut found = false;
            for _ in 0..60 {
                if lg.centering(&mut ys, t, true, 100).is_err() {
                    break;
                }
                if ys[n] < -1e-6 {
                    found = true;
                    break;
                }
                if (m as f64 + 1.0) / t < 1e-10 {
                    break;
                }
                t *= 10.0;
            }
            if !found {
                report.status = SolveStatus::Infeasible;
                report.certificate_norm = Some(ys[n].max(0.0));
                report.primal = ys.rows(0, n).iter().map(|v| v.exp()).collect();
                return report;
            }
            y = ys.rows(0, n).into_owned();
        }
    }

    let mut t = 1.0;
    let mu = 10.0;
    let mut iters = 0;
    loop {
        iters += 1;
        if lg.centering(&mut y, t, false, 200).is_err() {
            break;
        }
        let (f0, _, _) = log_posynomial(&lg.f0, &y);
        if !f0.is_finite() || f0 < -1e8 || y.amax() > 700.0 {
            report.status = SolveStatus::Unbounded;
            report.iterations = iters;
            report.objective = f0.exp();
            report.primal = y.iter().map(|v| v.exp()).collect();
            return report;
        }
        if m == 0 || (m as f64) / t < tol || iters > 60 {
            break;
        }
        t *= mu;
    }
    let (f0, g0, _) = log_posynomial(&lg.f0, &y);
    // Lagrangian gradient with barrier duals lambda_i = 1 / (-t f_i).
    let mut lag = g0.clone();
    for pi in &lg.fi {
        let (v, g, _) = log_posynomial(pi, &y);
        lag += g / (-t * v);
    }
    if neq > 0 {
        // Remove the component absorbed by equality multipliers.
        let at = lg.a.transpose();
        let ata = lg.a.clone() * &at;
        if let Some(w) = ata.lu().solve(&(&lg.a * &lag)) {
            lag -= at * w;
        }
    }
    let viol = lg.constraint_vals(&y).into_iter().fold(0.0f64, |acc, v| acc.max(v));
    let eq_res = if neq > 0 { (&lg.a * &y - &lg.b).amax() } else { 0.0 };
    report.iterations = iters;
    report.objective = f0.exp();
    report.primal = y.iter().map(|v| v.exp()).collect();
    report.duality_gap = if m > 0 { m as f64 / t } else { 0.0 };
    report.dual_objective = (f0 - report.duality_gap).exp();
    report.primal_infeasibility = viol.max(eq_res);
    report.dual_infeasibility = lag.norm();
    report.status = if report.duality_gap <= tol.max(1e-12) && report.primal_infeasibility <= tol {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIter
    };
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_min_above_identity() {
        let mut p = SdpProblem::new();
        let x = p.add_symmetric(3);
        p.add_objective(&x.trace_coeffs());
        let mut blk = LmiBlock::new("x_minus_i", 3);
        for i in 0..3 {
            for j in i..3 {
                blk.add(x.var(i, j), i, j, 1.0);
            }
            blk.add_constant(i, i, -1.0);
        }
        p.add_block(blk);
        let r = solve_sdp(&p, SDP_TOL);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-7);
        let xv = x.value(&r.primal);
        assert!((xv - DMatrix::identity(3, 3)).norm() < 1e-6);
        assert!(r.objective >= r.dual_objective - 1e-7);
    }

    #[test]
    fn inverse_epigraph_fixed_u() {
        let mut p = SdpProblem::new();
        let (u, w) = tr_inverse_epigraph(&mut p, 2);
        p.add_equality(&[(u.var(0, 0), 1.0)], 2.0);
        p.add_equality(&[(u.var(1, 1), 1.0)], 4.0);
        p.add_equality(&[(u.var(0, 1), 1.0)], 0.0);
        let r = solve_sdp(&p, SDP_TOL);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 0.75).abs() < 1e-7, "{}", r.objective);
        let wv = w.value(&r.primal);
        assert!((wv[(0, 0)] - 0.5).abs() < 1e-6 && (wv[(1, 1)] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn inverse_epigraph_identity() {
        for dim in 1..4 {
            let mut p = SdpProblem::new();
            let (u, _) = tr_inverse_epigraph(&mut p, dim);
            for i in 0..dim {
                for j in i..dim {
                    p.add_equality(&[(u.var(i, j), 1.0)], if i == j { 1.0 } else { 0.0 });
                }
            }
            let r = solve_sdp(&p, SDP_TOL);
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.objective - dim as f64).abs() < 1e-7);
        }
    }

    #[test]
    fn infeasible_lmi_detected() {
        let mut p = SdpProblem::new();
        let x = p.add_symmetric(2);
        let mut blk = LmiBlock::new("x_minus_i", 2);
        for i in 0..2 {
            for j in i..2 {
                blk.add(x.var(i, j), i, j, 1.0);
            }
            blk.add_constant(i, i, -1.0);
        }
        p.add_block(blk);
        let neg: Vec<(usize, f64)> = x.trace_coeffs().into_iter().map(|(i, v)| (i, -v)).collect();
        p.add_linear_geq(&neg, 1.0, "trace_cap");
        let r = solve_sdp(&p, SDP_TOL);
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(r.certificate_norm.unwrap() < 1e-8);
    }

    #[test]
    fn unbounded_detected() {
        let mut p = SdpProblem::new();
        let v = p.add_vars(1);
        p.add_objective(&[(v.start, -1.0)]);
        p.add_linear_geq(&[(v.start, 1.0)], 0.0, "nonneg");
        let r = solve_sdp(&p, SDP_TOL);
        assert_eq!(r.status, SolveStatus::Unbounded);
    }

    #[test]
    fn hermitian_trace_coeffs_and_embedding() {
        let mut p = SdpProblem::new();
        let x = p.add_hermitian(3);
        let y: Vec<f64> = (0..x.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let xv = x.value(&y);
        let c = CMat::from_fn(3, 3, |i, j| Complex64::new((i + 2 * j) as f64, i as f64 - j as f64));
        let c = &c + c.adjoint();
        let direct = (&c * &xv).trace().re;
        let lin: f64 = x.trace_coeffs(&c).iter().map(|(i, v)| v * y[*i]).sum();
        assert!((direct - lin).abs() < 1e-12);
        let mut blk = LmiBlock::new("e", 6);
        x.embed_into(&mut blk, 0, 1.0);
        let mut e = DMatrix::zeros(6, 6);
        for (var, es) in &blk.terms {
            for (r, cc, v) in es {
                e[(*r, *cc)] += v * y[*var];
            }
        }
        assert!((e - hermitian_embedding(&xv)).norm() < 1e-14);
    }

    #[test]
    fn hermitian_psd_projection() {
        // min tr(C X) s.t. X PSD, tr X = 1 gives the smallest eigenvalue of C.
        let c = CMat::from_fn(3, 3, |i, j| Complex64::new(((i * 3 + j) as f64).cos(), (i as f64 - j as f64) * 0.3));
        let c = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
        let mut p = SdpProblem::new();
        let x = p.add_hermitian(3);
        p.add_objective(&x.trace_coeffs(&c));
        p.add_psd_hermitian(&x, "x");
        p.add_equality(&x.trace_coeffs(&CMat::identity(3, 3)), 1.0);
        let r = solve_sdp(&p, SDP_TOL);
        assert_eq!(r.status, SolveStatus::Optimal);
        let lmin = SymmetricEigen::new(c).eigenvalues.min();
        assert!((r.objective - lmin).abs() < 1e-7);
    }

    #[test]
    fn gp_examples() {
        let x = |c: f64, a: f64| Monomial::new(c, vec![a]);
        let p = GpProblem {
            n_vars: 1,
            objective: Posynomial::new(vec![x(1.0, 1.0)]),
            inequalities: vec![Posynomial::new(vec![x(1.0, -1.0)])],
            equalities: vec![],
        };
        let r = solve_gp(&p, GP_TOL);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.primal[0] - 1.0).abs() < 1e-6);
        let p = GpProblem {
            n_vars: 1,
            objective: Posynomial::new(vec![x(1.0, 1.0), x(1.0, -1.0)]),
            inequalities: vec![],
            equalities: vec![],
        };
        let r = solve_gp(&p, GP_TOL);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.primal[0] - 1.0).abs() < 1e-6 && (r.objective - 2.0).abs() < 1e-10);
        assert!(r.dual_infeasibility <= GP_TOL);
    }

    #[test]
    fn gp_infeasible_and_equality() {
        let m = |c: f64, a: Vec<f64>| Monomial::new(c, a);
        // x <= 1 and 2 / x <= 1 cannot both hold.
        let p = GpProblem {
            n_vars: 1,
            objective: Posynomial::new(vec![m(1.0, vec![1.0])]),
            inequalities: vec![Posynomial::new(vec![m(1.0, vec![1.0])]), Posynomial::new(vec![m(2.0, vec![-1.0])])],
            equalities: vec![],
        };
        assert_eq!(solve_gp(&p, GP_TOL).status, SolveStatus::Infeasible);
        // min x + y s.t. x y = 4 -> x = y = 2.
        let p = GpProblem {
            n_vars: 2,
            objective: Posynomial::new(vec![m(1.0, vec![1.0, 0.0]), m(1.0, vec![0.0, 1.0])]),
            inequalities: vec![],
            equalities: vec![m(0.25, vec![1.0, 1.0])],
        };
        let r = solve_gp(&p, GP_TOL);
        assert!((r.primal[0] - 2.0).abs() < 1e-6 && (r.primal[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn condensation_is_tight_lower_bound() {
        let p = Posynomial::new(vec![
            Monomial::new(2.0, vec![3.0]),
            Monomial::new(0.5, vec![1.0]),
            Monomial::new(1.5, vec![0.0]),
        ]);
        let x0 = [2.7];
        let mono = p.condense(&x0);
        assert!((mono.eval(&x0) - p.eval(&x0)).abs() < 1e-12 * p.eval(&x0));
        for k in 1..200 {
            let x = [k as f64 * 0.05];
            assert!(mono.eval(&x) <= p.eval(&x) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn log_transform_matches() {
        let p = Posynomial::new(vec![Monomial::new(2.0, vec![1.0, -0.5]), Monomial::new(0.3, vec![2.0, 1.0])]);
        let x = [1.7, 0.4];
        let y = DVector::from_vec(x.iter().map(|v: &f64| v.ln()).collect());
        let (v, _, _) = log_posynomial(&p, &y);
        assert!((v - p.eval(&x).ln()).abs() < 1e-12);
    }
}
