//! Echo synthesis and grid-based ML / MUSIC position estimators.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::beamform::{BeamSolution, StarsProfile};
use crate::channel::{bs_stars_channel, sensor_steering, star_steering, CMat, CVec};
use crate::error::{Error, Result};
use crate::fim::Scenario;
use crate::geometry::{cartesian_from_polar, PolarPosition, SystemConfig};
use crate::sample::rng;

/// Sensor-side observation block `(M_r + 1) x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoBlock {
    pub y_s: CMat,
    pub seed: u64,
    pub truth: PolarPosition,
    /// Realized transmit snapshots `X`.
    pub xbar: CMat,
    /// Reflection coefficient used to synthesize the block.
    pub alpha: Complex64,
}

fn circular<R: rand::Rng>(r: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(r);
    let im: f64 = StandardNormal.sample(r);
    Complex64::new(re * s, im * s)
}

/// Hermitian square root of a PSD matrix.
fn psd_sqrt(m: &CMat) -> CMat {
    let eig = SymmetricEigen::new((m + m.adjoint()) * Complex64::new(0.5, 0.0));
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for (i, l) in eig.eigenvalues.iter().enumerate() {
        if *l > 0.0 {
            let u = eig.eigenvectors.column(i);
            out += u * u.adjoint() * Complex64::new(l.sqrt(), 0.0);
        }
    }
    out
}

/// Snapshots `X = R_x^{1/2} Z` with unit-power independent symbols in `Z`.
pub fn draw_snapshots(rx: &CMat, l: usize, seed: u64) -> CMat {
    let mut r = rng(seed);
    let z = CMat::from_fn(rx.nrows(), l, |_, _| circular(&mut r, 1.0));
    psd_sqrt(rx) * z
}

/// `Theta_r H_BR X`, the signal impinging on the surface.
fn surface_signal(profile: &StarsProfile, xbar: &CMat, cfg: &SystemConfig) -> CMat {
    let mut th = bs_stars_channel(cfg);
    for (m, mut row) in th.row_iter_mut().enumerate() {
        row *= profile.q_r[m];
    }
    th * xbar
}

/// `Y_s = alpha_s alpha_r alpha_t^H Theta_r H_BR X + N_s`.
pub fn synthesize_echo(sol: &BeamSolution, profile: &StarsProfile, st: PolarPosition, scn: &Scenario, cfg: &SystemConfig, seed: u64) -> Result<EchoBlock> {
    let xbar = draw_snapshots(&sol.rx(), scn.l_slots, seed);
    let ar = sensor_steering(st.r, st.theta, cfg)?;
    let at = star_steering(st.r, st.theta, cfg)?;
    let b = at.entries.adjoint() * surface_signal(profile, &xbar, cfg);
    let mut y = &ar.entries * b * scn.alpha_s;
    let mut r = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    for v in y.iter_mut() {
        *v += circular(&mut r, scn.sigma2);
    }
    Ok(EchoBlock { y_s: y, seed, truth: st, xbar, alpha: scn.alpha_s })
}

/// Search grid over `(r, theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub r_lo: f64,
    pub r_hi: f64,
    pub n_r: usize,
    pub th_lo: f64,
    pub th_hi: f64,
    pub n_th: usize,
    /// One guarded quadratic step around the grid argmax.
    pub refine: bool,
}

impl GridSpec {
    /// Grid of the given half-widths centred on a position.
    pub fn around(c: PolarPosition, dr: f64, dth: f64, n_r: usize, n_th: usize) -> Self {
        GridSpec { r_lo: c.r - dr, r_hi: c.r + dr, n_r, th_lo: c.theta - dth, th_hi: c.theta + dth, n_th, refine: true }
    }

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n <= 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn r_axis(&self) -> Vec<f64> {
        Self::axis(self.r_lo, self.r_hi, self.n_r)
    }

    pub fn th_axis(&self) -> Vec<f64> {
        Self::axis(self.th_lo, self.th_hi, self.n_th)
    }

    fn validate(&self) -> Result<()> {
        if self.n_r == 0 || self.n_th == 0 || !(self.r_lo > 0.0) || self.r_hi < self.r_lo || self.th_hi < self.th_lo {
            return Err(Error::Config(format!("invalid search grid {self:?}")));
        }
        Ok(())
    }
}

/// Grid maximization of `score` followed by an optional parabolic step per axis. The refined
/// point replaces the grid point only when its score is higher.
fn grid_search<F: Fn(f64, f64) -> Result<f64>>(grid: &GridSpec, score: F) -> Result<PolarPosition> {
    grid.validate()?;
    let rs = grid.r_axis();
    let ths = grid.th_axis();
    let mut vals = vec![vec![f64::NEG_INFINITY; ths.len()]; rs.len()];
    let (mut bi, mut bj, mut best) = (0, 0, f64::NEG_INFINITY);
    for (i, &r) in rs.iter().enumerate() {
        for (j, &th) in ths.iter().enumerate() {
            let v = score(r, th)?;
            vals[i][j] = v;
            if v > best {
                best = v;
                bi = i;
                bj = j;
            }
        }
    }
    let mut out = PolarPosition::new(rs[bi], ths[bj]);
    if grid.refine {
        let vertex = |xs: &[f64], f: &dyn Fn(usize) -> f64, k: usize| -> f64 {
            if k == 0 || k + 1 >= xs.len() {
                return xs[k];
            }
            let (fm, f0, fp) = (f(k - 1), f(k), f(k + 1));
            let den = fm - 2.0 * f0 + fp;
            if !(den < 0.0) {
                return xs[k];
            }
            let step = xs[k + 1] - xs[k];
            let off = (0.5 * (fm - fp) / den).clamp(-1.0, 1.0);
            xs[k] + off * step
        };
        let r_new = vertex(&rs, &|i| vals[i][bj], bi);
        let th_new = vertex(&ths, &|j| vals[bi][j], bj);
        if let Ok(v) = score(r_new, th_new) {
            if v > best {
                out = PolarPosition::new(r_new, th_new);
            }
        }
    }
    Ok(out)
}

/// `(alpha_r, b)` with `b = alpha_t^H Theta_r H X`, so the noiseless echo is `alpha alpha_r b`.
fn model_factors(surf: &CMat, r: f64, th: f64, cfg: &SystemConfig) -> Result<(CVec, nalgebra::RowDVector<Complex64>)> {
    let ar = sensor_steering(r, th, cfg)?.entries;
    let at = star_steering(r, th, cfg)?.entries;
    Ok((ar, at.adjoint() * surf))
}

/// Known-gain log-likelihood up to constants: `2 Re(alpha^* alpha_r^H Y b^H) - |alpha|^2 ||alpha_r||^2 ||b||^2`.
fn ml_score(y: &CMat, surf: &CMat, alpha: Complex64, r: f64, th: f64, cfg: &SystemConfig) -> Result<f64> {
    let (ar, b) = model_factors(surf, r, th, cfg)?;
    let proj = (ar.adjoint() * y * b.adjoint())[(0, 0)];
    Ok(2.0 * (alpha.conj() * proj).re - alpha.norm_sqr() * ar.norm_squared() * b.norm_squared())
}

/// Concentrated score `|alpha_r^H Y b^H|^2 / (||alpha_r||^2 ||b||^2)`; maximizing it minimizes
/// `||Y - alpha m(r, theta)||^2` over an unknown `alpha`.
fn concentrated_score(y: &CMat, surf: &CMat, r: f64, th: f64, cfg: &SystemConfig) -> Result<f64> {
    let (ar, b) = model_factors(surf, r, th, cfg)?;
    let nb = b.norm_squared() * ar.norm_squared();
    if nb <= 0.0 {
        return Ok(0.0);
    }
    let proj = (ar.adjoint() * y * b.adjoint())[(0, 0)];
    Ok(proj.norm_sqr() / nb)
}

/// Residual `||Y - alpha m(r, theta)||^2` at the block's reflection coefficient.
pub fn ml_residual(block: &EchoBlock, p: PolarPosition, profile: &StarsProfile, cfg: &SystemConfig) -> Result<f64> {
    let surf = surface_signal(profile, &block.xbar, cfg);
    Ok(block.y_s.norm_squared() - ml_score(&block.y_s, &surf, block.alpha, p.r, p.theta, cfg)?)
}

/// Joint `(r, theta)` ML over the grid with the reflection coefficient known, the model the
/// position bound assumes.
pub fn ml_estimate(block: &EchoBlock, grid: &GridSpec, profile: &StarsProfile, cfg: &SystemConfig) -> Result<PolarPosition> {
    let surf = surface_signal(profile, &block.xbar, cfg);
    grid_search(grid, |r, th| ml_score(&block.y_s, &surf, block.alpha, r, th, cfg))
}

/// ML with the reflection coefficient concentrated out. With a rank-one covariance the transmit
/// waveform no longer depends on the position, leaving only the sensor-side structure.
pub fn ml_estimate_unknown_gain(block: &EchoBlock, grid: &GridSpec, profile: &StarsProfile, cfg: &SystemConfig) -> Result<PolarPosition> {
    let surf = surface_signal(profile, &block.xbar, cfg);
    grid_search(grid, |r, th| concentrated_score(&block.y_s, &surf, r, th, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MusicOutput {
    pub estimate: PolarPosition,
    /// Numerical rank of the sample covariance.
    pub rank: usize,
    pub noise_dim: usize,
}

/// Single-target MUSIC on the sensor-side sample covariance.
pub fn music_estimate(block: &EchoBlock, grid: &GridSpec, cfg: &SystemConfig) -> Result<MusicOutput> {
    let l = block.y_s.ncols();
    if l < 2 {
        return Err(Error::Config("MUSIC needs at least two snapshots".into()));
    }
    let n = block.y_s.nrows();
    let cov = &block.y_s * block.y_s.adjoint() / Complex64::new(l as f64, 0.0);
    let eig = SymmetricEigen::new((&cov + cov.adjoint()) * Complex64::new(0.5, 0.0));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > 1e-12 * top).count();
    // Noise subspace: everything but the strongest direction. A rank-deficient covariance
    // leaves some of these directions at numerical zero; they still span the complement.
    let en = CMat::from_fn(n, n - 1, |i, k| eig.eigenvectors[(i, order[k + 1])]);
    let score = |r: f64, th: f64| -> Result<f64> {
        let a: CVec = sensor_steering(r, th, cfg)?.entries;
        let p = (en.adjoint() * &a).norm_squared() / a.norm_squared();
        Ok(1.0 / p.max(1e-300))
    };
    let estimate = grid_search(grid, score)?;
    Ok(MusicOutput { estimate, rank, noise_dim: n - 1 })
}

/// `sqrt(mean ||eta_hat - eta||^2)` in Cartesian coordinates.
pub fn rmse(trials: &[(PolarPosition, PolarPosition)]) -> Result<f64> {
    if trials.is_empty() {
        return Err(Error::Config("rmse needs at least one trial".into()));
    }
    let s: f64 = trials
        .iter()
        .map(|(e, t)| {
            let a = cartesian_from_polar(*e);
            let b = cartesian_from_polar(*t);
            (a.x - b.x).powi(2) + (a.y - b.y).powi(2)
        })
        .sum();
    Ok((s / trials.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fim::echo_mean;
    use crate::sample::*;

    fn instance(seed: u64, sigma2: f64) -> (SystemConfig, Scenario, BeamSolution, StarsProfile) {
        let (cfg, mut scn, rx, prof) = small_instance(seed);
        scn.sigma2 = sigma2;
        let sol = BeamSolution { r_s0: rx, ..BeamSolution::isotropic(cfg.bs_elements(), 0.0) };
        (cfg, scn, sol, prof)
    }

    #[test]
    fn zero_signal_and_noise_gives_zero_block() {
        let (cfg, mut scn, sol, prof) = instance(1, 1e-300);
        scn.alpha_s = Complex64::new(0.0, 0.0);
        scn.sigma2 = 0.0;
        let b = synthesize_echo(&sol, &prof, scn.st, &scn, &cfg, 3).unwrap();
        assert_eq!(b.y_s.norm(), 0.0);
    }

    #[test]
    fn noise_variance_matches() {
        let (cfg, mut scn, sol, prof) = instance(2, 2.5);
        scn.alpha_s = Complex64::new(0.0, 0.0);
        scn.l_slots = 1200;
        let b = synthesize_echo(&sol, &prof, scn.st, &scn, &cfg, 4).unwrap();
        assert!(b.y_s.len() >= 10_000);
        let v = b.y_s.norm_squared() / b.y_s.len() as f64;
        assert!((v / 2.5 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn noiseless_block_equals_analytic_mean() {
        let (cfg, mut scn, sol, prof) = instance(3, 0.0);
        scn.sigma2 = 0.0;
        let b = synthesize_echo(&sol, &prof, scn.st, &scn, &cfg, 5).unwrap();
        let m = echo_mean(scn.st, &b.xbar, &prof, &scn, &cfg).unwrap();
        assert!((&b.y_s - &m).norm() <= 1e-10 * m.norm());
    }

    #[test]
    fn sample_covariance_converges() {
        let mut r = rng(6);
        let rx = random_psd(5, &mut r);
        let err = |l: usize| {
            let x = draw_snapshots(&rx, l, 7);
            let s = &x * x.adjoint() / Complex64::new(l as f64, 0.0);
            (s - &rx).norm() / rx.norm()
        };
        let (e1, e2) = (err(400), err(6400));
        // Sixteen times the snapshots: the error shrinks by about four.
        assert!(e2 < e1 / 2.5 && e2 > e1 / 8.0, "{e1} {e2}");
    }

    fn on_grid(truth: PolarPosition) -> GridSpec {
        GridSpec { refine: true, ..GridSpec::around(truth, 0.5, 0.05, 11, 11) }
    }

    #[test]
    fn noiseless_recovery_on_grid() {
        for seed in 0..4 {
            let (cfg, mut scn, sol, prof) = instance(seed, 0.0);
            scn.sigma2 = 0.0;
            let b = synthesize_echo(&sol, &prof, scn.st, &scn, &cfg, 9).unwrap();
            let g = on_grid(scn.st);
            let e = ml_estimate(&b, &g, &prof, &cfg).unwrap();
            assert!((e.r - scn.st.r).abs() < 1e-9 && (e.theta - scn.st.theta).abs() < 1e-9, "{e:?} {:?}", scn.st);
            let m = music_estimate(&b, &g, &cfg).unwrap();
            assert!((m.estimate.r - scn.st.r).abs() < 1e-9 && (m.estimate.theta - scn.st.theta).abs() < 1e-9);
            assert_eq!(m.rank, 1);
        }
    }

    fn brute_force(b: &EchoBlock, g: &GridSpec, scn: &Scenario, prof: &StarsProfile, cfg: &SystemConfig, free_gain: bool) -> PolarPosition {
        let (mut best, mut arg) = (f64::INFINITY, scn.st);
        for r in g.r_axis() {
            for th in g.th_axis() {
                let p = PolarPosition::new(r, th);
                let m = echo_mean(p, &b.xbar, prof, scn, cfg).unwrap();
                // Unknown gain: least-squares fit of a complex scale on the mean.
                let k = if free_gain { m.dotc(&b.y_s) / Complex64::new(m.norm_squared(), 0.0) } else { Complex64::new(1.0, 0.0) };
                let v = (&b.y_s - m * k).norm_squared();
                if v < best {
                    best = v;
                    arg = p;
                }
            }
        }
        arg
    }

    #[test]
    fn scores_agree_with_full_likelihood() {
        let (cfg, mut scn, sol, prof) = instance(4, 1e-9);
        scn.sigma2 = scn.alpha_s.norm_sqr() * 1e-3;
        let b = synthesize_echo(&sol, &prof, scn.st, &scn, &cfg, 10).unwrap();
        let g = GridSpec { refine: false, ..on_grid(scn.st) };
        assert_eq!(ml_estimate(&b, &g, &prof, &cfg).unwrap(), brute_force(&b, &g, &scn, &prof, &cfg, false));
        assert_eq!(ml_estimate_unknown_gain(&b, &g, &prof, &cfg).unwrap(), brute_force(&b, &g, &scn, &prof, &cfg, true));
    }

    #[test]
    fn coarser_grid_never_beats_finer() {
        for seed in 0..5 {
            let (cfg, mut scn, sol, prof) = instance(seed, 0.0);
            scn.sigma2 = 0.0;
            let b = synthesize_echo(&sol, &prof, scn.st, &scn, &cfg, 11).unwrap();
            // Offset centre so the truth is off-grid; nested grids of 9 and 17 points.
            let c = PolarPosition::new(scn.st.r + 0.013, scn.st.theta - 0.0021);
            let coarse = GridSpec { refine: false, ..GridSpec::around(c, 0.4, 0.04, 9, 9) };
            let fine = GridSpec { n_r: 17, n_th: 17, ..coarse };
            let rc = ml_residual(&b, ml_estimate(&b, &coarse, &prof, &cfg).unwrap(), &prof, &cfg).unwrap();
            let rf = ml_residual(&b, ml_estimate(&b, &fine, &prof, &cfg).unwrap(), &prof, &cfg).unwrap();
            assert!(rc >= rf - 1e-12 * b.y_s.norm_squared());
        }
    }

    #[test]
    fn music_is_phase_invariant() {
        let (cfg, scn, sol, prof) = instance(5, 1e-9);
        let mut b = synthesize_echo(&sol, &prof, scn.st, &scn, &cfg, 12).unwrap();
        let g = on_grid(scn.st);
        let a = music_estimate(&b, &g, &cfg).unwrap();
        b.y_s *= Complex64::from_polar(1.0, 0.7);
        assert_eq!(music_estimate(&b, &g, &cfg).unwrap().estimate, a.estimate);
    }

    #[test]
    fn rmse_examples() {
        let t = PolarPosition::new(5.0, 1.0);
        assert_eq!(rmse(&[(t, t), (t, t)]).unwrap(), 0.0);
        let c = cartesian_from_polar(t);
        let off = crate::geometry::polar_from_cartesian(crate::geometry::CartesianPosition::new(c.x + 0.3, c.y + 0.4)).unwrap();
        assert!((rmse(&[(off, t)]).unwrap() - 0.5).abs() < 1e-12);
        let u = PolarPosition::new(6.0, 0.9);
        let a = rmse(&[(off, t), (t, u)]).unwrap();
        let b = rmse(&[(t, u), (off, t)]).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(rmse(&[]).is_err());
    }
}
