//! Seeded scenario and instance generators shared by tests and the harness.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::beamform::StarsProfile;
use crate::channel::{CMat, CVec};
use crate::fim::{round_trip_alpha, Scenario};
use crate::geometry::{PolarPosition, SystemConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative difference with a floor on the denominator.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Circular complex Gaussian sample with unit variance.
pub fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cn_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| cn(rng))
}

/// Random full-rank PSD matrix normalized to unit trace.
pub fn random_psd<R: Rng>(n: usize, rng: &mut R) -> CMat {
    let x = cn_matrix(n, n + 2, rng);
    let p = &x * x.adjoint();
    let tr = p.trace().re;
    p / Complex64::new(tr, 0.0)
}

/// Energy-split profile with random amplitudes and phases.
pub fn random_profile<R: Rng>(elements: usize, rng: &mut R) -> StarsProfile {
    let mut q_r = CVec::zeros(elements);
    let mut q_t = CVec::zeros(elements);
    for m in 0..elements {
        let split: f64 = rng.random_range(0.2..0.8);
        q_r[m] = Complex64::from_polar(split.sqrt(), rng.random_range(-PI..PI));
        q_t[m] = Complex64::from_polar((1.0 - split).sqrt(), rng.random_range(-PI..PI));
    }
    StarsProfile::from_vectors(q_r, q_t)
}

/// Random target position in the sensing sector, avoiding the broadside and
/// anti-diagonal directions where the Cartesian transform degenerates.
pub fn random_target<R: Rng>(r_lo: f64, r_hi: f64, rng: &mut R) -> PolarPosition {
    loop {
        let th: f64 = rng.random_range(PI / 4.0..3.0 * PI / 4.0);
        if (th - PI / 2.0).abs() > 0.02 && (th - 3.0 * PI / 4.0).abs() > 0.02 {
            return PolarPosition::new(rng.random_range(r_lo..r_hi), th);
        }
    }
}

/// Scenario with a unit-RCS round-trip reflection and the given noise power.
pub fn scenario(cfg: &SystemConfig, st: PolarPosition, cu: PolarPosition, sigma2: f64) -> Scenario {
    Scenario {
        st,
        cu,
        alpha_s: round_trip_alpha(st.r, cfg.lambda_c, 1.0),
        sigma2,
        l_slots: 32,
        p_max: 1.0,
        r_min: 1.0,
        omega0: 0.5,
        eps0: 1e-5,
        m0: cfg.m_star as f64,
    }
}

/// `N = M = M_r = 8` configuration with half-wavelength spacing.
pub fn small_cfg() -> SystemConfig {
    let mut cfg = SystemConfig::desk();
    cfg.n_bs = 8;
    cfg.m_star = 8;
    cfg.m_sensor = 8;
    cfg
}

/// Random small instance: configuration, scenario, transmit covariance and profile.
pub fn small_instance(seed: u64) -> (SystemConfig, Scenario, CMat, StarsProfile) {
    let mut r = rng(seed);
    let cfg = small_cfg();
    let st = random_target(3.0, 12.0, &mut r);
    let cu = random_target(3.0, 12.0, &mut r);
    let mut scn = scenario(&cfg, st, cu, 1e-12);
    scn.l_slots = 16;
    let rx = random_psd(cfg.bs_elements(), &mut r);
    let prof = random_profile(cfg.star_elements(), &mut r);
    (cfg, scn, rx, prof)
}

/// Random `n x l` snapshot block.
pub fn random_snapshots(n: usize, l: usize, seed: u64) -> CMat {
    cn_matrix(n, l, &mut rng(seed))
}
