//! Near-field steering vectors, their derivatives, and the deterministic
//! BS-STARS and STARS-CU channels.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{element_positions, symmetric_indices, ArrayKind, CartesianPosition, PolarPosition, SystemConfig};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

/// Unit-modulus near-field steering vector with the parameters that built it.
#[derive(Debug, Clone)]
pub struct SteeringVector {
    pub entries: CVec,
    pub range: f64,
    pub angle: f64,
    pub interval: f64,
    pub count: usize,
    pub lambda_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Range,
    Angle,
}

/// Quadratic-phase steering vector; entry `m` has phase
/// `-(2 pi / lambda) (-m d cos(theta) + m^2 d^2 / (2 r))`.
pub fn nf_steering(r: f64, theta: f64, count: usize, interval: f64, lambda_c: f64) -> Result<SteeringVector> {
    if !(r > 0.0) {
        return Err(Error::Geometry(format!("steering range must be positive, got {r}")));
    }
    if count < 2 || !count.is_multiple_of(2) {
        return Err(Error::Config(format!("steering count must be even and >= 2, got {count}")));
    }
    let k = 2.0 * PI / lambda_c;
    let cos_t = theta.cos();
    let entries = CVec::from_iterator(
        count + 1,
        symmetric_indices(count).into_iter().map(|m| {
            let md = m * interval;
            let phase = -k * (-md * cos_t + md * md / (2.0 * r));
            Complex64::from_polar(1.0, phase)
        }),
    );
    Ok(SteeringVector { entries, range: r, angle: theta, interval, count, lambda_c })
}

/// Effective range from the ST to the sensor-array center.
pub fn sensor_range(r: f64, cfg: &SystemConfig) -> Result<f64> {
    if !(r > cfg.h_a) {
        return Err(Error::Geometry(format!("range {r} must exceed the sensor offset {}", cfg.h_a)));
    }
    Ok((r * r - cfg.h_a * cfg.h_a).sqrt())
}

pub fn sensor_steering(r: f64, theta: f64, cfg: &SystemConfig) -> Result<SteeringVector> {
    let rt = sensor_range(r, cfg)?;
    nf_steering(rt, theta, cfg.m_sensor, cfg.d_s, cfg.lambda_c)
}

pub fn star_steering(r: f64, theta: f64, cfg: &SystemConfig) -> Result<SteeringVector> {
    nf_steering(r, theta, cfg.m_star, cfg.d_r, cfg.lambda_c)
}

/// Analytic derivative of the steering vector with respect to its own range or angle.
///
/// The angle derivative of the phase is `-(2 pi / lambda) m d sin(theta)`.
/// An infinite range yields the zero vector for the range axis.
pub fn steering_derivative(sv: &SteeringVector, axis: Axis) -> CVec {
    let k = 2.0 * PI / sv.lambda_c;
    let idx = symmetric_indices(sv.count);
    let factor = |m: f64| -> f64 {
        let md = m * sv.interval;
        match axis {
            Axis::Angle => -k * md * sv.angle.sin(),
            Axis::Range => {
                if sv.range.is_infinite() {
                    0.0
                } else {
                    k * md * md / (2.0 * sv.range * sv.range)
                }
            }
        }
    };
    CVec::from_iterator(
        sv.entries.len(),
        sv.entries.iter().zip(idx).map(|(a, m)| Complex64::new(0.0, factor(m)) * a),
    )
}

/// Deterministic channels of one scenario.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// `(M + 1) x (N + 1)` BS-STARS line-of-sight channel.
    pub h_br: CMat,
    /// `M + 1` STARS-CU channel.
    pub g_c: CVec,
}

impl ChannelSet {
    pub fn new(cfg: &SystemConfig, cu: PolarPosition) -> Result<Self> {
        Ok(ChannelSet { h_br: bs_stars_channel(cfg), g_c: cu_channel(cu, cfg)? })
    }
}

/// Free-space gain `lambda / (4 pi r)` with phase relative to the center pair.
pub fn bs_stars_channel(cfg: &SystemConfig) -> CMat {
    let star = element_positions(cfg, ArrayKind::Star);
    let bs = element_positions(cfg, ArrayKind::Bs);
    let k = if cfg.br_phase_literal { 1.0 } else { 2.0 * PI / cfg.lambda_c };
    CMat::from_fn(star.len(), bs.len(), |m, i| {
        let d = star[m].distance(bs[i]);
        Complex64::from_polar(cfg.lambda_c / (4.0 * PI * d), -k * (d - cfg.r_br))
    })
}

/// Cartesian position of the CU, which sits in the half-space behind the surface.
pub fn cu_cartesian(pos: PolarPosition) -> CartesianPosition {
    CartesianPosition::new(-pos.r * pos.theta.cos(), -pos.r * pos.theta.sin())
}

/// Per-element gain from the exact element range times the steering phase evaluated at
/// the mirrored angle `pi - theta`, which is the CU direction seen from the array.
pub fn cu_channel(pos: PolarPosition, cfg: &SystemConfig) -> Result<CVec> {
    let sv = star_steering(pos.r, PI - pos.theta, cfg)?;
    let p = cu_cartesian(pos);
    let star = element_positions(cfg, ArrayKind::Star);
    Ok(CVec::from_iterator(
        star.len(),
        star.iter().zip(sv.entries.iter()).map(|(e, a)| a * (cfg.lambda_c / (4.0 * PI * p.distance(*e)))),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lam() -> f64 {
        SystemConfig::desk().lambda_c
    }

    #[test]
    fn center_entry_is_one() {
        let sv = nf_steering(3.0, 1.0, 8, lam() / 2.0, lam()).unwrap();
        assert_eq!(sv.entries[4], Complex64::new(1.0, 0.0));
        assert!(sv.entries.iter().all(|e| (e.norm() - 1.0).abs() < 1e-14));
        assert!(nf_steering(0.0, 1.0, 8, 0.1, 1.0).is_err());
        assert!(nf_steering(1.0, 1.0, 7, 0.1, 1.0).is_err());
    }

    #[test]
    fn hand_evaluated_phase() {
        let l = lam();
        let sv = nf_steering(10.0 * l, PI / 3.0, 4, l / 2.0, l).unwrap();
        // m = 2: path term -2 (l/2) cos 60 + 4 (l/2)^2 / (20 l) = -0.5 l + 0.05 l.
        let expected = Complex64::from_polar(1.0, 0.9 * PI);
        assert!((sv.entries[4] - expected).norm() < 1e-12);
    }

    #[test]
    fn far_field_limit() {
        let l = lam();
        let d = l / 2.0;
        let th = 1.2;
        let sv = nf_steering(1e9 * l, th, 8, d, l).unwrap();
        for (e, m) in sv.entries.iter().zip(symmetric_indices(8)) {
            let ff = 2.0 * PI * m * d * th.cos() / l;
            let diff = (e.arg() - ff + PI).rem_euclid(2.0 * PI) - PI;
            assert!(diff.abs() < 1e-6);
        }
    }

    #[test]
    fn sensor_steering_uses_effective_range() {
        let mut cfg = SystemConfig::desk();
        cfg.h_a = 3.0;
        let sv = sensor_steering(5.0, 1.0, &cfg).unwrap();
        assert!((sv.range - 4.0).abs() < 1e-14);
        assert!(sensor_steering(2.0, 1.0, &cfg).is_err());
    }

    #[test]
    fn derivative_zero_cases() {
        let sv = nf_steering(3.0, 0.0, 8, lam() / 2.0, lam()).unwrap();
        let d = steering_derivative(&sv, Axis::Angle);
        assert!(d.iter().all(|e| e.norm() == 0.0));
        let sv = nf_steering(3.0, 1.0, 8, lam() / 2.0, lam()).unwrap();
        assert_eq!(steering_derivative(&sv, Axis::Angle)[4].norm(), 0.0);
        let mut inf = sv.clone();
        inf.range = f64::INFINITY;
        assert!(steering_derivative(&inf, Axis::Range).iter().all(|e| e.norm() == 0.0));
    }

    #[test]
    fn br_channel_reference_pair() {
        let cfg = SystemConfig::desk();
        let h = bs_stars_channel(&cfg);
        let c = h[(cfg.m_star / 2, cfg.n_bs / 2)];
        assert!((c.norm() - cfg.lambda_c / (4.0 * PI * cfg.r_br)).abs() < 1e-18);
        assert!(c.arg().abs() < 1e-12);
        let bound_r = cfg.r_br;
        assert!(h.iter().all(|e| e.norm() <= cfg.lambda_c / (4.0 * PI * bound_r) * (1.0 + 1e-12)));
        let (rows, cols) = h.shape();
        for m in 0..rows {
            for i in 0..cols {
                assert!((h[(m, i)].norm() - h[(rows - 1 - m, cols - 1 - i)].norm()).abs() < 1e-18);
            }
        }
    }

    #[test]
    fn cu_channel_gains() {
        let cfg = SystemConfig::desk();
        let pos = PolarPosition::new(8.0, 1.1);
        let g = cu_channel(pos, &cfg).unwrap();
        let p = cu_cartesian(pos);
        for (e, s) in g.iter().zip(element_positions(&cfg, ArrayKind::Star)) {
            assert!((e.norm() - cfg.lambda_c / (4.0 * PI * p.distance(s))).abs() < 1e-18);
        }
        assert!(g[cfg.m_star / 2].arg().abs() < 1e-15);
        let far = cu_channel(PolarPosition::new(1e6, 1.1), &cfg).unwrap();
        let g0 = far[0].norm();
        assert!(far.iter().all(|e| (e.norm() - g0).abs() / g0 < 1e-3));
    }
}
