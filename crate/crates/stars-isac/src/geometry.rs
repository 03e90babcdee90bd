//! Coordinates, element placement and the polar/Cartesian Jacobian.
//!
//! Every array uses the symmetric index set `{-M/2, ..., M/2}`. The count
//! parameter `M` must be even and the array holds `M + 1` elements.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light [m/s].
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Array geometry and physical constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// BS antenna count parameter `N` (elements `N + 1`).
    pub n_bs: usize,
    /// STAR element count parameter `M` (elements `M + 1`).
    pub m_star: usize,
    /// Sensor count parameter `M_r` (elements `M_r + 1`).
    pub m_sensor: usize,
    pub d_b: f64,
    pub d_r: f64,
    pub d_s: f64,
    pub h_a: f64,
    pub r_br: f64,
    pub lambda_c: f64,
    /// Use the BS-STARS phase exactly as `-(r - r_br)` without the wavenumber.
    #[serde(default)]
    pub br_phase_literal: bool,
}

impl SystemConfig {
    /// Desk-scale defaults at 28 GHz with half-wavelength spacing everywhere.
    pub fn desk() -> Self {
        let lambda_c = SPEED_OF_LIGHT / 28e9;
        SystemConfig {
            n_bs: 16,
            m_star: 16,
            m_sensor: 16,
            d_b: lambda_c / 2.0,
            d_r: lambda_c / 2.0,
            d_s: lambda_c / 2.0,
            h_a: 0.01,
            r_br: 5.0,
            lambda_c,
            br_phase_literal: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_bs", self.n_bs), ("m_star", self.m_star), ("m_sensor", self.m_sensor)] {
            if n < 2 || n % 2 != 0 {
                return Err(Error::Config(format!("{name} must be even and >= 2, got {n}")));
            }
        }
        for (name, v) in [
            ("d_b", self.d_b),
            ("d_r", self.d_r),
            ("d_s", self.d_s),
            ("h_a", self.h_a),
            ("r_br", self.r_br),
            ("lambda_c", self.lambda_c),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        let sensor = self.m_sensor as f64 * self.d_s;
        let star = self.m_star as f64 * self.d_r;
        if sensor > star * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "sensor aperture {sensor:.6e} m exceeds STAR aperture {star:.6e} m"
            )));
        }
        Ok(())
    }

    /// Copy with a different sensor deployment, validated.
    pub fn with_sensors(&self, m_sensor: usize, d_s: f64) -> Result<Self> {
        let mut c = self.clone();
        c.m_sensor = m_sensor;
        c.d_s = d_s;
        c.validate()?;
        Ok(c)
    }

    pub fn bs_elements(&self) -> usize {
        self.n_bs + 1
    }

    pub fn star_elements(&self) -> usize {
        self.m_star + 1
    }

    pub fn sensor_elements(&self) -> usize {
        self.m_sensor + 1
    }
}

/// Symmetric index set `-count/2 ..= count/2` as floats.
pub fn symmetric_indices(count: usize) -> Vec<f64> {
    let half = (count / 2) as i64;
    (-half..=half).map(|m| m as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayKind {
    Bs,
    Star,
    Sensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPosition {
    pub r: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianPosition {
    pub x: f64,
    pub y: f64,
}

impl PolarPosition {
    pub fn new(r: f64, theta: f64) -> Self {
        PolarPosition { r, theta }
    }

    pub fn to_cartesian(self) -> CartesianPosition {
        CartesianPosition { x: self.r * self.theta.cos(), y: self.r * self.theta.sin() }
    }
}

impl CartesianPosition {
    pub fn new(x: f64, y: f64) -> Self {
        CartesianPosition { x, y }
    }

    pub fn distance(self, other: CartesianPosition) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Element coordinates ordered by index from `-M/2` to `M/2`.
pub fn element_positions(cfg: &SystemConfig, kind: ArrayKind) -> Vec<CartesianPosition> {
    let (count, d, y) = match kind {
        ArrayKind::Bs => (cfg.n_bs, cfg.d_b, -cfg.r_br),
        ArrayKind::Star => (cfg.m_star, cfg.d_r, 0.0),
        ArrayKind::Sensor => (cfg.m_sensor, cfg.d_s, -cfg.h_a),
    };
    symmetric_indices(count).into_iter().map(|m| CartesianPosition::new(m * d, y)).collect()
}

pub fn polar_from_cartesian(p: CartesianPosition) -> Result<PolarPosition> {
    let r = p.x.hypot(p.y);
    if r == 0.0 || !r.is_finite() {
        return Err(Error::Geometry(format!("cannot convert ({}, {}) to polar form", p.x, p.y)));
    }
    Ok(PolarPosition { r, theta: p.y.atan2(p.x) })
}

pub fn cartesian_from_polar(p: PolarPosition) -> CartesianPosition {
    p.to_cartesian()
}

/// `T = d(r, theta) / d(p_x, p_y)`; rows are `(r, theta)`, columns `(p_x, p_y)`.
pub fn jacobian_t(pos: PolarPosition) -> Result<Matrix2<f64>> {
    if !(pos.r > 0.0) || !pos.r.is_finite() {
        return Err(Error::Geometry(format!("Jacobian is singular at r = {}", pos.r)));
    }
    let (s, c) = pos.theta.sin_cos();
    Ok(Matrix2::new(c, s, -s / pos.r, c / pos.r))
}

/// Row swap of `jacobian_t` so that rows follow the FIM order `(theta, r)`.
pub fn jacobian_t_theta_first(pos: PolarPosition) -> Result<Matrix2<f64>> {
    let t = jacobian_t(pos)?;
    Ok(Matrix2::new(t[(1, 0)], t[(1, 1)], t[(0, 0)], t[(0, 1)]))
}

/// Scaled inverse Gram matrix of the Jacobian,
/// `((p_x + p_y)^2 / (p_x^2 p_y^2)) (T T^T)^{-1}`, with `T` oriented as returned
/// by [`jacobian_t`] (rows are polar parameters).
pub fn t_tilde(pos: CartesianPosition, t: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let prod = pos.x * pos.y;
    let sum = pos.x + pos.y;
    if prod == 0.0 || sum == 0.0 {
        return Err(Error::DegeneratePosition { x: pos.x, y: pos.y });
    }
    let gram = t * t.transpose();
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Geometry("Jacobian is not invertible".into()))?;
    let k = sum * sum / (prod * prod);
    let out = inv * k;
    Ok((out + out.transpose()) * 0.5)
}

/// Diagonal of `(T T^T)^{-1}` in FIM order `(theta, r)`.
///
/// For a diagonal polar FIM the SPEB equals `w[0] / J_tt + w[1] / J_rr`.
pub fn speb_weights(pos: PolarPosition) -> [f64; 2] {
    [pos.r * pos.r, 1.0]
}
