//! Differentiable soft-step decoder from normalized layer parameters to a
//! log10 conductivity-depth profile.

use serde::{Deserialize, Serialize};

use crate::synth_data::ParamRanges;
use crate::{Error, Result};

/// Default transition half-width (m).
pub const DEFAULT_TAU: f64 = 2.0;
const LN10: f64 = std::f64::consts::LN_10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthGrid {
    pub n_z: usize,
    pub z_max: f64,
}

impl Default for DepthGrid {
    fn default() -> Self {
        Self { n_z: 64, z_max: 250.0 }
    }
}

impl DepthGrid {
    pub fn new(n_z: usize, z_max: f64) -> Result<Self> {
        if n_z < 2 || !(z_max > 0.0 && z_max.is_finite()) {
            return Err(Error::InvalidParameter("depth grid needs n_z >= 2 and z_max > 0".into()));
        }
        Ok(Self { n_z, z_max })
    }

    pub fn spacing(&self) -> f64 {
        self.z_max / (self.n_z - 1) as f64
    }

    pub fn depths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_z).map(move |i| i as f64 * self.spacing())
    }
}

/// `log10 σ(z)` at each depth node.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductivityProfile {
    pub log10_sigma: Vec<f64>,
}

/// Logistic function evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Layer parameters in physical units recovered from normalized values.
struct Decoded {
    sigma: Vec<f64>,
    dsf: f64,
    h: Option<f64>,
    /// d(physical)/d(theta) for every parameter, in target order.
    dphys: Vec<f64>,
}

fn decode_units(theta: &[f64], ranges: &ParamRanges) -> Result<Decoded> {
    let k = theta.len();
    if k != 4 && k != 6 {
        return Err(Error::Shape(format!("decoder takes 4 or 6 parameters, got {k}")));
    }
    let named = ranges.named(k);
    let phys: Vec<f64> = named.iter().zip(theta).map(|((_, r), &t)| r.denormalize(t)).collect();
    let dphys = named.iter().zip(&phys).map(|((_, r), &p)| p * LN10 * r.log_width()).collect();
    Ok(if k == 4 {
        Decoded { sigma: vec![phys[0], phys[1]], dsf: phys[2] + phys[3], h: None, dphys }
    } else {
        Decoded { sigma: vec![phys[0], phys[1], phys[2]], dsf: phys[3] + phys[4], h: Some(phys[5]), dphys }
    })
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}

/// Decode and, optionally, build the `n_z x K` Jacobian (row-major).
fn decode_impl(
    theta: &[f64],
    tau: f64,
    grid: &DepthGrid,
    ranges: &ParamRanges,
    want_jac: bool,
) -> Result<(ConductivityProfile, Vec<f64>)> {
    check_tau(tau)?;
    let d = decode_units(theta, ranges)?;
    let k = theta.len();
    let mut prof = Vec::with_capacity(grid.n_z);
    let mut jac = if want_jac { vec![0.0; grid.n_z * k] } else { Vec::new() };
    for (i, z) in grid.depths().enumerate() {
        let sa = sigmoid((z - d.dsf) / tau);
        let dsa = sa * (1.0 - sa) / tau;
        let (sigma, grads) = match d.h {
            None => {
                let (s1, s2) = (d.sigma[0], d.sigma[1]);
                let g_dsf = -(s2 - s1) * dsa;
                (s1 + (s2 - s1) * sa, [1.0 - sa, sa, g_dsf, g_dsf, 0.0, 0.0])
            }
            Some(h) => {
                let (s1, s2, s3) = (d.sigma[0], d.sigma[1], d.sigma[2]);
                let sb = sigmoid((z - d.dsf - h) / tau);
                let dsb = sb * (1.0 - sb) / tau;
                let g_dsf = -(s2 - s1) * dsa - (s3 - s2) * dsb;
                let sigma = s1 * (1.0 - sa) + s2 * (sa - sb) + s3 * sb;
                (sigma, [1.0 - sa, sa - sb, sb, g_dsf, g_dsf, -(s3 - s2) * dsb])
            }
        };
        prof.push(sigma.log10());
        if want_jac {
            let scale = 1.0 / (sigma * LN10);
            for c in 0..k {
                jac[i * k + c] = scale * grads[c] * d.dphys[c];
            }
        }
    }
    Ok((ConductivityProfile { log10_sigma: prof }, jac))
}

/// Two-layer profile `σ1 + (σ2 - σ1) s((z - d_sf) / τ)` from
/// `θ = [σ1, σ2, d1, d2]`.
pub fn decode_2layer(theta: &[f64], tau: f64, grid: &DepthGrid, ranges: &ParamRanges) -> Result<ConductivityProfile> {
    if theta.len() != 4 {
        return Err(Error::Shape(format!("two-layer decoder takes 4 parameters, got {}", theta.len())));
    }
    decode_impl(theta, tau, grid, ranges, false).map(|(p, _)| p)
}

/// Three-layer profile with transitions at `d_sf` and `d_sf + h` from
/// `θ = [σ1, σ2, σ3, d1, d2, h]`.
pub fn decode_3layer(theta: &[f64], tau: f64, grid: &DepthGrid, ranges: &ParamRanges) -> Result<ConductivityProfile> {
    if theta.len() != 6 {
        return Err(Error::Shape(format!("three-layer decoder takes 6 parameters, got {}", theta.len())));
    }
    decode_impl(theta, tau, grid, ranges, false).map(|(p, _)| p)
}

/// Decode 4 or 6 parameters.
pub fn decode(theta: &[f64], tau: f64, grid: &DepthGrid, ranges: &ParamRanges) -> Result<ConductivityProfile> {
    decode_impl(theta, tau, grid, ranges, false).map(|(p, _)| p)
}

/// Analytic `∂ log10σ(z_i) / ∂θ_k`, returned as `n_z` rows of `K` entries.
pub fn decoder_jacobian(theta: &[f64], tau: f64, grid: &DepthGrid, ranges: &ParamRanges) -> Result<Vec<Vec<f64>>> {
    let k = theta.len();
    let (_, jac) = decode_impl(theta, tau, grid, ranges, true)?;
    Ok(jac.chunks(k).map(|r| r.to_vec()).collect())
}

/// Profile plus flat row-major Jacobian, for use inside training loops.
pub fn decode_with_jacobian(
    theta: &[f64],
    tau: f64,
    grid: &DepthGrid,
    ranges: &ParamRanges,
) -> Result<(ConductivityProfile, Vec<f64>)> {
    decode_impl(theta, tau, grid, ranges, true)
}

/// Sharp-interface reference profile for normalized parameters.
pub fn hard_step_profile(theta: &[f64], grid: &DepthGrid, ranges: &ParamRanges) -> Result<ConductivityProfile> {
    let d = decode_units(theta, ranges)?;
    let prof = grid
        .depths()
        .map(|z| {
            let s = match d.h {
                Some(h) if z >= d.dsf + h => d.sigma[2],
                _ if z >= d.dsf => d.sigma[1],
                _ => d.sigma[0],
            };
            s.log10()
        })
        .collect();
    Ok(ConductivityProfile { log10_sigma: prof })
}

/// Mean squared difference between two profiles on the same grid.
pub fn profile_mse(a: &ConductivityProfile, b: &ConductivityProfile) -> f64 {
    let n = a.log10_sigma.len();
    a.log10_sigma.iter().zip(&b.log10_sigma).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn midpoint_at_seafloor() {
        let r = ParamRanges::default();
        // Nodes at 0, 110 and 220 m; d_sf = 110 m falls on the middle one.
        let grid = DepthGrid::new(3, 220.0).unwrap();
        let theta = [0.3, 0.6, r.d1.normalize(80.0), r.d2.normalize(30.0)];
        let p = decode_2layer(&theta, 2.0, &grid, &r).unwrap();
        let s1 = r.sigma1.denormalize(0.3);
        let s2 = r.sigma2.denormalize(0.6);
        assert!((10f64.powf(p.log10_sigma[1]) - 0.5 * (s1 + s2)).abs() < 1e-12);
    }

    #[test]
    fn surface_value_is_sigma1() {
        let r = ParamRanges::default();
        let p = decode_2layer(&[0.5; 4], DEFAULT_TAU, &DepthGrid::default(), &r).unwrap();
        let s1 = r.sigma1.denormalize(0.5);
        assert!((10f64.powf(p.log10_sigma[0]) / s1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_tau() {
        let r = ParamRanges::default();
        assert!(matches!(
            decode_2layer(&[0.5; 4], 0.0, &DepthGrid::default(), &r),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn equal_lower_layers_reduce_to_two_layer() {
        let r = ParamRanges::default();
        let g = DepthGrid::default();
        let two = decode_2layer(&[0.2, 0.7, 0.4, 0.5], 2.0, &g, &r).unwrap();
        let three = decode_3layer(&[0.2, 0.7, 0.7, 0.4, 0.5, 0.3], 2.0, &g, &r).unwrap();
        for (a, b) in two.log10_sigma.iter().zip(&three.log10_sigma) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_shape() {
        let r = ParamRanges::default();
        let j = decoder_jacobian(&[0.5; 6], 2.0, &DepthGrid::default(), &r).unwrap();
        assert_eq!((j.len(), j[0].len()), (64, 6));
    }
}
