use num_complex::Complex64;

use super::filter::{J0_WEIGHTS, J1_WEIGHTS, LEN, LOG_BASE_START, LOG_BASE_STEP};
use super::{whole_space_ex, EarthModel, FrequencyGrid, SpectralResponse, SurveyGeometry, MU0};
use crate::{Error, Result};

/// Maximum number of layers (including both half-spaces).
pub const MAX_LAYERS: usize = 8;

/// A stack of horizontal layers; `interfaces[i]` separates layer `i` from
/// layer `i + 1`. Depth is positive downwards.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredEarth {
    interfaces: Vec<f64>,
    conductivities: Vec<f64>,
}

impl LayeredEarth {
    pub fn new(interfaces: Vec<f64>, conductivities: Vec<f64>) -> Result<Self> {
        if conductivities.len() != interfaces.len() + 1 {
            return Err(Error::InvalidModel(format!(
                "{} interfaces need {} conductivities, got {}",
                interfaces.len(),
                interfaces.len() + 1,
                conductivities.len()
            )));
        }
        if conductivities.len() > MAX_LAYERS {
            return Err(Error::InvalidModel(format!("at most {MAX_LAYERS} layers are supported")));
        }
        if let Some(s) = conductivities.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidModel(format!("conductivity must be positive, got {s}")));
        }
        if interfaces.iter().any(|z| !z.is_finite()) || interfaces.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidModel("interfaces must be finite and strictly increasing".into()));
        }
        Ok(Self { interfaces, conductivities })
    }

    /// Homogeneous whole space.
    pub fn uniform(sigma: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![sigma])
    }

    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    pub fn conductivities(&self) -> &[f64] {
        &self.conductivities
    }

    fn layer_count(&self) -> usize {
        self.conductivities.len()
    }

    /// Index of the layer containing depth `z`; points on an interface are rejected.
    pub fn layer_of(&self, z: f64) -> Result<usize> {
        if self.interfaces.iter().any(|&i| i == z) {
            return Err(Error::InvalidModel(format!("depth {z} m lies exactly on an interface")));
        }
        Ok(self.interfaces.iter().filter(|&&i| i < z).count())
    }

    fn top(&self, layer: usize) -> Option<f64> {
        (layer > 0).then(|| self.interfaces[layer - 1])
    }

    fn bottom(&self, layer: usize) -> Option<f64> {
        (layer + 1 < self.layer_count()).then(|| self.interfaces[layer])
    }

    fn thickness(&self, layer: usize) -> f64 {
        self.interfaces[layer] - self.interfaces[layer - 1]
    }
}

/// How the source-layer direct wave is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DirectField {
    /// Closed-form whole-space field added to the filtered reflected part.
    #[default]
    Analytic,
    /// Direct wave left inside the Hankel integrand.
    Spectral,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolverOptions {
    pub direct: DirectField,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Tm,
    Te,
}

/// Generalized reflection coefficients seen from the source layer, looking
/// up and down, for one mode. `decay[k]` is `exp(-2 u_k h_k)` for every
/// finite layer `k`.
fn reflections(
    earth: &LayeredEarth,
    src: usize,
    u: &[Complex64; MAX_LAYERS],
    decay: &[Complex64; MAX_LAYERS],
    omega: f64,
    mode: Mode,
) -> (Complex64, Complex64) {
    let n = earth.layer_count();
    let zeta = Complex64::new(0.0, omega * MU0);
    let imp = |k: usize| -> Complex64 {
        match mode {
            Mode::Tm => u[k] / earth.conductivities[k],
            Mode::Te => zeta / u[k],
        }
    };
    let zero = Complex64::new(0.0, 0.0);

    let mut down = zero;
    if src + 1 < n {
        for k in (src..n - 1).rev() {
            let (zk, zn) = (imp(k), imp(k + 1));
            let r = (zn - zk) / (zn + zk);
            down = if k + 1 == n - 1 {
                r
            } else {
                let e = decay[k + 1];
                (r + down * e) / (1.0 + r * down * e)
            };
        }
    }

    let mut up = zero;
    for k in 1..=src {
        let (zk, zp) = (imp(k), imp(k - 1));
        let r = (zp - zk) / (zp + zk);
        up = if k == 1 {
            r
        } else {
            let e = decay[k - 1];
            (r + up * e) / (1.0 + r * up * e)
        };
    }
    (up, down)
}

/// Transmission-line voltages `(V_TM, V_TE)` at receiver depth `zr` for a
/// unit horizontal current at `zs`, both inside the same layer, at
/// horizontal wavenumber `lambda`.
///
/// The inline field follows as
/// `E_x = -1/(2π) ∫ λ V_TM J0(λr) dλ + 1/(2πr) ∫ (V_TM - V_TE) J1(λr) dλ`.
pub fn hed_kernel(
    earth: &LayeredEarth,
    zs: f64,
    zr: f64,
    lambda: f64,
    omega: f64,
    include_direct: bool,
) -> Result<(Complex64, Complex64)> {
    let src = earth.layer_of(zs)?;
    if earth.layer_of(zr)? != src {
        return Err(Error::InvalidModel("receiver must lie in the source layer".into()));
    }
    Ok(kernel_in_layer(earth, src, zs, zr, lambda, omega, include_direct))
}

/// Principal square root of `a + ib` in Cartesian form.
fn principal_sqrt(a: f64, b: f64) -> Complex64 {
    let m = a.hypot(b);
    if a >= 0.0 {
        let re = (0.5 * (m + a)).sqrt();
        Complex64::new(re, if re == 0.0 { 0.0 } else { 0.5 * b / re })
    } else {
        let im = (0.5 * (m - a)).sqrt().copysign(b);
        Complex64::new(0.5 * b / im, im)
    }
}

fn kernel_in_layer(
    earth: &LayeredEarth,
    src: usize,
    zs: f64,
    zr: f64,
    lambda: f64,
    omega: f64,
    include_direct: bool,
) -> (Complex64, Complex64) {
    let n = earth.layer_count();
    let mut u = [Complex64::new(0.0, 0.0); MAX_LAYERS];
    for (k, uk) in u.iter_mut().enumerate().take(n) {
        *uk = principal_sqrt(lambda * lambda, omega * MU0 * earth.conductivities[k]);
    }
    let us = u[src];
    let top = earth.top(src);
    let bottom = earth.bottom(src);

    let path_up = top.map(|zt| zr + zs - 2.0 * zt);
    let path_down = bottom.map(|zb| 2.0 * zb - zr - zs);
    let nearest = match (path_up, path_down) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => f64::INFINITY,
    };
    let zero = Complex64::new(0.0, 0.0);
    if !include_direct && us.re * nearest > 700.0 {
        return (zero, zero);
    }

    let mut decay = [zero; MAX_LAYERS];
    for (k, dk) in decay.iter_mut().enumerate().take(n.saturating_sub(1)).skip(1) {
        if k != src {
            *dk = (-2.0 * u[k] * earth.thickness(k)).exp();
        }
    }
    let direct = if include_direct { (-us * (zr - zs).abs()).exp() } else { zero };
    let e_up = path_up.map(|p| (-us * p).exp());
    let e_down = path_down.map(|p| (-us * p).exp());
    let multiple = match (top, bottom) {
        (Some(zt), Some(zb)) => {
            let d = zb - zt;
            let dz = zr - zs;
            Some(((-us * (2.0 * d - dz)).exp() + (-us * (2.0 * d + dz)).exp(), (-2.0 * us * d).exp()))
        }
        _ => None,
    };
    let mut out = [zero; 2];
    for (slot, mode) in [Mode::Tm, Mode::Te].into_iter().enumerate() {
        let (gu, gd) = reflections(earth, src, &u, &decay, omega, mode);
        let mut refl = zero;
        if let Some(e) = e_up {
            refl += gu * e;
        }
        if let Some(e) = e_down {
            refl += gd * e;
        }
        if let Some((bounce, round_trip)) = multiple {
            let gg = gu * gd;
            refl += gg * bounce;
            refl /= 1.0 - gg * round_trip;
        }
        let z = match mode {
            Mode::Tm => us / earth.conductivities[src],
            Mode::Te => Complex64::new(0.0, omega * MU0) / us,
        };
        out[slot] = 0.5 * z * (direct + refl);
    }
    (out[0], out[1])
}

fn filter_base() -> [f64; LEN] {
    let mut base = [0.0; LEN];
    for (i, b) in base.iter_mut().enumerate() {
        *b = (LOG_BASE_START + LOG_BASE_STEP * i as f64).exp();
    }
    base
}

/// Inline `E_x` for source depth `zs` on an arbitrary layer stack.
/// Returns values indexed `[receiver][frequency]`.
pub fn solve_layered(
    earth: &LayeredEarth,
    zs: f64,
    geom: &SurveyGeometry,
    freqs: &[f64],
    opts: SolverOptions,
) -> Result<Vec<Vec<Complex64>>> {
    geom.validate()?;
    let src = earth.layer_of(zs)?;
    if earth.layer_of(geom.z_obs)? != src {
        return Err(Error::InvalidModel(format!(
            "receiver depth {} m must lie in the source layer",
            geom.z_obs
        )));
    }
    if let Some(f) = freqs.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(Error::InvalidParameter(format!("frequency must be positive, got {f}")));
    }
    let base = filter_base();
    let zr = geom.z_obs;
    let include_direct = opts.direct == DirectField::Spectral;
    let sigma_src = earth.conductivities[src];

    let mut out = Vec::with_capacity(geom.offsets.len());
    for &r in &geom.offsets {
        let mut row = Vec::with_capacity(freqs.len());
        for &f in freqs {
            let omega = 2.0 * std::f64::consts::PI * f;
            let mut i0 = Complex64::new(0.0, 0.0);
            let mut i1 = Complex64::new(0.0, 0.0);
            for i in 0..LEN {
                let lambda = base[i] / r;
                let (vtm, vte) = kernel_in_layer(earth, src, zs, zr, lambda, omega, include_direct);
                i0 += lambda * vtm * J0_WEIGHTS[i];
                i1 += (vtm - vte) * J1_WEIGHTS[i];
            }
            i0 /= r;
            i1 /= r;
            let two_pi = 2.0 * std::f64::consts::PI;
            let mut ex = -i0 / two_pi + i1 / (two_pi * r);
            if !include_direct {
                ex += whole_space_ex(sigma_src, r, zr - zs, f);
            }
            if !(ex.re.is_finite() && ex.im.is_finite()) {
                return Err(Error::NumericalFailure {
                    frequency: f,
                    detail: format!("non-finite Hankel sum at offset {r} m"),
                });
            }
            row.push(ex);
        }
        out.push(row);
    }
    Ok(out)
}

/// Quasi-static inline `E_x` of an x-directed unit dipole at depth `d1` for
/// every receiver and frequency of the grid.
pub fn solve_layered_response(
    model: &EarthModel,
    geom: &SurveyGeometry,
    grid: &FrequencyGrid,
) -> Result<SpectralResponse> {
    let earth = model.to_layered()?;
    geom.validate()?;
    if geom.z_obs >= model.seafloor_depth() {
        return Err(Error::InvalidModel(format!(
            "receiver depth {} m is not above the seafloor at {} m",
            geom.z_obs,
            model.seafloor_depth()
        )));
    }
    let values = solve_layered(&earth, model.d1, geom, grid.values(), SolverOptions::default())?;
    Ok(SpectralResponse {
        frequencies: grid.values().to_vec(),
        convention: grid.convention(),
        values,
    })
}
