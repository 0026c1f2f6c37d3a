//! One-dimensional layered-earth forward modelling for an inline horizontal
//! electric dipole, time-domain synthesis and network input encoding.
//!
//! The solver works in the quasi-static regime with an `exp(+iωt)` time
//! convention, so an inverse real DFT of a spectrum directly yields a causal
//! impulse response.

mod encoding;
mod filter;
mod layered;
mod synthesis;
mod validation;
mod whole_space;

pub use encoding::{amp_ratio_encode, peak_normalize_encode, EncodedSample, SampleLayout, SampleTensor};
pub use layered::{
    hed_kernel, solve_layered, solve_layered_response, DirectField, LayeredEarth, SolverOptions,
};
pub use synthesis::{skin_depth, stepoff_to_impulse, synthesize_transient, DEFAULT_STEPOFF_FLOOR};
pub use validation::{
    dense_grid_correlations, pearson, reference_models, whole_space_check, GridCorrelation, WholeSpacePoint,
};
pub use whole_space::{whole_space_ex, whole_space_reference};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use num_complex::Complex64;

/// Vacuum permeability (H/m).
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;
/// Conductivity used for the air half-space (S/m).
pub const AIR_CONDUCTIVITY: f64 = 1.0e-8;
/// Samples per synthesized trace.
pub const N_TIME: usize = 128;
/// Sample interval of synthesized traces (s).
pub const DT: f64 = 0.25;

/// Resistive layer and basement of the three-layer variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Basement {
    /// Basement conductivity (S/m).
    pub sigma3: f64,
    /// Thickness of the layer between the seafloor and the basement (m).
    pub thickness: f64,
}

/// Physical earth parameters.
///
/// `d1` is the source depth below the sea surface and `d2` the vertical
/// distance from the source down to the seafloor; the seafloor depth is
/// always derived as `d1 + d2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarthModel {
    pub sigma1: f64,
    pub sigma2: f64,
    pub d1: f64,
    pub d2: f64,
    pub basement: Option<Basement>,
    /// Source velocity (m/s). Recorded metadata only.
    pub v0: f64,
}

impl EarthModel {
    pub fn two_layer(sigma1: f64, sigma2: f64, d1: f64, d2: f64) -> Self {
        Self { sigma1, sigma2, d1, d2, basement: None, v0: 0.0 }
    }

    pub fn three_layer(sigma1: f64, sigma2: f64, sigma3: f64, d1: f64, d2: f64, h: f64) -> Self {
        Self {
            sigma1,
            sigma2,
            d1,
            d2,
            basement: Some(Basement { sigma3, thickness: h }),
            v0: 0.0,
        }
    }

    pub fn seafloor_depth(&self) -> f64 {
        self.d1 + self.d2
    }

    pub fn layer_count(&self) -> usize {
        if self.basement.is_some() {
            3
        } else {
            2
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut checks = vec![
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("d1", self.d1),
            ("d2", self.d2),
        ];
        if let Some(b) = self.basement {
            checks.push(("sigma3", b.sigma3));
            checks.push(("h", b.thickness));
        }
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.v0.is_finite() {
            return Err(Error::InvalidModel("v0 must be finite".into()));
        }
        Ok(())
    }

    /// Layer stack `air | sea | seafloor [| basement]`.
    pub fn to_layered(&self) -> Result<LayeredEarth> {
        self.validate()?;
        let dsf = self.seafloor_depth();
        match self.basement {
            None => LayeredEarth::new(vec![0.0, dsf], vec![AIR_CONDUCTIVITY, self.sigma1, self.sigma2]),
            Some(b) => LayeredEarth::new(
                vec![0.0, dsf, dsf + b.thickness],
                vec![AIR_CONDUCTIVITY, self.sigma1, self.sigma2, b.sigma3],
            ),
        }
    }
}

/// Inline receiver spread; the source is x-directed and receivers record `E_x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurveyGeometry {
    pub offsets: Vec<f64>,
    pub z_obs: f64,
}

impl Default for SurveyGeometry {
    fn default() -> Self {
        Self { offsets: vec![20.0, 50.0, 100.0, 200.0], z_obs: 20.0 }
    }
}

impl SurveyGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.offsets.is_empty() {
            return Err(Error::InvalidModel("geometry has no receivers".into()));
        }
        if self.offsets[0] <= 0.0 || self.offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidModel("offsets must be positive and strictly increasing".into()));
        }
        if !(self.z_obs > 0.0 && self.z_obs.is_finite()) {
            return Err(Error::InvalidModel(format!("z_obs must be positive, got {}", self.z_obs)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridConvention {
    /// 64 frequencies, linearly spaced 0.05–2 Hz, placed in DFT bins 0–63.
    Paper64,
    /// 512 frequencies `k/64` Hz (bin 0 uses a 0.001 Hz proxy), 0–8 Hz.
    Dense512,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    values: Vec<f64>,
    convention: GridConvention,
}

/// Near-DC proxy frequency for the first bin of the dense grid (Hz).
pub const DENSE_DC_PROXY: f64 = 0.001;
/// Bin spacing of the dense grid (Hz).
pub const DENSE_BIN_SPACING: f64 = 1.0 / 64.0;

impl FrequencyGrid {
    pub fn paper64() -> Self {
        let values = (0..64).map(|k| 0.05 + 1.95 * k as f64 / 63.0).collect();
        Self { values, convention: GridConvention::Paper64 }
    }

    pub fn dense512() -> Self {
        let mut values: Vec<f64> = (0..512).map(|k| k as f64 * DENSE_BIN_SPACING).collect();
        values[0] = DENSE_DC_PROXY;
        Self { values, convention: GridConvention::Dense512 }
    }

    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.is_empty()
            || values[0] <= 0.0
            || values.iter().any(|v| !v.is_finite())
            || values.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidParameter(
                "frequencies must be positive, finite and strictly increasing".into(),
            ));
        }
        Ok(Self { values, convention: GridConvention::Custom })
    }

    pub fn for_convention(convention: GridConvention) -> Result<Self> {
        match convention {
            GridConvention::Paper64 => Ok(Self::paper64()),
            GridConvention::Dense512 => Ok(Self::dense512()),
            GridConvention::Custom => Err(Error::InvalidParameter("custom grids need explicit values".into())),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn convention(&self) -> GridConvention {
        self.convention
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Complex inline `E_x` (V/m per unit dipole moment) indexed `[receiver][frequency]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralResponse {
    pub frequencies: Vec<f64>,
    pub convention: GridConvention,
    pub values: Vec<Vec<Complex64>>,
}

impl SpectralResponse {
    pub fn receivers(&self) -> usize {
        self.values.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.values {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
        out
    }
}

/// Per-receiver impulse-response traces of length [`N_TIME`] at [`DT`].
#[derive(Clone, Debug, PartialEq)]
pub struct Transient {
    pub traces: Vec<Vec<f64>>,
}

impl Transient {
    pub fn new(traces: Vec<Vec<f64>>) -> Result<Self> {
        for (j, t) in traces.iter().enumerate() {
            if t.len() != N_TIME {
                return Err(Error::Shape(format!("trace {j} has {} samples, expected {N_TIME}", t.len())));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: format!("transient trace {j}") });
            }
        }
        Ok(Self { traces })
    }

    pub fn receivers(&self) -> usize {
        self.traces.len()
    }

    pub fn times() -> impl Iterator<Item = f64> {
        (0..N_TIME).map(|n| n as f64 * DT)
    }
}

/// Forward-model an earth model on a grid and synthesize its transient.
pub fn forward_transient(model: &EarthModel, geom: &SurveyGeometry, grid: &FrequencyGrid) -> Result<Transient> {
    let resp = solve_layered_response(model, geom, grid)?;
    synthesize_transient(&resp, grid.convention())
}
