//! Parameter sampling, normalization, dataset persistence and the noise and
//! augmentation protocols applied at training and evaluation time.

mod dataset;
mod noise;

pub use dataset::{
    generate_dataset, generate_records, split_ranges, Dataset, DatasetHeader, GenerationConfig, Record,
    Split, DATASET_MAGIC, DATASET_VERSION,
};
pub use noise::{
    curriculum_scale, draw_waveform_sigma, inject_pink_noise, inject_snr_noise, inject_waveform_noise,
    perturb_amplitude, pink_noise, sample_weight, sample_weights, snr_noise_sigma, AmplitudeAug, Curriculum,
    NoiseKind, NoiseSpec, TrainNoise, WaveformNoise, DEFAULT_BLOCK_LEN,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::em_forward::{Basement, EarthModel};
use crate::{Error, Result};

/// Offset and scale of the normalized seafloor-depth auxiliary target.
pub const DSF_LOG_OFFSET: f64 = 1.778;
pub const DSF_LOG_SCALE: f64 = 0.523;
/// Slack allowed when mapping normalized values back to physical units;
/// rounded log bounds put some in-range models marginally outside [0, 1].
pub const DENORMALIZE_SLACK: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    LogUniform,
    LinearUniform,
}

/// Physical sampling bounds plus the log10 bounds used for normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    pub sampling: Sampling,
    pub log_lo: f64,
    pub log_hi: f64,
}

impl ParamRange {
    pub const fn new(lo: f64, hi: f64, sampling: Sampling, log_lo: f64, log_hi: f64) -> Self {
        Self { lo, hi, sampling, log_lo, log_hi }
    }

    pub fn log_width(&self) -> f64 {
        self.log_hi - self.log_lo
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo > 0.0 && self.lo < self.hi && self.hi.is_finite()) || !(self.log_lo < self.log_hi) {
            return Err(Error::Config(format!("{name}: bounds must satisfy 0 < lo < hi")));
        }
        // Log bounds are tabulated to two decimals.
        if (self.lo.log10() - self.log_lo).abs() > 5e-3 || (self.hi.log10() - self.log_hi).abs() > 5e-3 {
            return Err(Error::Config(format!("{name}: log bounds inconsistent with physical bounds")));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self.sampling {
            Sampling::LogUniform => 10f64.powf(rng.gen_range(self.lo.log10()..self.hi.log10())),
            Sampling::LinearUniform => rng.gen_range(self.lo..self.hi),
        }
    }

    pub fn normalize(&self, value: f64) -> f64 {
        (value.log10() - self.log_lo) / self.log_width()
    }

    pub fn denormalize(&self, theta: f64) -> f64 {
        10f64.powf(self.log_lo + theta * self.log_width())
    }

    /// Geometric mean of the physical bounds.
    pub fn geometric_mean(&self) -> f64 {
        (self.lo * self.hi).sqrt()
    }
}

/// Sampling ranges of every earth-model parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRanges {
    pub sigma1: ParamRange,
    pub sigma2: ParamRange,
    pub d1: ParamRange,
    pub d2: ParamRange,
    /// Basement conductivity of the three-layer variant.
    pub sigma3: ParamRange,
    /// Resistive-layer thickness of the three-layer variant.
    pub h: ParamRange,
    /// Source velocity bounds (m/s), linear-uniform.
    pub v0: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        let sigma2 = ParamRange::new(0.001, 1.0, Sampling::LogUniform, -3.0, 0.0);
        Self {
            sigma1: ParamRange::new(0.10, 5.01, Sampling::LogUniform, -1.0, 0.70),
            sigma2,
            d1: ParamRange::new(50.0, 150.0, Sampling::LinearUniform, 1.70, 2.18),
            d2: ParamRange::new(10.0, 50.0, Sampling::LinearUniform, 1.00, 1.70),
            sigma3: sigma2,
            h: ParamRange::new(10.0, 100.0, Sampling::LinearUniform, 1.0, 2.0),
            v0: (0.0, 100.0),
        }
    }
}

/// Parameter names in target order for `K = 4` and `K = 6`.
pub fn parameter_names(k: usize) -> &'static [&'static str] {
    if k == 6 {
        &["sigma1", "sigma2", "sigma3", "d1", "d2", "h"]
    } else {
        &["sigma1", "sigma2", "d1", "d2"]
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in self.named(6) {
            r.validate(name)?;
        }
        if !(self.v0.0 <= self.v0.1) || !self.v0.0.is_finite() || !self.v0.1.is_finite() {
            return Err(Error::Config("v0: bounds must satisfy lo <= hi".into()));
        }
        Ok(())
    }

    /// `(name, range)` pairs in target order for `k` outputs.
    pub fn named(&self, k: usize) -> Vec<(&'static str, &ParamRange)> {
        let ranges: Vec<&ParamRange> = if k == 6 {
            vec![&self.sigma1, &self.sigma2, &self.sigma3, &self.d1, &self.d2, &self.h]
        } else {
            vec![&self.sigma1, &self.sigma2, &self.d1, &self.d2]
        };
        parameter_names(k).iter().copied().zip(ranges).collect()
    }

    fn physical(model: &EarthModel) -> Vec<f64> {
        match model.basement {
            None => vec![model.sigma1, model.sigma2, model.d1, model.d2],
            Some(b) => vec![model.sigma1, model.sigma2, b.sigma3, model.d1, model.d2, b.thickness],
        }
    }
}

/// Earth parameters mapped to `[0, 1]` in log10 space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedParams(pub Vec<f64>);

impl NormalizedParams {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Normalize a model whose parameters lie within `ranges`.
pub fn normalize_params(model: &EarthModel, ranges: &ParamRanges) -> Result<NormalizedParams> {
    model.validate()?;
    let values = ParamRanges::physical(model);
    let k = values.len();
    let mut out = Vec::with_capacity(k);
    for ((name, r), v) in ranges.named(k).into_iter().zip(values) {
        let tol = 1e-9 * r.hi;
        if v < r.lo - tol || v > r.hi + tol {
            return Err(Error::Range { parameter: name.to_string(), value: v });
        }
        out.push(r.normalize(v));
    }
    Ok(NormalizedParams(out))
}

/// Map normalized parameters (K = 4 or 6) back to a physical model.
pub fn denormalize_params(theta: &[f64], ranges: &ParamRanges) -> Result<EarthModel> {
    let k = theta.len();
    if k != 4 && k != 6 {
        return Err(Error::Shape(format!("expected 4 or 6 parameters, got {k}")));
    }
    let mut p = Vec::with_capacity(k);
    for ((name, r), &t) in ranges.named(k).into_iter().zip(theta) {
        if !(t >= -DENORMALIZE_SLACK && t <= 1.0 + DENORMALIZE_SLACK) {
            return Err(Error::Range { parameter: name.to_string(), value: t });
        }
        p.push(r.denormalize(t));
    }
    Ok(if k == 4 {
        EarthModel::two_layer(p[0], p[1], p[2], p[3])
    } else {
        EarthModel::three_layer(p[0], p[1], p[2], p[3], p[4], p[5])
    })
}

/// Normalized auxiliary seafloor-depth target.
pub fn seafloor_target(d1: f64, d2: f64) -> f64 {
    ((d1 + d2).log10() - DSF_LOG_OFFSET) / DSF_LOG_SCALE
}

/// Independent RNG stream for item `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draw `n` models; sample `i` depends only on `(seed, i)`.
pub fn sample_parameters(seed: u64, ranges: &ParamRanges, n: usize, layers: usize) -> Result<Vec<EarthModel>> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if layers != 2 && layers != 3 {
        return Err(Error::Config(format!("layer count must be 2 or 3, got {layers}")));
    }
    ranges.validate()?;
    Ok((0..n as u64).map(|i| sample_one(&mut stream_rng(seed, i), ranges, layers)).collect())
}

fn sample_one(rng: &mut impl Rng, ranges: &ParamRanges, layers: usize) -> EarthModel {
    let sigma1 = ranges.sigma1.draw(rng);
    let sigma2 = ranges.sigma2.draw(rng);
    let d1 = ranges.d1.draw(rng);
    let d2 = ranges.d2.draw(rng);
    let basement = (layers == 3).then(|| Basement { sigma3: ranges.sigma3.draw(rng), thickness: ranges.h.draw(rng) });
    let v0 = if ranges.v0.0 < ranges.v0.1 { rng.gen_range(ranges.v0.0..ranges.v0.1) } else { ranges.v0.0 };
    EarthModel { sigma1, sigma2, d1, d2, basement, v0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        let r = ParamRanges::default();
        let m = EarthModel::two_layer(1.0, 0.01, 100.0, 20.0);
        let t = normalize_params(&m, &r).unwrap();
        assert!((t.0[0] - 1.0 / 1.7).abs() < 1e-12);

        let mid = denormalize_params(&[0.5; 4], &r).unwrap();
        assert!((mid.sigma1 - 0.708).abs() < 1e-3);
        assert!((mid.sigma2 - 0.0316).abs() < 1e-4);
        assert!((mid.d1 - 87.1).abs() < 0.05);
        assert!((mid.d2 - 22.4).abs() < 0.05);

        assert!(seafloor_target(50.0, 10.0).abs() < 1e-3);
        assert!((seafloor_target(150.0, 50.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn out_of_range_names_parameter() {
        let r = ParamRanges::default();
        let err = normalize_params(&EarthModel::two_layer(1.0, 0.01, 300.0, 20.0), &r).unwrap_err();
        assert!(matches!(err, Error::Range { ref parameter, .. } if parameter == "d1"));
        let err = denormalize_params(&[0.5, 1.5, 0.5, 0.5], &r).unwrap_err();
        assert!(matches!(err, Error::Range { ref parameter, .. } if parameter == "sigma2"));
    }

    #[test]
    fn sampling_is_deterministic_and_in_bounds() {
        let r = ParamRanges::default();
        let a = sample_parameters(42, &r, 100, 2).unwrap();
        assert_eq!(a, sample_parameters(42, &r, 100, 2).unwrap());
        for m in &a {
            assert!((0.10..=5.01).contains(&m.sigma1) && (0.001..=1.0).contains(&m.sigma2));
            assert!((50.0..=150.0).contains(&m.d1) && (10.0..=50.0).contains(&m.d2));
            assert!((0.0..=100.0).contains(&m.v0));
        }
        // Prefix stability: sample i does not depend on n.
        assert_eq!(sample_parameters(42, &r, 10, 2).unwrap()[..], a[..10]);
    }

    #[test]
    fn three_layer_round_trip() {
        let r = ParamRanges::default();
        let m = sample_parameters(1, &r, 5, 3).unwrap();
        for m in m {
            let t = normalize_params(&m, &r).unwrap();
            assert_eq!(t.len(), 6);
            let back = denormalize_params(&t.0, &r).unwrap();
            assert!((back.basement.unwrap().thickness / m.basement.unwrap().thickness - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_ranges_are_config_errors() {
        let mut r = ParamRanges::default();
        r.d1.lo = 200.0;
        assert!(matches!(sample_parameters(0, &r, 1, 2), Err(Error::Config(_))));
    }
}
