use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::em_forward::{SampleLayout, SampleTensor, N_TIME};
use crate::{Error, Result};

/// Samples per block for the per-receiver block bias.
pub const DEFAULT_BLOCK_LEN: usize = 500;
const WAVEFORM_SIGMA_RANGE: (f64, f64) = (1e-3, 1e-1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    WaveformGaussian,
    WaveformPink,
    AmpRandom,
    AmpBias,
    AmpLinearDrift,
    AmpRecvBlockBias,
    RecvBiasAug,
}

/// Epoch schedule: clean before `clean_until`, linear ramp to full strength
/// at `ramp_until`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Curriculum {
    pub clean_until: f64,
    pub ramp_until: f64,
}

impl Curriculum {
    pub fn validate(&self) -> Result<()> {
        if !(self.clean_until >= 0.0 && self.ramp_until >= self.clean_until) {
            return Err(Error::Config("curriculum needs 0 <= clean_until <= ramp_until".into()));
        }
        Ok(())
    }
}

/// Strength multiplier in `[0, 1]` for `epoch` (0-based).
pub fn curriculum_scale(epoch: f64, c: &Curriculum) -> f64 {
    if epoch < c.clean_until {
        0.0
    } else if epoch >= c.ramp_until {
        1.0
    } else {
        (epoch - c.clean_until) / (c.ramp_until - c.clean_until)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Standard deviation, offset, drift span or half-width depending on
    /// `kind`; only the offset may be negative.
    pub magnitude: f64,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    #[serde(default)]
    pub curriculum: Option<Curriculum>,
}

fn default_block_len() -> usize {
    DEFAULT_BLOCK_LEN
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, magnitude: f64) -> Self {
        Self { kind, magnitude, block_len: DEFAULT_BLOCK_LEN, curriculum: None }
    }

    pub fn validate(&self) -> Result<()> {
        let signed = self.kind == NoiseKind::AmpBias;
        if !self.magnitude.is_finite() || (!signed && self.magnitude < 0.0) {
            return Err(Error::Config(format!("noise magnitude must be >= 0, got {}", self.magnitude)));
        }
        if self.block_len == 0 {
            return Err(Error::Config("block length must be positive".into()));
        }
        if let Some(c) = &self.curriculum {
            c.validate()?;
        }
        Ok(())
    }
}

fn gauss(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Log-uniform draw of the per-sample waveform noise level.
pub fn draw_waveform_sigma(rng: &mut impl Rng) -> f64 {
    let (lo, hi) = WAVEFORM_SIGMA_RANGE;
    10f64.powf(rng.gen_range(lo.log10()..hi.log10()))
}

/// Add white Gaussian noise of standard deviation `sigma_w` to the waveform channels.
pub fn inject_waveform_noise(sample: &SampleTensor, rng: &mut impl Rng, sigma_w: f64) -> SampleTensor {
    let mut out = sample.clone();
    if sigma_w == 0.0 {
        return out;
    }
    for j in 0..out.receivers() {
        for v in out.waveform_mut(j) {
            *v += sigma_w * gauss(rng);
        }
    }
    out
}

/// Noise level giving `snr_db` for a trace: `RMS(trace) * 10^(-SNR/20)`.
pub fn snr_noise_sigma(trace: &[f64], snr_db: f64) -> f64 {
    rms(trace) * 10f64.powf(-snr_db / 20.0)
}

/// Add white noise to each waveform channel at the per-trace target SNR.
pub fn inject_snr_noise(sample: &SampleTensor, rng: &mut impl Rng, snr_db: f64) -> SampleTensor {
    let mut out = sample.clone();
    for j in 0..out.receivers() {
        let s = snr_noise_sigma(out.waveform(j), snr_db);
        for v in out.waveform_mut(j) {
            *v += s * gauss(rng);
        }
    }
    out
}

/// `n` samples of 1/f noise with RMS exactly `sigma`, made by shaping a white
/// spectrum with an `f^(-1/2)` amplitude and removing the mean.
pub fn pink_noise(rng: &mut impl Rng, n: usize, sigma: f64) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(gauss(rng), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for (k, c) in buf.iter_mut().enumerate().skip(1) {
        *c /= (k.min(n - k) as f64).sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let r = rms(&x);
    if r == 0.0 {
        return x;
    }
    x.iter().map(|v| v * sigma / r).collect()
}

/// Add pink noise of RMS `sigma_w` to the waveform channels.
pub fn inject_pink_noise(sample: &SampleTensor, rng: &mut impl Rng, sigma_w: f64) -> SampleTensor {
    let mut out = sample.clone();
    if sigma_w == 0.0 {
        return out;
    }
    for j in 0..out.receivers() {
        let e = pink_noise(rng, N_TIME, sigma_w);
        for (v, e) in out.waveform_mut(j).iter_mut().zip(e) {
            *v += e;
        }
    }
    out
}

/// Perturb the log-amplitude channels of a batch in place. Waveforms are
/// never touched.
pub fn perturb_amplitude(batch: &mut [SampleTensor], spec: &NoiseSpec, rng: &mut impl Rng) -> Result<()> {
    spec.validate()?;
    if batch.iter().any(|s| s.layout() != SampleLayout::Standard) {
        return Err(Error::Layout("amplitude perturbations need the standard 8-channel layout".into()));
    }
    let m = spec.magnitude;
    let n = batch.len();
    match spec.kind {
        NoiseKind::WaveformGaussian | NoiseKind::WaveformPink => {
            return Err(Error::Config(format!("{:?} is not an amplitude perturbation", spec.kind)))
        }
        NoiseKind::AmpRandom => {
            for s in batch.iter_mut() {
                for j in 0..s.receivers() {
                    s.shift_log_amplitude(j, m * gauss(rng))?;
                }
            }
        }
        NoiseKind::AmpBias => {
            for s in batch.iter_mut() {
                for j in 0..s.receivers() {
                    s.shift_log_amplitude(j, m)?;
                }
            }
        }
        NoiseKind::AmpLinearDrift => {
            for (i, s) in batch.iter_mut().enumerate() {
                let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
                let delta = m * (frac - 0.5);
                for j in 0..s.receivers() {
                    s.shift_log_amplitude(j, delta)?;
                }
            }
        }
        NoiseKind::AmpRecvBlockBias => {
            for block in batch.chunks_mut(spec.block_len) {
                let nr = block[0].receivers();
                let offsets: Vec<f64> = (0..nr).map(|_| m * gauss(rng)).collect();
                for s in block.iter_mut() {
                    for (j, &b) in offsets.iter().enumerate() {
                        s.shift_log_amplitude(j, b)?;
                    }
                }
            }
        }
        NoiseKind::RecvBiasAug => {
            for s in batch.iter_mut() {
                for j in 0..s.receivers() {
                    s.shift_log_amplitude(j, rng.gen_range(-m..=m))?;
                }
            }
        }
    }
    Ok(())
}

/// Raw inverse-conductivity weight `1 / (sigma2_norm + 0.05)`.
pub fn sample_weight(sigma2_norm: f64) -> f64 {
    1.0 / (sigma2_norm + 0.05)
}

/// Raw weights renormalized to unit mean.
pub fn sample_weights(sigma2_norm: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = sigma2_norm.iter().map(|&s| sample_weight(s)).collect();
    let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
    raw.iter().map(|w| w / mean).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveformNoise {
    Off,
    #[default]
    White,
    Pink,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeAug {
    #[default]
    Off,
    /// Per-receiver `N(0, s^2)` with `s ~ U[lo, hi]` (log10 units).
    AmpAug { lo: f64, hi: f64 },
    /// Per-receiver offset `U[-half_width, half_width]` (log10 units).
    RecvBias { half_width: f64 },
}

impl AmplitudeAug {
    pub fn amp_aug() -> Self {
        AmplitudeAug::AmpAug { lo: 0.001, hi: 0.01 }
    }

    pub fn recv_bias() -> Self {
        AmplitudeAug::RecvBias { half_width: 0.03 }
    }
}

/// Training-time augmentation of one variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainNoise {
    pub waveform: WaveformNoise,
    pub amplitude: AmplitudeAug,
    /// Schedule applied to the amplitude augmentation only.
    pub curriculum: Option<Curriculum>,
}

impl TrainNoise {
    pub fn clean() -> Self {
        Self { waveform: WaveformNoise::Off, amplitude: AmplitudeAug::Off, curriculum: None }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.curriculum {
            c.validate()?;
        }
        match self.amplitude {
            AmplitudeAug::AmpAug { lo, hi } if !(0.0 <= lo && lo <= hi) => {
                Err(Error::Config("amp-aug bounds need 0 <= lo <= hi".into()))
            }
            AmplitudeAug::RecvBias { half_width } if !(half_width >= 0.0) => {
                Err(Error::Config("recv-bias half width must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Augment one training sample in place; returns the mean amplitude
    /// perturbation scale drawn (0 when none was applied).
    pub fn apply(&self, sample: &mut SampleTensor, epoch: usize, rng: &mut impl Rng) -> Result<f64> {
        match self.waveform {
            WaveformNoise::Off => {}
            WaveformNoise::White => {
                let s = draw_waveform_sigma(rng);
                *sample = inject_waveform_noise(sample, rng, s);
            }
            WaveformNoise::Pink => {
                let s = draw_waveform_sigma(rng);
                *sample = inject_pink_noise(sample, rng, s);
            }
        }
        let scale = self.curriculum.map_or(1.0, |c| curriculum_scale(epoch as f64, &c));
        let nr = sample.receivers();
        let mut drawn = 0.0;
        match self.amplitude {
            AmplitudeAug::Off => {}
            AmplitudeAug::AmpAug { lo, hi } => {
                for j in 0..nr {
                    let s = scale * if hi > lo { rng.gen_range(lo..hi) } else { lo };
                    drawn += s;
                    sample.shift_log_amplitude(j, s * gauss(rng))?;
                }
            }
            AmplitudeAug::RecvBias { half_width } => {
                for j in 0..nr {
                    let b = scale * rng.gen_range(-half_width..=half_width);
                    drawn += b.abs();
                    sample.shift_log_amplitude(j, b)?;
                }
            }
        }
        Ok(drawn / nr as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> SampleTensor {
        let w: Vec<Vec<f64>> = (0..4).map(|j| (0..N_TIME).map(|n| ((n + j) as f64 * 0.1).sin()).collect()).collect();
        SampleTensor::from_parts(SampleLayout::Standard, &w, &[-8.0, -9.0, -10.0, -11.0]).unwrap()
    }

    #[test]
    fn curriculum_examples() {
        let c = Curriculum { clean_until: 20.0, ramp_until: 40.0 };
        assert_eq!(curriculum_scale(10.0, &c), 0.0);
        assert_eq!(curriculum_scale(30.0, &c), 0.5);
        assert_eq!(curriculum_scale(70.0, &c), 1.0);
    }

    #[test]
    fn snr_sigma_example() {
        let trace = vec![0.3; 16];
        assert!((snr_noise_sigma(&trace, 20.0) - 0.03).abs() < 1e-15);
    }

    #[test]
    fn waveform_noise_leaves_amplitudes() {
        let s = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(inject_waveform_noise(&s, &mut rng, 0.0), s);
        let noisy = inject_waveform_noise(&s, &mut rng, 0.05);
        let pink = inject_pink_noise(&s, &mut rng, 0.05);
        for j in 0..4 {
            assert_eq!(noisy.channel(2 * j + 1), s.channel(2 * j + 1));
            assert_eq!(pink.channel(2 * j + 1), s.channel(2 * j + 1));
            assert_ne!(noisy.waveform(j), s.waveform(j));
        }
    }

    #[test]
    fn drift_endpoints() {
        let mut batch = vec![sample(); 5];
        let spec = NoiseSpec::new(NoiseKind::AmpLinearDrift, 0.4);
        perturb_amplitude(&mut batch, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((batch[0].log_amplitude(0).unwrap() - (-8.2)).abs() < 1e-12);
        assert!((batch[4].log_amplitude(0).unwrap() - (-7.8)).abs() < 1e-12);
        assert_eq!(batch[2].waveform(1), sample().waveform(1));
    }

    #[test]
    fn block_bias_is_constant_within_block() {
        let mut batch = vec![sample(); 7];
        let spec = NoiseSpec { block_len: 3, ..NoiseSpec::new(NoiseKind::AmpRecvBlockBias, 0.1) };
        perturb_amplitude(&mut batch, &spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for j in 0..4 {
            assert_eq!(batch[0].log_amplitude(j).unwrap(), batch[2].log_amplitude(j).unwrap());
            assert_ne!(batch[2].log_amplitude(j).unwrap(), batch[3].log_amplitude(j).unwrap());
        }
    }

    #[test]
    fn ratio_layout_is_rejected() {
        let w = vec![vec![1.0; N_TIME]; 4];
        let mut batch = vec![SampleTensor::from_parts(SampleLayout::Ratio, &w, &[0.0; 4]).unwrap()];
        let err = perturb_amplitude(&mut batch, &NoiseSpec::new(NoiseKind::AmpBias, 0.1), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Layout(_))));
    }

    #[test]
    fn weights_examples() {
        assert!((sample_weight(0.0) - 20.0).abs() < 1e-12);
        assert!((sample_weight(0.95) - 1.0).abs() < 1e-12);
        let w = sample_weights(&[0.0, 0.3, 0.9, 0.5]);
        assert!((w.iter().sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amp_aug_is_clean_before_curriculum() {
        let noise = TrainNoise {
            waveform: WaveformNoise::Off,
            amplitude: AmplitudeAug::amp_aug(),
            curriculum: Some(Curriculum { clean_until: 4.0, ramp_until: 8.0 }),
        };
        let mut s = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(noise.apply(&mut s, 2, &mut rng).unwrap(), 0.0);
        assert_eq!(s, sample());
        assert!(noise.apply(&mut s, 10, &mut rng).unwrap() > 0.0);
    }
}
