use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{r2_metrics, MetricsReport};
use crate::em_forward::{SampleLayout, SampleTensor, N_TIME};
use crate::synth_data::{inject_snr_noise, parameter_names, perturb_amplitude, NoiseKind, NoiseSpec, Record};
use crate::tcn_core::Network;
use crate::training::predict_params;
use crate::{Error, Result};

const PREDICT_BATCH: usize = 256;

/// Clean waveforms, log peaks and targets of the evaluation samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepInput {
    pub waveforms: Vec<Vec<Vec<f64>>>,
    pub log_peaks: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl SweepInput {
    pub fn from_records(records: &[Record]) -> Self {
        Self {
            waveforms: records
                .iter()
                .map(|r| r.waveforms.iter().map(|w| w.iter().map(|&v| v as f64).collect()).collect())
                .collect(),
            log_peaks: records.iter().map(|r| r.log_peaks.iter().map(|&v| v as f64).collect()).collect(),
            targets: records.iter().map(|r| r.targets_f64()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn tensors(&self, layout: SampleLayout) -> Result<Vec<SampleTensor>> {
        self.waveforms.iter().zip(&self.log_peaks).map(|(w, l)| SampleTensor::from_parts(layout, w, l)).collect()
    }
}

fn evaluate(net: &Network, inputs: &[SampleTensor], targets: &[Vec<f64>], label: String) -> Result<MetricsReport> {
    let pred = predict_params(net, inputs, PREDICT_BATCH)?;
    let k = targets.first().map_or(0, Vec::len);
    r2_metrics(&pred, targets, parameter_names(k), &label)
}

/// Input signal-to-noise ratio of one sweep point; `Clean` adds no noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrLevel {
    Clean,
    Db(f64),
}

impl fmt::Display for SnrLevel {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            SnrLevel::Clean => write!(f, "clean"),
            SnrLevel::Db(d) => write!(f, "{d}dB"),
        }
    }
}

pub fn default_snr_levels() -> Vec<SnrLevel> {
    vec![SnrLevel::Clean, SnrLevel::Db(40.0), SnrLevel::Db(30.0), SnrLevel::Db(20.0), SnrLevel::Db(10.0)]
}

/// Metrics under white waveform noise at each level. Amplitude channels stay
/// clean. With `repeats > 1` predictions from independent noise draws are
/// pooled.
pub fn snr_sweep(
    net: &Network,
    layout: SampleLayout,
    input: &SweepInput,
    levels: &[SnrLevel],
    seed: u64,
    repeats: usize,
) -> Result<Vec<MetricsReport>> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeat count must be >= 1".into()));
    }
    let clean = input.tensors(layout)?;
    levels
        .iter()
        .enumerate()
        .map(|(li, level)| match level {
            SnrLevel::Clean => evaluate(net, &clean, &input.targets, level.to_string()),
            SnrLevel::Db(db) => {
                let mut noisy = Vec::with_capacity(clean.len() * repeats);
                let mut targets = Vec::with_capacity(clean.len() * repeats);
                for rep in 0..repeats {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(((li as u64) << 32) | rep as u64);
                    noisy.extend(clean.iter().map(|s| inject_snr_noise(s, &mut rng, *db)));
                    targets.extend(input.targets.iter().cloned());
                }
                evaluate(net, &noisy, &targets, level.to_string())
            }
        })
        .collect()
}

/// One amplitude-sweep point; `None` is the unperturbed reference.
pub type AmplitudePoint = Option<NoiseSpec>;

pub fn amplitude_label(point: &AmplitudePoint) -> String {
    match point {
        None => "clean".into(),
        Some(s) => {
            let kind = serde_json::to_value(s.kind).ok().and_then(|v| v.as_str().map(str::to_string));
            format!("{}={}", kind.unwrap_or_default(), s.magnitude)
        }
    }
}

/// Random-noise levels, signed uniform biases, a linear drift and a
/// per-receiver block bias.
pub fn default_amplitude_grid() -> Vec<AmplitudePoint> {
    let mut grid = vec![None];
    for m in [0.01, 0.02, 0.05, 0.10, 0.20] {
        grid.push(Some(NoiseSpec::new(NoiseKind::AmpRandom, m)));
    }
    for b in [-0.20, -0.10, -0.05, 0.05, 0.10, 0.20] {
        grid.push(Some(NoiseSpec::new(NoiseKind::AmpBias, b)));
    }
    grid.push(Some(NoiseSpec::new(NoiseKind::AmpLinearDrift, 0.2)));
    grid.push(Some(NoiseSpec::new(NoiseKind::AmpRecvBlockBias, 0.05)));
    grid
}

/// Per-sample, per-receiver log-amplitude offsets a perturbation applies.
pub fn amplitude_offsets(spec: &NoiseSpec, n: usize, receivers: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let blank = SampleTensor::from_parts(SampleLayout::Standard, &vec![vec![0.0; N_TIME]; receivers], &vec![0.0; receivers])?;
    let mut batch = vec![blank; n];
    perturb_amplitude(&mut batch, spec, rng)?;
    batch.iter().map(|s| (0..receivers).map(|j| s.log_amplitude(j)).collect()).collect()
}

/// Encode with per-receiver log-amplitude offsets. The ratio layout
/// receives the offset differences, so a common offset cancels exactly.
pub fn encode_with_offsets(layout: SampleLayout, waveforms: &[Vec<f64>], log_peaks: &[f64], offsets: &[f64]) -> Result<SampleTensor> {
    match layout {
        SampleLayout::Standard => {
            let shifted: Vec<f64> = log_peaks.iter().zip(offsets).map(|(l, d)| l + d).collect();
            SampleTensor::from_parts(layout, waveforms, &shifted)
        }
        SampleLayout::Ratio => {
            let mut t = SampleTensor::from_parts(layout, waveforms, log_peaks)?;
            let nr = waveforms.len();
            for j in 0..nr - 1 {
                let d = offsets[j + 1] - offsets[j];
                t.channel_mut(nr + j).iter_mut().for_each(|v| *v += d);
            }
            Ok(t)
        }
    }
}

/// Metrics at each amplitude-perturbation grid point.
pub fn amplitude_sweep(
    net: &Network,
    layout: SampleLayout,
    input: &SweepInput,
    grid: &[AmplitudePoint],
    seed: u64,
) -> Result<Vec<MetricsReport>> {
    let n = input.len();
    let nr = input.log_peaks.first().map_or(0, Vec::len);
    grid.iter()
        .enumerate()
        .map(|(gi, point)| {
            let offsets = match point {
                None => vec![vec![0.0; nr]; n],
                Some(spec) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(gi as u64);
                    amplitude_offsets(spec, n, nr, &mut rng)?
                }
            };
            let inputs = (0..n)
                .map(|i| encode_with_offsets(layout, &input.waveforms[i], &input.log_peaks[i], &offsets[i]))
                .collect::<Result<Vec<_>>>()?;
            evaluate(net, &inputs, &input.targets, amplitude_label(point))
        })
        .collect()
}

/// Running median along the station axis with windows truncated at the
/// ends; even-sized windows average their two middle values.
pub fn lateral_median_smooth(stations: &[Vec<f64>], window: usize) -> Result<Vec<Vec<f64>>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidParameter(format!("median window must be odd, got {window}")));
    }
    let Some(first) = stations.first() else {
        return Ok(Vec::new());
    };
    let k = first.len();
    if stations.iter().any(|s| s.len() != k) {
        return Err(Error::Shape("stations have different parameter counts".into()));
    }
    let half = window / 2;
    let n = stations.len();
    let mut out = vec![vec![0.0; k]; n];
    let mut buf = Vec::with_capacity(window);
    for p in 0..k {
        for i in 0..n {
            buf.clear();
            buf.extend(stations[i.saturating_sub(half)..(i + half + 1).min(n)].iter().map(|s| s[p]));
            buf.sort_by(f64::total_cmp);
            let m = buf.len();
            out[i][p] = if m % 2 == 1 { buf[m / 2] } else { 0.5 * (buf[m / 2 - 1] + buf[m / 2]) };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn median_examples() {
        let s = lateral_median_smooth(&col(&[0.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0]), 7).unwrap();
        assert_eq!(s[3][0], 0.0);
        let c = col(&[2.5; 9]);
        assert_eq!(lateral_median_smooth(&c, 7).unwrap(), c);
        let r = col(&[3.0, 1.0, 4.0, 1.0, 5.0]);
        assert_eq!(lateral_median_smooth(&r, 1).unwrap(), r);
        assert!(lateral_median_smooth(&r, 4).is_err());
    }

    #[test]
    fn median_is_idempotent_on_constant_segments() {
        let x = col(&[1.0, 1.0, 1.0, 1.0, 4.0, 4.0, 4.0, 4.0, 4.0]);
        let once = lateral_median_smooth(&x, 3).unwrap();
        assert_eq!(lateral_median_smooth(&once, 3).unwrap(), once);
    }

    #[test]
    fn common_offset_leaves_ratio_input_unchanged() {
        let w: Vec<Vec<f64>> = (0..4).map(|j| (0..N_TIME).map(|n| ((n * (j + 1)) as f64).sin()).collect()).collect();
        let logs = [-7.1, -8.3, -9.0, -10.7];
        let base = encode_with_offsets(SampleLayout::Ratio, &w, &logs, &[0.0; 4]).unwrap();
        for b in [-0.2, 0.05, 0.1] {
            let t = encode_with_offsets(SampleLayout::Ratio, &w, &logs, &[b; 4]).unwrap();
            assert_eq!(t, base);
            let s = encode_with_offsets(SampleLayout::Standard, &w, &logs, &[b; 4]).unwrap();
            assert_eq!(s.log_amplitude(2).unwrap(), logs[2] + b);
        }
        let t = encode_with_offsets(SampleLayout::Ratio, &w, &logs, &[0.0, 0.1, 0.0, 0.0]).unwrap();
        assert_ne!(t, base);
    }

    #[test]
    fn bias_offsets_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = amplitude_offsets(&NoiseSpec::new(NoiseKind::AmpBias, -0.1), 3, 4, &mut rng).unwrap();
        assert!(o.iter().flatten().all(|&v| v == -0.1));
    }

    #[test]
    fn labels() {
        assert_eq!(amplitude_label(&None), "clean");
        assert_eq!(amplitude_label(&Some(NoiseSpec::new(NoiseKind::AmpBias, -0.05))), "amp-bias=-0.05");
        assert_eq!(SnrLevel::Db(20.0).to_string(), "20dB");
    }
}
