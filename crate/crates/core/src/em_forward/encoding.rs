use serde::{Deserialize, Serialize};

use super::{Transient, N_TIME};
use crate::{Error, Result};

/// Channel arrangement of a network input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleLayout {
    /// Interleaved `[wave_1, amp_1, wave_2, amp_2, ...]`.
    #[default]
    Standard,
    /// All waveforms, then the adjacent-receiver log-amplitude differences.
    Ratio,
}

impl SampleLayout {
    pub fn channels(self, receivers: usize) -> usize {
        match self {
            SampleLayout::Standard => 2 * receivers,
            SampleLayout::Ratio => 2 * receivers - 1,
        }
    }

    /// Channel index holding the waveform of receiver `j`.
    pub fn wave_channel(self, j: usize) -> usize {
        match self {
            SampleLayout::Standard => 2 * j,
            SampleLayout::Ratio => j,
        }
    }
}

/// Row-major `channels x 128` network input.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTensor {
    layout: SampleLayout,
    receivers: usize,
    data: Vec<f64>,
}

impl SampleTensor {
    /// Assemble a tensor from peak-normalized waveforms and log10 peaks.
    pub fn from_parts(layout: SampleLayout, waveforms: &[Vec<f64>], log_peaks: &[f64]) -> Result<Self> {
        let nr = waveforms.len();
        if nr == 0 || log_peaks.len() != nr {
            return Err(Error::Shape(format!("{nr} waveforms with {} log peaks", log_peaks.len())));
        }
        if layout == SampleLayout::Ratio && nr < 2 {
            return Err(Error::Shape("ratio layout needs at least two receivers".into()));
        }
        if let Some(w) = waveforms.iter().find(|w| w.len() != N_TIME) {
            return Err(Error::Shape(format!("waveform has {} samples, expected {N_TIME}", w.len())));
        }
        let mut data = vec![0.0; layout.channels(nr) * N_TIME];
        let mut put = |c: usize, src: &mut dyn Iterator<Item = f64>| {
            for (d, v) in data[c * N_TIME..(c + 1) * N_TIME].iter_mut().zip(src) {
                *d = v;
            }
        };
        for (j, w) in waveforms.iter().enumerate() {
            put(layout.wave_channel(j), &mut w.iter().copied());
        }
        match layout {
            SampleLayout::Standard => {
                for (j, &l) in log_peaks.iter().enumerate() {
                    put(2 * j + 1, &mut std::iter::repeat(l));
                }
            }
            SampleLayout::Ratio => {
                for j in 0..nr - 1 {
                    put(nr + j, &mut std::iter::repeat(log_peaks[j + 1] - log_peaks[j]));
                }
            }
        }
        Ok(Self { layout, receivers: nr, data })
    }

    pub fn layout(&self) -> SampleLayout {
        self.layout
    }

    pub fn receivers(&self) -> usize {
        self.receivers
    }

    pub fn channels(&self) -> usize {
        self.data.len() / N_TIME
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * N_TIME..(c + 1) * N_TIME]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * N_TIME..(c + 1) * N_TIME]
    }

    pub fn waveform(&self, j: usize) -> &[f64] {
        self.channel(self.layout.wave_channel(j))
    }

    pub fn waveform_mut(&mut self, j: usize) -> &mut [f64] {
        let c = self.layout.wave_channel(j);
        self.channel_mut(c)
    }

    /// Log10 amplitude of receiver `j` (standard layout only).
    pub fn log_amplitude(&self, j: usize) -> Result<f64> {
        match self.layout {
            SampleLayout::Standard => Ok(self.channel(2 * j + 1)[0]),
            SampleLayout::Ratio => Err(Error::Layout("ratio layout has no absolute amplitude channels".into())),
        }
    }

    /// Add `delta` to the amplitude channel of receiver `j` (standard layout only).
    pub fn shift_log_amplitude(&mut self, j: usize, delta: f64) -> Result<()> {
        if self.layout != SampleLayout::Standard {
            return Err(Error::Layout("amplitude perturbations need the standard 8-channel layout".into()));
        }
        for v in self.channel_mut(2 * j + 1) {
            *v += delta;
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Encoded sample together with the clean log10 peaks it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample {
    pub tensor: SampleTensor,
    pub log_peaks: Vec<f64>,
    pub waveforms: Vec<Vec<f64>>,
}

fn normalize(transients: &Transient) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut waves = Vec::with_capacity(transients.receivers());
    let mut logs = Vec::with_capacity(transients.receivers());
    for (j, g) in transients.traces.iter().enumerate() {
        let peak = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::DegenerateSignal { receiver: j });
        }
        waves.push(g.iter().map(|v| v / peak).collect());
        logs.push(peak.log10());
    }
    Ok((waves, logs))
}

/// Peak-normalize each trace and broadcast its log10 peak as a companion channel.
pub fn peak_normalize_encode(transients: &Transient) -> Result<EncodedSample> {
    let (waveforms, log_peaks) = normalize(transients)?;
    let tensor = SampleTensor::from_parts(SampleLayout::Standard, &waveforms, &log_peaks)?;
    Ok(EncodedSample { tensor, log_peaks, waveforms })
}

/// Normalized waveforms followed by adjacent-receiver log-amplitude differences.
pub fn amp_ratio_encode(transients: &Transient) -> Result<EncodedSample> {
    let (waveforms, log_peaks) = normalize(transients)?;
    let tensor = SampleTensor::from_parts(SampleLayout::Ratio, &waveforms, &log_peaks)?;
    Ok(EncodedSample { tensor, log_peaks, waveforms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traces(peaks: [f64; 4]) -> Transient {
        let t = peaks
            .iter()
            .map(|&p| (0..N_TIME).map(|n| p * (-(n as f64) / 20.0).exp() * (1.0 - n as f64 / 40.0)).collect())
            .collect();
        Transient::new(t).unwrap()
    }

    #[test]
    fn peak_and_amplitude_channel() {
        let enc = peak_normalize_encode(&traces([2e-9, 1e-9, 1e-10, 1e-11])).unwrap();
        assert_eq!(enc.tensor.channels(), 8);
        assert!((enc.tensor.channel(1)[77] - (-8.69897)).abs() < 1e-5);
        let max = enc.tensor.waveform(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(max, 1.0);
    }

    #[test]
    fn negative_peak_sign_is_kept() {
        let mut t = traces([1.0, 1.0, 1.0, 1.0]);
        t.traces[2][100] = -5.0;
        let enc = peak_normalize_encode(&t).unwrap();
        assert_eq!(enc.tensor.waveform(2)[100], -1.0);
    }

    #[test]
    fn zero_trace_names_receiver() {
        let mut t = traces([1.0, 1.0, 1.0, 1.0]);
        t.traces[3] = vec![0.0; N_TIME];
        assert!(matches!(peak_normalize_encode(&t), Err(Error::DegenerateSignal { receiver: 3 })));
    }

    #[test]
    fn ratio_layout_has_seven_channels() {
        let enc = amp_ratio_encode(&traces([1.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(enc.tensor.channels(), 7);
        for c in 4..7 {
            assert!(enc.tensor.channel(c).iter().all(|&v| v == 0.0));
        }
        let mut enc = enc;
        assert!(matches!(enc.tensor.shift_log_amplitude(0, 0.1), Err(Error::Layout(_))));
    }

    #[test]
    fn encoding_is_idempotent() {
        let enc = peak_normalize_encode(&traces([3e-8, 2e-9, 1e-10, 4e-11])).unwrap();
        let again = peak_normalize_encode(&Transient::new(enc.waveforms.clone()).unwrap()).unwrap();
        assert_eq!(again.waveforms, enc.waveforms);
        assert!(again.log_peaks.iter().all(|&l| l == 0.0));
    }
}
