use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{GridConvention, SpectralResponse, Transient, MU0, N_TIME};
use crate::{Error, Result};

/// Default minimum frequency used by [`stepoff_to_impulse`] (Hz).
pub const DEFAULT_STEPOFF_FLOOR: f64 = 0.01;

const DENSE_BINS: usize = 512;
const DENSE_DECIMATION: usize = 4;

/// Inverse real DFT of the half spectrum `bins` (length `n/2 + 1`) with 1/N
/// normalization. Imaginary parts of the DC and Nyquist bins are ignored.
pub(crate) fn irfft(bins: &[Complex64], n: usize) -> Vec<f64> {
    debug_assert_eq!(bins.len(), n / 2 + 1);
    let mut full = vec![Complex64::new(0.0, 0.0); n];
    full[0] = Complex64::new(bins[0].re, 0.0);
    for k in 1..n / 2 {
        full[k] = bins[k];
        full[n - k] = bins[k].conj();
    }
    full[n / 2] = Complex64::new(bins[n / 2].re, 0.0);
    FftPlanner::new().plan_fft_inverse(n).process(&mut full);
    full.iter().map(|c| c.re / n as f64).collect()
}

/// Inverse-transform every receiver of `resp` to a 128-sample impulse response.
///
/// `Paper64` places the 64 values in bins 0..=63 of a 128-point transform
/// with a zero Nyquist bin, so bin 0 holds the lowest computed frequency
/// rather than DC. `Dense512` uses a 1024-point transform of the bins
/// `k/64` Hz and keeps every fourth sample of the first 512, rescaled so the
/// amplitude is comparable to the 128-point convention.
pub fn synthesize_transient(resp: &SpectralResponse, convention: GridConvention) -> Result<Transient> {
    let (bins, n, step) = match convention {
        GridConvention::Paper64 => (N_TIME / 2, N_TIME, 1),
        GridConvention::Dense512 => (DENSE_BINS, 2 * DENSE_BINS, DENSE_DECIMATION),
        GridConvention::Custom => {
            return Err(Error::Shape("custom grids cannot be synthesized to the time domain".into()))
        }
    };
    if resp.frequencies.len() != bins {
        return Err(Error::Shape(format!(
            "{convention:?} synthesis needs {bins} frequencies, response has {}",
            resp.frequencies.len()
        )));
    }
    let mut traces = Vec::with_capacity(resp.values.len());
    for (j, row) in resp.values.iter().enumerate() {
        if row.len() != bins {
            return Err(Error::Shape(format!("receiver {j} has {} values, expected {bins}", row.len())));
        }
        let mut padded = row.clone();
        padded.push(Complex64::new(0.0, 0.0));
        let x = irfft(&padded, n);
        traces.push(x.iter().step_by(step).take(N_TIME).map(|v| v * step as f64).collect());
    }
    Transient::new(traces)
}

/// Convert a step-off spectrum to an impulse spectrum by dividing each value
/// by `i 2π max(f, f_floor)`.
pub fn stepoff_to_impulse(resp: &SpectralResponse, f_floor: f64) -> Result<SpectralResponse> {
    if !(f_floor > 0.0 && f_floor.is_finite()) {
        return Err(Error::InvalidParameter(format!("frequency floor must be positive, got {f_floor}")));
    }
    let mut out = resp.clone();
    for row in &mut out.values {
        for (v, &f) in row.iter_mut().zip(&resp.frequencies) {
            *v /= Complex64::new(0.0, 2.0 * std::f64::consts::PI * f.max(f_floor));
        }
    }
    Ok(out)
}

/// Electromagnetic skin depth `sqrt(2 / (ω μ0 σ))` in metres.
pub fn skin_depth(sigma: f64, f: f64) -> f64 {
    (2.0 / (2.0 * std::f64::consts::PI * f * MU0 * sigma)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em_forward::FrequencyGrid;

    fn response(grid: &FrequencyGrid, fill: impl Fn(usize) -> Complex64) -> SpectralResponse {
        SpectralResponse {
            frequencies: grid.values().to_vec(),
            convention: grid.convention(),
            values: vec![(0..grid.len()).map(fill).collect()],
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_transient() {
        let r = response(&FrequencyGrid::paper64(), |_| Complex64::new(0.0, 0.0));
        let t = synthesize_transient(&r, GridConvention::Paper64).unwrap();
        assert!(t.traces[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dc_bin_gives_constant() {
        let r = response(&FrequencyGrid::paper64(), |k| Complex64::new(if k == 0 { 3.0 } else { 0.0 }, 0.0));
        let t = synthesize_transient(&r, GridConvention::Paper64).unwrap();
        assert!(t.traces[0].iter().all(|&v| (v - 3.0 / 128.0).abs() < 1e-15));
    }

    #[test]
    fn single_bin_gives_cosine() {
        let c = 0.7;
        let r = response(&FrequencyGrid::paper64(), |k| Complex64::new(if k == 5 { c } else { 0.0 }, 0.0));
        let t = synthesize_transient(&r, GridConvention::Paper64).unwrap();
        for (n, v) in t.traces[0].iter().enumerate() {
            let want = 2.0 * c / 128.0 * (2.0 * std::f64::consts::PI * 5.0 * n as f64 / 128.0).cos();
            assert!((v - want).abs() < 1e-15);
        }
    }

    #[test]
    fn mismatched_grid_is_a_shape_error() {
        let r = response(&FrequencyGrid::paper64(), |_| Complex64::new(1.0, 0.0));
        assert!(matches!(synthesize_transient(&r, GridConvention::Dense512), Err(Error::Shape(_))));
    }

    #[test]
    fn stepoff_division() {
        let grid = FrequencyGrid::custom(vec![0.005, 1.0 / (2.0 * std::f64::consts::PI)]).unwrap();
        let r = response(&grid, |_| Complex64::new(1.0, 0.0));
        let out = stepoff_to_impulse(&r, DEFAULT_STEPOFF_FLOOR).unwrap();
        let v = out.values[0][1];
        assert!(v.re.abs() < 1e-15 && (v.im + 1.0).abs() < 1e-15);
        let floored = out.values[0][0];
        assert!((floored.im + 1.0 / (2.0 * std::f64::consts::PI * 0.01)).abs() < 1e-9);
        assert!(stepoff_to_impulse(&r, 0.0).is_err());
    }

    #[test]
    fn skin_depth_values() {
        assert!((skin_depth(3.0, 0.05) - 1300.0).abs() < 10.0);
        assert!((skin_depth(3.0, 2.0) - 205.0).abs() < 2.0);
        assert!((skin_depth(1.0, 0.2) / skin_depth(1.0, 0.8) - 2.0).abs() < 1e-12);
    }
}
