use num_complex::Complex64;

use super::MU0;

/// Inline `E_x` of a unit x-directed dipole in a uniform whole space at
/// horizontal separation `dx` and vertical separation `dz` (receiver minus
/// source). `freq = 0` gives the DC field.
pub fn whole_space_ex(sigma: f64, dx: f64, dz: f64, freq: f64) -> Complex64 {
    let r2 = dx * dx + dz * dz;
    let r = r2.sqrt();
    let gamma = Complex64::new(0.0, 2.0 * std::f64::consts::PI * freq * MU0 * sigma).sqrt();
    let gr = gamma * r;
    let gr2 = gr * gr;
    let pre = (-gr).exp() / (4.0 * std::f64::consts::PI * sigma * r2 * r);
    pre * ((dx * dx / r2) * (gr2 + 3.0 * gr + 3.0) - (1.0 + gr + gr2))
}

/// Analytic inline field of a unit dipole in a uniform whole space with the
/// receiver on the dipole axis. At `freq = 0` this is `1/(2π σ r³)`.
///
/// # Panics
/// If `sigma` or `offset` is not positive, or `freq` is negative.
pub fn whole_space_reference(sigma: f64, offset: f64, freq: f64) -> Complex64 {
    assert!(sigma > 0.0 && offset > 0.0 && freq >= 0.0, "whole_space_reference: invalid arguments");
    whole_space_ex(sigma, offset, 0.0, freq)
}
