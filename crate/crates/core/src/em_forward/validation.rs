use super::{
    forward_transient, solve_layered, whole_space_ex, DirectField, EarthModel, FrequencyGrid, LayeredEarth,
    SolverOptions, SurveyGeometry,
};
use crate::Result;

/// The five reference seafloor models used for grid-convention checks:
/// shelf, thin resistor-free, mid-depth, resistive and shallow.
pub fn reference_models() -> Vec<(&'static str, EarthModel)> {
    vec![
        ("A", EarthModel::two_layer(3.2, 0.5, 80.0, 30.0)),
        ("B", EarthModel::two_layer(3.0, 0.05, 100.0, 20.0)),
        ("C", EarthModel::two_layer(2.5, 0.7, 60.0, 40.0)),
        ("D", EarthModel::two_layer(3.5, 0.008, 120.0, 15.0)),
        ("E", EarthModel::two_layer(2.0, 0.25, 90.0, 25.0)),
    ]
}

/// Pearson correlation; zero when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCorrelation {
    pub model: String,
    pub offset: f64,
    pub r: f64,
}

/// Correlation between dense512 and paper64 transients, per model and offset.
pub fn dense_grid_correlations(models: &[(&str, EarthModel)], geom: &SurveyGeometry) -> Result<Vec<GridCorrelation>> {
    let (dense, coarse) = (FrequencyGrid::dense512(), FrequencyGrid::paper64());
    let mut out = Vec::with_capacity(models.len() * geom.offsets.len());
    for (name, m) in models {
        let d = forward_transient(m, geom, &dense)?;
        let c = forward_transient(m, geom, &coarse)?;
        for (j, &offset) in geom.offsets.iter().enumerate() {
            out.push(GridCorrelation { model: name.to_string(), offset, r: pearson(&d.traces[j], &c.traces[j]) });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WholeSpacePoint {
    pub offset: f64,
    pub frequency: f64,
    pub rel_error: f64,
}

/// Compare the layered solver on a contrast-free stack, with the direct
/// wave routed through the Hankel filters, to the closed-form whole-space
/// field. Source at 80 m, receivers at `geom.z_obs`.
pub fn whole_space_check(sigma: f64, geom: &SurveyGeometry, grid: &FrequencyGrid) -> Result<Vec<WholeSpacePoint>> {
    let zs = 80.0;
    let earth = LayeredEarth::new(vec![-5.0e4, 5.0e4], vec![sigma; 3])?;
    let got = solve_layered(&earth, zs, geom, grid.values(), SolverOptions { direct: DirectField::Spectral })?;
    let mut out = Vec::with_capacity(geom.offsets.len() * grid.len());
    for (j, &r) in geom.offsets.iter().enumerate() {
        for (k, &f) in grid.values().iter().enumerate() {
            let want = whole_space_ex(sigma, r, geom.z_obs - zs, f);
            out.push(WholeSpacePoint { offset: r, frequency: f, rel_error: (got[j][k] - want).norm() / want.norm() });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &[-1.0, -2.0, -3.0, -4.0]) + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&a, &[1.0; 4]), 0.0);
    }

    #[test]
    fn whole_space_within_one_percent() {
        let pts = whole_space_check(1.0, &SurveyGeometry::default(), &FrequencyGrid::paper64()).unwrap();
        assert_eq!(pts.len(), 256);
        assert!(pts.iter().all(|p| p.rel_error < 0.01));
    }
}
