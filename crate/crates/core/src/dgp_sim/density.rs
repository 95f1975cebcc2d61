//! Gaussian kernel density of standardised estimates and a Kolmogorov
//! distance to the standard normal.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Number of evaluation points.
pub const DENSITY_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// `0.9 min(sd, IQR/1.34) m^(-1/5)`
    #[default]
    Silverman,
    /// `1.06 sd m^(-1/5)`
    Scott,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelDensity {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KernelDensity {
    /// Trapezoid-rule integral over the grid.
    pub fn integral(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(v - center) / sd` with `sd` the sample standard deviation of `values`.
pub fn standardize(values: &[f64], center: f64) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::TooFewEstimates {
            needed: 2,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite estimate".into()));
    }
    let (_, sd) = mean_sd(values);
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(values.iter().map(|v| (v - center) / sd).collect())
}

/// Density of `(v - center) / sd` on [`DENSITY_POINTS`] equally spaced
/// points covering at least four standard deviations either side of the
/// standardised mean, widened so every kernel is captured to four bandwidths.
pub fn kernel_density(values: &[f64], center: f64, rule: Bandwidth) -> Result<KernelDensity> {
    let z = standardize(values, center)?;
    let m = z.len() as f64;
    let mut sorted = z.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let (mean_z, sd_z) = mean_sd(&z);
    let h = match rule {
        Bandwidth::Silverman => {
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            let spread = if iqr > 0.0 { sd_z.min(iqr / 1.34) } else { sd_z };
            0.9 * spread * m.powf(-0.2)
        }
        Bandwidth::Scott => 1.06 * sd_z * m.powf(-0.2),
        Bandwidth::Fixed(h) => h,
    };
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive")));
    }
    let lo = (mean_z - 4.0).min(sorted[0] - 4.0 * h);
    let hi = (mean_z + 4.0).max(sorted[sorted.len() - 1] + 4.0 * h);
    let step = (hi - lo) / (DENSITY_POINTS - 1) as f64;
    let norm = 1.0 / (m * h * (2.0 * std::f64::consts::PI).sqrt());
    let x: Vec<f64> = (0..DENSITY_POINTS).map(|i| lo + step * i as f64).collect();
    let density = x
        .iter()
        .map(|&xi| {
            norm * z
                .iter()
                .map(|&zj| {
                    let u = (xi - zj) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(KernelDensity {
        x,
        density,
        bandwidth: h,
    })
}

/// `sup_x |F_m(x) - Phi(x)|` for the empirical distribution of `z`.
pub fn kolmogorov_distance_normal(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::EmptyInput);
    }
    let phi = Normal::standard();
    let mut sorted = z.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let m = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = phi.cdf(v);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn normal_draws_match_normal_density() {
        let z = normals(10_000, 11);
        let kd = kernel_density(&z, 0.0, Bandwidth::Silverman).unwrap();
        assert_eq!(kd.x.len(), DENSITY_POINTS);
        assert!(kd.x[0] <= -4.0 && kd.x[DENSITY_POINTS - 1] >= 4.0);
        let sup =
            kd.x.iter()
                .zip(&kd.density)
                .map(|(x, d)| (d - (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs())
                .fold(0.0, f64::max);
        assert!(sup <= 0.02, "{sup}");
    }

    #[test]
    fn density_integrates_to_one() {
        for (rule, seed) in [
            (Bandwidth::Silverman, 1),
            (Bandwidth::Scott, 2),
            (Bandwidth::Fixed(0.05), 3),
        ] {
            let z = normals(500, seed);
            let kd = kernel_density(&z, 0.3, rule).unwrap();
            assert!((kd.integral() - 1.0).abs() <= 1e-3, "{rule:?} {}", kd.integral());
        }
        // skewed input with an outlier
        let mut v = normals(200, 4);
        v.push(40.0);
        let kd = kernel_density(&v, 0.0, Bandwidth::Silverman).unwrap();
        assert!((kd.integral() - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn degenerate_input_is_rejected() {
        assert!(matches!(
            kernel_density(&[2.0, 2.0], 2.0, Bandwidth::Silverman),
            Err(Error::ZeroVariance)
        ));
        assert!(kernel_density(&[2.0], 2.0, Bandwidth::Silverman).is_err());
    }

    #[test]
    fn kolmogorov_distance() {
        let d = kolmogorov_distance_normal(&normals(10_000, 5)).unwrap();
        assert!(d < 0.02, "{d}");
        // a single point at 0 is half a unit from Phi on each side
        assert!((kolmogorov_distance_normal(&[0.0]).unwrap() - 0.5).abs() < 1e-15);
        let shifted: Vec<f64> = normals(10_000, 6).iter().map(|v| v + 1.0).collect();
        assert!(kolmogorov_distance_normal(&shifted).unwrap() > 0.3);
    }
}
