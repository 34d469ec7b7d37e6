//! Descriptive statistics and critical values.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use crate::error::{Error, Result};

/// Linear-interpolation sample quantile (Hyndman–Fan type 7) of unsorted data.
/// Returns NaN for empty input.
pub fn quantile(data: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = data.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn mean(data: &[f64]) -> f64 {
    data.iter().sum::<f64>() / data.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than 2 values.
pub fn std_dev(data: &[f64]) -> f64 {
    let n = data.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(data);
    (data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Adjusted Fisher–Pearson skewness G1 = g1·√(n(n−1))/(n−2). Zero when
/// undefined (n < 3 or no dispersion).
pub fn skewness(data: &[f64]) -> f64 {
    let n = data.len() as f64;
    if data.len() < 3 {
        return 0.0;
    }
    let m = mean(data);
    let m2 = data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = data.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return 0.0;
    }
    let g1 = m3 / m2.powf(1.5);
    g1 * (n * (n - 1.0)).sqrt() / (n - 2.0)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Two-sided critical value at `level` (e.g. 0.95): Student-t with `dof`
/// degrees of freedom, or the normal when `dof` is `None`.
pub fn critical_value(level: f64, dof: Option<f64>) -> f64 {
    let p = 0.5 + level / 2.0;
    match dof {
        Some(df) if df.is_finite() && df > 0.0 => StudentsT::new(0.0, 1.0, df)
            .expect("valid t parameters")
            .inverse_cdf(p),
        _ => Normal::standard().inverse_cdf(p),
    }
}

/// Wald statistic for H₀: Rb = 0 divided by the number of restrictions,
/// with its p-value under F(q, dof).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WaldTest {
    pub f: f64,
    pub q: usize,
    pub dof: f64,
    pub p_value: f64,
}

pub fn wald_test(r: &DMatrix<f64>, b: &[f64], vcov: &DMatrix<f64>, dof: f64) -> Result<WaldTest> {
    let q = r.nrows();
    if q == 0 || r.ncols() != b.len() || vcov.shape() != (b.len(), b.len()) {
        return Err(Error::validation("Wald restriction has inconsistent dimensions"));
    }
    let rb = r * DVector::from_column_slice(b);
    let inv = (r * vcov * r.transpose())
        .try_inverse()
        .ok_or_else(|| Error::Numerical("restricted covariance is singular".into()))?;
    let f = (rb.transpose() * inv * &rb)[(0, 0)] / q as f64;
    if !f.is_finite() {
        return Err(Error::Numerical("Wald statistic is not finite".into()));
    }
    let p_value = if dof.is_finite() && dof > 0.0 {
        1.0 - FisherSnedecor::new(q as f64, dof).expect("positive dof").cdf(f.max(0.0))
    } else {
        f64::NAN
    };
    Ok(WaldTest { f, q, dof, p_value })
}
