use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{absorb, AbsorbOptions, Absorbed, FeSpec, Panel};
use crate::error::{Error, Result};
use crate::stats::critical_value;

/// Bartlett-kernel lag truncation for Driscoll–Kraay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bandwidth {
    /// floor(1.5·|h|) + 1 at horizon h: h-step errors are MA(h).
    Auto,
    Fixed(usize),
}

impl Bandwidth {
    pub fn lags(self, horizon: i32) -> usize {
        match self {
            Bandwidth::Auto => (1.5 * horizon.unsigned_abs() as f64).floor() as usize + 1,
            Bandwidth::Fixed(m) => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeEngine {
    DriscollKraay(Bandwidth),
    /// Clustered by unordered country pair.
    ClusterDyad,
    Iid,
}

impl FromStr for SeEngine {
    type Err = Error;
    /// `iid`, `cluster`, `dk` (automatic bandwidth) or `dk:<lags>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "iid" => Ok(SeEngine::Iid),
            "cluster" | "cluster_dyad" => Ok(SeEngine::ClusterDyad),
            "dk" | "driscoll_kraay" => Ok(SeEngine::DriscollKraay(Bandwidth::Auto)),
            other => other
                .strip_prefix("dk:")
                .and_then(|m| m.parse().ok())
                .map(|m| SeEngine::DriscollKraay(Bandwidth::Fixed(m)))
                .ok_or_else(|| Error::validation(format!("unknown standard-error engine `{other}`"))),
        }
    }
}

impl fmt::Display for SeEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeEngine::Iid => f.write_str("iid"),
            SeEngine::ClusterDyad => f.write_str("cluster"),
            SeEngine::DriscollKraay(Bandwidth::Auto) => f.write_str("dk"),
            SeEngine::DriscollKraay(Bandwidth::Fixed(m)) => write!(f, "dk:{m}"),
        }
    }
}

/// Residualized regression inputs with their grouping metadata.
#[derive(Debug, Clone, Copy)]
pub struct WlsInput<'a> {
    pub y: &'a [f64],
    pub x: &'a [Vec<f64>],
    pub names: &'a [String],
    pub weights: Option<&'a [f64]>,
    pub clusters: &'a [u32],
    pub periods: &'a [i32],
    /// Parameters already absorbed, subtracted from the residual dof.
    pub fe_dof: usize,
    /// Horizon used for the automatic Driscoll–Kraay bandwidth.
    pub horizon: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub vcov: DMatrix<f64>,
    pub n_obs: usize,
    /// n − k − absorbed parameters.
    pub dof: usize,
    /// Within R² on the residualized data.
    pub r_squared: f64,
    pub rss: f64,
    pub se_engine: SeEngine,
    pub n_clusters: usize,
    pub n_periods: usize,
    /// Kernel lags actually used by Driscoll–Kraay.
    pub bandwidth: Option<usize>,
    /// Student-t dof for intervals: G−1 (cluster), T−1 (Driscoll–Kraay) or
    /// the residual dof (IID).
    pub inference_dof: f64,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

impl FitResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn se(&self, i: usize) -> f64 {
        self.vcov[(i, i)].max(0.0).sqrt()
    }

    /// Coefficient and standard error by name.
    pub fn coef(&self, name: &str) -> Option<(f64, f64)> {
        self.index(name).map(|i| (self.coefficients[i], self.se(i)))
    }

    pub fn critical(&self, level: f64) -> f64 {
        critical_value(level, Some(self.inference_dof))
    }

    /// Two-sided interval at `level` for coefficient `i`.
    pub fn band(&self, i: usize, level: f64) -> (f64, f64) {
        let half = self.critical(level) * self.se(i);
        (self.coefficients[i] - half, self.coefficients[i] + half)
    }
}

/// Weighted least squares on already-residualized data.
///
/// Columns are checked for collinearity in order; the first column whose
/// component orthogonal to its predecessors is negligible is reported.
pub fn wls(input: &WlsInput, engine: SeEngine) -> Result<FitResult> {
    let n = input.y.len();
    let k = input.x.len();
    check_inputs(input)?;
    let w = |i: usize| input.weights.map_or(1.0, |w| w[i]);
    let (beta, bread) = solve(input.x, input.y, input.names, input.weights)?;
    let resid: Vec<f64> = (0..n)
        .map(|i| input.y[i] - (0..k).map(|j| input.x[j][i] * beta[j]).sum::<f64>())
        .collect();
    let rss: f64 = (0..n).map(|i| w(i) * resid[i] * resid[i]).sum();
    let wsum: f64 = (0..n).map(w).sum();
    let ybar = (0..n).map(|i| w(i) * input.y[i]).sum::<f64>() / wsum;
    let tss: f64 = (0..n).map(|i| w(i) * (input.y[i] - ybar).powi(2)).sum();
    let r_squared = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 0.0 };
    let cov = sandwich(input, input.x, &resid, &bread, engine)?;
    Ok(FitResult {
        names: input.names.to_vec(),
        coefficients: beta,
        vcov: cov.vcov,
        n_obs: n,
        dof: n - k - input.fe_dof,
        r_squared,
        rss,
        se_engine: engine,
        n_clusters: cov.n_clusters,
        n_periods: cov.n_periods,
        bandwidth: cov.bandwidth,
        inference_dof: cov.inference_dof,
    })
}

fn check_inputs(input: &WlsInput) -> Result<()> {
    let n = input.y.len();
    let k = input.x.len();
    if input.names.len() != k {
        return Err(Error::validation("regressor names and columns differ in number"));
    }
    if input.x.iter().any(|c| c.len() != n) || input.clusters.len() != n || input.periods.len() != n {
        return Err(Error::validation("regression inputs are not aligned"));
    }
    if k == 0 {
        return Err(Error::validation("no regressors"));
    }
    if n <= k + input.fe_dof {
        return Err(Error::validation(format!(
            "{n} observations cannot identify {k} coefficients and {} absorbed parameters",
            input.fe_dof
        )));
    }
    Ok(())
}

/// Least-squares coefficients of `y` on the columns `x` and the inverse
/// cross-product (X'WX)⁻¹, via a QR factorization of the weighted design.
pub(crate) fn solve(x: &[Vec<f64>], y: &[f64], names: &[String], weights: Option<&[f64]>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = y.len();
    let k = x.len();
    let sw: Vec<f64> = (0..n).map(|i| weights.map_or(1.0, |w| w[i]).sqrt()).collect();
    let xw = DMatrix::from_fn(n, k, |i, j| x[j][i] * sw[i]);
    let yw = DVector::from_fn(n, |i, _| y[i] * sw[i]);
    let qr = xw.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let norm = xw.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= 1e-10 * norm {
            return Err(Error::RankDeficient(names[j].clone()));
        }
    }
    let qty = qr.q().transpose() * &yw;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Numerical("triangular inverse failed".into()))?;
    Ok((beta.iter().copied().collect(), &r_inv * r_inv.transpose()))
}

pub(crate) struct Covariance {
    pub vcov: DMatrix<f64>,
    pub inference_dof: f64,
    pub bandwidth: Option<usize>,
    pub n_clusters: usize,
    pub n_periods: usize,
}

fn distinct<T: Ord + Copy>(v: &[T]) -> usize {
    let mut c = v.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

/// Covariance of the coefficients for score contributions x_i w_i e_i under
/// the chosen engine. `bread` is (X'WX)⁻¹ for the same `x`.
pub(crate) fn sandwich(input: &WlsInput, x: &[Vec<f64>], resid: &[f64], bread: &DMatrix<f64>, engine: SeEngine) -> Result<Covariance> {
    let n = resid.len();
    let k = x.len();
    let w = |i: usize| input.weights.map_or(1.0, |w| w[i]);
    let grouped = |key: &dyn Fn(usize) -> i64| -> BTreeMap<i64, DVector<f64>> {
        let mut sums: BTreeMap<i64, DVector<f64>> = BTreeMap::new();
        for i in 0..n {
            let s = sums.entry(key(i)).or_insert_with(|| DVector::zeros(k));
            let we = w(i) * resid[i];
            for j in 0..k {
                s[j] += x[j][i] * we;
            }
        }
        sums
    };
    let n_clusters = distinct(input.clusters);
    let n_periods = distinct(input.periods);
    let dof = n - k - input.fe_dof;
    let small_sample = (n as f64 - 1.0) / (n - k) as f64;

    let (vcov, inference_dof, bandwidth) = match engine {
        SeEngine::Iid => {
            let rss: f64 = (0..n).map(|i| w(i) * resid[i] * resid[i]).sum();
            (bread * (rss / dof as f64), dof as f64, None)
        }
        SeEngine::ClusterDyad => {
            if n_clusters < 2 {
                return Err(Error::validation("clustered errors need at least two clusters"));
            }
            let mut meat = DMatrix::zeros(k, k);
            for s in grouped(&|i| input.clusters[i] as i64).values() {
                meat += s * s.transpose();
            }
            let g = n_clusters as f64;
            (bread * meat * bread * (g / (g - 1.0) * small_sample), g - 1.0, None)
        }
        SeEngine::DriscollKraay(bw) => {
            if n_periods < 2 {
                return Err(Error::validation("Driscoll–Kraay errors need at least two periods"));
            }
            let sums = grouped(&|i| input.periods[i] as i64);
            let m = bw.lags(input.horizon);
            let mut omega = DMatrix::zeros(k, k);
            for s in sums.values() {
                omega += s * s.transpose();
            }
            for lag in 1..=m {
                let weight = 1.0 - lag as f64 / (m as f64 + 1.0);
                let mut gamma = DMatrix::zeros(k, k);
                for (t, s) in &sums {
                    if let Some(prev) = sums.get(&(t - lag as i64)) {
                        gamma += s * prev.transpose();
                    }
                }
                omega += (&gamma + gamma.transpose()) * weight;
            }
            let t = n_periods as f64;
            (bread * omega * bread * (t / (t - 1.0) * small_sample), t - 1.0, Some(m))
        }
    };
    // Symmetrize away rounding asymmetry.
    let vcov = (&vcov + vcov.transpose()) * 0.5;
    Ok(Covariance {
        vcov,
        inference_dof,
        bandwidth,
        n_clusters,
        n_periods,
    })
}

/// Rows, outcome and regressors for one regression on a panel.
#[derive(Debug, Clone, Default)]
pub struct Design {
    pub rows: Vec<usize>,
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub weights: Option<Vec<f64>>,
}

impl Design {
    /// Rows where the outcome and every regressor are present.
    pub fn from_columns(panel: &Panel, outcome: &str, regressors: &[&str]) -> Result<Self> {
        let y = panel.column(outcome)?;
        let xs: Vec<&[f64]> = regressors.iter().map(|r| panel.column(r)).collect::<Result<_>>()?;
        let rows: Vec<usize> = (0..panel.len())
            .filter(|&i| !y[i].is_nan() && xs.iter().all(|x| !x[i].is_nan()))
            .collect();
        Ok(Design {
            y: rows.iter().map(|&i| y[i]).collect(),
            x: xs.iter().map(|x| rows.iter().map(|&i| x[i]).collect()).collect(),
            names: regressors.iter().map(|s| s.to_string()).collect(),
            rows,
            weights: None,
        })
    }
}

/// Absorbs `fe` from the outcome and regressors, then runs [`wls`]. A
/// regressor that the fixed effects absorb entirely is reported as
/// rank-deficient.
pub fn fit(
    panel: &Panel,
    design: Design,
    fe: &FeSpec,
    engine: SeEngine,
    horizon: i32,
    opts: &AbsorbOptions,
) -> Result<(FitResult, Absorbed)> {
    let Design { rows, y, x, names, weights } = design;
    let mut cols = Vec::with_capacity(x.len() + 1);
    cols.push(y);
    cols.extend(x);
    let mut a = absorb(panel, &rows, cols, weights, fe, opts)?;
    for (j, name) in names.iter().enumerate() {
        if a.norm_ratio[j + 1] < 1e-9 {
            return Err(Error::RankDeficient(name.clone()));
        }
    }
    let y = std::mem::take(&mut a.columns[0]);
    let clusters: Vec<u32> = a.rows.iter().map(|&r| panel.clusters()[r]).collect();
    let periods: Vec<i32> = a.rows.iter().map(|&r| panel.year(r)).collect();
    let input = WlsInput {
        y: &y,
        x: &a.columns[1..],
        names: &names,
        weights: a.weights.as_deref(),
        clusters: &clusters,
        periods: &periods,
        fe_dof: a.fe_dof,
        horizon,
    };
    let result = wls(&input, engine);
    a.columns[0] = y;
    Ok((result?, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn input<'a>(y: &'a [f64], x: &'a [Vec<f64>], names: &'a [String], cl: &'a [u32], per: &'a [i32]) -> WlsInput<'a> {
        WlsInput { y, x, names, weights: None, clusters: cl, periods: per, fe_dof: 0, horizon: 0 }
    }

    #[test]
    fn exact_fit_every_engine() {
        let x = vec![vec![1.0, -2.0, 3.0, 0.5, -1.5, 2.5]];
        let y: Vec<f64> = x[0].iter().map(|v| 2.0 * v).collect();
        let names = vec!["x".to_string()];
        let cl = [0, 0, 1, 1, 2, 2];
        let per = [1, 2, 1, 2, 1, 2];
        for e in [SeEngine::Iid, SeEngine::ClusterDyad, SeEngine::DriscollKraay(Bandwidth::Auto)] {
            let f = wls(&input(&y, &x, &names, &cl, &per), e).unwrap();
            assert!((f.coefficients[0] - 2.0).abs() < 1e-14);
            assert!(f.rss < 1e-25);
            assert!(f.se(0) < 1e-12);
            assert_eq!(f.r_squared, 1.0);
        }
    }

    #[test]
    fn collinear_column_is_named() {
        let x = vec![vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 4.0, 6.0, 8.0]];
        let y = vec![1.0, 0.0, 1.0, 0.0];
        let names = vec!["a".to_string(), "b".to_string()];
        let cl = [0, 1, 2, 3];
        let per = [0, 0, 1, 1];
        match wls(&input(&y, &x, &names, &cl, &per), SeEngine::Iid) {
            Err(Error::RankDeficient(c)) => assert_eq!(c, "b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_cluster_rejected() {
        let x = vec![vec![1.0, 2.0, 3.0]];
        let y = vec![1.0, 0.0, 1.0];
        let names = vec!["a".to_string()];
        assert!(wls(&input(&y, &x, &names, &[0, 0, 0], &[0, 1, 2]), SeEngine::ClusterDyad).is_err());
    }

    #[test]
    fn iid_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v + rng.sample::<f64, _>(StandardNormal)).collect();
        let names = vec!["x".to_string()];
        let cl: Vec<u32> = (0..n as u32).collect();
        let per = vec![0; n];
        let xs = vec![x.clone()];
        let f = wls(&input(&y, &xs, &names, &cl, &per), SeEngine::Iid).unwrap();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let b = sxy / sxx;
        let rss: f64 = x.iter().zip(&y).map(|(a, c)| (c - b * a).powi(2)).sum();
        assert!((f.coefficients[0] - b).abs() < 1e-12);
        assert!((f.se(0) - (rss / (n - 1) as f64 / sxx).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bandwidth_rule() {
        assert_eq!(Bandwidth::Auto.lags(0), 1);
        assert_eq!(Bandwidth::Auto.lags(3), 5);
        assert_eq!(Bandwidth::Auto.lags(-8), 13);
        assert_eq!(Bandwidth::Fixed(4).lags(20), 4);
        assert_eq!("dk:4".parse::<SeEngine>().unwrap(), SeEngine::DriscollKraay(Bandwidth::Fixed(4)));
    }

    #[test]
    fn driscoll_kraay_zero_lag_is_time_clustering() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 60;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let names = vec!["x".to_string()];
        let per: Vec<i32> = (0..n).map(|i| i % 6).collect();
        let cl: Vec<u32> = per.iter().map(|&p| p as u32).collect();
        let xs = vec![x];
        let dk = wls(&input(&y, &xs, &names, &cl, &per), SeEngine::DriscollKraay(Bandwidth::Fixed(0))).unwrap();
        let cr = wls(&input(&y, &xs, &names, &cl, &per), SeEngine::ClusterDyad).unwrap();
        assert!((dk.vcov[(0, 0)] - cr.vcov[(0, 0)]).abs() < 1e-14);
    }
}
