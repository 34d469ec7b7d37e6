use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeKey, FeSpec, Panel};
use crate::country::CountryCode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbsorbOptions {
    /// Stop once a full sweep moves no value by more than this.
    pub tol: f64,
    pub max_sweeps: usize,
    pub drop_singletons: bool,
    /// Irons–Tuck extrapolation every second sweep.
    pub accelerate: bool,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        AbsorbOptions {
            tol: 1e-8,
            max_sweeps: 10_000,
            drop_singletons: true,
            accelerate: true,
        }
    }
}

/// Dense group ids per fixed-effect dimension for a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeIndex {
    groups: Vec<Vec<u32>>,
    n_groups: Vec<usize>,
    constant: Vec<bool>,
}

fn code_bits(c: CountryCode) -> u64 {
    c.as_str().bytes().fold(0u64, |acc, b| (acc << 8) | b as u64)
}

fn relabel(raw: impl Iterator<Item = u64>) -> (Vec<u32>, usize) {
    let mut ids: HashMap<u64, u32> = HashMap::new();
    let out: Vec<u32> = raw
        .map(|k| {
            let next = ids.len() as u32;
            *ids.entry(k).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

impl FeIndex {
    pub fn new(panel: &Panel, rows: &[usize], fe: &FeSpec) -> Self {
        let mut dims = Vec::new();
        for &key in fe.keys() {
            let raw = rows.iter().map(|&r| {
                let (o, d, y) = (panel.origin(r), panel.dest(r), panel.year(r) as u32 as u64);
                match key {
                    FeKey::OriginYear => (code_bits(o) << 32) | y,
                    FeKey::DestYear => (code_bits(d) << 32) | y,
                    FeKey::Dyad => panel.unit(r) as u64,
                    FeKey::Origin => code_bits(o),
                    FeKey::Dest => code_bits(d),
                    FeKey::Year => y,
                    FeKey::Constant => 0,
                }
            });
            dims.push((relabel(raw), key == FeKey::Constant));
        }
        FeIndex {
            n_groups: dims.iter().map(|((_, n), _)| *n).collect(),
            constant: dims.iter().map(|(_, c)| *c).collect(),
            groups: dims.into_iter().map(|((g, _), _)| g).collect(),
        }
    }

    /// Builds an index from arbitrary per-dimension labels.
    pub fn from_labels(dims: &[Vec<u64>]) -> Self {
        let relabeled: Vec<(Vec<u32>, usize)> = dims.iter().map(|d| relabel(d.iter().copied())).collect();
        FeIndex {
            n_groups: relabeled.iter().map(|(_, n)| *n).collect(),
            constant: relabeled.iter().map(|(_, n)| *n == 1).collect(),
            groups: relabeled.into_iter().map(|(g, _)| g).collect(),
        }
    }

    pub fn n_obs(&self) -> usize {
        self.groups.first().map_or(0, Vec::len)
    }

    pub fn n_dims(&self) -> usize {
        self.groups.len()
    }

    pub fn n_groups(&self) -> &[usize] {
        &self.n_groups
    }

    pub fn groups(&self, dim: usize) -> &[u32] {
        &self.groups[dim]
    }

    fn subset(&self, keep: &[usize]) -> FeIndex {
        let relabeled: Vec<(Vec<u32>, usize)> = self
            .groups
            .iter()
            .map(|g| relabel(keep.iter().map(|&i| g[i] as u64)))
            .collect();
        FeIndex {
            n_groups: relabeled.iter().map(|(_, n)| *n).collect(),
            constant: self.constant.clone(),
            groups: relabeled.into_iter().map(|(g, _)| g).collect(),
        }
    }

    /// Positions that survive iterative removal of observations alone in
    /// their group in any non-constant dimension.
    fn non_singletons(&self) -> Vec<usize> {
        let mut alive = vec![true; self.n_obs()];
        loop {
            let mut removed = false;
            for (dim, g) in self.groups.iter().enumerate() {
                if self.constant[dim] {
                    continue;
                }
                let mut count = vec![0u32; self.n_groups[dim]];
                for (i, &gi) in g.iter().enumerate() {
                    if alive[i] {
                        count[gi as usize] += 1;
                    }
                }
                for (i, &gi) in g.iter().enumerate() {
                    if alive[i] && count[gi as usize] == 1 {
                        alive[i] = false;
                        removed = true;
                    }
                }
            }
            if !removed {
                break;
            }
        }
        (0..alive.len()).filter(|&i| alive[i]).collect()
    }

    /// Number of absorbed parameters: total levels minus redundancies. The
    /// first dimension is taken as free; each further dimension loses one
    /// level per connected component it forms with the first. Exact for two
    /// dimensions, a lower bound on redundancy beyond.
    pub fn absorbed_dof(&self) -> usize {
        let total: usize = self.n_groups.iter().sum();
        let mut redundant = 0;
        for k in 1..self.n_dims() {
            let n0 = self.n_groups[0];
            let mut parent: Vec<usize> = (0..n0 + self.n_groups[k]).collect();
            fn root(p: &mut [usize], mut i: usize) -> usize {
                while p[i] != i {
                    p[i] = p[p[i]];
                    i = p[i];
                }
                i
            }
            for (a, b) in self.groups[0].iter().zip(&self.groups[k]) {
                let (ra, rb) = (root(&mut parent, *a as usize), root(&mut parent, n0 + *b as usize));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
            redundant += (0..parent.len()).filter(|&i| root(&mut parent, i) == i).count();
        }
        total - redundant
    }

    /// Weight totals per group and dimension.
    fn group_weights(&self, w: Option<&[f64]>) -> Vec<Vec<f64>> {
        self.groups
            .iter()
            .zip(&self.n_groups)
            .map(|(g, &n)| {
                let mut tot = vec![0.0; n];
                for (i, &gi) in g.iter().enumerate() {
                    tot[gi as usize] += w.map_or(1.0, |w| w[i]);
                }
                tot
            })
            .collect()
    }

    /// One Gauss–Seidel sweep of group-mean subtraction. Returns the largest
    /// absolute change applied to any element.
    fn sweep(&self, x: &mut [f64], w: Option<&[f64]>, gw: &[Vec<f64>], sums: &mut Vec<f64>) -> f64 {
        let mut change: f64 = 0.0;
        for (dim, g) in self.groups.iter().enumerate() {
            sums.clear();
            sums.resize(self.n_groups[dim], 0.0);
            match w {
                Some(w) => g.iter().zip(x.iter()).zip(w).for_each(|((&gi, &xi), &wi)| sums[gi as usize] += wi * xi),
                None => g.iter().zip(x.iter()).for_each(|(&gi, &xi)| sums[gi as usize] += xi),
            }
            for (s, &t) in sums.iter_mut().zip(&gw[dim]) {
                *s = if t > 0.0 { *s / t } else { 0.0 };
                change = change.max(s.abs());
            }
            for (xi, &gi) in x.iter_mut().zip(g) {
                *xi -= sums[gi as usize];
            }
        }
        change
    }

    /// Residualizes `x` in place against all dimensions. Returns sweeps used
    /// and the last sweep's change.
    pub fn demean(&self, x: &mut [f64], w: Option<&[f64]>, opts: &AbsorbOptions) -> Result<(usize, f64)> {
        let gw = self.group_weights(w);
        self.demean_with(x, w, &gw, opts)
    }

    fn demean_with(&self, x: &mut [f64], w: Option<&[f64]>, gw: &[Vec<f64>], opts: &AbsorbOptions) -> Result<(usize, f64)> {
        let mut sums = Vec::new();
        let mut sweeps = 0;
        let mut change = f64::INFINITY;
        // A single dimension converges in one sweep.
        if self.n_dims() == 1 {
            change = self.sweep(x, w, gw, &mut sums);
            return Ok((1, change));
        }
        let mut prev = x.to_vec();
        let mut mid = vec![0.0; x.len()];
        while sweeps < opts.max_sweeps {
            prev.copy_from_slice(x);
            change = self.sweep(x, w, gw, &mut sums);
            sweeps += 1;
            if change < opts.tol {
                return Ok((sweeps, change));
            }
            if !opts.accelerate || sweeps >= opts.max_sweeps {
                continue;
            }
            mid.copy_from_slice(x);
            change = self.sweep(x, w, gw, &mut sums);
            sweeps += 1;
            if change < opts.tol {
                return Ok((sweeps, change));
            }
            // prev = v, mid = F(v), x = F(F(v)).
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..x.len() {
                let d1 = x[i] - mid[i];
                let d2 = d1 - (mid[i] - prev[i]);
                num += d1 * d2;
                den += d2 * d2;
            }
            if den > 0.0 && (num / den).is_finite() {
                let coef = num / den;
                for i in 0..x.len() {
                    x[i] -= coef * (x[i] - mid[i]);
                }
            }
        }
        Err(Error::NonConvergence {
            context: "fixed-effect absorption".into(),
            iterations: sweeps,
            residual: change,
        })
    }
}

/// Residualized columns on the rows that survive singleton removal.
#[derive(Debug, Clone)]
pub struct Absorbed {
    /// Panel rows retained, a subsequence of the input rows.
    pub rows: Vec<usize>,
    /// Positions of the retained rows within the input rows.
    pub positions: Vec<usize>,
    pub columns: Vec<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    /// Residual norm over original norm, per column. Near zero means the
    /// column lies in the fixed-effect span.
    pub norm_ratio: Vec<f64>,
    pub sweeps: usize,
    pub max_change: f64,
    pub singletons_dropped: usize,
    pub fe_dof: usize,
    pub index: FeIndex,
}

/// Absorbs the fixed effects in `fe` from each column. `columns` and
/// `weights` are aligned with `rows`. Columns are processed in parallel.
pub fn absorb(
    panel: &Panel,
    rows: &[usize],
    columns: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
    fe: &FeSpec,
    opts: &AbsorbOptions,
) -> Result<Absorbed> {
    if rows.is_empty() {
        return Err(Error::validation("empty estimation sample"));
    }
    for c in &columns {
        if c.len() != rows.len() {
            return Err(Error::validation("column length differs from row count"));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("absorbed columns must be finite"));
        }
    }
    if let Some(w) = &weights {
        if w.len() != rows.len() || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::validation("weights must be positive and aligned with rows"));
        }
    }
    let full = FeIndex::new(panel, rows, fe);
    let positions: Vec<usize> = if opts.drop_singletons {
        full.non_singletons()
    } else {
        (0..rows.len()).collect()
    };
    if positions.is_empty() {
        return Err(Error::validation("every observation is a singleton in some fixed effect"));
    }
    let index = if positions.len() == rows.len() { full } else { full.subset(&positions) };
    let pick = |v: &Vec<f64>| -> Vec<f64> { positions.iter().map(|&i| v[i]).collect() };
    let weights = weights.as_ref().map(pick);
    let mut columns: Vec<Vec<f64>> = columns.iter().map(pick).collect();
    let norms: Vec<f64> = columns.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();

    let gw = index.group_weights(weights.as_deref());
    let stats: Vec<(usize, f64)> = columns
        .par_iter_mut()
        .map(|c| index.demean_with(c, weights.as_deref(), &gw, opts))
        .collect::<Result<_>>()?;

    let norm_ratio = columns
        .iter()
        .zip(&norms)
        .map(|(c, &n0)| {
            let n1 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n0 > 0.0 { n1 / n0 } else { 0.0 }
        })
        .collect();
    Ok(Absorbed {
        rows: positions.iter().map(|&i| rows[i]).collect(),
        singletons_dropped: rows.len() - positions.len(),
        positions,
        columns,
        weights,
        norm_ratio,
        sweeps: stats.iter().map(|s| s.0).max().unwrap_or(0),
        max_change: stats.iter().map(|s| s.1).fold(0.0, f64::max),
        fe_dof: index.absorbed_dof(),
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn grid_panel(n: usize, years: i32) -> Panel {
        let codes: Vec<CountryCode> = CountryCode::majors().into_iter().take(n).collect();
        let mut keys = Vec::new();
        for &o in &codes {
            for &d in &codes {
                if o != d {
                    for y in 0..years {
                        keys.push((o, d, 2000 + y));
                    }
                }
            }
        }
        Panel::from_rows(keys, BTreeMap::new()).unwrap()
    }

    #[test]
    fn single_group_is_grand_mean() {
        let p = grid_panel(3, 2);
        let rows: Vec<usize> = (0..p.len()).collect();
        let x: Vec<f64> = (0..p.len()).map(|i| (i * i) as f64).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let a = absorb(&p, &rows, vec![x.clone()], None, &FeSpec::intercept(), &AbsorbOptions::default()).unwrap();
        for (r, v) in a.columns[0].iter().zip(&x) {
            assert!((r - (v - mean)).abs() < 1e-12);
        }
        assert_eq!(a.fe_dof, 1);
    }

    #[test]
    fn constant_within_groups_vanishes() {
        let p = grid_panel(4, 3);
        let rows: Vec<usize> = (0..p.len()).collect();
        let x: Vec<f64> = rows.iter().map(|&r| p.year(r) as f64 * 1.5 + code_bits(p.origin(r)) as f64 * 1e-6).collect();
        let fe = FeSpec::new(vec![FeKey::OriginYear]).unwrap();
        let a = absorb(&p, &rows, vec![x], None, &fe, &AbsorbOptions::default()).unwrap();
        assert!(a.columns[0].iter().all(|v| v.abs() < 1e-9));
        assert!(a.norm_ratio[0] < 1e-12);
    }

    #[test]
    fn singletons_dropped_iteratively() {
        // Dyad FE with one-year units: every observation is a singleton.
        let p = grid_panel(3, 1);
        let rows: Vec<usize> = (0..p.len()).collect();
        let x = vec![1.0; p.len()];
        let fe = FeSpec::new(vec![FeKey::Dyad]).unwrap();
        assert!(absorb(&p, &rows, vec![x], None, &fe, &AbsorbOptions::default()).is_err());

        let p = grid_panel(4, 3);
        let rows: Vec<usize> = (0..p.len() - 2).collect();
        let x = vec![1.0; rows.len()];
        let a = absorb(&p, &rows, vec![x], None, &FeSpec::triple(), &AbsorbOptions::default()).unwrap();
        assert!(a.singletons_dropped > 0);
        assert_eq!(a.rows.len() + a.singletons_dropped, rows.len());
    }

    #[test]
    fn two_way_dof_counts_components() {
        // Balanced origin × year: 3 + 2 levels, one redundancy.
        let idx = FeIndex::from_labels(&[vec![0, 0, 1, 1, 2, 2], vec![0, 1, 0, 1, 0, 1]]);
        assert_eq!(idx.absorbed_dof(), 4);
        // Two disconnected blocks: two redundancies.
        let idx = FeIndex::from_labels(&[vec![0, 0, 1, 1], vec![0, 0, 1, 1]]);
        assert_eq!(idx.absorbed_dof(), 2);
    }

    #[test]
    fn idempotent_and_orthogonal() {
        let p = grid_panel(5, 6);
        let rows: Vec<usize> = (0..p.len()).collect();
        let x: Vec<f64> = (0..p.len()).map(|i| ((i * 7919) % 101) as f64 / 10.0).collect();
        let opts = AbsorbOptions::default();
        let a = absorb(&p, &rows, vec![x], None, &FeSpec::triple(), &opts).unwrap();
        let b = absorb(&p, &a.rows, a.columns.clone(), None, &FeSpec::triple(), &opts).unwrap();
        for (u, v) in a.columns[0].iter().zip(&b.columns[0]) {
            assert!((u - v).abs() < opts.tol);
        }
        for dim in 0..a.index.n_dims() {
            let g = a.index.groups(dim);
            let mut sum = vec![0.0; a.index.n_groups()[dim]];
            let mut cnt = vec![0.0; a.index.n_groups()[dim]];
            for (i, &gi) in g.iter().enumerate() {
                sum[gi as usize] += a.columns[0][i];
                cnt[gi as usize] += 1.0;
            }
            for (s, c) in sum.iter().zip(&cnt) {
                assert!((s / c).abs() < 10.0 * opts.tol);
            }
        }
    }
}
