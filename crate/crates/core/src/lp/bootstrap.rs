use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{lp_irf, lp_iv, Irf, LpSpec};
use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::stats::quantile;

const RETRIES: usize = 10;

/// Runs `estimate` on `draws` cluster-resampled copies of `panel`.
///
/// Draw `b` uses its own ChaCha8 stream, so results do not depend on thread
/// scheduling. A draw whose resample has fewer than two distinct clusters,
/// or whose estimate fails, is redrawn up to ten times and then recorded as
/// `None`.
pub fn resample_draws<T, F>(panel: &Panel, draws: usize, seed: u64, estimate: F) -> Result<Vec<Option<T>>>
where
    T: Send,
    F: Fn(&Panel) -> Result<T> + Sync,
{
    let g = panel.n_clusters();
    if g < 2 {
        return Err(Error::validation("block bootstrap needs at least two clusters"));
    }
    if draws == 0 {
        return Err(Error::validation("block bootstrap needs at least one draw"));
    }
    Ok((0..draws)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            for _ in 0..=RETRIES {
                let draw: Vec<u32> = (0..g).map(|_| rng.random_range(0..g as u32)).collect();
                if draw.iter().all(|&c| c == draw[0]) {
                    continue;
                }
                match estimate(&panel.resample_clusters(&draw)) {
                    Ok(t) => return Some(t),
                    Err(e) => warn!("bootstrap draw {b}: {e}; redrawing"),
                }
            }
            None
        })
        .collect())
}

/// Percentile bands from a dyad block bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapBands {
    pub horizons: Vec<i32>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    /// Successful draws contributing at each horizon.
    pub n_draws: Vec<usize>,
    pub failed: usize,
    pub seed: u64,
}

/// 2.5/97.5 percentile bands for the projection in `spec` (IV when it lists
/// instruments), re-running absorption on every draw.
pub fn block_bootstrap(panel: &Panel, spec: &LpSpec, draws: usize, seed: u64) -> Result<BootstrapBands> {
    let estimate = |p: &Panel| -> Result<Irf> {
        if spec.instruments.is_empty() { lp_irf(p, spec) } else { lp_iv(p, spec) }
    };
    let results = resample_draws(panel, draws, seed, estimate)?;
    let failed = results.iter().filter(|r| r.is_none()).count();
    let ok: Vec<Irf> = results.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::validation(format!("all {draws} bootstrap draws failed")));
    }
    let mut out = BootstrapBands {
        horizons: Vec::new(),
        low: Vec::new(),
        high: Vec::new(),
        n_draws: Vec::new(),
        failed,
        seed,
    };
    for h in spec.h_min..=spec.h_max {
        let values: Vec<f64> = ok.iter().filter_map(|irf| irf.beta_at(h)).collect();
        if values.is_empty() {
            continue;
        }
        out.horizons.push(h);
        out.low.push(quantile(&values, 0.025));
        out.high.push(quantile(&values, 0.975));
        out.n_draws.push(values.len());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::estimate::tests::toy_panel;
    use crate::panel::{FeKey, FeSpec};

    fn panel() -> Panel {
        let f = |p: usize, t: i32| ((p * 7 + t as usize * 13) % 11) as f64 - 5.0;
        let g = |p: usize, t: i32| ((p * 3 + t as usize * 5) % 7) as f64 + 0.1 * f(p, t);
        toy_panel(4, 10, &[("y", &g), ("s", &f)])
    }

    fn spec() -> LpSpec {
        LpSpec::new("y", "s").horizons(0, 1).lags(1).fe(FeSpec::new(vec![FeKey::Dyad]).unwrap())
    }

    #[test]
    fn single_draw_collapses_band() {
        let b = block_bootstrap(&panel(), &spec(), 1, 7).unwrap();
        assert_eq!(b.low, b.high);
        assert_eq!(b.n_draws, vec![1, 1]);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let a = block_bootstrap(&panel(), &spec(), 20, 42).unwrap();
        let b = block_bootstrap(&panel(), &spec(), 20, 42).unwrap();
        assert_eq!(a, b);
        let c = block_bootstrap(&panel(), &spec(), 20, 43).unwrap();
        assert_ne!(a.low, c.low);
    }

    #[test]
    fn needs_two_clusters() {
        let p = toy_panel(2, 10, &[("y", &|_, t| t as f64), ("s", &|_, t| (t * t) as f64)]);
        assert_eq!(p.n_clusters(), 1);
        assert!(block_bootstrap(&p, &spec(), 5, 1).is_err());
        assert!(block_bootstrap(&panel(), &spec(), 0, 1).is_err());
    }
}
