//! Acceptance suite. Each test prints one PASS/FAIL line for its criterion;
//! run with `cargo test --release --test acceptance -- --nocapture` to see
//! them.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use geotrade::country::CountryCode;
use geotrade::decomposition::{
    decompose_costs, head_ries_unobserved, run_counterfactuals, welfare_distribution, Annualization,
    CounterfactualSuite, Scenario, ScenarioResult,
};
use geotrade::equilibrium::{calibrate, matrices_from_tables, solve_hats, HatShock, SolverOptions};
use geotrade::events::{score_events, CameoQuad, EconomicType, EventRecord};
use geotrade::lp::{lp_irf, Irf, IrfKind, LpSpec};
use geotrade::panel::{
    build_panel, fit, AbsorbOptions, Bandwidth, Design, FeKey, FeSpec, Panel, PanelInputs, SampleSpec, SeEngine,
};
use geotrade::shocks::{decompose, transitory_weights, DecomposedIrf};
use geotrade::synthworld::{country_codes, generate_world, level_solve, LevelPrimitives, TradeMode, WorldConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn report(id: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    println!("criterion {id:>2} {}: {name} ({})", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    assert!(pass, "criterion {id} failed: {name} ({})", detail.as_ref());
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn event(a: CountryCode, b: CountryCode, year: i32, goldstein: f64) -> EventRecord {
    EventRecord {
        origin: a,
        partner: b,
        year,
        cameo_root: 1,
        cameo_quad: CameoQuad::for_root(1).unwrap(),
        goldstein,
        economic: EconomicType::NotEconomic,
        description: None,
    }
}

#[test]
fn criterion_01_score_engine() {
    let start = Instant::now();
    let (a, b) = (CountryCode::new("USA").unwrap(), CountryCode::new("RUS").unwrap());

    // Six events averaging −25/60; then {+5, −5} followed by a single +10.
    let six: Vec<_> = [-7.0, -8.0, -6.5, 6.0, -5.0, -4.5].iter().map(|&g| event(a, b, 2024, g)).collect();
    let s6 = score_events(&six, 0.3, None).unwrap();
    let two = vec![event(a, b, 1, 5.0), event(b, a, 1, -5.0), event(a, b, 2, 10.0)];
    let s2 = score_events(&two, 0.3, None).unwrap();
    let hand_ok = (s6[0].raw[0].unwrap() + 25.0 / 60.0).abs() < 1e-12
        && s2[0].dynamic[0].abs() < 1e-12
        && (s2[0].dynamic[1] - 1.0 / 2.4).abs() < 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let countries = country_codes(6);
    let (mut bounded, mut carried, mut recursion) = (true, true, true);
    for _ in 0..1000 {
        let delta = rng.random_range(0.05..=1.0);
        let mut events = Vec::new();
        for y in 0..rng.random_range(1..30) {
            if rng.random_bool(0.3) {
                continue;
            }
            for _ in 0..rng.random_range(1..6) {
                let o = rng.random_range(0..3);
                let d = (o + rng.random_range(1..3)) % 3;
                events.push(event(countries[o], countries[d], 1990 + y, rng.random_range(-10.0..=10.0)));
            }
        }
        if events.is_empty() {
            continue;
        }
        for s in score_events(&events, delta, None).unwrap() {
            // Independent evaluation of the depreciation recursion.
            let (mut n, mut level) = (0.0_f64, 0.0_f64);
            for i in 0..s.len() {
                let year = s.first_year + i as i32;
                let gs: Vec<f64> = events
                    .iter()
                    .filter(|e| e.year == year && s.dyad.contains(e.origin) && s.dyad.contains(e.partner))
                    .map(|e| e.goldstein)
                    .collect();
                let d = &s.dynamic[i];
                bounded &= (-1.0..=1.0).contains(d) && s.raw[i].is_none_or(|r| (-1.0..=1.0).contains(&r));
                if gs.is_empty() {
                    n *= 1.0 - delta;
                    carried &= i == 0 || *d == s.dynamic[i - 1];
                } else {
                    let k = gs.len() as f64;
                    let annual = gs.iter().sum::<f64>() / (10.0 * k);
                    n = (1.0 - delta) * n + k;
                    let phi = k / n;
                    level = (1.0 - phi) * level + phi * annual;
                }
                recursion &= (level - d).abs() < 1e-12;
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "score bounds, carry-forward and hand examples",
        hand_ok && bounded && carried && recursion && elapsed < Duration::from_secs(5),
        format!("hand {hand_ok}, bounded {bounded}, carried {carried}, recursion {recursion}, {elapsed:.2?}"),
    );
}

/// Dense least squares with one dummy per fixed-effect level.
fn dummy_ols(panel: &Panel, y: &str, xs: &[&str]) -> Vec<f64> {
    let n = panel.len();
    let mut groups: Vec<HashMap<(String, i32), usize>> = vec![HashMap::new(); 3];
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let (o, d, t) = (panel.origin(r).to_string(), panel.dest(r).to_string(), panel.year(r));
        let keys = [(o.clone(), t), (d.clone(), t), (format!("{o}>{d}"), 0)];
        let mut ids = [0; 3];
        for (k, key) in keys.into_iter().enumerate() {
            let next = groups[k].len();
            ids[k] = *groups[k].entry(key).or_insert(next);
        }
        labels.push(ids);
    }
    let offsets = [xs.len(), xs.len() + groups[0].len(), xs.len() + groups[0].len() + groups[1].len()];
    let cols = offsets[2] + groups[2].len();
    let mut x = DMatrix::zeros(n, cols);
    for r in 0..n {
        for (j, name) in xs.iter().enumerate() {
            x[(r, j)] = panel.column(name).unwrap()[r];
        }
        for k in 0..3 {
            x[(r, offsets[k] + labels[r][k])] = 1.0;
        }
    }
    let yv = DVector::from_column_slice(panel.column(y).unwrap());
    let beta = x.svd(true, true).solve(&yv, 1e-9).unwrap();
    beta.iter().take(xs.len()).copied().collect()
}

#[test]
fn criterion_02_absorption_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    let mut max_rows = 0;
    for _ in 0..50 {
        let countries = country_codes(rng.random_range(5..=7));
        let years = rng.random_range(4..=8);
        let mut keys = Vec::new();
        let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let fe_o: Vec<f64> = (0..120).map(|_| normal(&mut rng)).collect();
        for (i, &o) in countries.iter().enumerate() {
            for (j, &d) in countries.iter().enumerate() {
                if i == j {
                    continue;
                }
                let pair = normal(&mut rng);
                for t in 0..years {
                    if rng.random_bool(0.15) {
                        continue;
                    }
                    let (x1, x2) = (normal(&mut rng), normal(&mut rng) + 0.5 * pair);
                    let y = 0.7 * x1 - 0.3 * x2 + pair + fe_o[i * 8 + t] - fe_o[60 + j * 8 + t] + 0.5 * normal(&mut rng);
                    keys.push((o, d, 2000 + t as i32));
                    for (c, v) in [("x1", x1), ("x2", x2), ("y", y)] {
                        cols.entry(c.into()).or_default().push(v);
                    }
                }
            }
        }
        max_rows = max_rows.max(keys.len());
        let panel = Panel::from_rows(keys, cols).unwrap();
        let opts = AbsorbOptions { tol: 1e-13, ..AbsorbOptions::default() };
        let design = Design::from_columns(&panel, "y", &["x1", "x2"]).unwrap();
        let (res, _) = fit(&panel, design, &FeSpec::triple(), SeEngine::Iid, 0, &opts).unwrap();
        let oracle = dummy_ols(&panel, "y", &["x1", "x2"]);
        for k in 0..2 {
            worst = worst.max((res.coefficients[k] - oracle[k]).abs());
        }
    }
    let elapsed = start.elapsed();
    report(
        2,
        "absorbed regression equals dummy-variable least squares",
        worst < 1e-6 && max_rows <= 500 && elapsed < Duration::from_secs(30),
        format!("max |diff| {worst:.2e}, largest panel {max_rows} rows, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_03_lp_recovery() {
    let start = Instant::now();
    let (mut covered, mut total, mut false_pos, mut pre) = (0, 0, 0, 0);
    for seed in 0..200 {
        // Dyad fixed effects with lagged outcomes bias the path by roughly
        // 4/T, so the panel is long relative to its width.
        let cfg = WorldConfig { n_countries: 6, years: 200, seed, ..WorldConfig::default() };
        let world = generate_world(&cfg).unwrap();
        assert_eq!(world.truth.beta.iter().copied().fold(0.0, f64::max), 0.28);
        let scores = score_events(&world.events, cfg.delta, None).unwrap();
        let panel = build_panel(&PanelInputs::new(&world.trade, &scores, SampleSpec::all())).unwrap();
        let irf = lp_irf(&panel, &LpSpec::new("log_trade", "score")).unwrap();
        for (i, &h) in irf.horizons.iter().enumerate() {
            if irf.fixed[i] {
                continue;
            }
            if h < 0 {
                pre += 1;
                false_pos += usize::from(irf.band_low[i] > 0.0 || irf.band_high[i] < 0.0);
            } else {
                let b = world.truth.beta[h as usize];
                total += 1;
                covered += usize::from(irf.band_low[i] <= b && b <= irf.band_high[i]);
            }
        }
    }
    let coverage = covered as f64 / total as f64;
    let fp = false_pos as f64 / pre as f64;
    let elapsed = start.elapsed();
    report(
        3,
        "LP bands recover a planted hump path",
        coverage >= 0.90 && fp <= 0.10 && elapsed < Duration::from_secs(600),
        format!("coverage {coverage:.3} over {total} horizons, pre-horizon false positives {fp:.3} over {pre}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_04_driscoll_kraay_coverage() {
    let start = Instant::now();
    let (t_len, rho, reps) = (200_usize, 0.5_f64, 500);
    let bandwidth = (4.0 * (t_len as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize;
    let countries = country_codes(6);
    let fe = FeSpec::new(vec![FeKey::Dyad, FeKey::Year]).unwrap();
    let (mut dk, mut iid) = (0, 0);
    for seed in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ar = |rng: &mut ChaCha8Rng| {
            let mut v = normal(rng) / (1.0 - rho * rho).sqrt();
            (0..t_len)
                .map(|_| {
                    let out = v;
                    v = rho * v + normal(rng);
                    out
                })
                .collect::<Vec<f64>>()
        };
        // Independent AR(1) factors with a shared dyad loading: x and y are
        // unrelated but their errors co-move across dyads and over time.
        let (f, g) = (ar(&mut rng), ar(&mut rng));
        let mut keys = Vec::new();
        let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for &o in &countries {
            for &d in countries.iter().filter(|&&d| d != o) {
                let load = normal(&mut rng);
                for t in 0..t_len {
                    keys.push((o, d, 1800 + t as i32));
                    let x = load * f[t] + 0.5 * normal(&mut rng);
                    let y = load * g[t] + 0.5 * normal(&mut rng);
                    cols.entry("x".into()).or_default().push(x);
                    cols.entry("y".into()).or_default().push(y);
                }
            }
        }
        let panel = Panel::from_rows(keys, cols).unwrap();
        for (engine, hits) in [(SeEngine::DriscollKraay(Bandwidth::Fixed(bandwidth)), &mut dk), (SeEngine::Iid, &mut iid)] {
            let design = Design::from_columns(&panel, "y", &["x"]).unwrap();
            let (res, _) = fit(&panel, design, &fe, engine, 0, &AbsorbOptions::default()).unwrap();
            let (lo, hi) = res.band(0, 0.95);
            *hits += usize::from(lo <= 0.0 && 0.0 <= hi);
        }
    }
    let (dk_cov, iid_cov) = (dk as f64 / reps as f64, iid as f64 / reps as f64);
    let elapsed = start.elapsed();
    report(
        4,
        "Driscoll-Kraay coverage under common serially correlated shocks",
        dk_cov >= 0.90 && iid_cov < 0.80 && elapsed < Duration::from_secs(600),
        format!("DK {dk_cov:.3}, IID {iid_cov:.3} over {reps} replications, bandwidth {bandwidth}, {elapsed:.2?}"),
    );
}

fn path_irf(kind: IrfKind, beta: &[f64]) -> Irf {
    let mut irf = Irf::empty(kind);
    for (h, &b) in beta.iter().enumerate() {
        irf.horizons.push(h as i32);
        irf.beta.push(b);
        irf.se.push(0.0);
        irf.band_low.push(b);
        irf.band_high.push(b);
        irf.n_obs.push(1);
        irf.fixed.push(false);
        irf.first_stage_f.push(f64::NAN);
    }
    irf
}

#[test]
fn criterion_05_shock_decomposition() {
    let conv = |a: &[f64], b: &[f64]| -> Vec<f64> {
        (0..a.len()).map(|h| (0..=h).map(|s| a[s] * b[h - s]).sum()).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let len = rng.random_range(2..25);
        let mut acf = vec![1.0];
        acf.extend((1..len).map(|_| rng.random_range(-0.9..0.9)));
        let p = transitory_weights(&acf).unwrap().p;
        for (h, v) in conv(&acf, &p).iter().enumerate() {
            worst = worst.max((v - if h == 0 { 1.0 } else { 0.0 }).abs());
        }
    }
    let hand = transitory_weights(&[1.0, 0.5, 0.0]).unwrap().p == vec![1.0, -0.5, 0.25];

    let mut telescopes = true;
    for _ in 0..100 {
        let len = rng.random_range(1..30);
        let mut acf = vec![1.0];
        acf.extend((1..len).map(|_| rng.random_range(-0.9..0.9)));
        let beta: Vec<f64> = (0..len).map(|_| normal(&mut rng)).collect();
        let d = decompose(&path_irf(IrfKind::ShockAutocorr, &acf), &path_irf(IrfKind::OutcomeOnShock, &beta)).unwrap();
        let mut csv = Vec::new();
        d.write_csv(&mut csv).unwrap();
        for d in [d, DecomposedIrf::read_csv(&csv[..]).unwrap()] {
            telescopes &= (0..d.permanent.len()).all(|h| {
                let diff = if h == 0 { d.permanent[0] } else { d.permanent[h] - d.permanent[h - 1] };
                diff.to_bits() == d.transitory[h].to_bits()
            });
        }
    }
    report(
        5,
        "auxiliary shock sequence inverts the ACF; permanent path telescopes",
        worst < 1e-12 && hand && telescopes,
        format!("max |conv - e1| {worst:.2e}, hand example {hand}, bit-exact differences {telescopes}"),
    );
}

fn random_primitives(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> LevelPrimitives {
    let tariff = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { 1.0 + rng.random_range(0.0..0.3) });
    let geo = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { rng.random_range(1.1..3.0) });
    LevelPrimitives {
        productivity: (0..n).map(|_| rng.random_range(0.5..2.0)).collect(),
        labor: (0..n).map(|_| rng.random_range(0.5..5.0)).collect(),
        cost: geo.component_mul(&tariff),
        tariff,
        sigma,
        world_income: 10.0,
    }
}

#[test]
fn criterion_06_hat_level_equivalence() {
    let start = Instant::now();
    let sigma = 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let opts = SolverOptions { tol: 1e-13, ..SolverOptions::default() };
    let (mut worst, mut worst_identity) = (0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let base = random_primitives(&mut rng, n, sigma);
        let tau_hat = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { rng.random_range(0.85..1.25) });
        let geo_hat = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { rng.random_range(0.7..1.4) });
        let d_hat = geo_hat.component_mul(&tau_hat);
        let shocked = LevelPrimitives {
            cost: base.cost.component_mul(&d_hat),
            tariff: base.tariff.component_mul(&tau_hat),
            ..base.clone()
        };
        let (before, after) = (level_solve(&base).unwrap(), level_solve(&shocked).unwrap());
        let world = before.to_world(country_codes(n), &base.tariff, sigma);
        let sol = solve_hats(&world, &HatShock::new(d_hat, tau_hat).unwrap(), &opts).unwrap();
        for i in 0..n {
            worst = worst.max((sol.w_hat[i] - after.wage[i] / before.wage[i]).abs());
            worst = worst.max((sol.p_hat[i] - after.price_index[i] / before.price_index[i]).abs());
            for j in 0..n {
                worst = worst.max((sol.pi_hat[(i, j)] - after.shares[(i, j)] / before.shares[(i, j)]).abs());
            }
        }
        let id = solve_hats(&world, &HatShock::identity(n), &SolverOptions::default()).unwrap();
        for v in id.w_hat.iter().chain(&id.p_hat).chain(&id.welfare).chain(id.pi_hat.iter()) {
            worst_identity = worst_identity.max((v - 1.0).abs());
        }
    }
    let elapsed = start.elapsed();
    report(
        6,
        "hat algebra equals ratios of level solutions",
        worst < 1e-8 && worst_identity <= 1e-10 && elapsed < Duration::from_secs(120),
        format!("max |diff| {worst:.2e}, identity max |hat - 1| {worst_identity:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_07_head_ries_round_trip() {
    let sigma = 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    let mut variants = [0; 3];
    for w in 0..50 {
        let n = rng.random_range(3..=7);
        let base = level_solve(&random_primitives(&mut rng, n, sigma)).unwrap();
        let tariff = DMatrix::from_fn(n, n, |o, d| if o == d { 1.0 } else { 1.1 });
        let world = base.to_world(country_codes(n), &tariff, sigma);
        let variant = w % 3;
        variants[variant] += 1;
        let mut log_geo: DMatrix<f64> = DMatrix::zeros(n, n);
        let mut eps = DMatrix::from_element(n, n, 1.0);
        let mut tau_hat = DMatrix::from_element(n, n, 1.0);
        for o in 0..n {
            for d in 0..n {
                if o == d {
                    continue;
                }
                if variant != 2 {
                    tau_hat[(o, d)] = rng.random_range(0.8..1.3);
                }
                if d > o && variant != 1 {
                    log_geo[(o, d)] = rng.random_range(-0.3..0.3);
                    log_geo[(d, o)] = log_geo[(o, d)];
                }
                if d > o && variant == 0 {
                    eps[(o, d)] = rng.random_range(0.7..1.4);
                    eps[(d, o)] = eps[(o, d)];
                }
            }
        }
        let d_hat = DMatrix::from_fn(n, n, |o, d| log_geo[(o, d)].exp() * tau_hat[(o, d)] * eps[(o, d)]);
        let sol = solve_hats(&world, &HatShock::new(d_hat, tau_hat.clone()).unwrap(), &SolverOptions::default()).unwrap();
        let current = world.pi.component_mul(&sol.pi_hat);
        let hr = head_ries_unobserved(&world.pi, &current, &tau_hat, &log_geo, sigma).unwrap();
        assert!(hr.flagged.is_empty());
        worst = worst.max((&hr.epsilon - &eps).abs().max());
    }
    report(
        7,
        "Head-Ries inversion recovers planted unobserved costs",
        worst < 1e-6,
        format!("max |eps_hat - eps| {worst:.2e}; full/tariff-only/geo-only worlds {variants:?}"),
    );
}

fn contributions_match(suite: &CounterfactualSuite) -> bool {
    let base = suite.scenario(Scenario::Baseline).unwrap();
    suite.contributions.iter().all(|c| {
        let other = suite.scenario(c.counterfactual).unwrap();
        let expected_cf = match c.component.as_str() {
            "geopolitics" => Scenario::NoGeo,
            "tariffs" => Scenario::NoTariff,
            "combined" => Scenario::OnlyUnobserved,
            _ => return false,
        };
        let i = base.years.iter().position(|&y| y == c.year).unwrap();
        c.counterfactual == expected_cf && c.contribution_pp == 100.0 * (base.trade_index[i] - other.trade_index[i])
    })
}

fn armington_suite(cfg: &WorldConfig) -> CounterfactualSuite {
    let world = generate_world(cfg).unwrap();
    let scores = score_events(&world.events, cfg.delta, None).unwrap();
    let t0 = cfg.first_year;
    let t1 = t0 + cfg.years as i32 - 1;
    let dec = decompose_costs(&world.trade, Some(&world.tariffs), &scores, &world.truth.permanent, cfg.sigma, (t0, t1)).unwrap();
    let (countries, values, tariff) = matrices_from_tables(&world.trade, Some(&world.tariffs), t0).unwrap();
    let (base, _) = calibrate(countries, &values, &tariff, cfg.sigma).unwrap();
    run_counterfactuals(&base, &dec, &Scenario::ALL, &SolverOptions::default(), Annualization::Geometric).unwrap()
}

#[test]
fn criterion_08_counterfactual_arithmetic() {
    let ordinary = WorldConfig {
        mode: TradeMode::Armington,
        n_countries: 8,
        years: 15,
        unobserved_volatility: 0.02,
        seed: 8,
        ..WorldConfig::default()
    };
    let planted = WorldConfig {
        innovation_sd: 0.0,
        drift: -0.02,
        tariff_volatility: 0.0,
        seed: 18,
        ..ordinary.clone()
    };
    let (a, b) = (armington_suite(&ordinary), armington_suite(&planted));
    let definitions = contributions_match(&a) && contributions_match(&b);

    let base_year = b.base_year;
    let geo_negative = b
        .contributions
        .iter()
        .filter(|c| c.component == "geopolitics" && c.year > base_year)
        .all(|c| c.contribution_pp < 0.0);
    let (no_geo, only_unobs) = (b.scenario(Scenario::NoGeo).unwrap(), b.scenario(Scenario::OnlyUnobserved).unwrap());
    let gap = no_geo
        .trade_index
        .iter()
        .zip(&only_unobs.trade_index)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    report(
        8,
        "contributions are scenario differences; planted deterioration",
        definitions && geo_negative && gap <= 1e-8,
        format!("definitions {definitions}, geo contribution negative every year {geo_negative}, |NoGeo - OnlyUnobserved| {gap:.2e}"),
    );
}

#[test]
fn criterion_09_welfare_statistics() {
    let countries = country_codes(6);
    let result = |scenario, welfare: Vec<f64>| ScenarioResult {
        scenario,
        countries: countries.clone(),
        years: vec![2000],
        trade_index: vec![1.0],
        welfare: vec![welfare],
        iterations: vec![0],
        residuals: vec![0.0],
    };
    let ratios = vec![1.25, 0.75, 1.5, 1.0, 0.5, 2.0];
    let base = result(Scenario::Baseline, ratios.clone());
    let cf = result(Scenario::NoGeo, vec![1.0; 6]);
    let s = welfare_distribution(&base, &cf, 2000).unwrap().summary;
    let hand = s.n == 6
        && s.mean == 7.0 / 6.0
        && s.median == 1.125
        && s.gainers == 3
        && s.losers == 2
        && s.min == 0.5
        && s.max == 2.0;

    let world_cfg = WorldConfig { mode: TradeMode::Armington, n_countries: 6, years: 5, seed: 9, ..WorldConfig::default() };
    let suite = armington_suite(&world_cfg);
    let baseline = suite.scenario(Scenario::Baseline).unwrap();
    let last = *baseline.years.last().unwrap();
    let identity = welfare_distribution(baseline, baseline, last).unwrap();
    let ones = identity.ratios.iter().all(|(_, r)| *r == 1.0);
    report(
        9,
        "welfare summary statistics",
        hand && ones,
        format!("hand vector {hand} (mean {}, median {}, gainers {}, losers {}), identity pair all ones {ones}", s.mean, s.median, s.gainers, s.losers),
    );
}

fn run_cli(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_geotrade")).args(args).current_dir(dir).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn pipeline(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    run_cli(dir, &["synth", "--mode", "armington", "--countries", "8", "--years", "20", "--seed", "10", "--out-dir", "world"]);
    run_cli(dir, &["score", "--events", "world/events.csv", "--out", "scores.csv"]);
    run_cli(dir, &[
        "lp", "--trade", "world/trade.csv", "--scores", "scores.csv", "--tariffs", "world/tariffs.csv",
        "--horizons", "0", "8", "--decompose", "--bootstrap", "20", "--seed", "3", "--out-dir", "lp",
    ]);
    run_cli(dir, &[
        "counterfactual", "--trade", "world/trade.csv", "--tariffs", "world/tariffs.csv", "--scores", "scores.csv",
        "--irf", "lp/decomposition.csv", "--base-year", "1970", "--out-dir", "cf",
    ]);
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn criterion_10_end_to_end_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, second) = (pipeline(a.path()), pipeline(b.path()));
    let expected = ["cf/contributions.csv", "cf/welfare.csv", "lp/decomposition.csv", "scores.csv", "world/trade.csv"];
    let complete = expected.iter().all(|f| first.contains_key(*f));
    let identical = first == second;
    report(
        10,
        "synth, score, lp --decompose, counterfactual are byte-identical across runs",
        complete && identical,
        format!("{} files, all expected outputs present {complete}, identical {identical}", first.len()),
    );
}
