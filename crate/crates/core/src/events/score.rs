use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;

use super::{group_by_dyad, EventRecord};
use crate::country::{CountryCode, Dyad};
use crate::error::{Error, Location, Result};
use crate::table::fmt_real;

/// Depreciation of past event mass; roughly a four-year moving average.
pub const DEFAULT_DELTA: f64 = 0.3;

/// Mean Goldstein score of one dyad-year scaled to [−1, 1]. `None` when the
/// year has no events; callers decide whether to carry a score forward.
pub fn annual_average(goldstein: &[f64]) -> Option<f64> {
    if goldstein.is_empty() {
        return None;
    }
    // Sorted summation keeps the result independent of input order.
    let mut v = goldstein.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64 / 10.0)
}

/// Annual and dynamic alignment scores for one dyad over a contiguous span
/// of years starting at its first event.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub dyad: Dyad,
    pub first_year: i32,
    /// Annual average S̃; `None` in years without events.
    pub raw: Vec<Option<f64>>,
    /// Dynamic score S.
    pub dynamic: Vec<f64>,
    /// Events observed in the year, Ñ.
    pub event_count: Vec<u32>,
    /// Depreciated cumulative event mass, N.
    pub effective_count: Vec<f64>,
    /// Depreciation rate used for the recursion. NaN when the series was
    /// read back from a file too short to recover it.
    pub delta: f64,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.dynamic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dynamic.is_empty()
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.dynamic.len() as i32 - 1
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.first_year..=self.last_year()
    }

    fn index(&self, year: i32) -> Option<usize> {
        (year >= self.first_year && year <= self.last_year()).then(|| (year - self.first_year) as usize)
    }

    /// Dynamic score in `year`; `None` outside the covered span.
    pub fn dynamic_at(&self, year: i32) -> Option<f64> {
        self.index(year).map(|i| self.dynamic[i])
    }

    pub fn raw_at(&self, year: i32) -> Option<f64> {
        self.index(year).and_then(|i| self.raw[i])
    }

    pub fn event_count_at(&self, year: i32) -> u32 {
        self.index(year).map(|i| self.event_count[i]).unwrap_or(0)
    }
}

/// Builds the dynamic score of a single dyad from its events.
///
/// The first year with events seeds S = S̃ and N = Ñ; afterwards
/// N_t = (1−δ)N_{t−1} + Ñ_t, φ_t = Ñ_t/N_t and S_t = (1−φ_t)S_{t−1} + φ_t S̃_t.
/// Years with no events keep S and decay N. The series runs to the last
/// event year, or to `end_year` when that is later.
pub fn dynamic_scores(
    dyad: Dyad,
    events: &[&EventRecord],
    delta: f64,
    end_year: Option<i32>,
) -> Result<ScoreSeries> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::validation(format!("depreciation rate {delta} outside (0, 1]")));
    }
    let mut by_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for e in events {
        if e.dyad() != dyad {
            return Err(Error::validation(format!("event for {} passed to dyad {dyad}", e.dyad())));
        }
        by_year.entry(e.year).or_default().push(e.goldstein);
    }
    let (Some(&first), Some(&last)) = (by_year.keys().next(), by_year.keys().next_back()) else {
        return Err(Error::validation(format!("no events for dyad {dyad}")));
    };
    let last = end_year.map_or(last, |y| y.max(last));
    let n = (last - first + 1) as usize;

    let mut series = ScoreSeries {
        dyad,
        first_year: first,
        raw: Vec::with_capacity(n),
        dynamic: Vec::with_capacity(n),
        event_count: Vec::with_capacity(n),
        effective_count: Vec::with_capacity(n),
        delta,
    };
    let mut s_prev = 0.0;
    let mut n_prev = 0.0;
    for year in first..=last {
        let scores = by_year.get(&year).map(Vec::as_slice).unwrap_or(&[]);
        let raw = annual_average(scores);
        let count = scores.len() as u32;
        // Before the first event N = 0, so φ = 1 and S = S̃ there.
        let n_t = (1.0 - delta) * n_prev + count as f64;
        let s_t = match raw {
            Some(r) => {
                let phi = count as f64 / n_t;
                ((1.0 - phi) * s_prev + phi * r).clamp(-1.0, 1.0)
            }
            None => s_prev,
        };
        series.raw.push(raw);
        series.dynamic.push(s_t);
        series.event_count.push(count);
        series.effective_count.push(n_t);
        s_prev = s_t;
        n_prev = n_t;
    }
    Ok(series)
}

/// Scores every dyad present in `events`, in dyad order.
pub fn score_events(events: &[EventRecord], delta: f64, end_year: Option<i32>) -> Result<Vec<ScoreSeries>> {
    let groups: Vec<(Dyad, Vec<&EventRecord>)> = group_by_dyad(events).into_iter().collect();
    groups
        .par_iter()
        .map(|(dyad, evs)| dynamic_scores(*dyad, evs, delta, end_year))
        .collect()
}

/// Writes `dyad_a,dyad_b,year,raw_score,dynamic_score,event_count,effective_count`.
pub fn write_scores<W: Write>(series: &[ScoreSeries], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "dyad_a",
        "dyad_b",
        "year",
        "raw_score",
        "dynamic_score",
        "event_count",
        "effective_count",
    ])?;
    for s in series {
        for (i, year) in s.years().enumerate() {
            w.write_record([
                s.dyad.a().as_str(),
                s.dyad.b().as_str(),
                &year.to_string(),
                &s.raw[i].map(fmt_real).unwrap_or_default(),
                &fmt_real(s.dynamic[i]),
                &s.event_count[i].to_string(),
                &fmt_real(s.effective_count[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the score CSV written by [`write_scores`]. The depreciation rate is
/// recovered from the effective-count recursion when a dyad spans two or
/// more years.
pub fn read_scores<R: Read>(reader: R) -> Result<Vec<ScoreSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<ScoreSeries> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let loc = Location::Line(rec.position().map(|p| p.line()).unwrap_or(0));
        let get = |i: usize, name: &str| -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| Error::parse(loc.clone(), Some(name), "missing field"))
        };
        let num = |i: usize, name: &str| -> Result<f64> {
            let raw = get(i, name)?;
            raw.parse::<f64>()
                .map_err(|_| Error::parse(loc.clone(), Some(name), format!("`{raw}` is not a number")))
        };
        let a = CountryCode::new(get(0, "dyad_a")?).map_err(|e| Error::parse(loc.clone(), Some("dyad_a"), e.to_string()))?;
        let b = CountryCode::new(get(1, "dyad_b")?).map_err(|e| Error::parse(loc.clone(), Some("dyad_b"), e.to_string()))?;
        let dyad = Dyad::new(a, b).map_err(|e| Error::parse(loc.clone(), Some("dyad_b"), e.to_string()))?;
        let year: i32 = get(2, "year")?
            .parse()
            .map_err(|_| Error::parse(loc.clone(), Some("year"), "not a year"))?;
        let raw = match get(3, "raw_score")? {
            "" => None,
            _ => Some(num(3, "raw_score")?),
        };
        let dynamic = num(4, "dynamic_score")?;
        let count: u32 = get(5, "event_count")?
            .parse()
            .map_err(|_| Error::parse(loc.clone(), Some("event_count"), "not a count"))?;
        let eff = num(6, "effective_count")?;

        match out.last_mut() {
            Some(s) if s.dyad == dyad => {
                if year != s.last_year() + 1 {
                    return Err(Error::parse(loc, Some("year"), "years of a dyad must be contiguous and ascending"));
                }
                s.raw.push(raw);
                s.dynamic.push(dynamic);
                s.event_count.push(count);
                s.effective_count.push(eff);
            }
            _ => out.push(ScoreSeries {
                dyad,
                first_year: year,
                raw: vec![raw],
                dynamic: vec![dynamic],
                event_count: vec![count],
                effective_count: vec![eff],
                delta: f64::NAN,
            }),
        }
    }
    for s in &mut out {
        if s.len() >= 2 && s.effective_count[0] > 0.0 {
            let carried = s.effective_count[1] - s.event_count[1] as f64;
            s.delta = 1.0 - carried / s.effective_count[0];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{CameoQuad, EconomicType};
    use proptest::prelude::*;

    fn c(s: &str) -> CountryCode {
        CountryCode::new(s).unwrap()
    }

    fn ev(o: &str, p: &str, year: i32, g: f64) -> EventRecord {
        EventRecord {
            origin: c(o),
            partner: c(p),
            year,
            cameo_root: 4,
            cameo_quad: CameoQuad::VerbalCooperation,
            goldstein: g,
            economic: EconomicType::NotEconomic,
            description: None,
        }
    }

    #[test]
    fn annual_average_examples() {
        assert_eq!(annual_average(&[10.0]), Some(1.0));
        assert_eq!(annual_average(&[5.0, -5.0]), Some(0.0));
        assert_eq!(annual_average(&[]), None);
        let us_ru_2024 = annual_average(&[-7.0, -8.0, -6.5, 6.0, -5.0, -4.5]).unwrap();
        assert!((us_ru_2024 - (-25.0 / 60.0)).abs() < 1e-15);
    }

    #[test]
    fn two_year_hand_example() {
        let evs = [ev("USA", "RUS", 1, 5.0), ev("RUS", "USA", 1, -5.0), ev("USA", "RUS", 2, 10.0)];
        let refs: Vec<&EventRecord> = evs.iter().collect();
        let s = dynamic_scores(evs[0].dyad(), &refs, 0.3, None).unwrap();
        assert_eq!(s.first_year, 1);
        assert_eq!(s.dynamic[0], 0.0);
        assert_eq!(s.effective_count[0], 2.0);
        assert!((s.effective_count[1] - 2.4).abs() < 1e-15);
        let expect = (1.4 / 2.4) * 0.0 + (1.0 / 2.4) * 1.0;
        assert!((s.dynamic[1] - expect).abs() < 1e-12);
        assert!((s.dynamic[1] - 0.4166666666666667).abs() < 1e-12);
    }

    #[test]
    fn zero_event_years_carry_forward() {
        let evs = [ev("USA", "RUS", 2000, 6.0), ev("USA", "RUS", 2003, -2.0)];
        let refs: Vec<&EventRecord> = evs.iter().collect();
        let s = dynamic_scores(evs[0].dyad(), &refs, 0.3, Some(2006)).unwrap();
        assert_eq!(s.len(), 7);
        assert_eq!(s.dynamic[1], s.dynamic[0]);
        assert_eq!(s.dynamic[2], s.dynamic[0]);
        assert_eq!(s.raw[1], None);
        assert!((s.effective_count[2] - 0.49).abs() < 1e-15);
        assert_eq!(s.dynamic_at(2006), s.dynamic_at(2004));
        assert_eq!(s.dynamic_at(1999), None);
    }

    #[test]
    fn constant_flow_converges_to_constant() {
        let evs: Vec<EventRecord> = (0..40).flat_map(|y| [ev("USA", "RUS", y, 4.0), ev("USA", "RUS", y, 4.0)]).collect();
        let refs: Vec<&EventRecord> = evs.iter().collect();
        let s = dynamic_scores(evs[0].dyad(), &refs, 0.3, None).unwrap();
        assert!(s.dynamic.iter().all(|x| (x - 0.4).abs() < 1e-12));
    }

    #[test]
    fn delta_one_reproduces_annual_average() {
        let evs = [ev("USA", "RUS", 1, 5.0), ev("USA", "RUS", 2, -3.0), ev("USA", "RUS", 2, -1.0)];
        let refs: Vec<&EventRecord> = evs.iter().collect();
        let s = dynamic_scores(evs[0].dyad(), &refs, 1.0, None).unwrap();
        assert_eq!(s.dynamic, vec![0.5, -0.2]);
    }

    #[test]
    fn rejects_bad_delta() {
        let evs = [ev("USA", "RUS", 1, 5.0)];
        let refs: Vec<&EventRecord> = evs.iter().collect();
        for d in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(dynamic_scores(evs[0].dyad(), &refs, d, None).is_err());
        }
    }

    #[test]
    fn csv_round_trip_recovers_delta() {
        let evs = [ev("USA", "RUS", 1, 5.0), ev("USA", "RUS", 2, -3.0), ev("CHN", "JPN", 4, 1.0)];
        let series = score_events(&evs, 0.3, Some(5)).unwrap();
        let mut buf = Vec::new();
        write_scores(&series, &mut buf).unwrap();
        let back = read_scores(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in series.iter().zip(&back) {
            assert_eq!(a.dynamic, b.dynamic);
            assert_eq!(a.raw, b.raw);
            assert!((a.delta - b.delta).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn order_invariance(mut gs in proptest::collection::vec((0i32..6, -10.0f64..=10.0, any::<bool>()), 1..40), seed in any::<u64>()) {
            let evs: Vec<EventRecord> = gs.iter().map(|&(y, g, flip)| if flip { ev("USA", "RUS", y, g) } else { ev("RUS", "USA", y, g) }).collect();
            let a = score_events(&evs, 0.3, None).unwrap();
            // deterministic shuffle
            let mut idx: Vec<usize> = (0..gs.len()).collect();
            let mut state = seed | 1;
            for i in (1..idx.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                idx.swap(i, (state % (i as u64 + 1)) as usize);
            }
            gs = idx.iter().map(|&i| gs[i]).collect();
            let evs2: Vec<EventRecord> = gs.iter().map(|&(y, g, flip)| if flip { ev("RUS", "USA", y, g) } else { ev("USA", "RUS", y, g) }).collect();
            let b = score_events(&evs2, 0.3, None).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
