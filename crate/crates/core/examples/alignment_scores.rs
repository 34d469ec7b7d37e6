//! Turns a handful of bilateral events into annual and dynamic alignment
//! scores, then shows how the event filter changes the picture.
//!
//! Run with `cargo run --example alignment_scores`.

use geotrade::country::CountryCode;
use geotrade::error::Result;
use geotrade::events::{filter_events, score_events, CameoQuad, EconomicType, EventFilter, EventRecord};

fn event(a: &str, b: &str, year: i32, root: u8, goldstein: f64, economic: EconomicType) -> Result<EventRecord> {
    Ok(EventRecord {
        origin: CountryCode::new(a)?,
        partner: CountryCode::new(b)?,
        year,
        cameo_root: root,
        cameo_quad: CameoQuad::for_root(root).expect("root in 1..=20"),
        goldstein,
        economic,
        description: None,
    })
}

fn main() -> Result<()> {
    use EconomicType::*;
    let events = vec![
        event("USA", "CHN", 2015, 4, 1.0, NotEconomic)?,
        event("CHN", "USA", 2015, 5, 3.5, NotEconomic)?,
        event("USA", "CHN", 2016, 3, 4.0, NotEconomic)?,
        event("USA", "CHN", 2018, 17, -5.0, Sanctions)?,
        event("CHN", "USA", 2018, 13, -4.4, NotEconomic)?,
        event("USA", "CHN", 2019, 12, -4.0, NotEconomic)?,
        event("DEU", "FRA", 2015, 5, 3.5, NotEconomic)?,
        event("FRA", "DEU", 2017, 6, 6.0, Trade)?,
    ];

    let all = score_events(&events, 0.3, Some(2020))?;
    println!("all events, delta = 0.3");
    for s in &all {
        for (i, year) in s.years().enumerate() {
            println!(
                "  {} {year}: raw {:>7}  dynamic {:>7.3}  events {}",
                s.dyad,
                s.raw[i].map_or("-".to_string(), |r| format!("{r:.3}")),
                s.dynamic[i],
                s.event_count[i]
            );
        }
    }

    let political: EventFilter = "non_economic".parse()?;
    let kept = filter_events(&events, &political);
    let scored = score_events(&kept, 0.3, Some(2020))?;
    println!("\nnon-economic events only ({} of {})", kept.len(), events.len());
    for s in &scored {
        println!("  {} in 2020: {:.3}", s.dyad, s.dynamic_at(2020).unwrap_or(f64::NAN));
    }
    Ok(())
}
