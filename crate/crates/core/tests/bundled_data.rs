use std::path::PathBuf;

use costfolio::market_data::{GridSpec, PricePanel};
use costfolio::synthetic::{bundled_panel, BUNDLED_ASSETS, BUNDLED_PERIOD};

const FINGERPRINT: &str = "9b87618715b5426279d1ee4dd1e8ae1034dc8f5c2f7e7a8e8e12c24f5d216851";

fn shipped() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic");
    BUNDLED_ASSETS.iter().map(|a| dir.join(format!("{a}.csv"))).collect()
}

#[test]
fn shipped_csvs_match_the_generator() {
    let panel = PricePanel::ingest(&shipped(), GridSpec::every(BUNDLED_PERIOD)).unwrap();
    assert!(panel.is_complete());
    assert_eq!(panel.n_periods(), 2000);
    assert_eq!(panel.n_risky(), 3);
    assert_eq!(panel.asset_ids(), BUNDLED_ASSETS);
    assert_eq!(panel.fingerprint(), bundled_panel().unwrap().fingerprint());
    assert_eq!(panel.fingerprint(), FINGERPRINT);
}

#[test]
fn ingest_fill_window_is_deterministic() {
    let a = PricePanel::ingest(&shipped(), GridSpec::every(BUNDLED_PERIOD)).unwrap().fill_missing().unwrap();
    let b = PricePanel::ingest(&shipped(), GridSpec::every(BUNDLED_PERIOD)).unwrap().fill_missing().unwrap();
    assert_eq!(a.window_at(1999, 30).unwrap(), b.window_at(1999, 30).unwrap());
}

#[test]
fn missing_prefix_is_flat_filled_from_the_first_close() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.csv");
    let late = dir.path().join("late.csv");
    let mut a = String::from("timestamp,open,high,low,close\n");
    let mut b = a.clone();
    for t in 0..10 {
        a += &format!("{},1,1,1,1\n", t * 60);
        if t >= 4 {
            let p = 5.0 + (t - 4) as f64;
            b += &format!("{},{p},{p},{p},{p}\n", t * 60);
        }
    }
    std::fs::write(&full, a).unwrap();
    std::fs::write(&late, b).unwrap();
    let raw = PricePanel::ingest(&[&full, &late], GridSpec::every(60)).unwrap();
    assert_eq!(raw.n_periods(), 10);
    assert_eq!(raw.missing_count(), 4);
    let filled = raw.fill_missing().unwrap();
    for t in 0..4 {
        assert_eq!(filled.bar(1, t).unwrap().channels(), [5.0; 4]);
        assert_eq!(filled.price_relative(t.max(1)).unwrap()[2], 1.0);
    }
    assert_eq!(filled.provenance()[1].rows_read, 6);
}
