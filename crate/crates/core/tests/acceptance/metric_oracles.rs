use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crlpm_core::metrics::{arr, drr, sortino, sortino_of, summarize, ReturnSeries, Sortino};

use crate::support::rel_close;

const TOL: f64 = 1e-9;
const DAY: i64 = 86_400;

/// Daily returns straight from the curve: for each UTC day, the value after
/// its last period over the value before its first period.
fn oracle_daily(ts: &[i64], values: &[f64]) -> Vec<f64> {
    let mut spans: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for i in 0..values.len() - 1 {
        let day = ts[i].div_euclid(DAY);
        let e = spans.entry(day).or_insert((i, i + 1));
        e.1 = i + 1;
    }
    spans.values().map(|&(a, b)| values[b] / values[a] - 1.0).collect()
}

fn oracle_sortino(daily: &[f64]) -> f64 {
    let n = daily.len() as f64;
    let mean = daily.iter().sum::<f64>() / n;
    let mut sq = 0.0;
    for r in daily {
        if *r < 0.0 {
            sq += r * r;
        }
    }
    let dd = (sq / n).sqrt();
    match (dd == 0.0, mean > 0.0) {
        (true, true) => f64::INFINITY,
        (true, false) => 0.0,
        _ => mean / dd,
    }
}

fn random_curves(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let intervals = [3_600, 7_200, 14_400, 21_600, 43_200, 86_400];
    for case in 0..100 {
        let interval = intervals[rng.random_range(0..intervals.len())];
        let n = rng.random_range(2..=400);
        let start = 1_600_000_000 / interval * interval + interval * rng.random_range(0..24);
        let ts: Vec<i64> = (0..n as i64).map(|i| start + i * interval).collect();
        let mut v = rng.random_range(10.0..10_000.0);
        let values: Vec<f64> = (0..n)
            .map(|i| {
                if i > 0 && rng.random_bool(0.9) {
                    v *= 1.0 + rng.random_range(-0.08..0.08);
                }
                v
            })
            .collect();

        let got = summarize(&ts, &values, interval).map_err(|e| e.to_string())?;
        let expect_arr = values[n - 1] / values[0] - 1.0;
        let daily = oracle_daily(&ts, &values);
        let expect_drr = daily.iter().sum::<f64>() / daily.len() as f64;
        let expect_sr = oracle_sortino(&daily);
        if !rel_close(got.arr, expect_arr, TOL) {
            return Err(format!("case {case}: ARR {} vs oracle {expect_arr}", got.arr));
        }
        if !rel_close(got.drr, expect_drr, TOL) {
            return Err(format!("case {case}: DRR {} vs oracle {expect_drr}", got.drr));
        }
        let sr_ok = match got.sortino {
            Sortino::Unbounded => expect_sr.is_infinite(),
            Sortino::Finite(s) => expect_sr.is_finite() && rel_close(s, expect_sr, TOL),
        };
        if !sr_ok {
            return Err(format!("case {case}: Sortino {} vs oracle {expect_sr}", got.sortino));
        }
    }
    Ok(())
}

fn hand_examples() -> Result<(), String> {
    let fail = |what: &str| Err(format!("hand example failed: {what}"));
    if sortino_of(&[0.1, -0.1], 0.0) != Sortino::Finite(0.0) {
        return fail("sortino [+0.1, -0.1]");
    }
    if sortino_of(&[0.01, 0.02, 0.03], 0.0) != Sortino::Unbounded {
        return fail("sortino all positive");
    }
    if sortino_of(&[0.0, 0.0], 0.0) != Sortino::Finite(0.0) {
        return fail("sortino at target");
    }
    if arr(&[5.0, 7.0, 5.0]).ok() != Some(0.0) {
        return fail("flat-ended ARR");
    }
    if format!("{:.2}", 100.0 * arr(&[10_000.0, 13_126.0]).map_err(|e| e.to_string())?) != "31.26" {
        return fail("ARR 10 000 -> 13 126");
    }
    if format!("{:.2}", 100.0 * arr(&[100.0, 48.12]).map_err(|e| e.to_string())?) != "-51.88" {
        return fail("ARR 100 -> 48.12");
    }
    let day = |rs: Vec<f64>, ppd: u32| {
        let step = DAY / ppd as i64;
        ReturnSeries::new((0..rs.len() as i64).map(|i| i * step).collect(), rs, ppd).map_err(|e| e.to_string())
    };
    if drr(&day(vec![0.01; 5], 1)?) != 0.01 {
        return fail("constant daily return");
    }
    if drr(&day(vec![0.1, -0.1], 1)?) != 0.0 {
        return fail("symmetric days");
    }
    let four = drr(&day(vec![0.01; 4], 4)?);
    // 1.01^4 - 1 = 0.04060401 exactly in decimal
    if four != 0.04060401 {
        return fail("four bars a day");
    }
    if sortino(&day(vec![0.1, -0.1], 1)?, 0.0) != Sortino::Finite(0.0) {
        return fail("series sortino [+0.1, -0.1]");
    }
    Ok(())
}

pub fn random_curves_and_examples() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    random_curves(&mut rng)?;
    hand_examples()?;
    Ok("100 random curves within 1e-9 of direct formulas; hand examples exact".into())
}
