use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crlpm_core::data_store::AlignedFrame;
use crlpm_core::refinery::{rolling_normalize, rolling_pca, Refinery, RefineryConfig, WindowPca};

use crate::support::{asset, SIX_HOURS};

const TARGET: f64 = 0.8;

/// Metrics driven by a few latent factors plus idiosyncratic noise.
fn factor_panel(rng: &mut ChaCha8Rng, t: usize, k: usize) -> DMatrix<f64> {
    let factors = rng.random_range(1..=3);
    let loadings: Vec<Vec<f64>> = (0..k).map(|_| (0..factors).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let noise = rng.random_range(0.05..1.0);
    let mut f = vec![0.0; factors];
    let mut out = DMatrix::zeros(t, k);
    for r in 0..t {
        for v in f.iter_mut() {
            *v = 0.8 * *v + rng.random_range(-1.0..1.0);
        }
        for c in 0..k {
            out[(r, c)] =
                loadings[c].iter().zip(&f).map(|(l, x)| l * x).sum::<f64>() + noise * rng.random_range(-1.0..1.0);
        }
    }
    out
}

fn variance_and_reconstruction(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut checked = 0;
    for case in 0..40 {
        let k = rng.random_range(2..=8);
        let t = rng.random_range(120..=260);
        let norm_window = rng.random_range(5..=30);
        let pca_window = rng.random_range(k + 1..=60);
        let x = factor_panel(rng, t, k);
        let normalized = rolling_normalize(&x, norm_window, 1e-8).map_err(|e| e.to_string())?;
        let ts: Vec<i64> = (0..t as i64).collect();
        let refined = rolling_pca(&normalized, &ts, pca_window, TARGET).map_err(|e| e.to_string())?;
        for row in 0..t {
            if !refined.valid[row] {
                continue;
            }
            let ev = refined.explained_variance[row];
            if ev < TARGET {
                return Err(format!("case {case} row {row}: explained variance {ev} < {TARGET}"));
            }
            let win = normalized.values.rows(row + 1 - pca_window, pca_window).into_owned();
            let pca = WindowPca::fit(&win);
            let c = refined.component_count[row];
            let total = pca.total_variance();
            // squared reconstruction error per degree of freedom from the first c components
            let basis = pca.vectors.columns(0, c).into_owned();
            let mut err = 0.0;
            for i in 0..pca_window {
                let centered = win.row(i).transpose() - &pca.mean;
                let recon = &basis * (basis.transpose() * &centered);
                err += (centered - recon).norm_squared();
            }
            err /= (pca_window - 1) as f64;
            let discarded: f64 = pca.eigenvalues[c..].iter().sum();
            let tol = 1e-9 * total.max(1.0);
            if (err - discarded).abs() > tol {
                return Err(format!("case {case} row {row}: reconstruction error {err} != discarded variance {discarded}"));
            }
            if err > (1.0 - TARGET) * total + tol {
                return Err(format!("case {case} row {row}: reconstruction error {err} exceeds bound"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn no_lookahead(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let (t, k) = (140, 4);
    let metrics = factor_panel(rng, t, k);
    let frame = AlignedFrame {
        asset: asset("LKA"),
        interval: SIX_HOURS,
        timestamps: (0..t as i64).map(|i| i * SIX_HOURS).collect(),
        ohlcv: DMatrix::from_fn(t, 5, |r, _| 100.0 + r as f64),
        metrics,
        metric_names: (0..k).map(|j| format!("m{j}")).collect(),
    };
    let refinery = Refinery {
        config: RefineryConfig { norm_window: 15, pca_window: 25, ..RefineryConfig::default() },
        selected: frame.metric_names.clone(),
    };
    let base = refinery.transform(&frame).map_err(|e| e.to_string())?;
    for trial in 0..1_000 {
        let cut = rng.random_range(0..t - 1);
        let mut perturbed = frame.clone();
        for _ in 0..rng.random_range(1..=5) {
            let row = rng.random_range(cut + 1..t);
            let col = rng.random_range(0..k);
            perturbed.metrics[(row, col)] = rng.random_range(-1e3..1e3);
        }
        let out = refinery.transform(&perturbed).map_err(|e| e.to_string())?;
        for row in 0..=cut {
            let same = base.valid[row] == out.valid[row]
                && base.component_count[row] == out.component_count[row]
                && base.explained_variance[row].to_bits() == out.explained_variance[row].to_bits()
                && (0..k).all(|j| base.components[(row, j)].to_bits() == out.components[(row, j)].to_bits());
            if !same {
                return Err(format!("perturbation {trial}: row {row} changed after perturbing rows > {cut}"));
            }
        }
    }
    Ok(())
}

pub fn rolling_pca_properties() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows = variance_and_reconstruction(&mut rng)?;
    no_lookahead(&mut rng)?;
    Ok(format!("{rows} valid rows checked; 1000 future perturbations left past rows bit-identical"))
}
