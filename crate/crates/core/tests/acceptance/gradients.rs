use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crlpm_core::rl::{Architecture, QNetwork, Tensor3};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn objective(net: &QNetwork, state: &Tensor3, weights: &[f64]) -> f64 {
    net.q_values(state).expect("forward").iter().zip(weights).map(|(q, w)| q * w).sum()
}

/// Worst per-layer relative error between back-propagated and central
/// finite-difference gradients of `sum_a w_a * Q_a`.
fn check_instance(rng: &mut ChaCha8Rng, arch: Architecture) -> Result<f64, String> {
    let (f, m, n) = match arch {
        Architecture::Eam1d => (rng.random_range(1..=4), 1, rng.random_range(3..=7)),
        Architecture::Sam4Layer => (rng.random_range(1..=4), 2, rng.random_range(5..=8)),
    };
    let mut net = QNetwork::new(arch, (f, m, n), rng.random()).map_err(|e| e.to_string())?;
    // jitter everything (biases start at zero) so units land on both sides of the ReLU kink
    for r in net.layer_ranges() {
        for p in &mut net.params_mut()[r] {
            *p += rng.random_range(-0.1..0.1);
        }
    }
    let data = (0..f * m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let state = Tensor3::from_vec(f, m, n, data).map_err(|e| e.to_string())?;
    let weights: Vec<f64> = (0..net.action_count()).map(|_| rng.random_range(-1.0..1.0)).collect();

    let pass = net.forward(&state).map_err(|e| e.to_string())?;
    let mut analytic = vec![0.0; net.params().len()];
    net.backward(&pass, &weights, &mut analytic);

    let mut numeric = vec![0.0; analytic.len()];
    for i in 0..numeric.len() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + STEP;
        let up = objective(&net, &state, &weights);
        net.params_mut()[i] = orig - STEP;
        let down = objective(&net, &state, &weights);
        net.params_mut()[i] = orig;
        numeric[i] = (up - down) / (2.0 * STEP);
    }

    let mut worst: f64 = 0.0;
    for (layer, r) in net.layer_ranges().into_iter().enumerate() {
        let diff: f64 = r.clone().map(|i| (analytic[i] - numeric[i]).powi(2)).sum::<f64>().sqrt();
        let na: f64 = r.clone().map(|i| analytic[i].powi(2)).sum::<f64>().sqrt();
        let nn: f64 = r.map(|i| numeric[i].powi(2)).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let rel = if scale < 1e-12 { diff } else { diff / scale };
        if rel > TOL {
            return Err(format!("{} layer {layer}: relative error {rel:.3e}", arch.tag()));
        }
        worst = worst.max(rel);
    }
    Ok(worst)
}

pub fn finite_differences() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let arch = if i % 2 == 0 { Architecture::Eam1d } else { Architecture::Sam4Layer };
        worst = worst.max(check_instance(&mut rng, arch).map_err(|e| format!("instance {i}: {e}"))?);
    }
    Ok(format!("20 instances, worst per-layer relative error {worst:.2e}"))
}
