//! Observation tensors for the signal agent and the allocation agent.
//!
//! Feature order along `f`: open, high, low, close, volume, then the
//! `C_max` refined components, then (allocation agent with signals only)
//! the signal channel. Prices are divided by the window's last close and
//! volume by the window's mean volume.

use crate::data_store::{AlignedFrame, CLOSE};
use crate::refinery::RefinedFeatureFrame;
use crate::rl::Tensor3;

use super::{CmError, Signal};

/// Row of the designated crypto in an allocation observation.
pub const CRYPTO_ROW: usize = 0;
/// Row of the cash asset.
pub const CASH_ROW: usize = 1;

/// Signal-agent state: `f = 5 + C_max`, `m = 1`, `n` intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct EamObservation {
    pub tensor: Tensor3,
}

/// Allocation-agent state: `f` features, `m = 2` (crypto, cash), `n` intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct SamObservation {
    pub tensor: Tensor3,
}

/// First row at which a window of `n` rows lies entirely past the refinery
/// warm-up.
pub fn first_observable(refined: &RefinedFeatureFrame, n: usize) -> usize {
    refined.first_valid + n - 1
}

fn check_window(frame: &AlignedFrame, refined: &RefinedFeatureFrame, t: usize, n: usize) -> Result<(), CmError> {
    if frame.len() != refined.len() {
        return Err(CmError::Shape(format!("frame has {} rows, features {}", frame.len(), refined.len())));
    }
    if n < 1 {
        return Err(CmError::Config("observation window must be positive".into()));
    }
    let needed = first_observable(refined, n);
    if t < needed || t >= frame.len() {
        return Err(CmError::Warmup { t, needed });
    }
    Ok(())
}

/// Writes the normalized OHLCV block and refined features of rows
/// `t - n + 1 ..= t` into row `row` of `tensor`.
fn fill_market_row(tensor: &mut Tensor3, row: usize, frame: &AlignedFrame, refined: &RefinedFeatureFrame, t: usize, n: usize) {
    let start = t + 1 - n;
    let last_close = frame.ohlcv[(t, CLOSE)];
    let mean_volume = (start..=t).map(|i| frame.ohlcv[(i, 4)]).sum::<f64>() / n as f64;
    for (pos, i) in (start..=t).enumerate() {
        for c in 0..4 {
            tensor.set(c, row, pos, frame.ohlcv[(i, c)] / last_close);
        }
        let vol = if mean_volume > 0.0 { frame.ohlcv[(i, 4)] / mean_volume } else { 0.0 };
        tensor.set(4, row, pos, vol);
        for j in 0..refined.c_max() {
            tensor.set(5 + j, row, pos, refined.feature(i, j));
        }
    }
}

pub fn build_eam_state(
    frame: &AlignedFrame,
    refined: &RefinedFeatureFrame,
    t: usize,
    n: usize,
) -> Result<EamObservation, CmError> {
    check_window(frame, refined, t, n)?;
    let mut tensor = Tensor3::zeros(5 + refined.c_max(), 1, n);
    fill_market_row(&mut tensor, 0, frame, refined, t, n);
    Ok(EamObservation { tensor })
}

/// Allocation observation at row `t`. When `signals` is given it must hold
/// one signal per frame row; the window's signals become an extra feature
/// (buy 1, hold 0, sell -1).
pub fn build_sam_state(
    frame: &AlignedFrame,
    refined: &RefinedFeatureFrame,
    t: usize,
    n: usize,
    signals: Option<&[Option<Signal>]>,
) -> Result<SamObservation, CmError> {
    check_window(frame, refined, t, n)?;
    let base = 5 + refined.c_max();
    let f = base + usize::from(signals.is_some());
    let mut tensor = Tensor3::zeros(f, 2, n);
    fill_market_row(&mut tensor, CRYPTO_ROW, frame, refined, t, n);
    for pos in 0..n {
        for c in 0..4 {
            tensor.set(c, CASH_ROW, pos, 1.0);
        }
    }
    if let Some(signals) = signals {
        if signals.len() != frame.len() {
            return Err(CmError::Shape(format!("{} signals for {} rows", signals.len(), frame.len())));
        }
        for (pos, i) in (t + 1 - n..=t).enumerate() {
            let s = signals[i].ok_or(CmError::Warmup { t, needed: t + 1 })?;
            tensor.set(base, CRYPTO_ROW, pos, s.encode());
        }
    }
    Ok(SamObservation { tensor })
}
