use serde::{Deserialize, Serialize};

use super::{PortfolioError, PortfolioWeights};

/// Quote-currency cash plus crypto units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Holdings {
    pub cash: f64,
    pub units: Vec<f64>,
}

impl Holdings {
    pub fn cash_only(value: f64, m: usize) -> Self {
        Self { cash: value, units: vec![0.0; m] }
    }

    pub fn value(&self, prices: &[f64]) -> f64 {
        self.cash + self.units.iter().zip(prices).map(|(u, p)| u * p).sum::<f64>()
    }

    /// `[crypto_1 .. crypto_m, cash]` value fractions.
    pub fn weights(&self, prices: &[f64]) -> Vec<f64> {
        let v = self.value(prices);
        self.units.iter().zip(prices).map(|(u, p)| u * p / v).chain(std::iter::once(self.cash / v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceEvent {
    pub ts: i64,
    pub pre_weights: Vec<f64>,
    pub target_weights: Vec<f64>,
    pub turnover: f64,
    pub fee: f64,
    pub pre_value: f64,
    pub post_value: f64,
}

/// Re-splits the portfolio to `target` at `prices`, paying
/// `fee_rate * turnover * value` where turnover sums the absolute changes of
/// the crypto weights.
pub fn rebalance(
    ts: i64,
    holdings: &Holdings,
    target: &PortfolioWeights,
    prices: &[f64],
    fee_rate: f64,
) -> Result<(Holdings, RebalanceEvent), PortfolioError> {
    let m = target.m();
    if holdings.units.len() != m || prices.len() != m {
        return Err(PortfolioError::Config(format!(
            "{} holdings and {} prices for {m} weights",
            holdings.units.len(),
            prices.len()
        )));
    }
    if let Some(p) = prices.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(PortfolioError::Config(format!("price {p} is not positive")));
    }
    let value = holdings.value(prices);
    if !(value > 0.0) {
        return Err(PortfolioError::Config(format!("portfolio value {value} is not positive")));
    }
    let pre = holdings.weights(prices);
    let target_w = target.to_vec();
    let turnover: f64 = (0..m).map(|i| (target_w[i] - pre[i]).abs()).sum();
    let fee = fee_rate * turnover * value;
    if fee >= value {
        return Err(PortfolioError::FeeExceedsValue { fee, value });
    }
    let post = value - fee;
    let next = if turnover == 0.0 {
        holdings.clone()
    } else {
        Holdings {
            cash: target.cash() * post,
            units: (0..m).map(|i| target.crypto(i) * post / prices[i]).collect(),
        }
    };
    let event = RebalanceEvent {
        ts,
        pre_weights: pre,
        target_weights: target_w,
        turnover,
        fee,
        pre_value: value,
        post_value: post,
    };
    Ok((next, event))
}

/// Account history over a price panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Marked-to-market value at each row, before that row's rebalance.
    pub values: Vec<f64>,
    pub events: Vec<RebalanceEvent>,
    /// Post-rebalance `[crypto_1 .. crypto_m, cash]` weights at each row.
    pub exposures: Vec<Vec<f64>>,
}

/// Runs the account over `closes[asset][row]`. `decide(row)` returns the
/// target weights to rebalance to at that row, or `None` to let the current
/// holdings drift with prices.
pub fn simulate<F>(
    timestamps: &[i64],
    closes: &[Vec<f64>],
    initial: f64,
    fee_rate: f64,
    mut decide: F,
) -> Result<Simulation, PortfolioError>
where
    F: FnMut(usize) -> Result<Option<PortfolioWeights>, PortfolioError>,
{
    if !(initial > 0.0) {
        return Err(PortfolioError::Config(format!("initial capital {initial} is not positive")));
    }
    if closes.iter().any(|c| c.len() != timestamps.len()) {
        return Err(PortfolioError::Config("price series and timestamps differ in length".into()));
    }
    let m = closes.len();
    let mut holdings = Holdings::cash_only(initial, m);
    let mut sim = Simulation {
        values: Vec::with_capacity(timestamps.len()),
        events: Vec::new(),
        exposures: Vec::with_capacity(timestamps.len()),
    };
    let mut prices = vec![0.0; m];
    for (row, ts) in timestamps.iter().enumerate() {
        for (p, c) in prices.iter_mut().zip(closes) {
            *p = c[row];
        }
        sim.values.push(holdings.value(&prices));
        if let Some(target) = decide(row)? {
            let (next, event) = rebalance(*ts, &holdings, &target, &prices, fee_rate)?;
            holdings = next;
            sim.events.push(event);
        }
        sim.exposures.push(holdings.weights(&prices));
    }
    Ok(sim)
}
