//! Exact percentage arithmetic shared by every report table.
//!
//! Percentages are computed from integer counts as [`Decimal`] values and
//! rendered with half-up rounding to one decimal place.

use rust_decimal::prelude::*;
use rust_decimal::RoundingStrategy;
use serde::{Deserialize, Serialize};

/// A `correct / total` pair. Percentages derive from the counts, never the
/// other way round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: u64,
    pub total: u64,
}

impl Ratio {
    pub fn new(hits: u64, total: u64) -> Self {
        Self { hits, total }
    }

    pub fn add(&mut self, hit: bool) {
        self.total += 1;
        if hit {
            self.hits += 1;
        }
    }

    pub fn merge(self, other: Ratio) -> Ratio {
        Ratio::new(self.hits + other.hits, self.total + other.total)
    }

    /// `None` when the denominator is zero.
    pub fn percent(&self) -> Option<Decimal> {
        if self.total == 0 {
            return None;
        }
        Some(Decimal::from(self.hits) * Decimal::ONE_HUNDRED / Decimal::from(self.total))
    }

    pub fn render(&self) -> Option<String> {
        self.percent().map(render_pct)
    }
}

/// Half-up rounding to one decimal, rendered with exactly one fractional digit.
pub fn round1(value: Decimal) -> Decimal {
    value.round_dp_with_strategy(1, RoundingStrategy::MidpointAwayFromZero)
}

pub fn render_pct(value: Decimal) -> String {
    format!("{:.1}", round1(value))
}

/// Mean of a slice of decimals; `None` for an empty slice.
pub fn mean(values: &[Decimal]) -> Option<Decimal> {
    if values.is_empty() {
        return None;
    }
    let sum: Decimal = values.iter().copied().sum();
    Some(sum / Decimal::from(values.len()))
}

/// Converts an `f64` into a decimal for reporting. Non-finite values map to zero.
pub fn dec(value: f64) -> Decimal {
    Decimal::from_f64(value).unwrap_or_default()
}
