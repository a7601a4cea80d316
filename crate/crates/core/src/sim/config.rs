use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Orders within this many ticks of a peak tick are generated at the peak rate.
pub const PEAK_HALF_WIDTH: u64 = 5;

/// Maximum number of pending orders offered to a rider in one tick.
pub const OFFER_LIMIT: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Parameters of the delivery world. Keys in the config file are exactly
/// these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub grid_size: u32,
    pub total_steps: u64,
    pub steps_per_day: u64,
    pub n_riders: u32,
    pub max_move_per_step: u32,
    pub order_cap: u32,
    pub peak_ticks_per_day: Vec<u64>,
    /// Mean orders generated per off-peak tick.
    pub base_order_rate: f64,
    pub peak_multiplier: f64,
    /// Labor cost accrued per rider per working tick.
    pub wage_rate: f64,
    /// Inclusive `[min, max]` payment per order.
    pub payment_range: [u32; 2],
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid_size: 200,
            total_steps: 3600,
            steps_per_day: 120,
            n_riders: 100,
            max_move_per_step: 30,
            order_cap: 3,
            // 07:00, 12:00 and 18:00 at 120 ticks per day
            peak_ticks_per_day: vec![35, 60, 90],
            base_order_rate: 3.0,
            peak_multiplier: 3.0,
            wage_rate: 1.0,
            payment_range: [5, 15],
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid_size == 0 {
            return Err(invalid("grid_size", "must be > 0"));
        }
        if self.steps_per_day == 0 {
            return Err(invalid("steps_per_day", "must be > 0"));
        }
        if !self.total_steps.is_multiple_of(self.steps_per_day) {
            return Err(invalid(
                "total_steps",
                format!("{} is not a multiple of steps_per_day", self.total_steps),
            ));
        }
        if self.max_move_per_step == 0 {
            return Err(invalid("max_move_per_step", "must be > 0"));
        }
        if self.order_cap == 0 {
            return Err(invalid("order_cap", "must be >= 1"));
        }
        if let Some(t) = self
            .peak_ticks_per_day
            .iter()
            .find(|&&t| t >= self.steps_per_day)
        {
            return Err(invalid(
                "peak_ticks_per_day",
                format!("peak tick {t} outside [0, steps_per_day)"),
            ));
        }
        if !(self.base_order_rate.is_finite() && self.base_order_rate >= 0.0) {
            return Err(invalid("base_order_rate", "must be finite and >= 0"));
        }
        if !(self.peak_multiplier.is_finite() && self.peak_multiplier >= 0.0) {
            return Err(invalid("peak_multiplier", "must be finite and >= 0"));
        }
        if !(self.wage_rate.is_finite() && self.wage_rate >= 0.0) {
            return Err(invalid("wage_rate", "must be finite and >= 0"));
        }
        if self.payment_range[0] > self.payment_range[1] {
            return Err(invalid("payment_range", "min exceeds max"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("SimConfig always serializes")
    }

    pub fn days(&self) -> u64 {
        self.total_steps / self.steps_per_day
    }

    /// Hour of day (0..24) that a tick falls in.
    pub fn hour_of_tick(&self, tick: u64) -> u32 {
        let tod = tick % self.steps_per_day;
        (tod * 24 / self.steps_per_day) as u32
    }

    /// Ticks per hour as a real number; hours = ticks / ticks_per_hour.
    pub fn ticks_per_hour(&self) -> f64 {
        self.steps_per_day as f64 / 24.0
    }

    /// Hex SHA-256 of the canonical JSON form; identifies the config in traces.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("SimConfig always serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn is_peak(&self, tick: u64) -> bool {
        let tod = tick % self.steps_per_day;
        let day = self.steps_per_day;
        self.peak_ticks_per_day.iter().any(|&p| {
            let d = tod.abs_diff(p);
            // peaks near midnight wrap into the neighbouring day
            d.min(day - d) <= PEAK_HALF_WIDTH
        })
    }

    pub fn order_rate(&self, tick: u64) -> f64 {
        if self.is_peak(tick) {
            self.base_order_rate * self.peak_multiplier
        } else {
            self.base_order_rate
        }
    }
}
