//! The delivery world: riders on a square grid, a Poisson order stream with
//! daily peaks, and a fixed per-tick update order.

mod config;
mod geometry;
mod world;

pub use config::{ConfigError, SimConfig, OFFER_LIMIT, PEAK_HALF_WIDTH};
pub use geometry::{move_toward, Position};
pub use world::{
    generate_orders, run_simulation, Assignment, DayStats, Order, OrderState, RiderState, SimError, SimOptions,
    WorldState, RIDER_MEMORY_CAPACITY,
};
