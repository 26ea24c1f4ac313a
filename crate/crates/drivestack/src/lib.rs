//! File formats, plotting and the command-line front end around
//! `drivestack-core`.

use std::time::Instant;

use drivestack_core::clock::Clock;

pub mod cli;
pub mod formats;
pub mod svg;

/// Monotonic wall clock measured from construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    start: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        Self { start: Instant::now() }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}
