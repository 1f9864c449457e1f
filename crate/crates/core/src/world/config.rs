use serde::{Deserialize, Serialize};

use super::WorldError;

/// Geometry, mechanics constants and seed of a world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub width: u32,
    pub height: u32,
    /// Fraction of cells turned into walls at initialisation.
    pub wall_fraction: f64,
    /// Observation windows are `(2 * obs_radius + 1)` cells on a side.
    pub obs_radius: u32,
    /// Side of the square predation scope; odd.
    pub predation_scope: u32,
    /// Observation channels: 4 (RGB + health) or 7 (+ attack, resilience, speed).
    pub channels: u32,
    pub move_cost: f64,
    pub capture_gain: f64,
    pub health_cap: f64,
    /// Upper bound on the total number of living agents; excess births are dropped.
    pub max_population: u32,
    /// Upper bound on unit steps per move when speed traits are active.
    pub speed_cap: u32,
    /// Env3: attacks wear a prey down across ticks. When unset only the
    /// attacks of a single tick count against its resilience.
    #[serde(default = "yes")]
    pub damage_persists: bool,
    /// Env3: attackers of one kill share capture_gain like the reward
    /// instead of each receiving it in full.
    #[serde(default)]
    pub share_gain: bool,
    /// Length of the per-agent identity vector.
    pub id_dim: u32,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            width: 600,
            height: 600,
            wall_fraction: 0.02,
            obs_radius: 5,
            predation_scope: 5,
            channels: 4,
            move_cost: 0.01,
            capture_gain: 0.5,
            health_cap: 1.0,
            max_population: 10_000,
            speed_cap: 3,
            damage_persists: true,
            share_gain: false,
            id_dim: 16,
            seed: 0,
        }
    }
}

fn yes() -> bool {
    true
}

impl WorldConfig {
    pub fn obs_side(&self) -> usize {
        2 * self.obs_radius as usize + 1
    }

    pub fn cells(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let side = 2 * self.obs_radius + 1;
        if self.width < side || self.height < side {
            return Err(WorldError::Config("width and height must be at least 2*obs_radius+1"));
        }
        if self.predation_scope % 2 == 0 || self.predation_scope > self.width.min(self.height) {
            return Err(WorldError::Config("predation_scope must be odd and fit inside the grid"));
        }
        if !(0.0..=1.0).contains(&self.wall_fraction) {
            return Err(WorldError::Config("wall_fraction must lie in [0, 1]"));
        }
        if self.channels != 4 && self.channels != 7 {
            return Err(WorldError::Config("channels must be 4 or 7"));
        }
        if !(self.move_cost > 0.0) || !(self.capture_gain > 0.0) || !(self.health_cap >= 1.0) {
            return Err(WorldError::Config(
                "move_cost and capture_gain must be positive and health_cap at least 1",
            ));
        }
        if self.speed_cap == 0 {
            return Err(WorldError::Config("speed_cap must be at least 1"));
        }
        Ok(())
    }
}
