use alloc::vec;
use alloc::vec::Vec;

use super::{AgentId, Species, World, WorldError};

pub const PREY_RGB: [f64; 3] = [1.0, 0.0, 0.0];
pub const PREDATOR_RGB: [f64; 3] = [0.0, 0.0, 1.0];
pub const WALL_RGB: [f64; 3] = [0.0, 0.0, 0.0];
pub const EMPTY_RGB: [f64; 3] = [1.0, 1.0, 1.0];

/// Square egocentric view, stored channel-major: `data[(c * side + row) * side + col]`.
///
/// Row `r` and column `q` show the cell at offset `(q - radius, r - radius)`
/// from the observer. Channels 0-2 are RGB, 3 is the occupant's health and,
/// for 7-channel views, 4-6 are attack, remaining resilience and speed.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub side: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Observation {
    pub fn zeros(side: usize, channels: usize) -> Self {
        Observation { side, channels, data: vec![0.0; side * side * channels] }
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.side + row) * self.side + col]
    }

    /// Value at a signed offset from the centre.
    pub fn at_offset(&self, channel: usize, dx: i32, dy: i32) -> f64 {
        let r = (self.side / 2) as i32;
        self.get(channel, (r + dy) as usize, (r + dx) as usize)
    }

    pub fn rgb_at_offset(&self, dx: i32, dy: i32) -> [f64; 3] {
        [self.at_offset(0, dx, dy), self.at_offset(1, dx, dy), self.at_offset(2, dx, dy)]
    }
}

impl World {
    pub fn observe(&self, id: AgentId) -> Result<Observation, WorldError> {
        let slot = self.slot_of(id).ok_or(WorldError::UnknownAgent(id))?;
        let mut obs = Observation::zeros(self.config.obs_side(), self.config.channels as usize);
        self.observe_slot_into(slot, &mut obs.data);
        Ok(obs)
    }

    /// Writes the view of the agent in `slot` into `out` (length side^2 * channels).
    ///
    /// A cell with several occupants shows its lowest-id predator, or its
    /// lowest-id prey when no predator is present.
    pub fn observe_slot_into(&self, slot: usize, out: &mut [f64]) {
        let side = self.config.obs_side();
        let plane = side * side;
        let channels = self.config.channels as usize;
        debug_assert_eq!(out.len(), plane * channels);
        let r = self.config.obs_radius as i32;
        let (w, h) = (self.config.width as i32, self.config.height as i32);
        let centre = self.agents[slot].pos;
        for row in 0..side {
            let y = (centre.y as i32 + row as i32 - r).rem_euclid(h) as usize;
            for col in 0..side {
                let x = (centre.x as i32 + col as i32 - r).rem_euclid(w) as usize;
                let cell = y * self.config.width as usize + x;
                let k = row * side + col;
                let occupant = self
                    .index
                    .at(Species::Predator, cell)
                    .first()
                    .or_else(|| self.index.at(Species::Prey, cell).first());
                let rgb = match occupant {
                    _ if self.walls[cell] => WALL_RGB,
                    Some(&s) if self.agents[s as usize].species == Species::Predator => PREDATOR_RGB,
                    Some(_) => PREY_RGB,
                    None => EMPTY_RGB,
                };
                out[k] = rgb[0];
                out[plane + k] = rgb[1];
                out[2 * plane + k] = rgb[2];
                let extra = match occupant {
                    Some(&s) if !self.walls[cell] => Some(&self.agents[s as usize]),
                    _ => None,
                };
                out[3 * plane + k] = extra.map_or(0.0, |a| a.health);
                if channels == 7 {
                    let (att, res, spd) =
                        extra.map_or((0.0, 0.0, 0.0), |a| match a.species {
                            Species::Predator => (a.traits.attack, 0.0, a.traits.speed),
                            Species::Prey => (0.0, a.resilience_left(), a.traits.speed),
                        });
                    out[4 * plane + k] = att;
                    out[5 * plane + k] = res;
                    out[6 * plane + k] = spd;
                }
            }
        }
    }
}
