//! Cell-bucketed index of agent slots, one compressed table per species.
//!
//! Buckets hold indices into the world's agent vector in ascending order, so
//! the first entry of a bucket is always the lowest id in that cell.

use alloc::vec;
use alloc::vec::Vec;

use super::{AgentState, Species};

#[derive(Clone, Debug, Default)]
struct Buckets {
    start: Vec<u32>,
    slots: Vec<u32>,
}

impl Buckets {
    fn rebuild(&mut self, cells: usize, agents: &[AgentState], species: Species, width: u32) {
        self.start.clear();
        self.start.resize(cells + 1, 0);
        for a in agents.iter().filter(|a| a.species == species) {
            self.start[a.pos.cell(width) + 1] += 1;
        }
        for c in 0..cells {
            self.start[c + 1] += self.start[c];
        }
        let total = self.start[cells] as usize;
        self.slots.clear();
        self.slots.resize(total, 0);
        let mut fill: Vec<u32> = self.start[..cells].to_vec();
        for (i, a) in agents.iter().enumerate() {
            if a.species == species {
                let c = a.pos.cell(width);
                self.slots[fill[c] as usize] = i as u32;
                fill[c] += 1;
            }
        }
    }

    #[inline]
    fn cell(&self, cell: usize) -> &[u32] {
        &self.slots[self.start[cell] as usize..self.start[cell + 1] as usize]
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct SpatialIndex {
    width: u32,
    height: u32,
    by_species: [Buckets; 2],
}

impl SpatialIndex {
    pub(crate) fn rebuild(&mut self, width: u32, height: u32, agents: &[AgentState]) {
        self.width = width;
        self.height = height;
        let cells = width as usize * height as usize;
        for s in Species::ALL {
            self.by_species[s.index()].rebuild(cells, agents, s, width);
        }
    }

    #[inline]
    pub(crate) fn at(&self, species: Species, cell: usize) -> &[u32] {
        self.by_species[species.index()].cell(cell)
    }

    pub(crate) fn occupied(&self, cell: usize) -> bool {
        !self.at(Species::Predator, cell).is_empty() || !self.at(Species::Prey, cell).is_empty()
    }

    /// Visits every agent slot of `species` whose cell lies within Chebyshev
    /// `radius` of `(cx, cy)` on the torus, passing the signed offset.
    pub(crate) fn for_each_near<F>(&self, species: Species, cx: u32, cy: u32, radius: u32, mut f: F)
    where
        F: FnMut(i32, i32, u32),
    {
        let r = radius as i32;
        let (w, h) = (self.width as i32, self.height as i32);
        // A window wider than the torus would visit cells twice.
        let rx = r.min((w - 1) / 2);
        let ry = r.min((h - 1) / 2);
        for dy in -ry..=ry {
            let y = (cy as i32 + dy).rem_euclid(h);
            for dx in -rx..=rx {
                let x = (cx as i32 + dx).rem_euclid(w);
                let cell = y as usize * self.width as usize + x as usize;
                for &slot in self.at(species, cell) {
                    f(dx, dy, slot);
                }
            }
        }
    }
}

pub(crate) fn empty_index() -> SpatialIndex {
    SpatialIndex {
        width: 0,
        height: 0,
        by_species: [Buckets { start: vec![0], slots: Vec::new() }, Buckets { start: vec![0], slots: Vec::new() }],
    }
}
