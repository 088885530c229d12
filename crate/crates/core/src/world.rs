//! Deployment geometry, mobility and the per-AP downlink packet buffers.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        math::hypot(self.x - other.x, self.y - other.y)
    }

    fn offset(&self, d: Point) -> Point {
        Point::new(self.x + d.x, self.y + d.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub num_subnetworks: usize,
    pub area_side_m: f64,
    /// Exclusion radius: AP centres stay at least twice this far apart.
    pub subnetwork_radius_m: f64,
    /// AP to device distance.
    pub device_distance_m: f64,
    pub speed_mps: f64,
    pub buffer_capacity: u32,
    pub slot_s: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            num_subnetworks: 10,
            area_side_m: 10.0,
            subnetwork_radius_m: 1.0,
            device_distance_m: 0.5,
            speed_mps: 3.0,
            buffer_capacity: 100,
            slot_s: 1e-3,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_subnetworks == 0 {
            return Err(Error::Config { key: "num_subnetworks", reason: "must be >= 1" });
        }
        if !(self.area_side_m.is_finite() && self.area_side_m > 0.0) {
            return Err(Error::Config { key: "area_side_m", reason: "must be > 0" });
        }
        if !(self.subnetwork_radius_m.is_finite() && self.subnetwork_radius_m >= 0.0) {
            return Err(Error::Config { key: "subnetwork_radius_m", reason: "must be >= 0" });
        }
        if !(self.device_distance_m.is_finite() && self.device_distance_m > 0.0) {
            return Err(Error::Config { key: "device_distance_m", reason: "must be > 0" });
        }
        if !(self.speed_mps.is_finite() && self.speed_mps >= 0.0) {
            return Err(Error::Config { key: "speed_mps", reason: "must be >= 0" });
        }
        if self.buffer_capacity == 0 {
            return Err(Error::Config { key: "buffer_capacity", reason: "must be >= 1" });
        }
        if !(self.slot_s.is_finite() && self.slot_s > 0.0) {
            return Err(Error::Config { key: "slot_s", reason: "must be > 0" });
        }
        Ok(())
    }

    fn min_separation(&self) -> f64 {
        2.0 * self.subnetwork_radius_m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub ap_positions: Vec<Point>,
    /// Device position relative to its AP; fixed for the episode.
    pub device_offsets: Vec<Point>,
    pub velocities: Vec<Point>,
    pub area_side_m: f64,
    pub subnetwork_radius_m: f64,
}

const ATTEMPTS_PER_AP: usize = 2_000;
const LAYOUT_RESTARTS: usize = 100;

/// Uniform random non-overlapping placement with random headings at full speed.
pub fn deploy<R: Rng + ?Sized>(cfg: &WorldConfig, rng: &mut R) -> Result<Topology> {
    cfg.validate()?;
    let n = cfg.num_subnetworks;
    let side = cfg.area_side_m;
    let sep = cfg.min_separation();
    let mut best = 0;
    let mut aps: Vec<Point> = Vec::with_capacity(n);
    'layout: for _ in 0..LAYOUT_RESTARTS {
        aps.clear();
        while aps.len() < n {
            let mut placed = false;
            for _ in 0..ATTEMPTS_PER_AP {
                let p = Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
                if aps.iter().all(|q| q.distance(&p) >= sep) {
                    aps.push(p);
                    placed = true;
                    break;
                }
            }
            if !placed {
                best = best.max(aps.len());
                continue 'layout;
            }
        }
        let mut device_offsets = Vec::with_capacity(n);
        let mut velocities = Vec::with_capacity(n);
        for _ in 0..n {
            let (s, c) = math::sin_cos(rng.random::<f64>() * 2.0 * PI);
            device_offsets.push(Point::new(c * cfg.device_distance_m, s * cfg.device_distance_m));
        }
        for _ in 0..n {
            let (s, c) = math::sin_cos(rng.random::<f64>() * 2.0 * PI);
            velocities.push(Point::new(c * cfg.speed_mps, s * cfg.speed_mps));
        }
        return Ok(Topology {
            ap_positions: aps,
            device_offsets,
            velocities,
            area_side_m: side,
            subnetwork_radius_m: cfg.subnetwork_radius_m,
        });
    }
    Err(Error::Packing { placed: best, wanted: n })
}

impl Topology {
    pub fn len(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ap_positions.is_empty()
    }

    pub fn device_positions(&self) -> Vec<Point> {
        self.ap_positions
            .iter()
            .zip(&self.device_offsets)
            .map(|(ap, off)| ap.offset(*off))
            .collect()
    }

    /// Smallest pairwise AP distance (infinite for a single subnetwork).
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(self.ap_positions[i].distance(&self.ap_positions[j]));
            }
        }
        best
    }

    /// Advances every AP by `velocity * dt`, reflecting off the walls.
    ///
    /// Any AP whose candidate position would come closer than twice the
    /// subnetwork radius to another AP stays put and reverses its heading;
    /// this repeats until the candidate layout is collision-free, so the
    /// separation invariant holds after every step.
    pub fn step_mobility(&mut self, dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain("mobility step must be > 0"));
        }
        let n = self.len();
        let side = self.area_side_m;
        let sep = 2.0 * self.subnetwork_radius_m;
        let mut cand = Vec::with_capacity(n);
        let mut vel = self.velocities.clone();
        for (p, v) in self.ap_positions.iter().zip(vel.iter_mut()) {
            let x = reflect(p.x + v.x * dt, side, &mut v.x);
            let y = reflect(p.y + v.y * dt, side, &mut v.y);
            cand.push(Point::new(x, y));
        }
        let mut held = alloc::vec![false; n];
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in i + 1..n {
                    if cand[i].distance(&cand[j]) < sep {
                        for k in [i, j] {
                            if !held[k] {
                                held[k] = true;
                                cand[k] = self.ap_positions[k];
                                vel[k] = Point::new(-self.velocities[k].x, -self.velocities[k].y);
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        self.ap_positions = cand;
        self.velocities = vel;
        Ok(())
    }
}

fn reflect(mut x: f64, side: f64, v: &mut f64) -> f64 {
    if x < 0.0 {
        x = -x;
        *v = -*v;
    } else if x > side {
        x = 2.0 * side - x;
        *v = -*v;
    }
    x.clamp(0.0, side)
}

/// Downlink command-packet buffer of one AP under the flush traffic model:
/// it starts full and never refills.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketBuffer {
    capacity: u32,
    occupancy: u32,
    episode_start: u32,
    flush_slot: Option<u32>,
}

impl PacketBuffer {
    pub fn new(capacity: u32) -> Self {
        Self { capacity, occupancy: capacity, episode_start: 0, flush_slot: None }
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn occupancy(&self) -> u32 {
        self.occupancy
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy == 0
    }

    /// First slot (1-based) at which the buffer ran empty.
    pub fn flush_slot(&self) -> Option<u32> {
        self.flush_slot
    }

    /// Removes the head packet after a successful transmission in `slot`.
    pub fn pop_on_success(&mut self, slot: u32) -> Result<()> {
        if self.occupancy == 0 {
            return Err(Error::EmptyBuffer);
        }
        self.occupancy -= 1;
        if self.occupancy == 0 && self.flush_slot.is_none() {
            self.flush_slot = Some(slot);
        }
        Ok(())
    }

    /// Time the head packet has spent queued at `slot`.
    pub fn wait_s(&self, slot: u32, slot_s: f64) -> f64 {
        f64::from(slot.saturating_sub(self.episode_start)) * slot_s
    }
}
