//! Node motion: Gauss-Markov, random waypoint and static models over a
//! five-band benchmark layout (or a single uniform region).

use std::f64::consts::{PI, TAU};
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimConfig;
use crate::packet::NodeId;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityModel {
    GaussMarkov,
    RandomWaypoint,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLayout {
    #[serde(rename = "benchmark_5")]
    Benchmark5,
    Uniform,
}

/// Relative speed variance of the five bands, left (source) to right
/// (destination).
pub const BAND_VARIANCE_SCALES: [f64; 5] = [0.5, 1.0, 2.0, 1.0, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilityConfig {
    pub model: MobilityModel,
    /// Memory parameter μ in `[0, 1]`; 1 keeps the previous value forever.
    pub mu: f64,
    /// Long-run mean speed (the dynamic level).
    pub mean_speed_mps: f64,
    /// Std-dev of the speed perturbation. Defaults to half the mean speed.
    pub speed_sigma: Option<f64>,
    /// Std-dev of the heading perturbation in radians. Defaults to π/4.
    pub angle_sigma: Option<f64>,
    pub region_layout: RegionLayout,
    pub region_overlap_frac: f64,
    /// Mobility tick. Defaults to the slot duration.
    pub update_seconds: Option<f64>,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            model: MobilityModel::GaussMarkov,
            mu: 0.85,
            mean_speed_mps: 5.0,
            speed_sigma: None,
            angle_sigma: None,
            region_layout: RegionLayout::Benchmark5,
            region_overlap_frac: 0.10,
            update_seconds: None,
        }
    }
}

impl MobilityConfig {
    pub fn speed_sigma(&self) -> f64 {
        self.speed_sigma.unwrap_or(self.mean_speed_mps / 2.0)
    }

    pub fn angle_sigma(&self) -> f64 {
        self.angle_sigma.unwrap_or(PI / 4.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("benchmark_5 layout needs at least 5 nodes, got {0}")]
    TooFewNodes(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub left: f64,
    pub right: f64,
    pub bottom: f64,
    pub top: f64,
}

impl Rect {
    pub fn area(width: f64, height: f64) -> Self {
        Self {
            left: 0.0,
            right: width,
            bottom: 0.0,
            top: height,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.left && x <= self.right && y >= self.bottom && y <= self.top
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.left + self.right) / 2.0,
            (self.bottom + self.top) / 2.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub bounds: Rect,
    /// Multiplier on `speed_sigma²`.
    pub variance_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionAssignment {
    pub regions: Vec<Region>,
    pub node_region: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeKinematics {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
    pub mean_heading: f64,
    pub region: usize,
    /// Current target of the random-waypoint model.
    pub waypoint: Option<(f64, f64)>,
}

impl NodeKinematics {
    pub fn at(x: f64, y: f64, region: usize) -> Self {
        Self {
            x,
            y,
            speed: 0.0,
            heading: 0.0,
            mean_heading: 0.0,
            region,
            waypoint: None,
        }
    }
}

/// Five vertical bands with pairwise overlap, source flows pinned left and
/// destinations right; everyone else fills the least-populated band.
pub fn assign_regions(cfg: &SimConfig) -> Result<RegionAssignment, MobilityError> {
    let n = cfg.node_count;
    let area = Rect::area(cfg.area_width_m, cfg.area_height_m);
    if cfg.mobility.region_layout == RegionLayout::Uniform {
        return Ok(RegionAssignment {
            regions: vec![Region {
                bounds: area,
                variance_scale: 1.0,
            }],
            node_region: vec![0; n],
        });
    }
    if n < 5 {
        return Err(MobilityError::TooFewNodes(n));
    }
    let overlap = cfg.mobility.region_overlap_frac;
    let band_width = cfg.area_width_m / (5.0 - 4.0 * overlap);
    let stride = band_width * (1.0 - overlap);
    let regions: Vec<Region> = BAND_VARIANCE_SCALES
        .iter()
        .enumerate()
        .map(|(b, &scale)| {
            let left = b as f64 * stride;
            Region {
                bounds: Rect {
                    left,
                    right: (left + band_width).min(cfg.area_width_m),
                    bottom: 0.0,
                    top: cfg.area_height_m,
                },
                variance_scale: scale,
            }
        })
        .collect();

    let mut node_region: Vec<Option<usize>> = vec![None; n];
    let mut counts = [0usize; 5];
    for flow in &cfg.flows {
        for (node, band) in [(flow.source, 0), (flow.destination, 4)] {
            if let Some(slot) = node_region.get_mut(node.index()) {
                if slot.is_none() {
                    *slot = Some(band);
                    counts[band] += 1;
                }
            }
        }
    }
    for slot in node_region.iter_mut().filter(|s| s.is_none()) {
        let band = (0..5).min_by_key(|&b| (counts[b], b)).unwrap_or(0);
        *slot = Some(band);
        counts[band] += 1;
    }
    Ok(RegionAssignment {
        regions,
        node_region: node_region.into_iter().map(|r| r.unwrap_or(0)).collect(),
    })
}

/// Representative of `angle` (mod 2π) closest to `reference`.
fn nearest_branch(angle: f64, reference: f64) -> f64 {
    angle + TAU * ((reference - angle) / TAU).round()
}

/// Keep the node inside its region; any clamp also re-aims the mean heading
/// at the region center.
pub fn reflect_at_edges(mut k: NodeKinematics, bounds: &Rect) -> NodeKinematics {
    let mut clamped = false;
    if k.x < bounds.left {
        k.x = bounds.left;
        clamped = true;
    } else if k.x > bounds.right {
        k.x = bounds.right;
        clamped = true;
    }
    if k.y < bounds.bottom {
        k.y = bounds.bottom;
        clamped = true;
    } else if k.y > bounds.top {
        k.y = bounds.top;
        clamped = true;
    }
    if clamped {
        let (cx, cy) = bounds.center();
        let inward = (cy - k.y).atan2(cx - k.x);
        k.mean_heading = nearest_branch(inward, k.heading);
    }
    k
}

pub fn gm_step(
    k: &NodeKinematics,
    cfg: &MobilityConfig,
    region: &Region,
    dt: f64,
    rng: &mut SimRng,
) -> NodeKinematics {
    let mu = cfg.mu;
    let memory = (1.0 - mu * mu).max(0.0).sqrt();
    let g_v = rng.gaussian(cfg.speed_sigma() * region.variance_scale.sqrt());
    let g_phi = rng.gaussian(cfg.angle_sigma());
    let speed = (mu * k.speed + (1.0 - mu) * cfg.mean_speed_mps + memory * g_v).max(0.0);
    let heading = mu * k.heading + (1.0 - mu) * k.mean_heading + memory * g_phi;
    let next = NodeKinematics {
        x: k.x + speed * dt * heading.cos(),
        y: k.y + speed * dt * heading.sin(),
        speed,
        heading,
        mean_heading: k.mean_heading,
        region: k.region,
        waypoint: k.waypoint,
    };
    reflect_at_edges(next, &region.bounds)
}

fn sample_waypoint_speed(cfg: &MobilityConfig, region: &Region, rng: &mut SimRng) -> f64 {
    let v = cfg.mean_speed_mps;
    (v + rng.gaussian(cfg.speed_sigma() * region.variance_scale.sqrt())).max(0.1 * v)
}

pub fn rwp_step(
    k: &NodeKinematics,
    cfg: &MobilityConfig,
    region: &Region,
    dt: f64,
    rng: &mut SimRng,
) -> NodeKinematics {
    let b = region.bounds;
    let mut next = k.clone();
    let reached =
        |n: &NodeKinematics| matches!(n.waypoint, Some((wx, wy)) if wx == n.x && wy == n.y);
    if next.waypoint.is_none() || reached(&next) {
        next.waypoint = Some((
            rng.uniform_range(b.left, b.right),
            rng.uniform_range(b.bottom, b.top),
        ));
        next.speed = sample_waypoint_speed(cfg, region, rng);
    }
    let (wx, wy) = next.waypoint.unwrap_or((next.x, next.y));
    let (dx, dy) = (wx - next.x, wy - next.y);
    let dist = dx.hypot(dy);
    let step = next.speed * dt;
    if dist <= step {
        next.x = wx;
        next.y = wy;
        next.waypoint = Some((
            rng.uniform_range(b.left, b.right),
            rng.uniform_range(b.bottom, b.top),
        ));
        next.speed = sample_waypoint_speed(cfg, region, rng);
    } else {
        next.heading = dy.atan2(dx);
        next.x += step * dx / dist;
        next.y += step * dy / dist;
    }
    reflect_at_edges(next, &b)
}

/// Positions and motion state for every node in an episode.
#[derive(Debug, Clone)]
pub struct Mobility {
    cfg: MobilityConfig,
    regions: Vec<Region>,
    nodes: Vec<NodeKinematics>,
    rng: SimRng,
    tick_seconds: f64,
    slot_seconds: f64,
    clock: f64,
}

impl Mobility {
    pub fn new(cfg: &SimConfig, mut rng: SimRng) -> Result<Self, MobilityError> {
        let assignment = assign_regions(cfg)?;
        let mcfg = cfg.mobility.clone();
        let nodes = (0..cfg.node_count)
            .map(|i| {
                let region = assignment.node_region[i];
                let b = assignment.regions[region].bounds;
                let (x, y) = match &cfg.positions {
                    Some(p) => (p[i][0], p[i][1]),
                    None => (
                        rng.uniform_range(b.left, b.right),
                        rng.uniform_range(b.bottom, b.top),
                    ),
                };
                let heading = rng.uniform_range(0.0, TAU);
                NodeKinematics {
                    x,
                    y,
                    speed: mcfg.mean_speed_mps,
                    heading,
                    mean_heading: heading,
                    region,
                    waypoint: None,
                }
            })
            .collect();
        Ok(Self {
            tick_seconds: mcfg.update_seconds.unwrap_or(cfg.slot_seconds),
            slot_seconds: cfg.slot_seconds,
            cfg: mcfg,
            regions: assignment.regions,
            nodes,
            rng,
            clock: 0.0,
        })
    }

    pub fn nodes(&self) -> &[NodeKinematics] {
        &self.nodes
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn position(&self, node: NodeId) -> (f64, f64) {
        let k = &self.nodes[node.index()];
        (k.x, k.y)
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let (ax, ay) = self.position(a);
        let (bx, by) = self.position(b);
        (ax - bx).hypot(ay - by)
    }

    /// Advance by one mobility tick, in node order.
    pub fn tick(&mut self) {
        let dt = self.tick_seconds;
        for k in self.nodes.iter_mut() {
            let region = self.regions[k.region];
            *k = match self.cfg.model {
                MobilityModel::GaussMarkov => gm_step(k, &self.cfg, &region, dt, &mut self.rng),
                MobilityModel::RandomWaypoint => rwp_step(k, &self.cfg, &region, dt, &mut self.rng),
                MobilityModel::Static => continue,
            };
        }
    }

    /// Run however many ticks fall inside one slot.
    pub fn advance_slot(&mut self) {
        if self.cfg.model == MobilityModel::Static {
            return;
        }
        self.clock += self.slot_seconds;
        while self.clock + 1e-12 >= self.tick_seconds {
            self.tick();
            self.clock -= self.tick_seconds;
        }
    }

    /// Append `slot,node,x,y,speed` rows.
    pub fn log_positions<W: io::Write + ?Sized>(&self, slot: u64, out: &mut W) -> io::Result<()> {
        for (i, k) in self.nodes.iter().enumerate() {
            writeln!(out, "{slot},{i},{},{},{}", k.x, k.y, k.speed)?;
        }
        Ok(())
    }
}
