//! Allocentric geometric map: one channel for occupied/free, one for
//! explored/unexplored, sized to the environment grid.

use serde::{Deserialize, Serialize};

use super::ray::{ray_angles, trace_ray, DepthScan};
use super::{AgentPose, Cell, GridMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricMap {
    width: usize,
    height: usize,
    explored: Vec<bool>,
    occupied: Vec<bool>,
}

impl GeometricMap {
    pub fn new(width: usize, height: usize) -> Self {
        GeometricMap {
            width,
            height,
            explored: vec![false; width * height],
            occupied: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn idx(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    pub fn is_explored(&self, c: Cell) -> bool {
        self.explored[self.idx(c)]
    }

    pub fn is_marked_occupied(&self, c: Cell) -> bool {
        self.occupied[self.idx(c)]
    }

    pub fn explored_count(&self) -> usize {
        self.explored.iter().filter(|&&b| b).count()
    }

    /// Integrate one depth scan taken at `pose`. Cells crossed by rays are
    /// marked explored; terminal blocked cells are marked explored and
    /// occupied. Re-applying the same scan changes nothing.
    pub fn integrate_scan(&mut self, map: &GridMap, pose: AgentPose, scan: &DepthScan) {
        let own = self.idx(pose.cell);
        self.explored[own] = true;
        for angle in ray_angles(pose.heading.degrees(), scan.distances.len(), scan.fov_degrees) {
            let trace = trace_ray(map, pose.cell, angle, scan.max_range);
            for c in &trace.free_cells {
                let i = self.idx(*c);
                self.explored[i] = true;
            }
            if let Some(hit) = trace.hit {
                let i = self.idx(hit);
                self.explored[i] = true;
                self.occupied[i] = true;
            }
        }
    }

    /// Two planes, occupancy then exploration, as 0/1 values in row-major
    /// `(2, height, width)` order — the encoder input layout.
    pub fn as_planes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.width * self.height);
        out.extend(self.occupied.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        out.extend(self.explored.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        out
    }
}
