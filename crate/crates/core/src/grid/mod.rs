//! Grid-world geometry: occupancy maps, agent kinematics, pathfinding,
//! ray sensing, and the allocentric geometric map.
//!
//! Coordinates are `(x, y)` with `x` growing east (right) and `y` growing
//! south (down), matching the row order of ASCII map files. Headings are
//! the four cardinals; angle 0° points east and angles grow
//! counter-clockwise, so north is 90°.

mod gen;
mod geom;
mod path;
mod ray;

pub use gen::MapStyle;
pub use geom::GeometricMap;
pub use ray::{ray_cast_scan, trace_ray, DepthScan, RayTrace};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("map rows have unequal lengths")]
    RaggedRows,
    #[error("unknown map character {0:?}")]
    UnknownChar(char),
    #[error("map has no free cells")]
    NoFreeCells,
    #[error("map is empty")]
    EmptyMap,
    #[error("map dimensions too small: {0}x{1} (minimum 4x4)")]
    TooSmall(usize, usize),
    #[error("cell ({0}, {1}) is blocked or out of bounds")]
    BlockedCell(i32, i32),
    #[error("invalid resolution {0}")]
    BadResolution(f64),
    #[error("missing or malformed map header (expected `resolution=<float>`)")]
    BadHeader,
}

/// Grid cell coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Cell::new(self.x + dx, self.y + dy)
    }
}

/// Cardinal headings. Angle 0° = east, growing counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    East,
    North,
    West,
    South,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::East, Heading::North, Heading::West, Heading::South];

    pub fn degrees(self) -> f64 {
        match self {
            Heading::East => 0.0,
            Heading::North => 90.0,
            Heading::West => 180.0,
            Heading::South => 270.0,
        }
    }

    /// Unit step in grid coordinates (y grows south).
    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::East => (1, 0),
            Heading::North => (0, -1),
            Heading::West => (-1, 0),
            Heading::South => (0, 1),
        }
    }

    pub fn left(self) -> Heading {
        match self {
            Heading::East => Heading::North,
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Heading::East => 0,
            Heading::North => 1,
            Heading::West => 2,
            Heading::South => 3,
        }
    }

    pub fn from_index(i: usize) -> Heading {
        Heading::ALL[i]
    }
}

/// Agent pose: a free cell plus a cardinal heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPose {
    pub cell: Cell,
    pub heading: Heading,
}

impl AgentPose {
    pub fn new(cell: Cell, heading: Heading) -> Self {
        AgentPose { cell, heading }
    }
}

/// Low-level action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LowLevelAction {
    MoveForward,
    RotateLeft,
    RotateRight,
    Stop,
}

/// Occupancy grid. Immutable after construction; shared freely across
/// concurrent environment instances.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    occupancy: Vec<bool>,
    resolution: f64,
}

impl GridMap {
    /// Parse an ASCII grid: `'#'` blocked, `'.'` free, rows of equal length.
    pub fn parse(text: &str, resolution: f64) -> Result<GridMap, GridError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(GridError::BadResolution(resolution));
        }
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.is_empty() {
            return Err(GridError::EmptyMap);
        }
        let width = rows[0].chars().count();
        if width == 0 {
            return Err(GridError::EmptyMap);
        }
        let mut occupancy = Vec::with_capacity(width * rows.len());
        for row in &rows {
            if row.chars().count() != width {
                return Err(GridError::RaggedRows);
            }
            for ch in row.chars() {
                match ch {
                    '#' => occupancy.push(true),
                    '.' => occupancy.push(false),
                    other => return Err(GridError::UnknownChar(other)),
                }
            }
        }
        if occupancy.iter().all(|&b| b) {
            return Err(GridError::NoFreeCells);
        }
        Ok(GridMap { width, height: rows.len(), occupancy, resolution })
    }

    /// Load from the map file format: a `resolution=<float>` header line
    /// followed by the ASCII grid.
    pub fn from_map_file(contents: &str) -> Result<GridMap, GridError> {
        let mut lines = contents.lines();
        let header = lines.next().ok_or(GridError::EmptyMap)?;
        let res = header
            .strip_prefix("resolution=")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or(GridError::BadHeader)?;
        let body: String = lines.collect::<Vec<_>>().join("\n");
        GridMap::parse(&body, res)
    }

    /// Serialize back to the map file format.
    pub fn to_map_file(&self) -> String {
        let mut out = format!("resolution={}\n", self.resolution);
        out.push_str(&self.to_ascii());
        out
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(if self.occupancy[y * self.width + x] { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.occupancy[c.y as usize * self.width + c.x as usize]
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        !self.is_free(c)
    }

    pub(crate) fn idx(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let c = Cell::new(x, y);
                if self.is_free(c) {
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn free_cell_count(&self) -> usize {
        self.occupancy.iter().filter(|&&b| !b).count()
    }

    /// Neighbors in the fixed N, E, S, W order used for tie-breaking.
    pub fn free_neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        const ORDER: [(i32, i32); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
        ORDER.iter().map(move |&(dx, dy)| c.offset(dx, dy)).filter(|&n| self.is_free(n))
    }

    /// All free cells 4-connected to `start` (flood fill).
    pub fn component_of(&self, start: Cell) -> Vec<Cell> {
        let mut seen = vec![false; self.width * self.height];
        let mut queue = std::collections::VecDeque::new();
        let mut out = Vec::new();
        if !self.is_free(start) {
            return out;
        }
        seen[self.idx(start)] = true;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            out.push(c);
            for n in self.free_neighbors(c) {
                let i = self.idx(n);
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(n);
                }
            }
        }
        out
    }

    /// Largest 4-connected free component, cells in row-major order.
    pub fn largest_component(&self) -> Vec<Cell> {
        let mut seen = vec![false; self.width * self.height];
        let mut best: Vec<Cell> = Vec::new();
        for c in self.free_cells() {
            if seen[self.idx(c)] {
                continue;
            }
            let comp = self.component_of(c);
            for &cc in &comp {
                seen[self.idx(cc)] = true;
            }
            if comp.len() > best.len() {
                best = comp;
            }
        }
        best.sort();
        best
    }

    /// Apply one low-level action. Collisions are flagged, not errors;
    /// the pose never ends up on an occupied cell.
    pub fn step_low_level(&self, pose: AgentPose, action: LowLevelAction) -> (AgentPose, bool) {
        match action {
            LowLevelAction::RotateLeft => {
                (AgentPose::new(pose.cell, pose.heading.left()), false)
            }
            LowLevelAction::RotateRight => {
                (AgentPose::new(pose.cell, pose.heading.right()), false)
            }
            LowLevelAction::MoveForward => {
                let (dx, dy) = pose.heading.delta();
                let target = pose.cell.offset(dx, dy);
                if self.is_free(target) {
                    (AgentPose::new(target, pose.heading), false)
                } else {
                    (pose, true)
                }
            }
            LowLevelAction::Stop => (pose, false),
        }
    }
}

pub use gen::generate_map;
pub use path::{
    action_distance_field, geodesic_distance, geodesic_distances_from, shortest_action_count,
    shortest_action_path, shortest_path,
};
