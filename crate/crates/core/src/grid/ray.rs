//! Digital differential ray casting over the occupancy grid.

use serde::{Deserialize, Serialize};

use super::{AgentPose, Cell, GridMap};

/// 1-D depth scan: ray lengths in cell units, fanned over a field of view
/// centered on the agent's heading. Carries its own geometry so a scan can
/// be re-traced against the map it was taken in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthScan {
    pub distances: Vec<f64>,
    pub fov_degrees: f64,
    pub max_range: f64,
}

/// One traced ray: the free cells it crossed (excluding the origin), the
/// blocked cell it stopped at if any, and the center-to-center distance.
#[derive(Debug, Clone)]
pub struct RayTrace {
    pub free_cells: Vec<Cell>,
    pub hit: Option<Cell>,
    pub distance: f64,
}

/// Walk the grid from the center of `origin` along `angle_degrees`
/// (0° = east, counter-clockwise positive) using Amanatides-Woo stepping.
/// Stops at the first blocked cell, at `max_range` (center distance), or on
/// leaving the grid.
pub fn trace_ray(map: &GridMap, origin: Cell, angle_degrees: f64, max_range: f64) -> RayTrace {
    let theta = angle_degrees.to_radians();
    // y grows south, so a counter-clockwise angle has negative dy.
    let (dx, dy) = (theta.cos(), -theta.sin());
    let (ox, oy) = (origin.x as f64 + 0.5, origin.y as f64 + 0.5);

    let mut cx = origin.x;
    let mut cy = origin.y;
    let step_x: i32 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i32 = if dy > 0.0 { 1 } else { -1 };
    // Parameter t at which the ray crosses the next cell boundary per axis.
    let mut t_max_x = if dx != 0.0 {
        let edge = if dx > 0.0 { cx as f64 + 1.0 } else { cx as f64 };
        (edge - ox) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy != 0.0 {
        let edge = if dy > 0.0 { cy as f64 + 1.0 } else { cy as f64 };
        (edge - oy) / dy
    } else {
        f64::INFINITY
    };
    let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };

    let mut free_cells = Vec::new();
    loop {
        if t_max_x < t_max_y {
            t_max_x += t_delta_x;
            cx += step_x;
        } else {
            t_max_y += t_delta_y;
            cy += step_y;
        }
        let cell = Cell::new(cx, cy);
        if !map.in_bounds(cell) {
            return RayTrace { free_cells, hit: None, distance: max_range };
        }
        let center_dist =
            ((cx as f64 + 0.5 - ox).powi(2) + (cy as f64 + 0.5 - oy).powi(2)).sqrt();
        if map.is_blocked(cell) {
            return RayTrace { free_cells, hit: Some(cell), distance: center_dist.min(max_range) };
        }
        if center_dist >= max_range {
            return RayTrace { free_cells, hit: None, distance: max_range };
        }
        free_cells.push(cell);
    }
}

/// Cast `n_rays` over `fov_degrees` centered on the heading. Ray `i` points
/// at `heading − fov/2 + i·fov/(n_rays−1)`; a single ray points straight
/// ahead.
pub fn ray_cast_scan(
    map: &GridMap,
    pose: AgentPose,
    n_rays: usize,
    fov_degrees: f64,
    max_range: f64,
) -> DepthScan {
    assert!(n_rays >= 1, "n_rays must be at least 1");
    let distances = ray_angles(pose.heading.degrees(), n_rays, fov_degrees)
        .map(|angle| trace_ray(map, pose.cell, angle, max_range).distance.max(f64::MIN_POSITIVE))
        .collect();
    DepthScan { distances, fov_degrees, max_range }
}

pub(crate) fn ray_angles(
    heading_degrees: f64,
    n_rays: usize,
    fov_degrees: f64,
) -> impl Iterator<Item = f64> {
    (0..n_rays).map(move |i| {
        if n_rays == 1 {
            heading_degrees
        } else {
            heading_degrees - fov_degrees / 2.0
                + i as f64 * fov_degrees / (n_rays as f64 - 1.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Heading;

    #[test]
    fn forward_ray_in_corridor() {
        // Wall 5 cells ahead of the agent at (1,1) heading east.
        let m = GridMap::parse("########\n#.....##\n########", 1.0).unwrap();
        let pose = AgentPose::new(Cell::new(1, 1), Heading::East);
        let scan = ray_cast_scan(&m, pose, 1, 0.0, 20.0);
        assert_eq!(scan.distances, vec![5.0]);
    }

    #[test]
    fn open_map_rays_hit_max_range() {
        let rows = vec![".".repeat(40); 40].join("\n");
        let m = GridMap::parse(&rows, 1.0).unwrap();
        let pose = AgentPose::new(Cell::new(20, 20), Heading::East);
        let scan = ray_cast_scan(&m, pose, 9, 90.0, 7.5);
        assert!(scan.distances.iter().all(|&d| d == 7.5));
    }

    #[test]
    fn adjacent_wall_returns_one() {
        let m = GridMap::parse(".#", 1.0).unwrap();
        let pose = AgentPose::new(Cell::new(0, 0), Heading::East);
        let scan = ray_cast_scan(&m, pose, 1, 0.0, 10.0);
        assert_eq!(scan.distances, vec![1.0]);
    }

    #[test]
    fn forward_ray_matches_cell_walk_oracle() {
        let m = GridMap::parse("##########\n#........#\n#..#.....#\n##########", 1.0).unwrap();
        for (start, heading) in [
            (Cell::new(1, 1), Heading::East),
            (Cell::new(8, 1), Heading::West),
            (Cell::new(4, 2), Heading::North),
            (Cell::new(1, 2), Heading::East),
        ] {
            // Oracle: walk cell by cell along the heading until blocked.
            let (dx, dy) = heading.delta();
            let mut k = 1;
            while m.is_free(start.offset(dx * k, dy * k)) {
                k += 1;
            }
            let scan = ray_cast_scan(&m, AgentPose::new(start, heading), 1, 0.0, 100.0);
            assert_eq!(scan.distances[0], k as f64, "{start:?} {heading:?}");
        }
    }

    #[test]
    fn fan_covers_fov() {
        let angles: Vec<f64> = ray_angles(90.0, 5, 90.0).collect();
        assert_eq!(angles, vec![45.0, 67.5, 90.0, 112.5, 135.0]);
    }
}
