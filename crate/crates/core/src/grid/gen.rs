//! Procedural map generation: a stand-in corpus for scanned indoor scenes.

use rand::Rng;

use super::{Cell, GridError, GridMap};
use crate::rng::derive_stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapStyle {
    /// Occupied border, fully free interior.
    Open,
    /// Recursive division: rectangular rooms connected by door gaps.
    Rooms,
    /// Recursive-backtracker maze carved on an odd lattice.
    Maze,
}

impl std::str::FromStr for MapStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(MapStyle::Open),
            "rooms" => Ok(MapStyle::Rooms),
            "maze" => Ok(MapStyle::Maze),
            other => Err(format!("unknown map style {other:?} (expected open|rooms|maze)")),
        }
    }
}

/// Generate a map. Deterministic for fixed `(seed, width, height, style)`;
/// the border is fully occupied and the largest free component holds at
/// least half of the free cells (rooms and maze styles are fully connected
/// by construction).
pub fn generate_map(
    seed: u64,
    width: usize,
    height: usize,
    style: MapStyle,
) -> Result<GridMap, GridError> {
    if width < 4 || height < 4 {
        return Err(GridError::TooSmall(width, height));
    }
    let mut grid = vec![vec![false; width]; height];
    for x in 0..width {
        grid[0][x] = true;
        grid[height - 1][x] = true;
    }
    for row in grid.iter_mut() {
        row[0] = true;
        row[width - 1] = true;
    }
    let mut rng = derive_stream(seed, (width as u64) << 32 | height as u64);
    match style {
        MapStyle::Open => {}
        MapStyle::Rooms => divide(&mut grid, 1, 1, width - 2, height - 2, &mut rng),
        MapStyle::Maze => carve_maze(&mut grid, width, height, &mut rng),
    }
    connect_components(&mut grid, width, height);
    let text: String = grid
        .iter()
        .map(|row| row.iter().map(|&b| if b { '#' } else { '.' }).collect::<String>())
        .collect::<Vec<_>>()
        .join("\n");
    GridMap::parse(&text, 1.0)
}

/// Carve walls until all free cells form one 4-connected component.
/// Recursive division can wall off a door when a later perpendicular wall
/// lands on it; this repair pass scans row-major for an interior wall cell
/// adjacent to two different components and opens it, deterministically.
fn connect_components(grid: &mut [Vec<bool>], width: usize, height: usize) {
    loop {
        let labels = label_components(grid, width, height);
        let n_labels = labels.iter().flatten().filter_map(|&l| l).max().map_or(0, |m| m + 1);
        if n_labels <= 1 {
            return;
        }
        let mut carved = false;
        'scan: for y in 1..height - 1 {
            for x in 1..width - 1 {
                if !grid[y][x] {
                    continue;
                }
                let mut seen: Option<usize> = None;
                for (nx, ny) in [(x, y - 1), (x + 1, y), (x, y + 1), (x - 1, y)] {
                    if let Some(l) = labels[ny][nx] {
                        match seen {
                            None => seen = Some(l),
                            Some(prev) if prev != l => {
                                grid[y][x] = false;
                                carved = true;
                                break 'scan;
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        if !carved {
            // Components separated by more than one wall cell: open the
            // first wall next to the largest component's frontier.
            'outer: for y in 1..height - 1 {
                for x in 1..width - 1 {
                    if grid[y][x]
                        && [(x, y - 1), (x + 1, y), (x, y + 1), (x - 1, y)]
                            .iter()
                            .any(|&(nx, ny)| labels[ny][nx] == Some(0))
                    {
                        grid[y][x] = false;
                        break 'outer;
                    }
                }
            }
        }
    }
}

fn label_components(grid: &[Vec<bool>], width: usize, height: usize) -> Vec<Vec<Option<usize>>> {
    let mut labels: Vec<Vec<Option<usize>>> = vec![vec![None; width]; height];
    let mut next = 0usize;
    for sy in 0..height {
        for sx in 0..width {
            if grid[sy][sx] || labels[sy][sx].is_some() {
                continue;
            }
            let mut stack = vec![(sx, sy)];
            labels[sy][sx] = Some(next);
            while let Some((x, y)) = stack.pop() {
                let visit = |nx: usize, ny: usize, labels: &mut Vec<Vec<Option<usize>>>,
                                 stack: &mut Vec<(usize, usize)>| {
                    if !grid[ny][nx] && labels[ny][nx].is_none() {
                        labels[ny][nx] = Some(next);
                        stack.push((nx, ny));
                    }
                };
                if y > 0 {
                    visit(x, y - 1, &mut labels, &mut stack);
                }
                if x + 1 < width {
                    visit(x + 1, y, &mut labels, &mut stack);
                }
                if y + 1 < height {
                    visit(x, y + 1, &mut labels, &mut stack);
                }
                if x > 0 {
                    visit(x - 1, y, &mut labels, &mut stack);
                }
            }
            next += 1;
        }
    }
    labels
}

/// Recursive division with one door per wall, so every room stays reachable.
fn divide(grid: &mut [Vec<bool>], x: usize, y: usize, w: usize, h: usize, rng: &mut impl Rng) {
    if w < 5 && h < 5 {
        return;
    }
    let horizontal = if w > h {
        false
    } else if h > w {
        true
    } else {
        rng.random_bool(0.5)
    };
    if horizontal {
        // Wall row must not sit adjacent to the region border so doors in
        // enclosing walls are never blocked.
        let wy = y + 2 + rng.random_range(0..h - 4) / 2 * 2;
        let door = x + rng.random_range(0..w);
        for gx in x..x + w {
            if gx != door {
                grid[wy][gx] = true;
            }
        }
        divide(grid, x, y, w, wy - y, rng);
        divide(grid, x, wy + 1, w, y + h - wy - 1, rng);
    } else {
        let wx = x + 2 + rng.random_range(0..w - 4) / 2 * 2;
        let door = y + rng.random_range(0..h);
        for row in grid.iter_mut().take(y + h).skip(y) {
            if row.len() > wx {
                row[wx] = true;
            }
        }
        grid[door][wx] = false;
        divide(grid, x, y, wx - x, h, rng);
        divide(grid, wx + 1, y, x + w - wx - 1, h, rng);
    }
}

/// Recursive backtracker over odd-coordinate lattice cells; remaining even
/// cells stay walls. Fully connected by construction.
fn carve_maze(grid: &mut [Vec<bool>], width: usize, height: usize, rng: &mut impl Rng) {
    for row in grid.iter_mut().take(height - 1).skip(1) {
        for cell in row.iter_mut().take(width - 1).skip(1) {
            *cell = true;
        }
    }
    let lat_w = (width - 1) / 2;
    let lat_h = (height - 1) / 2;
    let cell_at = |lx: usize, ly: usize| Cell::new((2 * lx + 1) as i32, (2 * ly + 1) as i32);
    let mut visited = vec![vec![false; lat_w]; lat_h];
    let mut stack = vec![(0usize, 0usize)];
    visited[0][0] = true;
    let start = cell_at(0, 0);
    grid[start.y as usize][start.x as usize] = false;
    while let Some(&(lx, ly)) = stack.last() {
        let mut candidates = Vec::new();
        if lx > 0 && !visited[ly][lx - 1] {
            candidates.push((lx - 1, ly));
        }
        if lx + 1 < lat_w && !visited[ly][lx + 1] {
            candidates.push((lx + 1, ly));
        }
        if ly > 0 && !visited[ly - 1][lx] {
            candidates.push((lx, ly - 1));
        }
        if ly + 1 < lat_h && !visited[ly + 1][lx] {
            candidates.push((lx, ly + 1));
        }
        if candidates.is_empty() {
            stack.pop();
            continue;
        }
        let (nx, ny) = candidates[rng.random_range(0..candidates.len())];
        visited[ny][nx] = true;
        let a = cell_at(lx, ly);
        let b = cell_at(nx, ny);
        let mid = Cell::new((a.x + b.x) / 2, (a.y + b.y) / 2);
        grid[b.y as usize][b.x as usize] = false;
        grid[mid.y as usize][mid.x as usize] = false;
        stack.push((nx, ny));
    }
}
