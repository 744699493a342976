//! SVG rendering of one logged episode: the map, the agent path (blue),
//! the source path (red), and the informed-chaser reference path (green).

use crate::grid::{Cell, LowLevelAction};
use crate::metrics::{oracle_chaser, EpisodeRecord, SourceTrack};

use super::HarnessError;

const CELL: f64 = 24.0;

/// Render an episode to an SVG string.
pub fn episode_svg(rec: &EpisodeRecord) -> Result<String, HarnessError> {
    let map = rec.map()?;
    let w = map.width() as f64 * CELL;
    let h = map.height() as f64 * CELL;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"#f8f8f5\"/>\n"
    ));
    for y in 0..map.height() as i32 {
        for x in 0..map.width() as i32 {
            if map.is_blocked(Cell::new(x, y)) {
                svg.push_str(&format!(
                    "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"#444\"/>\n",
                    x as f64 * CELL,
                    y as f64 * CELL
                ));
            }
        }
    }

    // Agent path: cells visited via moves.
    let mut agent_path = vec![rec.start_pose.cell];
    for s in &rec.steps {
        if s.action == LowLevelAction::MoveForward && s.pose_after.cell != *agent_path.last().unwrap()
        {
            agent_path.push(s.pose_after.cell);
        }
    }
    // Source path: distinct consecutive positions.
    let mut source_path = vec![rec.initial_source];
    for s in &rec.steps {
        if s.source_after != *source_path.last().unwrap() {
            source_path.push(s.source_after);
        }
    }
    // Reference path: the informed chaser against the recorded track.
    let track_cells: Vec<Cell> =
        (0..=rec.steps.len()).map(|t| rec.source_at(t)).collect();
    let mut track = SourceTrack::recorded(track_cells);
    let oracle = oracle_chaser(&map, rec.start_pose, &mut track, rec.steps.len().max(100) * 4);

    draw_path(&mut svg, &oracle.path, "#2a9d2a");
    draw_path(&mut svg, &source_path, "#d43a3a");
    draw_path(&mut svg, &agent_path, "#2a6bd4");
    draw_marker(&mut svg, rec.start_pose.cell, "#2a6bd4");
    draw_marker(&mut svg, rec.initial_source, "#d43a3a");
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn center(c: Cell) -> (f64, f64) {
    (c.x as f64 * CELL + CELL / 2.0, c.y as f64 * CELL + CELL / 2.0)
}

fn draw_path(svg: &mut String, cells: &[Cell], color: &str) {
    if cells.len() < 2 {
        return;
    }
    let points: Vec<String> = cells
        .iter()
        .map(|&c| {
            let (x, y) = center(c);
            format!("{x},{y}")
        })
        .collect();
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"3\" \
         stroke-linecap=\"round\" stroke-linejoin=\"round\" opacity=\"0.85\"/>\n",
        points.join(" ")
    ));
}

fn draw_marker(svg: &mut String, c: Cell, color: &str) {
    let (x, y) = center(c);
    svg.push_str(&format!(
        "<circle cx=\"{x}\" cy=\"{y}\" r=\"{}\" fill=\"{color}\" stroke=\"#fff\" \
         stroke-width=\"2\"/>\n",
        CELL * 0.3
    ));
}
