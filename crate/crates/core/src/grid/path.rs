//! Shortest paths over the free-cell graph and over the cell x heading
//! action space. All searches expand neighbors in the fixed N, E, S, W
//! order (and actions in MoveForward, RotateLeft, RotateRight order) so
//! returned paths are deterministic.

use std::collections::VecDeque;

use super::{AgentPose, Cell, GridError, GridMap, LowLevelAction};

/// Unit-move geodesic distance between two free cells. `Ok(None)` means the
/// cells are in different components.
pub fn geodesic_distance(map: &GridMap, a: Cell, b: Cell) -> Result<Option<u32>, GridError> {
    if !map.is_free(a) {
        return Err(GridError::BlockedCell(a.x, a.y));
    }
    if !map.is_free(b) {
        return Err(GridError::BlockedCell(b.x, b.y));
    }
    if a == b {
        return Ok(Some(0));
    }
    let dist = bfs_field(map, a);
    Ok(dist[map.idx(b)])
}

/// BFS distance field from `from` to every free cell (`None` = unreachable).
pub fn geodesic_distances_from(map: &GridMap, from: Cell) -> Vec<Option<u32>> {
    bfs_field(map, from)
}

fn bfs_field(map: &GridMap, from: Cell) -> Vec<Option<u32>> {
    let mut dist: Vec<Option<u32>> = vec![None; map.width() * map.height()];
    if !map.is_free(from) {
        return dist;
    }
    dist[map.idx(from)] = Some(0);
    let mut queue = VecDeque::new();
    queue.push_back(from);
    while let Some(c) = queue.pop_front() {
        let d = dist[map.idx(c)].unwrap();
        for n in map.free_neighbors(c) {
            let i = map.idx(n);
            if dist[i].is_none() {
                dist[i] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Shortest 4-connected path from `a` to `b`, inclusive of both endpoints.
/// `Ok(None)` when unreachable.
pub fn shortest_path(map: &GridMap, a: Cell, b: Cell) -> Result<Option<Vec<Cell>>, GridError> {
    if !map.is_free(a) {
        return Err(GridError::BlockedCell(a.x, a.y));
    }
    if !map.is_free(b) {
        return Err(GridError::BlockedCell(b.x, b.y));
    }
    if a == b {
        return Ok(Some(vec![a]));
    }
    let mut parent: Vec<Option<Cell>> = vec![None; map.width() * map.height()];
    let mut seen = vec![false; map.width() * map.height()];
    seen[map.idx(a)] = true;
    let mut queue = VecDeque::new();
    queue.push_back(a);
    while let Some(c) = queue.pop_front() {
        if c == b {
            break;
        }
        for n in map.free_neighbors(c) {
            let i = map.idx(n);
            if !seen[i] {
                seen[i] = true;
                parent[i] = Some(c);
                queue.push_back(n);
            }
        }
    }
    if !seen[map.idx(b)] {
        return Ok(None);
    }
    let mut path = vec![b];
    let mut cur = b;
    while let Some(p) = parent[map.idx(cur)] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    debug_assert_eq!(path[0], a);
    Ok(Some(path))
}

/// Minimum number of {MoveForward, RotateLeft, RotateRight} actions from
/// `pose` to stand on `target` (any final heading).
pub fn shortest_action_count(
    map: &GridMap,
    pose: AgentPose,
    target: Cell,
) -> Result<Option<u32>, GridError> {
    Ok(shortest_action_path(map, pose, target)?.map(|p| p.len() as u32))
}

/// Minimum action count from `pose` to every cell (`None` = unreachable),
/// one BFS over the (cell, heading) space.
pub fn action_distance_field(map: &GridMap, pose: AgentPose) -> Vec<Option<u32>> {
    let n_cells = map.width() * map.height();
    let mut state_dist = vec![u32::MAX; n_cells * 4];
    let state = |p: AgentPose| map.idx(p.cell) * 4 + p.heading.index();
    state_dist[state(pose)] = 0;
    let mut queue = VecDeque::new();
    queue.push_back(pose);
    while let Some(p) = queue.pop_front() {
        let d = state_dist[state(p)];
        const ACTIONS: [LowLevelAction; 3] =
            [LowLevelAction::MoveForward, LowLevelAction::RotateLeft, LowLevelAction::RotateRight];
        for act in ACTIONS {
            let (next, collided) = map.step_low_level(p, act);
            if collided || next == p {
                continue;
            }
            let i = state(next);
            if state_dist[i] == u32::MAX {
                state_dist[i] = d + 1;
                queue.push_back(next);
            }
        }
    }
    (0..n_cells)
        .map(|c| {
            let best = (0..4).map(|h| state_dist[c * 4 + h]).min().unwrap();
            (best != u32::MAX).then_some(best)
        })
        .collect()
}

/// The action sequence realizing [`shortest_action_count`]. BFS over
/// (cell, heading) states; expansion order MoveForward, RotateLeft,
/// RotateRight makes ties deterministic and prefers RotateLeft.
pub fn shortest_action_path(
    map: &GridMap,
    pose: AgentPose,
    target: Cell,
) -> Result<Option<Vec<LowLevelAction>>, GridError> {
    if !map.is_free(pose.cell) {
        return Err(GridError::BlockedCell(pose.cell.x, pose.cell.y));
    }
    if !map.is_free(target) {
        return Err(GridError::BlockedCell(target.x, target.y));
    }
    if pose.cell == target {
        return Ok(Some(Vec::new()));
    }
    let n_states = map.width() * map.height() * 4;
    let state = |p: AgentPose| map.idx(p.cell) * 4 + p.heading.index();
    let mut prev: Vec<Option<(AgentPose, LowLevelAction)>> = vec![None; n_states];
    let mut seen = vec![false; n_states];
    seen[state(pose)] = true;
    let mut queue = VecDeque::new();
    queue.push_back(pose);
    let mut goal_state: Option<AgentPose> = None;
    'search: while let Some(p) = queue.pop_front() {
        const ACTIONS: [LowLevelAction; 3] =
            [LowLevelAction::MoveForward, LowLevelAction::RotateLeft, LowLevelAction::RotateRight];
        for act in ACTIONS {
            let (next, collided) = map.step_low_level(p, act);
            if collided || next == p {
                continue;
            }
            let i = state(next);
            if !seen[i] {
                seen[i] = true;
                prev[i] = Some((p, act));
                if next.cell == target {
                    goal_state = Some(next);
                    break 'search;
                }
                queue.push_back(next);
            }
        }
    }
    let Some(goal) = goal_state else { return Ok(None) };
    let mut actions = Vec::new();
    let mut cur = goal;
    while let Some((p, act)) = prev[state(cur)] {
        actions.push(act);
        cur = p;
    }
    actions.reverse();
    Ok(Some(actions))
}
