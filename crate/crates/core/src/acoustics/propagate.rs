//! Simplified binaural propagation: geodesic attenuation so walls occlude,
//! and an interaural level difference derived from the bearing of the first
//! shortest-path edge toward the source.

use crate::grid::{geodesic_distances_from, AgentPose, Cell, GridMap};

use super::{AcousticsError, StereoChunk};

/// Per-source propagation gains. `gain_left² + gain_right² == total_gain²`
/// holds exactly: the bearing splits energy, never creates or destroys it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationResult {
    pub gain_left: f64,
    pub gain_right: f64,
    /// Bearing of the source relative to the heading, degrees,
    /// counter-clockwise positive (+90° = directly left).
    pub bearing_degrees: f64,
    /// Geodesic distance in moves; `None` when the source is unreachable.
    pub geodesic_moves: Option<u32>,
}

impl PropagationResult {
    pub fn total_gain(&self) -> f64 {
        (self.gain_left * self.gain_left + self.gain_right * self.gain_right).sqrt()
    }

    pub fn silent() -> Self {
        PropagationResult {
            gain_left: 0.0,
            gain_right: 0.0,
            bearing_degrees: 0.0,
            geodesic_moves: None,
        }
    }
}

/// Propagate from a source cell to the listener. Attenuation is
/// `1 / (1 + geodesic_distance)`; the interaural split follows the bearing
/// of the optimal first step from listener to source (`φ = 0` when
/// co-located). Where several first steps tie for shortest, the bearing is
/// the direction of their vector sum — this keeps the left/right split an
/// exact mirror image when the scene is mirrored, which a tie-broken single
/// path would not. An unreachable source is inaudible, not an error.
pub fn propagate(
    map: &GridMap,
    source: Cell,
    listener: AgentPose,
) -> Result<PropagationResult, AcousticsError> {
    if map.is_blocked(source) {
        return Err(AcousticsError::BlockedCell(source.x, source.y));
    }
    if map.is_blocked(listener.cell) {
        return Err(AcousticsError::BlockedCell(listener.cell.x, listener.cell.y));
    }
    let field = geodesic_distances_from(map, source);
    let Some(dist) = field[map.idx(listener.cell)] else {
        return Ok(PropagationResult::silent());
    };
    let total_gain = 1.0 / (1.0 + dist as f64);
    // Sum the unit vectors of all first edges that start a shortest path,
    // expressed in the listener frame: `left` is the sine component,
    // `fwd` the cosine component. Integer arithmetic, so mirroring the
    // scene negates `left` exactly.
    let (mut left, mut fwd) = (0i64, 0i64);
    if dist > 0 {
        let (hx, hy) = listener.heading.delta();
        for n in map.free_neighbors(listener.cell) {
            if field[map.idx(n)] == Some(dist - 1) {
                let ex = n.x - listener.cell.x;
                let ey = n.y - listener.cell.y;
                left += (hy * ex - hx * ey) as i64;
                fwd += (hx * ex + hy * ey) as i64;
            }
        }
    }
    let (sin_bearing, bearing) = if left == 0 {
        (0.0, if fwd < 0 { 180.0 } else { 0.0 })
    } else {
        let norm = ((left * left + fwd * fwd) as f64).sqrt();
        (left as f64 / norm, (left as f64).atan2(fwd as f64).to_degrees())
    };
    Ok(PropagationResult {
        gain_left: total_gain * ((1.0 + sin_bearing) / 2.0).sqrt(),
        gain_right: total_gain * ((1.0 - sin_bearing) / 2.0).sqrt(),
        bearing_degrees: bearing,
        geodesic_moves: Some(dist),
    })
}

/// Apply propagation gains to a mono chunk. With `itd_samples > 0` the
/// quieter (contralateral) ear is additionally delayed by that many whole
/// samples; the default pipeline keeps it at 0, preserving front/back
/// ambiguity as an ILD-only cue.
pub fn render_binaural_with_itd(
    mono: &[f64],
    prop: &PropagationResult,
    itd_samples: usize,
) -> StereoChunk {
    let scale = |gain: f64, delay: usize| -> Vec<f64> {
        if delay == 0 {
            mono.iter().map(|&v| gain * v).collect()
        } else {
            let mut out = vec![0.0; mono.len()];
            for (i, &v) in mono.iter().enumerate() {
                if i + delay < out.len() {
                    out[i + delay] = gain * v;
                }
            }
            out
        }
    };
    let (delay_left, delay_right) = if itd_samples == 0 {
        (0, 0)
    } else if prop.gain_left >= prop.gain_right {
        (0, itd_samples)
    } else {
        (itd_samples, 0)
    };
    StereoChunk { left: scale(prop.gain_left, delay_left), right: scale(prop.gain_right, delay_right) }
}

pub fn render_binaural(mono: &[f64], prop: &PropagationResult) -> StereoChunk {
    render_binaural_with_itd(mono, prop, 0)
}

/// Elementwise sum of chunks. Associative and commutative.
pub fn mix(chunks: &[StereoChunk]) -> Result<StereoChunk, AcousticsError> {
    let first = chunks.first().ok_or(AcousticsError::EmptyMix)?;
    let n = first.len();
    let mut out = StereoChunk::silence(n);
    for c in chunks {
        if c.len() != n {
            return Err(AcousticsError::LengthMismatch(n, c.len()));
        }
        for i in 0..n {
            out.left[i] += c.left[i];
            out.right[i] += c.right[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_map, Heading, MapStyle};
    use rand::Rng;

    #[test]
    fn colocated_splits_energy_evenly() {
        let map = GridMap::parse("...\n...", 1.0).unwrap();
        let pose = AgentPose::new(Cell::new(1, 0), Heading::North);
        let p = propagate(&map, pose.cell, pose).unwrap();
        assert_eq!(p.geodesic_moves, Some(0));
        assert_eq!(p.bearing_degrees, 0.0);
        assert!((p.total_gain() - 1.0).abs() < 1e-15);
        let half = 0.5f64.sqrt();
        assert!((p.gain_left - half).abs() < 1e-15);
        assert!((p.gain_right - half).abs() < 1e-15);
    }

    #[test]
    fn source_directly_left_goes_fully_left() {
        // Listener heads east; source one move north (= 90° left).
        let map = GridMap::parse("...\n...", 1.0).unwrap();
        let pose = AgentPose::new(Cell::new(1, 1), Heading::East);
        let p = propagate(&map, Cell::new(1, 0), pose).unwrap();
        assert_eq!(p.bearing_degrees, 90.0);
        assert_eq!(p.geodesic_moves, Some(1));
        assert!((p.gain_left - 0.5).abs() < 1e-15);
        assert!(p.gain_right.abs() < 1e-15);
    }

    #[test]
    fn energy_identity_on_random_placements() {
        let map = generate_map(11, 14, 14, MapStyle::Rooms).unwrap();
        let free = map.largest_component();
        let mut rng = crate::rng::derive_stream(2024, 0);
        for _ in 0..2000 {
            let src = free[rng.random_range(0..free.len())];
            let cell = free[rng.random_range(0..free.len())];
            let heading = Heading::from_index(rng.random_range(0..4));
            let p = propagate(&map, src, AgentPose::new(cell, heading)).unwrap();
            let g = 1.0 / (1.0 + p.geodesic_moves.unwrap() as f64);
            let err = (p.gain_left.powi(2) + p.gain_right.powi(2) - g * g).abs();
            assert!(err < 1e-12, "energy error {err}");
        }
    }

    #[test]
    fn unreachable_source_is_silent() {
        let map = GridMap::parse(".#.", 1.0).unwrap();
        let pose = AgentPose::new(Cell::new(0, 0), Heading::East);
        let p = propagate(&map, Cell::new(2, 0), pose).unwrap();
        assert_eq!(p.total_gain(), 0.0);
        assert_eq!(p.geodesic_moves, None);
    }

    #[test]
    fn attenuation_is_monotone_in_distance() {
        // Straight corridor ahead: gain strictly decreases with distance.
        let map = GridMap::parse("........", 1.0).unwrap();
        let pose = AgentPose::new(Cell::new(0, 0), Heading::East);
        let mut last = f64::INFINITY;
        for x in 0..8 {
            let p = propagate(&map, Cell::new(x, 0), pose).unwrap();
            assert!(p.total_gain() < last);
            last = p.total_gain();
        }
    }

    #[test]
    fn mirroring_swaps_ears_exactly() {
        // Open map, listener centered heading east; mirror sources across
        // the heading axis (y -> 2*cy - y).
        let rows = vec![".".repeat(9); 9].join("\n");
        let map = GridMap::parse(&rows, 1.0).unwrap();
        let pose = AgentPose::new(Cell::new(4, 4), Heading::East);
        for y in 0..9 {
            for x in 0..9 {
                let src = Cell::new(x, y);
                let mirrored = Cell::new(x, 8 - y);
                let a = propagate(&map, src, pose).unwrap();
                let b = propagate(&map, mirrored, pose).unwrap();
                assert_eq!(a.gain_left, b.gain_right, "src {src:?}");
                assert_eq!(a.gain_right, b.gain_left, "src {src:?}");
            }
        }
    }

    #[test]
    fn render_gains_scale_samples() {
        let mono = vec![1.0, -0.5, 0.25];
        let zero = PropagationResult::silent();
        let silent = render_binaural(&mono, &zero);
        assert!(silent.left.iter().chain(&silent.right).all(|&v| v == 0.0));

        let hard_left = PropagationResult {
            gain_left: 1.0,
            gain_right: 0.0,
            bearing_degrees: 90.0,
            geodesic_moves: Some(0),
        };
        let c = render_binaural(&mono, &hard_left);
        assert_eq!(c.left, mono);
        assert!(c.right.iter().all(|&v| v == 0.0));

        let p = PropagationResult {
            gain_left: 0.3,
            gain_right: 0.6,
            bearing_degrees: -20.0,
            geodesic_moves: Some(2),
        };
        let c = render_binaural(&mono, &p);
        for i in 0..mono.len() {
            assert_eq!(c.left[i], 0.3 * mono[i]);
            assert_eq!(c.right[i], 0.6 * mono[i]);
        }
    }

    #[test]
    fn mix_identities() {
        let a = StereoChunk { left: vec![1.0, 2.0], right: vec![3.0, 4.0] };
        assert_eq!(mix(std::slice::from_ref(&a)).unwrap(), a);

        let neg = StereoChunk {
            left: a.left.iter().map(|v| -v).collect(),
            right: a.right.iter().map(|v| -v).collect(),
        };
        let s = mix(&[a.clone(), neg]).unwrap();
        assert!(s.left.iter().chain(&s.right).all(|&v| v == 0.0));

        let b = StereoChunk { left: vec![0.5, -1.0], right: vec![0.0, 2.0] };
        let c = StereoChunk { left: vec![-2.0, 0.25], right: vec![1.0, 1.0] };
        let abc = mix(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let cba = mix(&[c, b, a]).unwrap();
        assert_eq!(abc, cba);
    }

    #[test]
    fn itd_shift_delays_contralateral_ear() {
        let mono = vec![1.0, 0.0, 0.0, 0.0];
        let p = PropagationResult {
            gain_left: 0.8,
            gain_right: 0.2,
            bearing_degrees: 45.0,
            geodesic_moves: Some(1),
        };
        let c = render_binaural_with_itd(&mono, &p, 2);
        assert_eq!(c.left, vec![0.8, 0.0, 0.0, 0.0]);
        assert_eq!(c.right, vec![0.0, 0.0, 0.2, 0.0]);
    }
}
