//! Road geometry, access-router placement, vehicle kinematics and the
//! overlap-region handover window.
//!
//! Access routers sit on the roadside at y = 0, spaced evenly along a
//! straight road. Coverage is a closed disc, so the boundary counts as
//! in range. Vehicles move at constant speed down a fixed lane; the time a
//! vehicle spends inside the coverage overlap of two adjacent routers is
//! `d / v` for overlap chord length `d` on its lane.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Static description of the simulated road.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadScenario {
    pub length_m: f64,
    pub width_m: f64,
    pub ar_range_m: f64,
    pub ar_spacing_m: f64,
    pub ar_y_m: f64,
    pub adhoc_range_m: f64,
}

impl RoadScenario {
    /// Number of access routers placed along the road (one every
    /// `ar_spacing_m` starting at x = 0).
    pub fn ar_count(&self) -> u16 {
        (self.length_m / self.ar_spacing_m).floor() as u16 + 1
    }

    pub fn ar_position(&self, idx: u16) -> (f64, f64) {
        (idx as f64 * self.ar_spacing_m, self.ar_y_m)
    }

    /// Overlap chord between routers `idx` and `idx + 1` on the given lane.
    pub fn boundary_overlap(&self, idx: u16, lane_y: f64) -> Option<OverlapSegment> {
        overlap_segment(
            self.ar_position(idx),
            self.ar_position(idx + 1),
            self.ar_range_m,
            lane_y,
        )
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("input must be positive: {0}")]
    NonPositiveInput(&'static str),
}

/// Vehicle kinematics: constant speed along a fixed lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u16,
    pub lane_y: f64,
    pub speed_mps: f64,
    pub x0: f64,
}

impl VehicleState {
    pub fn x_at(&self, t: f64) -> f64 {
        self.x0 + self.speed_mps * t
    }

    pub fn pos_at(&self, t: f64) -> (f64, f64) {
        (self.x_at(t), self.lane_y)
    }

    /// Time at which the vehicle reaches `x`, or None if it is already past.
    pub fn time_to_reach(&self, x: f64) -> Option<f64> {
        let dt = (x - self.x0) / self.speed_mps;
        (dt >= 0.0).then_some(dt)
    }
}

/// Entry and exit points of joint coverage along a lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapSegment {
    pub entry_a: (f64, f64),
    pub exit_b: (f64, f64),
    pub d_ab: f64,
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Closed-disc coverage test, boundary inclusive.
pub fn in_range(pos: (f64, f64), center: (f64, f64), range_m: f64) -> bool {
    distance(pos, center) <= range_m
}

/// Joint-coverage chord of two routers along the horizontal line
/// `y = lane_y`, traversed in +x direction.
///
/// For routers at a common y the chord length reduces to
/// `2 * sqrt(range^2 - dy^2) - spacing`; entry is the point where the second
/// router's coverage begins, exit where the first router's coverage ends.
/// Returns None when the discs do not jointly cover any stretch of the lane.
pub fn overlap_segment(
    ar1: (f64, f64),
    ar2: (f64, f64),
    range_m: f64,
    lane_y: f64,
) -> Option<OverlapSegment> {
    let half1 = chord_half_width(range_m, lane_y - ar1.1)?;
    let half2 = chord_half_width(range_m, lane_y - ar2.1)?;
    // Coverage intervals of each disc on the lane.
    let (a1, b1) = (ar1.0 - half1, ar1.0 + half1);
    let (a2, b2) = (ar2.0 - half2, ar2.0 + half2);
    let entry_x = a1.max(a2);
    let exit_x = b1.min(b2);
    if exit_x <= entry_x {
        return None;
    }
    Some(OverlapSegment {
        entry_a: (entry_x, lane_y),
        exit_b: (exit_x, lane_y),
        d_ab: exit_x - entry_x,
    })
}

fn chord_half_width(range_m: f64, dy: f64) -> Option<f64> {
    let rem = range_m * range_m - dy * dy;
    (rem > 0.0).then(|| rem.sqrt())
}

/// Time to traverse the overlap chord at the given speed.
pub fn handover_duration(d_ab: f64, speed_mps: f64) -> Result<f64, GeometryError> {
    if d_ab <= 0.0 {
        return Err(GeometryError::NonPositiveInput("d_ab"));
    }
    if speed_mps <= 0.0 {
        return Err(GeometryError::NonPositiveInput("speed_mps"));
    }
    Ok(d_ab / speed_mps)
}

/// Whether two vehicles can exchange ad-hoc traffic at time `t`.
/// Boundary inclusive, like router coverage.
pub fn adhoc_reachable(v1: &VehicleState, v2: &VehicleState, t: f64, adhoc_range_m: f64) -> bool {
    distance(v1.pos_at(t), v2.pos_at(t)) <= adhoc_range_m
}

/// Lanes whose overlap chord falls outside the stated band are flagged
/// rather than clamped; the scenario still runs.
pub const OVERLAP_BAND_M: (f64, f64) = (10.0, 50.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneFlag {
    pub vehicle: u16,
    pub lane_y: f64,
    pub d_ab: f64,
}

pub fn lane_in_band(d_ab: f64) -> bool {
    (OVERLAP_BAND_M.0..=OVERLAP_BAND_M.1).contains(&d_ab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Brute-force oracle: walk the lane in 1 cm steps and measure the
    /// stretch covered by both discs.
    fn overlap_by_sampling(ar1: (f64, f64), ar2: (f64, f64), range: f64, lane_y: f64) -> f64 {
        let step = 0.01;
        let x_lo = ar1.0.min(ar2.0) - range - 1.0;
        let x_hi = ar1.0.max(ar2.0) + range + 1.0;
        let mut first = None;
        let mut last = None;
        let mut x = x_lo;
        while x <= x_hi {
            let p = (x, lane_y);
            if in_range(p, ar1, range) && in_range(p, ar2, range) {
                if first.is_none() {
                    first = Some(x);
                }
                last = Some(x);
            }
            x += step;
        }
        match (first, last) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    #[test]
    fn in_range_boundary_inclusive() {
        assert!(in_range((0.0, 0.0), (0.0, 0.0), 100.0));
        assert!(in_range((100.0, 0.0), (0.0, 0.0), 100.0));
        // distance sqrt(60^2 + 80.1^2) = 100.08 > 100
        assert!(!in_range((60.0, 80.1), (0.0, 0.0), 100.0));
    }

    #[test]
    fn centerline_overlap_is_fifty_meters() {
        let seg = overlap_segment((0.0, 0.0), (150.0, 0.0), 100.0, 0.0).unwrap();
        assert_relative_eq!(seg.d_ab, 50.0, epsilon = 1e-9);
        assert_relative_eq!(seg.entry_a.0, 50.0, epsilon = 1e-9);
        assert_relative_eq!(seg.exit_b.0, 100.0, epsilon = 1e-9);
    }

    #[test]
    fn offset_lane_matches_closed_form_and_oracle() {
        let seg = overlap_segment((0.0, 0.0), (150.0, 0.0), 100.0, 40.0).unwrap();
        let expect = 2.0 * (100.0_f64.powi(2) - 40.0_f64.powi(2)).sqrt() - 150.0;
        assert_relative_eq!(seg.d_ab, expect, epsilon = 1e-9);
        let sampled = overlap_by_sampling((0.0, 0.0), (150.0, 0.0), 100.0, 40.0);
        assert!((seg.d_ab - sampled).abs() < 0.02, "closed form {} vs oracle {}", seg.d_ab, sampled);
    }

    #[test]
    fn far_lane_has_no_overlap() {
        // 2*sqrt(100^2 - 99^2) = 2*sqrt(199) < 150
        assert!(overlap_segment((0.0, 0.0), (150.0, 0.0), 100.0, 99.0).is_none());
    }

    #[test]
    fn handover_duration_examples() {
        assert_relative_eq!(handover_duration(50.0, 25.0).unwrap(), 2.0);
        assert_relative_eq!(handover_duration(10.0, 25.0).unwrap(), 0.4);
        let seg = overlap_segment((0.0, 0.0), (150.0, 0.0), 100.0, 40.0).unwrap();
        let t = handover_duration(seg.d_ab, 33.33).unwrap();
        assert!((t - 0.999).abs() < 2e-3, "t_hp {t}");
        assert_eq!(
            handover_duration(0.0, 25.0).unwrap_err(),
            GeometryError::NonPositiveInput("d_ab")
        );
        assert_eq!(
            handover_duration(10.0, 0.0).unwrap_err(),
            GeometryError::NonPositiveInput("speed_mps")
        );
    }

    #[test]
    fn adhoc_reachability_boundary() {
        let v1 = VehicleState { id: 0, lane_y: 0.0, speed_mps: 20.0, x0: 0.0 };
        let mut v2 = v1;
        v2.id = 1;
        assert!(adhoc_reachable(&v1, &v2, 5.0, 900.0));
        v2.x0 = 900.0;
        assert!(adhoc_reachable(&v1, &v2, 5.0, 900.0));
        v2.x0 = 950.0;
        assert!(!adhoc_reachable(&v1, &v2, 5.0, 900.0));
    }

    #[test]
    fn default_geometry_lanes_stay_in_band() {
        for lane in [0.0, 10.0, 20.0, 30.0, 40.0] {
            let seg = overlap_segment((0.0, 0.0), (150.0, 0.0), 100.0, lane).unwrap();
            assert!(lane_in_band(seg.d_ab), "lane {lane} chord {}", seg.d_ab);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn closed_form_matches_sampling_oracle(
            range in 60.0_f64..140.0,
            spacing in 80.0_f64..260.0,
            lane_y in 0.0_f64..60.0,
        ) {
            let ar1 = (0.0, 0.0);
            let ar2 = (spacing, 0.0);
            let sampled = overlap_by_sampling(ar1, ar2, range, lane_y);
            match overlap_segment(ar1, ar2, range, lane_y) {
                Some(seg) => prop_assert!((seg.d_ab - sampled).abs() < 0.02),
                None => prop_assert!(sampled < 0.02),
            }
        }

        #[test]
        fn chord_non_increasing_in_lateral_offset(
            range in 60.0_f64..140.0,
            spacing in 80.0_f64..260.0,
            lane_a in 0.0_f64..60.0,
            delta in 0.0_f64..30.0,
        ) {
            let ar1 = (0.0, 0.0);
            let ar2 = (spacing, 0.0);
            let lane_b = lane_a + delta;
            let d_a = overlap_segment(ar1, ar2, range, lane_a).map(|s| s.d_ab).unwrap_or(0.0);
            let d_b = overlap_segment(ar1, ar2, range, lane_b).map(|s| s.d_ab).unwrap_or(0.0);
            prop_assert!(d_b <= d_a + 1e-9);
        }
    }
}
