//! On-demand spatial predicates and camera coordinate/time conversions.

use serde::{Deserialize, Serialize};

use super::{point_segment_distance, segment_hits_polygon};
use crate::kb::{CameraModel, KnowledgeBase};
use crate::{GeometryError, Point};

/// Tolerances used by the derived predicates and definition matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedPredicateConfig {
    /// Footprint radius of a dynamic blocker for line-of-sight.
    pub los_block_radius: f64,
    /// `near` holds at distances up to this value.
    pub near_threshold: f64,
    /// Minimum box IoU for a definition to match an entity.
    pub iou_threshold_def: f64,
    pub projection_tolerance: f64,
}

impl Default for DerivedPredicateConfig {
    fn default() -> Self {
        Self { los_block_radius: 0.4, near_threshold: 2.0, iou_threshold_def: 0.5, projection_tolerance: 1e-6 }
    }
}

impl DerivedPredicateConfig {
    pub fn validate(&self) -> Result<(), String> {
        let all_positive = [self.los_block_radius, self.near_threshold, self.iou_threshold_def, self.projection_tolerance]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err("geometry tolerances must be strictly positive".into());
        }
        if self.iou_threshold_def > 1.0 {
            return Err("iou_threshold_def must be at most 1".into());
        }
        Ok(())
    }
}

pub fn view_to_scene(cam: &CameraModel, p: &Point, frame: u64) -> Result<Point, GeometryError> {
    cam.homography_at(frame)?.apply(p)
}

pub fn scene_to_view(cam: &CameraModel, p: &Point, frame: u64) -> Result<Point, GeometryError> {
    cam.homography_at(frame)?.inverse()?.apply(p)
}

pub fn frame_to_scene_time(cam: &CameraModel, frame: u64) -> f64 {
    cam.clock_offset + frame as f64 / cam.frame_rate
}

/// Nearest frame to a scene time, clamped at frame 0.
pub fn scene_time_to_frame(cam: &CameraModel, t: f64) -> u64 {
    let f = ((t - cam.clock_offset) * cam.frame_rate).round();
    if f.is_nan() || f <= 0.0 {
        0
    } else {
        f as u64
    }
}

/// Ground-plane visibility between two entities at `t`.
///
/// `None` when either position is unknown. Otherwise blocked when the
/// segment touches a static footprint, or passes within
/// `los_block_radius` of any other non-static entity.
pub fn clear_line_of_sight(
    kb: &KnowledgeBase,
    a: &str,
    b: &str,
    t: f64,
    cfg: &DerivedPredicateConfig,
) -> Option<bool> {
    let pa = kb.position_at(a, t)?;
    let pb = kb.position_at(b, t)?;
    for e in kb.entities() {
        if e.entity_id == a || e.entity_id == b {
            continue;
        }
        if e.is_static {
            if let Some(fp) = &e.footprint {
                if segment_hits_polygon(&pa, &pb, fp) {
                    return Some(false);
                }
            }
        } else if let Some(pe) = kb.position_at(&e.entity_id, t) {
            if point_segment_distance(&pe, &pa, &pb) <= cfg.los_block_radius {
                return Some(false);
            }
        }
    }
    Some(true)
}

pub fn distance_at(kb: &KnowledgeBase, a: &str, b: &str, t: f64) -> Option<f64> {
    let pa = kb.position_at(a, t)?;
    let pb = kb.position_at(b, t)?;
    Some(pa.distance(&pb))
}

/// `distance <= near_threshold`.
pub fn near(kb: &KnowledgeBase, a: &str, b: &str, t: f64, cfg: &DerivedPredicateConfig) -> Option<bool> {
    distance_at(kb, a, b, t).map(|d| d <= cfg.near_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::CameraHomography;
    use crate::testkit::{garden_annotations, tiny_scene};
    use crate::{Homography, KnowledgeBase, Ontology};
    use std::sync::Arc;

    fn cam(h: Homography, fps: f64, offset: f64) -> CameraModel {
        CameraModel {
            camera_id: "c".into(),
            homography: CameraHomography::Static(h),
            frame_rate: fps,
            clock_offset: offset,
            fov_polygon: vec![],
        }
    }

    #[test]
    fn projection_examples() {
        let c = cam(Homography::identity(), 30.0, 0.0);
        assert_eq!(view_to_scene(&c, &Point::new(3.5, 2.0), 0).unwrap(), Point::new(3.5, 2.0));
        assert_eq!(scene_to_view(&c, &Point::new(3.5, 2.0), 0).unwrap(), Point::new(3.5, 2.0));
        let c = cam(Homography::scaling(2.0, 2.0), 30.0, 0.0);
        assert_eq!(view_to_scene(&c, &Point::new(1.0, 1.0), 0).unwrap(), Point::new(2.0, 2.0));
        assert_eq!(scene_to_view(&c, &Point::new(2.0, 2.0), 0).unwrap(), Point::new(1.0, 1.0));
    }

    #[test]
    fn time_conversion() {
        let c = cam(Homography::identity(), 30.0, 5.0);
        assert_eq!(frame_to_scene_time(&c, 0), 5.0);
        let c = cam(Homography::identity(), 30.0, 0.0);
        assert_eq!(frame_to_scene_time(&c, 30), 1.0);
        for f in 0..5000u64 {
            assert_eq!(scene_time_to_frame(&c, frame_to_scene_time(&c, f)), f);
        }
        assert_eq!(scene_time_to_frame(&c, -3.0), 0);
    }

    #[test]
    fn moving_camera_nearest_frame() {
        let mut table = std::collections::BTreeMap::new();
        table.insert(0, Homography::translation(0.0, 0.0));
        table.insert(10, Homography::translation(10.0, 0.0));
        let c = CameraModel {
            camera_id: "m".into(),
            homography: CameraHomography::PerFrame(table),
            frame_rate: 10.0,
            clock_offset: 0.0,
            fov_polygon: vec![],
        };
        assert_eq!(view_to_scene(&c, &Point::new(1.0, 1.0), 4).unwrap(), Point::new(1.0, 1.0));
        assert_eq!(view_to_scene(&c, &Point::new(1.0, 1.0), 6).unwrap(), Point::new(11.0, 1.0));
        assert_eq!(view_to_scene(&c, &Point::new(1.0, 1.0), 99).unwrap(), Point::new(11.0, 1.0));
    }

    #[test]
    fn los_cases() {
        let cfg = DerivedPredicateConfig::default();
        let kb = tiny_scene(&[("A", "person", (0.0, 0.0)), ("B", "person", (10.0, 0.0))], &[]);
        assert_eq!(clear_line_of_sight(&kb, "A", "B", 0.0, &cfg), Some(true));
        let kb = tiny_scene(
            &[("A", "person", (0.0, 0.0)), ("B", "person", (10.0, 0.0)), ("C", "person", (5.0, 0.0))],
            &[],
        );
        assert_eq!(clear_line_of_sight(&kb, "A", "B", 0.0, &cfg), Some(false));
        assert_eq!(clear_line_of_sight(&kb, "A", "B", 99.0, &cfg), None);
    }

    #[test]
    fn garden_wall_blocks_mid_scene() {
        let kb = KnowledgeBase::ingest(&garden_annotations(), Arc::new(Ontology::builtin())).unwrap();
        let cfg = DerivedPredicateConfig::default();
        assert_eq!(clear_line_of_sight(&kb, "P1", "P2", 12.0, &cfg), Some(true));
        assert_eq!(clear_line_of_sight(&kb, "P1", "P2", 42.0, &cfg), Some(false));
    }

    #[test]
    fn distance_and_near() {
        let cfg = DerivedPredicateConfig::default();
        let kb = tiny_scene(
            &[("A", "person", (0.0, 0.0)), ("B", "person", (3.0, 4.0)), ("C", "person", (2.0, 0.0))],
            &[],
        );
        assert_eq!(distance_at(&kb, "A", "B", 0.0), Some(5.0));
        assert_eq!(distance_at(&kb, "A", "A", 0.0), Some(0.0));
        assert_eq!(near(&kb, "A", "A", 0.0, &cfg), Some(true));
        assert_eq!(near(&kb, "A", "C", 0.0, &cfg), Some(true));
        assert_eq!(near(&kb, "A", "B", 0.0, &cfg), Some(false));
    }

    #[test]
    fn config_validation() {
        assert!(DerivedPredicateConfig::default().validate().is_ok());
        let bad = DerivedPredicateConfig { iou_threshold_def: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = DerivedPredicateConfig { los_block_radius: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
