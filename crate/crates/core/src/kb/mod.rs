//! Scene knowledge base: entities, reified facts with validity intervals,
//! per-camera observations, scene tracks and camera models.
//!
//! Facts are n-ary nodes; the triple view of a fact `f` is the set of edges
//! `f -predicate-> name`, `f -role_i-> participant_i`, `f -value-> literal`,
//! `f -start/end-> time`. Indices by predicate and by participant stand in for
//! the triple store's subject/object indices.

mod annotations;

pub use annotations::{format_polygon, AnnotationSet, ANNOTATION_FILES};

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{self, point_in_polygon};
use crate::ontology::{Category, Ontology};
use crate::query::{TimePoint, TimeSpec};
use crate::{BBox, GeometryError, Homography, Point, Polygon};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CameraHomography {
    Static(Homography),
    /// Moving camera: one matrix per listed frame, nearest-frame lookup.
    PerFrame(BTreeMap<u64, Homography>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub camera_id: String,
    /// Maps homogeneous view pixels to scene ground-plane coordinates.
    pub homography: CameraHomography,
    pub frame_rate: f64,
    /// Scene time of frame 0.
    pub clock_offset: f64,
    pub fov_polygon: Polygon,
}

impl CameraModel {
    pub fn is_moving(&self) -> bool {
        matches!(self.homography, CameraHomography::PerFrame(_))
    }

    pub fn homography_at(&self, frame: u64) -> Result<&Homography, GeometryError> {
        match &self.homography {
            CameraHomography::Static(h) => Ok(h),
            CameraHomography::PerFrame(table) => {
                let after = table.range(frame..).next();
                let before = table.range(..=frame).next_back();
                let pick = match (before, after) {
                    (Some(b), Some(a)) => {
                        if frame - b.0 <= a.0 - frame {
                            b
                        } else {
                            a
                        }
                    }
                    (Some(b), None) => b,
                    (None, Some(a)) => a,
                    (None, None) => return Err(GeometryError::NoHomography(self.camera_id.clone(), frame)),
                };
                Ok(pick.1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_id: String,
    pub object_type: String,
    /// Scene furniture or occluder.
    pub is_static: bool,
    /// Ground-plane outline of a static entity.
    pub footprint: Option<Polygon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub entity_id: String,
    pub camera_id: String,
    pub frame: u64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactNode {
    pub fact_id: String,
    pub predicate: String,
    pub participants: Vec<String>,
    pub value: Option<String>,
    pub start: f64,
    pub end: f64,
}

impl FactNode {
    pub fn covers(&self, start: f64, end: f64) -> bool {
        self.start <= start && end <= self.end
    }

    pub fn intersects(&self, start: f64, end: f64) -> bool {
        self.start <= end && start <= self.end
    }
}

/// Triple-pattern style filter; `None` slots are wildcards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactPattern {
    pub predicate: Option<String>,
    pub participants: Option<Vec<Option<String>>>,
    pub value: Option<String>,
}

impl FactPattern {
    pub fn new(predicate: Option<&str>, participants: &[Option<&str>]) -> Self {
        Self {
            predicate: predicate.map(str::to_string),
            participants: Some(participants.iter().map(|p| p.map(str::to_string)).collect()),
            value: None,
        }
    }

    pub fn any() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub scene_id: String,
    /// Wall-clock label of scene time zero; times in the KB are seconds from it.
    pub epoch: String,
    pub coordinate_system: String,
}

impl Default for SceneMeta {
    fn default() -> Self {
        Self { scene_id: "scene".into(), epoch: "0".into(), coordinate_system: "ground".into() }
    }
}

/// Coverage limits for interpolating tracks and boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KbConfig {
    pub gap_frames: u64,
    pub gap_seconds: f64,
}

impl Default for KbConfig {
    fn default() -> Self {
        Self { gap_frames: 30, gap_seconds: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    ontology: Arc<Ontology>,
    pub meta: SceneMeta,
    pub config: KbConfig,
    entities: BTreeMap<String, Entity>,
    cameras: BTreeMap<String, CameraModel>,
    observations: HashMap<(String, String), Vec<Observation>>,
    tracks: BTreeMap<String, Vec<(f64, Point)>>,
    facts: Vec<FactNode>,
    by_predicate: HashMap<String, Vec<usize>>,
    by_participant: HashMap<String, Vec<usize>>,
    checksum: String,
}

impl KnowledgeBase {
    pub(crate) fn empty(ontology: Arc<Ontology>) -> Self {
        Self {
            ontology,
            meta: SceneMeta::default(),
            config: KbConfig::default(),
            entities: BTreeMap::new(),
            cameras: BTreeMap::new(),
            observations: HashMap::new(),
            tracks: BTreeMap::new(),
            facts: Vec::new(),
            by_predicate: HashMap::new(),
            by_participant: HashMap::new(),
            checksum: String::new(),
        }
    }

    /// Builds a KB from an annotation set (see [`AnnotationSet`]).
    pub fn ingest(docs: &AnnotationSet, ontology: Arc<Ontology>) -> Result<Self, crate::IngestError> {
        annotations::ingest(docs, ontology)
    }

    pub fn with_config(mut self, config: KbConfig) -> Self {
        self.config = config;
        self
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn ontology_arc(&self) -> Arc<Ontology> {
        Arc::clone(&self.ontology)
    }

    /// SHA-256 over the annotation documents this KB was built from.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entity_ids(&self) -> Vec<&str> {
        self.entities.keys().map(String::as_str).collect()
    }

    pub fn camera(&self, id: &str) -> Option<&CameraModel> {
        self.cameras.get(id)
    }

    pub fn cameras(&self) -> impl Iterator<Item = &CameraModel> {
        self.cameras.values()
    }

    pub fn facts(&self) -> &[FactNode] {
        &self.facts
    }

    pub fn track(&self, entity: &str) -> &[(f64, Point)] {
        self.tracks.get(entity).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn observations(&self, entity: &str, camera: &str) -> &[Observation] {
        self.observations.get(&(entity.to_string(), camera.to_string())).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn observation_count(&self) -> usize {
        self.observations.values().map(Vec::len).sum()
    }

    /// Time span covered by tracks and facts with finite bounds.
    pub fn time_span(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for tr in self.tracks.values() {
            if let (Some(a), Some(b)) = (tr.first(), tr.last()) {
                lo = lo.min(a.0);
                hi = hi.max(b.0);
            }
        }
        for f in &self.facts {
            if f.start.is_finite() {
                lo = lo.min(f.start);
            }
            if f.end.is_finite() {
                hi = hi.max(f.end);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Resolves a time modifier to a closed scene-time window.
    pub fn resolve_time(&self, t: &TimeSpec) -> Option<(f64, f64)> {
        match t {
            TimeSpec::At(p) => self.resolve_point(p).map(|v| (v, v)),
            TimeSpec::Interval { start, end } => Some((self.resolve_point(start)?, self.resolve_point(end)?)),
        }
    }

    pub fn resolve_point(&self, p: &TimePoint) -> Option<f64> {
        match p {
            TimePoint::Scene(t) => Some(*t),
            TimePoint::Frame { camera, frame } => {
                self.camera(camera).map(|c| geometry::frame_to_scene_time(c, *frame))
            }
        }
    }

    fn pattern_matches(&self, f: &FactNode, pat: &FactPattern) -> bool {
        if let Some(p) = &pat.predicate {
            let ok = if f.predicate == *p {
                true
            } else {
                self.ontology.is_object_type(p) && self.ontology.subtype_of(&f.predicate, p)
            };
            if !ok {
                return false;
            }
        }
        if let Some(parts) = &pat.participants {
            if parts.len() != f.participants.len() {
                return false;
            }
            if parts.iter().zip(&f.participants).any(|(want, have)| want.as_ref().is_some_and(|w| w != have)) {
                return false;
            }
        }
        if let Some(v) = &pat.value {
            if f.value.as_ref() != Some(v) {
                return false;
            }
        }
        true
    }

    /// Facts unifying with `pat` whose validity intersects the window.
    pub fn facts_in_window(&self, pat: &FactPattern, window: Option<(f64, f64)>) -> Vec<&FactNode> {
        let candidates: Box<dyn Iterator<Item = usize> + '_> = if let Some(first) =
            pat.participants.as_ref().and_then(|ps| ps.iter().flatten().next())
        {
            Box::new(self.by_participant.get(first).into_iter().flatten().copied())
        } else if let Some(p) = &pat.predicate {
            if self.ontology.is_object_type(p) {
                let subs = self.ontology.subtypes(p);
                let mut idx: Vec<usize> =
                    subs.iter().flat_map(|s| self.by_predicate.get(*s).into_iter().flatten().copied()).collect();
                idx.sort_unstable();
                idx.dedup();
                Box::new(idx.into_iter())
            } else {
                Box::new(self.by_predicate.get(p).into_iter().flatten().copied())
            }
        } else {
            Box::new(0..self.facts.len())
        };
        candidates
            .map(|i| &self.facts[i])
            .filter(|f| self.pattern_matches(f, pat))
            .filter(|f| window.is_none_or(|(s, e)| f.intersects(s, e)))
            .collect()
    }

    /// [`facts_in_window`](Self::facts_in_window) with the window taken from a
    /// time modifier. An unresolvable modifier (unknown camera) matches nothing.
    pub fn facts_matching(&self, pat: &FactPattern, time: Option<&TimeSpec>) -> Vec<&FactNode> {
        match time {
            None => self.facts_in_window(pat, None),
            Some(t) => match self.resolve_time(t) {
                Some(w) => self.facts_in_window(pat, Some(w)),
                None => Vec::new(),
            },
        }
    }

    /// Hierarchy-closed type match, optionally restricted to entities inside
    /// `region` at `time`. Entities without a position then are excluded.
    pub fn entities_of_type(&self, type_name: &str, time: Option<f64>, region: Option<&[Point]>) -> Vec<&str> {
        self.entities
            .values()
            .filter(|e| self.ontology.subtype_of(&e.object_type, type_name))
            .filter(|e| match region {
                None => true,
                Some(poly) => match time {
                    Some(t) => self.position_at(&e.entity_id, t).is_some_and(|p| point_in_polygon(&p, poly)),
                    None => self.track(&e.entity_id).iter().any(|(_, p)| point_in_polygon(p, poly)),
                },
            })
            .map(|e| e.entity_id.as_str())
            .collect()
    }

    /// Observed box at a frame, or a corner-wise interpolation between the
    /// enclosing observations when they are at most `gap_frames` apart.
    pub fn bbox_at(&self, entity: &str, camera: &str, frame: u64) -> Option<BBox> {
        let obs = self.observations(entity, camera);
        match obs.binary_search_by_key(&frame, |o| o.frame) {
            Ok(i) => Some(obs[i].bbox),
            Err(i) => {
                if i == 0 || i == obs.len() {
                    return None;
                }
                let (a, b) = (&obs[i - 1], &obs[i]);
                if b.frame - a.frame > self.config.gap_frames {
                    return None;
                }
                let s = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
                Some(a.bbox.lerp(&b.bbox, s))
            }
        }
    }

    /// Scene position at `t`, interpolated between samples at most
    /// `gap_seconds` apart.
    pub fn position_at(&self, entity: &str, t: f64) -> Option<Point> {
        let tr = self.track(entity);
        if tr.is_empty() || !t.is_finite() {
            return None;
        }
        let i = tr.partition_point(|(ts, _)| *ts < t);
        if i < tr.len() && tr[i].0 == t {
            return Some(tr[i].1);
        }
        if i == 0 || i == tr.len() {
            return None;
        }
        let (a, b) = (&tr[i - 1], &tr[i]);
        if b.0 - a.0 > self.config.gap_seconds {
            return None;
        }
        Some(a.1.lerp(&b.1, (t - a.0) / (b.0 - a.0)))
    }

    /// Object-type predicates, used for counting "object predicate occurrences".
    pub fn is_object_predicate(&self, name: &str) -> bool {
        self.ontology.lookup(name).is_some_and(|d| d.category == Category::Object)
    }
}
