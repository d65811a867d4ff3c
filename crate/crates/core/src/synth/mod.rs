//! Deterministic synthetic scenes: scripted actors, props and events are
//! rendered into annotation directories that the knowledge base ingests.
//!
//! Script directory layout (tab separated, `#` comments):
//!
//! | file            | columns                                                       |
//! |-----------------|---------------------------------------------------------------|
//! | `script.meta`   | `key=value`: `scene_id`, `seed`, `duration`                   |
//! | `cameras.tsv`   | id, frame_rate, clock_offset, homography, fov polygon, pan `vx,vy` or `-` |
//! | `actors.tsv`    | id, type                                                      |
//! | `waypoints.tsv` | actor, t, x, y                                                |
//! | `attributes.tsv`| actor, predicate, value or `-`                                |
//! | `props.tsv`     | id, type, x, y, footprint polygon or `-`                      |
//! | `events.tsv`    | predicate, participants (`|`), value or `-`, t_start, t_end   |

mod scenarios;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{point_in_polygon, BBox as GBBox};
use crate::kb::{format_polygon, AnnotationSet};
use crate::{GenerateError, Homography, KnowledgeBase, Ontology, Point, Polygon};

pub use scenarios::builtin_scenarios;

/// Track sampling rate of generated scenes, in Hz.
pub const TRACK_RATE: f64 = 10.0;
/// Side of the square ground footprint projected into each view.
pub const FOOTPRINT_SIDE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraSpec {
    pub id: String,
    pub frame_rate: f64,
    pub clock_offset: f64,
    /// View-to-scene map at time 0.
    pub homography: Homography,
    pub fov: Polygon,
    /// Scene-plane velocity of a panning camera.
    pub pan: Option<(f64, f64)>,
}

impl CameraSpec {
    /// View-to-scene map at scene time `t`.
    pub fn homography_at(&self, t: f64) -> Homography {
        match self.pan {
            None => self.homography,
            Some((vx, vy)) => self.homography.compose(&Homography::translation(vx * t, vy * t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorSpec {
    pub id: String,
    pub object_type: String,
    /// Time-sorted `(t, position)`; the track is their piecewise-linear interpolation.
    pub waypoints: Vec<(f64, Point)>,
    /// Facts about the actor alone, valid for the whole scene.
    pub attributes: Vec<(String, Option<String>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropSpec {
    pub id: String,
    pub object_type: String,
    pub position: Point,
    /// Present for static occluders.
    pub footprint: Option<Polygon>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub predicate: String,
    pub participants: Vec<String>,
    pub value: Option<String>,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneScript {
    pub scene_id: String,
    pub seed: u64,
    pub duration: f64,
    pub cameras: Vec<CameraSpec>,
    pub actors: Vec<ActorSpec>,
    pub props: Vec<PropSpec>,
    pub events: Vec<EventSpec>,
}

/// Position on a piecewise-linear path, `None` outside its time span.
pub fn interpolate(waypoints: &[(f64, Point)], t: f64) -> Option<Point> {
    let first = waypoints.first()?;
    let last = waypoints.last()?;
    if t < first.0 || t > last.0 {
        return None;
    }
    let i = waypoints.partition_point(|(wt, _)| *wt < t);
    if waypoints[i].0 == t {
        return Some(waypoints[i].1);
    }
    let (a, b) = (&waypoints[i - 1], &waypoints[i]);
    Some(a.1.lerp(&b.1, (t - a.0) / (b.0 - a.0)))
}

fn fmt_h(h: &Homography) -> String {
    h.row_major().iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn script_err(msg: impl Into<String>) -> GenerateError {
    GenerateError::Script(msg.into())
}

impl SceneScript {
    pub fn entity_ids(&self) -> BTreeSet<&str> {
        self.actors.iter().map(|a| a.id.as_str()).chain(self.props.iter().map(|p| p.id.as_str())).collect()
    }

    pub fn validate(&self, ont: &Ontology) -> Result<(), GenerateError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(script_err("duration must be positive"));
        }
        let mut ids = BTreeSet::new();
        for id in self.actors.iter().map(|a| &a.id).chain(self.props.iter().map(|p| &p.id)) {
            if !ids.insert(id.as_str()) {
                return Err(script_err(format!("duplicate entity `{id}`")));
            }
        }
        for a in &self.actors {
            if !ont.is_object_type(&a.object_type) {
                return Err(script_err(format!("`{}` has unknown type `{}`", a.id, a.object_type)));
            }
            if a.waypoints.is_empty() {
                return Err(script_err(format!("actor `{}` has no waypoints", a.id)));
            }
            if a.waypoints.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(script_err(format!("waypoints of `{}` are not time-sorted", a.id)));
            }
            if a.waypoints.iter().any(|(t, _)| *t < 0.0 || *t > self.duration) {
                return Err(script_err(format!("waypoints of `{}` leave [0, duration]", a.id)));
            }
        }
        for p in &self.props {
            if !ont.is_object_type(&p.object_type) {
                return Err(script_err(format!("`{}` has unknown type `{}`", p.id, p.object_type)));
            }
        }
        for e in &self.events {
            if let Some(missing) = e.participants.iter().find(|p| !ids.contains(p.as_str())) {
                return Err(script_err(format!("event `{}` references undeclared `{missing}`", e.predicate)));
            }
            if !(0.0 <= e.start && e.start <= e.end && e.end <= self.duration) {
                return Err(script_err(format!("event `{}` [{}, {}] is outside the scene", e.predicate, e.start, e.end)));
            }
        }
        let mut names = BTreeSet::new();
        for c in &self.cameras {
            if !names.insert(c.id.as_str()) {
                return Err(script_err(format!("duplicate camera `{}`", c.id)));
            }
            if !(c.frame_rate > 0.0) || c.fov.len() < 3 {
                return Err(script_err(format!("camera `{}` needs a positive frame rate and a fov polygon", c.id)));
            }
        }
        Ok(())
    }

    /// Script files in the layout described at module level.
    pub fn to_files(&self) -> AnnotationSet {
        let mut set = AnnotationSet::new();
        set.insert(
            "script.meta",
            format!("scene_id={}\nseed={}\nduration={}\n", self.scene_id, self.seed, self.duration),
        );
        let mut s = String::new();
        for c in &self.cameras {
            let pan = c.pan.map_or("-".to_string(), |(x, y)| format!("{x},{y}"));
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{pan}",
                c.id,
                c.frame_rate,
                c.clock_offset,
                fmt_h(&c.homography),
                format_polygon(&c.fov)
            );
        }
        set.insert("cameras.tsv", s);
        let (mut actors, mut wps, mut attrs) = (String::new(), String::new(), String::new());
        for a in &self.actors {
            let _ = writeln!(actors, "{}\t{}", a.id, a.object_type);
            for (t, p) in &a.waypoints {
                let _ = writeln!(wps, "{}\t{t}\t{}\t{}", a.id, p.x, p.y);
            }
            for (pred, v) in &a.attributes {
                let _ = writeln!(attrs, "{}\t{pred}\t{}", a.id, v.as_deref().unwrap_or("-"));
            }
        }
        set.insert("actors.tsv", actors);
        set.insert("waypoints.tsv", wps);
        set.insert("attributes.tsv", attrs);
        let mut props = String::new();
        for p in &self.props {
            let fp = p.footprint.as_ref().map_or("-".to_string(), |f| format_polygon(f));
            let _ = writeln!(props, "{}\t{}\t{}\t{}\t{fp}", p.id, p.object_type, p.position.x, p.position.y);
        }
        set.insert("props.tsv", props);
        let mut ev = String::new();
        for e in &self.events {
            let _ = writeln!(
                ev,
                "{}\t{}\t{}\t{}\t{}",
                e.predicate,
                e.participants.join("|"),
                e.value.as_deref().unwrap_or("-"),
                e.start,
                e.end
            );
        }
        set.insert("events.tsv", ev);
        set
    }

    pub fn from_files(files: &AnnotationSet) -> Result<Self, GenerateError> {
        let rows = |name: &str| -> Vec<(usize, Vec<String>)> {
            files
                .get(name)
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
                .map(|(i, l)| (i + 1, l.split('\t').map(|c| c.trim().to_string()).collect()))
                .collect()
        };
        let bad = |file: &str, line: usize, msg: &str| script_err(format!("{file}:{line}: {msg}"));
        let num = |file: &str, line: usize, s: &str| -> Result<f64, GenerateError> {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(file, line, &format!("bad number `{s}`")))
        };
        let poly = |file: &str, line: usize, s: &str| -> Result<Polygon, GenerateError> {
            s.split(';')
                .map(|pt| {
                    let (x, y) = pt.split_once(',').ok_or_else(|| bad(file, line, "bad polygon"))?;
                    Ok(Point::new(num(file, line, x)?, num(file, line, y)?))
                })
                .collect()
        };
        let opt = |s: &str| (s != "-" && !s.is_empty()).then(|| s.to_string());

        let mut script = SceneScript {
            scene_id: String::new(),
            seed: 0,
            duration: 0.0,
            cameras: Vec::new(),
            actors: Vec::new(),
            props: Vec::new(),
            events: Vec::new(),
        };
        for (i, line) in files.get("script.meta").lines().enumerate() {
            let l = line.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (k, v) = l.split_once('=').ok_or_else(|| bad("script.meta", i + 1, "expected key=value"))?;
            match k.trim() {
                "scene_id" => script.scene_id = v.trim().to_string(),
                "seed" => script.seed = v.trim().parse().map_err(|_| bad("script.meta", i + 1, "bad seed"))?,
                "duration" => script.duration = num("script.meta", i + 1, v.trim())?,
                other => return Err(bad("script.meta", i + 1, &format!("unknown key `{other}`"))),
            }
        }
        for (line, c) in rows("cameras.tsv") {
            if c.len() != 6 {
                return Err(bad("cameras.tsv", line, "expected 6 columns"));
            }
            let vals = c[3].split(',').map(|v| num("cameras.tsv", line, v)).collect::<Result<Vec<_>, _>>()?;
            let homography = Homography::from_row_major(&vals).map_err(|e| bad("cameras.tsv", line, &e.to_string()))?;
            let pan = match opt(&c[5]) {
                None => None,
                Some(p) => {
                    let (x, y) = p.split_once(',').ok_or_else(|| bad("cameras.tsv", line, "pan is `vx,vy`"))?;
                    Some((num("cameras.tsv", line, x)?, num("cameras.tsv", line, y)?))
                }
            };
            script.cameras.push(CameraSpec {
                id: c[0].clone(),
                frame_rate: num("cameras.tsv", line, &c[1])?,
                clock_offset: num("cameras.tsv", line, &c[2])?,
                homography,
                fov: poly("cameras.tsv", line, &c[4])?,
                pan,
            });
        }
        let mut index = BTreeMap::new();
        for (line, c) in rows("actors.tsv") {
            if c.len() != 2 {
                return Err(bad("actors.tsv", line, "expected 2 columns"));
            }
            index.insert(c[0].clone(), script.actors.len());
            script.actors.push(ActorSpec {
                id: c[0].clone(),
                object_type: c[1].clone(),
                waypoints: Vec::new(),
                attributes: Vec::new(),
            });
        }
        let actor = |file: &str, line: usize, id: &str| {
            index.get(id).copied().ok_or_else(|| bad(file, line, &format!("unknown actor `{id}`")))
        };
        for (line, c) in rows("waypoints.tsv") {
            if c.len() != 4 {
                return Err(bad("waypoints.tsv", line, "expected 4 columns"));
            }
            let a = actor("waypoints.tsv", line, &c[0])?;
            let t = num("waypoints.tsv", line, &c[1])?;
            let p = Point::new(num("waypoints.tsv", line, &c[2])?, num("waypoints.tsv", line, &c[3])?);
            script.actors[a].waypoints.push((t, p));
        }
        for (line, c) in rows("attributes.tsv") {
            if c.len() != 3 {
                return Err(bad("attributes.tsv", line, "expected 3 columns"));
            }
            let a = actor("attributes.tsv", line, &c[0])?;
            script.actors[a].attributes.push((c[1].clone(), opt(&c[2])));
        }
        for (line, c) in rows("props.tsv") {
            if c.len() != 5 {
                return Err(bad("props.tsv", line, "expected 5 columns"));
            }
            script.props.push(PropSpec {
                id: c[0].clone(),
                object_type: c[1].clone(),
                position: Point::new(num("props.tsv", line, &c[2])?, num("props.tsv", line, &c[3])?),
                footprint: opt(&c[4]).map(|f| poly("props.tsv", line, &f)).transpose()?,
            });
        }
        for (line, c) in rows("events.tsv") {
            if c.len() != 5 {
                return Err(bad("events.tsv", line, "expected 5 columns"));
            }
            script.events.push(EventSpec {
                predicate: c[0].clone(),
                participants: c[1].split('|').filter(|s| !s.is_empty()).map(str::to_string).collect(),
                value: opt(&c[2]),
                start: num("events.tsv", line, &c[3])?,
                end: num("events.tsv", line, &c[4])?,
            });
        }
        Ok(script)
    }

    /// Sample times of the generated tracks: the 10 Hz grid over the
    /// waypoint span plus the waypoint times themselves.
    fn sample_times(&self, waypoints: &[(f64, Point)]) -> Vec<f64> {
        let (t0, t1) = (waypoints[0].0, waypoints[waypoints.len() - 1].0);
        let mut ts: Vec<f64> = ((t0 * TRACK_RATE).ceil() as i64..=(t1 * TRACK_RATE).floor() as i64)
            .map(|k| k as f64 / TRACK_RATE)
            .collect();
        ts.extend(waypoints.iter().map(|(t, _)| *t));
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }
}

/// Merged intervals where an actor stands still or moves.
fn motion_intervals(waypoints: &[(f64, Point)]) -> Vec<(bool, f64, f64)> {
    let mut out: Vec<(bool, f64, f64)> = Vec::new();
    for w in waypoints.windows(2) {
        let moving = w[0].1 != w[1].1;
        match out.last_mut() {
            Some(last) if last.0 == moving => last.2 = w[1].0,
            _ => out.push((moving, w[0].0, w[1].0)),
        }
    }
    out
}

/// Renders a script into an annotation set that ingests without errors.
///
/// Observations project a `FOOTPRINT_SIDE` square around the entity into
/// each camera whose fov contains the entity, centered on the exact
/// projection of the ground position; the seed jitters box extents only.
pub fn generate_scene(script: &SceneScript, ont: &Ontology) -> Result<AnnotationSet, GenerateError> {
    script.validate(ont)?;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let mut docs = AnnotationSet::new();
    docs.insert("scene.meta", format!("scene_id={}\nepoch=0\ncoordinate_system=ground\n", script.scene_id));

    let mut cams = String::new();
    for c in &script.cameras {
        let h = if c.pan.is_some() {
            let table = format!("{}.homography", c.id);
            let mut rows = String::new();
            for f in 0..=frame_count(c, script.duration) {
                let _ = writeln!(rows, "{f}\t{}", fmt_h(&c.homography_at(frame_time(c, f))).replace(',', "\t"));
            }
            docs.insert(table.clone(), rows);
            format!("@{table}")
        } else {
            fmt_h(&c.homography)
        };
        let _ = writeln!(cams, "{}\t{}\t{}\t{h}\t{}", c.id, c.frame_rate, c.clock_offset, format_polygon(&c.fov));
    }
    docs.insert("cameras.tsv", cams);

    let mut ents = String::new();
    let mut tracks = String::new();
    let mut paths: Vec<(&str, Vec<(f64, Point)>)> = Vec::new();
    for a in &script.actors {
        let _ = writeln!(ents, "{}\t{}\t0\t-", a.id, a.object_type);
        let samples: Vec<(f64, Point)> = script
            .sample_times(&a.waypoints)
            .into_iter()
            .map(|t| (t, interpolate(&a.waypoints, t).expect("sample inside the waypoint span")))
            .collect();
        for (t, p) in &samples {
            let _ = writeln!(tracks, "{}\t{t}\t{}\t{}", a.id, p.x, p.y);
        }
        paths.push((&a.id, samples));
    }
    for p in &script.props {
        let fp = p.footprint.as_ref().map_or("-".to_string(), |f| format_polygon(f));
        let _ = writeln!(ents, "{}\t{}\t1\t{fp}", p.id, p.object_type);
        let still = vec![(0.0, p.position), (script.duration, p.position)];
        let samples: Vec<(f64, Point)> = script.sample_times(&still).into_iter().map(|t| (t, p.position)).collect();
        for (t, q) in &samples {
            let _ = writeln!(tracks, "{}\t{t}\t{}\t{}", p.id, q.x, q.y);
        }
        paths.push((&p.id, samples));
    }
    docs.insert("entities.tsv", ents);
    docs.insert("tracks.tsv", tracks);

    let half = FOOTPRINT_SIDE / 2.0;
    let mut obs = String::new();
    for c in &script.cameras {
        for f in 0..=frame_count(c, script.duration) {
            let t = frame_time(c, f);
            if t < 0.0 || t > script.duration {
                continue;
            }
            let inv = c.homography_at(t).inverse().map_err(|e| script_err(format!("camera `{}`: {e}", c.id)))?;
            for (id, samples) in &paths {
                let Some(p) = interpolate(samples, t) else { continue };
                if !point_in_polygon(&p, &c.fov) {
                    continue;
                }
                let to_view = |q: Point| inv.apply(&q).map_err(|e| script_err(format!("camera `{}`: {e}", c.id)));
                let center = to_view(p)?;
                let (mut hw, mut hh) = (0.0f64, 0.0f64);
                for (dx, dy) in [(-half, -half), (half, -half), (half, half), (-half, half)] {
                    let v = to_view(Point::new(p.x + dx, p.y + dy))?;
                    hw = hw.max((v.x - center.x).abs());
                    hh = hh.max((v.y - center.y).abs());
                }
                let jitter = 1.0 + rng.gen_range(-0.05..0.05);
                let b = GBBox::centered(center, hw * jitter, hh * jitter).map_err(|e| script_err(e.to_string()))?;
                let _ = writeln!(obs, "{id}\t{}\t{f}\t{}\t{}\t{}\t{}", c.id, b.x1, b.y1, b.x2, b.y2);
            }
        }
    }
    docs.insert("observations.tsv", obs);

    let mut facts = String::new();
    let mut n = 0usize;
    let mut fact = |pred: &str, parts: &str, value: Option<&str>, s: f64, e: f64| {
        n += 1;
        let _ = writeln!(facts, "f{n:05}\t{pred}\t{parts}\t{}\t{s}\t{e}", value.unwrap_or("-"));
    };
    for a in &script.actors {
        for (pred, v) in &a.attributes {
            fact(pred, &a.id, v.as_deref(), 0.0, script.duration);
        }
        for (moving, s, e) in motion_intervals(&a.waypoints) {
            fact(if moving { "moving" } else { "stationary" }, &a.id, None, s, e);
        }
    }
    for p in &script.props {
        fact("stationary", &p.id, None, 0.0, script.duration);
    }
    for e in &script.events {
        fact(&e.predicate, &e.participants.join("|"), e.value.as_deref(), e.start, e.end);
    }
    docs.insert("facts.tsv", facts);

    KnowledgeBase::ingest(&docs, Arc::new(ont.clone())).map_err(|e| script_err(format!("generated scene does not ingest: {e}")))?;
    Ok(docs)
}

fn frame_time(c: &CameraSpec, f: u64) -> f64 {
    c.clock_offset + f as f64 / c.frame_rate
}

fn frame_count(c: &CameraSpec, duration: f64) -> u64 {
    ((duration - c.clock_offset) * c.frame_rate).floor().max(0.0) as u64
}

#[cfg(test)]
mod tests;
