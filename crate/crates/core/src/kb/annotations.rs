//! Flat-file annotation format.
//!
//! One directory per scene:
//!
//! | file               | columns                                                        |
//! |--------------------|----------------------------------------------------------------|
//! | `scene.meta`       | `key=value` lines: `scene_id`, `epoch`, `coordinate_system`   |
//! | `cameras.tsv`      | id, frame_rate, clock_offset, homography, fov polygon          |
//! | `entities.tsv`     | id, type, static (0/1), footprint polygon or `-`               |
//! | `observations.tsv` | entity, camera, frame, x1, y1, x2, y2                          |
//! | `tracks.tsv`       | entity, t, x, y                                                |
//! | `facts.tsv`        | fact_id, predicate, participants (`|`), value or `-`, t_start, t_end |
//!
//! The homography column is nine comma-separated row-major values, or
//! `@name` naming a per-frame table `name` in the same directory whose rows
//! are `frame` followed by nine values. Polygons are `x,y;x,y;...`.
//! Tab separated, UTF-8, LF, `#` starts a comment line.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{CameraHomography, CameraModel, Entity, FactNode, KnowledgeBase, Observation, SceneMeta};
use crate::ontology::{ArgType, Ontology};
use crate::{BBox, Homography, IngestError, Point, Polygon};

pub const ANNOTATION_FILES: [&str; 6] =
    ["scene.meta", "cameras.tsv", "entities.tsv", "observations.tsv", "tracks.tsv", "facts.tsv"];

/// In-memory contents of one annotation directory, keyed by file name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    pub files: BTreeMap<String, String>,
}

impl AnnotationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, content: impl Into<String>) -> &mut Self {
        self.files.insert(name.into(), content.into());
        self
    }

    pub fn get(&self, name: &str) -> &str {
        self.files.get(name).map(String::as_str).unwrap_or("")
    }

    pub fn is_empty(&self) -> bool {
        self.files.values().all(|c| c.trim().is_empty())
    }

    /// Reads every regular file of a directory.
    pub fn read_dir(dir: &Path) -> Result<Self, IngestError> {
        let io = |e| IngestError::Io { path: dir.to_path_buf(), source: e };
        let mut set = Self::new();
        for entry in fs::read_dir(dir).map_err(io)? {
            let entry = entry.map_err(io)?;
            if entry.file_type().map_err(io)?.is_file() {
                let path = entry.path();
                let content =
                    fs::read_to_string(&path).map_err(|e| IngestError::Io { path: path.clone(), source: e })?;
                set.insert(entry.file_name().to_string_lossy().into_owned(), content);
            }
        }
        Ok(set)
    }

    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, content) in &self.files {
            fs::write(dir.join(name), content)?;
        }
        Ok(())
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, content) in &self.files {
            h.update(name.as_bytes());
            h.update([0u8]);
            h.update(content.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

struct Rows<'a> {
    file: &'a str,
    content: &'a str,
}

impl<'a> Rows<'a> {
    fn iter(&self) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
        self.content.lines().enumerate().filter_map(|(i, l)| {
            let t = l.trim_end_matches('\r');
            if t.trim().is_empty() || t.trim_start().starts_with('#') {
                None
            } else {
                Some((i + 1, t.split('\t').map(str::trim).collect()))
            }
        })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> IngestError {
        IngestError::Format { file: self.file.to_string(), line, msg: msg.into() }
    }
}

fn parse_f64(rows: &Rows<'_>, line: usize, s: &str) -> Result<f64, IngestError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(rows.err(line, format!("`{s}` is not a finite number"))),
    }
}

fn parse_polygon(rows: &Rows<'_>, line: usize, s: &str) -> Result<Polygon, IngestError> {
    let mut out = Vec::new();
    for pair in s.split(';').filter(|p| !p.trim().is_empty()) {
        let (x, y) = pair.split_once(',').ok_or_else(|| rows.err(line, format!("bad polygon vertex `{pair}`")))?;
        out.push(Point::new(parse_f64(rows, line, x.trim())?, parse_f64(rows, line, y.trim())?));
    }
    if out.len() < 3 {
        return Err(rows.err(line, "polygon needs at least 3 vertices"));
    }
    Ok(out)
}

pub fn format_polygon(poly: &[Point]) -> String {
    poly.iter().map(|p| format!("{},{}", p.x, p.y)).collect::<Vec<_>>().join(";")
}

fn parse_homography(rows: &Rows<'_>, line: usize, cols: &[&str]) -> Result<Homography, IngestError> {
    let vals = cols.iter().map(|c| parse_f64(rows, line, c)).collect::<Result<Vec<_>, _>>()?;
    Homography::from_row_major(&vals).map_err(|e| rows.err(line, e.to_string()))
}

fn expect_cols(rows: &Rows<'_>, line: usize, cols: &[&str], n: usize) -> Result<(), IngestError> {
    if cols.len() != n {
        return Err(rows.err(line, format!("expected {n} columns, found {}", cols.len())));
    }
    Ok(())
}

pub(super) fn ingest(docs: &AnnotationSet, ontology: Arc<Ontology>) -> Result<KnowledgeBase, IngestError> {
    let mut kb = KnowledgeBase::empty(Arc::clone(&ontology));
    kb.checksum = docs.checksum();

    // scene.meta
    let mut meta = SceneMeta::default();
    for (i, raw) in docs.get("scene.meta").lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| IngestError::Format {
            file: "scene.meta".into(),
            line: i + 1,
            msg: "expected key=value".into(),
        })?;
        match k.trim() {
            "scene_id" => meta.scene_id = v.trim().to_string(),
            "epoch" => meta.epoch = v.trim().to_string(),
            "coordinate_system" => meta.coordinate_system = v.trim().to_string(),
            other => {
                return Err(IngestError::Format {
                    file: "scene.meta".into(),
                    line: i + 1,
                    msg: format!("unknown key `{other}`"),
                })
            }
        }
    }
    kb.meta = meta;

    // cameras
    let rows = Rows { file: "cameras.tsv", content: docs.get("cameras.tsv") };
    for (line, cols) in rows.iter() {
        expect_cols(&rows, line, &cols, 5)?;
        let id = cols[0].to_string();
        let frame_rate = parse_f64(&rows, line, cols[1])?;
        if frame_rate <= 0.0 {
            return Err(rows.err(line, "frame_rate must be positive"));
        }
        let clock_offset = parse_f64(&rows, line, cols[2])?;
        let homography = if let Some(table) = cols[3].strip_prefix('@') {
            let t_rows = Rows { file: table, content: docs.get(table) };
            if !docs.files.contains_key(table) {
                return Err(rows.err(line, format!("per-frame table `{table}` is missing")));
            }
            let mut map = BTreeMap::new();
            for (tl, tc) in t_rows.iter() {
                expect_cols(&t_rows, tl, &tc, 10)?;
                let frame: u64 = tc[0].parse().map_err(|_| t_rows.err(tl, "bad frame number"))?;
                map.insert(frame, parse_homography(&t_rows, tl, &tc[1..])?);
            }
            if map.is_empty() {
                return Err(rows.err(line, format!("per-frame table `{table}` is empty")));
            }
            CameraHomography::PerFrame(map)
        } else {
            let vals: Vec<&str> = cols[3].split(',').map(str::trim).collect();
            CameraHomography::Static(parse_homography(&rows, line, &vals)?)
        };
        let fov_polygon = parse_polygon(&rows, line, cols[4])?;
        if kb.cameras.contains_key(&id) {
            return Err(IngestError::Duplicate { kind: "camera", id });
        }
        kb.cameras.insert(id.clone(), CameraModel { camera_id: id, homography, frame_rate, clock_offset, fov_polygon });
    }

    // entities
    let rows = Rows { file: "entities.tsv", content: docs.get("entities.tsv") };
    for (line, cols) in rows.iter() {
        if cols.len() != 3 && cols.len() != 4 {
            return Err(rows.err(line, format!("expected 3 or 4 columns, found {}", cols.len())));
        }
        let id = cols[0].to_string();
        let object_type = cols[1].to_string();
        if !ontology.is_object_type(&object_type) {
            return Err(IngestError::UnknownPredicate(object_type));
        }
        let is_static = match cols[2] {
            "0" => false,
            "1" => true,
            other => return Err(rows.err(line, format!("static flag must be 0 or 1, found `{other}`"))),
        };
        let footprint = match cols.get(3) {
            None | Some(&"-") | Some(&"") => None,
            Some(s) => Some(parse_polygon(&rows, line, s)?),
        };
        if kb.entities.contains_key(&id) {
            return Err(IngestError::Duplicate { kind: "entity", id });
        }
        kb.entities.insert(id.clone(), Entity { entity_id: id, object_type, is_static, footprint });
    }

    // observations
    let rows = Rows { file: "observations.tsv", content: docs.get("observations.tsv") };
    let mut obs: HashMap<(String, String), Vec<Observation>> = HashMap::new();
    for (line, cols) in rows.iter() {
        expect_cols(&rows, line, &cols, 7)?;
        if !kb.entities.contains_key(cols[0]) {
            return Err(IngestError::UnknownEntity(cols[0].to_string()));
        }
        if !kb.cameras.contains_key(cols[1]) {
            return Err(IngestError::UnknownCamera(cols[1].to_string()));
        }
        let frame: u64 = cols[2].parse().map_err(|_| rows.err(line, format!("bad frame `{}`", cols[2])))?;
        let c = cols[3..7].iter().map(|s| parse_f64(&rows, line, s)).collect::<Result<Vec<_>, _>>()?;
        let bbox = BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| rows.err(line, e.to_string()))?;
        obs.entry((cols[0].to_string(), cols[1].to_string())).or_default().push(Observation {
            entity_id: cols[0].to_string(),
            camera_id: cols[1].to_string(),
            frame,
            bbox,
        });
    }
    for (key, list) in obs.iter_mut() {
        list.sort_by_key(|o| o.frame);
        if list.windows(2).any(|w| w[0].frame == w[1].frame) {
            return Err(IngestError::Duplicate { kind: "observation", id: format!("{}@{}", key.0, key.1) });
        }
    }
    kb.observations = obs;

    // tracks
    let rows = Rows { file: "tracks.tsv", content: docs.get("tracks.tsv") };
    for (line, cols) in rows.iter() {
        expect_cols(&rows, line, &cols, 4)?;
        if !kb.entities.contains_key(cols[0]) {
            return Err(IngestError::UnknownEntity(cols[0].to_string()));
        }
        let t = parse_f64(&rows, line, cols[1])?;
        let p = Point::new(parse_f64(&rows, line, cols[2])?, parse_f64(&rows, line, cols[3])?);
        let tr = kb.tracks.entry(cols[0].to_string()).or_default();
        if tr.last().is_some_and(|(last, _)| *last >= t) {
            return Err(IngestError::NonMonotoneTrack(cols[0].to_string()));
        }
        tr.push((t, p));
    }

    // object-typing facts, one per entity, valid for the whole scene
    let mut facts: Vec<FactNode> = kb
        .entities
        .values()
        .map(|e| FactNode {
            fact_id: format!("type:{}", e.entity_id),
            predicate: e.object_type.clone(),
            participants: vec![e.entity_id.clone()],
            value: None,
            start: f64::NEG_INFINITY,
            end: f64::INFINITY,
        })
        .collect();

    let rows = Rows { file: "facts.tsv", content: docs.get("facts.tsv") };
    let mut seen: HashSet<String> = facts.iter().map(|f| f.fact_id.clone()).collect();
    for (line, cols) in rows.iter() {
        expect_cols(&rows, line, &cols, 6)?;
        let fact_id = cols[0].to_string();
        let def = ontology.lookup(cols[1]).ok_or_else(|| IngestError::UnknownPredicate(cols[1].to_string()))?;
        if def.derived {
            return Err(rows.err(line, format!("`{}` is derived and cannot be stored", def.name)));
        }
        let participants: Vec<String> =
            cols[2].split('|').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect();
        if participants.len() != def.entity_arity() {
            return Err(IngestError::Arity {
                fact: fact_id,
                predicate: def.name.clone(),
                expected: def.entity_arity(),
                found: participants.len(),
            });
        }
        let entity_roles = def.arg_roles.iter().filter(|r| r.ty != ArgType::Literal);
        for (p, role) in participants.iter().zip(entity_roles) {
            let ent = kb.entities.get(p).ok_or_else(|| IngestError::UnknownEntity(p.clone()))?;
            if let ArgType::Object(t) = &role.ty {
                if !ontology.subtype_of(&ent.object_type, t) {
                    return Err(rows.err(
                        line,
                        format!("`{p}` ({}) cannot fill role `{}` of `{}`", ent.object_type, role.name, def.name),
                    ));
                }
            }
        }
        let value = match cols[3] {
            "-" | "" => None,
            v => Some(v.to_string()),
        };
        if value.is_some() != def.has_value_slot() {
            return Err(rows.err(line, format!("value presence does not match `{}`", def.name)));
        }
        let start = parse_f64(&rows, line, cols[4])?;
        let end = parse_f64(&rows, line, cols[5])?;
        if start > end {
            return Err(rows.err(line, "t_start is after t_end"));
        }
        if !seen.insert(fact_id.clone()) {
            return Err(IngestError::Duplicate { kind: "fact", id: fact_id });
        }
        facts.push(FactNode { fact_id, predicate: def.name.clone(), participants, value, start, end });
    }

    for (i, f) in facts.iter().enumerate() {
        kb.by_predicate.entry(f.predicate.clone()).or_default().push(i);
        let mut uniq: Vec<&String> = f.participants.iter().collect();
        uniq.sort();
        uniq.dedup();
        for p in uniq {
            kb.by_participant.entry(p.clone()).or_default().push(i);
        }
    }
    kb.facts = facts;
    Ok(kb)
}
