//! Story-line suites and their on-disk layout.
//!
//! ```text
//! <suite>/suite.meta                 key=value lines, sorted
//! <suite>/<scene>/storyline_001.xml  one file per story line
//! ```
//!
//! Scenes are ordered by directory name, story lines by file name.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use roxmltree::Document;

use super::grading::GradingConfig;
use crate::geometry::DerivedPredicateConfig;
use crate::query::{
    parse_answer_element, parse_query_node, well_formed, write_answer_element, write_query, XmlWriter,
};
use crate::{Answer, Ontology, Query, QueryKind, SuiteError};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteItem {
    pub query: Query,
    pub ground_truth: Answer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Storyline {
    pub id: String,
    pub items: Vec<SuiteItem>,
}

impl Storyline {
    pub fn storyline_id(index: usize) -> String {
        format!("storyline_{:03}", index + 1)
    }

    pub fn to_xml(&self, scene: &str) -> String {
        let mut w = XmlWriter::new();
        w.open("storyline", &[("id", self.id.clone()), ("scene", scene.to_string())]);
        for item in &self.items {
            w.open("item", &[]);
            write_query(&mut w, &item.query);
            write_answer_element(&mut w, "ground-truth", &item.ground_truth);
            w.close("item");
        }
        w.close("storyline");
        w.finish()
    }

    pub fn from_xml(text: &str, path: &str) -> Result<(String, Self), SuiteError> {
        let fmt = |msg: String| SuiteError::Format { path: path.to_string(), msg };
        let doc = Document::parse(text).map_err(|e| fmt(e.to_string()))?;
        let root = doc.root_element();
        if root.tag_name().name() != "storyline" {
            return Err(fmt(format!("expected <storyline>, found <{}>", root.tag_name().name())));
        }
        let id = root.attribute("id").ok_or_else(|| fmt("storyline without id".into()))?.to_string();
        let scene = root.attribute("scene").unwrap_or_default().to_string();
        let mut items = Vec::new();
        for item in root.children().filter(|n| n.is_element()) {
            if item.tag_name().name() != "item" {
                return Err(fmt(format!("unexpected <{}>", item.tag_name().name())));
            }
            let parts: Vec<_> = item.children().filter(|n| n.is_element()).collect();
            let [q, gt] = parts.as_slice() else {
                return Err(fmt("an item holds one query and one ground-truth".into()));
            };
            if gt.tag_name().name() != "ground-truth" {
                return Err(fmt("second element of an item must be <ground-truth>".into()));
            }
            items.push(SuiteItem { query: parse_query_node(*q)?, ground_truth: parse_answer_element(*gt)? });
        }
        Ok((scene, Storyline { id, items }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSuite {
    pub scene: String,
    pub storylines: Vec<Storyline>,
}

/// Ordered scenes of story lines plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSuite {
    pub suite_id: String,
    pub meta: BTreeMap<String, String>,
    pub scenes: Vec<SceneSuite>,
}

fn parse_meta(text: &str, path: &str) -> Result<BTreeMap<String, String>, SuiteError> {
    let mut meta = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| SuiteError::Format {
            path: path.to_string(),
            msg: format!("line {}: expected key=value", i + 1),
        })?;
        meta.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(meta)
}

impl EvaluationSuite {
    pub fn new(suite_id: impl Into<String>) -> Self {
        Self { suite_id: suite_id.into(), meta: BTreeMap::new(), scenes: Vec::new() }
    }

    pub fn items(&self) -> impl Iterator<Item = &SuiteItem> {
        self.scenes.iter().flat_map(|s| s.storylines.iter()).flat_map(|sl| sl.items.iter())
    }

    pub fn storyline_count(&self) -> usize {
        self.scenes.iter().map(|s| s.storylines.len()).sum()
    }

    pub fn query_count(&self) -> usize {
        self.items().count()
    }

    /// Grading thresholds from `grade.*` metadata, defaults elsewhere.
    pub fn grading(&self) -> Result<GradingConfig, SuiteError> {
        let mut g = GradingConfig::default();
        for (k, v) in &self.meta {
            if let Some(key) = k.strip_prefix("grade.") {
                g.set(key, v).map_err(SuiteError::Invalid)?;
            }
        }
        Ok(g)
    }

    /// Geometry tolerances the ground truth was computed with.
    pub fn geometry(&self) -> Result<DerivedPredicateConfig, SuiteError> {
        let mut g = DerivedPredicateConfig::default();
        for (k, v) in &self.meta {
            if let Some(key) = k.strip_prefix("geometry.") {
                crate::config::set_geometry(&mut g, key, v).map_err(SuiteError::Invalid)?;
            }
        }
        Ok(g)
    }

    pub fn meta_text(&self) -> String {
        self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Writes the suite into `dir`, which is created if missing.
    pub fn write_to(&self, dir: &Path) -> Result<(), SuiteError> {
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |e| SuiteError::Io { path: p, source: e }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let meta_path = dir.join("suite.meta");
        fs::write(&meta_path, self.meta_text()).map_err(io(&meta_path))?;
        for scene in &self.scenes {
            let sdir = dir.join(&scene.scene);
            fs::create_dir_all(&sdir).map_err(io(&sdir))?;
            for sl in &scene.storylines {
                let p = sdir.join(format!("{}.xml", sl.id));
                fs::write(&p, sl.to_xml(&scene.scene)).map_err(io(&p))?;
            }
        }
        Ok(())
    }

    /// Reads a suite directory; the suite id is the directory name.
    pub fn read_from(dir: &Path) -> Result<Self, SuiteError> {
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |e| SuiteError::Io { path: p, source: e }
        };
        let suite_id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let meta_path = dir.join("suite.meta");
        let meta_text = fs::read_to_string(&meta_path).map_err(io(&meta_path))?;
        let meta = parse_meta(&meta_text, &meta_path.display().to_string())?;
        let mut scene_dirs: Vec<_> = fs::read_dir(dir)
            .map_err(io(dir))?
            .filter_map(Result::ok)
            .filter(|e| e.path().is_dir())
            .map(|e| e.path())
            .collect();
        scene_dirs.sort();
        let mut scenes = Vec::new();
        for sdir in scene_dirs {
            let scene = sdir.file_name().unwrap().to_string_lossy().into_owned();
            let mut files: Vec<_> = fs::read_dir(&sdir)
                .map_err(io(&sdir))?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "xml"))
                .collect();
            files.sort();
            let mut storylines = Vec::new();
            for f in files {
                let text = fs::read_to_string(&f).map_err(io(&f))?;
                let (declared, sl) = Storyline::from_xml(&text, &f.display().to_string())?;
                if !declared.is_empty() && declared != scene {
                    return Err(SuiteError::Format {
                        path: f.display().to_string(),
                        msg: format!("storyline declares scene `{declared}` but lives under `{scene}`"),
                    });
                }
                storylines.push(sl);
            }
            scenes.push(SceneSuite { scene, storylines });
        }
        Ok(Self { suite_id, meta, scenes })
    }

    /// Checks the suite invariants.
    ///
    /// * query ids are unique
    /// * every story line starts with a definition
    /// * ground truths fit their query kinds
    /// * each query is well formed given the labels of earlier
    ///   definitions in its story line
    pub fn validate(&self, ont: &Ontology) -> Result<(), SuiteError> {
        let mut ids = HashSet::new();
        for scene in &self.scenes {
            for sl in &scene.storylines {
                let at = |msg: String| SuiteError::Invalid(format!("{}/{}: {msg}", scene.scene, sl.id));
                match sl.items.first() {
                    Some(i) if i.query.kind == QueryKind::Definition => {}
                    _ => return Err(at("story line must start with a definition".into())),
                }
                let mut defined: HashSet<String> = HashSet::new();
                for item in &sl.items {
                    let q = &item.query;
                    if !ids.insert(q.id.clone()) {
                        return Err(at(format!("duplicate query id `{}`", q.id)));
                    }
                    if !item.ground_truth.fits(q.kind) {
                        return Err(at(format!(
                            "`{}`: {} ground truth for a {} query",
                            q.id,
                            item.ground_truth.type_name(),
                            q.kind.as_str()
                        )));
                    }
                    item.ground_truth.validate().map_err(|e| at(format!("`{}`: {e}", q.id)))?;
                    if let Err(v) = well_formed(q, ont, &defined) {
                        let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
                        return Err(at(format!("`{}`: {}", q.id, msgs.join("; "))));
                    }
                    if let Some(label) = &q.defines_label {
                        if !defined.insert(label.clone()) {
                            return Err(at(format!("label `{label}` is defined twice")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
