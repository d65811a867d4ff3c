//! `key=value` configuration shared by the server and the CLI.
//!
//! ```text
//! listen = 127.0.0.1:8080
//! suite_dir = suites
//! log_dir = logs
//! geometry.los_block_radius = 0.4
//! geometry.near_threshold = 2.0
//! geometry.iou_threshold_def = 0.5
//! geometry.projection_tolerance = 1e-6
//! grading.when_iou = 0.5
//! grading.where_iou = 0.5
//! grading.lenient_what = false
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. `grading.*` keys
//! override the thresholds stored with each suite.

use std::path::{Path, PathBuf};

use crate::geometry::DerivedPredicateConfig;
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub listen: String,
    pub suite_dir: PathBuf,
    pub log_dir: PathBuf,
    pub geometry: DerivedPredicateConfig,
    /// `(key, value)` grading overrides in file order.
    pub grading_overrides: Vec<(String, String)>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            suite_dir: PathBuf::from("suites"),
            log_dir: PathBuf::from("logs"),
            geometry: DerivedPredicateConfig::default(),
            grading_overrides: Vec::new(),
        }
    }
}

/// Sets one geometry tolerance by its field name.
pub fn set_geometry(g: &mut DerivedPredicateConfig, key: &str, value: &str) -> Result<(), String> {
    let v: f64 = value.parse().map_err(|_| format!("`{value}` is not a number"))?;
    match key {
        "los_block_radius" => g.los_block_radius = v,
        "near_threshold" => g.near_threshold = v,
        "iou_threshold_def" => g.iou_threshold_def = v,
        "projection_tolerance" => g.projection_tolerance = v,
        other => return Err(format!("unknown geometry key `{other}`")),
    }
    g.validate()
}

/// `geometry.*` lines describing a tolerance set, for echoing into metadata.
pub fn geometry_entries(g: &DerivedPredicateConfig) -> Vec<(String, String)> {
    vec![
        ("geometry.iou_threshold_def".into(), g.iou_threshold_def.to_string()),
        ("geometry.los_block_radius".into(), g.los_block_radius.to_string()),
        ("geometry.near_threshold".into(), g.near_threshold.to_string()),
        ("geometry.projection_tolerance".into(), g.projection_tolerance.to_string()),
    ]
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| ConfigError::Parse { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            if let Some(key) = k.strip_prefix("geometry.") {
                set_geometry(&mut c.geometry, key, v).map_err(err)?;
            } else if let Some(key) = k.strip_prefix("grading.") {
                crate::eval::GradingConfig::default().set(key, v).map_err(err)?;
                c.grading_overrides.push((key.to_string(), v.to_string()));
            } else {
                match k {
                    "listen" => c.listen = v.to_string(),
                    "suite_dir" => c.suite_dir = PathBuf::from(v),
                    "log_dir" => c.log_dir = PathBuf::from(v),
                    other => return Err(err(format!("unknown key `{other}`"))),
                }
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text)
    }

    /// Applies the grading overrides on top of a suite's thresholds.
    pub fn apply_grading(&self, g: &mut crate::eval::GradingConfig) {
        for (k, v) in &self.grading_overrides {
            g.set(k, v).expect("validated at parse time");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::GradingConfig;

    #[test]
    fn parses_all_keys() {
        let c = Config::parse(
            "# server\nlisten = 0.0.0.0:9000\nsuite_dir=/s\nlog_dir=/l\n\ngeometry.near_threshold=3\ngrading.when_iou=0.7\n",
        )
        .unwrap();
        assert_eq!(c.listen, "0.0.0.0:9000");
        assert_eq!(c.suite_dir, PathBuf::from("/s"));
        assert_eq!(c.geometry.near_threshold, 3.0);
        let mut g = GradingConfig::default();
        c.apply_grading(&mut g);
        assert_eq!(g.when_iou, 0.7);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(Config::parse("listen"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(Config::parse("\nport=1"), Err(ConfigError::Parse { line: 2, .. })));
        assert!(Config::parse("geometry.near_threshold=-1").is_err());
        assert!(Config::parse("grading.where_iou=abc").is_err());
    }

    #[test]
    fn geometry_entries_roundtrip() {
        let g = DerivedPredicateConfig { near_threshold: 2.5, ..Default::default() };
        let mut back = DerivedPredicateConfig::default();
        for (k, v) in geometry_entries(&g) {
            set_geometry(&mut back, k.strip_prefix("geometry.").unwrap(), &v).unwrap();
        }
        assert_eq!(back, g);
    }
}
