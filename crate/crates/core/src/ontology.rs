//! Closed predicate vocabulary and the object-type hierarchy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::OntologyError;

const BUILTIN: &str = include_str!("../data/vtt.ontology");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Object,
    Part,
    Attribute,
    Property,
    Relationship,
    Action,
    Behavior,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Object,
        Category::Part,
        Category::Attribute,
        Category::Property,
        Category::Relationship,
        Category::Action,
        Category::Behavior,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Object => "object",
            Category::Part => "part",
            Category::Attribute => "attribute",
            Category::Property => "property",
            Category::Relationship => "relationship",
            Category::Action => "action",
            Category::Behavior => "behavior",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

/// What an argument slot accepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgType {
    /// Any entity.
    Any,
    /// An entity whose type is the named object predicate or one of its subtypes.
    Object(String),
    /// A literal value rather than an entity (e.g. a clothing color).
    Literal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgRole {
    pub name: String,
    pub ty: ArgType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateDef {
    pub name: String,
    pub category: Category,
    pub arity: usize,
    pub arg_roles: Vec<ArgRole>,
    pub supports_time: bool,
    pub supports_interval: bool,
    pub supports_location: bool,
    /// Computed on demand from geometry instead of being stored as facts.
    pub derived: bool,
}

impl PredicateDef {
    /// Number of entity slots (arity minus literal value slots).
    pub fn entity_arity(&self) -> usize {
        self.arg_roles.iter().filter(|r| r.ty != ArgType::Literal).count()
    }

    pub fn has_value_slot(&self) -> bool {
        self.arg_roles.iter().any(|r| r.ty == ArgType::Literal)
    }

    pub fn is_object(&self) -> bool {
        self.category == Category::Object
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modifier {
    Time,
    Interval,
    Location,
}

impl fmt::Display for Modifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modifier::Time => "time",
            Modifier::Interval => "interval",
            Modifier::Location => "location",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtomViolation {
    UnknownPredicate(String),
    Arity { predicate: String, expected: usize, found: usize },
    UnsupportedModifier { predicate: String, modifier: Modifier },
}

impl fmt::Display for AtomViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomViolation::UnknownPredicate(p) => write!(f, "unknown predicate `{p}`"),
            AtomViolation::Arity { predicate, expected, found } => {
                write!(f, "`{predicate}` takes {expected} argument(s), found {found}")
            }
            AtomViolation::UnsupportedModifier { predicate, modifier } => {
                write!(f, "`{predicate}` does not accept a {modifier} modifier")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ontology {
    predicates: BTreeMap<String, PredicateDef>,
    parents: BTreeMap<String, BTreeSet<String>>,
}

impl Ontology {
    /// The vocabulary shipped with the crate.
    pub fn builtin() -> Self {
        Self::load(BUILTIN).expect("shipped ontology is valid")
    }

    pub fn builtin_source() -> &'static str {
        BUILTIN
    }

    /// Parse and validate a declaration document.
    pub fn load(doc: &str) -> Result<Self, OntologyError> {
        let mut predicates = BTreeMap::new();
        let mut parents: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut edges = Vec::new();

        for (idx, raw) in doc.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((child, parent)) = line.split_once("<:") {
                let (child, parent) = (child.trim(), parent.trim());
                if child.is_empty() || parent.is_empty() {
                    return Err(OntologyError::Parse { line: line_no, msg: "empty hierarchy operand".into() });
                }
                edges.push((line_no, child.to_string(), parent.to_string()));
                continue;
            }
            let def = parse_predicate_line(line).map_err(|msg| OntologyError::Parse { line: line_no, msg })?;
            if predicates.contains_key(&def.name) {
                return Err(OntologyError::Duplicate(def.name));
            }
            predicates.insert(def.name.clone(), def);
        }

        for (line, child, parent) in edges {
            for node in [&child, &parent] {
                match predicates.get(node) {
                    None => return Err(OntologyError::UnknownInHierarchy { line, name: node.clone() }),
                    Some(d) if !d.is_object() => {
                        return Err(OntologyError::NotObject { line, name: node.clone() })
                    }
                    _ => {}
                }
            }
            parents.entry(child).or_default().insert(parent);
        }

        let ont = Self { predicates, parents };
        ont.check_acyclic()?;
        ont.check_roles()?;
        Ok(ont)
    }

    fn check_acyclic(&self) -> Result<(), OntologyError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        fn visit<'a>(
            ont: &'a Ontology,
            node: &'a str,
            state: &mut BTreeMap<&'a str, u8>,
        ) -> Result<(), OntologyError> {
            match state.get(node) {
                Some(1) => return Err(OntologyError::Cycle(node.to_string())),
                Some(2) => return Ok(()),
                _ => {}
            }
            state.insert(node, 1);
            if let Some(ps) = ont.parents.get(node) {
                for p in ps {
                    visit(ont, p, state)?;
                }
            }
            state.insert(node, 2);
            Ok(())
        }
        for node in self.parents.keys() {
            visit(self, node, &mut state)?;
        }
        Ok(())
    }

    fn check_roles(&self) -> Result<(), OntologyError> {
        for def in self.predicates.values() {
            if def.derived && !matches!(def.category, Category::Relationship | Category::Property) {
                return Err(OntologyError::Invalid(format!(
                    "`{}` is derived but has category {}",
                    def.name, def.category
                )));
            }
            for role in &def.arg_roles {
                if let ArgType::Object(t) = &role.ty {
                    if !self.predicates.get(t).is_some_and(|d| d.is_object()) {
                        return Err(OntologyError::Invalid(format!(
                            "role `{}` of `{}` names `{t}`, which is not an object predicate",
                            role.name, def.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<&PredicateDef> {
        self.predicates.get(name)
    }

    pub fn predicates(&self) -> impl Iterator<Item = &PredicateDef> {
        self.predicates.values()
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn by_category(&self, category: Category) -> impl Iterator<Item = &PredicateDef> {
        self.predicates.values().filter(move |d| d.category == category)
    }

    pub fn is_object_type(&self, name: &str) -> bool {
        self.lookup(name).is_some_and(|d| d.is_object())
    }

    /// Direct parents of an object type.
    pub fn parents_of(&self, name: &str) -> impl Iterator<Item = &str> {
        self.parents.get(name).into_iter().flatten().map(String::as_str)
    }

    /// Reflexive-transitive subtype relation over object predicates.
    pub fn subtype_of(&self, sub: &str, sup: &str) -> bool {
        if !self.is_object_type(sub) || !self.is_object_type(sup) {
            return false;
        }
        let mut stack = vec![sub];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == sup {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.parents_of(n));
            }
        }
        false
    }

    /// Object types that are subtypes of `name`, including itself.
    pub fn subtypes(&self, name: &str) -> Vec<&str> {
        self.by_category(Category::Object)
            .map(|d| d.name.as_str())
            .filter(|t| self.subtype_of(t, name))
            .collect()
    }

    /// Strict supertypes of `name`, nearest first.
    pub fn ancestors(&self, name: &str) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        let mut frontier: Vec<&str> = self.parents_of(name).collect();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for n in frontier {
                if !out.contains(&n) {
                    out.push(n);
                    next.extend(self.parents_of(n));
                }
            }
            frontier = next;
        }
        out
    }

    /// Checks one atom's shape against the vocabulary; violations are the return value.
    pub fn validate_atom(
        &self,
        pred_name: &str,
        arg_count: usize,
        has_time: bool,
        has_interval: bool,
        has_location: bool,
    ) -> Result<(), Vec<AtomViolation>> {
        let Some(def) = self.lookup(pred_name) else {
            return Err(vec![AtomViolation::UnknownPredicate(pred_name.to_string())]);
        };
        let mut v = Vec::new();
        if def.arity != arg_count {
            v.push(AtomViolation::Arity { predicate: def.name.clone(), expected: def.arity, found: arg_count });
        }
        for (present, supported, modifier) in [
            (has_time, def.supports_time, Modifier::Time),
            (has_interval, def.supports_interval, Modifier::Interval),
            (has_location, def.supports_location, Modifier::Location),
        ] {
            if present && !supported {
                v.push(AtomViolation::UnsupportedModifier { predicate: def.name.clone(), modifier });
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }
}

fn parse_predicate_line(line: &str) -> Result<PredicateDef, String> {
    let fields: Vec<&str> = line.split('|').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 `|`-separated fields, found {}", fields.len()));
    }
    let name = fields[0];
    if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == '<' || c == '>' || c == '&') {
        return Err(format!("bad predicate name `{name}`"));
    }
    let category: Category = fields[1].parse()?;
    let arity: usize = fields[2].parse().map_err(|_| format!("bad arity `{}`", fields[2]))?;
    if arity == 0 {
        return Err("arity must be at least 1".into());
    }
    let mut arg_roles = Vec::new();
    for spec in fields[3].split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (role, ty) = spec.split_once(':').ok_or_else(|| format!("role `{spec}` lacks a type"))?;
        let ty = match ty.trim() {
            "any" => ArgType::Any,
            "literal" => ArgType::Literal,
            t if !t.is_empty() => ArgType::Object(t.to_string()),
            _ => return Err(format!("role `{spec}` has an empty type")),
        };
        arg_roles.push(ArgRole { name: role.trim().to_string(), ty });
    }
    if arg_roles.len() != arity {
        return Err(format!("arity {arity} but {} role(s) declared", arg_roles.len()));
    }
    let mut def = PredicateDef {
        name: name.to_string(),
        category,
        arity,
        arg_roles,
        supports_time: false,
        supports_interval: false,
        supports_location: false,
        derived: false,
    };
    for flag in fields[4].split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match flag {
            "time" => def.supports_time = true,
            "interval" => def.supports_interval = true,
            "location" => def.supports_location = true,
            "derived" => def.derived = true,
            other => return Err(format!("unknown flag `{other}`")),
        }
    }
    Ok(def)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_person_object() {
        let ont = Ontology::builtin();
        let p = ont.lookup("person").unwrap();
        assert_eq!(p.category, Category::Object);
        assert_eq!(p.arity, 1);
    }

    #[test]
    fn lookup_examples() {
        let ont = Ontology::builtin();
        let los = ont.lookup("clear-line-of-sight").unwrap();
        assert_eq!(los.arity, 2);
        assert!(los.derived && los.supports_time);
        assert!(ont.lookup("flying-saucer").is_none());
    }

    #[test]
    fn duplicate_rejected() {
        let doc = "a|object|1|e:any|\na|object|1|e:any|\n";
        assert!(matches!(Ontology::load(doc), Err(OntologyError::Duplicate(n)) if n == "a"));
    }

    #[test]
    fn cycle_rejected() {
        let doc = "person|object|1|e:any|\nmale|object|1|e:any|\nmale <: person\nperson <: male\n";
        assert!(matches!(Ontology::load(doc), Err(OntologyError::Cycle(_))));
    }

    #[test]
    fn self_loop_rejected() {
        let doc = "person|object|1|e:any|\nperson <: person\n";
        assert!(matches!(Ontology::load(doc), Err(OntologyError::Cycle(_))));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(Ontology::load("x|object|1\n"), Err(OntologyError::Parse { line: 1, .. })));
        assert!(matches!(Ontology::load("x|object|2|a:any|\n"), Err(OntologyError::Parse { .. })));
        assert!(matches!(Ontology::load("x|thing|1|a:any|\n"), Err(OntologyError::Parse { .. })));
        assert!(matches!(Ontology::load("x|object|1|a:any|fast\n"), Err(OntologyError::Parse { .. })));
    }

    #[test]
    fn derived_needs_relational_category() {
        let doc = "x|action|1|a:any|derived\n";
        assert!(matches!(Ontology::load(doc), Err(OntologyError::Invalid(_))));
    }

    #[test]
    fn hierarchy_must_be_objects() {
        let doc = "p|object|1|a:any|\nw|action|1|a:any|\nw <: p\n";
        assert!(matches!(Ontology::load(doc), Err(OntologyError::NotObject { .. })));
    }

    #[test]
    fn validate_atom_examples() {
        let ont = Ontology::builtin();
        assert!(ont.validate_atom("catching", 2, true, false, false).is_ok());
        assert!(ont.validate_atom("game", 2, false, true, false).is_ok());
        let v = ont.validate_atom("person", 3, false, false, false).unwrap_err();
        assert!(matches!(v[0], AtomViolation::Arity { expected: 1, found: 3, .. }));
        let v = ont.validate_atom("catching", 2, false, false, true).unwrap_err();
        assert!(matches!(v[0], AtomViolation::UnsupportedModifier { modifier: Modifier::Location, .. }));
        assert!(matches!(
            ont.validate_atom("nope", 1, false, false, false).unwrap_err()[0],
            AtomViolation::UnknownPredicate(_)
        ));
    }

    #[test]
    fn every_predicate_self_consistent() {
        let ont = Ontology::builtin();
        for d in ont.predicates() {
            assert!(
                ont.validate_atom(&d.name, d.arity, d.supports_time, d.supports_interval, d.supports_location)
                    .is_ok(),
                "{}",
                d.name
            );
        }
    }

    #[test]
    fn hierarchy_closure() {
        let ont = Ontology::builtin();
        for d in ont.by_category(Category::Object) {
            assert!(ont.subtype_of(&d.name, &d.name));
        }
        assert!(ont.subtype_of("male", "person"));
        assert!(ont.subtype_of("car", "vehicle"));
        assert!(!ont.subtype_of("person", "male"));
        assert!(!ont.subtype_of("walking", "walking"));
        let objs: Vec<&str> = ont.by_category(Category::Object).map(|d| d.name.as_str()).collect();
        for a in &objs {
            for b in &objs {
                for c in &objs {
                    if ont.subtype_of(a, b) && ont.subtype_of(b, c) {
                        assert!(ont.subtype_of(a, c));
                    }
                }
                if a != b && ont.subtype_of(a, b) {
                    assert!(!ont.subtype_of(b, a));
                }
            }
        }
        assert_eq!(ont.ancestors("car"), vec!["automobile", "vehicle", "entity"]);
    }

    #[test]
    fn load_is_deterministic() {
        assert_eq!(Ontology::load(BUILTIN).unwrap(), Ontology::load(BUILTIN).unwrap());
    }
}
