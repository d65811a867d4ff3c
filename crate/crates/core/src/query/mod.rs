//! Query AST, well-formedness rules and the XML wire codec.

mod xml;

pub use xml::{parse_query_xml, serialize_query_xml, write_formula};
pub(crate) use xml::{parse_answer_element, parse_query_node, write_answer_element, write_query, XmlWriter};

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ontology::{ArgType, AtomViolation, Category, Ontology};
use crate::{BBox, Point, QueryError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TimePoint {
    /// View-centric frame number of one camera.
    Frame { camera: String, frame: u64 },
    /// Seconds since the scene epoch.
    Scene(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TimeSpec {
    At(TimePoint),
    Interval { start: TimePoint, end: TimePoint },
}

impl TimeSpec {
    pub fn scene(t: f64) -> Self {
        TimeSpec::At(TimePoint::Scene(t))
    }

    pub fn frame(camera: impl Into<String>, frame: u64) -> Self {
        TimeSpec::At(TimePoint::Frame { camera: camera.into(), frame })
    }

    /// Endpoints must be the same kind (and camera) and ordered.
    pub fn interval(start: TimePoint, end: TimePoint) -> Result<Self, QueryError> {
        let ordered = match (&start, &end) {
            (TimePoint::Scene(a), TimePoint::Scene(b)) => a <= b,
            (TimePoint::Frame { camera: c1, frame: f1 }, TimePoint::Frame { camera: c2, frame: f2 }) => {
                if c1 != c2 {
                    return Err(QueryError::Invalid("interval endpoints name different cameras".into()));
                }
                f1 <= f2
            }
            _ => return Err(QueryError::Invalid("interval endpoints differ in kind".into())),
        };
        if !ordered {
            return Err(QueryError::Invalid("interval start is after its end".into()));
        }
        Ok(TimeSpec::Interval { start, end })
    }

    pub fn scene_interval(start: f64, end: f64) -> Result<Self, QueryError> {
        Self::interval(TimePoint::Scene(start), TimePoint::Scene(end))
    }

    pub fn is_interval(&self) -> bool {
        matches!(self, TimeSpec::Interval { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Point(Point),
    Box(BBox),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reference {
    /// Pixel coordinates of one camera.
    View { camera: String },
    /// Ground-plane coordinates of a named scene coordinate system.
    Scene { system: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSpec {
    pub shape: Shape,
    pub reference: Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Text(String),
    Number(f64),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Text(s) => f.write_str(s),
            Literal::Number(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    /// Quantified variable.
    Var(String),
    /// Conversation label bound by an earlier definition query (p1, M1, ...).
    Label(String),
    Literal(Literal),
}

impl Term {
    pub fn var(s: impl Into<String>) -> Self {
        Term::Var(s.into())
    }

    pub fn label(s: impl Into<String>) -> Self {
        Term::Label(s.into())
    }

    pub fn text(s: impl Into<String>) -> Self {
        Term::Literal(Literal::Text(s.into()))
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            Term::Var(n) | Term::Label(n) => Some(n),
            Term::Literal(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
    pub time: Option<TimeSpec>,
    pub location: Option<LocationSpec>,
}

impl Atom {
    pub fn new(pred: impl Into<String>, args: Vec<Term>) -> Self {
        Self { pred: pred.into(), args, time: None, location: None }
    }

    pub fn at(mut self, time: TimeSpec) -> Self {
        self.time = Some(time);
        self
    }

    pub fn located(mut self, location: LocationSpec) -> Self {
        self.location = Some(location);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    pub const ALL: [CmpOp; 5] = [CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ge, CmpOp::Gt];

    pub fn holds(&self, lhs: u64, rhs: u64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
            CmpOp::Eq => "eq",
            CmpOp::Ge => "ge",
            CmpOp::Gt => "gt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        CmpOp::ALL.into_iter().find(|o| o.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
    Exists { var: String, body: Box<Formula> },
    ForAll { var: String, body: Box<Formula> },
    /// `#{var : body} op rhs`
    Count { var: String, body: Box<Formula>, op: CmpOp, rhs: u64 },
}

impl Formula {
    pub fn atom(a: Atom) -> Self {
        Formula::Atom(a)
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn exists(var: impl Into<String>, body: Formula) -> Self {
        Formula::Exists { var: var.into(), body: Box::new(body) }
    }

    pub fn forall(var: impl Into<String>, body: Formula) -> Self {
        Formula::ForAll { var: var.into(), body: Box::new(body) }
    }

    pub fn count(var: impl Into<String>, body: Formula, op: CmpOp, rhs: u64) -> Self {
        Formula::Count { var: var.into(), body: Box::new(body), op, rhs }
    }

    /// Visits every atom in document order.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            Formula::Atom(a) => out.push(a),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| c.collect_atoms(out)),
            Formula::Not(c) => c.collect_atoms(out),
            Formula::Exists { body, .. } | Formula::ForAll { body, .. } | Formula::Count { body, .. } => {
                body.collect_atoms(out)
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Atom(_) => 1,
            Formula::And(cs) | Formula::Or(cs) => 1 + cs.iter().map(Formula::depth).max().unwrap_or(0),
            Formula::Not(c) => 1 + c.depth(),
            Formula::Exists { body, .. } | Formula::ForAll { body, .. } | Formula::Count { body, .. } => {
                1 + body.depth()
            }
        }
    }

    /// Conversation labels referenced anywhere in the formula.
    pub fn labels(&self) -> BTreeSet<String> {
        self.atoms()
            .into_iter()
            .flat_map(|a| a.args.iter())
            .filter_map(|t| match t {
                Term::Label(l) => Some(l.clone()),
                _ => None,
            })
            .collect()
    }

    /// Distinct predicate names, sorted.
    pub fn predicate_names(&self) -> BTreeSet<String> {
        self.atoms().into_iter().map(|a| a.pred.clone()).collect()
    }

    pub fn quantified_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn walk(f: &Formula, out: &mut BTreeSet<String>) {
            match f {
                Formula::Atom(_) => {}
                Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| walk(c, out)),
                Formula::Not(c) => walk(c, out),
                Formula::Exists { var, body } | Formula::ForAll { var, body } | Formula::Count { var, body, .. } => {
                    out.insert(var.clone());
                    walk(body, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }
}

/// Variables occurring free in `f`. Labels are never free variables.
pub fn free_vars(f: &Formula) -> BTreeSet<String> {
    match f {
        Formula::Atom(a) => a
            .args
            .iter()
            .filter_map(|t| match t {
                Term::Var(v) => Some(v.clone()),
                _ => None,
            })
            .collect(),
        Formula::And(cs) | Formula::Or(cs) => cs.iter().flat_map(free_vars).collect(),
        Formula::Not(c) => free_vars(c),
        Formula::Exists { var, body } | Formula::ForAll { var, body } | Formula::Count { var, body, .. } => {
            let mut s = free_vars(body);
            s.remove(var);
            s
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Definition,
    Polar,
    What,
    When,
    Where,
}

impl QueryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            QueryKind::Definition => "definition",
            QueryKind::Polar => "polar",
            QueryKind::What => "what",
            QueryKind::When => "when",
            QueryKind::Where => "where",
        }
    }

    pub fn is_nonpolar(&self) -> bool {
        matches!(self, QueryKind::What | QueryKind::When | QueryKind::Where)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub kind: QueryKind,
    pub body: Formula,
    /// Entity asked about by what/when/where queries.
    pub target: Option<Term>,
    /// Label introduced by a definition query.
    pub defines_label: Option<String>,
}

impl Query {
    pub fn polar(id: impl Into<String>, body: Formula) -> Self {
        Self { id: id.into(), kind: QueryKind::Polar, body, target: None, defines_label: None }
    }

    pub fn definition(id: impl Into<String>, label: impl Into<String>, body: Formula) -> Self {
        Self { id: id.into(), kind: QueryKind::Definition, body, target: None, defines_label: Some(label.into()) }
    }

    pub fn nonpolar(id: impl Into<String>, kind: QueryKind, target: Term, body: Formula) -> Self {
        Self { id: id.into(), kind, body, target: Some(target), defines_label: None }
    }

    /// Labels this query depends on (the body's labels plus a label target).
    pub fn referenced_labels(&self) -> BTreeSet<String> {
        let mut s = self.body.labels();
        if let Some(Term::Label(l)) = &self.target {
            s.insert(l.clone());
        }
        s
    }

    /// The single atom of a definition query: `exists v. type(v; time; location)`.
    pub fn definition_atom(&self) -> Option<(&str, &Atom)> {
        match &self.body {
            Formula::Exists { var, body } => match body.as_ref() {
                Formula::Atom(a) => Some((var.as_str(), a)),
                _ => None,
            },
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Answer {
    Bool(bool),
    Unable,
    Label(String),
    TimeInterval { start: f64, end: f64 },
    /// Scene-centric ring of at least three points.
    Polygon(Vec<Point>),
}

impl Answer {
    pub fn type_name(&self) -> &'static str {
        match self {
            Answer::Bool(_) => "bool",
            Answer::Unable => "unable",
            Answer::Label(_) => "label",
            Answer::TimeInterval { .. } => "interval",
            Answer::Polygon(_) => "polygon",
        }
    }

    /// Whether this answer shape fits a query kind. `Unable` fits every kind.
    pub fn fits(&self, kind: QueryKind) -> bool {
        matches!(
            (self, kind),
            (Answer::Unable, _)
                | (Answer::Bool(_), QueryKind::Definition | QueryKind::Polar)
                | (Answer::Label(_), QueryKind::What)
                | (Answer::TimeInterval { .. }, QueryKind::When)
                | (Answer::Polygon(_), QueryKind::Where)
        )
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        match self {
            Answer::TimeInterval { start, end } if !(start.is_finite() && end.is_finite() && start <= end) => {
                Err(QueryError::Invalid(format!("bad interval [{start}, {end}]")))
            }
            Answer::Polygon(ring) if ring.len() < 3 || !crate::geometry::is_simple(ring) => {
                Err(QueryError::Invalid("polygon must be a simple ring of at least 3 points".into()))
            }
            Answer::Label(l) if l.trim().is_empty() => Err(QueryError::Invalid("empty label".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    UnboundVariable(String),
    UnboundLabel(String),
    Atom(AtomViolation),
    /// A literal in an entity slot or an entity in a literal slot.
    ArgumentKind { predicate: String, position: usize },
    TooFewChildren,
    ShadowedVariable(String),
    EmptyName,
    Shape(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnboundVariable(v) => write!(f, "variable `{v}` is not bound by any quantifier"),
            Violation::UnboundLabel(l) => write!(f, "label `{l}` is not defined in this story line"),
            Violation::Atom(a) => write!(f, "{a}"),
            Violation::ArgumentKind { predicate, position } => {
                write!(f, "argument {position} of `{predicate}` has the wrong kind")
            }
            Violation::TooFewChildren => write!(f, "and/or needs at least two operands"),
            Violation::ShadowedVariable(v) => write!(f, "variable `{v}` is quantified twice on one path"),
            Violation::EmptyName => write!(f, "empty variable or label name"),
            Violation::Shape(s) => f.write_str(s),
        }
    }
}

/// Structural, ontological and contextual checks on a query.
pub fn well_formed(q: &Query, ont: &Ontology, ctx_labels: &HashSet<String>) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let mut scope = Vec::new();
    check_formula(&q.body, ont, ctx_labels, &mut scope, &mut v);

    match q.kind {
        QueryKind::Definition => {
            if q.defines_label.as_deref().is_none_or(str::is_empty) {
                v.push(Violation::Shape("definition query without a label".into()));
            }
            match q.definition_atom() {
                Some((var, a)) => {
                    if !ont.is_object_type(&a.pred) {
                        v.push(Violation::Shape(format!("`{}` is not an object predicate", a.pred)));
                    }
                    if a.time.is_none() || a.location.is_none() {
                        v.push(Violation::Shape("definition needs both a time and a location".into()));
                    }
                    if matches!(a.time, Some(TimeSpec::Interval { .. })) {
                        v.push(Violation::Shape("definition time must be a single instant".into()));
                    }
                    if a.args != [Term::Var(var.to_string())] {
                        v.push(Violation::Shape("definition atom must apply to the quantified variable".into()));
                    }
                }
                None => v.push(Violation::Shape("definition body must be exists over one atom".into())),
            }
        }
        QueryKind::What | QueryKind::When | QueryKind::Where => match &q.target {
            None => v.push(Violation::Shape(format!("{} query without a target", q.kind.as_str()))),
            Some(Term::Var(x)) => {
                if !q.body.quantified_vars().contains(x) {
                    v.push(Violation::UnboundVariable(x.clone()));
                }
            }
            Some(Term::Label(l)) => {
                if !ctx_labels.contains(l) {
                    v.push(Violation::UnboundLabel(l.clone()));
                }
            }
            Some(Term::Literal(_)) => v.push(Violation::Shape("target cannot be a literal".into())),
        },
        QueryKind::Polar => {}
    }
    if q.kind != QueryKind::Definition && q.defines_label.is_some() {
        v.push(Violation::Shape("only definition queries introduce labels".into()));
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

fn check_formula(
    f: &Formula,
    ont: &Ontology,
    ctx: &HashSet<String>,
    scope: &mut Vec<String>,
    out: &mut Vec<Violation>,
) {
    match f {
        Formula::Atom(a) => {
            let (has_time, has_interval) = match &a.time {
                Some(TimeSpec::At(_)) => (true, false),
                Some(TimeSpec::Interval { .. }) => (false, true),
                None => (false, false),
            };
            if let Err(vs) = ont.validate_atom(&a.pred, a.args.len(), has_time, has_interval, a.location.is_some()) {
                out.extend(vs.into_iter().map(Violation::Atom));
            }
            let roles = ont.lookup(&a.pred).map(|d| d.arg_roles.as_slice()).unwrap_or(&[]);
            for (i, t) in a.args.iter().enumerate() {
                match t {
                    Term::Var(n) | Term::Label(n) if n.is_empty() => out.push(Violation::EmptyName),
                    Term::Var(n) if !scope.contains(n) => out.push(Violation::UnboundVariable(n.clone())),
                    Term::Label(n) if !ctx.contains(n) => out.push(Violation::UnboundLabel(n.clone())),
                    _ => {}
                }
                if let Some(role) = roles.get(i) {
                    let literal_slot = role.ty == ArgType::Literal;
                    if literal_slot != matches!(t, Term::Literal(_)) {
                        out.push(Violation::ArgumentKind { predicate: a.pred.clone(), position: i });
                    }
                }
            }
        }
        Formula::And(cs) | Formula::Or(cs) => {
            if cs.len() < 2 {
                out.push(Violation::TooFewChildren);
            }
            cs.iter().for_each(|c| check_formula(c, ont, ctx, scope, out));
        }
        Formula::Not(c) => check_formula(c, ont, ctx, scope, out),
        Formula::Exists { var, body } | Formula::ForAll { var, body } | Formula::Count { var, body, .. } => {
            if var.is_empty() {
                out.push(Violation::EmptyName);
            }
            if scope.contains(var) {
                out.push(Violation::ShadowedVariable(var.clone()));
            }
            scope.push(var.clone());
            check_formula(body, ont, ctx, scope, out);
            scope.pop();
        }
    }
}

/// Predicate categories a query touches, sorted.
pub fn categories_of(q: &Query, ont: &Ontology) -> BTreeSet<Category> {
    q.body.atoms().iter().filter_map(|a| ont.lookup(&a.pred).map(|d| d.category)).collect()
}
