//! First-order query evaluation over a [`KnowledgeBase`] under story-line
//! context.
//!
//! Connectives use strong Kleene three-valued logic: `Unknown` arises only
//! from derived predicates at coverage gaps and surfaces as
//! "unable to respond". Stored predicates are closed-world.

mod intervals;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::geometry::{self, bbox_iou, convex_hull, DerivedPredicateConfig};
use crate::kb::{FactPattern, KnowledgeBase};
use crate::query::{Answer, Atom, Formula, Literal, LocationSpec, Query, QueryKind, Reference, Shape, Term, TimePoint, TimeSpec};
use crate::Point;

pub use intervals::truth_intervals;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }

    pub fn from_option(b: Option<bool>) -> Self {
        b.map_or(Truth::Unknown, Truth::from_bool)
    }

    pub fn not(self) -> Self {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unknown => Truth::Unknown,
        }
    }

    pub fn and(self, other: Self) -> Self {
        match (self, other) {
            (Truth::False, _) | (_, Truth::False) => Truth::False,
            (Truth::True, Truth::True) => Truth::True,
            _ => Truth::Unknown,
        }
    }

    pub fn or(self, other: Self) -> Self {
        self.not().and(other.not()).not()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnableReason {
    UnknownPredicate(String),
    CoverageGap,
    UnboundLabel(String),
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EvalOutcome {
    Value(Answer),
    Unable(UnableReason),
}

impl EvalOutcome {
    /// The answer a test-taker would submit.
    pub fn into_answer(self) -> Answer {
        match self {
            EvalOutcome::Value(a) => a,
            EvalOutcome::Unable(_) => Answer::Unable,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            EvalOutcome::Value(Answer::Bool(b)) => Some(*b),
            _ => None,
        }
    }
}

/// Per-story-line map from conversation labels to entities.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryContext {
    bindings: BTreeMap<String, String>,
    failed_labels: BTreeSet<String>,
}

impl StoryContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, label: &str, entity: &str) {
        self.failed_labels.remove(label);
        self.bindings.insert(label.to_string(), entity.to_string());
    }

    pub fn fail(&mut self, label: &str) {
        self.bindings.remove(label);
        self.failed_labels.insert(label.to_string());
    }

    pub fn entity_for(&self, label: &str) -> Option<&str> {
        self.bindings.get(label).map(String::as_str)
    }

    pub fn is_failed(&self, label: &str) -> bool {
        self.failed_labels.contains(label)
    }

    pub fn bindings(&self) -> &BTreeMap<String, String> {
        &self.bindings
    }

    pub fn failed_labels(&self) -> &BTreeSet<String> {
        &self.failed_labels
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }
}

/// Variable assignment during evaluation.
pub type Binding = HashMap<String, String>;

pub(crate) type EvalResult<T> = Result<T, UnableReason>;

enum Ground {
    Entity(String),
    Value(String),
}

fn ground(ctx: &StoryContext, binding: &Binding, t: &Term) -> EvalResult<Ground> {
    match t {
        Term::Var(v) => binding
            .get(v)
            .cloned()
            .map(Ground::Entity)
            .ok_or_else(|| UnableReason::Unsupported(format!("free variable `{v}`"))),
        Term::Label(l) => ctx
            .entity_for(l)
            .map(|e| Ground::Entity(e.to_string()))
            .ok_or_else(|| UnableReason::UnboundLabel(l.clone())),
        Term::Literal(Literal::Text(s)) => Ok(Ground::Value(s.clone())),
        Term::Literal(Literal::Number(n)) => Ok(Ground::Value(n.to_string())),
    }
}

fn resolve_window(kb: &KnowledgeBase, t: &TimeSpec) -> EvalResult<(f64, f64)> {
    kb.resolve_time(t).ok_or_else(|| UnableReason::Unsupported("time refers to an unknown camera".into()))
}

/// Match score of an entity against a time instant and location; higher is better.
///
/// View-centric boxes score by IoU (must reach `iou_threshold_def`), view
/// points score 1 when inside the entity's box, scene points score the
/// negated distance when within `near_threshold`, scene boxes score the
/// negated distance to the box center when the entity stands inside.
pub fn location_score(
    kb: &KnowledgeBase,
    entity: &str,
    time: &TimeSpec,
    loc: &LocationSpec,
    cfg: &DerivedPredicateConfig,
) -> EvalResult<Option<f64>> {
    let TimeSpec::At(point) = time else {
        return Err(UnableReason::Unsupported("location needs a single time instant".into()));
    };
    match &loc.reference {
        Reference::View { camera } => {
            let cam = kb
                .camera(camera)
                .ok_or_else(|| UnableReason::Unsupported(format!("unknown camera `{camera}`")))?;
            let frame = match point {
                TimePoint::Frame { camera: c, frame } if c == camera => *frame,
                other => {
                    let t = kb.resolve_point(other).ok_or_else(|| UnableReason::Unsupported("unknown camera".into()))?;
                    geometry::scene_time_to_frame(cam, t)
                }
            };
            let Some(bbox) = kb.bbox_at(entity, camera, frame) else {
                return Ok(None);
            };
            Ok(match &loc.shape {
                Shape::Box(q) => {
                    let iou = bbox_iou(q, &bbox);
                    (iou >= cfg.iou_threshold_def).then_some(iou)
                }
                Shape::Point(p) => bbox.contains(p).then_some(1.0),
            })
        }
        Reference::Scene { .. } => {
            let t = kb.resolve_point(point).ok_or_else(|| UnableReason::Unsupported("unknown camera".into()))?;
            let Some(pos) = kb.position_at(entity, t) else {
                return Ok(None);
            };
            Ok(match &loc.shape {
                Shape::Point(p) => {
                    let d = pos.distance(p);
                    (d <= cfg.near_threshold).then_some(-d)
                }
                Shape::Box(b) => b.contains(&pos).then(|| -pos.distance(&b.center())),
            })
        }
    }
}

/// Truth of one atom under the context and a variable assignment.
pub fn evaluate_atom(
    kb: &KnowledgeBase,
    ctx: &StoryContext,
    atom: &Atom,
    binding: &Binding,
    cfg: &DerivedPredicateConfig,
) -> EvalResult<Truth> {
    let def = kb.ontology().lookup(&atom.pred).ok_or_else(|| UnableReason::UnknownPredicate(atom.pred.clone()))?;
    let args = atom.args.iter().map(|t| ground(ctx, binding, t)).collect::<EvalResult<Vec<_>>>()?;
    let entities: Vec<&str> = args
        .iter()
        .filter_map(|g| match g {
            Ground::Entity(e) => Some(e.as_str()),
            Ground::Value(_) => None,
        })
        .collect();
    let value = args.iter().find_map(|g| match g {
        Ground::Value(v) => Some(v.clone()),
        Ground::Entity(_) => None,
    });
    if atom.args.len() != def.arity {
        return Err(UnableReason::Unsupported(format!("`{}` applied to {} argument(s)", def.name, atom.args.len())));
    }

    if def.is_object() {
        let e = entities[0];
        let typed = kb.entity(e).is_some_and(|ent| kb.ontology().subtype_of(&ent.object_type, &def.name));
        let mut truth = Truth::from_bool(typed);
        if let (Some(loc), true) = (&atom.location, typed) {
            let time = atom
                .time
                .as_ref()
                .ok_or_else(|| UnableReason::Unsupported("location without a time".into()))?;
            truth = Truth::from_bool(location_score(kb, e, time, loc, cfg)?.is_some());
        }
        return Ok(truth);
    }

    if def.derived {
        let window = match &atom.time {
            Some(t) => resolve_window(kb, t)?,
            None => return Err(UnableReason::Unsupported(format!("`{}` needs a time", def.name))),
        };
        if window.0 != window.1 {
            return Err(UnableReason::Unsupported(format!("`{}` needs a single instant", def.name)));
        }
        let (a, b) = (entities[0], entities[1]);
        return match def.name.as_str() {
            "clear-line-of-sight" => Ok(Truth::from_option(geometry::clear_line_of_sight(kb, a, b, window.0, cfg))),
            "near" => Ok(Truth::from_option(geometry::near(kb, a, b, window.0, cfg))),
            other => Err(UnableReason::Unsupported(format!("no evaluator for derived predicate `{other}`"))),
        };
    }

    let window = atom.time.as_ref().map(|t| resolve_window(kb, t)).transpose()?;
    let pattern = FactPattern {
        predicate: Some(def.name.clone()),
        participants: Some(entities.iter().map(|e| Some(e.to_string())).collect()),
        value,
    };
    let hit = kb
        .facts_in_window(&pattern, window)
        .iter()
        .any(|f| window.is_none_or(|(s, e)| f.covers(s, e)));
    Ok(Truth::from_bool(hit))
}

/// Entities a quantifier over `var` needs to visit.
///
/// When the body is (a conjunction containing) a plain object-type atom on
/// `var`, entities of other types make the body false, so they can be
/// skipped for existential and counting quantifiers.
fn quantifier_domain<'k>(kb: &'k KnowledgeBase, var: &str, body: &Formula, restrict: bool) -> Vec<&'k str> {
    if restrict {
        let type_atom = |f: &Formula| match f {
            Formula::Atom(a)
                if a.location.is_none()
                    && a.args.len() == 1
                    && a.args[0] == Term::Var(var.to_string())
                    && kb.ontology().is_object_type(&a.pred) =>
            {
                Some(a.pred.clone())
            }
            _ => None,
        };
        let found = match body {
            Formula::And(cs) => cs.iter().find_map(type_atom),
            other => type_atom(other),
        };
        if let Some(t) = found {
            return kb.entities_of_type(&t, None, None);
        }
    }
    kb.entity_ids()
}

pub fn evaluate_formula(
    kb: &KnowledgeBase,
    ctx: &StoryContext,
    f: &Formula,
    binding: &mut Binding,
    cfg: &DerivedPredicateConfig,
) -> EvalResult<Truth> {
    match f {
        Formula::Atom(a) => evaluate_atom(kb, ctx, a, binding, cfg),
        Formula::Not(c) => Ok(evaluate_formula(kb, ctx, c, binding, cfg)?.not()),
        Formula::And(cs) => {
            let mut acc = Truth::True;
            for c in cs {
                match evaluate_formula(kb, ctx, c, binding, cfg)? {
                    Truth::False => return Ok(Truth::False),
                    t => acc = acc.and(t),
                }
            }
            Ok(acc)
        }
        Formula::Or(cs) => {
            let mut acc = Truth::False;
            for c in cs {
                match evaluate_formula(kb, ctx, c, binding, cfg)? {
                    Truth::True => return Ok(Truth::True),
                    t => acc = acc.or(t),
                }
            }
            Ok(acc)
        }
        Formula::Exists { var, body } => {
            let mut acc = Truth::False;
            for e in quantifier_domain(kb, var, body, true) {
                match with_bound(binding, var, e, |b| evaluate_formula(kb, ctx, body, b, cfg))? {
                    Truth::True => return Ok(Truth::True),
                    t => acc = acc.or(t),
                }
            }
            Ok(acc)
        }
        Formula::ForAll { var, body } => {
            let mut acc = Truth::True;
            for e in quantifier_domain(kb, var, body, false) {
                match with_bound(binding, var, e, |b| evaluate_formula(kb, ctx, body, b, cfg))? {
                    Truth::False => return Ok(Truth::False),
                    t => acc = acc.and(t),
                }
            }
            Ok(acc)
        }
        Formula::Count { var, body, op, rhs } => {
            let (sure, unsure) = count_bounds(kb, ctx, var, body, binding, cfg)?;
            let verdicts: BTreeSet<bool> = (sure..=sure + unsure).map(|n| op.holds(n, *rhs)).collect();
            Ok(match (verdicts.contains(&true), verdicts.contains(&false)) {
                (true, false) => Truth::True,
                (false, true) => Truth::False,
                _ => Truth::Unknown,
            })
        }
    }
}

fn with_bound<T>(binding: &mut Binding, var: &str, entity: &str, f: impl FnOnce(&mut Binding) -> T) -> T {
    let prev = binding.insert(var.to_string(), entity.to_string());
    let out = f(binding);
    match prev {
        Some(p) => binding.insert(var.to_string(), p),
        None => binding.remove(var),
    };
    out
}

/// (entities for which the body is true, entities for which it is unknown)
fn count_bounds(
    kb: &KnowledgeBase,
    ctx: &StoryContext,
    var: &str,
    body: &Formula,
    binding: &mut Binding,
    cfg: &DerivedPredicateConfig,
) -> EvalResult<(u64, u64)> {
    let (mut sure, mut unsure) = (0u64, 0u64);
    for e in quantifier_domain(kb, var, body, true) {
        match with_bound(binding, var, e, |b| evaluate_formula(kb, ctx, body, b, cfg))? {
            Truth::True => sure += 1,
            Truth::Unknown => unsure += 1,
            Truth::False => {}
        }
    }
    Ok((sure, unsure))
}

fn outcome_of(r: EvalResult<Truth>) -> EvalOutcome {
    match r {
        Ok(Truth::True) => EvalOutcome::Value(Answer::Bool(true)),
        Ok(Truth::False) => EvalOutcome::Value(Answer::Bool(false)),
        Ok(Truth::Unknown) => EvalOutcome::Unable(UnableReason::CoverageGap),
        Err(reason) => EvalOutcome::Unable(reason),
    }
}

/// True/false for a closed formula; unknown surfaces as a coverage gap.
pub fn evaluate_polar(kb: &KnowledgeBase, ctx: &StoryContext, f: &Formula, cfg: &DerivedPredicateConfig) -> EvalOutcome {
    outcome_of(evaluate_formula(kb, ctx, f, &mut Binding::new(), cfg))
}

/// Verdict of a counting comparison; non-`Count` formulas are unsupported.
pub fn evaluate_count(kb: &KnowledgeBase, ctx: &StoryContext, c: &Formula, cfg: &DerivedPredicateConfig) -> EvalOutcome {
    match c {
        Formula::Count { .. } => evaluate_polar(kb, ctx, c, cfg),
        _ => EvalOutcome::Unable(UnableReason::Unsupported("not a counting formula".into())),
    }
}

/// Number of entities for which `body[var := e]` is definitely true.
pub fn count_value(
    kb: &KnowledgeBase,
    ctx: &StoryContext,
    var: &str,
    body: &Formula,
    cfg: &DerivedPredicateConfig,
) -> Result<u64, UnableReason> {
    count_bounds(kb, ctx, var, body, &mut Binding::new(), cfg).map(|(sure, _)| sure)
}

/// Matches a definition query against the KB and records the outcome in `ctx`.
///
/// The best candidate by (score desc, entity id asc) is bound to the
/// query's label; with no candidate the label is marked failed.
pub fn resolve_definition(
    kb: &KnowledgeBase,
    ctx: &mut StoryContext,
    q: &Query,
    cfg: &DerivedPredicateConfig,
) -> EvalOutcome {
    let Some(label) = q.defines_label.as_deref() else {
        return EvalOutcome::Unable(UnableReason::Unsupported("definition without a label".into()));
    };
    match definition_candidate(kb, q, cfg) {
        Ok(Some(e)) => {
            ctx.bind(label, &e);
            EvalOutcome::Value(Answer::Bool(true))
        }
        Ok(None) => {
            ctx.fail(label);
            EvalOutcome::Value(Answer::Bool(false))
        }
        Err(reason) => {
            ctx.fail(label);
            EvalOutcome::Unable(reason)
        }
    }
}

/// The entity a definition query would bind, if any.
pub fn definition_candidate(kb: &KnowledgeBase, q: &Query, cfg: &DerivedPredicateConfig) -> EvalResult<Option<String>> {
    let (_, atom) = q
        .definition_atom()
        .ok_or_else(|| UnableReason::Unsupported("definition body must be exists over one atom".into()))?;
    if !kb.ontology().is_object_type(&atom.pred) {
        return Err(UnableReason::UnknownPredicate(atom.pred.clone()));
    }
    let (Some(time), Some(loc)) = (&atom.time, &atom.location) else {
        return Err(UnableReason::Unsupported("definition needs time and location".into()));
    };
    let mut best: Option<(f64, &str)> = None;
    for e in kb.entities_of_type(&atom.pred, None, None) {
        if let Some(score) = location_score(kb, e, time, loc, cfg)? {
            // entities come in ascending id order, so strict > keeps the smallest id on ties
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, e));
            }
        }
    }
    Ok(best.map(|(_, e)| e.to_string()))
}

fn strip_target_quantifier<'f>(body: &'f Formula, var: &str) -> Option<&'f Formula> {
    match body {
        Formula::Exists { var: v, body } if v == var => Some(body),
        _ => None,
    }
}

/// Entities satisfying `inner` for the target variable; errors on any unknown.
fn satisfying_targets(
    kb: &KnowledgeBase,
    ctx: &StoryContext,
    var: &str,
    inner: &Formula,
    cfg: &DerivedPredicateConfig,
) -> EvalResult<Vec<String>> {
    let mut out = Vec::new();
    let mut binding = Binding::new();
    for e in quantifier_domain(kb, var, inner, true) {
        match with_bound(&mut binding, var, e, |b| evaluate_formula(kb, ctx, inner, b, cfg))? {
            Truth::True => out.push(e.to_string()),
            Truth::Unknown => return Err(UnableReason::CoverageGap),
            Truth::False => {}
        }
    }
    Ok(out)
}

fn target_entity(
    kb: &KnowledgeBase,
    ctx: &StoryContext,
    q: &Query,
    cfg: &DerivedPredicateConfig,
) -> EvalResult<(String, Binding)> {
    match &q.target {
        Some(Term::Label(l)) => {
            let e = ctx.entity_for(l).ok_or_else(|| UnableReason::UnboundLabel(l.clone()))?;
            match evaluate_formula(kb, ctx, &q.body, &mut Binding::new(), cfg)? {
                Truth::True => Ok((e.to_string(), Binding::new())),
                Truth::Unknown => Err(UnableReason::CoverageGap),
                Truth::False => Err(UnableReason::Unsupported("query premise does not hold".into())),
            }
        }
        Some(Term::Var(v)) => {
            let inner = strip_target_quantifier(&q.body, v)
                .ok_or_else(|| UnableReason::Unsupported("target must be the outermost quantified variable".into()))?;
            let hits = satisfying_targets(kb, ctx, v, inner, cfg)?;
            match hits.as_slice() {
                [one] => {
                    let mut b = Binding::new();
                    b.insert(v.clone(), one.clone());
                    Ok((one.clone(), b))
                }
                _ => Err(UnableReason::Unsupported(format!("{} entities satisfy the query", hits.len()))),
            }
        }
        _ => Err(UnableReason::Unsupported("missing target".into())),
    }
}

/// Answers what/when/where queries.
pub fn answer_nonpolar(kb: &KnowledgeBase, ctx: &StoryContext, q: &Query, cfg: &DerivedPredicateConfig) -> EvalOutcome {
    let r = match q.kind {
        QueryKind::What => answer_what(kb, ctx, q, cfg),
        QueryKind::When => answer_when(kb, ctx, q, cfg),
        QueryKind::Where => answer_where(kb, ctx, q, cfg),
        _ => Err(UnableReason::Unsupported("not a non-polar query".into())),
    };
    match r {
        Ok(a) => EvalOutcome::Value(a),
        Err(reason) => EvalOutcome::Unable(reason),
    }
}

fn answer_what(kb: &KnowledgeBase, ctx: &StoryContext, q: &Query, cfg: &DerivedPredicateConfig) -> EvalResult<Answer> {
    let entities = match &q.target {
        Some(Term::Var(v)) => {
            let inner = strip_target_quantifier(&q.body, v)
                .ok_or_else(|| UnableReason::Unsupported("target must be the outermost quantified variable".into()))?;
            satisfying_targets(kb, ctx, v, inner, cfg)?
        }
        _ => vec![target_entity(kb, ctx, q, cfg)?.0],
    };
    let labels: BTreeSet<&str> =
        entities.iter().filter_map(|e| kb.entity(e)).map(|e| e.object_type.as_str()).collect();
    match labels.into_iter().collect::<Vec<_>>().as_slice() {
        [one] => Ok(Answer::Label(one.to_string())),
        other => Err(UnableReason::Unsupported(format!("{} distinct labels satisfy the query", other.len()))),
    }
}

fn answer_when(kb: &KnowledgeBase, ctx: &StoryContext, q: &Query, cfg: &DerivedPredicateConfig) -> EvalResult<Answer> {
    let mut binding = Binding::new();
    if let Some(Term::Label(l)) = &q.target {
        if ctx.entity_for(l).is_none() {
            return Err(UnableReason::UnboundLabel(l.clone()));
        }
    }
    let set = truth_intervals(kb, ctx, &q.body, &mut binding, cfg)?;
    match set.as_slice() {
        [(s, e)] if s.is_finite() && e.is_finite() => Ok(Answer::TimeInterval { start: *s, end: *e }),
        [] => Err(UnableReason::Unsupported("the query never holds".into())),
        _ => Err(UnableReason::Unsupported("the query holds over no single bounded interval".into())),
    }
}

fn answer_where(kb: &KnowledgeBase, ctx: &StoryContext, q: &Query, cfg: &DerivedPredicateConfig) -> EvalResult<Answer> {
    let mut window: Option<(f64, f64)> = None;
    for a in q.body.atoms() {
        if let Some(t) = &a.time {
            let (s, e) = resolve_window(kb, t)?;
            window = Some(window.map_or((s, e), |(ws, we)| (ws.min(s), we.max(e))));
        }
    }
    let (s, e) = window.ok_or_else(|| UnableReason::Unsupported("where query without a time".into()))?;
    let (entity, _) = target_entity(kb, ctx, q, cfg)?;
    let mut pts: Vec<Point> = kb
        .track(&entity)
        .iter()
        .filter(|(t, _)| *t >= s && *t <= e)
        .map(|(_, p)| *p)
        .collect();
    pts.extend(kb.position_at(&entity, s));
    pts.extend(kb.position_at(&entity, e));
    if pts.is_empty() {
        return Err(UnableReason::CoverageGap);
    }
    Ok(Answer::Polygon(hull_or_buffer(&pts, cfg.los_block_radius)))
}

/// Convex hull, or the points' bounding box grown by `r` when the hull is
/// degenerate or thinner than `r` squared in area (a single point becomes a
/// square of side `2r`).
pub fn hull_or_buffer(pts: &[Point], r: f64) -> Vec<Point> {
    let hull = convex_hull(pts);
    if hull.len() >= 3 && geometry::polygon_area(&hull) >= r * r && geometry::is_simple(&hull) {
        return hull;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    vec![
        Point::new(x0 - r, y0 - r),
        Point::new(x1 + r, y0 - r),
        Point::new(x1 + r, y1 + r),
        Point::new(x0 - r, y1 + r),
    ]
}

/// Answers any query kind. Only definition queries modify `ctx`.
pub fn answer_query(kb: &KnowledgeBase, ctx: &mut StoryContext, q: &Query, cfg: &DerivedPredicateConfig) -> EvalOutcome {
    match q.kind {
        QueryKind::Definition => resolve_definition(kb, ctx, q, cfg),
        QueryKind::Polar => evaluate_polar(kb, ctx, &q.body, cfg),
        _ => answer_nonpolar(kb, ctx, q, cfg),
    }
}

#[cfg(test)]
mod tests;
