//! Story-line suite generation over ground-truth knowledge bases.
//!
//! Every generated query carries the answer the engine computes for it, so
//! a suite is answerable by construction. Story lines open with definitions
//! of the objects they follow and reuse the bound labels afterwards; a
//! configurable share of story lines open with a definition that cannot be
//! resolved and then ask only about the scene at large.
//!
//! Two running tallies steer sampling across the whole suite: the share of
//! `person` among object-predicate occurrences and the share of false polar
//! ground truths. Each decision is a coin whose bias grows with the current
//! deficit, which keeps both shares on target without a fixed pattern.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{answer_query, count_value, definition_candidate, evaluate_polar, EvalOutcome, StoryContext};
use crate::eval::{EvaluationSuite, GradingConfig, SceneSuite, Storyline, SuiteItem};
use crate::kb::FactNode;
use crate::ontology::{ArgType, Category};
use crate::query::{
    serialize_query_xml, well_formed, Atom, CmpOp, Formula, LocationSpec, Literal, Reference, Shape, Term, TimePoint,
    TimeSpec,
};
use crate::{Answer, BBox, DerivedPredicateConfig, GenerateError, KnowledgeBase, Ontology, Point, Query, QueryKind};

/// Weight of `person` among object predicates in the default distribution.
pub const PERSON_WEIGHT: f64 = 0.559;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    /// Relative predicate frequencies. Object predicates compete with one
    /// another; the other predicates compete among the facts at hand.
    pub weights: BTreeMap<String, f64>,
    pub storylines_per_scene: usize,
    /// Inclusive range of items per story line, definitions included.
    pub queries_per_storyline: (usize, usize),
    /// Target share of polar queries whose ground truth is false.
    pub negative_fraction: f64,
    /// Share of story lines led by an unresolvable definition.
    pub false_definition_fraction: f64,
    /// Candidate queries tried per requested item before giving up.
    pub retry_budget: usize,
    pub geometry: DerivedPredicateConfig,
    pub grading: GradingConfig,
}

impl GenConfig {
    /// Defaults over `ont`: `person` gets [`PERSON_WEIGHT`] of the object
    /// mass, other object predicates share the rest evenly and every other
    /// predicate weighs 1.
    pub fn new(seed: u64, ont: &Ontology) -> Self {
        let objects: Vec<&str> = ont.by_category(Category::Object).map(|d| d.name.as_str()).collect();
        let others = (objects.len().saturating_sub(1)).max(1) as f64;
        let weights = ont
            .predicates()
            .map(|d| {
                let w = match (d.category, d.name.as_str()) {
                    (Category::Object, "person") => PERSON_WEIGHT,
                    (Category::Object, _) => (1.0 - PERSON_WEIGHT) / others,
                    _ => 1.0,
                };
                (d.name.clone(), w)
            })
            .collect();
        Self {
            seed,
            weights,
            storylines_per_scene: 32,
            queries_per_storyline: (22, 28),
            negative_fraction: 0.5,
            false_definition_fraction: 0.1,
            retry_budget: 40,
            geometry: DerivedPredicateConfig::default(),
            grading: GradingConfig::default(),
        }
    }

    pub fn weight(&self, pred: &str) -> f64 {
        self.weights.get(pred).copied().unwrap_or(0.0)
    }

    /// Target share of `person` among object-predicate occurrences.
    pub fn person_share(&self, ont: &Ontology) -> f64 {
        let total: f64 = ont.by_category(Category::Object).map(|d| self.weight(&d.name)).sum();
        if total > 0.0 {
            self.weight("person") / total
        } else {
            0.0
        }
    }

    pub fn validate(&self, ont: &Ontology) -> Result<(), GenerateError> {
        let bad = |m: String| Err(GenerateError::Config(m));
        if let Some((p, w)) = self.weights.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return bad(format!("weight of `{p}` is {w}"));
        }
        if let Some(p) = self.weights.keys().find(|p| ont.lookup(p).is_none()) {
            return bad(format!("weight for unknown predicate `{p}`"));
        }
        if self.weights.values().sum::<f64>() <= 0.0 {
            return bad("weights sum to zero".into());
        }
        for (name, v) in [("negative_fraction", self.negative_fraction), ("false_definition_fraction", self.false_definition_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        let (lo, hi) = self.queries_per_storyline;
        if lo < 2 || lo > hi {
            return bad(format!("queries_per_storyline {lo}..{hi} needs 2 <= min <= max"));
        }
        if self.retry_budget == 0 {
            return bad("retry_budget must be positive".into());
        }
        self.geometry.validate().map_err(GenerateError::Config)
    }

    /// `key=value` pairs echoed into `suite.meta`.
    pub fn meta_entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("gen.seed".to_string(), self.seed.to_string()),
            ("gen.storylines_per_scene".into(), self.storylines_per_scene.to_string()),
            (
                "gen.queries_per_storyline".into(),
                format!("{}-{}", self.queries_per_storyline.0, self.queries_per_storyline.1),
            ),
            ("gen.negative_fraction".into(), self.negative_fraction.to_string()),
            ("gen.false_definition_fraction".into(), self.false_definition_fraction.to_string()),
            ("gen.retry_budget".into(), self.retry_budget.to_string()),
            ("grade.when_iou".into(), self.grading.when_iou.to_string()),
            ("grade.where_iou".into(), self.grading.where_iou.to_string()),
            ("grade.lenient_what".into(), self.grading.lenient_what.to_string()),
        ];
        out.extend(self.weights.iter().map(|(p, w)| (format!("gen.weight.{p}"), w.to_string())));
        out.extend(crate::config::geometry_entries(&self.geometry));
        out
    }
}

/// Generation stopped short: the error and whatever was produced.
#[derive(Debug)]
pub struct PartialSuite {
    pub error: GenerateError,
    pub suite: EvaluationSuite,
}

impl fmt::Display for PartialSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} story lines generated)", self.error, self.suite.storyline_count())
    }
}

impl std::error::Error for PartialSuite {}

/// Deficit-driven coin: more likely to come up when `hits` lags `target`.
fn steer(rng: &mut impl Rng, target: f64, hits: u64, total: u64) -> bool {
    if target <= 0.0 {
        return false;
    }
    if target >= 1.0 {
        return true;
    }
    let deficit = target * (total + 1) as f64 - hits as f64;
    rng.gen_bool((target + 0.1 * deficit).clamp(0.02, 0.98))
}

/// Suite-wide counters behind the steering coins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tally {
    pub person: u64,
    pub objects: u64,
    pub polar: u64,
    pub polar_false: u64,
}

impl Tally {
    pub fn record(&mut self, q: &Query, truth: &Answer, ont: &Ontology) {
        for a in q.body.atoms() {
            if ont.is_object_type(&a.pred) {
                self.objects += 1;
                self.person += u64::from(a.pred == "person");
            }
        }
        if q.kind == QueryKind::Polar {
            self.polar += 1;
            self.polar_false += u64::from(*truth == Answer::Bool(false));
        }
    }

    pub fn person_share(&self) -> f64 {
        if self.objects == 0 {
            0.0
        } else {
            self.person as f64 / self.objects as f64
        }
    }

    pub fn false_share(&self) -> f64 {
        if self.polar == 0 {
            0.0
        } else {
            self.polar_false as f64 / self.polar as f64
        }
    }
}

fn round_half(t: f64) -> f64 {
    (t * 2.0).round() / 2.0
}

/// A random half-second instant in `[a, b]`, or `a` when none fits.
fn instant_in(rng: &mut impl Rng, a: f64, b: f64) -> f64 {
    let (lo, hi) = ((a * 2.0).ceil() as i64, (b * 2.0).floor() as i64);
    if lo > hi {
        a
    } else {
        rng.gen_range(lo..=hi) as f64 / 2.0
    }
}

fn weighted<'a, T>(rng: &mut impl Rng, items: &'a [T], weight: impl Fn(&T) -> f64) -> Option<&'a T> {
    let total: f64 = items.iter().map(&weight).sum();
    if !(total > 0.0) {
        return items.choose(rng);
    }
    let mut x = rng.gen_range(0.0..total);
    for it in items {
        x -= weight(it);
        if x < 0.0 {
            return Some(it);
        }
    }
    items.last()
}

/// Generates one scene suite per knowledge base, ordered by scene id.
pub fn generate_suite(
    suite_id: &str,
    kbs: &[&KnowledgeBase],
    ont: &Ontology,
    cfg: &GenConfig,
) -> Result<EvaluationSuite, Box<PartialSuite>> {
    let mut suite = EvaluationSuite::new(suite_id);
    if let Err(error) = cfg.validate(ont) {
        return Err(Box::new(PartialSuite { error, suite }));
    }
    suite.meta.extend(cfg.meta_entries());
    let mut order: Vec<&KnowledgeBase> = kbs.to_vec();
    order.sort_by(|a, b| a.meta.scene_id.cmp(&b.meta.scene_id));
    let mut tally = Tally::default();
    let mut shortfalls = Vec::new();
    for kb in order {
        let scene = kb.meta.scene_id.clone();
        suite.meta.insert(format!("kb_checksum.{scene}"), kb.checksum().to_string());
        let gen = SceneGen::new(kb, ont, cfg);
        let mut storylines = Vec::new();
        for i in 0..cfg.storylines_per_scene {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream_id(&scene, i));
            let prefix = format!("{scene}-{:03}", i + 1);
            let false_def = rng.gen_bool(cfg.false_definition_fraction);
            let built = if false_def {
                gen.false_definition_storyline(&mut rng, &mut tally, &prefix)
            } else {
                gen.positive_storyline(&mut rng, &mut tally, &prefix)
            };
            match built {
                Some((items, complete)) => {
                    if !complete {
                        shortfalls.push(prefix);
                    }
                    storylines.push(Storyline { id: Storyline::storyline_id(storylines.len()), items });
                }
                None => shortfalls.push(prefix),
            }
        }
        suite.scenes.push(SceneSuite { scene, storylines });
    }
    if shortfalls.is_empty() {
        Ok(suite)
    } else {
        let error = GenerateError::Exhausted(format!("story lines fell short: {}", shortfalls.join(", ")));
        Err(Box::new(PartialSuite { error, suite }))
    }
}

fn stream_id(scene: &str, index: usize) -> u64 {
    // FNV-1a over the scene id, then the index
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in scene.bytes().chain((index as u64).to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Replaces one predicate, argument, time or count bound of a true polar
/// query until the engine says the result is false.
pub fn sample_negative(
    kb: &KnowledgeBase,
    ont: &Ontology,
    rng: &mut impl Rng,
    ctx: &StoryContext,
    positive: &SuiteItem,
    cfg: &DerivedPredicateConfig,
    budget: usize,
) -> Result<Query, GenerateError> {
    if positive.query.kind != QueryKind::Polar || positive.ground_truth != Answer::Bool(true) {
        return Err(GenerateError::Config("negative sampling needs a true polar query".into()));
    }
    let labels: BTreeSet<String> = ctx.bindings().keys().cloned().collect();
    let label_set: std::collections::HashSet<String> = labels.iter().cloned().collect();
    let (t_lo, t_hi) = kb.time_span().unwrap_or((0.0, 0.0));
    for _ in 0..budget {
        let mut body = positive.query.body.clone();
        if !perturb(&mut body, kb, ont, rng, &labels, (t_lo, t_hi)) {
            continue;
        }
        let q = Query { body, ..positive.query.clone() };
        if well_formed(&q, ont, &label_set).is_err() {
            continue;
        }
        if evaluate_polar(kb, ctx, &q.body, cfg) == EvalOutcome::Value(Answer::Bool(false)) {
            return Ok(q);
        }
    }
    Err(GenerateError::Exhausted(format!("no false variant of `{}` within {budget} tries", positive.query.id)))
}

/// Mutable references to the atoms and count nodes of a formula.
enum Site<'f> {
    Atom(&'f mut Atom),
    Count(&'f mut CmpOp, &'f mut u64),
}

fn sites<'f>(f: &'f mut Formula, out: &mut Vec<Site<'f>>) {
    match f {
        Formula::Atom(a) => out.push(Site::Atom(a)),
        Formula::And(cs) | Formula::Or(cs) => cs.iter_mut().for_each(|c| sites(c, out)),
        Formula::Not(c) => sites(c, out),
        Formula::Exists { body, .. } | Formula::ForAll { body, .. } => sites(body, out),
        Formula::Count { body, op, rhs, .. } => {
            out.push(Site::Count(op, rhs));
            sites(body, out);
        }
    }
}

fn perturb(
    f: &mut Formula,
    kb: &KnowledgeBase,
    ont: &Ontology,
    rng: &mut impl Rng,
    labels: &BTreeSet<String>,
    span: (f64, f64),
) -> bool {
    let mut all = Vec::new();
    sites(f, &mut all);
    if all.is_empty() {
        return false;
    }
    let k = rng.gen_range(0..all.len());
    match all.swap_remove(k) {
        Site::Count(op, rhs) => {
            *op = *[CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ge, CmpOp::Gt].choose(rng).unwrap();
            *rhs = rng.gen_range(0..=(*rhs + 2));
            true
        }
        Site::Atom(a) => match rng.gen_range(0..3) {
            0 => swap_predicate(a, ont, rng),
            1 => swap_argument(a, kb, ont, rng, labels),
            _ => shift_time(a, rng, span),
        },
    }
}

fn swap_predicate(a: &mut Atom, ont: &Ontology, rng: &mut impl Rng) -> bool {
    let Some(def) = ont.lookup(&a.pred) else { return false };
    let kinds: Vec<bool> = def.arg_roles.iter().map(|r| r.ty == ArgType::Literal).collect();
    let options: Vec<&str> = ont
        .by_category(def.category)
        .filter(|d| d.name != def.name && d.derived == def.derived && d.arity == def.arity)
        .filter(|d| d.arg_roles.iter().map(|r| r.ty == ArgType::Literal).collect::<Vec<_>>() == kinds)
        .filter(|d| {
            (a.time.is_none() || d.supports_time)
                && (!matches!(a.time, Some(TimeSpec::Interval { .. })) || d.supports_interval)
                && (a.location.is_none() || d.supports_location)
        })
        .map(|d| d.name.as_str())
        .collect();
    match options.choose(rng) {
        Some(p) => {
            a.pred = p.to_string();
            true
        }
        None => false,
    }
}

fn swap_argument(a: &mut Atom, kb: &KnowledgeBase, ont: &Ontology, rng: &mut impl Rng, labels: &BTreeSet<String>) -> bool {
    let slots: Vec<usize> = (0..a.args.len()).filter(|i| !matches!(a.args[*i], Term::Var(_))).collect();
    let Some(&i) = slots.choose(rng) else { return false };
    match &a.args[i] {
        Term::Label(l) => {
            let others: Vec<&String> = labels.iter().filter(|o| *o != l).collect();
            match others.choose(rng) {
                Some(o) => {
                    a.args[i] = Term::label(o.as_str());
                    true
                }
                None => false,
            }
        }
        Term::Literal(Literal::Text(v)) => {
            let mut values: BTreeSet<&str> = kb
                .facts()
                .iter()
                .filter(|f| f.predicate == a.pred)
                .filter_map(|f| f.value.as_deref())
                .collect();
            values.remove(v.as_str());
            let values: Vec<&str> = values.into_iter().collect();
            match values.choose(rng) {
                Some(nv) => {
                    a.args[i] = Term::text(*nv);
                    true
                }
                None => false,
            }
        }
        _ => {
            let _ = ont;
            false
        }
    }
}

fn shift_time(a: &mut Atom, rng: &mut impl Rng, span: (f64, f64)) -> bool {
    let delta = rng.gen_range(2..=20) as f64 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let shift = |t: f64| (t + delta).clamp(span.0, span.1);
    match &mut a.time {
        Some(TimeSpec::At(TimePoint::Scene(t))) => {
            *t = shift(*t);
            true
        }
        Some(TimeSpec::Interval { start: TimePoint::Scene(s), end: TimePoint::Scene(e) }) => {
            let (ns, ne) = (shift(*s), shift(*e));
            if ns > ne || (ns, ne) == (*s, *e) {
                return false;
            }
            *s = ns;
            *e = ne;
            true
        }
        _ => false,
    }
}

/// Per-scene generation state: the KB plus lookups built once.
struct SceneGen<'a> {
    kb: &'a KnowledgeBase,
    ont: &'a Ontology,
    cfg: &'a GenConfig,
    span: (f64, f64),
    bounds: (f64, f64, f64, f64),
    persons: BTreeSet<String>,
    facts: Vec<&'a FactNode>,
}

/// Labels defined so far in a story line with their entities.
type Labels = Vec<(String, String)>;

enum DefForm {
    ViewBox,
    ScenePoint,
    SceneBox,
}

impl<'a> SceneGen<'a> {
    fn new(kb: &'a KnowledgeBase, ont: &'a Ontology, cfg: &'a GenConfig) -> Self {
        let span = kb.time_span().unwrap_or((0.0, 0.0));
        let mut bounds = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for e in kb.entity_ids() {
            for (_, p) in kb.track(e) {
                bounds = (bounds.0.min(p.x), bounds.1.min(p.y), bounds.2.max(p.x), bounds.3.max(p.y));
            }
        }
        let persons = kb.entities_of_type("person", None, None).into_iter().map(str::to_string).collect();
        let facts = kb
            .facts()
            .iter()
            .filter(|f| ont.lookup(&f.predicate).is_some_and(|d| !d.derived && d.category != Category::Object))
            .collect();
        Self { kb, ont, cfg, span, bounds, persons, facts }
    }

    fn geometry(&self) -> &DerivedPredicateConfig {
        &self.cfg.geometry
    }

    fn entity_type(&self, e: &str) -> &str {
        self.kb.entity(e).map(|x| x.object_type.as_str()).unwrap_or("entity")
    }

    /// Object predicate naming `e`: `person` when the tally wants one and
    /// `e` is a person, otherwise a weighted pick among its specific types.
    fn object_pred(&self, rng: &mut impl Rng, tally: &Tally, ty: &str) -> String {
        let mut valid: Vec<&str> = vec![ty];
        valid.extend(self.ont.ancestors(ty).into_iter().filter(|t| *t != "entity"));
        let target = self.cfg.person_share(self.ont);
        if valid.contains(&"person") && steer(rng, target, tally.person, tally.objects) {
            return "person".into();
        }
        let rest: Vec<&str> = valid.into_iter().filter(|t| *t != "person").collect();
        weighted(rng, &rest, |t| self.cfg.weight(t).max(1e-9)).copied().unwrap_or(ty).to_string()
    }

    /// Picks among candidate entities, preferring persons when the tally
    /// lags the target share.
    fn pick_entity<'e>(&self, rng: &mut impl Rng, tally: &Tally, cands: &[&'e str]) -> Option<&'e str> {
        let (p, o): (Vec<&str>, Vec<&str>) = cands.iter().partition(|e| self.persons.contains(**e));
        let want = steer(rng, self.cfg.person_share(self.ont), tally.person, tally.objects);
        let pool = match (want, p.is_empty(), o.is_empty()) {
            (true, false, _) | (false, false, true) => p,
            _ => o,
        };
        pool.choose(rng).copied()
    }

    fn scene_ref(&self) -> Reference {
        Reference::Scene { system: self.kb.meta.coordinate_system.clone() }
    }

    fn definition(&self, rng: &mut impl Rng, tally: &Tally, entity: &str, t: f64, id: String, label: &str) -> Option<Query> {
        let ty = self.object_pred(rng, tally, self.entity_type(entity));
        let mut forms = [DefForm::ViewBox, DefForm::ScenePoint, DefForm::SceneBox];
        forms.shuffle(rng);
        for form in forms {
            let located = match form {
                DefForm::ViewBox => self.view_box_at(rng, entity, t),
                DefForm::ScenePoint => self.kb.position_at(entity, t).map(|p| {
                    let p = Point::new(p.x + rng.gen_range(-0.15..0.15), p.y + rng.gen_range(-0.15..0.15));
                    (TimeSpec::scene(t), LocationSpec { shape: Shape::Point(p), reference: self.scene_ref() })
                }),
                DefForm::SceneBox => self.kb.position_at(entity, t).and_then(|p| {
                    let (hw, hh) = (rng.gen_range(0.4..0.8), rng.gen_range(0.4..0.8));
                    let b = BBox::centered(p, hw, hh).ok()?;
                    Some((TimeSpec::scene(t), LocationSpec { shape: Shape::Box(b), reference: self.scene_ref() }))
                }),
            };
            let Some((time, loc)) = located else { continue };
            let atom = Atom::new(ty.clone(), vec![Term::var("x")]).at(time).located(loc);
            let q = Query::definition(id.clone(), label, Formula::exists("x", Formula::Atom(atom)));
            if definition_candidate(self.kb, &q, self.geometry()).ok().flatten().as_deref() == Some(entity) {
                return Some(q);
            }
        }
        None
    }

    /// A slightly perturbed observed box of `entity` near time `t`.
    fn view_box_at(&self, rng: &mut impl Rng, entity: &str, t: f64) -> Option<(TimeSpec, LocationSpec)> {
        let mut cams: Vec<_> = self.kb.cameras().collect();
        cams.shuffle(rng);
        for cam in cams {
            let frame = ((t - cam.clock_offset) * cam.frame_rate).round();
            if frame < 0.0 {
                continue;
            }
            let frame = frame as u64;
            let Some(b) = self.kb.bbox_at(entity, &cam.camera_id, frame) else { continue };
            let s = rng.gen_range(0.97..1.03);
            let c = b.center();
            let c = Point::new(c.x + rng.gen_range(-0.02..0.02) * b.width(), c.y + rng.gen_range(-0.02..0.02) * b.height());
            let Ok(nb) = BBox::centered(c, b.width() / 2.0 * s, b.height() / 2.0 * s) else { continue };
            let loc = LocationSpec { shape: Shape::Box(nb), reference: Reference::View { camera: cam.camera_id.clone() } };
            return Some((TimeSpec::frame(cam.camera_id.clone(), frame), loc));
        }
        None
    }

    /// Non-derived facts intersecting `window` that involve `entity`.
    fn facts_of(&self, entity: &str, window: (f64, f64)) -> Vec<&'a FactNode> {
        self.facts
            .iter()
            .copied()
            .filter(|f| f.intersects(window.0, window.1) && f.participants.iter().any(|p| p == entity))
            .collect()
    }

    /// Weighted pick of a predicate first, then a uniform fact of it.
    fn pick_fact(&self, rng: &mut impl Rng, facts: &[&'a FactNode]) -> Option<&'a FactNode> {
        let preds: Vec<&str> = facts.iter().map(|f| f.predicate.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
        let p = *weighted(rng, &preds, |p| self.cfg.weight(p))?;
        let of: Vec<&&FactNode> = facts.iter().filter(|f| f.predicate == p).collect();
        of.choose(rng).map(|f| **f)
    }

    /// Atom restating `f`, with labelled participants as labels and the
    /// others as fresh variables. Returns the atom and `(var, entity)` pairs.
    fn fact_atom(&self, f: &FactNode, labels: &Labels, vars: &mut Vec<(String, String)>) -> Option<Atom> {
        let def = self.ont.lookup(&f.predicate)?;
        let mut parts = f.participants.iter();
        let mut args = Vec::new();
        for role in &def.arg_roles {
            if role.ty == ArgType::Literal {
                args.push(Term::text(f.value.clone()?));
                continue;
            }
            let e = parts.next()?;
            match labels.iter().find(|(_, le)| le == e) {
                Some((l, _)) => args.push(Term::label(l.as_str())),
                None => {
                    let v = ["y", "z", "w", "v"].get(vars.len())?.to_string();
                    vars.push((v.clone(), e.clone()));
                    args.push(Term::var(v));
                }
            }
        }
        Some(Atom::new(f.predicate.clone(), args))
    }

    /// Timed atom over a fact, wrapped in typed existentials for its
    /// unlabelled participants.
    fn fact_formula(
        &self,
        rng: &mut impl Rng,
        tally: &Tally,
        f: &FactNode,
        labels: &Labels,
        window: (f64, f64),
        interval_ok: bool,
    ) -> Option<Formula> {
        let mut vars = Vec::new();
        let atom = self.fact_atom(f, labels, &mut vars)?;
        let def = self.ont.lookup(&f.predicate)?;
        let (a, b) = (f.start.max(window.0), f.end.min(window.1));
        let time = if interval_ok && def.supports_interval && b - a >= 1.0 && rng.gen_bool(0.3) {
            let s = instant_in(rng, a, b - 0.5);
            let e = instant_in(rng, s + 0.5, b);
            TimeSpec::scene_interval(s, e).ok()?
        } else {
            TimeSpec::scene(instant_in(rng, a, b))
        };
        Some(self.wrap_vars(rng, tally, Formula::Atom(atom.at(time)), &vars))
    }

    fn wrap_vars(&self, rng: &mut impl Rng, tally: &Tally, body: Formula, vars: &[(String, String)]) -> Formula {
        let mut f = body;
        for (v, e) in vars.iter().rev() {
            let ty = self.object_pred(rng, tally, self.entity_type(e));
            let restrict = Formula::Atom(Atom::new(ty, vec![Term::var(v.as_str())]));
            f = Formula::exists(v.as_str(), Formula::And(vec![restrict, f]));
        }
        f
    }

    /// A polar formula about the story line's labels; not yet verified.
    fn polar_candidate(
        &self,
        rng: &mut impl Rng,
        tally: &Tally,
        ctx: &StoryContext,
        labels: &Labels,
        window: (f64, f64),
    ) -> Option<Formula> {
        let (l, e) = labels.choose(rng)?;
        match rng.gen_range(0..100) {
            0..=49 => {
                let f = self.pick_fact(rng, &self.facts_of(e, window))?;
                self.fact_formula(rng, tally, f, labels, window, true)
            }
            50..=59 => {
                let ty = self.object_pred(rng, tally, self.entity_type(e));
                Some(Formula::Atom(Atom::new(ty, vec![Term::label(l.as_str())])))
            }
            60..=72 => {
                let pred = if rng.gen_bool(0.5) { "near" } else { "clear-line-of-sight" };
                let t = TimeSpec::scene(instant_in(rng, window.0, window.1));
                let other = match labels.iter().filter(|(o, _)| o != l).collect::<Vec<_>>().choose(rng) {
                    Some((o, _)) => Term::label(o.as_str()),
                    None => {
                        let others: Vec<&str> = self.kb.entity_ids().into_iter().filter(|x| x != e).collect();
                        let o = self.pick_entity(rng, tally, &others)?;
                        let atom = Atom::new(pred, vec![Term::label(l.as_str()), Term::var("y")]).at(t);
                        let vars = [("y".to_string(), o.to_string())];
                        return Some(self.wrap_vars(rng, tally, Formula::Atom(atom), &vars));
                    }
                };
                Some(Formula::Atom(Atom::new(pred, vec![Term::label(l.as_str()), other]).at(t)))
            }
            73..=84 => {
                let facts = self.facts_of(e, window);
                let f1 = self.pick_fact(rng, &facts)?;
                let f2 = self.pick_fact(rng, &facts)?;
                let a = self.fact_formula(rng, tally, f1, labels, window, false)?;
                let b = self.fact_formula(rng, tally, f2, labels, window, false)?;
                if a == b {
                    return None;
                }
                if rng.gen_bool(0.7) {
                    Some(Formula::And(vec![a, b]))
                } else {
                    Some(Formula::Or(vec![a, Formula::not(b)]))
                }
            }
            _ => self.count_candidate(rng, tally, ctx, Some((l.as_str(), e.as_str())), window),
        }
    }

    /// `count y (T(y) and P(y[, l]) at t) op n` with a true comparison.
    fn count_candidate(
        &self,
        rng: &mut impl Rng,
        tally: &Tally,
        ctx: &StoryContext,
        label: Option<(&str, &str)>,
        window: (f64, f64),
    ) -> Option<Formula> {
        let t = instant_in(rng, window.0, window.1);
        let live: Vec<&FactNode> = self
            .facts
            .iter()
            .copied()
            .filter(|f| f.covers(t, t))
            .filter(|f| match label {
                Some((_, e)) => f.participants.len() == 2 && f.participants[1] == e,
                None => f.participants.len() == 1,
            })
            .collect();
        let f = self.pick_fact(rng, &live)?;
        let def = self.ont.lookup(&f.predicate)?;
        let ty = self.object_pred(rng, tally, self.entity_type(&f.participants[0]));
        let mut args = vec![Term::var("y")];
        for role in def.arg_roles.iter().skip(1) {
            args.push(match (&role.ty, label) {
                (ArgType::Literal, _) => Term::text(f.value.clone()?),
                (_, Some((l, _))) => Term::label(l),
                (_, None) => return None,
            });
        }
        let body = Formula::And(vec![
            Formula::Atom(Atom::new(ty, vec![Term::var("y")])),
            Formula::Atom(Atom::new(f.predicate.clone(), args).at(TimeSpec::scene(t))),
        ]);
        let c = count_value(self.kb, ctx, "y", &body, self.geometry()).ok()?;
        let (op, rhs) = match rng.gen_range(0..4) {
            0 => (CmpOp::Eq, c),
            1 => (CmpOp::Ge, rng.gen_range(0..=c)),
            2 => (CmpOp::Le, c + rng.gen_range(0..2)),
            _ => (CmpOp::Lt, c + 1),
        };
        Some(Formula::count("y", body, op, rhs))
    }

    fn scene_polar_candidate(&self, rng: &mut impl Rng, tally: &Tally, window: (f64, f64)) -> Option<Formula> {
        if rng.gen_bool(0.3) {
            return self.count_candidate(rng, tally, &StoryContext::new(), None, window);
        }
        let live: Vec<&FactNode> = self.facts.iter().copied().filter(|f| f.intersects(window.0, window.1)).collect();
        let f = self.pick_fact(rng, &live)?;
        self.fact_formula(rng, tally, f, &Vec::new(), window, true)
    }

    fn nonpolar_candidate(&self, rng: &mut impl Rng, tally: &Tally, labels: &Labels, window: (f64, f64)) -> Option<Query> {
        let (l, e) = labels.choose(rng)?;
        let facts = self.facts_of(e, window);
        let f = self.pick_fact(rng, &facts)?;
        match rng.gen_range(0..3) {
            0 => self.what_candidate(rng, f, labels, window).or_else(|| self.scene_what_candidate(rng, window)),
            1 => {
                let mut vars = Vec::new();
                let atom = self.fact_atom(f, labels, &mut vars)?;
                let body = self.wrap_vars(rng, tally, Formula::Atom(atom), &vars);
                Some(Query::nonpolar("", QueryKind::When, Term::label(l.as_str()), body))
            }
            _ => {
                let def = self.ont.lookup(&f.predicate)?;
                let (a, b) = (f.start.max(window.0), f.end.min(window.1));
                if !def.supports_interval || b - a < 1.0 {
                    return None;
                }
                let s = instant_in(rng, a, b - 1.0);
                let e2 = instant_in(rng, s + 1.0, b);
                let mut vars = Vec::new();
                let atom = self.fact_atom(f, labels, &mut vars)?.at(TimeSpec::scene_interval(s, e2).ok()?);
                let body = self.wrap_vars(rng, tally, Formula::Atom(atom), &vars);
                Some(Query::nonpolar("", QueryKind::Where, Term::label(l.as_str()), body))
            }
        }
    }

    /// `what y: P(..., y, ...) at t` over a fact with an unlabelled participant.
    fn what_candidate(&self, rng: &mut impl Rng, f: &FactNode, labels: &Labels, window: (f64, f64)) -> Option<Query> {
        let mut vars = Vec::new();
        let atom = self.fact_atom(f, labels, &mut vars)?;
        if vars.len() != 1 || labels.is_empty() && f.participants.len() < 2 {
            return None;
        }
        let t = instant_in(rng, f.start.max(window.0), f.end.min(window.1));
        let v = vars[0].0.clone();
        let body = Formula::exists(v.as_str(), Formula::Atom(atom.at(TimeSpec::scene(t))));
        Some(Query::nonpolar("", QueryKind::What, Term::var(v), body))
    }

    fn scene_what_candidate(&self, rng: &mut impl Rng, window: (f64, f64)) -> Option<Query> {
        let live: Vec<&FactNode> =
            self.facts.iter().copied().filter(|f| f.intersects(window.0, window.1) && f.participants.len() == 2).collect();
        let f = self.pick_fact(rng, &live)?;
        let (mut vars, labels) = (Vec::new(), Vec::new());
        let atom = self.fact_atom(f, &labels, &mut vars)?;
        let t = instant_in(rng, f.start.max(window.0), f.end.min(window.1));
        let (target, other) = if rng.gen_bool(0.5) { (&vars[0].0, &vars[1].0) } else { (&vars[1].0, &vars[0].0) };
        let inner = Formula::exists(other.as_str(), Formula::Atom(atom.at(TimeSpec::scene(t))));
        Some(Query::nonpolar("", QueryKind::What, Term::var(target.as_str()), Formula::exists(target.as_str(), inner)))
    }

    fn random_window(&self, rng: &mut impl Rng) -> (f64, f64) {
        let (lo, hi) = self.span;
        let len = 20.0f64.min(hi - lo);
        let t0 = round_half(rng.gen_range(lo..=(hi - len).max(lo)));
        (t0, (t0 + len).min(hi))
    }

    /// Verifies a candidate and returns its ground truth when acceptable.
    fn verify(&self, ctx: &mut StoryContext, q: &Query, want_false: Option<bool>) -> Option<Answer> {
        let labels: std::collections::HashSet<String> = ctx.bindings().keys().cloned().collect();
        if well_formed(q, self.ont, &labels).is_err() {
            return None;
        }
        let EvalOutcome::Value(truth) = answer_query(self.kb, ctx, q, self.geometry()) else { return None };
        match want_false {
            Some(w) if truth != Answer::Bool(!w) => None,
            _ => Some(truth),
        }
    }

    /// Fills a story line with follow-up queries until it holds `target`
    /// items; the flag reports whether it got there within budget.
    #[allow(clippy::too_many_arguments)]
    fn fill(
        &self,
        rng: &mut ChaCha8Rng,
        tally: &mut Tally,
        prefix: &str,
        items: &mut Vec<SuiteItem>,
        ctx: &mut StoryContext,
        labels: &mut Labels,
        window: (f64, f64),
        target: usize,
    ) -> bool {
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut attempts = 0;
        let budget = self.cfg.retry_budget * target;
        while items.len() < target {
            attempts += 1;
            if attempts > budget {
                return false;
            }
            let id = format!("{prefix}-{:02}", items.len() + 1);
            if !labels.is_empty() && labels.len() < 4 && rng.gen_bool(0.06) {
                if let Some(q) = self.late_definition(rng, tally, labels, window, id.clone()) {
                    let label = q.defines_label.clone().unwrap_or_default();
                    if let Some(truth) = self.verify(ctx, &q, Some(false)) {
                        if let Some(e) = ctx.entity_for(&label) {
                            labels.push((label, e.to_string()));
                        }
                        tally.record(&q, &truth, self.ont);
                        items.push(SuiteItem { query: q, ground_truth: truth });
                    }
                }
                continue;
            }
            let scene_only = labels.is_empty();
            let kind_roll = rng.gen_range(0..100);
            let mut q = if kind_roll < 72 {
                let want_false = steer(rng, self.cfg.negative_fraction, tally.polar_false, tally.polar);
                let body = if scene_only {
                    self.scene_polar_candidate(rng, tally, window)
                } else {
                    self.polar_candidate(rng, tally, ctx, labels, window)
                };
                let Some(body) = body else { continue };
                let mut q = Query::polar(id.clone(), body);
                match evaluate_polar(self.kb, ctx, &q.body, self.geometry()) {
                    EvalOutcome::Value(Answer::Bool(true)) if want_false => {
                        let item = SuiteItem { query: q.clone(), ground_truth: Answer::Bool(true) };
                        match sample_negative(self.kb, self.ont, rng, ctx, &item, self.geometry(), 20) {
                            Ok(neg) => q = neg,
                            Err(_) => continue,
                        }
                    }
                    EvalOutcome::Value(Answer::Bool(b)) if b == want_false => continue,
                    EvalOutcome::Value(_) => {}
                    EvalOutcome::Unable(_) => continue,
                }
                match self.verify(ctx, &q, Some(want_false)) {
                    Some(truth) => (q, truth),
                    None => continue,
                }
            } else {
                let cand = if scene_only {
                    self.scene_what_candidate(rng, window)
                } else {
                    self.nonpolar_candidate(rng, tally, labels, window)
                };
                let Some(mut q) = cand else { continue };
                q.id = id.clone();
                match self.verify(ctx, &q, None) {
                    Some(truth) => (q, truth),
                    None => continue,
                }
            };
            q.0.id = id;
            if !seen.insert(format!("{:?}{}", q.0.kind, serialize_query_xml(&Query { id: String::new(), ..q.0.clone() }))) {
                continue;
            }
            tally.record(&q.0, &q.1, self.ont);
            items.push(SuiteItem { query: q.0, ground_truth: q.1 });
        }
        true
    }

    /// Defines an entity sharing a fact with a labelled one in the window.
    fn late_definition(&self, rng: &mut impl Rng, tally: &Tally, labels: &Labels, window: (f64, f64), id: String) -> Option<Query> {
        let (_, e) = labels.choose(rng)?;
        let bound: BTreeSet<&str> = labels.iter().map(|(_, x)| x.as_str()).collect();
        let facts: Vec<&FactNode> = self
            .facts_of(e, window)
            .into_iter()
            .filter(|f| f.participants.iter().any(|p| !bound.contains(p.as_str())))
            .collect();
        let f = facts.choose(rng)?;
        let other = f.participants.iter().find(|p| !bound.contains(p.as_str()))?;
        let t = instant_in(rng, f.start.max(window.0), f.end.min(window.1));
        let label = format!("o{}", labels.len() + 1);
        self.definition(rng, tally, other, t, id, &label)
    }

    fn positive_storyline(&self, rng: &mut ChaCha8Rng, tally: &mut Tally, prefix: &str) -> Option<(Vec<SuiteItem>, bool)> {
        for _ in 0..20 {
            let window = self.random_window(rng);
            let t0 = window.0;
            let present: Vec<&str> = self
                .kb
                .entity_ids()
                .into_iter()
                .filter(|e| self.kb.position_at(e, t0).is_some() && !self.facts_of(e, window).is_empty())
                .collect();
            if present.is_empty() {
                continue;
            }
            let ndefs = *[1usize, 2, 2, 3].choose(rng).unwrap();
            let mut ctx = StoryContext::new();
            let mut items = Vec::new();
            let mut labels: Labels = Vec::new();
            let mut pool = present.clone();
            while labels.len() < ndefs && !pool.is_empty() {
                let e = self.pick_entity(rng, tally, &pool)?;
                pool.retain(|x| *x != e);
                let label = if self.persons.contains(e) { format!("p{}", labels.len() + 1) } else { format!("o{}", labels.len() + 1) };
                let id = format!("{prefix}-{:02}", items.len() + 1);
                let Some(q) = self.definition(rng, tally, e, t0, id, &label) else { continue };
                let Some(truth) = self.verify(&mut ctx, &q, Some(false)) else { continue };
                tally.record(&q, &truth, self.ont);
                items.push(SuiteItem { query: q, ground_truth: truth });
                labels.push((label, e.to_string()));
            }
            if labels.is_empty() {
                continue;
            }
            let (lo, hi) = self.cfg.queries_per_storyline;
            let target = rng.gen_range(lo..=hi).max(items.len() + 1);
            let complete = self.fill(rng, tally, prefix, &mut items, &mut ctx, &mut labels, window, target);
            return Some((items, complete));
        }
        None
    }

    /// A story line led by a definition that resolves to nothing, followed
    /// by queries about the scene at large.
    fn false_definition_storyline(&self, rng: &mut ChaCha8Rng, tally: &mut Tally, prefix: &str) -> Option<(Vec<SuiteItem>, bool)> {
        for _ in 0..20 {
            let window = self.random_window(rng);
            let t0 = window.0;
            let id = format!("{prefix}-01");
            let q = if rng.gen_bool(0.5) { self.empty_region_definition(rng, tally, t0, id) } else { self.wrong_type_definition(rng, tally, t0, id) };
            let Some(q) = q else { continue };
            let mut ctx = StoryContext::new();
            if definition_candidate(self.kb, &q, self.geometry()) != Ok(None) {
                continue;
            }
            let EvalOutcome::Value(truth) = answer_query(self.kb, &mut ctx, &q, self.geometry()) else { continue };
            tally.record(&q, &truth, self.ont);
            let mut items = vec![SuiteItem { query: q, ground_truth: truth }];
            let (lo, hi) = self.cfg.queries_per_storyline;
            let target = rng.gen_range(lo..=hi);
            let mut labels = Vec::new();
            let complete = self.fill(rng, tally, prefix, &mut items, &mut ctx, &mut labels, window, target);
            return Some((items, complete));
        }
        None
    }

    fn empty_region_definition(&self, rng: &mut impl Rng, tally: &Tally, t: f64, id: String) -> Option<Query> {
        let (x0, y0, x1, y1) = self.bounds;
        if !(x0 < x1 && y0 < y1) {
            return None;
        }
        let clearance = self.geometry().near_threshold + 0.5;
        for _ in 0..50 {
            let p = Point::new(rng.gen_range(x0..x1), rng.gen_range(y0..y1));
            let empty = self
                .kb
                .entity_ids()
                .into_iter()
                .all(|e| self.kb.position_at(e, t).is_none_or(|q| q.distance(&p) > clearance));
            if !empty {
                continue;
            }
            let cands: Vec<&str> = self.kb.entity_ids();
            let ty = match self.pick_entity(rng, tally, &cands) {
                Some(e) => self.object_pred(rng, tally, self.entity_type(e)),
                None => "person".to_string(),
            };
            let loc = LocationSpec { shape: Shape::Point(p), reference: self.scene_ref() };
            let atom = Atom::new(ty, vec![Term::var("x")]).at(TimeSpec::scene(t)).located(loc);
            return Some(Query::definition(id, "g1", Formula::exists("x", Formula::Atom(atom))));
        }
        None
    }

    fn wrong_type_definition(&self, rng: &mut impl Rng, tally: &Tally, t: f64, id: String) -> Option<Query> {
        let ids = self.kb.entity_ids();
        let e = self.pick_entity(rng, tally, &ids)?;
        let (time, loc) = self.view_box_at(rng, e, t)?;
        let ety = self.entity_type(e);
        let mut wrong: Vec<&str> = self
            .ont
            .by_category(Category::Object)
            .map(|d| d.name.as_str())
            .filter(|w| !self.ont.subtype_of(ety, w) && !self.ont.subtype_of(w, ety))
            .collect();
        let person_wanted = steer(rng, self.cfg.person_share(self.ont), tally.person, tally.objects);
        if person_wanted && wrong.contains(&"person") {
            wrong = vec!["person"];
        }
        let ty = weighted(rng, &wrong, |w| self.cfg.weight(w).max(1e-9))?;
        let atom = Atom::new(*ty, vec![Term::var("x")]).at(time).located(loc);
        Some(Query::definition(id, "g1", Formula::exists("x", Formula::Atom(atom))))
    }
}
