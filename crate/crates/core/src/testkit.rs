//! Fixtures and independent reference evaluators for tests.
//!
//! The brute-force evaluator here shares no code with the engine: it scans
//! the raw fact list, walks the type hierarchy itself, interpolates tracks
//! itself and enumerates every completion of unknown values for counting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::engine::answer_query;
use crate::eval::{EvaluationSuite, SceneSuite, Storyline, SuiteItem};
use crate::kb::{AnnotationSet, KnowledgeBase};
use crate::query::{Atom, CmpOp, Formula, Literal, LocationSpec, Reference, Shape, Term, TimePoint, TimeSpec};
use crate::{BBox, DerivedPredicateConfig, Ontology, Point, Query, QueryKind, StoryContext, Truth};

/// Garden scene: two walking people, a ball and a wall.
///
/// * `P1` (male) at `(0.5 t, 0)`, `P2` (female) at `(0.5 t, 10)`, ball `B1`
///   at `(0.5 t + 1, 10)`, sampled every 0.5 s over `[0, 60]`.
/// * Static wall `W1` with footprint `[20, 22] x [3, 7]`, so the P1-P2
///   sight line is blocked for `t` in `[40, 44]`.
/// * `cam-a`: scale 0.1, 10 fps, offset 0. `cam-b`: scale 0.1 with a
///   -5 shift, 5 fps, offset 2.
pub fn garden_annotations() -> AnnotationSet {
    let mut docs = AnnotationSet::new();
    docs.insert("scene.meta", "scene_id=garden\nepoch=2015-06-01T10:00:00\ncoordinate_system=ground\n");
    docs.insert(
        "cameras.tsv",
        "cam-a\t10\t0\t0.1,0,0,0,0.1,0,0,0,1\t-5,-5;40,-5;40,15;-5,15\n\
         cam-b\t5\t2\t0.1,0,-5,0,0.1,0,0,0,1\t20,-5;65,-5;65,15;20,15\n",
    );
    docs.insert(
        "entities.tsv",
        "P1\tmale\t0\t-\nP2\tfemale\t0\t-\nB1\tball\t0\t-\nW1\twall\t1\t20,3;22,3;22,7;20,7\n",
    );
    docs.insert(
        "observations.tsv",
        "P1\tcam-a\t10\t0\t0\t10\t10\n\
         P1\tcam-a\t12\t10\t0\t20\t10\n\
         P1\tcam-a\t120\t0\t0\t10\t10\n\
         P2\tcam-a\t120\t10\t0\t20\t10\n\
         B1\tcam-a\t120\t65\t95\t75\t105\n\
         P2\tcam-b\t50\t105\t95\t115\t105\n",
    );
    let mut tracks = String::new();
    for i in 0..=120 {
        let t = i as f64 * 0.5;
        let _ = writeln!(tracks, "P1\t{t}\t{}\t0", 0.5 * t);
        let _ = writeln!(tracks, "P2\t{t}\t{}\t10", 0.5 * t);
        let _ = writeln!(tracks, "B1\t{t}\t{}\t10", 0.5 * t + 1.0);
    }
    docs.insert("tracks.tsv", tracks);
    docs.insert(
        "facts.tsv",
        "f-catch\tcatching\tP2|B1\t-\t12\t12\n\
         f-throw\tthrowing\tP1|B1\t-\t10\t10\n\
         f-game\tgame\tP1|P2\t-\t5\t40\n\
         f-color\tclothing-color\tP1\tred\t0\t60\n\
         f-walk1\twalking\tP1\t-\t0\t60\n\
         f-walk2\twalking\tP2\t-\t0\t60\n\
         f-carry\tcarrying\tP2|B1\t-\t12\t20\n",
    );
    docs
}

pub fn garden() -> KnowledgeBase {
    KnowledgeBase::ingest(&garden_annotations(), Arc::new(Ontology::builtin())).expect("garden fixture ingests")
}

/// A fact row for [`tiny_scene`]: predicate, `|`-joined participants,
/// optional value, start, end.
pub type TinyFact<'a> = (&'a str, &'a str, Option<&'a str>, f64, f64);

/// Annotations for entities standing still at the given positions over
/// `t` in `[0, 10]` (sampled every second), plus the given facts.
pub fn tiny_annotations(entities: &[(&str, &str, (f64, f64))], facts: &[TinyFact<'_>]) -> AnnotationSet {
    let mut docs = AnnotationSet::new();
    docs.insert("scene.meta", "scene_id=tiny\n");
    docs.insert("cameras.tsv", "cam\t10\t0\t1,0,0,0,1,0,0,0,1\t-100,-100;100,-100;100,100;-100,100\n");
    let mut ents = String::new();
    let mut tracks = String::new();
    for (id, ty, (x, y)) in entities {
        let _ = writeln!(ents, "{id}\t{ty}\t0\t-");
        for t in 0..=10 {
            let _ = writeln!(tracks, "{id}\t{t}\t{x}\t{y}");
        }
    }
    docs.insert("entities.tsv", ents);
    docs.insert("tracks.tsv", tracks);
    let mut rows = String::new();
    for (i, (p, parts, v, s, e)) in facts.iter().enumerate() {
        let _ = writeln!(rows, "f{i}\t{p}\t{parts}\t{}\t{s}\t{e}", v.unwrap_or("-"));
    }
    docs.insert("facts.tsv", rows);
    docs
}

pub fn tiny_scene(entities: &[(&str, &str, (f64, f64))], facts: &[TinyFact<'_>]) -> KnowledgeBase {
    KnowledgeBase::ingest(&tiny_annotations(entities, facts), Arc::new(Ontology::builtin())).expect("tiny scene ingests")
}

const RANDOM_TYPES: [&str; 6] = ["male", "female", "car", "ball", "chair", "backpack"];
const COLORS: [&str; 2] = ["red", "blue"];

/// Random KB with at most `max_entities` entities, small integer
/// validity intervals in `[0, 10]`, and tracks for most entities.
///
/// Entities without a track make `near` unknown.
pub fn random_annotations<R: Rng>(rng: &mut R, max_entities: usize) -> AnnotationSet {
    let n = rng.gen_range(1..=max_entities.max(1));
    let mut ents: Vec<(String, &str)> = Vec::new();
    for i in 0..n {
        ents.push((format!("E{i}"), RANDOM_TYPES[rng.gen_range(0..RANDOM_TYPES.len())]));
    }
    let is_person = |t: &str| t == "male" || t == "female";
    let persons: Vec<&str> = ents.iter().filter(|(_, t)| is_person(t)).map(|(id, _)| id.as_str()).collect();
    let vehicles: Vec<&str> = ents.iter().filter(|(_, t)| *t == "car").map(|(id, _)| id.as_str()).collect();
    let all: Vec<&str> = ents.iter().map(|(id, _)| id.as_str()).collect();

    let mut docs = AnnotationSet::new();
    docs.insert("scene.meta", "scene_id=random\n");
    let mut e_rows = String::new();
    let mut t_rows = String::new();
    for (id, ty) in &ents {
        let _ = writeln!(e_rows, "{id}\t{ty}\t0\t-");
        if rng.gen_bool(0.8) {
            let (mut x, mut y) = (rng.gen_range(0..6) as f64, rng.gen_range(0..6) as f64);
            for t in 0..=10 {
                let _ = writeln!(t_rows, "{id}\t{t}\t{x}\t{y}");
                x += rng.gen_range(-1..=1) as f64;
                y += rng.gen_range(-1..=1) as f64;
            }
        }
    }
    docs.insert("entities.tsv", e_rows);
    docs.insert("tracks.tsv", t_rows);

    let mut f_rows = String::new();
    let n_facts = rng.gen_range(0..=3 * n);
    for i in 0..n_facts {
        let s = rng.gen_range(0..=10);
        let e = rng.gen_range(s..=10);
        let row = match rng.gen_range(0..6) {
            0 | 1 if !persons.is_empty() => {
                let p = ["walking", "running"][rng.gen_range(0..2)];
                Some((p, persons.choose(rng).unwrap().to_string(), None))
            }
            2 if !persons.is_empty() => {
                let p = ["carrying", "catching"][rng.gen_range(0..2)];
                Some((p, format!("{}|{}", persons.choose(rng).unwrap(), all.choose(rng).unwrap()), None))
            }
            3 if !persons.is_empty() => {
                Some(("game", format!("{}|{}", persons.choose(rng).unwrap(), persons.choose(rng).unwrap()), None))
            }
            4 if !persons.is_empty() => {
                Some(("clothing-color", persons.choose(rng).unwrap().to_string(), Some(*COLORS.choose(rng).unwrap())))
            }
            5 if !persons.is_empty() && !vehicles.is_empty() => Some((
                "entering",
                format!("{}|{}", persons.choose(rng).unwrap(), vehicles.choose(rng).unwrap()),
                None,
            )),
            _ => None,
        };
        if let Some((p, parts, v)) = row {
            let _ = writeln!(f_rows, "r{i}\t{p}\t{parts}\t{}\t{s}\t{e}", v.unwrap_or("-"));
        }
    }
    docs.insert("facts.tsv", f_rows);
    docs
}

/// Context binding labels `L0..` to the first entities of a KB.
pub fn random_context(kb: &KnowledgeBase, labels: usize) -> StoryContext {
    let mut ctx = StoryContext::new();
    for (i, e) in kb.entity_ids().into_iter().take(labels).enumerate() {
        ctx.bind(&format!("L{i}"), e);
    }
    ctx
}

const UNARY: [&str; 8] = ["person", "male", "vehicle", "ball", "entity", "walking", "running", "chair"];
const BINARY: [&str; 6] = ["carrying", "catching", "game", "entering", "near", "near"];

fn random_time<R: Rng>(rng: &mut R) -> Option<TimeSpec> {
    match rng.gen_range(0..4) {
        0 => None,
        1 => Some(TimeSpec::scene(rng.gen_range(0..=12) as f64 - 1.0)),
        2 => Some(TimeSpec::scene(rng.gen_range(0..=20) as f64 * 0.5)),
        _ => {
            let s = rng.gen_range(0..=10) as f64;
            let e = s + rng.gen_range(0..=3) as f64;
            Some(TimeSpec::scene_interval(s, e).unwrap())
        }
    }
}

fn random_term<R: Rng>(rng: &mut R, scope: &[String], labels: usize) -> Term {
    if !scope.is_empty() && (labels == 0 || rng.gen_bool(0.75)) {
        Term::var(scope.choose(rng).unwrap().clone())
    } else {
        Term::label(format!("L{}", rng.gen_range(0..labels.max(1))))
    }
}

fn random_atom<R: Rng>(rng: &mut R, scope: &[String], labels: usize) -> Formula {
    let pick = rng.gen_range(0..10);
    let a = if pick < 5 {
        let p = UNARY[rng.gen_range(0..UNARY.len())];
        let mut a = Atom::new(p, vec![random_term(rng, scope, labels)]);
        if !matches!(p, "person" | "male" | "vehicle" | "ball" | "entity" | "chair") {
            a.time = random_time(rng);
        }
        a
    } else if pick < 9 {
        let p = BINARY[rng.gen_range(0..BINARY.len())];
        let mut a = Atom::new(p, vec![random_term(rng, scope, labels), random_term(rng, scope, labels)]);
        a.time = if p == "near" {
            Some(TimeSpec::scene(rng.gen_range(0..=24) as f64 * 0.5 - 1.0))
        } else {
            random_time(rng)
        };
        a
    } else {
        let mut a = Atom::new(
            "clothing-color",
            vec![random_term(rng, scope, labels), Term::Literal(Literal::Text(COLORS.choose(rng).unwrap().to_string()))],
        );
        a.time = random_time(rng);
        a
    };
    Formula::Atom(a)
}

/// Random closed formula of depth at most `max_depth` whose labels are
/// among `L0..L{labels-1}`. Atoms need a label or variable, so with no
/// labels the root is always a quantifier.
pub fn random_formula<R: Rng>(rng: &mut R, max_depth: usize, labels: usize) -> Formula {
    gen_formula(rng, max_depth.max(2), &mut Vec::new(), labels, 0)
}

fn gen_formula<R: Rng>(rng: &mut R, depth: usize, scope: &mut Vec<String>, labels: usize, fresh: usize) -> Formula {
    let can_atom = !scope.is_empty() || labels > 0;
    if (depth <= 1 || (can_atom && rng.gen_bool(0.3))) && can_atom {
        return random_atom(rng, scope, labels);
    }
    let quantify = |rng: &mut R, scope: &mut Vec<String>, kind: usize| {
        let v = format!("v{fresh}");
        scope.push(v.clone());
        let body = gen_formula(rng, depth - 1, scope, labels, fresh + 1);
        scope.pop();
        match kind {
            0 => Formula::exists(v, body),
            1 => Formula::forall(v, body),
            _ => {
                let op = [CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ge, CmpOp::Gt][rng.gen_range(0..5)];
                Formula::count(v, body, op, rng.gen_range(0..=4))
            }
        }
    };
    if !can_atom {
        let k = rng.gen_range(0..3);
        return quantify(rng, scope, k);
    }
    match rng.gen_range(0..6) {
        0 => Formula::not(gen_formula(rng, depth - 1, scope, labels, fresh)),
        1 | 2 => {
            let n = rng.gen_range(2..=3);
            let cs = (0..n).map(|_| gen_formula(rng, depth - 1, scope, labels, fresh)).collect();
            if rng.gen_bool(0.5) {
                Formula::And(cs)
            } else {
                Formula::Or(cs)
            }
        }
        k => quantify(rng, scope, k - 3),
    }
}

/// Reference evaluator working from raw KB tables.
pub struct BruteForce<'a> {
    kb: &'a KnowledgeBase,
    ctx: &'a StoryContext,
    near_threshold: f64,
}

fn t_not(a: Truth) -> Truth {
    match a {
        Truth::True => Truth::False,
        Truth::False => Truth::True,
        Truth::Unknown => Truth::Unknown,
    }
}

fn t_and(a: Truth, b: Truth) -> Truth {
    match (a, b) {
        (Truth::False, _) | (_, Truth::False) => Truth::False,
        (Truth::Unknown, _) | (_, Truth::Unknown) => Truth::Unknown,
        _ => Truth::True,
    }
}

fn t_or(a: Truth, b: Truth) -> Truth {
    match (a, b) {
        (Truth::True, _) | (_, Truth::True) => Truth::True,
        (Truth::Unknown, _) | (_, Truth::Unknown) => Truth::Unknown,
        _ => Truth::False,
    }
}

impl<'a> BruteForce<'a> {
    pub fn new(kb: &'a KnowledgeBase, ctx: &'a StoryContext, near_threshold: f64) -> Self {
        Self { kb, ctx, near_threshold }
    }

    fn is_a(&self, ty: &str, want: &str) -> bool {
        let mut frontier = vec![ty.to_string()];
        let mut seen = Vec::new();
        while let Some(t) = frontier.pop() {
            if t == want {
                return true;
            }
            if seen.contains(&t) {
                continue;
            }
            frontier.extend(self.kb.ontology().parents_of(&t).map(str::to_string));
            seen.push(t);
        }
        false
    }

    fn position(&self, e: &str, t: f64) -> Option<(f64, f64)> {
        let tr = self.kb.track(e);
        for w in tr.windows(2) {
            let ((t0, p0), (t1, p1)) = (w[0], w[1]);
            if t == t0 {
                return Some((p0.x, p0.y));
            }
            if t > t0 && t < t1 && t1 - t0 <= 1.0 {
                let s = (t - t0) / (t1 - t0);
                return Some((p0.x + (p1.x - p0.x) * s, p0.y + (p1.y - p0.y) * s));
            }
        }
        tr.last().filter(|(tl, _)| *tl == t).map(|(_, p)| (p.x, p.y))
    }

    fn window(t: &TimeSpec) -> (f64, f64) {
        let pt = |p: &TimePoint| match p {
            TimePoint::Scene(s) => *s,
            TimePoint::Frame { .. } => panic!("random formulas use scene time"),
        };
        match t {
            TimeSpec::At(p) => (pt(p), pt(p)),
            TimeSpec::Interval { start, end } => (pt(start), pt(end)),
        }
    }

    fn atom(&self, a: &Atom, env: &BTreeMap<String, String>) -> Truth {
        let mut ents = Vec::new();
        let mut value = None;
        for t in &a.args {
            match t {
                Term::Var(v) => ents.push(env[v].clone()),
                Term::Label(l) => ents.push(self.ctx.entity_for(l).expect("label bound").to_string()),
                Term::Literal(Literal::Text(s)) => value = Some(s.clone()),
                Term::Literal(Literal::Number(n)) => value = Some(n.to_string()),
            }
        }
        if self.kb.ontology().is_object_type(&a.pred) {
            let ty = &self.kb.entities().find(|e| e.entity_id == ents[0]).unwrap().object_type;
            return if self.is_a(ty, &a.pred) { Truth::True } else { Truth::False };
        }
        if a.pred == "near" {
            let (t, _) = Self::window(a.time.as_ref().unwrap());
            return match (self.position(&ents[0], t), self.position(&ents[1], t)) {
                (Some(p), Some(q)) => {
                    let d = ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
                    if d <= self.near_threshold {
                        Truth::True
                    } else {
                        Truth::False
                    }
                }
                _ => Truth::Unknown,
            };
        }
        let hit = self.kb.facts().iter().any(|f| {
            f.predicate == a.pred
                && f.participants == ents
                && f.value == value
                && a.time.as_ref().is_none_or(|t| {
                    let (s, e) = Self::window(t);
                    f.start <= s && e <= f.end
                })
        });
        if hit {
            Truth::True
        } else {
            Truth::False
        }
    }

    pub fn eval(&self, f: &Formula) -> Truth {
        self.eval_in(f, &mut BTreeMap::new())
    }

    fn eval_in(&self, f: &Formula, env: &mut BTreeMap<String, String>) -> Truth {
        let domain: Vec<String> = self.kb.entities().map(|e| e.entity_id.clone()).collect();
        match f {
            Formula::Atom(a) => self.atom(a, env),
            Formula::Not(c) => t_not(self.eval_in(c, env)),
            Formula::And(cs) => cs.iter().fold(Truth::True, |acc, c| t_and(acc, self.eval_in(c, env))),
            Formula::Or(cs) => cs.iter().fold(Truth::False, |acc, c| t_or(acc, self.eval_in(c, env))),
            Formula::Exists { var, body } | Formula::ForAll { var, body } => {
                let exists = matches!(f, Formula::Exists { .. });
                let mut acc = if exists { Truth::False } else { Truth::True };
                for e in &domain {
                    let prev = env.insert(var.clone(), e.clone());
                    let v = self.eval_in(body, env);
                    restore(env, var, prev);
                    acc = if exists { t_or(acc, v) } else { t_and(acc, v) };
                }
                acc
            }
            Formula::Count { var, body, op, rhs } => {
                let mut values = Vec::new();
                for e in &domain {
                    let prev = env.insert(var.clone(), e.clone());
                    values.push(self.eval_in(body, env));
                    restore(env, var, prev);
                }
                let unknown: Vec<usize> =
                    values.iter().enumerate().filter(|(_, v)| **v == Truth::Unknown).map(|(i, _)| i).collect();
                let sure = values.iter().filter(|v| **v == Truth::True).count();
                let mut saw_true = false;
                let mut saw_false = false;
                for mask in 0u32..(1u32 << unknown.len()) {
                    let n = sure + mask.count_ones() as usize;
                    if op.holds(n as u64, *rhs) {
                        saw_true = true;
                    } else {
                        saw_false = true;
                    }
                }
                match (saw_true, saw_false) {
                    (true, false) => Truth::True,
                    (false, true) => Truth::False,
                    _ => Truth::Unknown,
                }
            }
        }
    }
}

fn restore(env: &mut BTreeMap<String, String>, var: &str, prev: Option<String>) {
    match prev {
        Some(p) => env.insert(var.to_string(), p),
        None => env.remove(var),
    };
}

fn scene_point_definition(id: &str, label: &str, ty: &str, t: f64, x: f64, y: f64) -> Query {
    let loc = LocationSpec { shape: Shape::Point(Point::new(x, y)), reference: Reference::Scene { system: "ground".into() } };
    let atom = Atom::new(ty, vec![Term::var("x")]).at(TimeSpec::scene(t)).located(loc);
    Query::definition(id, label, Formula::exists("x", Formula::Atom(atom)))
}

fn view_box_definition(id: &str, label: &str, frame: u64) -> Query {
    let b = BBox::new(20.0 / 11.0, 0.0, 150.0 / 11.0, 10.0).expect("ordered box");
    let loc = LocationSpec { shape: Shape::Box(b), reference: Reference::View { camera: "cam-a".into() } };
    let atom = Atom::new("person", vec![Term::var("x")]).at(TimeSpec::frame("cam-a", frame)).located(loc);
    Query::definition(id, label, Formula::exists("x", Formula::Atom(atom)))
}

fn at(pred: &str, args: Vec<Term>, t: f64) -> Formula {
    Formula::Atom(Atom::new(pred, args).at(TimeSpec::scene(t)))
}

/// Three hand-written story lines over [`garden`] with engine-computed
/// ground truths.
///
/// * `storyline_001`: defines `p` (P1) and `b` (B1), then polar, when and
///   where queries about them.
/// * `storyline_002`: defines `g` over an empty spot (false), then one
///   query about `g` (skipped) and one about the scene at large.
/// * `storyline_003`: defines `w` (P2) and `b2` (B1), then polar and what.
pub fn garden_suite() -> EvaluationSuite {
    let kb = garden();
    let cfg = DerivedPredicateConfig::default();
    let l = Term::label;
    let script: Vec<Vec<Query>> = vec![
        vec![
            view_box_definition("g-1-1", "p", 120),
            scene_point_definition("g-1-2", "b", "ball", 12.0, 7.0, 10.0),
            Query::polar("g-1-3", at("walking", vec![l("p")], 12.0)),
            Query::polar("g-1-4", at("throwing", vec![l("p"), l("b")], 10.0)),
            Query::polar("g-1-5", at("catching", vec![l("p"), l("b")], 12.0)),
            Query::nonpolar("g-1-6", QueryKind::When, l("p"), Formula::Atom(Atom::new("throwing", vec![l("p"), l("b")]))),
            Query::nonpolar(
                "g-1-7",
                QueryKind::Where,
                l("p"),
                Formula::Atom(Atom::new("walking", vec![l("p")]).at(TimeSpec::scene_interval(10.0, 12.0).unwrap())),
            ),
        ],
        vec![
            scene_point_definition("g-2-1", "g", "person", 5.0, 30.0, 30.0),
            Query::polar("g-2-2", at("walking", vec![l("g")], 5.0)),
            Query::polar("g-2-3", Formula::exists("x", Formula::Atom(Atom::new("male", vec![Term::var("x")])))),
        ],
        vec![
            scene_point_definition("g-3-1", "w", "person", 12.0, 6.0, 10.0),
            scene_point_definition("g-3-2", "b2", "ball", 12.0, 7.0, 10.0),
            Query::polar("g-3-3", at("catching", vec![l("w"), l("b2")], 12.0)),
            Query::nonpolar(
                "g-3-4",
                QueryKind::What,
                Term::var("y"),
                Formula::exists("y", at("carrying", vec![l("w"), Term::var("y")], 15.0)),
            ),
        ],
    ];
    let mut storylines = Vec::new();
    for (i, queries) in script.into_iter().enumerate() {
        let mut ctx = StoryContext::new();
        let items = queries
            .into_iter()
            .map(|q| {
                let ground_truth = answer_query(&kb, &mut ctx, &q, &cfg).into_answer();
                SuiteItem { query: q, ground_truth }
            })
            .collect();
        storylines.push(Storyline { id: Storyline::storyline_id(i), items });
    }
    let mut suite = EvaluationSuite::new("garden-fixture");
    suite.meta.insert("kb_checksum.garden".into(), kb.checksum().to_string());
    suite.scenes.push(SceneSuite { scene: "garden".into(), storylines });
    suite
}
