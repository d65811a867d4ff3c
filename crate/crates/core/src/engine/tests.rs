use super::*;
use crate::query::{CmpOp, Reference, Shape};
use crate::testkit::{garden, random_annotations, random_context, random_formula, tiny_scene, BruteForce};
use crate::{BBox, Ontology};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn cfg() -> DerivedPredicateConfig {
    DerivedPredicateConfig::default()
}

fn atom_at(pred: &str, args: Vec<Term>, t: f64) -> Formula {
    Formula::Atom(Atom::new(pred, args).at(TimeSpec::scene(t)))
}

fn garden_ctx() -> StoryContext {
    let mut ctx = StoryContext::new();
    ctx.bind("man", "P1");
    ctx.bind("woman", "P2");
    ctx.bind("ball", "B1");
    ctx
}

fn polar(kb: &KnowledgeBase, ctx: &StoryContext, f: &Formula) -> EvalOutcome {
    evaluate_polar(kb, ctx, f, &cfg())
}

const YES: EvalOutcome = EvalOutcome::Value(Answer::Bool(true));
const NO: EvalOutcome = EvalOutcome::Value(Answer::Bool(false));

#[test]
fn stored_atoms_respect_time() {
    let kb = garden();
    let ctx = garden_ctx();
    let catch = |who: &str, t: f64| atom_at("catching", vec![Term::label(who), Term::label("ball")], t);
    assert_eq!(polar(&kb, &ctx, &catch("woman", 12.0)), YES);
    assert_eq!(polar(&kb, &ctx, &catch("man", 12.0)), NO);
    assert_eq!(polar(&kb, &ctx, &catch("woman", 13.0)), NO);
    let carry = Atom::new("carrying", vec![Term::label("woman"), Term::label("ball")]);
    let inside = TimeSpec::scene_interval(13.0, 19.0).unwrap();
    let across = TimeSpec::scene_interval(10.0, 19.0).unwrap();
    assert_eq!(polar(&kb, &ctx, &Formula::Atom(carry.clone().at(inside))), YES);
    assert_eq!(polar(&kb, &ctx, &Formula::Atom(carry.at(across))), NO);
}

#[test]
fn literal_values() {
    let kb = garden();
    let ctx = garden_ctx();
    let color = |c: &str| Formula::Atom(Atom::new("clothing-color", vec![Term::label("man"), Term::text(c)]));
    assert_eq!(polar(&kb, &ctx, &color("red")), YES);
    assert_eq!(polar(&kb, &ctx, &color("blue")), NO);
}

#[test]
fn exists_with_labels() {
    let kb = garden();
    let ctx = garden_ctx();
    let f = Formula::exists(
        "x",
        Formula::And(vec![
            Formula::Atom(Atom::new("person", vec![Term::var("x")])),
            atom_at("catching", vec![Term::var("x"), Term::label("ball")], 12.0),
        ]),
    );
    assert_eq!(polar(&kb, &ctx, &f), YES);
    let f = Formula::exists(
        "x",
        Formula::And(vec![
            Formula::Atom(Atom::new("male", vec![Term::var("x")])),
            atom_at("catching", vec![Term::var("x"), Term::label("ball")], 12.0),
        ]),
    );
    assert_eq!(polar(&kb, &ctx, &f), NO);
}

#[test]
fn unknown_predicate_and_unbound_label() {
    let kb = garden();
    let ctx = garden_ctx();
    let f = Formula::Atom(Atom::new("juggling", vec![Term::label("man")]));
    assert_eq!(polar(&kb, &ctx, &f), EvalOutcome::Unable(UnableReason::UnknownPredicate("juggling".into())));
    let f = Formula::Atom(Atom::new("walking", vec![Term::label("nobody")]));
    assert_eq!(polar(&kb, &ctx, &f), EvalOutcome::Unable(UnableReason::UnboundLabel("nobody".into())));
}

#[test]
fn derived_predicates_and_gaps() {
    let kb = garden();
    let ctx = garden_ctx();
    let los = |t: f64| atom_at("clear-line-of-sight", vec![Term::label("man"), Term::label("woman")], t);
    assert_eq!(polar(&kb, &ctx, &los(12.0)), YES);
    assert_eq!(polar(&kb, &ctx, &los(42.0)), NO);
    assert_eq!(polar(&kb, &ctx, &los(99.0)), EvalOutcome::Unable(UnableReason::CoverageGap));
    let near = |t: f64| atom_at("near", vec![Term::label("woman"), Term::label("ball")], t);
    assert_eq!(polar(&kb, &ctx, &near(5.0)), YES);
    assert_eq!(polar(&kb, &ctx, &Formula::not(near(5.0))), NO);
    assert_eq!(polar(&kb, &ctx, &Formula::not(near(99.0))), EvalOutcome::Unable(UnableReason::CoverageGap));
    let untimed = Formula::Atom(Atom::new("near", vec![Term::label("woman"), Term::label("ball")]));
    assert!(matches!(polar(&kb, &ctx, &untimed), EvalOutcome::Unable(UnableReason::Unsupported(_))));
}

#[test]
fn kleene_connectives_absorb_unknown() {
    let kb = garden();
    let ctx = garden_ctx();
    let gap = atom_at("near", vec![Term::label("woman"), Term::label("ball")], 99.0);
    let yes = Formula::Atom(Atom::new("person", vec![Term::label("man")]));
    let no = Formula::Atom(Atom::new("ball", vec![Term::label("man")]));
    assert_eq!(polar(&kb, &ctx, &Formula::Or(vec![gap.clone(), yes.clone()])), YES);
    assert_eq!(polar(&kb, &ctx, &Formula::And(vec![gap.clone(), no.clone()])), NO);
    assert_eq!(polar(&kb, &ctx, &Formula::And(vec![gap, yes])), EvalOutcome::Unable(UnableReason::CoverageGap));
}

fn three_people() -> KnowledgeBase {
    tiny_scene(
        &[("A", "male", (0.0, 0.0)), ("B", "female", (1.0, 0.0)), ("C", "male", (9.0, 9.0)), ("K", "car", (5.0, 5.0))],
        &[],
    )
}

#[test]
fn counting() {
    let kb = three_people();
    let ctx = StoryContext::new();
    let body = Formula::Atom(Atom::new("person", vec![Term::var("x")]));
    assert_eq!(count_value(&kb, &ctx, "x", &body, &cfg()), Ok(3));
    let c = |op, n| Formula::count("x", body.clone(), op, n);
    assert_eq!(evaluate_count(&kb, &ctx, &c(CmpOp::Eq, 3), &cfg()), YES);
    assert_eq!(evaluate_count(&kb, &ctx, &c(CmpOp::Ge, 4), &cfg()), NO);
    assert_eq!(evaluate_count(&kb, &ctx, &c(CmpOp::Lt, 4), &cfg()), YES);
    assert!(matches!(evaluate_count(&kb, &ctx, &body, &cfg()), EvalOutcome::Unable(_)));
}

#[test]
fn counting_with_unknown_members() {
    // near(A, x) at t=10.5: tracks end at 10, so every pair is unknown
    let kb = three_people();
    let mut ctx = StoryContext::new();
    ctx.bind("a", "A");
    let near = |t: f64| {
        Formula::And(vec![
            Formula::Atom(Atom::new("person", vec![Term::var("x")])),
            atom_at("near", vec![Term::label("a"), Term::var("x")], t),
        ])
    };
    let c = |t, op, n| Formula::count("x", near(t), op, n);
    // at t=0: A and B near A, C is not
    assert_eq!(polar(&kb, &ctx, &c(0.0, CmpOp::Eq, 2)), YES);
    assert_eq!(polar(&kb, &ctx, &c(10.5, CmpOp::Le, 3)), YES);
    assert_eq!(polar(&kb, &ctx, &c(10.5, CmpOp::Gt, 3)), NO);
    assert_eq!(polar(&kb, &ctx, &c(10.5, CmpOp::Eq, 2)), EvalOutcome::Unable(UnableReason::CoverageGap));
}

#[test]
fn empty_domain_quantifiers() {
    let kb = tiny_scene(&[], &[]);
    let ctx = StoryContext::new();
    let body = Formula::Atom(Atom::new("person", vec![Term::var("x")]));
    assert_eq!(polar(&kb, &ctx, &Formula::forall("x", body.clone())), YES);
    assert_eq!(polar(&kb, &ctx, &Formula::exists("x", body.clone())), NO);
    assert_eq!(polar(&kb, &ctx, &Formula::count("x", body, CmpOp::Eq, 0)), YES);
}

#[test]
fn forall_ranges_over_all_entities() {
    let kb = three_people();
    let ctx = StoryContext::new();
    let f = Formula::forall("x", Formula::Atom(Atom::new("person", vec![Term::var("x")])));
    assert_eq!(polar(&kb, &ctx, &f), NO);
    let f = Formula::forall("x", Formula::Atom(Atom::new("entity", vec![Term::var("x")])));
    assert_eq!(polar(&kb, &ctx, &f), YES);
}

fn view_box_definition(label: &str, frame: u64) -> Query {
    let b = BBox::new(20.0 / 11.0, 0.0, 150.0 / 11.0, 10.0).unwrap();
    let loc = LocationSpec { shape: Shape::Box(b), reference: Reference::View { camera: "cam-a".into() } };
    let atom = Atom::new("person", vec![Term::var("x")]).at(TimeSpec::frame("cam-a", frame)).located(loc);
    Query::definition("d1", label, Formula::exists("x", Formula::Atom(atom)))
}

#[test]
fn definition_by_view_box_picks_best_iou() {
    let kb = garden();
    let mut ctx = StoryContext::new();
    assert_eq!(resolve_definition(&kb, &mut ctx, &view_box_definition("p", 120), &cfg()), YES);
    assert_eq!(ctx.entity_for("p"), Some("P1"));
    let strict = DerivedPredicateConfig { iou_threshold_def: 0.7, ..cfg() };
    let mut ctx = StoryContext::new();
    assert_eq!(resolve_definition(&kb, &mut ctx, &view_box_definition("p", 120), &strict), NO);
    assert!(ctx.is_failed("p"));
    assert_eq!(ctx.entity_for("p"), None);
}

#[test]
fn definition_without_observation_fails() {
    let kb = garden();
    let mut ctx = StoryContext::new();
    assert_eq!(resolve_definition(&kb, &mut ctx, &view_box_definition("p", 500), &cfg()), NO);
    assert!(ctx.is_failed("p"));
}

#[test]
fn definition_by_scene_point() {
    let kb = three_people();
    let mut ctx = StoryContext::new();
    let q = |x: f64, y: f64| {
        let loc = LocationSpec { shape: Shape::Point(Point::new(x, y)), reference: Reference::Scene { system: "ground".into() } };
        let atom = Atom::new("person", vec![Term::var("x")]).at(TimeSpec::scene(1.0)).located(loc);
        Query::definition("d", "who", Formula::exists("x", Formula::Atom(atom)))
    };
    assert_eq!(resolve_definition(&kb, &mut ctx, &q(0.8, 0.0), &cfg()), YES);
    assert_eq!(ctx.entity_for("who"), Some("B"));
    // equidistant: smaller id wins
    assert_eq!(resolve_definition(&kb, &mut ctx, &q(0.5, 0.0), &cfg()), YES);
    assert_eq!(ctx.entity_for("who"), Some("A"));
    assert_eq!(resolve_definition(&kb, &mut ctx, &q(50.0, 50.0), &cfg()), NO);
    assert!(ctx.is_failed("who"));
}

#[test]
fn answer_query_dispatch_updates_context_only_for_definitions() {
    let kb = garden();
    let mut ctx = StoryContext::new();
    let polar_q = Query::polar("q", Formula::Atom(Atom::new("person", vec![Term::label("p")])));
    assert!(matches!(answer_query(&kb, &mut ctx, &polar_q, &cfg()), EvalOutcome::Unable(UnableReason::UnboundLabel(_))));
    assert_eq!(ctx, StoryContext::new());
    assert_eq!(answer_query(&kb, &mut ctx, &view_box_definition("p", 120), &cfg()), YES);
    assert_eq!(answer_query(&kb, &mut ctx, &polar_q, &cfg()), YES);
}

#[test]
fn what_returns_type_label() {
    let kb = tiny_scene(
        &[("A", "male", (0.0, 0.0)), ("G", "backpack", (0.0, 0.0)), ("H", "hat", (0.0, 0.0))],
        &[("carrying", "A|G", None, 0.0, 5.0)],
    );
    let mut ctx = StoryContext::new();
    ctx.bind("p", "A");
    let q = Query::nonpolar(
        "w",
        QueryKind::What,
        Term::var("x"),
        Formula::exists("x", atom_at("carrying", vec![Term::label("p"), Term::var("x")], 2.0)),
    );
    assert_eq!(answer_nonpolar(&kb, &ctx, &q, &cfg()), EvalOutcome::Value(Answer::Label("backpack".into())));
    let q = Query::nonpolar(
        "w",
        QueryKind::What,
        Term::var("x"),
        Formula::exists("x", atom_at("carrying", vec![Term::label("p"), Term::var("x")], 8.0)),
    );
    assert!(matches!(answer_nonpolar(&kb, &ctx, &q, &cfg()), EvalOutcome::Unable(_)));
    let q = Query::nonpolar("w", QueryKind::What, Term::label("p"), Formula::Atom(Atom::new("person", vec![Term::label("p")])));
    assert_eq!(answer_nonpolar(&kb, &ctx, &q, &cfg()), EvalOutcome::Value(Answer::Label("male".into())));
}

#[test]
fn when_returns_validity_interval() {
    let kb = garden();
    let ctx = garden_ctx();
    let q = Query::nonpolar(
        "w",
        QueryKind::When,
        Term::label("man"),
        Formula::Atom(Atom::new("game", vec![Term::label("man"), Term::label("woman")])),
    );
    assert_eq!(answer_nonpolar(&kb, &ctx, &q, &cfg()), EvalOutcome::Value(Answer::TimeInterval { start: 5.0, end: 40.0 }));
    let q = Query::nonpolar(
        "w",
        QueryKind::When,
        Term::label("woman"),
        Formula::And(vec![
            Formula::Atom(Atom::new("walking", vec![Term::label("woman")])),
            Formula::Atom(Atom::new("carrying", vec![Term::label("woman"), Term::label("ball")])),
        ]),
    );
    assert_eq!(answer_nonpolar(&kb, &ctx, &q, &cfg()), EvalOutcome::Value(Answer::TimeInterval { start: 12.0, end: 20.0 }));
    let q = Query::nonpolar(
        "w",
        QueryKind::When,
        Term::label("man"),
        Formula::Atom(Atom::new("person", vec![Term::label("man")])),
    );
    assert!(matches!(answer_nonpolar(&kb, &ctx, &q, &cfg()), EvalOutcome::Unable(_)));
}

#[test]
fn where_returns_hull_or_buffered_box() {
    let kb = garden();
    let ctx = garden_ctx();
    let body = Formula::Atom(Atom::new("walking", vec![Term::label("man")]).at(TimeSpec::scene_interval(10.0, 12.0).unwrap()));
    let q = Query::nonpolar("w", QueryKind::Where, Term::label("man"), body);
    let EvalOutcome::Value(Answer::Polygon(poly)) = answer_nonpolar(&kb, &ctx, &q, &cfg()) else { panic!() };
    let expect = [(4.6, -0.4), (6.4, -0.4), (6.4, 0.4), (4.6, 0.4)];
    for (p, (x, y)) in poly.iter().zip(expect) {
        assert!((p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12, "{poly:?}");
    }

    let kb = tiny_scene(&[("A", "male", (3.0, 4.0))], &[("walking", "A", None, 0.0, 10.0)]);
    let mut ctx = StoryContext::new();
    ctx.bind("p", "A");
    let body = atom_at("walking", vec![Term::label("p")], 3.0);
    let q = Query::nonpolar("w", QueryKind::Where, Term::label("p"), body);
    let EvalOutcome::Value(Answer::Polygon(poly)) = answer_nonpolar(&kb, &ctx, &q, &cfg()) else { panic!() };
    assert!((crate::geometry::polygon_area(&poly) - 0.64).abs() < 1e-12);
}

#[test]
fn where_over_moving_entity_uses_hull() {
    let kb = garden();
    let ctx = garden_ctx();
    let body = Formula::And(vec![
        Formula::Atom(Atom::new("walking", vec![Term::label("man")]).at(TimeSpec::scene(10.0))),
        Formula::Atom(Atom::new("walking", vec![Term::label("woman")]).at(TimeSpec::scene(14.0))),
    ]);
    let q = Query::nonpolar("w", QueryKind::Where, Term::label("woman"), body);
    let EvalOutcome::Value(Answer::Polygon(poly)) = answer_nonpolar(&kb, &ctx, &q, &cfg()) else { panic!() };
    // P2 moves from (5,10) to (7,10): collinear, buffered
    assert!((crate::geometry::polygon_area(&poly) - 2.8 * 0.8).abs() < 1e-9);
}

#[test]
fn brute_force_agreement_fixed_seed() {
    let ont = Arc::new(Ontology::builtin());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let kb = KnowledgeBase::ingest(&random_annotations(&mut rng, 6), Arc::clone(&ont)).unwrap();
        let labels = kb.entity_ids().len().min(2);
        let ctx = random_context(&kb, labels);
        let f = random_formula(&mut rng, 4, labels);
        assert!(f.depth() <= 4);
        let got = evaluate_formula(&kb, &ctx, &f, &mut Binding::new(), &cfg()).unwrap();
        let want = BruteForce::new(&kb, &ctx, cfg().near_threshold).eval(&f);
        assert_eq!(got, want, "{f:?}");
    }
}

fn truth(kb: &KnowledgeBase, ctx: &StoryContext, f: &Formula) -> Truth {
    evaluate_formula(kb, ctx, f, &mut Binding::new(), &cfg()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn negation_involution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kb = KnowledgeBase::ingest(&random_annotations(&mut rng, 5), Arc::new(Ontology::builtin())).unwrap();
        let labels = kb.entity_ids().len().min(2);
        let ctx = random_context(&kb, labels);
        let f = random_formula(&mut rng, 3, labels);
        prop_assert_eq!(truth(&kb, &ctx, &Formula::not(Formula::not(f.clone()))), truth(&kb, &ctx, &f));
    }

    #[test]
    fn quantifier_duality(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kb = KnowledgeBase::ingest(&random_annotations(&mut rng, 5), Arc::new(Ontology::builtin())).unwrap();
        let labels = kb.entity_ids().len().min(2);
        let ctx = random_context(&kb, labels);
        let f = random_formula(&mut rng, 3, labels);
        let body = Formula::And(vec![Formula::Atom(Atom::new("person", vec![Term::var("q")])), f]);
        let ex = Formula::exists("q", body.clone());
        let dual = Formula::not(Formula::forall("q", Formula::not(body)));
        prop_assert_eq!(truth(&kb, &ctx, &ex), truth(&kb, &ctx, &dual));
    }

    #[test]
    fn context_monotonicity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kb = KnowledgeBase::ingest(&random_annotations(&mut rng, 5), Arc::new(Ontology::builtin())).unwrap();
        let labels = kb.entity_ids().len().min(2);
        let ctx = random_context(&kb, labels);
        let f = random_formula(&mut rng, 3, labels);
        let mut wider = ctx.clone();
        wider.bind("unused", kb.entity_ids()[0]);
        prop_assert_eq!(truth(&kb, &wider, &f), truth(&kb, &ctx, &f));
    }
}
