use super::{evaluate_atom, quantifier_domain, with_bound, Binding, EvalResult, Truth, UnableReason};
use crate::geometry::DerivedPredicateConfig;
use crate::kb::{FactPattern, KnowledgeBase};
use crate::query::{Formula, Literal, Term};
use crate::StoryContext;

/// Sorted, disjoint closed intervals.
pub type IntervalSet = Vec<(f64, f64)>;

fn normalize(mut v: IntervalSet) -> IntervalSet {
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: IntervalSet = Vec::new();
    for (s, e) in v {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn intersect(a: &IntervalSet, b: &IntervalSet) -> IntervalSet {
    let mut out = Vec::new();
    for &(s1, e1) in a {
        for &(s2, e2) in b {
            let (s, e) = (s1.max(s2), e1.min(e2));
            if s <= e {
                out.push((s, e));
            }
        }
    }
    normalize(out)
}

/// Scene times at which a time-free formula holds, as a union of intervals.
///
/// Supports stored atoms without time modifiers, object-type atoms,
/// conjunction, disjunction and existential quantification.
pub fn truth_intervals(
    kb: &KnowledgeBase,
    ctx: &StoryContext,
    f: &Formula,
    binding: &mut Binding,
    cfg: &DerivedPredicateConfig,
) -> EvalResult<IntervalSet> {
    match f {
        Formula::Atom(a) => {
            if a.time.is_some() || a.location.is_some() {
                return Err(UnableReason::Unsupported("when queries take time-free atoms".into()));
            }
            let def = kb.ontology().lookup(&a.pred).ok_or_else(|| UnableReason::UnknownPredicate(a.pred.clone()))?;
            if def.is_object() {
                return Ok(match evaluate_atom(kb, ctx, a, binding, cfg)? {
                    Truth::True => vec![(f64::NEG_INFINITY, f64::INFINITY)],
                    _ => Vec::new(),
                });
            }
            if def.derived {
                return Err(UnableReason::Unsupported("when over a derived predicate".into()));
            }
            let mut participants = Vec::new();
            let mut value = None;
            for t in &a.args {
                match t {
                    Term::Var(v) => participants.push(Some(
                        binding.get(v).cloned().ok_or_else(|| UnableReason::Unsupported(format!("free variable `{v}`")))?,
                    )),
                    Term::Label(l) => participants.push(Some(
                        ctx.entity_for(l).map(str::to_string).ok_or_else(|| UnableReason::UnboundLabel(l.clone()))?,
                    )),
                    Term::Literal(Literal::Text(s)) => value = Some(s.clone()),
                    Term::Literal(Literal::Number(n)) => value = Some(n.to_string()),
                }
            }
            let pat = FactPattern { predicate: Some(a.pred.clone()), participants: Some(participants), value };
            Ok(normalize(kb.facts_in_window(&pat, None).iter().map(|f| (f.start, f.end)).collect()))
        }
        Formula::And(cs) => {
            let mut acc = vec![(f64::NEG_INFINITY, f64::INFINITY)];
            for c in cs {
                acc = intersect(&acc, &truth_intervals(kb, ctx, c, binding, cfg)?);
                if acc.is_empty() {
                    break;
                }
            }
            Ok(acc)
        }
        Formula::Or(cs) => {
            let mut all = Vec::new();
            for c in cs {
                all.extend(truth_intervals(kb, ctx, c, binding, cfg)?);
            }
            Ok(normalize(all))
        }
        Formula::Exists { var, body } => {
            let mut all = Vec::new();
            for e in quantifier_domain(kb, var, body, true) {
                all.extend(with_bound(binding, var, e, |b| truth_intervals(kb, ctx, body, b, cfg))?);
            }
            Ok(normalize(all))
        }
        _ => Err(UnableReason::Unsupported("when queries support and/or/exists only".into())),
    }
}
