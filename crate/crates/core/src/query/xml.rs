//! Canonical XML form of queries.
//!
//! Connectives are `<and> <or> <not> <exists var> <forall var> <count var op rhs>`;
//! any other element in formula position is a predicate whose children are
//! an optional `<time>` or `<interval>`, an optional `<location>`, then one
//! argument element (`<entity>`, `<value>`, `<number>`) per slot. Roots are
//! the bare formula (polar), `<define label>`, or `<what|when|where target>`.
//!
//! `<entity>` text names a variable when an enclosing quantifier binds it and
//! a conversation label otherwise.

use roxmltree::{Document, Node};

use super::{
    Answer, Atom, CmpOp, Formula, Literal, LocationSpec, Query, QueryKind, Reference, Shape, Term, TimePoint,
    TimeSpec,
};
use crate::{BBox, Point, QueryError};

const RESERVED: &[&str] = &[
    "time", "interval", "location", "entity", "value", "number", "define", "what", "when", "where", "storyline",
    "item", "ground-truth",
];

pub fn parse_query_xml(text: &str) -> Result<Query, QueryError> {
    let doc = Document::parse(text).map_err(|e| QueryError::Xml(e.to_string()))?;
    parse_query_node(doc.root_element())
}

pub(crate) fn parse_query_node(root: Node<'_, '_>) -> Result<Query, QueryError> {
    let name = root.tag_name().name();
    let id = root.attribute("id").unwrap_or("").to_string();
    match name {
        "define" => {
            check_attrs(root, &["id", "label"])?;
            let label = required_attr(root, "label")?;
            let body = parse_formula(single_child(root)?, &mut Vec::new())?;
            Ok(Query { id, kind: QueryKind::Definition, body, target: None, defines_label: Some(label) })
        }
        "what" | "when" | "where" => {
            check_attrs(root, &["id", "target"])?;
            let kind = match name {
                "what" => QueryKind::What,
                "when" => QueryKind::When,
                _ => QueryKind::Where,
            };
            let target_name = required_attr(root, "target")?;
            let body = parse_formula(single_child(root)?, &mut Vec::new())?;
            let target = if body.quantified_vars().contains(&target_name) {
                Term::Var(target_name)
            } else {
                Term::Label(target_name)
            };
            Ok(Query { id, kind, body, target: Some(target), defines_label: None })
        }
        _ => {
            let body = parse_formula_with(root, &mut Vec::new(), &["id"])?;
            Ok(Query { id, kind: QueryKind::Polar, body, target: None, defines_label: None })
        }
    }
}

fn element_children<'a, 'input>(node: Node<'a, 'input>) -> Result<Vec<Node<'a, 'input>>, QueryError> {
    let mut out = Vec::new();
    for c in node.children() {
        if c.is_element() {
            out.push(c);
        } else if c.is_text() && !c.text().unwrap_or("").trim().is_empty() {
            return Err(QueryError::Structure(format!(
                "unexpected text inside <{}>",
                node.tag_name().name()
            )));
        }
    }
    Ok(out)
}

fn single_child<'a, 'input>(node: Node<'a, 'input>) -> Result<Node<'a, 'input>, QueryError> {
    let cs = element_children(node)?;
    if cs.len() != 1 {
        return Err(QueryError::Structure(format!(
            "<{}> takes exactly one child, found {}",
            node.tag_name().name(),
            cs.len()
        )));
    }
    Ok(cs[0])
}

fn required_attr(node: Node<'_, '_>, attr: &str) -> Result<String, QueryError> {
    node.attribute(attr)
        .map(str::to_string)
        .ok_or_else(|| QueryError::Structure(format!("<{}> lacks `{attr}`", node.tag_name().name())))
}

fn check_attrs(node: Node<'_, '_>, allowed: &[&str]) -> Result<(), QueryError> {
    for a in node.attributes() {
        if !allowed.contains(&a.name()) {
            return Err(QueryError::Structure(format!(
                "unknown attribute `{}` on <{}>",
                a.name(),
                node.tag_name().name()
            )));
        }
    }
    Ok(())
}

fn text_of(node: Node<'_, '_>) -> Result<String, QueryError> {
    if node.children().any(|c| c.is_element()) {
        return Err(QueryError::Structure(format!("<{}> must hold text only", node.tag_name().name())));
    }
    Ok(node.text().unwrap_or("").trim().to_string())
}

fn number(s: &str) -> Result<f64, QueryError> {
    let v: f64 = s.trim().parse().map_err(|_| QueryError::Structure(format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(QueryError::Structure(format!("`{s}` is not finite")));
    }
    Ok(v)
}

fn numbers(s: &str) -> Result<Vec<f64>, QueryError> {
    s.split_whitespace().map(number).collect()
}

fn frame_number(s: &str) -> Result<u64, QueryError> {
    s.trim().parse().map_err(|_| QueryError::Structure(format!("`{s}` is not a frame number")))
}

fn parse_formula(node: Node<'_, '_>, scope: &mut Vec<String>) -> Result<Formula, QueryError> {
    parse_formula_with(node, scope, &[])
}

fn parse_formula_with(node: Node<'_, '_>, scope: &mut Vec<String>, extra: &[&str]) -> Result<Formula, QueryError> {
    let name = node.tag_name().name();
    let allow = |base: &[&'static str]| -> Vec<&str> { base.iter().copied().chain(extra.iter().copied()).collect() };
    match name {
        "and" | "or" => {
            check_attrs(node, &allow(&[]))?;
            let children = element_children(node)?
                .into_iter()
                .map(|c| parse_formula(c, scope))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(if name == "and" { Formula::And(children) } else { Formula::Or(children) })
        }
        "not" => {
            check_attrs(node, &allow(&[]))?;
            Ok(Formula::not(parse_formula(single_child(node)?, scope)?))
        }
        "exists" | "forall" | "count" => {
            let var = required_attr(node, "var")?;
            let (op, rhs) = if name == "count" {
                check_attrs(node, &allow(&["var", "op", "rhs"]))?;
                let op_s = required_attr(node, "op")?;
                let op = CmpOp::parse(&op_s)
                    .ok_or_else(|| QueryError::Structure(format!("unknown comparison `{op_s}`")))?;
                let rhs = frame_number(&required_attr(node, "rhs")?)?;
                (Some(op), rhs)
            } else {
                check_attrs(node, &allow(&["var"]))?;
                (None, 0)
            };
            scope.push(var.clone());
            let body = parse_formula(single_child(node)?, scope);
            scope.pop();
            let body = Box::new(body?);
            Ok(match (name, op) {
                ("exists", _) => Formula::Exists { var, body },
                ("forall", _) => Formula::ForAll { var, body },
                (_, Some(op)) => Formula::Count { var, body, op, rhs },
                _ => unreachable!(),
            })
        }
        n if RESERVED.contains(&n) => Err(QueryError::Structure(format!("<{n}> is not allowed in formula position"))),
        _ => {
            check_attrs(node, &allow(&[]))?;
            parse_atom(node, scope).map(Formula::Atom)
        }
    }
}

fn parse_time_point(node: Node<'_, '_>, value: &str) -> Result<TimePoint, QueryError> {
    Ok(match node.attribute("camera") {
        Some(cam) => TimePoint::Frame { camera: cam.to_string(), frame: frame_number(value)? },
        None => TimePoint::Scene(number(value)?),
    })
}

fn parse_atom(node: Node<'_, '_>, scope: &[String]) -> Result<Atom, QueryError> {
    let mut atom = Atom::new(node.tag_name().name(), Vec::new());
    for c in element_children(node)? {
        match c.tag_name().name() {
            "time" | "interval" if atom.time.is_some() => {
                return Err(QueryError::Structure(format!("<{}> has two time modifiers", atom.pred)))
            }
            "time" => {
                check_attrs(c, &["camera"])?;
                atom.time = Some(TimeSpec::At(parse_time_point(c, &text_of(c)?)?));
            }
            "interval" => {
                check_attrs(c, &["camera", "start", "end"])?;
                let start = parse_time_point(c, &required_attr(c, "start")?)?;
                let end = parse_time_point(c, &required_attr(c, "end")?)?;
                atom.time = Some(TimeSpec::interval(start, end)?);
            }
            "location" => {
                if atom.location.is_some() {
                    return Err(QueryError::Structure(format!("<{}> has two locations", atom.pred)));
                }
                check_attrs(c, &["camera", "system"])?;
                let reference = match (c.attribute("camera"), c.attribute("system")) {
                    (Some(cam), None) => Reference::View { camera: cam.to_string() },
                    (None, Some(sys)) => Reference::Scene { system: sys.to_string() },
                    _ => {
                        return Err(QueryError::Structure(
                            "<location> needs exactly one of `camera` or `system`".into(),
                        ))
                    }
                };
                let v = numbers(&text_of(c)?)?;
                let shape = match v.as_slice() {
                    [x, y] => Shape::Point(Point::new(*x, *y)),
                    [x1, y1, x2, y2] => Shape::Box(
                        BBox::new(*x1, *y1, *x2, *y2).map_err(|e| QueryError::Structure(e.to_string()))?,
                    ),
                    _ => return Err(QueryError::Structure("<location> holds 2 or 4 numbers".into())),
                };
                atom.location = Some(LocationSpec { shape, reference });
            }
            "entity" => {
                check_attrs(c, &[])?;
                let name = text_of(c)?;
                atom.args.push(if scope.contains(&name) { Term::Var(name) } else { Term::Label(name) });
            }
            "value" => {
                check_attrs(c, &[])?;
                atom.args.push(Term::Literal(Literal::Text(text_of(c)?)));
            }
            "number" => {
                check_attrs(c, &[])?;
                atom.args.push(Term::Literal(Literal::Number(number(&text_of(c)?)?)));
            }
            other => {
                return Err(QueryError::Structure(format!("unknown element <{other}> inside <{}>", atom.pred)))
            }
        }
    }
    Ok(atom)
}

/// Minimal canonical writer: 2-space indent, sorted attributes, LF endings.
pub(crate) struct XmlWriter {
    buf: String,
    depth: usize,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

impl XmlWriter {
    pub(crate) fn new() -> Self {
        Self { buf: String::new(), depth: 0 }
    }

    fn tag(&mut self, name: &str, attrs: &[(&str, String)]) {
        self.buf.push_str(&"  ".repeat(self.depth));
        self.buf.push('<');
        self.buf.push_str(name);
        let mut sorted: Vec<&(&str, String)> = attrs.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(b.0));
        for (k, v) in sorted {
            self.buf.push_str(&format!(" {k}=\"{}\"", escape(v)));
        }
    }

    pub(crate) fn open(&mut self, name: &str, attrs: &[(&str, String)]) {
        self.tag(name, attrs);
        self.buf.push_str(">\n");
        self.depth += 1;
    }

    pub(crate) fn close(&mut self, name: &str) {
        self.depth -= 1;
        self.buf.push_str(&"  ".repeat(self.depth));
        self.buf.push_str(&format!("</{name}>\n"));
    }

    /// Element holding only text, or self-closing when `text` is `None`.
    pub(crate) fn leaf(&mut self, name: &str, attrs: &[(&str, String)], text: Option<&str>) {
        self.tag(name, attrs);
        match text {
            Some(t) => self.buf.push_str(&format!(">{}</{name}>\n", escape(t))),
            None => self.buf.push_str("/>\n"),
        }
    }

    pub(crate) fn finish(self) -> String {
        self.buf
    }
}

fn time_point_text(p: &TimePoint) -> (Option<String>, String) {
    match p {
        TimePoint::Frame { camera, frame } => (Some(camera.clone()), frame.to_string()),
        TimePoint::Scene(t) => (None, t.to_string()),
    }
}

fn write_atom(w: &mut XmlWriter, a: &Atom, attrs: &[(&str, String)]) {
    w.open(&a.pred, attrs);
    match &a.time {
        Some(TimeSpec::At(p)) => {
            let (cam, text) = time_point_text(p);
            let attrs: Vec<(&str, String)> = cam.into_iter().map(|c| ("camera", c)).collect();
            w.leaf("time", &attrs, Some(&text));
        }
        Some(TimeSpec::Interval { start, end }) => {
            let (cam, s) = time_point_text(start);
            let (_, e) = time_point_text(end);
            let mut attrs = vec![("start", s), ("end", e)];
            if let Some(c) = cam {
                attrs.push(("camera", c));
            }
            w.leaf("interval", &attrs, None);
        }
        None => {}
    }
    if let Some(loc) = &a.location {
        let attrs = match &loc.reference {
            Reference::View { camera } => vec![("camera", camera.clone())],
            Reference::Scene { system } => vec![("system", system.clone())],
        };
        let text = match &loc.shape {
            Shape::Point(p) => format!("{} {}", p.x, p.y),
            Shape::Box(b) => format!("{} {} {} {}", b.x1, b.y1, b.x2, b.y2),
        };
        w.leaf("location", &attrs, Some(&text));
    }
    for t in &a.args {
        match t {
            Term::Var(n) | Term::Label(n) => w.leaf("entity", &[], Some(n)),
            Term::Literal(Literal::Text(s)) => w.leaf("value", &[], Some(s)),
            Term::Literal(Literal::Number(n)) => w.leaf("number", &[], Some(&n.to_string())),
        }
    }
    w.close(&a.pred);
}

fn write_formula_with(w: &mut XmlWriter, f: &Formula, attrs: &[(&str, String)]) {
    let with = |extra: Vec<(&'static str, String)>| -> Vec<(&str, String)> {
        let mut v: Vec<(&str, String)> = attrs.to_vec();
        v.extend(extra);
        v
    };
    match f {
        Formula::Atom(a) => write_atom(w, a, attrs),
        Formula::And(cs) | Formula::Or(cs) => {
            let name = if matches!(f, Formula::And(_)) { "and" } else { "or" };
            w.open(name, attrs);
            for c in cs {
                write_formula_with(w, c, &[]);
            }
            w.close(name);
        }
        Formula::Not(c) => {
            w.open("not", attrs);
            write_formula_with(w, c, &[]);
            w.close("not");
        }
        Formula::Exists { var, body } | Formula::ForAll { var, body } => {
            let name = if matches!(f, Formula::Exists { .. }) { "exists" } else { "forall" };
            w.open(name, &with(vec![("var", var.clone())]));
            write_formula_with(w, body, &[]);
            w.close(name);
        }
        Formula::Count { var, body, op, rhs } => {
            w.open(
                "count",
                &with(vec![("var", var.clone()), ("op", op.as_str().to_string()), ("rhs", rhs.to_string())]),
            );
            write_formula_with(w, body, &[]);
            w.close("count");
        }
    }
}

/// Writes a bare formula in canonical form.
pub fn write_formula(f: &Formula) -> String {
    let mut w = XmlWriter::new();
    write_formula_with(&mut w, f, &[]);
    w.finish()
}

pub(crate) fn write_query(w: &mut XmlWriter, q: &Query) {
    let mut attrs: Vec<(&str, String)> = Vec::new();
    if !q.id.is_empty() {
        attrs.push(("id", q.id.clone()));
    }
    match q.kind {
        QueryKind::Polar => write_formula_with(w, &q.body, &attrs),
        QueryKind::Definition => {
            attrs.push(("label", q.defines_label.clone().unwrap_or_default()));
            w.open("define", &attrs);
            write_formula_with(w, &q.body, &[]);
            w.close("define");
        }
        QueryKind::What | QueryKind::When | QueryKind::Where => {
            let target = q.target.as_ref().and_then(|t| t.name()).unwrap_or("").to_string();
            attrs.push(("target", target));
            w.open(q.kind.as_str(), &attrs);
            write_formula_with(w, &q.body, &[]);
            w.close(q.kind.as_str());
        }
    }
}

pub fn serialize_query_xml(q: &Query) -> String {
    let mut w = XmlWriter::new();
    write_query(&mut w, q);
    w.finish()
}

pub(crate) fn write_answer_element(w: &mut XmlWriter, name: &str, a: &Answer) {
    let attrs = [("type", a.type_name().to_string())];
    match a {
        Answer::Unable => w.leaf(name, &attrs, None),
        Answer::Bool(b) => w.leaf(name, &attrs, Some(if *b { "true" } else { "false" })),
        Answer::Label(l) => w.leaf(name, &attrs, Some(l)),
        Answer::TimeInterval { start, end } => w.leaf(name, &attrs, Some(&format!("{start} {end}"))),
        Answer::Polygon(ring) => {
            let text = ring.iter().map(|p| format!("{} {}", p.x, p.y)).collect::<Vec<_>>().join(" ");
            w.leaf(name, &attrs, Some(&text));
        }
    }
}

pub(crate) fn parse_answer_element(node: Node<'_, '_>) -> Result<Answer, QueryError> {
    let ty = required_attr(node, "type")?;
    let text = text_of(node)?;
    match ty.as_str() {
        "unable" => Ok(Answer::Unable),
        "bool" => match text.as_str() {
            "true" => Ok(Answer::Bool(true)),
            "false" => Ok(Answer::Bool(false)),
            _ => Err(QueryError::Structure(format!("`{text}` is not a boolean"))),
        },
        "label" => Ok(Answer::Label(text)),
        "interval" => match numbers(&text)?.as_slice() {
            [s, e] => Ok(Answer::TimeInterval { start: *s, end: *e }),
            _ => Err(QueryError::Structure("interval answers hold two numbers".into())),
        },
        "polygon" => {
            let v = numbers(&text)?;
            if v.len() % 2 != 0 {
                return Err(QueryError::Structure("polygon needs an even count of coordinates".into()));
            }
            Ok(Answer::Polygon(v.chunks(2).map(|c| Point::new(c[0], c[1])).collect()))
        }
        other => Err(QueryError::Structure(format!("unknown answer type `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG6: &str = r#"<and>
    <male><entity>p1</entity></male>
    <female><entity>p2</entity></female>
    <clear-line-of-sight>
      <time>12.5</time>
      <entity>p1</entity>
      <entity>p2</entity>
    </clear-line-of-sight>
  </and>"#;

    #[test]
    fn parses_fig6_structure() {
        let q = parse_query_xml(FIG6).unwrap();
        assert_eq!(q.kind, QueryKind::Polar);
        let expected = Formula::And(vec![
            Formula::atom(Atom::new("male", vec![Term::label("p1")])),
            Formula::atom(Atom::new("female", vec![Term::label("p2")])),
            Formula::atom(
                Atom::new("clear-line-of-sight", vec![Term::label("p1"), Term::label("p2")]).at(TimeSpec::scene(12.5)),
            ),
        ]);
        assert_eq!(q.body, expected);
    }

    #[test]
    fn variables_follow_quantifier_scope() {
        let text = "<exists var=\"b\"><and><ball><entity>b</entity></ball><catching><time>2</time>\
                    <entity>F1</entity><entity>b</entity></catching></and></exists>";
        let q = parse_query_xml(text).unwrap();
        let expected = Formula::exists(
            "b",
            Formula::And(vec![
                Formula::atom(Atom::new("ball", vec![Term::var("b")])),
                Formula::atom(Atom::new("catching", vec![Term::label("F1"), Term::var("b")]).at(TimeSpec::scene(2.0))),
            ]),
        );
        assert_eq!(q.body, expected);
    }

    #[test]
    fn malformed_and_structural_errors() {
        assert!(matches!(parse_query_xml("<and><male><entity>p1</entity></male>"), Err(QueryError::Xml(_))));
        assert!(matches!(parse_query_xml("<not></not>"), Err(QueryError::Structure(_))));
        assert!(matches!(parse_query_xml("<male><color>red</color></male>"), Err(QueryError::Structure(_))));
        assert!(matches!(parse_query_xml("<and><time>3</time></and>"), Err(QueryError::Structure(_))));
        assert!(matches!(parse_query_xml("<male><time>soon</time></male>"), Err(QueryError::Structure(_))));
        assert!(matches!(
            parse_query_xml("<male><interval start=\"5\" end=\"1\"/></male>"),
            Err(QueryError::Invalid(_))
        ));
        assert!(matches!(parse_query_xml("<male bogus=\"1\"/>"), Err(QueryError::Structure(_))));
    }

    #[test]
    fn canonical_layout() {
        let q = parse_query_xml(FIG6).unwrap();
        let s = serialize_query_xml(&q);
        assert_eq!(
            s,
            "<and>\n  <male>\n    <entity>p1</entity>\n  </male>\n  <female>\n    <entity>p2</entity>\n  </female>\n  \
             <clear-line-of-sight>\n    <time>12.5</time>\n    <entity>p1</entity>\n    <entity>p2</entity>\n  \
             </clear-line-of-sight>\n</and>\n"
        );
        assert_eq!(parse_query_xml(&s).unwrap(), q);
        assert_eq!(serialize_query_xml(&parse_query_xml(&s).unwrap()), s);
    }

    #[test]
    fn definition_roundtrip_with_location() {
        let loc = LocationSpec {
            shape: Shape::Box(BBox::new(10.0, 20.5, 30.0, 40.0).unwrap()),
            reference: Reference::View { camera: "cam-2".into() },
        };
        let q = Query::definition(
            "s0-q0",
            "p1",
            Formula::exists(
                "x",
                Formula::atom(Atom::new("person", vec![Term::var("x")]).at(TimeSpec::frame("cam-2", 42)).located(loc)),
            ),
        );
        let s = serialize_query_xml(&q);
        assert!(s.starts_with("<define id=\"s0-q0\" label=\"p1\">\n"));
        assert!(s.contains("<time camera=\"cam-2\">42</time>"));
        assert!(s.contains("<location camera=\"cam-2\">10 20.5 30 40</location>"));
        assert_eq!(parse_query_xml(&s).unwrap(), q);
    }

    #[test]
    fn nonpolar_and_count_roundtrip() {
        let body = Formula::exists(
            "x",
            Formula::atom(Atom::new("carrying", vec![Term::label("p1"), Term::var("x")]).at(TimeSpec::scene(3.0))),
        );
        let q = Query::nonpolar("w", QueryKind::What, Term::var("x"), body);
        assert_eq!(parse_query_xml(&serialize_query_xml(&q)).unwrap(), q);

        let q = Query::nonpolar(
            "w2",
            QueryKind::Where,
            Term::label("p1"),
            Formula::atom(
                Atom::new("walking", vec![Term::label("p1")]).at(TimeSpec::scene_interval(1.0, 4.5).unwrap()),
            ),
        );
        let s = serialize_query_xml(&q);
        assert!(s.contains("<interval end=\"4.5\" start=\"1\"/>"));
        assert_eq!(parse_query_xml(&s).unwrap(), q);

        let q = Query::polar(
            "c",
            Formula::count("x", Formula::atom(Atom::new("person", vec![Term::var("x")])), CmpOp::Ge, 2),
        );
        let s = serialize_query_xml(&q);
        assert!(s.starts_with("<count id=\"c\" op=\"ge\" rhs=\"2\" var=\"x\">"));
        assert_eq!(parse_query_xml(&s).unwrap(), q);
    }

    #[test]
    fn escapes_literals() {
        let q = Query::polar(
            "",
            Formula::atom(Atom::new("clothing-color", vec![Term::label("a"), Term::text("black & <white>")])),
        );
        assert_eq!(parse_query_xml(&serialize_query_xml(&q)).unwrap(), q);
    }

    #[test]
    fn answers_roundtrip() {
        for a in [
            Answer::Bool(false),
            Answer::Unable,
            Answer::Label("backpack".into()),
            Answer::TimeInterval { start: 5.0, end: 40.25 },
            Answer::Polygon(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.5, 1.0)]),
        ] {
            let mut w = XmlWriter::new();
            write_answer_element(&mut w, "ground-truth", &a);
            let s = w.finish();
            let doc = Document::parse(&s).unwrap();
            assert_eq!(parse_answer_element(doc.root_element()).unwrap(), a);
        }
    }
}
