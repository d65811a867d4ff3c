//! Built-in scene archetypes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ActorSpec, CameraSpec, EventSpec, PropSpec, SceneScript};
use crate::{Homography, Point, Polygon};

const DURATION: f64 = 120.0;
const WALK: f64 = 1.2;
const RUN: f64 = 3.0;
const RUNNING_SPEED: f64 = 2.0;
const COLORS: [&str; 6] = ["red", "blue", "green", "black", "white", "yellow"];
const CLOTHES: [&str; 4] = ["shirt", "jacket", "dress", "coat"];

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)]
}

fn snap(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Rounds a duration up to the half-second grid, at least half a second.
fn grid(dt: f64) -> f64 {
    ((dt * 2.0).ceil() / 2.0).max(0.5)
}

/// Waypoint list built leg by leg on a half-second grid.
#[derive(Debug, Clone)]
struct Route(Vec<(f64, Point)>);

impl Route {
    fn at(t: f64, x: f64, y: f64) -> Self {
        Route(vec![(t, Point::new(x, y))])
    }

    fn last(&self) -> (f64, Point) {
        *self.0.last().expect("route is never empty")
    }

    fn time(&self) -> f64 {
        self.last().0
    }


    fn go(mut self, x: f64, y: f64, speed: f64) -> Self {
        let (t, p) = self.last();
        let q = Point::new(x, y);
        self.0.push((t + grid(p.distance(&q) / speed), q));
        self
    }

    fn wait_until(mut self, t: f64) -> Self {
        let (t0, p) = self.last();
        if t > t0 {
            self.0.push((t, p));
        }
        self
    }

    /// Random legs inside `area` with pauses, cut off exactly at `until`.
    fn wander(mut self, rng: &mut ChaCha8Rng, area: (f64, f64, f64, f64), speed: f64, until: f64) -> Self {
        loop {
            let (t, p) = self.last();
            if t >= until {
                return self;
            }
            let pause = f64::from(rng.gen_range(0..=8u8)) * 0.5;
            if pause > 0.0 {
                if t + pause >= until {
                    return self.wait_until(until);
                }
                self.0.push((t + pause, p));
            }
            let (t, p) = self.last();
            let q = Point::new(snap(rng.gen_range(area.0..area.2)), snap(rng.gen_range(area.1..area.3)));
            let dt = grid(p.distance(&q) / speed);
            if t + dt > until {
                let r = p.lerp(&q, (until - t) / dt);
                self.0.push((until, Point::new(r.x, r.y)));
                return self;
            }
            self.0.push((t + dt, q));
        }
    }
}

struct Builder {
    script: SceneScript,
    rng: ChaCha8Rng,
}

impl Builder {
    fn new(scene_id: &str, seed: u64) -> Self {
        Self {
            script: SceneScript {
                scene_id: scene_id.into(),
                seed,
                duration: DURATION,
                cameras: Vec::new(),
                actors: Vec::new(),
                props: Vec::new(),
                events: Vec::new(),
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A camera looking at `fov` whose view origin maps to its lower corner.
    fn camera(&mut self, id: &str, fps: f64, offset: f64, fov: (f64, f64, f64, f64), pan: Option<(f64, f64)>) {
        let homography = Homography::new([[0.05, 0.004, fov.0], [0.0, 0.05, fov.1], [0.0, 0.00002, 1.0]])
            .expect("camera homography is invertible");
        self.script.cameras.push(CameraSpec {
            id: id.into(),
            frame_rate: fps,
            clock_offset: offset,
            homography,
            fov: rect(fov.0, fov.1, fov.2, fov.3),
            pan,
        });
    }

    fn prop(&mut self, id: &str, ty: &str, x: f64, y: f64) {
        self.script.props.push(PropSpec { id: id.into(), object_type: ty.into(), position: Point::new(x, y), footprint: None });
    }

    fn occluder(&mut self, id: &str, ty: &str, x0: f64, y0: f64, x1: f64, y1: f64) {
        self.script.props.push(PropSpec {
            id: id.into(),
            object_type: ty.into(),
            position: Point::new((x0 + x1) / 2.0, (y0 + y1) / 2.0),
            footprint: Some(rect(x0, y0, x1, y1)),
        });
    }

    fn actor(&mut self, id: &str, ty: &str, route: Route) {
        self.script.actors.push(ActorSpec {
            id: id.into(),
            object_type: ty.into(),
            waypoints: route.0,
            attributes: Vec::new(),
        });
    }

    /// A male or female actor with random clothing.
    fn person(&mut self, id: &str, route: Route) {
        let ty = if self.rng.gen_bool(0.5) { "male" } else { "female" };
        let mut attributes = vec![
            ("clothing-color".to_string(), Some(COLORS.choose(&mut self.rng).unwrap().to_string())),
            ("clothing-type".to_string(), Some(CLOTHES.choose(&mut self.rng).unwrap().to_string())),
        ];
        if self.rng.gen_bool(0.3) {
            attributes.push(("wearing-hat".into(), None));
        }
        if self.rng.gen_bool(0.3) {
            attributes.push(("wearing-glasses".into(), None));
        }
        self.script.actors.push(ActorSpec { id: id.into(), object_type: ty.into(), waypoints: route.0, attributes });
    }

    fn event(&mut self, pred: &str, parts: &[&str], value: Option<&str>, start: f64, end: f64) {
        self.script.events.push(EventSpec {
            predicate: pred.into(),
            participants: parts.iter().map(|p| p.to_string()).collect(),
            value: value.map(str::to_string),
            start,
            end: end.min(DURATION),
        });
    }

    fn vehicle_parts(&mut self, id: &str, color: &str) {
        self.event("vehicle-color", &[id], Some(color), 0.0, DURATION);
        for part in ["door", "trunk", "wheel", "hood"] {
            self.event(part, &[id], None, 0.0, DURATION);
        }
    }

    /// Extends routes to the end of the scene and adds walking, running
    /// and standing events for every person outside their sitting spans.
    fn finish(mut self) -> SceneScript {
        for a in &mut self.script.actors {
            let (t, p) = *a.waypoints.last().unwrap();
            if t < DURATION {
                a.waypoints.push((DURATION, p));
            }
        }
        let mut motion = Vec::new();
        for a in self.script.actors.iter().filter(|a| a.object_type == "male" || a.object_type == "female") {
            let sits: Vec<(f64, f64)> = self
                .script
                .events
                .iter()
                .filter(|e| e.predicate == "sitting" && e.participants[0] == a.id)
                .map(|e| (e.start, e.end))
                .collect();
            let mut spans: Vec<(&str, f64, f64)> = Vec::new();
            for w in a.waypoints.windows(2) {
                let (t0, t1) = (w[0].0, w[1].0);
                if sits.iter().any(|(s, e)| *s <= t0 && t1 <= *e) {
                    continue;
                }
                let speed = w[0].1.distance(&w[1].1) / (t1 - t0);
                let kind = if speed == 0.0 {
                    "standing"
                } else if speed <= RUNNING_SPEED {
                    "walking"
                } else {
                    "running"
                };
                match spans.last_mut() {
                    Some(last) if last.0 == kind && last.2 == t0 => last.2 = t1,
                    _ => spans.push((kind, t0, t1)),
                }
            }
            for (kind, s, e) in spans {
                motion.push(EventSpec { predicate: kind.into(), participants: vec![a.id.clone()], value: None, start: s, end: e });
            }
        }
        self.script.events.extend(motion);
        self.script
    }
}

/// The office, auditorium, parking lot and garden archetypes. Together and
/// individually they use every predicate category of the built-in ontology.
pub fn builtin_scenarios() -> Vec<SceneScript> {
    vec![office(), auditorium(), parking_lot(), garden()]
}

fn office() -> SceneScript {
    let mut b = Builder::new("office", 101);
    let room = (0.5, 0.5, 19.5, 13.5);
    b.camera("cam-1", 5.0, 0.0, (0.0, 0.0, 12.0, 14.0), None);
    b.camera("cam-2", 5.0, 0.1, (8.0, 0.0, 20.0, 14.0), None);
    b.occluder("T1", "table", 4.0, 5.0, 7.0, 8.0);
    b.occluder("T2", "table", 13.0, 5.0, 16.0, 8.0);
    let chairs = [("C1", 3.4, 6.5), ("C2", 7.6, 6.5), ("C3", 5.5, 4.4), ("C4", 12.4, 6.5), ("C5", 16.6, 6.5), ("C6", 14.5, 8.6)];
    for (id, x, y) in chairs {
        b.prop(id, "chair", x, y);
    }
    b.prop("BK1", "bicycle", 1.0, 1.0);
    b.event("wheel", &["BK1"], None, 0.0, DURATION);

    let sitters = [("P1", "C1", "T1", 0.5, 12.0, 12.0, 80.0), ("P2", "C2", "T1", 19.5, 12.0, 15.0, 85.0), ("P3", "C4", "T2", 10.0, 13.5, 20.0, 100.0)];
    for (p, c, t, x, y, s, e) in sitters {
        let (_, cx, cy) = chairs.iter().copied().find(|(id, ..)| *id == c).unwrap();
        let r = Route::at(0.0, x, y).wait_until(s - 12.0).go(cx, cy, WALK).wait_until(s).wait_until(e);
        let r = r.wander(&mut b.rng, room, WALK, DURATION);
        b.person(p, r);
        b.event("sitting-in", &[p, c], None, s, e);
        b.event("sitting", &[p], None, s, e);
        b.event("touching", &[p, t], None, s, e);
    }
    b.event("meeting", &["P1", "P2"], None, 20.0, 70.0);
    b.event("occluding", &["T1", "C3"], None, 0.0, DURATION);

    let r = Route::at(0.0, 2.0, 12.0).wander(&mut b.rng, room, WALK, 50.0);
    let mut k = r.0.iter().map(|(t, p)| (*t, Point::new(p.x + 0.3, p.y))).collect::<Vec<_>>();
    k.push((DURATION, k.last().unwrap().1));
    let route = r.wander(&mut b.rng, room, WALK, DURATION);
    b.person("P4", route);
    b.actor("K1", "backpack", Route(k));
    b.event("carrying", &["P4", "K1"], None, 0.0, 50.0);
    b.event("touching", &["P4", "K1"], None, 0.0, 50.0);

    let r = Route::at(0.0, 1.5, 12.0).wait_until(5.0).wander(&mut b.rng, (0.5, 11.0, 2.5, 13.0), 0.5, 105.0);
    b.person("P5", r.go(10.0, 1.0, WALK));
    b.event("loitering", &["P5"], None, 5.0, 105.0);

    let r6 = Route::at(0.0, 18.0, 2.0).wander(&mut b.rng, room, WALK, 50.0).go(10.0, 11.0, WALK).wait_until(92.0);
    let r7 = Route::at(0.0, 9.0, 2.0).wander(&mut b.rng, room, RUN, 45.0).go(11.0, 11.0, WALK).wait_until(92.0);
    let start = r6.time().max(r7.time());
    b.event("meeting", &["P6", "P7"], None, start, 92.0);
    let route = r6.wander(&mut b.rng, room, WALK, DURATION);
    b.person("P6", route);
    let route = r7.wander(&mut b.rng, room, WALK, DURATION);
    b.person("P7", route);
    b.finish()
}

fn auditorium() -> SceneScript {
    let mut b = Builder::new("auditorium", 202);
    b.camera("cam-1", 5.0, 0.0, (0.0, 0.0, 30.0, 20.0), None);
    b.camera("cam-2", 10.0, 0.05, (0.0, 12.0, 14.0, 20.0), None);
    b.occluder("T1", "table", 6.0, 16.0, 9.0, 17.0);
    b.occluder("W1", "wall", 14.0, 13.0, 15.0, 20.0);
    b.prop("BK1", "bicycle", 28.0, 1.0);
    b.event("wheel", &["BK1"], None, 0.0, DURATION);
    let mut seats = Vec::new();
    for (row, y) in [5.0, 9.0].into_iter().enumerate() {
        for k in 0..6 {
            let id = format!("C{:02}", row * 6 + k + 1);
            let x = 3.0 + 4.0 * k as f64;
            b.prop(&id, "chair", x, y);
            seats.push((id, x, y));
        }
    }

    let stage = Route::at(0.0, 7.0, 18.0).wander(&mut b.rng, (2.0, 15.0, 13.0, 19.5), 0.8, DURATION);
    b.person("S1", stage);
    b.event("occluding", &["T1", "S1"], None, 0.0, 10.0);

    for k in 0..8 {
        let id = format!("A{}", k + 1);
        let (seat, x, y) = seats[k * 3 / 2].clone();
        let r = Route::at(2.0 * k as f64, 15.0, 0.5).go(x, y, WALK);
        let s = r.time() + 1.0;
        let e = 100.0 + k as f64;
        let r = r.wait_until(s).wait_until(e).go(15.0, 0.5, WALK);
        b.person(&id, r);
        b.event("sitting-in", &[&id, &seat], None, s, e);
        b.event("sitting", &[&id], None, s, e);
        if k == 3 {
            b.actor("K1", "backpack", Route::at(6.0, 15.3, 0.5).go(x + 0.3, y, WALK));
            let arrive = s - 1.0;
            b.event("carrying", &[&id, "K1"], None, 6.0, arrive);
            b.event("touching", &["K1", &seat], None, arrive, DURATION);
        }
    }
    b.event("meeting", &["A1", "A2"], None, 30.0, 90.0);
    let r = Route::at(0.0, 16.0, 1.0).wait_until(10.0).wander(&mut b.rng, (15.0, 0.5, 19.0, 3.0), 0.5, 110.0);
    b.person("A9", r);
    b.event("loitering", &["A9"], None, 10.0, 110.0);
    let r = Route::at(30.0, 29.0, 0.5).go(17.0, 14.0, RUN).wander(&mut b.rng, (16.0, 13.0, 29.0, 19.0), WALK, DURATION);
    b.person("A10", r);
    b.event("occluding", &["W1", "A10"], None, 40.0, 45.0);
    b.finish()
}

fn parking_lot() -> SceneScript {
    let mut b = Builder::new("parking-lot", 303);
    b.camera("cam-1", 5.0, 0.0, (0.0, 0.0, 21.0, 30.0), None);
    b.camera("cam-2", 5.0, 0.1, (19.0, 0.0, 40.0, 30.0), None);
    b.camera("cam-3", 5.0, 0.0, (0.0, 0.0, 40.0, 30.0), Some((0.05, 0.0)));
    let lot = (1.0, 1.0, 39.0, 29.0);
    let cars = [("V1", 5.0, 5.0, "red"), ("V2", 12.0, 5.0, "white"), ("V3", 5.0, 20.0, "black")];
    for (id, x, y, color) in cars {
        b.occluder(id, "car", x - 2.0, y - 1.0, x + 2.0, y + 1.0);
        b.vehicle_parts(id, color);
    }
    b.prop("BK1", "bicycle", 35.0, 2.0);
    b.event("wheel", &["BK1"], None, 0.0, DURATION);

    let v4 = Route::at(0.0, 38.0, 28.0).go(25.0, 20.0, 2.5).go(25.0, 12.0, 2.0);
    let parked = v4.time();
    b.actor("V4", "car", v4);
    b.vehicle_parts("V4", "blue");
    b.event("door-open", &["V4"], None, parked + 1.0, parked + 4.0);
    let r = Route::at(parked + 1.0, 25.0, 13.2).wait_until(parked + 4.0).go(26.0, 15.0, WALK);
    let r = r.wander(&mut b.rng, lot, WALK, DURATION);
    b.person("D3", r);
    b.event("exiting", &["D3", "V4"], None, parked + 1.0, parked + 4.0);

    let r = Route::at(0.0, 20.0, 29.0).wait_until(8.0).go(5.0, 6.5, WALK);
    let a = r.time();
    let r = r.wait_until(a + 3.0).go(5.0, 5.0, 0.5);
    b.person("D1", r);
    b.event("door-open", &["V1"], None, a, a + 3.0);
    b.event("entering", &["D1", "V1"], None, a, a + 3.0);
    b.event("inside", &["D1", "V1"], None, a + 3.0 + 3.0, DURATION);

    let r = Route::at(0.0, 30.0, 1.0).go(14.4, 5.0, WALK);
    let a = r.time();
    let k = Route(r.0.iter().map(|(t, p)| (*t, Point::new(p.x + 0.3, p.y))).collect()).go(12.0, 5.0, 0.5);
    b.actor("K1", "backpack", k);
    b.event("carrying", &["D2", "K1"], None, 0.0, a);
    b.event("touching", &["D2", "V2"], None, a, a + 4.0);
    b.event("inside", &["K1", "V2"], None, a + 6.0, DURATION);
    let r = r.wait_until(a + 4.0).wander(&mut b.rng, lot, WALK, DURATION);
    b.person("D2", r);

    let r4 = Route::at(0.0, 30.0, 25.0).wait_until(5.0).wander(&mut b.rng, (29.0, 24.0, 32.0, 27.0), 0.5, 115.0);
    b.person("D4", r4);
    b.event("loitering", &["D4"], None, 5.0, 115.0);
    let r5 = Route::at(0.0, 2.0, 28.0).wander(&mut b.rng, (1.0, 15.0, 20.0, 29.0), WALK, 30.0).go(33.0, 24.0, WALK);
    let met = r5.time();
    b.event("meeting", &["D4", "D5"], None, met, met + 30.0);
    b.event("occluding", &["V3", "D5"], None, 0.0, 4.0);
    let route = r5.wait_until(met + 30.0).wander(&mut b.rng, lot, WALK, DURATION);
    b.person("D5", route);
    let r6 = Route::at(20.0, 1.0, 15.0).go(39.0, 15.0, RUN).go(20.0, 28.0, RUN).wander(&mut b.rng, lot, WALK, DURATION);
    b.person("D6", r6);
    b.finish()
}

fn garden() -> SceneScript {
    let mut b = Builder::new("garden", 404);
    b.camera("cam-1", 5.0, 0.0, (0.0, 0.0, 26.0, 20.0), None);
    b.camera("cam-2", 10.0, 0.1, (24.0, 0.0, 50.0, 20.0), None);
    b.occluder("W1", "wall", 24.0, 8.0, 26.0, 12.0);
    b.prop("C1", "chair", 10.0, 18.0);
    b.prop("C2", "chair", 12.0, 18.0);
    b.prop("BK1", "bicycle", 48.0, 1.0);
    b.event("wheel", &["BK1"], None, 0.0, DURATION);
    let field = (1.0, 1.0, 49.0, 19.0);

    for (a, b_, ball, (ax, ay), (bx, by), start, end) in [
        ("G1", "G2", "B1", (5.0, 10.0), (13.0, 10.0), 10.0, 70.0),
        ("G3", "G4", "B2", (35.0, 5.0), (43.0, 5.0), 40.0, 100.0),
    ] {
        let ra = Route::at(0.0, ax - 3.0, 2.0).wait_until(start - 8.0).go(ax, ay, WALK);
        let arrival = ra.time();
        let ball_route = Route(ra.0.iter().map(|(t, p)| (*t, Point::new(p.x + 0.3, p.y))).collect());
        let ra = ra.wait_until(end + 2.0).wander(&mut b.rng, field, WALK, DURATION);
        let rb = Route::at(0.0, bx + 3.0, 18.0).go(bx, by, WALK).wait_until(end + 2.0);
        let rb = rb.wander(&mut b.rng, field, WALK, DURATION);
        b.event("carrying", &[a, ball], None, 0.0, arrival);
        b.event("game", &[a, b_], None, start, end);
        let mut ball_route = ball_route.wait_until(start);
        let (mut from, mut to) = ((a, ax + 0.3), (b_, bx - 0.3));
        let mut t = start;
        while t + 2.5 <= end {
            b.event("throwing", &[from.0, ball], None, t, t + 0.5);
            b.event("catching", &[to.0, ball], None, t + 2.0, t + 2.5);
            ball_route = ball_route.wait_until(t).go(to.1, ay, 4.0).wait_until(t + 4.0);
            std::mem::swap(&mut from, &mut to);
            t += 4.0;
        }
        b.person(a, ra);
        b.person(b_, rb);
        b.actor(ball, "ball", ball_route);
    }

    let mut r = Route::at(0.0, 2.0, 1.0);
    for _ in 0..2 {
        r = r.go(48.0, 1.0, RUN).go(48.0, 19.0, RUN).go(2.0, 19.0, RUN).go(2.0, 1.0, RUN);
    }
    let route = r.wander(&mut b.rng, field, WALK, DURATION);
    b.person("G5", route);
    b.event("occluding", &["W1", "G5"], None, 0.0, 2.0);

    let r = Route::at(0.0, 20.0, 15.0).go(10.0, 17.6, WALK).wait_until(20.0).wait_until(90.0);
    let route = r.wander(&mut b.rng, field, WALK, DURATION);
    b.person("G6", route);
    b.event("sitting-in", &["G6", "C1"], None, 20.0, 90.0);
    b.event("sitting", &["G6"], None, 20.0, 90.0);
    b.event("touching", &["G6", "C1"], None, 20.0, 90.0);

    let r7 = Route::at(0.0, 45.0, 18.0).go(30.0, 16.0, WALK).wait_until(80.0).wander(&mut b.rng, field, WALK, DURATION);
    let r8 = Route::at(10.0, 20.0, 1.0).go(31.0, 16.0, WALK).wait_until(80.0);
    b.event("meeting", &["G7", "G8"], None, 30.0, 80.0);
    let r8 = r8.go(18.0, 12.0, WALK);
    let settled = r8.time();
    let r8 = r8.wander(&mut b.rng, (17.0, 11.0, 19.0, 13.0), 0.4, 118.0);
    b.event("loitering", &["G8"], None, settled, 118.0);
    b.person("G7", r7);
    b.person("G8", r8);
    b.finish()
}
