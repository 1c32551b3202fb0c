//! Ground-truth head (and controller) motion in the engine frame.
//!
//! Walks are built from straight legs with a cycloid speed profile (zero
//! speed at both ends, average `speed`), so direction reversals and corners
//! happen at rest. Heading follows the leg and switches over a fixed turn
//! window centred on each leg boundary. On top of that the head bobs 2 cm at
//! step frequency and nods and sways slightly.

use super::SimError;
use crate::eval::InteractionEvent;
use crate::geom::{pitch_rotation, roll_rotation, wrap_angle, yaw_rotation, Pose};
use crate::trajectory::Trajectory;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Side of the square walkable area, meters.
pub const AREA_SIDE: f64 = 7.0;
/// Duration of a heading change at a leg boundary, seconds.
pub const TURN_WINDOW: f64 = 0.5;
const STEP_HZ: f64 = 1.8;
const BOB_AMPLITUDE: f64 = 0.02;
const SURGE_AMPLITUDE: f64 = 0.1;
/// Where the fist-bump partners stop, meters from the centre along x.
const MEET_OFFSET: f64 = 0.4;
const HAND_REST: [f64; 3] = [0.2, -0.45, 0.25];
const EXTEND: f64 = 0.6;
const HOLD: f64 = 0.2;
const STAND: f64 = 2.0 * EXTEND + HOLD;
pub const FISTBUMP_CYCLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    /// Back and forth along `x ∈ [0, extent]`.
    Line,
    /// Circle of radius `extent` around the origin, facing the centre.
    Circle,
    /// Square of side `extent` centred on the origin, facing the direction
    /// of travel.
    Patrol,
    /// Two users walking mirrored loops and meeting in the centre for a fist
    /// bump, four times.
    Fistbump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSpec {
    pub kind: MotionKind,
    /// Line length, circle radius, square side, or loop size (fistbump).
    pub extent: f64,
    /// Average walking speed, m/s.
    pub speed: f64,
    pub duration: f64,
    pub rate: f64,
    pub head_height: f64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self {
            kind: MotionKind::Circle,
            extent: 2.5,
            speed: 1.0,
            duration: 60.0,
            rate: 100.0,
            head_height: 1.7,
        }
    }
}

impl MotionSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidSpec(what.to_string()));
        for (name, v) in [
            ("extent", self.extent),
            ("speed", self.speed),
            ("duration", self.duration),
            ("rate", self.rate),
            ("head_height", self.head_height),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("motion {name} must be positive and finite, got {v}"));
            }
        }
        let span = match self.kind {
            MotionKind::Line | MotionKind::Patrol => self.extent,
            MotionKind::Circle => 2.0 * self.extent,
            MotionKind::Fistbump => 2.0 * (MEET_OFFSET + 2.0 * self.extent / 3.0),
        };
        if span > AREA_SIDE + 1e-12 {
            return bad(&format!(
                "{:?} with extent {} spans {span:.2} m, more than the {AREA_SIDE} m area",
                self.kind, self.extent
            ));
        }
        if self.kind == MotionKind::Fistbump {
            let needed = fistbump_schedule(self).cycle_end;
            if self.duration < needed {
                return bad(&format!(
                    "fistbump needs at least {needed:.2} s for {FISTBUMP_CYCLES} interactions"
                ));
            }
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration * self.rate + 1e-9).floor() as usize + 1
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.sample_count()).map(|k| k as f64 / self.rate)
    }
}

/// One tracked person: head always, controllers in the fistbump scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct UserMotion {
    pub head: Trajectory,
    pub left_hand: Option<Trajectory>,
    pub right_hand: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMotion {
    pub users: Vec<UserMotion>,
    /// Scripted contact instants and points (fistbump only), on frame times.
    pub contacts: Vec<InteractionEvent>,
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Walk { from: [f64; 2], to: [f64; 2] },
    Stand { at: [f64; 2], heading: f64 },
}

impl Segment {
    fn heading(&self) -> f64 {
        match *self {
            // forward +Z rotated by yaw ψ is (sin ψ, 0, cos ψ)
            Segment::Walk { from, to } => (to[0] - from[0]).atan2(to[1] - from[1]),
            Segment::Stand { heading, .. } => heading,
        }
    }
}

/// Piecewise walk: segments with start times, plus an optional tail stand.
struct Path {
    segments: Vec<(f64, f64, Segment)>,
}

impl Path {
    fn new() -> Self {
        Self { segments: Vec::new() }
    }

    fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.1)
    }

    fn push(&mut self, duration: f64, seg: Segment) {
        let t0 = self.end();
        self.segments.push((t0, t0 + duration, seg));
    }

    fn walk(&mut self, from: [f64; 2], to: [f64; 2], speed: f64) {
        let len = (to[0] - from[0]).hypot(to[1] - from[1]);
        self.push(len / speed, Segment::Walk { from, to });
    }

    fn index_at(&self, t: f64) -> usize {
        self.segments
            .partition_point(|s| s.1 <= t)
            .min(self.segments.len() - 1)
    }

    /// Horizontal position `(x, z)`.
    fn position(&self, t: f64) -> [f64; 2] {
        let (t0, t1, seg) = self.segments[self.index_at(t)];
        match seg {
            Segment::Stand { at, .. } => at,
            Segment::Walk { from, to } => {
                let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                let s = cycloid(u);
                [from[0] + (to[0] - from[0]) * s, from[1] + (to[1] - from[1]) * s]
            }
        }
    }

    /// Heading with constant-rate turns over [`TURN_WINDOW`] centred on each
    /// boundary where it changes.
    fn heading(&self, t: f64) -> f64 {
        let k = self.index_at(t);
        let (t0, t1, seg) = self.segments[k];
        let half = 0.5 * TURN_WINDOW;
        if k > 0 && t < t0 + half {
            let prev = self.segments[k - 1].2.heading();
            return turn(prev, seg.heading(), (t - (t0 - half)) / TURN_WINDOW);
        }
        if k + 1 < self.segments.len() && t > t1 - half {
            let next = self.segments[k + 1].2.heading();
            return turn(seg.heading(), next, (t - (t1 - half)) / TURN_WINDOW);
        }
        seg.heading()
    }
}

fn turn(from: f64, to: f64, s: f64) -> f64 {
    wrap_angle(from + wrap_angle(to - from) * s.clamp(0.0, 1.0))
}

/// Fraction of a leg covered at normalized time `u`: zero speed at both
/// ends, exact endpoints.
fn cycloid(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        (u - (2.0 * PI * u).sin() / (2.0 * PI)).clamp(0.0, 1.0)
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn head_pose(xz: [f64; 2], heading: f64, t: f64, height: f64) -> Pose {
    let y = height + BOB_AMPLITUDE * (2.0 * PI * STEP_HZ * t).sin();
    let pitch = 0.08 * (2.0 * PI * 0.35 * t).sin();
    let roll = 0.03 * (2.0 * PI * 0.9 * t + 0.5).sin();
    Pose::new(
        yaw_rotation(heading) * pitch_rotation(pitch) * roll_rotation(roll),
        Vector3::new(xz[0], y, xz[1]),
    )
}

fn grid(spec: &MotionSpec, f: impl Fn(f64) -> Pose) -> Trajectory {
    Trajectory::from_poses(0.0, spec.rate, spec.times().map(f))
}

fn line(spec: &MotionSpec) -> Trajectory {
    let (a, b) = ([0.0, 0.0], [spec.extent, 0.0]);
    let mut path = Path::new();
    let mut forward = true;
    while path.end() <= spec.duration {
        if forward {
            path.walk(a, b, spec.speed);
        } else {
            path.walk(b, a, spec.speed);
        }
        forward = !forward;
    }
    grid(spec, |t| head_pose(path.position(t), path.heading(t), t, spec.head_height))
}

fn circle(spec: &MotionSpec) -> Trajectory {
    let r = spec.extent;
    let w = 2.0 * PI * STEP_HZ;
    grid(spec, |t| {
        // arc length with a speed surge at step frequency
        let s = spec.speed * t + SURGE_AMPLITUDE / w * (1.0 - (w * t).cos());
        let th = s / r;
        let (sin, cos) = th.sin_cos();
        let heading = (-cos).atan2(-sin);
        head_pose([r * cos, r * sin], heading, t, spec.head_height)
    })
}

fn patrol(spec: &MotionSpec) -> Trajectory {
    let h = 0.5 * spec.extent;
    let corners = [[-h, -h], [h, -h], [h, h], [-h, h]];
    let mut path = Path::new();
    let mut k = 0;
    while path.end() <= spec.duration {
        path.walk(corners[k % 4], corners[(k + 1) % 4], spec.speed);
        k += 1;
    }
    grid(spec, |t| head_pose(path.position(t), path.heading(t), t, spec.head_height))
}

struct FistbumpSchedule {
    path: Path,
    /// Contact times snapped to the frame grid.
    contacts: Vec<f64>,
    cycle_end: f64,
}

/// User 1's plan (left half of the room). User 2 is the same plan turned by
/// 180° about the vertical axis through the centre.
fn fistbump_schedule(spec: &MotionSpec) -> FistbumpSchedule {
    let b = 2.0 * spec.extent / 3.0;
    let a = MEET_OFFSET + b;
    let start = [-a, 0.0];
    let meet = [-MEET_OFFSET, 0.0];
    let loop_pts = [[-a, -b], [-a - b, -b], [-a - b, 0.0], start];
    let mut path = Path::new();
    let mut contacts = Vec::new();
    for _ in 0..FISTBUMP_CYCLES {
        let mut at = start;
        for p in loop_pts {
            path.walk(at, p, spec.speed);
            at = p;
        }
        path.walk(start, meet, spec.speed);
        let t_stand = path.end();
        contacts.push(((t_stand + EXTEND) * spec.rate).round() / spec.rate);
        path.push(STAND, Segment::Stand {
            at: meet,
            heading: FRAC_PI_2,
        });
        path.walk(meet, start, spec.speed);
    }
    let cycle_end = path.end();
    path.push(f64::INFINITY, Segment::Stand {
        at: start,
        heading: -FRAC_PI_2,
    });
    FistbumpSchedule {
        path,
        contacts,
        cycle_end,
    }
}

/// Blend weight of the reaching hand: 0 at rest, 1 at the contact point.
fn reach(t: f64, contacts: &[f64]) -> f64 {
    contacts
        .iter()
        .map(|&tc| {
            if t < tc - EXTEND || t > tc + HOLD + EXTEND {
                0.0
            } else if t < tc {
                smoothstep((t - (tc - EXTEND)) / EXTEND)
            } else if t <= tc + HOLD {
                1.0
            } else {
                1.0 - smoothstep((t - tc - HOLD) / EXTEND)
            }
        })
        .fold(0.0, f64::max)
}

fn fistbump(spec: &MotionSpec) -> GeneratedMotion {
    let plan = fistbump_schedule(spec);
    let contact = Vector3::new(0.0, spec.head_height + HAND_REST[1], 0.0);
    let heads = grid(spec, |t| {
        head_pose(plan.path.position(t), plan.path.heading(t), t, spec.head_height)
    });
    let hand = |side: f64, reaching: bool| {
        let head = &heads;
        Trajectory::from_poses(
            0.0,
            spec.rate,
            head.iter().map(|s| {
                let yaw = yaw_rotation(plan.path.heading(s.t));
                let offset = Vector3::new(side * HAND_REST[0], HAND_REST[1], HAND_REST[2]);
                let rest = Vector3::new(s.pose.translation.x, spec.head_height, s.pose.translation.z) + yaw * offset;
                let w = if reaching { reach(s.t, &plan.contacts) } else { 0.0 };
                let p = if w >= 1.0 { contact } else { rest + (contact - rest) * w };
                Pose::new(yaw, p)
            }),
        )
    };
    let user1 = UserMotion {
        head: heads.clone(),
        left_hand: Some(hand(-1.0, false)),
        right_hand: Some(hand(1.0, true)),
    };
    let turn = Pose::from_rotation(yaw_rotation(PI));
    let mirror = |tr: &Trajectory| tr.map_poses(|p| turn.compose(p));
    let user2 = UserMotion {
        head: mirror(&user1.head),
        left_hand: user1.left_hand.as_ref().map(mirror),
        right_hand: user1.right_hand.as_ref().map(mirror),
    };
    GeneratedMotion {
        users: vec![user1, user2],
        contacts: plan
            .contacts
            .iter()
            .map(|&time| InteractionEvent {
                time,
                point: [contact.x, contact.y, contact.z],
            })
            .collect(),
    }
}

/// Generates ground truth for `spec`.
pub fn gen_motion(spec: &MotionSpec) -> Result<GeneratedMotion, SimError> {
    spec.validate()?;
    let single = |head| GeneratedMotion {
        users: vec![UserMotion {
            head,
            left_hand: None,
            right_hand: None,
        }],
        contacts: Vec::new(),
    };
    Ok(match spec.kind {
        MotionKind::Line => single(line(spec)),
        MotionKind::Circle => single(circle(spec)),
        MotionKind::Patrol => single(patrol(spec)),
        MotionKind::Fistbump => fistbump(spec),
    })
}
