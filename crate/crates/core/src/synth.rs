//! Synthetic ego-relative trajectories from kinematic behavior templates.
//!
//! The ego-vehicle drives straight along the lane centerline at [`EGO_SPEED`].
//! Agents follow closed-form motion in the ego frame: longitudinal position
//! with constant relative acceleration (optionally after a hold phase),
//! lateral position with constant lateral speed. `y < 0` is left of the ego.
//! Heading `d` is the angle of the agent's world-frame velocity to the road
//! centerline.
//!
//! The templates are plain readings of the behavior names, not measured
//! BLVD statistics. OFL and OFR start with a parallel-driving phase that is
//! indistinguishable from PDIL and PDIR (switch off with `overlap = false`).

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{AgentKind, LabelMap, Trajectory, TrajectoryPoint, MIN_TRAJECTORY_LEN};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Ego-vehicle speed in m/s.
pub const EGO_SPEED: f64 = 10.0;

/// Measurement noise at `noise = 1`: x, y, z in m, d in rad.
const NOISE_SIGMA: [f64; 4] = [0.1, 0.1, 0.02, 0.02];

type Range = (f64, f64);

/// Parameter ranges of one template; each trajectory draws uniformly.
#[derive(Clone, Copy, Debug)]
struct Profile {
    x0: Range,
    /// Relative longitudinal speed at t = 0.
    vx: Range,
    /// Relative longitudinal acceleration, applied after the hold phase.
    ax: Range,
    hold: Range,
    y0: Range,
    vy: Range,
    /// World-frame speed never drops below zero (the agent stops).
    stops: bool,
}

const fn fixed(v: f64) -> Range {
    (v, v)
}

const BASE: Profile = Profile {
    x0: fixed(0.0),
    vx: fixed(0.0),
    ax: fixed(0.0),
    hold: fixed(0.0),
    y0: (-0.3, 0.3),
    vy: fixed(0.0),
    stops: false,
};

pub struct Template {
    pub name: &'static str,
    pub kind: AgentKind,
    pub description: &'static str,
    profile: Profile,
    check: fn(&Motion) -> std::result::Result<(), String>,
}

impl std::fmt::Debug for Template {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Template").field("name", &self.name).field("kind", &self.kind).finish()
    }
}

/// Noiseless positions and finite-difference speeds of a generated track.
pub struct Motion {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    /// `(x[i+1] − x[i]) / dt`.
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

fn diffs(v: &[f64], dt: f64) -> Vec<f64> {
    v.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn ensure(ok: bool, msg: &str) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn in_own_lane(m: &Motion) -> std::result::Result<(), String> {
    ensure(m.y.iter().all(|y| y.abs() < 0.5), "lateral offset leaves the ego lane")
}

fn passes(m: &Motion, left: bool) -> std::result::Result<(), String> {
    let side = |y: f64| if left { y < -1.0 } else { y > 1.0 };
    ensure(m.x[0] < 0.0 && *m.x.last().unwrap() > 0.0, "does not pass the ego-vehicle")?;
    let crossing = m.x.windows(2).position(|w| w[0] < 0.0 && w[1] >= 0.0);
    match crossing {
        Some(i) => ensure(side(m.y[i]) && side(m.y[i + 1]), "passes on the wrong side"),
        None => Err("x never crosses zero".into()),
    }
}

fn parallel(m: &Motion, left: bool) -> std::result::Result<(), String> {
    let lane = |y: f64| if left { (-5.0..-2.0).contains(&y) } else { (2.0..5.0).contains(&y) };
    ensure(m.y.iter().all(|&y| lane(y)), "not in the neighboring lane")?;
    ensure(m.vx.iter().all(|v| v.abs() <= 0.5), "relative speed too large for parallel driving")
}

fn away(m: &Motion, left: bool) -> std::result::Result<(), String> {
    ensure(m.y[0].abs() < 0.5, "does not start in the ego lane")?;
    ensure(m.vx.iter().all(|&v| v > 0.0), "does not pull away")?;
    if left {
        ensure(strictly_decreasing(&m.y), "does not move left")
    } else {
        ensure(strictly_increasing(&m.y), "does not move right")
    }
}

fn cut_in(m: &Motion, left: bool) -> std::result::Result<(), String> {
    ensure(m.x.iter().all(|&x| x > 0.0), "not ahead of the ego-vehicle")?;
    if left {
        ensure(m.y[0] < -2.0 && strictly_increasing(&m.y), "does not come in from the left")
    } else {
        ensure(m.y[0] > 2.0 && strictly_decreasing(&m.y), "does not come in from the right")
    }
}

fn crossing(m: &Motion, to_right: bool) -> std::result::Result<(), String> {
    if to_right {
        ensure(strictly_increasing(&m.y), "does not cross left to right")
    } else {
        ensure(strictly_decreasing(&m.y), "does not cross right to left")
    }
}

/// World-frame longitudinal speed from a relative one.
fn world(vx: f64) -> f64 {
    vx + EGO_SPEED
}

static TEMPLATES: [Template; 26] = [
    Template {
        name: "OFL",
        kind: AgentKind::Vehicle,
        description: "overtaking from left",
        profile: Profile {
            x0: (-3.0, -1.0),
            vx: (-0.3, 0.3),
            ax: (2.5, 3.5),
            hold: (0.8, 1.2),
            y0: (-3.8, -3.2),
            ..BASE
        },
        check: |m| passes(m, true),
    },
    Template {
        name: "OFR",
        kind: AgentKind::Vehicle,
        description: "overtaking from right",
        profile: Profile {
            x0: (-3.0, -1.0),
            vx: (-0.3, 0.3),
            ax: (2.5, 3.5),
            hold: (0.8, 1.2),
            y0: (3.2, 3.8),
            ..BASE
        },
        check: |m| passes(m, false),
    },
    Template {
        name: "SD",
        kind: AgentKind::Vehicle,
        description: "straight decelerating",
        profile: Profile {
            x0: (15.0, 28.0),
            vx: (-2.0, -1.0),
            ax: (-1.2, -0.6),
            ..BASE
        },
        check: |m| {
            in_own_lane(m)?;
            ensure(strictly_decreasing(&m.vx), "relative speed does not decrease")
        },
    },
    Template {
        name: "DATL",
        kind: AgentKind::Vehicle,
        description: "driving away to left",
        profile: Profile {
            x0: (5.0, 20.0),
            vx: (1.0, 3.0),
            vy: (-1.6, -1.0),
            ..BASE
        },
        check: |m| away(m, true),
    },
    Template {
        name: "DATR",
        kind: AgentKind::Vehicle,
        description: "driving away to right",
        profile: Profile {
            x0: (5.0, 20.0),
            vx: (1.0, 3.0),
            vy: (1.0, 1.6),
            ..BASE
        },
        check: |m| away(m, false),
    },
    Template {
        name: "DIFL",
        kind: AgentKind::Vehicle,
        description: "driving in from left",
        profile: Profile {
            x0: (8.0, 25.0),
            vx: (-2.0, -0.5),
            y0: (-3.8, -3.2),
            vy: (1.0, 1.6),
            ..BASE
        },
        check: |m| cut_in(m, true),
    },
    Template {
        name: "DIFR",
        kind: AgentKind::Vehicle,
        description: "driving in from right",
        profile: Profile {
            x0: (8.0, 25.0),
            vx: (-2.0, -0.5),
            y0: (3.2, 3.8),
            vy: (-1.6, -1.0),
            ..BASE
        },
        check: |m| cut_in(m, false),
    },
    Template {
        name: "SA",
        kind: AgentKind::Vehicle,
        description: "straight accelerating",
        profile: Profile {
            x0: (8.0, 20.0),
            vx: (1.5, 2.5),
            ax: (1.5, 3.0),
            ..BASE
        },
        check: |m| {
            in_own_lane(m)?;
            ensure(strictly_increasing(&m.vx), "relative speed does not increase")
        },
    },
    Template {
        name: "USD",
        kind: AgentKind::Vehicle,
        description: "uniformly straight driving",
        profile: Profile {
            x0: (8.0, 30.0),
            ..BASE
        },
        check: |m| {
            in_own_lane(m)?;
            ensure(m.vx.iter().all(|&v| v == 0.0), "relative position changes")
        },
    },
    Template {
        name: "PDIL",
        kind: AgentKind::Vehicle,
        description: "parallel driving in left",
        profile: Profile {
            x0: (-4.0, 2.0),
            vx: (-0.3, 0.3),
            y0: (-3.8, -3.2),
            ..BASE
        },
        check: |m| parallel(m, true),
    },
    Template {
        name: "PDIR",
        kind: AgentKind::Vehicle,
        description: "parallel driving in right",
        profile: Profile {
            x0: (-4.0, 2.0),
            vx: (-0.3, 0.3),
            y0: (3.2, 3.8),
            ..BASE
        },
        check: |m| parallel(m, false),
    },
    Template {
        name: "S",
        kind: AgentKind::Vehicle,
        description: "stopping",
        profile: Profile {
            x0: (35.0, 50.0),
            // world speed 1..3 m/s braking at 2..4 m/s²
            vx: (-9.0, -7.0),
            ax: (-4.0, -2.0),
            stops: true,
            ..BASE
        },
        check: |m| {
            in_own_lane(m)?;
            // finite differences of a stopped agent carry rounding noise
            ensure(m.vx.windows(2).all(|w| w[1] <= w[0] + 1e-9), "relative speed increases")?;
            let last = *m.vx.last().unwrap();
            ensure((last + EGO_SPEED).abs() < 1e-9, "agent has not stopped in the world frame")
        },
    },
    Template {
        name: "O",
        kind: AgentKind::Vehicle,
        description: "others (crossing traffic)",
        profile: Profile {
            x0: (15.0, 30.0),
            vx: fixed(-EGO_SPEED),
            y0: (-10.0, -6.0),
            vy: (3.0, 5.0),
            ..BASE
        },
        check: |m| ensure(m.vy.iter().all(|&v| v >= 2.0), "not crossing"),
    },
    Template {
        name: "ped_cross_ltr",
        kind: AgentKind::Pedestrian,
        description: "crossing left to right",
        profile: Profile {
            x0: (8.0, 25.0),
            vx: fixed(-EGO_SPEED),
            y0: (-6.0, -3.0),
            vy: (1.0, 1.8),
            ..BASE
        },
        check: |m| crossing(m, true),
    },
    Template {
        name: "ped_cross_rtl",
        kind: AgentKind::Pedestrian,
        description: "crossing right to left",
        profile: Profile {
            x0: (8.0, 25.0),
            vx: fixed(-EGO_SPEED),
            y0: (3.0, 6.0),
            vy: (-1.8, -1.0),
            ..BASE
        },
        check: |m| crossing(m, false),
    },
    Template {
        name: "ped_walk_left",
        kind: AgentKind::Pedestrian,
        description: "walking along the left side",
        profile: Profile {
            x0: (10.0, 35.0),
            vx: (-8.5, -8.0),
            y0: (-7.0, -5.0),
            ..BASE
        },
        check: |m| ensure(m.vx.iter().all(|&v| world(v) > 0.5) && m.y[0] < 0.0, "not walking on the left"),
    },
    Template {
        name: "ped_walk_right",
        kind: AgentKind::Pedestrian,
        description: "walking along the right side",
        profile: Profile {
            x0: (10.0, 35.0),
            vx: (-8.5, -8.0),
            y0: (5.0, 7.0),
            ..BASE
        },
        check: |m| ensure(m.vx.iter().all(|&v| world(v) > 0.5) && m.y[0] > 0.0, "not walking on the right"),
    },
    Template {
        name: "ped_stand_left",
        kind: AgentKind::Pedestrian,
        description: "standing on the left side",
        profile: Profile {
            x0: (10.0, 35.0),
            vx: fixed(-EGO_SPEED),
            y0: (-7.0, -5.0),
            ..BASE
        },
        check: |m| ensure(m.vx.iter().all(|&v| world(v).abs() < 1e-9) && m.y[0] < 0.0, "not standing on the left"),
    },
    Template {
        name: "ped_stand_right",
        kind: AgentKind::Pedestrian,
        description: "standing on the right side",
        profile: Profile {
            x0: (10.0, 35.0),
            vx: fixed(-EGO_SPEED),
            y0: (5.0, 7.0),
            ..BASE
        },
        check: |m| ensure(m.vx.iter().all(|&v| world(v).abs() < 1e-9) && m.y[0] > 0.0, "not standing on the right"),
    },
    Template {
        name: "rider_cross_ltr",
        kind: AgentKind::Rider,
        description: "crossing left to right",
        profile: Profile {
            x0: (10.0, 30.0),
            vx: fixed(-EGO_SPEED),
            y0: (-8.0, -5.0),
            vy: (3.0, 5.0),
            ..BASE
        },
        check: |m| crossing(m, true),
    },
    Template {
        name: "rider_cross_rtl",
        kind: AgentKind::Rider,
        description: "crossing right to left",
        profile: Profile {
            x0: (10.0, 30.0),
            vx: fixed(-EGO_SPEED),
            y0: (5.0, 8.0),
            vy: (-5.0, -3.0),
            ..BASE
        },
        check: |m| crossing(m, false),
    },
    Template {
        name: "rider_ride_left",
        kind: AgentKind::Rider,
        description: "riding along the left side",
        profile: Profile {
            x0: (5.0, 30.0),
            vx: (-7.0, -4.0),
            y0: (-6.0, -4.5),
            ..BASE
        },
        check: |m| ensure(m.y.iter().all(|&y| y < -4.0), "not on the left"),
    },
    Template {
        name: "rider_ride_right",
        kind: AgentKind::Rider,
        description: "riding along the right side",
        profile: Profile {
            x0: (5.0, 30.0),
            vx: (-7.0, -4.0),
            y0: (4.5, 6.0),
            ..BASE
        },
        check: |m| ensure(m.y.iter().all(|&y| y > 4.0), "not on the right"),
    },
    Template {
        name: "rider_stop",
        kind: AgentKind::Rider,
        description: "stopping on the right side",
        profile: Profile {
            x0: (30.0, 45.0),
            vx: (-9.0, -8.0),
            ax: (-4.0, -2.5),
            y0: (4.5, 6.0),
            stops: true,
            ..BASE
        },
        check: |m| {
            let last = *m.vx.last().unwrap();
            ensure((last + EGO_SPEED).abs() < 1e-9, "rider has not stopped")
        },
    },
    Template {
        name: "rider_merge_left",
        kind: AgentKind::Rider,
        description: "merging in from the left",
        profile: Profile {
            x0: (5.0, 30.0),
            vx: (-7.0, -4.0),
            y0: (-6.0, -4.0),
            vy: (1.2, 2.0),
            ..BASE
        },
        check: |m| ensure(strictly_increasing(&m.y) && m.y[0] < 0.0, "not merging from the left"),
    },
    Template {
        name: "rider_merge_right",
        kind: AgentKind::Rider,
        description: "merging in from the right",
        profile: Profile {
            x0: (5.0, 30.0),
            vx: (-7.0, -4.0),
            y0: (4.0, 6.0),
            vy: (-2.0, -1.2),
            ..BASE
        },
        check: |m| ensure(strictly_decreasing(&m.y) && m.y[0] > 0.0, "not merging from the right"),
    },
];

pub fn templates() -> &'static [Template] {
    &TEMPLATES
}

pub fn template(name: &str) -> Option<&'static Template> {
    TEMPLATES.iter().find(|t| t.name == name)
}

/// Label map covering every template, in catalog order.
pub fn label_map() -> LabelMap {
    LabelMap::new(TEMPLATES.iter().map(|t| t.name.to_string()).collect()).expect("template names are unique")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Trajectories per template name.
    pub counts: BTreeMap<String, usize>,
    /// Points per trajectory.
    pub length: usize,
    /// Seconds between frames.
    pub frame_period: f64,
    /// Multiplier on the per-channel measurement noise.
    pub noise: f64,
    pub seed: u64,
    /// Give OFL/OFR a parallel-driving phase shared with PDIL/PDIR.
    pub overlap: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            counts: BTreeMap::new(),
            length: 30,
            frame_period: 0.1,
            noise: 1.0,
            seed: 0,
            overlap: true,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < MIN_TRAJECTORY_LEN {
            return Err(Error::Config(format!(
                "trajectory length {} is below the minimum of {MIN_TRAJECTORY_LEN}",
                self.length
            )));
        }
        if !(self.frame_period > 0.0 && self.frame_period.is_finite()) {
            return Err(Error::Config("frame_period must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        if let Some(name) = self.counts.keys().find(|n| template(n).is_none()) {
            return Err(Error::Config(format!("unknown behavior class {name:?}")));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }
}

struct Draw {
    x0: f64,
    vx: f64,
    ax: f64,
    hold: f64,
    y0: f64,
    vy: f64,
}

fn uniform(rng: &mut impl Rng, (lo, hi): Range) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn draw(p: &Profile, overlap: bool, rng: &mut impl Rng) -> Draw {
    let x0 = uniform(rng, p.x0);
    let vx = uniform(rng, p.vx);
    let ax = uniform(rng, p.ax);
    let hold = uniform(rng, p.hold);
    let y0 = uniform(rng, p.y0);
    let vy = uniform(rng, p.vy);
    Draw {
        x0,
        vx,
        ax,
        hold: if overlap { hold } else { 0.0 },
        y0,
        vy,
    }
}

/// Relative longitudinal position and speed at time `t`.
fn longitudinal(p: &Profile, q: &Draw, t: f64) -> (f64, f64) {
    if p.stops {
        // world speed decays linearly to zero and stays there
        let w0 = world(q.vx);
        let t_stop = if q.ax < 0.0 { w0 / -q.ax } else { f64::INFINITY };
        if t < t_stop {
            (q.x0 + q.vx * t + 0.5 * q.ax * t * t, q.vx + q.ax * t)
        } else {
            let xs = q.x0 + q.vx * t_stop + 0.5 * q.ax * t_stop * t_stop;
            (xs - EGO_SPEED * (t - t_stop), -EGO_SPEED)
        }
    } else {
        let ta = (t - q.hold).max(0.0);
        (q.x0 + q.vx * t + 0.5 * q.ax * ta * ta, q.vx + q.ax * ta)
    }
}

fn motion(p: &Profile, q: &Draw, length: usize, dt: f64) -> Motion {
    let mut x = Vec::with_capacity(length);
    let mut y = Vec::with_capacity(length);
    let mut d = Vec::with_capacity(length);
    for i in 0..length {
        let t = i as f64 * dt;
        let (xi, vxi) = longitudinal(p, q, t);
        x.push(xi);
        y.push(q.y0 + q.vy * t);
        d.push(q.vy.atan2(world(vxi)));
    }
    let vx = diffs(&x, dt);
    let vy = diffs(&y, dt);
    Motion { x, y, d, vx, vy }
}

/// Generates `spec.counts[name]` trajectories per template, in catalog order.
/// Agent ids are zero-padded so lexical order equals generation order.
pub fn gen_dataset(spec: &SynthSpec) -> Result<Vec<Trajectory>> {
    spec.validate()?;
    let labels = label_map();
    let mut out = Vec::new();
    for (k, tpl) in TEMPLATES.iter().enumerate() {
        let n = spec.counts.get(tpl.name).copied().unwrap_or(0);
        let mut rng = stream_rng(spec.seed, Stream::Synth { class: k });
        let label = labels.index_of(tpl.name).expect("catalog label");
        for _ in 0..n {
            let q = draw(&tpl.profile, spec.overlap, &mut rng);
            let m = motion(&tpl.profile, &q, spec.length, spec.frame_period);
            let mut points = Vec::with_capacity(spec.length);
            for i in 0..spec.length {
                let mut s = [m.x[i], m.y[i], 0.0, m.d[i]];
                if spec.noise > 0.0 {
                    for (v, sigma) in s.iter_mut().zip(NOISE_SIGMA) {
                        *v += Normal::new(0.0, sigma * spec.noise).expect("valid sigma").sample(&mut rng);
                    }
                }
                points.push(TrajectoryPoint {
                    x: s[0],
                    y: s[1],
                    z: s[2],
                    d: crate::data::wrap_angle(s[3]),
                    label,
                    frame: i as u64,
                });
            }
            out.push(Trajectory {
                agent_id: format!("agent{:07}", out.len()),
                kind: tpl.kind,
                points,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemplateCheck {
    pub name: String,
    pub passed: bool,
    /// First failing predicate, if any.
    pub detail: Option<String>,
}

/// Checks each requested template's predicate on zero-noise trajectories
/// (all templates when `counts` names none).
pub fn verify_templates(spec: &SynthSpec) -> Vec<TemplateCheck> {
    const DRAWS: usize = 25;
    TEMPLATES
        .iter()
        .enumerate()
        .filter(|(_, t)| spec.counts.is_empty() || spec.counts.contains_key(t.name))
        .map(|(k, tpl)| {
            let mut rng = stream_rng(spec.seed, Stream::Synth { class: k });
            let mut detail = None;
            for i in 0..DRAWS {
                let q = draw(&tpl.profile, spec.overlap, &mut rng);
                let m = motion(&tpl.profile, &q, spec.length.max(2), spec.frame_period);
                if let Err(e) = (tpl.check)(&m) {
                    detail = Some(format!("draw {i}: {e}"));
                    break;
                }
            }
            TemplateCheck {
                name: tpl.name.to_string(),
                passed: detail.is_none(),
                detail,
            }
        })
        .collect()
}

/// Noiseless track of `name` for one draw of the seed's stream.
pub fn noiseless_motion(name: &str, spec: &SynthSpec) -> Result<Motion> {
    let (k, tpl) = TEMPLATES
        .iter()
        .enumerate()
        .find(|(_, t)| t.name == name)
        .ok_or_else(|| Error::Config(format!("unknown behavior class {name:?}")))?;
    let mut rng = stream_rng(spec.seed, Stream::Synth { class: k });
    let q = draw(&tpl.profile, spec.overlap, &mut rng);
    Ok(motion(&tpl.profile, &q, spec.length, spec.frame_period))
}
