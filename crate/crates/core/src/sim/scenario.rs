//! Scenario documents and the built-in variation families.
//!
//! Roads are described in a fixed world frame with `x` along the road. Lane
//! centrelines and markings are cubic polynomials `y(x)`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{poly_eval, LineType, ObjectClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSpec {
    pub id: String,
    /// Centreline `y = c0 + c1·x + c2·x² + c3·x³`.
    pub center: [f64; 4],
    pub width: f64,
    /// `+1` when traffic moves towards `+x`, `-1` otherwise.
    pub direction: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkingSpec {
    pub id: String,
    pub polynomial: [f64; 4],
    pub kind: LineType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub id: String,
    pub class: ObjectClass,
    /// Footprint centre, m.
    pub x: f64,
    pub y: f64,
    /// rad
    pub heading: f64,
    /// Constant speed along the heading, m/s.
    #[serde(default)]
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EgoSpec {
    /// Rear-axle position, m.
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub lanes: Vec<LaneSpec>,
    pub markings: Vec<MarkingSpec>,
    #[serde(default)]
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub ego: EgoSpec,
    /// Distance from the ego start to the goal point along the road, m.
    pub goal_distance: f64,
    /// Simulated time limit, s.
    pub duration_cap: f64,
    /// Perception-noise seeds; a non-empty list expands into one run per seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Scenario(format!("{}: {msg}", self.id)));
        if self.lanes.is_empty() {
            return bad("no lanes".into());
        }
        for l in &self.lanes {
            if !(l.width > 0.0) || !(l.direction == 1 || l.direction == -1) {
                return bad(format!("lane `{}` needs positive width and direction ±1", l.id));
            }
        }
        let mut ids: Vec<&str> = self
            .lanes
            .iter()
            .map(|l| l.id.as_str())
            .chain(self.markings.iter().map(|m| m.id.as_str()))
            .chain(self.actors.iter().map(|a| a.id.as_str()))
            .collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate id `{}`", w[0]));
        }
        for a in &self.actors {
            let finite = [a.x, a.y, a.heading, a.speed].iter().all(|v| v.is_finite());
            if !finite || !(a.length > 0.0 && a.width > 0.0 && a.height > 0.0) || a.speed < 0.0 {
                return bad(format!("actor `{}` has invalid pose or dimensions", a.id));
            }
        }
        if !(self.goal_distance > 0.0) || !(self.duration_cap > 0.0) {
            return bad("goal distance and duration cap must be positive".into());
        }
        if self.goal_lane().is_none() {
            return bad("no lane runs in the ego direction".into());
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Json {
            path: "<inline>".into(),
            source: e,
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let s: Scenario = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    fn ego_direction(&self) -> i32 {
        if self.ego.heading.cos() >= 0.0 {
            1
        } else {
            -1
        }
    }

    /// Rightmost lane driven in the ego's direction.
    pub fn goal_lane(&self) -> Option<&LaneSpec> {
        let dir = self.ego_direction();
        let x = self.ego.x;
        self.lanes
            .iter()
            .filter(|l| l.direction == dir)
            .min_by(|a, b| {
                let (ya, yb) = (poly_eval(&a.center, x), poly_eval(&b.center, x));
                (dir as f64 * ya).total_cmp(&(dir as f64 * yb))
            })
    }

    /// Goal point on the goal lane's centreline.
    pub fn goal_point(&self) -> (f64, f64) {
        let lane = self.goal_lane().expect("validated scenario has a goal lane");
        let x = self.ego.x + self.ego_direction() as f64 * self.goal_distance;
        (x, poly_eval(&lane.center, x))
    }
}

pub const LANE_WIDTH: f64 = 3.5;
pub const GOAL_DISTANCE: f64 = 150.0;
pub const DURATION_CAP: f64 = 60.0;

/// Straight two-lane two-way road: ego lane centred on `y = 0` driving `+x`,
/// oncoming lane centred on `y = 3.5`, solid outer markings and a dashed
/// centre marking.
pub fn two_lane_road() -> (Vec<LaneSpec>, Vec<MarkingSpec>) {
    let h = 0.5 * LANE_WIDTH;
    let lanes = vec![
        LaneSpec {
            id: "lane_right".into(),
            center: [0.0, 0.0, 0.0, 0.0],
            width: LANE_WIDTH,
            direction: 1,
        },
        LaneSpec {
            id: "lane_left".into(),
            center: [LANE_WIDTH, 0.0, 0.0, 0.0],
            width: LANE_WIDTH,
            direction: -1,
        },
    ];
    let marking = |id: &str, y: f64, kind| MarkingSpec {
        id: id.into(),
        polynomial: [y, 0.0, 0.0, 0.0],
        kind,
    };
    let markings = vec![
        marking("marking_right", -h, LineType::Solid),
        marking("marking_center", h, LineType::Dashed),
        marking("marking_left", LANE_WIDTH + h, LineType::Solid),
    ];
    (lanes, markings)
}

fn base(id: String, actors: Vec<ActorSpec>) -> Scenario {
    let (lanes, markings) = two_lane_road();
    Scenario {
        id,
        lanes,
        markings,
        actors,
        ego: EgoSpec::default(),
        goal_distance: GOAL_DISTANCE,
        duration_cap: DURATION_CAP,
        seeds: Vec::new(),
    }
}

/// Obstacle kinds placed in the ego lane for families a and b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaticObstacle {
    ParkedCar,
    GlassBin,
    CardboardBox,
}

impl StaticObstacle {
    pub const ALL: [StaticObstacle; 3] = [StaticObstacle::ParkedCar, StaticObstacle::GlassBin, StaticObstacle::CardboardBox];

    pub fn actor(self, x: f64) -> ActorSpec {
        let (class, y, l, w, h, label) = match self {
            StaticObstacle::ParkedCar => (ObjectClass::Car, -0.9, 4.5, 1.9, 1.5, "parked_car"),
            StaticObstacle::GlassBin => (ObjectClass::ArtObject, -0.6, 1.2, 1.2, 1.5, "glass_bin"),
            StaticObstacle::CardboardBox => (ObjectClass::ArtObject, 0.0, 0.3, 0.3, 0.3, "cardboard_box"),
        };
        ActorSpec {
            id: "obstacle".into(),
            class,
            x,
            y,
            heading: 0.0,
            speed: 0.0,
            length: l,
            width: w,
            height: h,
            label: label.into(),
        }
    }
}

pub const OBSTACLE_POSITIONS: [f64; 3] = [20.0, 30.0, 40.0];
pub const ONCOMING_STARTS: [f64; 4] = [40.0, 60.0, 80.0, 100.0];
pub const ONCOMING_SPEEDS: [f64; 3] = [5.5, 8.25, 11.0];
pub const PEDESTRIAN_OFFSETS: [f64; 2] = [3.0, 4.0];
pub const PEDESTRIAN_STARTS: [f64; 4] = [25.0, 35.0, 45.0, 55.0];
pub const PEDESTRIAN_HEADING_DEG: [f64; 3] = [80.0, 90.0, 100.0];
pub const PEDESTRIAN_SPEEDS: [f64; 4] = [1.0, 1.4, 1.8, 2.2];

/// Family a: one static obstacle in the ego lane.
pub fn family_a() -> Vec<Scenario> {
    let mut out = Vec::new();
    for kind in StaticObstacle::ALL {
        for x in OBSTACLE_POSITIONS {
            out.push(base(format!("a-{}", out.len()), vec![kind.actor(x)]));
        }
    }
    out
}

/// Family b: family a plus a vehicle approaching in the oncoming lane.
pub fn family_b() -> Vec<Scenario> {
    let mut out = Vec::new();
    for kind in StaticObstacle::ALL {
        for x in OBSTACLE_POSITIONS {
            for start in ONCOMING_STARTS {
                for speed in ONCOMING_SPEEDS {
                    let oncoming = ActorSpec {
                        id: "oncoming".into(),
                        class: ObjectClass::Car,
                        x: start,
                        y: LANE_WIDTH,
                        heading: PI,
                        speed,
                        length: 4.5,
                        width: 1.9,
                        height: 1.5,
                        label: "oncoming_car".into(),
                    };
                    out.push(base(format!("b-{}", out.len()), vec![kind.actor(x), oncoming]));
                }
            }
        }
    }
    out
}

/// Families c (pedestrian entering from the far side, across the oncoming
/// lane) and d (entering from the near side). The lateral start offset is
/// measured from the centreline of the lane next to the pedestrian's kerb.
fn pedestrian_family(prefix: &str, from_left: bool) -> Vec<Scenario> {
    let mut out = Vec::new();
    for offset in PEDESTRIAN_OFFSETS {
        for x in PEDESTRIAN_STARTS {
            for deg in PEDESTRIAN_HEADING_DEG {
                for speed in PEDESTRIAN_SPEEDS {
                    let (y, heading) = if from_left {
                        (LANE_WIDTH + offset, -deg.to_radians())
                    } else {
                        (-offset, deg.to_radians())
                    };
                    let ped = ActorSpec {
                        id: "pedestrian".into(),
                        class: ObjectClass::Pedestrian,
                        x,
                        y,
                        heading,
                        speed,
                        length: 0.5,
                        width: 0.5,
                        height: 1.8,
                        label: "pedestrian".into(),
                    };
                    out.push(base(format!("{prefix}-{}", out.len()), vec![ped]));
                }
            }
        }
    }
    out
}

pub fn family_c() -> Vec<Scenario> {
    pedestrian_family("c", true)
}

pub fn family_d() -> Vec<Scenario> {
    pedestrian_family("d", false)
}

/// Empty road for lane keeping.
pub fn empty_road() -> Scenario {
    base("empty".into(), Vec::new())
}

/// Resolves `a`, `b`, `c`, `d` or `empty` to its variations.
pub fn builtin_family(name: &str) -> Result<Vec<Scenario>> {
    match name {
        "a" => Ok(family_a()),
        "b" => Ok(family_b()),
        "c" => Ok(family_c()),
        "d" => Ok(family_d()),
        "empty" => Ok(vec![empty_road()]),
        _ => Err(Error::Scenario(format!("unknown built-in family `{name}`"))),
    }
}
