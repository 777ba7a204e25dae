//! Scene data model, the builtin benchmark scenes, scene files, and the
//! predefined route (the straight start-to-goal segment).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_segment_distance, signed_distance, Bounds, ObstacleShape, Vec2};

pub const SCENE_SCHEMA_VERSION: u32 = 1;

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = ["train", "ts1", "ts2", "ts3"];

/// Hexagonal prism obstacle: 2.55 m across corners.
pub const HEX_CIRCUMRADIUS: f64 = 1.275;
/// Alternating lateral offset of hexagon centers from the route.
pub const HEX_LATERAL_OFFSET: f64 = 1.0;
/// Start and goal sit this far in from the short walls.
pub const ENDPOINT_INSET: f64 = 1.0;
pub const SCENE_WIDTH: f64 = 15.0;
pub const SHORT_SCENE_LENGTH: f64 = 20.0;
pub const LONG_SCENE_LENGTH: f64 = 45.0;
/// Minimum clearance between start/goal and any obstacle surface.
pub const ENDPOINT_CLEARANCE: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unknown scene '{name}'; valid names: {}", BUILTIN_NAMES.join(", "))]
    UnknownBuiltin { name: String },
    #[error("{path}: field '{field}': {message} (line {line}, column {column})")]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
        line: usize,
        column: usize,
    },
    #[error("{path}: unsupported schema_version {found} (expected {SCENE_SCHEMA_VERSION})")]
    SchemaVersion { path: PathBuf, found: u32 },
    #[error("invalid scene: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub name: String,
    pub bounds: Bounds,
    pub start: Vec2,
    pub goal: Vec2,
    pub obstacles: Vec<ObstacleShape>,
}

/// Position of a point relative to the predefined route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteFrame {
    /// Arc length along the route, clamped to `[0, route_length]`.
    pub s: f64,
    /// Unsigned distance to the route segment.
    pub deviation: f64,
}

impl Scene {
    pub fn route_length(&self) -> f64 {
        self.start.distance(self.goal)
    }

    /// Unit vector from start to goal.
    pub fn route_direction(&self) -> Vec2 {
        (self.goal - self.start).normalized().unwrap_or(Vec2::new(1.0, 0.0))
    }

    pub fn project_onto_route(&self, p: Vec2) -> RouteFrame {
        project_onto_route(self, p)
    }

    /// Same scene with every coordinate multiplied by `factor` about the origin.
    pub fn scaled(&self, factor: f64) -> Scene {
        let s = |v: Vec2| v * factor;
        Scene {
            name: format!("{}_x{factor}", self.name),
            bounds: Bounds::new(s(self.bounds.min), s(self.bounds.max)),
            start: s(self.start),
            goal: s(self.goal),
            obstacles: self
                .obstacles
                .iter()
                .map(|o| match *o {
                    ObstacleShape::Disc { center, radius } => ObstacleShape::Disc {
                        center: s(center),
                        radius: radius * factor,
                    },
                    ObstacleShape::RegularPolygon {
                        center,
                        circumradius,
                        sides,
                        rotation,
                    } => ObstacleShape::RegularPolygon {
                        center: s(center),
                        circumradius: circumradius * factor,
                        sides,
                        rotation,
                    },
                    ObstacleShape::Box {
                        center,
                        half_extents,
                        rotation,
                    } => ObstacleShape::Box {
                        center: s(center),
                        half_extents: s(half_extents),
                        rotation,
                    },
                })
                .collect(),
        }
    }
}

pub fn project_onto_route(scene: &Scene, p: Vec2) -> RouteFrame {
    let length = scene.route_length();
    let s = (p - scene.start)
        .dot(scene.route_direction())
        .clamp(0.0, length);
    RouteFrame {
        s,
        deviation: point_segment_distance(p, scene.start, scene.goal),
    }
}

/// Empty corridor of the given length, start and goal on the mid-line.
fn corridor(name: &str, length: f64) -> Scene {
    let mid = SCENE_WIDTH / 2.0;
    Scene {
        name: name.to_string(),
        bounds: Bounds::new(Vec2::ZERO, Vec2::new(length, SCENE_WIDTH)),
        start: Vec2::new(ENDPOINT_INSET, mid),
        goal: Vec2::new(length - ENDPOINT_INSET, mid),
        obstacles: Vec::new(),
    }
}

/// `count` hexagons evenly spaced along the route, alternating sides.
fn hexagon_row(scene: &mut Scene, count: usize) {
    let dir = scene.route_direction();
    let normal = dir.perp();
    let length = scene.route_length();
    for k in 1..=count {
        let along = length * k as f64 / (count + 1) as f64;
        let side = if k % 2 == 1 { 1.0 } else { -1.0 };
        let center = scene.start + dir * along + normal * (side * HEX_LATERAL_OFFSET);
        scene.obstacles.push(ObstacleShape::hexagon(center, HEX_CIRCUMRADIUS));
    }
}

/// Obstacle-free 20 x 15 m scene with the standard start and goal.
pub fn empty(name: &str) -> Scene {
    corridor(name, SHORT_SCENE_LENGTH)
}

pub fn builtin(name: &str) -> Result<Scene, SceneError> {
    let scene = match name {
        "train" => {
            let mut s = corridor("train", SHORT_SCENE_LENGTH);
            hexagon_row(&mut s, 4);
            s
        }
        "ts1" => {
            let mut s = corridor("ts1", SHORT_SCENE_LENGTH);
            hexagon_row(&mut s, 6);
            s
        }
        "ts2" => {
            let mut s = corridor("ts2", LONG_SCENE_LENGTH);
            hexagon_row(&mut s, 8);
            s
        }
        "ts3" => {
            let mut s = corridor("ts3", SHORT_SCENE_LENGTH);
            let mid = SCENE_WIDTH / 2.0;
            // A cube just above the route.
            s.obstacles.push(ObstacleShape::rect(
                Vec2::new(5.0, mid + 0.7),
                Vec2::new(0.9, 0.9),
                0.0,
            ));
            // A column just below it.
            s.obstacles.push(ObstacleShape::disc(Vec2::new(9.5, mid - 0.8), 1.1));
            // A wall with a 2 m door offset from the route.
            let door_low = mid + 0.1;
            let door_high = door_low + 2.0;
            let wall_x = 14.5;
            let half_thickness = 0.3;
            let lower_top = door_low;
            let lower_bottom = 0.5;
            s.obstacles.push(ObstacleShape::rect(
                Vec2::new(wall_x, (lower_top + lower_bottom) / 2.0),
                Vec2::new(half_thickness, (lower_top - lower_bottom) / 2.0),
                0.0,
            ));
            let upper_bottom = door_high;
            let upper_top = SCENE_WIDTH - 0.5;
            s.obstacles.push(ObstacleShape::rect(
                Vec2::new(wall_x, (upper_top + upper_bottom) / 2.0),
                Vec2::new(half_thickness, (upper_top - upper_bottom) / 2.0),
                0.0,
            ));
            s
        }
        other => {
            return Err(SceneError::UnknownBuiltin {
                name: other.to_string(),
            })
        }
    };
    Ok(scene)
}

/// Returns every violated scene invariant (empty when the scene is valid).
pub fn validate(scene: &Scene) -> Vec<String> {
    let mut violations = Vec::new();
    if !scene.bounds.is_valid() {
        violations.push("bounds: min must be strictly below max on both axes".to_string());
    }
    for (label, p) in [("start", scene.start), ("goal", scene.goal)] {
        if !p.is_finite() {
            violations.push(format!("{label} is not finite"));
        } else if !scene.bounds.contains(p) {
            violations.push(format!("{label} outside bounds"));
        }
    }
    if scene.start == scene.goal {
        violations.push("start equals goal".to_string());
    }
    for (i, shape) in scene.obstacles.iter().enumerate() {
        if let Err(e) = shape.check() {
            violations.push(format!("obstacle {i}: {e}"));
            continue;
        }
        for (label, p) in [("start", scene.start), ("goal", scene.goal)] {
            let d = signed_distance(p, shape);
            if d < 0.0 {
                violations.push(format!("{label} inside obstacle {i}"));
            } else if d < ENDPOINT_CLEARANCE {
                violations.push(format!(
                    "{label} within {ENDPOINT_CLEARANCE} m of obstacle {i} (clearance {d:.3} m)"
                ));
            }
        }
    }
    violations
}

pub fn ensure_valid(scene: &Scene) -> Result<(), SceneError> {
    let v = validate(scene);
    if v.is_empty() {
        Ok(())
    } else {
        Err(SceneError::Invalid(v))
    }
}

#[derive(Serialize)]
struct SceneFileOut<'a> {
    schema_version: u32,
    #[serde(flatten)]
    scene: &'a Scene,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

/// On-disk layout, deserialized without buffering so error paths stay exact.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFileIn {
    #[allow(dead_code)]
    schema_version: u32,
    name: String,
    bounds: Bounds,
    start: Vec2,
    goal: Vec2,
    obstacles: Vec<ObstacleRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleRecord {
    kind: String,
    center: Vec2,
    radius: Option<f64>,
    circumradius: Option<f64>,
    sides: Option<u32>,
    rotation: Option<f64>,
    half_extents: Option<Vec2>,
}

impl ObstacleRecord {
    /// Converts to a shape, or names the offending field.
    fn into_shape(self) -> Result<ObstacleShape, (&'static str, String)> {
        fn need<T>(v: Option<T>, field: &'static str, kind: &str) -> Result<T, (&'static str, String)> {
            v.ok_or((field, format!("missing field `{field}` for kind \"{kind}\"")))
        }
        match self.kind.as_str() {
            "disc" => Ok(ObstacleShape::Disc {
                center: self.center,
                radius: need(self.radius, "radius", "disc")?,
            }),
            "regular_polygon" => Ok(ObstacleShape::RegularPolygon {
                center: self.center,
                circumradius: need(self.circumradius, "circumradius", "regular_polygon")?,
                sides: need(self.sides, "sides", "regular_polygon")?,
                rotation: self.rotation.unwrap_or(0.0),
            }),
            "box" => Ok(ObstacleShape::Box {
                center: self.center,
                half_extents: need(self.half_extents, "half_extents", "box")?,
                rotation: self.rotation.unwrap_or(0.0),
            }),
            other => Err((
                "kind",
                format!("unknown obstacle kind \"{other}\" (expected disc, regular_polygon or box)"),
            )),
        }
    }
}

pub fn to_json(scene: &Scene) -> String {
    let file = SceneFileOut {
        schema_version: SCENE_SCHEMA_VERSION,
        scene,
    };
    serde_json::to_string_pretty(&file).expect("scene serializes")
}

/// Parses a scene document; `origin` is only used in diagnostics.
pub fn from_json(text: &str, origin: &Path) -> Result<Scene, SceneError> {
    let parse_err = |field: String, e: &serde_json::Error| SceneError::Parse {
        path: origin.to_path_buf(),
        field,
        message: e.to_string(),
        line: e.line(),
        column: e.column(),
    };
    let probe: VersionProbe = serde_json::from_str(text)
        .map_err(|e| parse_err("schema_version".into(), &e))?;
    if probe.schema_version != SCENE_SCHEMA_VERSION {
        return Err(SceneError::SchemaVersion {
            path: origin.to_path_buf(),
            found: probe.schema_version,
        });
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: SceneFileIn = serde_path_to_error::deserialize(de)
        .map_err(|e| parse_err(e.path().to_string(), e.inner()))?;
    let mut obstacles = Vec::with_capacity(file.obstacles.len());
    for (i, rec) in file.obstacles.into_iter().enumerate() {
        let shape = rec.into_shape().map_err(|(field, message)| SceneError::Parse {
            path: origin.to_path_buf(),
            field: format!("obstacles[{i}].{field}"),
            message,
            line: 0,
            column: 0,
        })?;
        obstacles.push(shape);
    }
    let scene = Scene {
        name: file.name,
        bounds: file.bounds,
        start: file.start,
        goal: file.goal,
        obstacles,
    };
    ensure_valid(&scene)?;
    Ok(scene)
}

pub fn load(path: &Path) -> Result<Scene, SceneError> {
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json(&text, path)
}

pub fn save(scene: &Scene, path: &Path) -> Result<(), SceneError> {
    fs::write(path, to_json(scene) + "\n").map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Either a builtin name or a path to a scene file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SceneRef(pub String);

impl SceneRef {
    pub fn resolve(&self) -> Result<Scene, SceneError> {
        if self.0 == "empty" {
            return Ok(empty("empty"));
        }
        if BUILTIN_NAMES.contains(&self.0.as_str()) {
            return builtin(&self.0);
        }
        let path = Path::new(&self.0);
        if path.extension().is_some() || path.exists() {
            load(path)
        } else {
            Err(SceneError::UnknownBuiltin {
                name: self.0.clone(),
            })
        }
    }
}

impl fmt::Display for SceneRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
