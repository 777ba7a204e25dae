//! Trajectory scores: acceleration, curvature, success rate and how far a
//! flight gets before its first collision.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::sim::{read_trajectory_csv, LogRow, SimError, Status};

/// Triples with a side shorter than this are skipped by [`avg_curvature`].
pub const MIN_SIDE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trajectory too short: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("no episodes to score")]
    Empty,
    #[error("route length must be positive, got {0}")]
    BadRouteLength(f64),
    #[error("trajectory never terminates")]
    Unterminated,
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: SimError,
    },
    #[error("no trajectory CSV files in {0}")]
    NoTrajectories(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Vec2>,
    pub vels: Vec<Vec2>,
    pub dt: f64,
    pub outcome: Status,
}

impl Trajectory {
    /// Builds from logged rows; `dt` comes from the first two timestamps.
    pub fn from_log(rows: &[LogRow]) -> Result<Self, MetricsError> {
        let last = rows.last().ok_or(MetricsError::TooShort { need: 1, got: 0 })?;
        if !last.status.is_terminal() {
            return Err(MetricsError::Unterminated);
        }
        let dt = if rows.len() >= 2 { rows[1].t - rows[0].t } else { 0.0 };
        Ok(Self {
            points: rows.iter().map(|r| r.pos).collect(),
            vels: rows.iter().map(|r| r.vel).collect(),
            dt,
            outcome: last.status,
        })
    }

    /// Total polyline length.
    pub fn flown_length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Mean of `|v[t+1] - v[t]| / dt`.
pub fn avg_acceleration(traj: &Trajectory) -> Result<f64, MetricsError> {
    let n = traj.vels.len();
    if n < 2 {
        return Err(MetricsError::TooShort { need: 2, got: n });
    }
    let sum: f64 = traj.vels.windows(2).map(|w| (w[1] - w[0]).norm() / traj.dt).sum();
    Ok(sum / (n - 1) as f64)
}

/// Curvature of the circle through three points; `None` for near-degenerate triples.
pub fn menger_curvature(a: Vec2, b: Vec2, c: Vec2) -> Option<f64> {
    let (ab, bc, ca) = ((b - a).norm(), (c - b).norm(), (a - c).norm());
    if ab < MIN_SIDE || bc < MIN_SIDE || ca < MIN_SIDE {
        return None;
    }
    Some(2.0 * (b - a).cross(c - a).abs() / (ab * bc * ca))
}

/// Mean Menger curvature over consecutive triples; 0 if every triple is skipped.
pub fn avg_curvature(traj: &Trajectory) -> Result<f64, MetricsError> {
    let n = traj.points.len();
    if n < 3 {
        return Err(MetricsError::TooShort { need: 3, got: n });
    }
    let ks: Vec<f64> = traj
        .points
        .windows(3)
        .filter_map(|w| menger_curvature(w[0], w[1], w[2]))
        .collect();
    Ok(if ks.is_empty() { 0.0 } else { ks.iter().sum::<f64>() / ks.len() as f64 })
}

pub fn success_rate(outcomes: &[Status]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = outcomes.iter().filter(|&&s| s == Status::Goal).count();
    Ok(100.0 * hits as f64 / outcomes.len() as f64)
}

/// Mean length flown before the first collision, in meters.
/// Leaving the bounds counts as a collision.
pub fn cac_meters(trajs: &[Trajectory]) -> Result<f64, MetricsError> {
    if trajs.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(trajs.iter().map(Trajectory::flown_length).sum::<f64>() / trajs.len() as f64)
}

/// Mean per-episode flown length as a percentage of `route_length`, each
/// episode capped at 100. Reaching the goal counts as the whole route, since
/// the goal region stops the flight short of the goal point.
pub fn cac(trajs: &[Trajectory], route_length: f64) -> Result<f64, MetricsError> {
    if !(route_length > 0.0) {
        return Err(MetricsError::BadRouteLength(route_length));
    }
    if trajs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sum: f64 = trajs
        .iter()
        .map(|t| match t.outcome {
            Status::Goal => 1.0,
            _ => (t.flown_length() / route_length).min(1.0),
        })
        .sum();
    Ok(100.0 * sum / trajs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_episodes: usize,
    /// Over successful flights only; `None` when there are none.
    pub avg_acc: Option<f64>,
    pub avg_cur: Option<f64>,
    /// Successful flights that contributed to each average.
    pub n_acc: usize,
    pub n_cur: usize,
    pub sr: f64,
    pub cac: f64,
    pub cac_m: f64,
    pub route_length: f64,
}

pub const REPORT_CSV_HEADER: &str = "n_episodes,avg_acc,avg_cur,n_acc,n_cur,sr,cac,cac_m,route_length";

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Scores a set of episodes.
pub fn report(trajs: &[Trajectory], route_length: f64) -> Result<MetricsReport, MetricsError> {
    let outcomes: Vec<Status> = trajs.iter().map(|t| t.outcome).collect();
    let sr = success_rate(&outcomes)?;
    let cac_pct = cac(trajs, route_length)?;
    let cac_m = cac_meters(trajs)?;
    let ok: Vec<&Trajectory> = trajs.iter().filter(|t| t.outcome == Status::Goal).collect();
    let accs: Vec<f64> = ok.iter().filter_map(|t| avg_acceleration(t).ok()).collect();
    let curs: Vec<f64> = ok.iter().filter_map(|t| avg_curvature(t).ok()).collect();
    Ok(MetricsReport {
        n_episodes: trajs.len(),
        avg_acc: mean(&accs),
        avg_cur: mean(&curs),
        n_acc: accs.len(),
        n_cur: curs.len(),
        sr,
        cac: cac_pct,
        cac_m,
        route_length,
    })
}

/// Trajectory CSVs in `dir`, sorted by file name.
pub fn trajectory_files(dir: &Path) -> Result<Vec<PathBuf>, MetricsError> {
    let io_err = |source| MetricsError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(MetricsError::NoTrajectories(dir.to_path_buf()));
    }
    Ok(files)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, MetricsError> {
    let file = File::open(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let rows = read_trajectory_csv(BufReader::new(file)).map_err(|source| MetricsError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Trajectory::from_log(&rows).map_err(|e| MetricsError::File {
        path: path.to_path_buf(),
        source: SimError::TrajectoryParse {
            line: rows.len(),
            message: e.to_string(),
        },
    })
}

/// Reads every trajectory CSV in `dir` and scores them together.
pub fn aggregate_report(dir: &Path, route_length: f64) -> Result<MetricsReport, MetricsError> {
    let trajs = trajectory_files(dir)?
        .iter()
        .map(|p| load_trajectory(p))
        .collect::<Result<Vec<_>, _>>()?;
    report(&trajs, route_length)
}

pub fn write_report_csv<W: Write>(r: &MetricsReport, mut out: W) -> io::Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into());
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        r.n_episodes,
        opt(r.avg_acc),
        opt(r.avg_cur),
        r.n_acc,
        r.n_cur,
        r.sr,
        r.cac,
        r.cac_m,
        r.route_length
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::write_trajectory_csv;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn traj(points: Vec<Vec2>, outcome: Status) -> Trajectory {
        let vels = vec![Vec2::ZERO; points.len()];
        Trajectory {
            points,
            vels,
            dt: 0.1,
            outcome,
        }
    }

    fn circle(r: f64, n: usize) -> Vec<Vec2> {
        (0..n).map(|k| Vec2::from_angle(TAU * k as f64 / n as f64) * r).collect()
    }

    fn line(n: usize, from: Vec2, to: Vec2) -> Vec<Vec2> {
        (0..n).map(|k| from + (to - from) * (k as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn circle_curvature_is_inverse_radius() {
        for r in [1.0, 5.0] {
            let k = avg_curvature(&traj(circle(r, 73), Status::Goal)).unwrap();
            assert_abs_diff_eq!(k, 1.0 / r, epsilon = 1e-6);
        }
        let k = avg_curvature(&traj(line(10, Vec2::ZERO, Vec2::new(3.0, 4.0)), Status::Goal)).unwrap();
        assert_abs_diff_eq!(k, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn repeated_points_are_skipped() {
        let p = vec![Vec2::ZERO; 5];
        assert_eq!(avg_curvature(&traj(p, Status::Goal)).unwrap(), 0.0);
        let e = avg_curvature(&traj(vec![Vec2::ZERO; 2], Status::Goal)).unwrap_err();
        assert!(matches!(e, MetricsError::TooShort { need: 3, got: 2 }));
    }

    #[test]
    fn acceleration_examples() {
        let mut t = traj(vec![Vec2::ZERO; 4], Status::Goal);
        t.vels = vec![Vec2::new(1.0, 0.0); 4];
        assert_eq!(avg_acceleration(&t).unwrap(), 0.0);
        t.vels = (0..4).map(|k| Vec2::new(0.1 * k as f64, 0.0)).collect();
        assert_abs_diff_eq!(avg_acceleration(&t).unwrap(), 1.0, epsilon = 1e-12);
        t.vels = (0..4).map(|k| Vec2::new(if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).collect();
        assert_abs_diff_eq!(avg_acceleration(&t).unwrap(), 20.0, epsilon = 1e-12);
        t.vels.truncate(1);
        assert!(avg_acceleration(&t).is_err());
    }

    #[test]
    fn success_rate_examples() {
        let mut o = vec![Status::Goal; 9];
        o.push(Status::Collision);
        assert_eq!(success_rate(&o).unwrap(), 90.0);
        assert_eq!(success_rate(&[Status::Goal]).unwrap(), 100.0);
        assert_eq!(success_rate(&[Status::Timeout]).unwrap(), 0.0);
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn cac_examples() {
        let half = traj(line(11, Vec2::ZERO, Vec2::new(10.0, 0.0)), Status::Collision);
        assert_abs_diff_eq!(cac(&[half], 20.0).unwrap(), 50.0, epsilon = 1e-9);
        // Detours longer than the route still cap at 100.
        let long = traj(vec![Vec2::ZERO, Vec2::new(0.0, 15.0), Vec2::new(20.0, 15.0)], Status::Goal);
        assert_eq!(cac(&[long], 20.0).unwrap(), 100.0);
        let short_of_goal = traj(line(5, Vec2::ZERO, Vec2::new(19.5, 0.0)), Status::Goal);
        assert_eq!(cac(&[short_of_goal], 20.0).unwrap(), 100.0);
        let instant = traj(vec![Vec2::ZERO], Status::Collision);
        assert_eq!(cac(&[instant], 20.0).unwrap(), 0.0);
        assert!(cac(&[], 20.0).is_err());
        assert!(cac(&[traj(vec![Vec2::ZERO], Status::Goal)], 0.0).is_err());
    }

    #[test]
    fn report_uses_successes_for_smoothness() {
        let ok = traj(line(5, Vec2::ZERO, Vec2::new(20.0, 0.0)), Status::Goal);
        let crash = traj(circle(1.0, 12), Status::Collision);
        let r = report(&[ok.clone(), crash], 20.0).unwrap();
        assert_eq!(r.sr, 50.0);
        assert_eq!(r.avg_cur, Some(0.0));
        assert_eq!(r.n_cur, 1);
        let r = report(&[traj(circle(1.0, 12), Status::Collision)], 20.0).unwrap();
        assert_eq!(r.avg_cur, None);
        assert_eq!(r.avg_acc, None);
    }

    fn write(dir: &Path, name: &str, t: &Trajectory) {
        let rows: Vec<LogRow> = t
            .points
            .iter()
            .zip(&t.vels)
            .enumerate()
            .map(|(k, (&pos, &vel))| LogRow {
                step: k,
                t: k as f64 * t.dt,
                pos,
                vel,
                d_obs: 1.0,
                deviation: 0.0,
                reward: Default::default(),
                status: if k + 1 == t.points.len() { t.outcome } else { Status::Running },
            })
            .collect();
        write_trajectory_csv(&rows, File::create(dir.join(name)).unwrap()).unwrap();
    }

    #[test]
    fn aggregate_matches_hand_count_and_names_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let ok = traj(line(5, Vec2::ZERO, Vec2::new(20.0, 0.0)), Status::Goal);
        let bad = traj(line(3, Vec2::ZERO, Vec2::new(5.0, 0.0)), Status::Collision);
        write(dir.path(), "a.csv", &ok);
        write(dir.path(), "b.csv", &ok);
        write(dir.path(), "c.csv", &bad);
        let r = aggregate_report(dir.path(), 20.0).unwrap();
        assert_eq!(r.n_episodes, 3);
        assert_abs_diff_eq!(r.sr, 200.0 / 3.0, epsilon = 1e-12);
        assert_eq!(r.avg_cur, Some(0.0));
        assert_abs_diff_eq!(r.cac, (100.0 + 100.0 + 25.0) / 3.0, epsilon = 1e-9);

        std::fs::write(dir.path().join("d.csv"), "not,a,trajectory\n").unwrap();
        let e = aggregate_report(dir.path(), 20.0).unwrap_err();
        assert!(e.to_string().contains("d.csv"), "{e}");

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            aggregate_report(empty.path(), 20.0),
            Err(MetricsError::NoTrajectories(_))
        ));
    }

    #[test]
    fn report_csv_has_one_row() {
        let r = report(&[traj(vec![Vec2::ZERO], Status::Collision)], 20.0).unwrap();
        let mut out = Vec::new();
        write_report_csv(&r, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], REPORT_CSV_HEADER);
        assert!(lines[1].contains("NA"));
    }

    proptest! {
        #[test]
        fn curvature_rigid_invariant_and_scales(
            pts in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 3..12),
            theta in 0.0..TAU,
            shift in (-50.0..50.0f64, -50.0..50.0f64),
            lambda in 0.5..4.0f64,
        ) {
            let p: Vec<Vec2> = pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
            let base = avg_curvature(&traj(p.clone(), Status::Goal)).unwrap();
            let moved: Vec<Vec2> = p.iter().map(|q| q.rotate(theta) + Vec2::new(shift.0, shift.1)).collect();
            let m = avg_curvature(&traj(moved, Status::Goal)).unwrap();
            prop_assert!((m - base).abs() <= 1e-6 * base.max(1.0));
            let scaled: Vec<Vec2> = p.iter().map(|&q| q * lambda).collect();
            let s = avg_curvature(&traj(scaled, Status::Goal)).unwrap();
            prop_assert!((s - base / lambda).abs() <= 1e-6 * base.max(1.0));
        }

        #[test]
        fn acceleration_rotation_invariant(
            vs in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 2..10),
            theta in 0.0..TAU,
        ) {
            let mut t = traj(vec![Vec2::ZERO; vs.len()], Status::Goal);
            t.vels = vs.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
            let a = avg_acceleration(&t).unwrap();
            t.vels = t.vels.iter().map(|v| v.rotate(theta)).collect();
            prop_assert!((avg_acceleration(&t).unwrap() - a).abs() < 1e-9);
        }
    }
}
