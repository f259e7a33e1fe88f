//! Synthetic grid world with controllable style shifts.
//!
//! Scenes are small semantic grids (road, sidewalk, obstacle, terrain). An
//! agent's route is the cheapest 8-connected path under its style's
//! per-class traversal costs (Dijkstra with deterministic tie-breaking);
//! its trajectory walks that route at a preferred speed with optional
//! Gaussian positional jitter. A *style shift* changes the cost profile,
//! the speed, or the scene set between a source and a target domain while
//! the task (reach the goal) stays fixed; the named scenario presets pin
//! the three shifts the benchmark studies.
//!
//! Coordinates: cell (row, col) has its center at x = col + 0.5,
//! y = row + 0.5, so x runs along columns and y along rows. One trajectory
//! step spans one second.

mod layouts;
mod plan;

pub use layouts::{layout, layout_ids};
pub use plan::{path_cost, plan_path};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::rng::SplitMix64;

/// Semantic classes, also the one-hot channel order.
pub const CLASS_ROAD: u8 = 0;
pub const CLASS_SIDEWALK: u8 = 1;
pub const CLASS_OBSTACLE: u8 = 2;
pub const CLASS_TERRAIN: u8 = 3;
pub const N_CLASSES: usize = 4;

/// Preferred speeds are clamped into this range (cells per second).
pub const SPEED_MIN: f64 = 0.2;
pub const SPEED_MAX: f64 = 4.0;

/// Start and goal cells closer than this (center distance, in cells) are
/// rejected during dataset generation.
pub const MIN_SEPARATION: f64 = 6.0;

const CLASS_CHARS: [char; 4] = ['r', 's', 'x', 't'];

fn class_of_char(c: char) -> Option<u8> {
    CLASS_CHARS.iter().position(|&k| k == c).map(|i| i as u8)
}

/// A semantic grid. Serialized as rows of class characters
/// (`r` road, `s` sidewalk, `x` obstacle, `t` terrain) for readable files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SceneGridRepr", into = "SceneGridRepr")]
pub struct SceneGrid {
    id: String,
    height: usize,
    width: usize,
    cells: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct SceneGridRepr {
    id: String,
    rows: Vec<String>,
}

impl From<SceneGrid> for SceneGridRepr {
    fn from(g: SceneGrid) -> Self {
        let rows = (0..g.height)
            .map(|r| {
                g.cells[r * g.width..(r + 1) * g.width]
                    .iter()
                    .map(|&c| CLASS_CHARS[c as usize])
                    .collect()
            })
            .collect();
        SceneGridRepr { id: g.id, rows }
    }
}

impl TryFrom<SceneGridRepr> for SceneGrid {
    type Error = Error;

    fn try_from(repr: SceneGridRepr) -> Result<Self> {
        let rows: Vec<&str> = repr.rows.iter().map(String::as_str).collect();
        SceneGrid::from_rows(&repr.id, &rows)
    }
}

impl SceneGrid {
    /// Builds a grid from class codes in row-major order.
    pub fn new(id: &str, height: usize, width: usize, cells: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || cells.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "grid `{id}`: {height}x{width} does not match {} cells",
                cells.len()
            )));
        }
        if let Some(&bad) = cells.iter().find(|&&c| c as usize >= N_CLASSES) {
            return Err(Error::InvalidArgument(format!(
                "grid `{id}`: invalid class code {bad}"
            )));
        }
        if id.is_empty() {
            return Err(Error::InvalidArgument("grid id must not be empty".into()));
        }
        Ok(SceneGrid {
            id: id.to_string(),
            height,
            width,
            cells,
        })
    }

    /// Builds a grid from equal-length rows of class characters.
    pub fn from_rows(id: &str, rows: &[&str]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument(format!("grid `{id}` has no rows")));
        }
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(rows.len() * width);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::InvalidArgument(format!(
                    "grid `{id}`: row {r} has different length"
                )));
            }
            for ch in row.chars() {
                cells.push(class_of_char(ch).ok_or_else(|| {
                    Error::InvalidArgument(format!("grid `{id}`: unknown class char `{ch}`"))
                })?);
            }
        }
        SceneGrid::new(id, rows.len(), width, cells)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn class_at(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn in_bounds(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width
    }

    /// Center of a cell in continuous coordinates.
    pub fn center(row: usize, col: usize) -> Point {
        Point::new(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Non-obstacle cells in row-major order.
    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if self.class_at(r, c) != CLASS_OBSTACLE {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Class of the cell containing a continuous point, if in bounds.
    pub fn class_at_point(&self, p: Point) -> Option<u8> {
        if p.x < 0.0 || p.y < 0.0 {
            return None;
        }
        let (col, row) = (p.x.floor() as usize, p.y.floor() as usize);
        let col = col.min(self.width.saturating_sub(1));
        let row = row.min(self.height.saturating_sub(1));
        if self.in_bounds(row, col) {
            Some(self.class_at(row, col))
        } else {
            None
        }
    }
}

/// How an agent moves: per-class traversal costs, preferred speed
/// distribution, and positional jitter. `class_costs` is indexed by class
/// code; the obstacle entry is infinity by convention (the planner treats
/// any non-finite cost as impassable).
#[derive(Debug, Clone, PartialEq)]
pub struct StyleParams {
    pub v_pref_mean: f64,
    pub v_pref_std: f64,
    pub class_costs: [f64; N_CLASSES],
    pub jitter_sigma: f64,
    /// Default stream seed for draws made under this style; dataset
    /// generation derives per-call seeds from its own argument instead.
    pub seed: u64,
}

impl StyleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_pref_mean > 0.0) || !self.v_pref_mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "v_pref_mean must be positive, got {}",
                self.v_pref_mean
            )));
        }
        if self.v_pref_std < 0.0 || !self.v_pref_std.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "v_pref_std must be non-negative, got {}",
                self.v_pref_std
            )));
        }
        if self.jitter_sigma < 0.0 || !self.jitter_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "jitter_sigma must be non-negative, got {}",
                self.jitter_sigma
            )));
        }
        for class in [CLASS_ROAD, CLASS_SIDEWALK, CLASS_TERRAIN] {
            let c = self.class_costs[class as usize];
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "traversal cost for class {class} must be positive and finite, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// One trajectory split into observed and future parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub scene_id: String,
    pub past: Vec<Point>,
    pub future: Vec<Point>,
}

/// Samples plus the scenes they reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub scenes: BTreeMap<String, SceneGrid>,
}

impl Dataset {
    /// Builds a dataset, checking that every sample's scene is present.
    pub fn new(samples: Vec<Sample>, scenes: BTreeMap<String, SceneGrid>) -> Result<Self> {
        for s in &samples {
            if !scenes.contains_key(&s.scene_id) {
                return Err(Error::Unknown {
                    kind: "scene",
                    name: s.scene_id.clone(),
                });
            }
        }
        Ok(Dataset { samples, scenes })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scene(&self, id: &str) -> Result<&SceneGrid> {
        self.scenes.get(id).ok_or_else(|| Error::Unknown {
            kind: "scene",
            name: id.to_string(),
        })
    }

    /// Keeps the first `n` samples (used to cut adaptation pools down to a
    /// target size after shuffling).
    pub fn truncated(&self, n: usize) -> Result<Dataset> {
        if n > self.samples.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot take {n} samples from a dataset of {}",
                self.samples.len()
            )));
        }
        Ok(Dataset {
            samples: self.samples[..n].to_vec(),
            scenes: self.scenes.clone(),
        })
    }
}

/// Walks the planned route at a constant preferred speed drawn once per
/// trajectory, emitting one point per second with optional Gaussian jitter,
/// clamped to the grid rectangle. The agent rests at the goal once reached.
///
/// Draw order per call: speed, then two jitter values (x, y) per step, so
/// trajectories are a pure function of the inputs and the generator state.
pub fn sample_trajectory(
    grid: &SceneGrid,
    style: &StyleParams,
    start: (usize, usize),
    goal: (usize, usize),
    total_steps: usize,
    rng: &mut SplitMix64,
) -> Result<Vec<Point>> {
    style.validate()?;
    if total_steps == 0 {
        return Err(Error::InvalidArgument("total_steps must be at least 1".into()));
    }
    let route = plan_path(grid, &style.class_costs, start, goal)?;
    let polyline: Vec<Point> = route.iter().map(|&(r, c)| SceneGrid::center(r, c)).collect();
    let mut cumlen = Vec::with_capacity(polyline.len());
    let mut acc = 0.0;
    cumlen.push(0.0);
    for w in polyline.windows(2) {
        acc += w[0].dist(w[1]);
        cumlen.push(acc);
    }
    let speed = rng
        .gaussian(style.v_pref_mean, style.v_pref_std)
        .clamp(SPEED_MIN, SPEED_MAX);
    let mut out = Vec::with_capacity(total_steps);
    for step in 0..total_steps {
        let s = speed * step as f64;
        let mut p = point_at_arc(&polyline, &cumlen, s);
        p.x = (p.x + style.jitter_sigma * rng.next_gaussian()).clamp(0.0, grid.width() as f64);
        p.y = (p.y + style.jitter_sigma * rng.next_gaussian()).clamp(0.0, grid.height() as f64);
        out.push(p);
    }
    Ok(out)
}

/// Point at arc length `s` along the polyline; past the end, the last
/// vertex.
fn point_at_arc(polyline: &[Point], cumlen: &[f64], s: f64) -> Point {
    let last = *polyline.last().expect("routes have at least one cell");
    let total = *cumlen.last().expect("cumlen never empty");
    if s >= total {
        return last;
    }
    // Cumulative lengths increase, so the first segment whose far end
    // passes s contains it.
    for i in 1..cumlen.len() {
        if s <= cumlen[i] {
            let seg = cumlen[i] - cumlen[i - 1];
            let t = if seg > 0.0 { (s - cumlen[i - 1]) / seg } else { 0.0 };
            let (a, b) = (polyline[i - 1], polyline[i]);
            return Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        }
    }
    last
}

const GENERATION_ATTEMPTS: usize = 1000;

/// Generates `n` trajectories of `t_obs + t_pred` points across the given
/// scenes under one style. Start/goal cells are drawn uniformly from each
/// scene's free cells, rejecting pairs closer than [`MIN_SEPARATION`] or
/// without a route. Byte-identical for identical inputs and seed.
pub fn generate_dataset(
    scenes: &[SceneGrid],
    style: &StyleParams,
    n: usize,
    t_obs: usize,
    t_pred: usize,
    seed: u64,
) -> Result<Dataset> {
    style.validate()?;
    if scenes.is_empty() {
        return Err(Error::InvalidArgument("generate_dataset needs at least one scene".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    if t_obs < 2 || t_pred < 1 {
        return Err(Error::InvalidArgument(format!(
            "need t_obs >= 2 and t_pred >= 1, got {t_obs}/{t_pred}"
        )));
    }
    let mut scene_map = BTreeMap::new();
    let mut free: Vec<Vec<(usize, usize)>> = Vec::with_capacity(scenes.len());
    for s in scenes {
        if scene_map.insert(s.id().to_string(), s.clone()).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate scene id `{}`", s.id())));
        }
        let cells = s.free_cells();
        let wide_enough = cells.iter().any(|&a| {
            cells
                .iter()
                .any(|&b| SceneGrid::center(a.0, a.1).dist(SceneGrid::center(b.0, b.1)) >= MIN_SEPARATION)
        });
        if cells.len() < 2 || !wide_enough {
            return Err(Error::InvalidArgument(format!(
                "scene `{}` has no start/goal pair at least {MIN_SEPARATION} cells apart",
                s.id()
            )));
        }
        free.push(cells);
    }
    let mut rng = SplitMix64::new(seed);
    let total_steps = t_obs + t_pred;
    let mut samples = Vec::with_capacity(n);
    for sample_idx in 0..n {
        let scene_idx = rng.next_below(scenes.len());
        let scene = &scenes[scene_idx];
        let cells = &free[scene_idx];
        let mut picked = None;
        for _ in 0..GENERATION_ATTEMPTS {
            let start = cells[rng.next_below(cells.len())];
            let goal = cells[rng.next_below(cells.len())];
            let apart = SceneGrid::center(start.0, start.1).dist(SceneGrid::center(goal.0, goal.1));
            if apart < MIN_SEPARATION {
                continue;
            }
            if plan_path(scene, &style.class_costs, start, goal).is_ok() {
                picked = Some((start, goal));
                break;
            }
        }
        let (start, goal) = picked.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "scene `{}`: no usable start/goal pair found for sample {sample_idx}",
                scene.id()
            ))
        })?;
        let traj = sample_trajectory(scene, style, start, goal, total_steps, &mut rng)?;
        samples.push(Sample {
            scene_id: scene.id().to_string(),
            past: traj[..t_obs].to_vec(),
            future: traj[t_obs..].to_vec(),
        });
    }
    Dataset::new(samples, scene_map)
}

/// One domain of a scenario: which scenes and which movement style.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub scene_ids: Vec<String>,
    pub style: StyleParams,
}

/// A named style shift between a source and a target domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub source: DomainSpec,
    pub target: DomainSpec,
}

impl Scenario {
    /// Grids for one domain, in the order listed by the spec.
    pub fn scenes_for(&self, domain: &DomainSpec) -> Result<Vec<SceneGrid>> {
        domain.scene_ids.iter().map(|id| layout(id)).collect()
    }

    /// All grids referenced by either domain, keyed by id.
    pub fn all_scenes(&self) -> Result<BTreeMap<String, SceneGrid>> {
        let mut out = BTreeMap::new();
        for id in self.source.scene_ids.iter().chain(&self.target.scene_ids) {
            out.entry(id.clone()).or_insert(layout(id)?);
        }
        Ok(out)
    }
}

/// Named scenario presets:
///
/// * `agent_shift`: same scenes and cost profile, preferred speed doubles
///   (1.0 to 2.0 cells/s). Only how the agent moves changes.
/// * `scene_shift`: same style, disjoint scene sets (three layouts to a
///   held-out fourth). Only where the agent moves changes.
/// * `class_shift`: cost profile flips from sidewalk-seeking to
///   road-seeking and speed doubles. Both routing and motion change.
pub fn scenario_preset(name: &str) -> Result<Scenario> {
    let all: Vec<String> = layout_ids().iter().map(|s| s.to_string()).collect();
    let walkers = |v: f64, costs: [f64; 4], seed: u64| StyleParams {
        v_pref_mean: v,
        v_pref_std: 0.15,
        class_costs: costs,
        jitter_sigma: 0.05,
        seed,
    };
    const INF: f64 = f64::INFINITY;
    match name {
        "agent_shift" => Ok(Scenario {
            name: name.to_string(),
            source: DomainSpec {
                scene_ids: all[..3].to_vec(),
                style: walkers(1.0, [1.0, 4.0, INF, 8.0], 101),
            },
            target: DomainSpec {
                scene_ids: all[..3].to_vec(),
                style: walkers(2.0, [1.0, 4.0, INF, 8.0], 202),
            },
        }),
        "scene_shift" => Ok(Scenario {
            name: name.to_string(),
            source: DomainSpec {
                scene_ids: all[..3].to_vec(),
                style: walkers(1.0, [1.0, 4.0, INF, 8.0], 101),
            },
            target: DomainSpec {
                scene_ids: all[3..].to_vec(),
                style: walkers(1.0, [1.0, 4.0, INF, 8.0], 202),
            },
        }),
        "class_shift" => Ok(Scenario {
            name: name.to_string(),
            source: DomainSpec {
                scene_ids: all[..3].to_vec(),
                style: walkers(1.0, [3.0, 1.0, INF, 2.0], 101),
            },
            target: DomainSpec {
                scene_ids: all[..3].to_vec(),
                style: walkers(2.0, [1.0, 3.0, INF, 4.0], 202),
            },
        }),
        other => Err(Error::Config(format!(
            "unknown scenario `{other}` (expected agent_shift, scene_shift, or class_shift)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_road(id: &str, h: usize, w: usize) -> SceneGrid {
        SceneGrid::new(id, h, w, vec![CLASS_ROAD; h * w]).unwrap()
    }

    fn plain_style() -> StyleParams {
        StyleParams {
            v_pref_mean: 1.0,
            v_pref_std: 0.0,
            class_costs: [1.0, 1.0, f64::INFINITY, 1.0],
            jitter_sigma: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn grid_roundtrips_through_rows() {
        let g = SceneGrid::from_rows("g", &["rs", "xt"]).unwrap();
        assert_eq!(g.class_at(0, 0), CLASS_ROAD);
        assert_eq!(g.class_at(0, 1), CLASS_SIDEWALK);
        assert_eq!(g.class_at(1, 0), CLASS_OBSTACLE);
        assert_eq!(g.class_at(1, 1), CLASS_TERRAIN);
        let json = serde_json::to_string(&g).unwrap();
        assert!(json.contains("\"rs\""), "{json}");
        let back: SceneGrid = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(SceneGrid::from_rows("g", &["rq"]).is_err());
        assert!(SceneGrid::from_rows("g", &["rr", "r"]).is_err());
        assert!(SceneGrid::from_rows("", &["rr"]).is_err());
        assert!(SceneGrid::new("g", 2, 2, vec![0, 1, 2]).is_err());
        assert!(SceneGrid::new("g", 1, 3, vec![0, 9, 1]).is_err());
    }

    #[test]
    fn zero_noise_walk_sits_exactly_on_the_route() {
        // Straight 1x10 corridor: centers at x = 0.5..9.5, y = 0.5.
        let g = flat_road("c", 1, 10);
        let mut rng = SplitMix64::new(1);
        let traj = sample_trajectory(&g, &plain_style(), (0, 0), (0, 9), 8, &mut rng).unwrap();
        for (i, p) in traj.iter().enumerate() {
            assert_eq!(p.y, 0.5);
            assert_eq!(p.x, 0.5 + i as f64);
        }
    }

    #[test]
    fn agent_rests_at_goal_when_route_is_exhausted() {
        let g = flat_road("c", 1, 4);
        let mut rng = SplitMix64::new(1);
        let traj = sample_trajectory(&g, &plain_style(), (0, 0), (0, 3), 10, &mut rng).unwrap();
        let goal = SceneGrid::center(0, 3);
        for p in &traj[3..] {
            assert_eq!(*p, goal);
        }
    }

    #[test]
    fn speed_is_clamped() {
        let g = flat_road("c", 1, 16);
        let mut fast = plain_style();
        fast.v_pref_mean = 100.0;
        // Invalid mean rejected outright.
        let mut bad = plain_style();
        bad.v_pref_mean = -1.0;
        let mut rng = SplitMix64::new(1);
        assert!(sample_trajectory(&g, &bad, (0, 0), (0, 9), 4, &mut rng).is_err());
        // 100 cells/s clamps to 4: the second point is 4 cells along.
        let traj = sample_trajectory(&g, &fast, (0, 0), (0, 15), 3, &mut rng).unwrap();
        assert_eq!(traj[1].x - traj[0].x, 4.0);

        let mut slow = plain_style();
        slow.v_pref_mean = 0.01;
        // Means below the clamp floor move at exactly SPEED_MIN.
        let traj = sample_trajectory(&g, &slow, (0, 0), (0, 15), 3, &mut rng).unwrap();
        assert!((traj[1].x - traj[0].x - SPEED_MIN).abs() < 1e-12);
    }

    #[test]
    fn jitter_keeps_points_in_bounds() {
        let g = flat_road("c", 4, 4);
        let mut noisy = plain_style();
        noisy.jitter_sigma = 5.0;
        let mut rng = SplitMix64::new(7);
        for _ in 0..20 {
            let traj = sample_trajectory(&g, &noisy, (0, 0), (3, 3), 12, &mut rng).unwrap();
            for p in traj {
                assert!((0.0..=4.0).contains(&p.x));
                assert!((0.0..=4.0).contains(&p.y));
            }
        }
    }

    #[test]
    fn dataset_generation_is_byte_deterministic() {
        let scenes: Vec<SceneGrid> = layout_ids().iter().map(|id| layout(id).unwrap()).collect();
        let style = scenario_preset("agent_shift").unwrap().source.style;
        let a = generate_dataset(&scenes, &style, 25, 8, 12, 42).unwrap();
        let b = generate_dataset(&scenes, &style, 25, 8, 12, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&a.samples).unwrap(),
            serde_json::to_string(&b.samples).unwrap()
        );
        let c = generate_dataset(&scenes, &style, 25, 8, 12, 43).unwrap();
        assert_ne!(
            serde_json::to_string(&a.samples).unwrap(),
            serde_json::to_string(&c.samples).unwrap()
        );
    }

    #[test]
    fn dataset_respects_sizes_and_separation() {
        let scenes: Vec<SceneGrid> = layout_ids().iter().map(|id| layout(id).unwrap()).collect();
        let style = scenario_preset("agent_shift").unwrap().source.style;
        let ds = generate_dataset(&scenes, &style, 40, 8, 12, 9).unwrap();
        assert_eq!(ds.len(), 40);
        for s in &ds.samples {
            assert_eq!(s.past.len(), 8);
            assert_eq!(s.future.len(), 12);
            assert!(ds.scene(&s.scene_id).is_ok());
            // Start cell center vs goal: first past point is the start
            // center (jitter is small), route end is >= 6 cells away.
            let first = s.past[0];
            let last_future = s.future[11];
            let moved = first.dist(last_future);
            // Fast agents reach the goal; slow ones may not, but nobody
            // teleports: displacement stays under the max possible.
            assert!(moved <= 20.0 * SPEED_MAX);
        }
    }

    #[test]
    fn dataset_rejects_cramped_scene() {
        let g = flat_road("tiny", 2, 2);
        let style = plain_style();
        let err = generate_dataset(&[g], &style, 1, 8, 12, 0).unwrap_err();
        assert!(err.to_string().contains("apart"), "{err}");
    }

    #[test]
    fn agent_shift_doubles_observed_speed() {
        let sc = scenario_preset("agent_shift").unwrap();
        let scenes: Vec<SceneGrid> = sc.source.scene_ids.iter().map(|id| layout(id).unwrap()).collect();
        let mean_step = |style: &StyleParams, seed: u64| {
            let ds = generate_dataset(&scenes, style, 60, 8, 12, seed).unwrap();
            let mut total = 0.0;
            let mut count = 0;
            for s in &ds.samples {
                // Early steps, before the goal can absorb the walk.
                for w in s.past.windows(2).take(4) {
                    total += w[0].dist(w[1]);
                    count += 1;
                }
            }
            total / count as f64
        };
        let v_src = mean_step(&sc.source.style, 5);
        let v_tgt = mean_step(&sc.target.style, 6);
        assert!(
            v_tgt > 1.5 * v_src,
            "target speed {v_tgt} not clearly above source {v_src}"
        );
    }

    #[test]
    fn class_shift_flips_surface_occupancy() {
        let sc = scenario_preset("class_shift").unwrap();
        let scenes: Vec<SceneGrid> = sc.source.scene_ids.iter().map(|id| layout(id).unwrap()).collect();
        let sidewalk_share = |style: &StyleParams, seed: u64| {
            let ds = generate_dataset(&scenes, style, 80, 8, 12, seed).unwrap();
            let mut on = 0usize;
            let mut total = 0usize;
            for s in &ds.samples {
                let grid = ds.scene(&s.scene_id).unwrap();
                for p in s.past.iter().chain(&s.future) {
                    if let Some(class) = grid.class_at_point(*p) {
                        total += 1;
                        if class == CLASS_SIDEWALK {
                            on += 1;
                        }
                    }
                }
            }
            on as f64 / total as f64
        };
        let src = sidewalk_share(&sc.source.style, 11);
        let tgt = sidewalk_share(&sc.target.style, 12);
        assert!(
            src > tgt + 0.1,
            "sidewalk share should drop: source {src}, target {tgt}"
        );
    }

    #[test]
    fn scenario_presets_are_wired_correctly() {
        let agent = scenario_preset("agent_shift").unwrap();
        assert_eq!(agent.source.scene_ids, agent.target.scene_ids);
        assert_eq!(agent.source.style.class_costs, agent.target.style.class_costs);
        assert!(agent.target.style.v_pref_mean > agent.source.style.v_pref_mean);

        let scene = scenario_preset("scene_shift").unwrap();
        assert_eq!(scene.source.style.v_pref_mean, scene.target.style.v_pref_mean);
        assert!(scene
            .source
            .scene_ids
            .iter()
            .all(|id| !scene.target.scene_ids.contains(id)));

        let class = scenario_preset("class_shift").unwrap();
        assert!(class.source.style.class_costs[CLASS_SIDEWALK as usize]
            < class.source.style.class_costs[CLASS_ROAD as usize]);
        assert!(class.target.style.class_costs[CLASS_SIDEWALK as usize]
            > class.target.style.class_costs[CLASS_ROAD as usize]);

        assert!(scenario_preset("weather_shift").is_err());
    }
}
