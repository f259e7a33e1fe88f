//! Cheapest-route planning on semantic grids.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

use super::{SceneGrid, N_CLASSES};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Neighbor offsets in fixed scan order (row-major over the 3x3 block).
const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Heap entry ordered so the BinaryHeap pops the lowest (cost, cell index)
/// pair first. Costs are finite by construction, so the comparison is
/// total.
#[derive(PartialEq)]
struct State {
    cost: f64,
    idx: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .cost
            .partial_cmp(&self.cost)
            .expect("path costs are finite")
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest 8-connected route from `start` to `goal` under per-class entry
/// costs. Moving into a cell costs `costs[class]`, scaled by sqrt(2) for
/// diagonal steps; cells with non-finite cost (obstacles) are impassable
/// but do not block diagonal moves between their neighbors.
///
/// Deterministic by construction: the frontier pops equal-cost cells in
/// index order, and when several predecessors give a cell the same optimal
/// cost, the lexicographically smallest (row, col) predecessor wins.
/// Returns the cell sequence including both endpoints; `start == goal`
/// yields a single cell.
pub fn plan_path(
    grid: &SceneGrid,
    costs: &[f64; N_CLASSES],
    start: (usize, usize),
    goal: (usize, usize),
) -> Result<Vec<(usize, usize)>> {
    let (h, w) = (grid.height(), grid.width());
    for (name, cell) in [("start", start), ("goal", goal)] {
        if !grid.in_bounds(cell.0, cell.1) {
            return Err(Error::InvalidArgument(format!(
                "{name} ({}, {}) outside {h}x{w} grid",
                cell.0, cell.1
            )));
        }
        if !costs[grid.class_at(cell.0, cell.1) as usize].is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} ({}, {}) is impassable",
                cell.0, cell.1
            )));
        }
    }
    let idx_of = |r: usize, c: usize| r * w + c;
    let n = h * w;
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let start_idx = idx_of(start.0, start.1);
    dist[start_idx] = 0.0;
    heap.push(State { cost: 0.0, idx: start_idx });

    while let Some(State { cost, idx }) = heap.pop() {
        if done[idx] {
            continue;
        }
        done[idx] = true;
        let (r, c) = (idx / w, idx % w);
        for (dr, dc) in NEIGHBORS {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            let enter = costs[grid.class_at(nr, nc) as usize];
            if !enter.is_finite() {
                continue;
            }
            let step = if dr != 0 && dc != 0 { enter * SQRT2 } else { enter };
            let next = idx_of(nr, nc);
            let cand = cost + step;
            if cand < dist[next] {
                dist[next] = cand;
                pred[next] = Some(idx);
                heap.push(State { cost: cand, idx: next });
            } else if cand == dist[next] {
                // Same optimal cost: keep the smaller (row, col) parent.
                if let Some(p) = pred[next] {
                    if idx < p {
                        pred[next] = Some(idx);
                    }
                }
            }
        }
    }

    let goal_idx = idx_of(goal.0, goal.1);
    if !dist[goal_idx].is_finite() {
        return Err(Error::NoPath { from: start, to: goal });
    }
    let mut path = vec![(goal_idx / w, goal_idx % w)];
    let mut cur = goal_idx;
    while cur != start_idx {
        cur = pred[cur].expect("finite dist implies a predecessor chain");
        path.push((cur / w, cur % w));
    }
    path.reverse();
    Ok(path)
}

/// Total entry cost of a cell sequence under the given cost table. Errors
/// if consecutive cells are not 8-neighbors or any cell is impassable.
pub fn path_cost(
    grid: &SceneGrid,
    costs: &[f64; N_CLASSES],
    path: &[(usize, usize)],
) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::InvalidArgument("empty path".into()));
    }
    let mut total = 0.0;
    for win in path.windows(2) {
        let ((r0, c0), (r1, c1)) = (win[0], win[1]);
        let (dr, dc) = (r1 as isize - r0 as isize, c1 as isize - c0 as isize);
        if dr.abs() > 1 || dc.abs() > 1 || (dr == 0 && dc == 0) {
            return Err(Error::InvalidArgument(format!(
                "({r0}, {c0}) -> ({r1}, {c1}) is not a unit step"
            )));
        }
        let enter = costs[grid.class_at(r1, c1) as usize];
        if !enter.is_finite() {
            return Err(Error::InvalidArgument(format!("({r1}, {c1}) is impassable")));
        }
        total += if dr != 0 && dc != 0 { enter * SQRT2 } else { enter };
    }
    Ok(total)
}
