//! Built-in 16x16 scene layouts.
//!
//! Layouts 1-3 share a cross-intersection motif with varied arm widths and
//! crossing positions; layout4 is a single serpentine corridor hugging the
//! borders, an offset and shape the others never use, serving as the
//! held-out scene. Built-up quadrants are obstacles with terrain strips
//! hugging the sidewalks, so free cells concentrate along the arms and
//! typical routes run arm-to-arm through the crossing rather than cutting
//! across open ground; serpentine routes instead wind on far past the
//! length of any cross route. All free (non-obstacle)
//! cells in each layout form a single 8-connected component, so any free
//! start/goal pair is reachable.

use crate::error::{Error, Result};

use super::SceneGrid;

/// Ids of the built-in layouts, in canonical order.
pub fn layout_ids() -> [&'static str; 4] {
    ["layout1", "layout2", "layout3", "layout4"]
}

/// Builds a layout by id.
pub fn layout(id: &str) -> Result<SceneGrid> {
    let rows: &[&str] = match id {
        // Centered cross with narrow two-cell arms.
        "layout1" => &[
            "xxxxxtsrrstxxxxx",
            "xxxxxtsrrstxxxxx",
            "xxxxxtsrrstxxxxx",
            "xxxxxtsrrstxxxxx",
            "xxxxxtsrrstxxxxx",
            "ttttttsrrstttttt",
            "sssssssrrsssssss",
            "rrrrrrrrrrrrrrrr",
            "rrrrrrrrrrrrrrrr",
            "sssssssrrsssssss",
            "ttttttsrrstttttt",
            "xxxxxtsrrstxxxxx",
            "xxxxxtsrrstxxxxx",
            "xxxxxtsrrstxxxxx",
            "xxxxxtsrrstxxxxx",
            "xxxxxtsrrstxxxxx",
        ],
        // Centered cross with wide four-cell arms.
        "layout2" => &[
            "xxxxtsrrrrstxxxx",
            "xxxxtsrrrrstxxxx",
            "xxxxtsrrrrstxxxx",
            "xxxxtsrrrrstxxxx",
            "tttttsrrrrsttttt",
            "ssssssrrrrssssss",
            "rrrrrrrrrrrrrrrr",
            "rrrrrrrrrrrrrrrr",
            "rrrrrrrrrrrrrrrr",
            "rrrrrrrrrrrrrrrr",
            "ssssssrrrrssssss",
            "tttttsrrrrsttttt",
            "xxxxtsrrrrstxxxx",
            "xxxxtsrrrrstxxxx",
            "xxxxtsrrrrstxxxx",
            "xxxxtsrrrrstxxxx",
        ],
        // Asymmetric cross: narrow vertical arm near the left edge, wide
        // horizontal arm below center.
        "layout3" => &[
            "xtsrrstxxxxxxxxx",
            "xtsrrstxxxxxxxxx",
            "xtsrrstxxxxxxxxx",
            "xtsrrstxxxxxxxxx",
            "xtsrrstxxxxxxxxx",
            "xtsrrstxxxxxxxxx",
            "ttsrrstttttttttt",
            "sssrrsssssssssss",
            "rrrrrrrrrrrrrrrr",
            "rrrrrrrrrrrrrrrr",
            "rrrrrrrrrrrrrrrr",
            "sssrrsssssssssss",
            "ttsrrstttttttttt",
            "xtsrrstxxxxxxxxx",
            "xtsrrstxxxxxxxxx",
            "xtsrrstxxxxxxxxx",
        ],
        // Single serpentine corridor hugging the borders, no crossing at
        // all. Walks snake through the whole grid, so typical routes are
        // two to three times longer than any arm-to-arm route in the cross
        // layouts and agents rarely reach the goal inside the window.
        "layout4" => &[
            "ssssssssssssssss",
            "xrrrrrrrrrrrrrrx",
            "xrrrrrrrrrrrrrrx",
            "xxxxxxxxxxxxxrrx",
            "xxxxxxxxxxxxxrrx",
            "xxxxxxxxxxxxxrrx",
            "xxxxxxxxxxxxxrrx",
            "xrrrrrrrrrrrrrrx",
            "xrrrrrrrrrrrrrrx",
            "xrrxxxxxxxxxxxxx",
            "xrrxxxxxxxxxxxxx",
            "xrrxxxxxxxxxxxxx",
            "xrrxxxxxxxxxxxxx",
            "xrrrrrrrrrrrrrrx",
            "xrrrrrrrrrrrrrrx",
            "tttttttttttttttt",
        ],
        other => {
            return Err(Error::Config(format!(
                "unknown layout `{other}` (expected one of {})",
                layout_ids().join(", ")
            )))
        }
    };
    SceneGrid::from_rows(id, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthworld::{CLASS_OBSTACLE, MIN_SEPARATION, N_CLASSES};

    #[test]
    fn all_layouts_are_16x16_with_every_class() {
        for id in layout_ids() {
            let g = layout(id).unwrap();
            assert_eq!((g.height(), g.width()), (16, 16), "{id}");
            let mut present = [false; N_CLASSES];
            for &c in g.cells() {
                present[c as usize] = true;
            }
            assert!(present.iter().all(|&p| p), "{id} lacks a class: {present:?}");
        }
        assert!(layout("metropolis").is_err());
    }

    #[test]
    fn free_cells_form_one_component() {
        for id in layout_ids() {
            let g = layout(id).unwrap();
            let free = g.free_cells();
            let (h, w) = (g.height(), g.width());
            let mut seen = vec![false; h * w];
            let start = free[0];
            seen[start.0 * w + start.1] = true;
            let mut stack = vec![start];
            let mut count = 1;
            while let Some((r, c)) = stack.pop() {
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (r as isize + dr, c as isize + dc);
                        if nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        if seen[nr * w + nc] || g.class_at(nr, nc) == CLASS_OBSTACLE {
                            continue;
                        }
                        seen[nr * w + nc] = true;
                        count += 1;
                        stack.push((nr, nc));
                    }
                }
            }
            assert_eq!(count, free.len(), "{id} free cells are disconnected");
        }
    }

    #[test]
    fn layouts_have_distant_cell_pairs() {
        for id in layout_ids() {
            let g = layout(id).unwrap();
            let free = g.free_cells();
            let far = free.iter().any(|&a| {
                free.iter().any(|&b| {
                    SceneGrid::center(a.0, a.1).dist(SceneGrid::center(b.0, b.1)) >= MIN_SEPARATION
                })
            });
            assert!(far, "{id} has no pair {MIN_SEPARATION} cells apart");
        }
    }
}
