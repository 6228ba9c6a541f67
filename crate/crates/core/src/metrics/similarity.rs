use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::grid::{OccClass, Ogm, Thresholds};

/// Distance assigned to cells when there is no source at all.
pub const UNREACHABLE: u32 = u32::MAX;

/// Exact 4-connected (Manhattan) distance from every cell to the nearest
/// source cell, by multi-source breadth-first search.
pub fn manhattan_distance_transform(sources: &[bool], width: usize, height: usize) -> Vec<u32> {
    assert_eq!(sources.len(), width * height, "source mask does not match grid size");
    let mut dist = vec![UNREACHABLE; sources.len()];
    let mut queue = VecDeque::new();
    for (i, _) in sources.iter().enumerate().filter(|(_, &s)| s) {
        dist[i] = 0;
        queue.push_back(i);
    }
    while let Some(i) = queue.pop_front() {
        let (r, c) = (i / width, i % width);
        let next = dist[i] + 1;
        let mut visit = |j: usize| {
            if dist[j] == UNREACHABLE {
                dist[j] = next;
                queue.push_back(j);
            }
        };
        if r > 0 {
            visit(i - width);
        }
        if r + 1 < height {
            visit(i + width);
        }
        if c > 0 {
            visit(i - 1);
        }
        if c + 1 < width {
            visit(i + 1);
        }
    }
    dist
}

/// Mean over `from` cells of their distance to the nearest `to` cell.
/// Both masks must be non-empty.
fn directed_mean(from: &[bool], to_dist: &[u32]) -> f64 {
    let (sum, count) = from
        .iter()
        .zip(to_dist)
        .filter(|(&f, _)| f)
        .fold((0u64, 0u64), |(s, n), (_, &d)| (s + d as u64, n + 1));
    sum as f64 / count as f64
}

/// Image similarity between two class maps of the same size.
///
/// Sums, over the three occupancy classes, the mean nearest-same-class
/// Manhattan distance in both directions. A class present in only one map
/// contributes `width + height`. Lower is better; identical maps score 0.
pub fn image_similarity_classes(pred: &[OccClass], gt: &[OccClass], width: usize, height: usize) -> Result<f64> {
    if pred.len() != gt.len() || pred.len() != width * height {
        return Err(Error::Shape(format!(
            "class maps of {} and {} cells for a {width}x{height} grid",
            pred.len(),
            gt.len()
        )));
    }
    let mut total = 0.0;
    for class in OccClass::ALL {
        let p: Vec<bool> = pred.iter().map(|&c| c == class).collect();
        let g: Vec<bool> = gt.iter().map(|&c| c == class).collect();
        let (has_p, has_g) = (p.contains(&true), g.contains(&true));
        total += match (has_p, has_g) {
            (false, false) => 0.0,
            (true, true) => {
                let to_g = manhattan_distance_transform(&g, width, height);
                let to_p = manhattan_distance_transform(&p, width, height);
                directed_mean(&p, &to_g) + directed_mean(&g, &to_p)
            }
            _ => (width + height) as f64,
        };
    }
    Ok(total)
}

pub fn image_similarity(pred: &Ogm, gt: &Ogm, thresholds: Thresholds) -> Result<f64> {
    pred.check_same_shape(gt)?;
    let cfg = pred.config();
    image_similarity_classes(&pred.classes(thresholds)?, &gt.classes(thresholds)?, cfg.width, cfg.height)
}
