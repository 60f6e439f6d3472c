use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::classify::{TillageLabel, TillageMap};

/// Till regions narrower or shorter than this many pixels are treated as roads.
pub const DEFAULT_MIN_REGION_DIM: usize = 3;

/// Relabels thin till components as no-till.
///
/// Components are 4-connected. A component whose bounding box is less than
/// `min_dim` pixels wide or tall becomes no-till; everything else is kept.
/// `min_dim <= 1` leaves the map unchanged.
pub fn remove_thin_regions(map: &TillageMap, min_dim: usize) -> TillageMap {
    let mut out = map.clone();
    if min_dim <= 1 {
        return out;
    }
    let (w, h) = map.dims();
    let labels = map.labels();
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut component = Vec::new();

    for start in 0..w * h {
        if seen[start] || labels[start] != TillageLabel::Till {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        component.clear();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = queue.pop_front() {
            component.push(i);
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if !seen[j] && labels[j] == TillageLabel::Till {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        let box_w = x1 - x0 + 1;
        let box_h = y1 - y0 + 1;
        if box_w < min_dim || box_h < min_dim {
            for &i in &component {
                out.set(i, TillageLabel::NoTill, None);
            }
        }
    }
    out
}
