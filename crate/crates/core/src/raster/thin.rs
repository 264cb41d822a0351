use std::collections::VecDeque;

use super::{BinaryMap, Pixel, NEIGHBORS_8};

/// Top-left corner of the first (row-major) 2x2 all-on block, if any.
pub fn find_block(b: &BinaryMap) -> Option<(usize, usize)> {
    let (w, h) = b.dims();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            if b.get(x, y) && b.get(x + 1, y) && b.get(x, y + 1) && b.get(x + 1, y + 1) {
                return Some((x, y));
            }
        }
    }
    None
}

pub fn is_thin(b: &BinaryMap) -> bool {
    find_block(b).is_none()
}

/// Connectivity-preserving thinning to a map with no 2x2 all-on block.
///
/// Border pixels are peeled one direction at a time (N, S, E, W). A pixel is
/// deleted only when it lies in a 2x2 all-on block, is 8-simple (Yokoi
/// connectivity number 1) and has at least two on-neighbours, so thin parts
/// of the input (including 4-connected corners) are left untouched.
/// Each deletion re-checks the current state, which keeps every component
/// connected. The result is a fixed point, hence the operation is idempotent.
pub fn morph_thin(b: &BinaryMap) -> BinaryMap {
    let mut m = b.clone();
    loop {
        peel(&mut m);
        if !break_block(&mut m) {
            return m;
        }
    }
}

const DIRECTIONS: [(i32, i32); 4] = [(0, -1), (0, 1), (1, 0), (-1, 0)];

fn peel(m: &mut BinaryMap) {
    loop {
        let mut changed = false;
        for (dx, dy) in DIRECTIONS {
            let candidates: Vec<Pixel> = m
                .on_pixels()
                .into_iter()
                .filter(|p| !m.at(Pixel::new(p.x + dx, p.y + dy)))
                .collect();
            for p in candidates {
                if deletable(m, p) {
                    m.set_pixel(p, false);
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

fn neighborhood(m: &BinaryMap, p: Pixel) -> [bool; 8] {
    let mut n = [false; 8];
    for (slot, (dx, dy)) in n.iter_mut().zip(NEIGHBORS_8) {
        *slot = m.at(Pixel::new(p.x + dx, p.y + dy));
    }
    n
}

/// Yokoi connectivity number for 8-connected foreground.
fn connectivity_number(n: &[bool; 8]) -> u32 {
    let off = |k: usize| u32::from(!n[k % 8]);
    [0usize, 2, 4, 6]
        .iter()
        .map(|&k| off(k) - off(k) * off(k + 1) * off(k + 2))
        .sum()
}

fn deletable(m: &BinaryMap, p: Pixel) -> bool {
    if !m.at(p) {
        return false;
    }
    let n = neighborhood(m, p);
    in_block(m, p) && n.iter().filter(|&&v| v).count() >= 2 && connectivity_number(&n) == 1
}

fn in_block(m: &BinaryMap, p: Pixel) -> bool {
    [(-1, -1), (0, -1), (-1, 0), (0, 0)].iter().any(|&(ox, oy)| {
        let (x, y) = (p.x + ox, p.y + oy);
        [(0, 0), (1, 0), (0, 1), (1, 1)]
            .iter()
            .all(|&(dx, dy)| m.at(Pixel::new(x + dx, y + dy)))
    })
}

/// Removes one pixel from the first remaining 2x2 block. Prefers a pixel
/// whose removal keeps its on-neighbours mutually connected.
fn break_block(m: &mut BinaryMap) -> bool {
    let Some((x, y)) = find_block(m) else {
        return false;
    };
    let corners = [
        Pixel::new(x as i32, y as i32),
        Pixel::new(x as i32 + 1, y as i32),
        Pixel::new(x as i32, y as i32 + 1),
        Pixel::new(x as i32 + 1, y as i32 + 1),
    ];
    let victim = corners
        .iter()
        .copied()
        .find(|&p| removal_keeps_connected(m, p))
        .unwrap_or(corners[0]);
    m.set_pixel(victim, false);
    true
}

fn removal_keeps_connected(m: &mut BinaryMap, p: Pixel) -> bool {
    let neighbors: Vec<Pixel> = NEIGHBORS_8
        .iter()
        .map(|(dx, dy)| Pixel::new(p.x + dx, p.y + dy))
        .filter(|&q| m.at(q))
        .collect();
    if neighbors.len() < 2 {
        return false;
    }
    m.set_pixel(p, false);
    let reached = reachable(m, neighbors[0], &neighbors[1..]);
    m.set_pixel(p, true);
    reached
}

fn reachable(m: &BinaryMap, start: Pixel, targets: &[Pixel]) -> bool {
    let (w, _) = m.dims();
    let mut seen = vec![false; m.data().len()];
    let idx = |q: Pixel| q.y as usize * w + q.x as usize;
    let mut remaining: Vec<Pixel> = targets.to_vec();
    let mut queue = VecDeque::from([start]);
    seen[idx(start)] = true;
    while let Some(q) = queue.pop_front() {
        remaining.retain(|&t| t != q);
        if remaining.is_empty() {
            return true;
        }
        for (dx, dy) in NEIGHBORS_8 {
            let r = Pixel::new(q.x + dx, q.y + dy);
            if m.at(r) && !seen[idx(r)] {
                seen[idx(r)] = true;
                queue.push_back(r);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent 8-connected component labelling (union-find).
    fn component_count(b: &BinaryMap) -> usize {
        let (w, h) = b.dims();
        let mut parent: Vec<usize> = (0..w * h).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for y in 0..h {
            for x in 0..w {
                if !b.get(x, y) {
                    continue;
                }
                for (dx, dy) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && nx < w as i64 && ny < h as i64 && b.get(nx as usize, ny as usize) {
                        let a = find(&mut parent, y * w + x);
                        let c = find(&mut parent, ny as usize * w + nx as usize);
                        parent[a] = c;
                    }
                }
            }
        }
        (0..w * h)
            .filter(|&i| b.data()[i] && find(&mut parent, i) == i)
            .count()
    }

    fn subset(a: &BinaryMap, b: &BinaryMap) -> bool {
        a.data().iter().zip(b.data()).all(|(&x, &y)| !x || y)
    }

    #[test]
    fn empty_stays_empty() {
        let b = BinaryMap::new(6, 6);
        assert_eq!(morph_thin(&b), b);
    }

    #[test]
    fn diagonal_line_unchanged() {
        let b = BinaryMap::from_pixels(8, 8, (0..8).map(|i| Pixel::new(i, i)));
        assert_eq!(morph_thin(&b), b);
    }

    #[test]
    fn straight_line_unchanged() {
        let b = BinaryMap::from_pixels(10, 3, (1..9).map(|i| Pixel::new(i, 1)));
        assert_eq!(morph_thin(&b), b);
    }

    #[test]
    fn solid_block_becomes_connected_skeleton() {
        let mut b = BinaryMap::new(8, 8);
        for y in 2..6 {
            for x in 2..6 {
                b.set(x, y, true);
            }
        }
        let t = morph_thin(&b);
        assert!(is_thin(&t));
        assert!(subset(&t, &b));
        assert!(t.count_ones() > 0);
        assert_eq!(component_count(&t), 1);
    }

    #[test]
    fn two_by_two_reduced() {
        let b = BinaryMap::from_pixels(
            4,
            4,
            [Pixel::new(1, 1), Pixel::new(2, 1), Pixel::new(1, 2), Pixel::new(2, 2)],
        );
        let t = morph_thin(&b);
        assert!(is_thin(&t));
        assert_eq!(component_count(&t), 1);
    }

    #[test]
    fn ring_keeps_hole_free_connectivity() {
        let mut b = BinaryMap::new(12, 12);
        for y in 2..10 {
            for x in 2..10 {
                if !(4..8).contains(&x) || !(4..8).contains(&y) {
                    b.set(x, y, true);
                }
            }
        }
        let t = morph_thin(&b);
        assert!(is_thin(&t));
        assert_eq!(component_count(&t), 1);
    }

    fn blobs() -> impl Strategy<Value = BinaryMap> {
        proptest::collection::vec((0usize..20, 0usize..20, 1usize..8, 1usize..8), 1..6).prop_map(
            |rects| {
                let mut b = BinaryMap::new(24, 24);
                for (x, y, w, h) in rects {
                    for yy in y..(y + h).min(24) {
                        for xx in x..(x + w).min(24) {
                            b.set(xx, yy, true);
                        }
                    }
                }
                b
            },
        )
    }

    proptest! {
        #[test]
        fn thin_idempotent_and_connected(b in blobs()) {
            let t = morph_thin(&b);
            prop_assert!(is_thin(&t));
            prop_assert!(subset(&t, &b));
            prop_assert_eq!(component_count(&t), component_count(&b));
            prop_assert_eq!(morph_thin(&t), t);
        }

        #[test]
        fn thin_idempotent_on_noise(bits in proptest::collection::vec(any::<bool>(), 400)) {
            let b = BinaryMap::from_vec(20, 20, bits).unwrap();
            let t = morph_thin(&b);
            prop_assert!(is_thin(&t));
            prop_assert_eq!(morph_thin(&t), t);
        }
    }
}
