use std::collections::HashMap;

use super::{find_block, BinaryMap, BoundarySegment, Pixel};
use crate::error::{Error, Result};

/// Neighbours of `p` in the pruned pixel graph: 4-neighbours, plus diagonal
/// neighbours not already linked through a shared on 4-neighbour.
fn graph_neighbors(b: &BinaryMap, p: Pixel) -> Vec<Pixel> {
    let mut out = Vec::with_capacity(4);
    for (dx, dy) in [(1, 0), (0, -1), (-1, 0), (0, 1)] {
        let q = Pixel::new(p.x + dx, p.y + dy);
        if b.at(q) {
            out.push(q);
        }
    }
    for (dx, dy) in [(1, -1), (-1, -1), (-1, 1), (1, 1)] {
        let q = Pixel::new(p.x + dx, p.y + dy);
        if b.at(q) && !b.at(Pixel::new(p.x + dx, p.y)) && !b.at(Pixel::new(p.x, p.y + dy)) {
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Splits a thin map into 8-connected simple paths.
///
/// Junctions are pixels of degree >= 3 in the pruned pixel graph (diagonal
/// links shadowed by a 4-connected detour are dropped). Runs of non-junction
/// pixels become segments; each junction pixel is then appended to the first
/// segment ending next to it, so the segments partition the on-pixels.
/// Closed curves become a single segment starting at their row-major first
/// pixel.
pub fn trace_segments(b: &BinaryMap) -> Result<Vec<BoundarySegment>> {
    if let Some((x, y)) = find_block(b) {
        return Err(Error::NotThin { x, y });
    }
    let on = b.on_pixels();
    let adjacency: HashMap<Pixel, Vec<Pixel>> =
        on.iter().map(|&p| (p, graph_neighbors(b, p))).collect();
    let is_junction = |p: &Pixel| adjacency[p].len() >= 3;

    let mut assigned: HashMap<Pixel, bool> = on.iter().map(|&p| (p, false)).collect();
    let mut segments: Vec<Vec<Pixel>> = Vec::new();

    let run_neighbors = |p: Pixel| -> Vec<Pixel> {
        adjacency[&p]
            .iter()
            .copied()
            .filter(|q| !is_junction(q))
            .collect()
    };

    for &seed in &on {
        if assigned[&seed] || is_junction(&seed) {
            continue;
        }
        // Collect the run component, then start from its first end pixel.
        let mut component = vec![seed];
        let mut stack = vec![seed];
        let mut in_component: HashMap<Pixel, ()> = HashMap::from([(seed, ())]);
        while let Some(p) = stack.pop() {
            for q in run_neighbors(p) {
                if in_component.insert(q, ()).is_none() {
                    component.push(q);
                    stack.push(q);
                }
            }
        }
        component.sort();
        let start = component
            .iter()
            .copied()
            .find(|&p| run_neighbors(p).len() <= 1)
            .unwrap_or(component[0]);

        let mut path = vec![start];
        assigned.insert(start, true);
        let mut current = start;
        while let Some(next) = run_neighbors(current)
            .into_iter()
            .find(|q| !assigned[q])
        {
            assigned.insert(next, true);
            path.push(next);
            current = next;
        }
        segments.push(path);
    }

    let mut pending: Vec<Pixel> = on.iter().copied().filter(|p| is_junction(p)).collect();
    loop {
        let before = pending.len();
        pending.retain(|&j| {
            for seg in segments.iter_mut() {
                if seg.last().is_some_and(|&e| adjacency[&j].contains(&e)) {
                    seg.push(j);
                    return false;
                }
                if seg.first().is_some_and(|&e| adjacency[&j].contains(&e)) {
                    seg.insert(0, j);
                    return false;
                }
            }
            true
        });
        if pending.is_empty() || pending.len() == before {
            break;
        }
    }

    // Junction clusters with no free segment end form their own paths.
    while let Some(&start) = pending.first() {
        let mut path = vec![start];
        pending.retain(|&p| p != start);
        let mut current = start;
        while let Some(pos) = pending
            .iter()
            .position(|p| adjacency[&current].contains(p))
        {
            current = pending.remove(pos);
            path.push(current);
        }
        segments.push(path);
    }

    Ok(segments
        .into_iter()
        .map(BoundarySegment::from_points_unchecked)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_valid(segs: &[BoundarySegment]) {
        for s in segs {
            assert!(BoundarySegment::new(s.points().to_vec()).is_ok());
        }
    }

    #[test]
    fn empty_map() {
        assert!(trace_segments(&BinaryMap::new(5, 5)).unwrap().is_empty());
    }

    #[test]
    fn horizontal_run() {
        let b = BinaryMap::from_pixels(8, 3, (1..6).map(|x| Pixel::new(x, 1)));
        let segs = trace_segments(&b).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 5);
        assert_eq!(segs[0].first(), Pixel::new(1, 1));
    }

    #[test]
    fn t_shape_three_segments() {
        let mut pixels: Vec<Pixel> = (0..7).map(|x| Pixel::new(x + 1, 1)).collect();
        pixels.extend((2..5).map(|y| Pixel::new(4, y)));
        let b = BinaryMap::from_pixels(10, 6, pixels.clone());
        let segs = trace_segments(&b).unwrap();
        assert_eq!(segs.len(), 3);
        assert_valid(&segs);
        let total: usize = segs.iter().map(BoundarySegment::len).sum();
        assert_eq!(total, pixels.len());
        let junction = Pixel::new(4, 1);
        let holders: Vec<_> = segs.iter().filter(|s| s.points().contains(&junction)).collect();
        assert_eq!(holders.len(), 1);
        // Every segment touches the junction pixel.
        for s in &segs {
            assert!(s.points().iter().any(|&p| p == junction || p.is_8_adjacent(junction)));
        }
    }

    #[test]
    fn closed_loop_single_segment() {
        let mut b = BinaryMap::new(10, 10);
        for i in 2..8 {
            b.set(i, 2, true);
            b.set(i, 7, true);
            b.set(2, i, true);
            b.set(7, i, true);
        }
        let segs = trace_segments(&b).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), b.count_ones());
        assert_valid(&segs);
    }

    #[test]
    fn rejects_thick() {
        let b = BinaryMap::from_pixels(
            3,
            3,
            [Pixel::new(0, 0), Pixel::new(1, 0), Pixel::new(0, 1), Pixel::new(1, 1)],
        );
        assert!(matches!(trace_segments(&b), Err(Error::NotThin { x: 0, y: 0 })));
    }

    proptest! {
        #[test]
        fn segments_partition_on_pixels(bits in proptest::collection::vec(any::<bool>(), 576)) {
            let b = crate::raster::morph_thin(&BinaryMap::from_vec(24, 24, bits).unwrap());
            let segs = trace_segments(&b).unwrap();
            let mut seen = std::collections::HashSet::new();
            for s in &segs {
                prop_assert!(BoundarySegment::new(s.points().to_vec()).is_ok());
                for &p in s.points() {
                    prop_assert!(b.at(p));
                    prop_assert!(seen.insert(p));
                }
            }
            prop_assert_eq!(seen.len(), b.count_ones());
        }
    }
}
