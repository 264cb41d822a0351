use super::{BinaryMap, Pixel};

/// Lattice offsets `(dx, dy)` with `dx² + dy² <= r²`.
pub fn disk_offsets(radius: u32) -> Vec<(i32, i32)> {
    let r = radius as i32;
    let r2 = i64::from(r) * i64::from(r);
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if i64::from(dx * dx + dy * dy) <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Dilates a point set by a disk of radius `radius`, clipped to the canvas.
/// Points outside the canvas contribute their in-canvas disk portion.
pub fn dilate_disk<'a, I>(points: I, radius: u32, width: usize, height: usize) -> BinaryMap
where
    I: IntoIterator<Item = &'a Pixel>,
{
    let offsets = disk_offsets(radius);
    let mut out = BinaryMap::new(width, height);
    for p in points {
        for (dx, dy) in &offsets {
            out.set_pixel(Pixel::new(p.x + dx, p.y + dy), true);
        }
    }
    out
}

/// Pixels within Euclidean distance `tolerance` of any on-pixel of `map`.
pub fn proximity_mask(map: &BinaryMap, tolerance: f64) -> BinaryMap {
    let r = tolerance.max(0.0).floor() as i32;
    let t2 = tolerance * tolerance;
    let offsets: Vec<(i32, i32)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| f64::from(dx * dx + dy * dy) <= t2)
        .collect();
    let mut out = BinaryMap::new(map.width(), map.height());
    for p in map.on_pixels() {
        for (dx, dy) in &offsets {
            out.set_pixel(Pixel::new(p.x + dx, p.y + dy), true);
        }
    }
    out
}
