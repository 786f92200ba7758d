//! Even-odd polygon fill with pixel-centre containment.

use crate::error::{Error, Result};
use crate::masks::BinaryMask;

/// Shoelace area of a flat `[x0, y0, x1, y1, ...]` vertex list.
pub fn polygon_area(vertices: &[f64]) -> f64 {
    let n = vertices.len() / 2;
    let mut twice = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        twice += vertices[2 * i] * vertices[2 * j + 1] - vertices[2 * j] * vertices[2 * i + 1];
    }
    twice.abs() / 2.0
}

/// Rasterises one polygon: pixel `(i, j)` is set when its centre
/// `(i + 0.5, j + 0.5)` lies inside under the even-odd rule. A centre
/// exactly on a left edge counts as inside, on a right edge as outside.
pub fn rasterize_polygon(vertices: &[f64], width: usize, height: usize) -> Result<BinaryMask> {
    if vertices.len() < 6 || !vertices.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "polygon needs an even number (≥ 6) of coordinates, got {}",
            vertices.len()
        )));
    }
    if polygon_area(vertices) == 0.0 {
        return Err(Error::DegeneratePolygon);
    }
    let n = vertices.len() / 2;
    let mut mask = BinaryMask::empty(width, height);
    let mut crossings = Vec::with_capacity(n);
    for j in 0..height {
        let yc = j as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let k = (i + 1) % n;
            let (x0, y0) = (vertices[2 * i], vertices[2 * i + 1]);
            let (x1, y1) = (vertices[2 * k], vertices[2 * k + 1]);
            if (y0 > yc) != (y1 > yc) {
                crossings.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        crossings.sort_unstable_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let start = (pair[0] - 0.5).ceil().max(0.0);
            let end = (pair[1] - 0.5).ceil().min(width as f64);
            if end <= start {
                continue;
            }
            for i in start as usize..end as usize {
                mask.set(i, j, true);
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_interior_block() {
        let m = rasterize_polygon(&[1.0, 1.0, 5.0, 1.0, 5.0, 3.0, 1.0, 3.0], 8, 8).unwrap();
        assert_eq!(m.count(), 8);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(m.get(x, y), (1..5).contains(&x) && (1..3).contains(&y), "({x},{y})");
            }
        }
    }

    #[test]
    fn small_triangle_covers_one_centre() {
        let m = rasterize_polygon(&[2.2, 2.2, 3.0, 2.2, 2.2, 3.0], 6, 6).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(2, 2));
    }

    #[test]
    fn outside_canvas_is_empty() {
        let m = rasterize_polygon(&[20.0, 20.0, 30.0, 20.0, 30.0, 30.0], 8, 8).unwrap();
        assert_eq!(m.count(), 0);
        let m = rasterize_polygon(&[-9.0, -9.0, -1.0, -9.0, -1.0, -1.0], 8, 8).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn degenerate_is_flagged() {
        assert!(matches!(rasterize_polygon(&[0.0, 0.0, 1.0, 1.0, 2.0, 2.0], 4, 4), Err(Error::DegeneratePolygon)));
    }
}
