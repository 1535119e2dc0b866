//! Fire-front comparison: marching-squares contour extraction and a
//! symmetric mean distance between the level sets of two fields.

use crate::fields::Grid;

/// Midpoints of the marching-squares segments of the `level` isoline.
pub fn contour_points(field: &[f64], grid: &Grid, level: f64) -> Vec<[f64; 2]> {
    let (nx, ny, dx) = (grid.nx(), grid.ny(), grid.dx());
    debug_assert_eq!(field.len(), nx * ny);
    let mut points = Vec::new();
    for iy in 0..ny.saturating_sub(1) {
        for ix in 0..nx - 1 {
            let v00 = field[iy * nx + ix];
            let v10 = field[iy * nx + ix + 1];
            let v01 = field[(iy + 1) * nx + ix];
            let v11 = field[(iy + 1) * nx + ix + 1];
            let mask = (v00 > level) as u8
                | ((v10 > level) as u8) << 1
                | ((v11 > level) as u8) << 2
                | ((v01 > level) as u8) << 3;
            if mask == 0 || mask == 15 {
                continue;
            }
            let (x, y) = (ix as f64 * dx, iy as f64 * dx);
            let interp = |a: f64, b: f64| (level - a) / (b - a);
            let bottom = || [x + interp(v00, v10) * dx, y];
            let right = || [x + dx, y + interp(v10, v11) * dx];
            let top = || [x + interp(v01, v11) * dx, y + dx];
            let left = || [x, y + interp(v00, v01) * dx];
            let mut push = |a: [f64; 2], b: [f64; 2]| {
                points.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            };
            match mask {
                1 => push(left(), bottom()),
                2 => push(bottom(), right()),
                3 => push(left(), right()),
                4 => push(right(), top()),
                5 => {
                    // saddle: split by the cell-center value
                    if 0.25 * (v00 + v10 + v01 + v11) > level {
                        push(left(), top());
                        push(bottom(), right());
                    } else {
                        push(left(), bottom());
                        push(right(), top());
                    }
                }
                6 => push(bottom(), top()),
                7 => push(left(), top()),
                8 => push(top(), left()),
                9 => push(bottom(), top()),
                10 => {
                    if 0.25 * (v00 + v10 + v01 + v11) > level {
                        push(left(), bottom());
                        push(right(), top());
                    } else {
                        push(left(), top());
                        push(bottom(), right());
                    }
                }
                11 => push(right(), top()),
                12 => push(left(), right()),
                13 => push(bottom(), right()),
                14 => push(bottom(), left()),
                _ => unreachable!(),
            }
        }
    }
    points
}

/// Symmetric mean distance (m) between the `level` contours of two fields;
/// +inf when either contour is empty.
pub fn front_distance(field_a: &[f64], field_b: &[f64], grid: &Grid, level: f64) -> f64 {
    let a = contour_points(field_a, grid, level);
    let b = contour_points(field_b, grid, level);
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    0.5 * (mean_nearest(&a, &b) + mean_nearest(&b, &a))
}

fn mean_nearest(from: &[[f64; 2]], to: &[[f64; 2]]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|p| {
            to.iter()
                .map(|q| {
                    let dx = p[0] - q[0];
                    let dy = p[1] - q[1];
                    (dx * dx + dy * dy).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / from.len() as f64
}
