//! Independent reference implementations used to cross-check the library.
//! Each one is written for clarity rather than speed and shares no code
//! with the implementation it checks.

#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

/// Histogram mode by explicit counting in an ordered map. Ties resolve to
/// the smallest bin; the reported depth is the bin's integer midpoint.
pub fn counting_mode(values: &[u16], bin_width: u16) -> Option<f64> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry(v as u32 / bin_width as u32).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    let bin = counts.iter().find(|(_, &c)| c == best).map(|(&b, _)| b)?;
    let lo = bin as f64 * bin_width as f64;
    let hi = lo + bin_width as f64 - 1.0;
    Some((lo + hi) / 2.0)
}

/// Areas of 8-connected foreground regions found by breadth-first flood
/// fill, sorted ascending.
pub fn flood_fill_areas(width: usize, height: usize, bits: &[bool]) -> Vec<usize> {
    let mut seen = vec![false; bits.len()];
    let mut areas = Vec::new();
    for start in 0..bits.len() {
        if !bits[start] || seen[start] {
            continue;
        }
        let mut area = 0;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = ((i % width) as i64, (i / width) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if bits[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        areas.push(area);
    }
    areas.sort_unstable();
    areas
}

/// Arithmetic mean of pixel coordinates.
pub fn coordinate_mean(pixels: &[(u32, u32)]) -> (f64, f64) {
    let n = pixels.len() as f64;
    let sx: f64 = pixels.iter().map(|p| p.0 as f64).sum();
    let sy: f64 = pixels.iter().map(|p| p.1 as f64).sum();
    (sx / n, sy / n)
}

/// The four directional passes applied to a single row (a 1×N image, so
/// the vertical passes see one sample per column and do nothing).
pub fn spatial_row(row: &[f64], alpha: f64, delta: f64, iterations: usize) -> Vec<f64> {
    fn pass(v: &mut [f64], alpha: f64, delta: f64) {
        let mut prev: Option<f64> = None;
        for x in v.iter_mut() {
            if *x <= 0.0 {
                prev = None;
                continue;
            }
            if let Some(p) = prev {
                if (*x - p).abs() <= delta {
                    *x = alpha * *x + (1.0 - alpha) * p;
                }
            }
            prev = Some(*x);
        }
    }
    let mut v = row.to_vec();
    for _ in 0..iterations {
        pass(&mut v, alpha, delta);
        v.reverse();
        pass(&mut v, alpha, delta);
        v.reverse();
    }
    v
}

/// Scalar temporal recurrence for one pixel over a stream.
pub fn temporal_scalar(stream: &[f64], alpha: f64, delta: f64) -> Vec<f64> {
    let mut history: Option<f64> = None;
    stream
        .iter()
        .map(|&cur| {
            let out = if cur > 0.0 {
                match history {
                    Some(h) if (cur - h).abs() <= delta => alpha * cur + (1.0 - alpha) * h,
                    _ => cur,
                }
            } else {
                history.unwrap_or(0.0)
            };
            history = if out > 0.0 { Some(out) } else { None };
            out
        })
        .collect()
}

/// Number of holes that are not part of a row's leading run of holes.
pub fn non_prefix_holes(width: usize, data: &[f64]) -> usize {
    data.chunks(width)
        .map(|row| {
            let lead = row.iter().take_while(|v| **v <= 0.0).count();
            row[lead..].iter().filter(|v| **v <= 0.0).count()
        })
        .sum()
}

/// Row-major 4×4 product with explicit loops.
pub fn matmul4(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Builds `[R t; 0 1]` from a row-major rotation and a translation.
pub fn homogeneous(r: &[f64; 9], t: &[f64; 3]) -> [[f64; 4]; 4] {
    [
        [r[0], r[1], r[2], t[0]],
        [r[3], r[4], r[5], t[1]],
        [r[6], r[7], r[8], t[2]],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Rodrigues' formula written out component by component.
pub fn rotation_from_axis_angle(axis: [f64; 3], angle: f64) -> [f64; 9] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        t * x * x + c,
        t * x * y - s * z,
        t * x * z + s * y,
        t * x * y + s * z,
        t * y * y + c,
        t * y * z - s * x,
        t * x * z - s * y,
        t * y * z + s * x,
        t * z * z + c,
    ]
}

/// Camera-height interval found by scanning z and evaluating the projected
/// area directly. Returns the first and last admissible samples.
#[allow(clippy::too_many_arguments)]
pub fn sampled_height_range(
    min_extent: f64,
    max_extent: f64,
    height: f64,
    min_height: f64,
    aspect_max: f64,
    area_min: f64,
    area_max: f64,
    fx: f64,
    fy: f64,
    d_min: f64,
    d_max: f64,
    step: f64,
) -> Option<(f64, f64)> {
    if height <= min_height || max_extent / min_extent > aspect_max {
        return None;
    }
    let mut lo = None;
    let mut hi = None;
    let mut z = d_min;
    while z <= d_max {
        let side_px_x = min_extent * fx / z;
        let side_px_y = min_extent * fy / z;
        let area = side_px_x * side_px_y;
        if area >= area_min && area <= area_max {
            lo.get_or_insert(z);
            hi = Some(z);
        }
        z += step;
    }
    Some((lo?, hi?))
}
