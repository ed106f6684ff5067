//! Binary masks, 8-connected region labelling and boundary tracing.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == width as usize * height as usize).then_some(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    /// Bounds-checked read with signed coordinates; outside reads as false.
    #[inline]
    fn at(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && x < self.width as i64
            && y < self.height as i64
            && self.get(x as u32, y as u32)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x as f64
            && py >= self.y as f64
            && px <= (self.x + self.w - 1) as f64
            && py <= (self.y + self.h - 1) as f64
    }
}

/// One 8-connected foreground region.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    /// Outer boundary, traced clockwise from the region's first raster pixel.
    /// Consecutive entries (cyclically) are 8-neighbours.
    pub boundary: Vec<(u32, u32)>,
    /// Every pixel of the region in raster order.
    pub pixels: Vec<(u32, u32)>,
    pub bbox: BoundingBox,
}

impl Contour {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

fn find_root(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        parent[i as usize] = parent[parent[i as usize] as usize];
        i = parent[i as usize];
    }
    i
}

fn union(parent: &mut [u32], a: u32, b: u32) -> u32 {
    let (ra, rb) = (find_root(parent, a), find_root(parent, b));
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi as usize] = lo;
    lo
}

/// Clockwise Moore neighbourhood (image y grows downward), starting east.
const RING: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];
const WEST: usize = 4;

fn ring_index(dx: i64, dy: i64) -> usize {
    RING.iter()
        .position(|&d| d == (dx, dy))
        .expect("unit offset")
}

/// Moore-neighbour tracing. `start` must be the first pixel of its region
/// in raster order, so its west neighbour is background. The walk ends when
/// it is about to repeat its first step out of `start`.
fn trace_boundary(mask: &BinaryMask, start: (u32, u32)) -> Vec<(u32, u32)> {
    let s = (start.0 as i64, start.1 as i64);
    let mut boundary = vec![start];
    let (mut p, mut back) = (s, WEST);
    let mut first_step: Option<(i64, i64)> = None;
    let limit = 4 * (mask.width as usize * mask.height as usize) + 8;
    for _ in 0..limit {
        let mut next = None;
        for i in 1..=8 {
            let d = (back + i) % 8;
            let q = (p.0 + RING[d].0, p.1 + RING[d].1);
            if mask.at(q.0, q.1) {
                let prev = (back + i - 1) % 8;
                let b = (p.0 + RING[prev].0, p.1 + RING[prev].1);
                next = Some((q, ring_index(b.0 - q.0, b.1 - q.1)));
                break;
            }
        }
        let Some((q, qback)) = next else {
            return boundary;
        };
        if p == s {
            match first_step {
                None => first_step = Some(q),
                Some(f) if f == q => {
                    boundary.pop();
                    return boundary;
                }
                Some(_) => {}
            }
        }
        boundary.push((q.0 as u32, q.1 as u32));
        p = q;
        back = qback;
    }
    boundary
}

/// Labels 8-connected foreground regions with a two-pass union-find and
/// traces each region's outer boundary. Regions come out ordered by the
/// top, then left edge of their bounding box.
pub fn find_contours(mask: &BinaryMask) -> Vec<Contour> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut labels = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            if !mask.bits[y * w + x] {
                continue;
            }
            let mut label = 0u32;
            // Already-visited neighbours: W, NW, N, NE.
            for (dx, dy) in [(-1i64, 0i64), (-1, -1), (0, -1), (1, -1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 {
                    continue;
                }
                let nl = labels[ny as usize * w + nx as usize];
                if nl != 0 {
                    label = if label == 0 {
                        nl
                    } else {
                        union(&mut parent, label, nl)
                    };
                }
            }
            if label == 0 {
                label = parent.len() as u32;
                parent.push(label);
            }
            labels[y * w + x] = label;
        }
    }

    let mut root_to_region: Vec<Option<usize>> = vec![None; parent.len()];
    let mut regions: Vec<Vec<(u32, u32)>> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = find_root(&mut parent, l) as usize;
            let slot = *root_to_region[root].get_or_insert_with(|| {
                regions.push(Vec::new());
                regions.len() - 1
            });
            regions[slot].push((x as u32, y as u32));
        }
    }

    let mut contours: Vec<Contour> = regions
        .into_iter()
        .map(|pixels| {
            let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
            for &(x, y) in &pixels {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
            let boundary = trace_boundary(mask, pixels[0]);
            Contour {
                boundary,
                pixels,
                bbox: BoundingBox {
                    x: x0,
                    y: y0,
                    w: x1 - x0 + 1,
                    h: y1 - y0 + 1,
                },
            }
        })
        .collect();
    contours.sort_by_key(|c| (c.bbox.y, c.bbox.x, c.pixels[0].1, c.pixels[0].0));
    contours
}

/// Image-moment centroid over the region's pixels: `(M10 / M00, M01 / M00)`.
pub fn contour_centroid(contour: &Contour) -> (f64, f64) {
    let (m00, m10, m01) = contour
        .pixels
        .iter()
        .fold((0u64, 0u64, 0u64), |(m00, m10, m01), &(x, y)| {
            (m00 + 1, m10 + x as u64, m01 + y as u64)
        });
    (m10 as f64 / m00 as f64, m01 as f64 / m00 as f64)
}
