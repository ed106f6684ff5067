//! Task-board model: component dimensions, the benchmark products at three
//! difficulty levels, scene generation for those products and ground-truth
//! operator statements.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{BoardConfig, Slot};
use crate::camera::CameraIntrinsics;
use crate::classification::{cell_of, Axis, ClassificationStatement, Extremum, SpatialDescriptor};
use crate::geometry::{BasePoint, ComponentFootprintSpec};
use crate::label::{Category, ComponentLabel, Size};
use crate::localization::Roi;
use crate::scene::{ComponentTruth, Footprint, SceneComponent, SceneError, SceneSpec};

/// Camera height above the table used for every benchmark scene.
pub const OPERATING_HEIGHT_MM: f64 = 400.0;

#[derive(Debug, Error, PartialEq)]
pub enum CaseError {
    #[error("case level must be 1, 2 or 3, got {0}")]
    BadLevel(u8),
    #[error("product index must be 1, 2 or 3, got {0}")]
    BadProduct(u8),
    #[error("could not place {0} components without overlap")]
    Placement(usize),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentModel {
    pub label: ComponentLabel,
    pub footprint: Footprint,
    pub height_mm: f64,
}

impl ComponentModel {
    pub fn footprint_spec(&self) -> ComponentFootprintSpec {
        let (min, max) = match self.footprint {
            Footprint::Rect {
                width_mm,
                length_mm,
            } => (width_mm.min(length_mm), width_mm.max(length_mm)),
            Footprint::Circle { diameter_mm } => (diameter_mm, diameter_mm),
        };
        ComponentFootprintSpec {
            category: self.label.to_string(),
            height_mm: self.height_mm,
            min_extent_mm: min,
            max_extent_mm: max,
        }
    }
}

/// Physical dimensions of each board component as seen from above. Gears
/// lie flat; pins stand upright.
pub fn model(label: ComponentLabel) -> ComponentModel {
    let idx = match label.size {
        Size::Small => 0,
        Size::Medium => 1,
        Size::Big => 2,
    };
    let (footprint, height_mm) = match label.category {
        Category::Gear => (
            Footprint::Circle {
                diameter_mm: [36.0, 48.0, 60.0][idx],
            },
            20.0,
        ),
        Category::CircularPin => (
            Footprint::Circle {
                diameter_mm: [10.0, 14.0, 18.0][idx],
            },
            [30.0, 35.0, 40.0][idx],
        ),
        Category::RectangularPin => (
            Footprint::Rect {
                width_mm: [10.0, 14.0, 18.0][idx],
                length_mm: [14.0, 18.0, 24.0][idx],
            },
            [30.0, 35.0, 40.0][idx],
        ),
    };
    ComponentModel {
        label,
        footprint,
        height_mm,
    }
}

pub fn footprint_specs() -> Vec<ComponentFootprintSpec> {
    ComponentLabel::all()
        .map(|l| model(l).footprint_spec())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    pub level: u8,
    pub index: u8,
    /// Assembly order.
    pub components: Vec<ComponentLabel>,
}

impl Product {
    /// Comma-separated instruction in assembly order.
    pub fn instruction(&self) -> String {
        self.components
            .iter()
            .map(ComponentLabel::phrase)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

const fn l(size: Size, category: Category) -> ComponentLabel {
    ComponentLabel::new(size, category)
}

use Category::{CircularPin as Cp, Gear as G, RectangularPin as Rp};
use Size::{Big as B, Medium as M, Small as S};

const TABLE: [[&[ComponentLabel]; 3]; 3] = [
    [
        &[l(S, G), l(S, Rp)],
        &[l(S, G), l(M, Rp)],
        &[l(M, G), l(S, Rp)],
    ],
    [
        &[l(S, G), l(M, Rp), l(M, Cp)],
        &[l(M, G), l(S, Rp), l(M, Cp)],
        &[l(M, G), l(M, Cp), l(S, G)],
    ],
    [
        &[l(B, G), l(S, G), l(S, Rp), l(S, Cp)],
        &[l(B, Cp), l(S, G), l(M, Rp), l(M, Cp)],
        &[l(B, Rp), l(M, G), l(S, Rp), l(S, G)],
    ],
];

pub fn product(level: u8, index: u8) -> Result<Product, CaseError> {
    if !(1..=3).contains(&level) {
        return Err(CaseError::BadLevel(level));
    }
    if !(1..=3).contains(&index) {
        return Err(CaseError::BadProduct(index));
    }
    Ok(Product {
        level,
        index,
        components: TABLE[level as usize - 1][index as usize - 1].to_vec(),
    })
}

/// All nine products, level-major.
pub fn products() -> Vec<Product> {
    (1..=3)
        .flat_map(|lv| (1..=3).map(move |i| product(lv, i).expect("in range")))
        .collect()
}

/// Two slots per component type, laid out on a grid beside the workspace.
pub fn default_board() -> BoardConfig {
    let mut slots = Vec::new();
    for (ci, category) in Category::ALL.into_iter().enumerate() {
        for (si, size) in Size::ALL.into_iter().enumerate() {
            for k in 0..2 {
                let label = ComponentLabel::new(size, category);
                slots.push(Slot {
                    id: format!(
                        "{}-{}-{}",
                        category.token().replace('_', "-"),
                        size.token(),
                        k + 1
                    ),
                    accepts: label,
                    place: BasePoint::new(
                        520.0 + 70.0 * ci as f64,
                        -175.0 + 70.0 * (2 * si + k) as f64,
                        15.0,
                    ),
                    occupied: false,
                });
            }
        }
    }
    BoardConfig::new(slots).expect("generated board is valid")
}

/// Pixel bounding box of a component's top face.
fn projected_box(
    c: &SceneComponent,
    surface: f64,
    intr: &CameraIntrinsics,
) -> (f64, f64, f64, f64) {
    let top = surface - c.height_mm;
    let (hx, hy) = match c.footprint {
        Footprint::Rect {
            width_mm,
            length_mm,
        } => (width_mm / 2.0, length_mm / 2.0),
        Footprint::Circle { diameter_mm } => (diameter_mm / 2.0, diameter_mm / 2.0),
    };
    let [x, y] = c.position_mm;
    (
        intr.px + intr.fx * (x - hx) / top,
        intr.py + intr.fy * (y - hy) / top,
        intr.px + intr.fx * (x + hx) / top,
        intr.py + intr.fy * (y + hy) / top,
    )
}

/// What a component looks like from above, before it is positioned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub label: Option<ComponentLabel>,
    pub footprint: Footprint,
    pub height_mm: f64,
}

impl From<ComponentModel> for Shape {
    fn from(m: ComponentModel) -> Self {
        Self {
            label: Some(m.label),
            footprint: m.footprint,
            height_mm: m.height_mm,
        }
    }
}

/// Randomly places `labels` on the table so that every top face lies inside
/// the ROI with a margin and top faces stay well apart.
pub fn place_components(
    labels: &[ComponentLabel],
    intr: &CameraIntrinsics,
    roi: &Roi,
    surface_mm: f64,
    rng: &mut impl Rng,
) -> Result<Vec<SceneComponent>, CaseError> {
    let shapes: Vec<Shape> = labels.iter().map(|&l| model(l).into()).collect();
    place_shapes(&shapes, intr, roi, surface_mm, rng)
}

/// Rejection sampler behind [`place_components`] for arbitrary shapes.
pub fn place_shapes(
    shapes: &[Shape],
    intr: &CameraIntrinsics,
    roi: &Roi,
    surface_mm: f64,
    rng: &mut impl Rng,
) -> Result<Vec<SceneComponent>, CaseError> {
    const MARGIN_PX: f64 = 12.0;
    const GAP_PX: f64 = 16.0;
    for _attempt in 0..200 {
        let mut placed: Vec<SceneComponent> = Vec::with_capacity(shapes.len());
        let mut boxes: Vec<(f64, f64, f64, f64)> = Vec::new();
        let mut ok = true;
        for (i, shape) in shapes.iter().enumerate() {
            let top = surface_mm - shape.height_mm;
            let to_mm_x = |u: f64| (u - intr.px) * top / intr.fx;
            let to_mm_y = |v: f64| (v - intr.py) * top / intr.fy;
            let mut found = None;
            for _ in 0..200 {
                let mut c = SceneComponent {
                    id: format!("c{}", i + 1),
                    label: shape.label,
                    footprint: shape.footprint,
                    height_mm: shape.height_mm,
                    position_mm: [
                        rng.random_range(to_mm_x(roi.x0 as f64)..to_mm_x(roi.x1 as f64)),
                        rng.random_range(to_mm_y(roi.y0 as f64)..to_mm_y(roi.y1 as f64)),
                    ],
                };
                c.position_mm = [
                    (c.position_mm[0] * 10.0).round() / 10.0,
                    (c.position_mm[1] * 10.0).round() / 10.0,
                ];
                let b = projected_box(&c, surface_mm, intr);
                let inside = b.0 >= roi.x0 as f64 + MARGIN_PX
                    && b.1 >= roi.y0 as f64 + MARGIN_PX
                    && b.2 <= roi.x1 as f64 - MARGIN_PX
                    && b.3 <= roi.y1 as f64 - MARGIN_PX;
                let clear = boxes.iter().all(|o| {
                    b.2 + GAP_PX < o.0
                        || o.2 + GAP_PX < b.0
                        || b.3 + GAP_PX < o.1
                        || o.3 + GAP_PX < b.1
                });
                if inside && clear {
                    found = Some((c, b));
                    break;
                }
            }
            match found {
                Some((c, b)) => {
                    placed.push(c);
                    boxes.push(b);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(placed);
        }
    }
    Err(CaseError::Placement(shapes.len()))
}

/// Noiseless scene for a benchmark product at the operating height.
pub fn product_scene(
    product: &Product,
    intr: &CameraIntrinsics,
    roi: &Roi,
    seed: u64,
) -> Result<SceneSpec, CaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let components = place_components(
        &product.components,
        intr,
        roi,
        OPERATING_HEIGHT_MM,
        &mut rng,
    )?;
    let scene = SceneSpec {
        surface_depth_mm: OPERATING_HEIGHT_MM,
        components,
        noise_sigma_mm: 0.0,
        dropout_rate: 0.0,
    };
    scene.ground_truth(intr)?;
    Ok(scene)
}

/// A random unlabelled shape: 20 to 60 mm tall, 10 to 40 mm across, with
/// rectangles no more than 3:1.
pub fn random_shape(rng: &mut impl Rng) -> Shape {
    let height_mm = rng.random_range(20.0..=60.0f64).round();
    let footprint = if rng.random_bool(0.5) {
        Footprint::Circle {
            diameter_mm: rng.random_range(10.0..=40.0f64).round(),
        }
    } else {
        let w = rng.random_range(10.0..=40.0f64).round();
        let l = rng.random_range(w..=(3.0 * w).min(40.0)).round();
        Footprint::Rect {
            width_mm: w,
            length_mm: l,
        }
    };
    Shape {
        label: None,
        footprint,
        height_mm,
    }
}

/// Scene with `n` random shapes at the operating height.
pub fn random_scene(
    n: usize,
    intr: &CameraIntrinsics,
    roi: &Roi,
    noise_sigma_mm: f64,
    dropout_rate: f64,
    rng: &mut impl Rng,
) -> Result<SceneSpec, CaseError> {
    let shapes: Vec<Shape> = (0..n).map(|_| random_shape(rng)).collect();
    let components = place_shapes(&shapes, intr, roi, OPERATING_HEIGHT_MM, rng)?;
    let scene = SceneSpec {
        surface_depth_mm: OPERATING_HEIGHT_MM,
        components,
        noise_sigma_mm,
        dropout_rate,
    };
    scene.ground_truth(intr)?;
    Ok(scene)
}

/// Minimum pixel clearance for a descriptor to count as unambiguous when
/// generated from ground truth rather than from detections.
const CLEARANCE_PX: f64 = 4.0;

fn robust_descriptor(
    idx: usize,
    centers: &[(f64, f64)],
    roi: &Roi,
    kind: usize,
) -> Option<SpatialDescriptor> {
    let (cx, cy) = centers[idx];
    let others = || {
        centers
            .iter()
            .enumerate()
            .filter(move |(j, _)| *j != idx)
            .map(|(_, c)| *c)
    };
    match kind {
        0 => {
            let bounds_x = [
                roi.x0 as f64,
                roi.x0 as f64 + roi.width() as f64 / 3.0,
                roi.x0 as f64 + 2.0 * roi.width() as f64 / 3.0,
            ];
            let bounds_y = [
                roi.y0 as f64,
                roi.y0 as f64 + roi.height() as f64 / 3.0,
                roi.y0 as f64 + 2.0 * roi.height() as f64 / 3.0,
            ];
            let near_edge = bounds_x[1..].iter().any(|b| (cx - b).abs() < CLEARANCE_PX)
                || bounds_y[1..].iter().any(|b| (cy - b).abs() < CLEARANCE_PX);
            let cell = cell_of(roi, cx, cy);
            let shared = others().any(|(ox, oy)| cell_of(roi, ox, oy) == cell);
            (!near_edge && !shared).then_some(cell)
        }
        1 => {
            let e = [
                Extremum::Leftmost,
                Extremum::Rightmost,
                Extremum::Topmost,
                Extremum::Bottommost,
            ];
            e.into_iter().find_map(|e| {
                let beats = |(ox, oy): (f64, f64)| match e {
                    Extremum::Leftmost => cx + CLEARANCE_PX < ox,
                    Extremum::Rightmost => cx > ox + CLEARANCE_PX,
                    Extremum::Topmost => cy + CLEARANCE_PX < oy,
                    _ => cy > oy + CLEARANCE_PX,
                };
                others()
                    .all(beats)
                    .then_some(SpatialDescriptor::Extremum(e))
            })
        }
        _ => {
            let axis = if kind == 2 { Axis::X } else { Axis::Y };
            let key = |c: (f64, f64)| if axis == Axis::X { c.0 } else { c.1 };
            let mine = key((cx, cy));
            if others().any(|o| (key(o) - mine).abs() < CLEARANCE_PX) {
                return None;
            }
            let rank = 1 + others().filter(|&o| key(o) < mine).count();
            Some(SpatialDescriptor::Ordinal { axis, rank })
        }
    }
}

/// Operator statements describing every labelled component by a position
/// that stays unambiguous under small centroid errors. Descriptor kinds are
/// drawn at random; statement order is shuffled.
pub fn ground_truth_statements(
    truths: &[ComponentTruth],
    roi: &Roi,
    rng: &mut impl Rng,
) -> Vec<ClassificationStatement> {
    let centers: Vec<(f64, f64)> = truths.iter().map(ComponentTruth::raster_centroid).collect();
    let mut stmts: Vec<ClassificationStatement> = truths
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let label = t.label?;
            let mut kinds = [0usize, 1, 2, 3];
            kinds.shuffle(rng);
            let descriptor = kinds
                .into_iter()
                .find_map(|k| robust_descriptor(i, &centers, roi, k))
                .unwrap_or_else(|| {
                    let rank = 1 + centers.iter().filter(|c| (c.0, c.1) < centers[i]).count();
                    SpatialDescriptor::Ordinal {
                        axis: Axis::X,
                        rank,
                    }
                });
            Some(ClassificationStatement { label, descriptor })
        })
        .collect();
    stmts.shuffle(rng);
    stmts
}

pub fn statements_text(stmts: &[ClassificationStatement]) -> String {
    stmts.iter().map(|s| format!("{s}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classification::{associate, parse_classification};
    use crate::localization::{BoundingBox, Candidate};

    #[test]
    fn table_products() {
        assert_eq!(
            product(1, 1).unwrap().instruction(),
            "small gear, small rectangular pin"
        );
        assert_eq!(
            product(1, 2).unwrap().instruction(),
            "small gear, medium rectangular pin"
        );
        assert_eq!(
            product(2, 3).unwrap().instruction(),
            "medium gear, medium circular pin, small gear"
        );
        assert_eq!(
            product(3, 2).unwrap().instruction(),
            "big circular pin, small gear, medium rectangular pin, medium circular pin"
        );
        assert_eq!(
            product(3, 3).unwrap().instruction(),
            "big rectangular pin, medium gear, small rectangular pin, small gear"
        );
        let counts: Vec<usize> = products().iter().map(|p| p.components.len()).collect();
        assert_eq!(counts, vec![2, 2, 2, 3, 3, 3, 4, 4, 4]);
        assert_eq!(product(4, 1), Err(CaseError::BadLevel(4)));
        assert_eq!(product(1, 0), Err(CaseError::BadProduct(0)));
    }

    #[test]
    fn board_has_two_slots_per_label() {
        let b = default_board();
        assert_eq!(b.slots.len(), 18);
        for l in ComponentLabel::all() {
            assert_eq!(b.free_slots_for(l).len(), 2);
        }
    }

    #[test]
    fn product_scenes_are_valid_and_deterministic() {
        let intr = CameraIntrinsics::default();
        let roi = Roi::with_margin(640, 480, 20);
        for p in products() {
            let a = product_scene(&p, &intr, &roi, 9).unwrap();
            assert_eq!(a, product_scene(&p, &intr, &roi, 9).unwrap());
            assert_eq!(a.components.len(), p.components.len());
        }
    }

    #[test]
    fn ground_truth_statements_bind_every_component() {
        let intr = CameraIntrinsics::default();
        let roi = Roi::with_margin(640, 480, 20);
        for seed in 0..30 {
            let p = product(3, 1 + (seed % 3) as u8).unwrap();
            let scene = product_scene(&p, &intr, &roi, seed).unwrap();
            let truths = scene.ground_truth(&intr).unwrap();
            let cands: Vec<Candidate> = truths
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let (cx, cy) = t.raster_centroid();
                    Candidate {
                        id: i,
                        cx,
                        cy,
                        z_mm: t.top_depth_mm,
                        area_px: t.pixels.len(),
                        bbox: BoundingBox {
                            x: 0,
                            y: 0,
                            w: 1,
                            h: 1,
                        },
                    }
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let stmts = ground_truth_statements(&truths, &roi, &mut rng);
            let reparsed = parse_classification(&statements_text(&stmts)).unwrap();
            assert_eq!(reparsed, stmts);
            let r = associate(&stmts, &cands, &roi);
            assert_eq!(r.bindings.len(), truths.len(), "seed {seed}: {r:?}");
            for b in &r.bindings {
                assert_eq!(Some(b.statement.label), truths[b.candidate_id].label);
            }
        }
    }

    #[test]
    fn footprint_specs_cover_all_labels() {
        let specs = footprint_specs();
        assert_eq!(specs.len(), 9);
        assert!(specs
            .iter()
            .all(|s| s.min_extent_mm <= s.max_extent_mm && s.height_mm > 10.0));
    }
}
