//! Operator classification statements and their binding to candidates.
//!
//! One statement per line: `<size> <category> : <descriptor>`, e.g.
//! `small gear: top-left` or `medium circular_pin: 2nd from left`.
//! Descriptors are a 3×3 grid cell over the ROI (`top-left` …
//! `bottom-right`, middle row `middle-*`, middle column `*-center`), an
//! extremum (`leftmost`, `rightmost`, `topmost`, `bottommost`, `center`), or
//! an ordinal along an axis (`Nth from left`, `Nth from top`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::label::ComponentLabel;
use crate::localization::{Candidate, Roi};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: cannot parse {text:?}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    Leftmost,
    Rightmost,
    Topmost,
    Bottommost,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpatialDescriptor {
    /// Row and column in `1..=3`, counted from the top-left.
    GridCell {
        row: u8,
        col: u8,
    },
    Ordinal {
        axis: Axis,
        rank: usize,
    },
    Extremum(Extremum),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassificationStatement {
    pub label: ComponentLabel,
    pub descriptor: SpatialDescriptor,
}

const ROWS: [&str; 3] = ["top", "middle", "bottom"];
const COLS: [&str; 3] = ["left", "center", "right"];

fn ordinal_suffix(n: usize) -> &'static str {
    match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    }
}

impl fmt::Display for SpatialDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SpatialDescriptor::GridCell { row, col } => {
                write!(f, "{}-{}", ROWS[row as usize - 1], COLS[col as usize - 1])
            }
            SpatialDescriptor::Ordinal { axis, rank } => {
                let side = match axis {
                    Axis::X => "left",
                    Axis::Y => "top",
                };
                write!(f, "{rank}{} from {side}", ordinal_suffix(rank))
            }
            SpatialDescriptor::Extremum(e) => f.write_str(match e {
                Extremum::Leftmost => "leftmost",
                Extremum::Rightmost => "rightmost",
                Extremum::Topmost => "topmost",
                Extremum::Bottommost => "bottommost",
                Extremum::Center => "center",
            }),
        }
    }
}

impl FromStr for SpatialDescriptor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let words: Vec<&str> = s.split_whitespace().collect();
        match words.as_slice() {
            ["leftmost"] => return Ok(SpatialDescriptor::Extremum(Extremum::Leftmost)),
            ["rightmost"] => return Ok(SpatialDescriptor::Extremum(Extremum::Rightmost)),
            ["topmost"] => return Ok(SpatialDescriptor::Extremum(Extremum::Topmost)),
            ["bottommost"] => return Ok(SpatialDescriptor::Extremum(Extremum::Bottommost)),
            ["center"] => return Ok(SpatialDescriptor::Extremum(Extremum::Center)),
            [nth, "from", side] => {
                let axis = match *side {
                    "left" => Axis::X,
                    "top" => Axis::Y,
                    other => return Err(format!("ordinals count from left or top, not {other:?}")),
                };
                let digits = nth.trim_end_matches(|c: char| c.is_ascii_alphabetic());
                let suffix = &nth[digits.len()..];
                let rank: usize = digits.parse().map_err(|_| format!("bad ordinal {nth:?}"))?;
                if rank == 0 || suffix != ordinal_suffix(rank) {
                    return Err(format!("bad ordinal {nth:?}"));
                }
                return Ok(SpatialDescriptor::Ordinal { axis, rank });
            }
            [cell] => {
                if let Some((r, c)) = cell.split_once('-') {
                    let row = ROWS.iter().position(|&x| x == r);
                    let col = COLS.iter().position(|&x| x == c);
                    if let (Some(row), Some(col)) = (row, col) {
                        return Ok(SpatialDescriptor::GridCell {
                            row: row as u8 + 1,
                            col: col as u8 + 1,
                        });
                    }
                }
            }
            _ => {}
        }
        Err(format!("unknown position {s:?}"))
    }
}

impl Serialize for SpatialDescriptor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpatialDescriptor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for ClassificationStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.label, self.descriptor)
    }
}

impl Serialize for ClassificationStatement {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClassificationStatement {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_statement(&s).map_err(serde::de::Error::custom)
    }
}

fn parse_statement(line: &str) -> Result<ClassificationStatement, String> {
    let (label, descriptor) = line
        .split_once(':')
        .ok_or("expected `<size> <category>: <position>`")?;
    let label = label.parse::<ComponentLabel>().map_err(|e| e.to_string())?;
    let descriptor = descriptor.parse()?;
    Ok(ClassificationStatement { label, descriptor })
}

/// Parses operator input, one statement per non-blank line. `#` starts a
/// comment line. The first bad line aborts with its 1-based number.
pub fn parse_classification(text: &str) -> Result<Vec<ClassificationStatement>, ParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            parse_statement(l).map_err(|reason| ParseError {
                line: i + 1,
                text: l.to_string(),
                reason,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum UnmatchedReason {
    /// Nothing unbound satisfies the descriptor.
    NoCandidate,
    /// More than one unbound candidate satisfies it.
    Ambiguous { candidate_ids: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub statement: ClassificationStatement,
    pub candidate_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unmatched {
    pub statement: ClassificationStatement,
    #[serde(flatten)]
    pub reason: UnmatchedReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationResult {
    pub bindings: Vec<Binding>,
    pub unmatched: Vec<Unmatched>,
    pub unclaimed: Vec<usize>,
}

impl AssociationResult {
    pub fn label_of(&self, candidate_id: usize) -> Option<ComponentLabel> {
        self.bindings
            .iter()
            .find(|b| b.candidate_id == candidate_id)
            .map(|b| b.statement.label)
    }
}

fn grid_cell(roi: &Roi, cx: f64, cy: f64) -> (u8, u8) {
    let third = |v: f64, lo: u32, len: u32| {
        let t = ((v - lo as f64) / len as f64 * 3.0).floor();
        t.clamp(0.0, 2.0) as u8 + 1
    };
    (
        third(cy, roi.y0, roi.height()),
        third(cx, roi.x0, roi.width()),
    )
}

/// Candidates attaining the extreme value of `key`, all of them on ties.
fn extreme_by(cands: &[Candidate], key: impl Fn(&Candidate) -> f64) -> Vec<usize> {
    let best = cands.iter().map(&key).fold(f64::INFINITY, f64::min);
    cands
        .iter()
        .filter(|c| key(c) == best)
        .map(|c| c.id)
        .collect()
}

/// Scene-level resolution of a descriptor, ignoring bindings.
fn resolve_scene(desc: &SpatialDescriptor, cands: &[Candidate], roi: &Roi) -> Vec<usize> {
    match *desc {
        SpatialDescriptor::GridCell { .. } => {
            unreachable!("grid cells resolve against unbound candidates")
        }
        SpatialDescriptor::Extremum(e) => {
            let (mx, my) = (
                (roi.x0 + roi.x1) as f64 / 2.0,
                (roi.y0 + roi.y1) as f64 / 2.0,
            );
            match e {
                Extremum::Leftmost => extreme_by(cands, |c| c.cx),
                Extremum::Rightmost => extreme_by(cands, |c| -c.cx),
                Extremum::Topmost => extreme_by(cands, |c| c.cy),
                Extremum::Bottommost => extreme_by(cands, |c| -c.cy),
                Extremum::Center => {
                    extreme_by(cands, |c| (c.cx - mx).powi(2) + (c.cy - my).powi(2))
                }
            }
        }
        SpatialDescriptor::Ordinal { axis, rank } => {
            let mut sorted: Vec<&Candidate> = cands.iter().collect();
            sorted.sort_by(|a, b| {
                let (ka, kb) = match axis {
                    Axis::X => ((a.cx, a.cy), (b.cx, b.cy)),
                    Axis::Y => ((a.cy, a.cx), (b.cy, b.cx)),
                };
                ka.partial_cmp(&kb)
                    .expect("finite centroids")
                    .then(a.id.cmp(&b.id))
            });
            sorted.get(rank - 1).map(|c| vec![c.id]).unwrap_or_default()
        }
    }
}

/// Binds statements to candidates greedily in statement order.
///
/// Grid cells are thirds of the ROI and match only still-unbound candidates
/// in the cell. Extrema and ordinals describe the whole scene as the
/// operator sees it: they pick among all candidates, and a pick that is
/// already bound leaves the statement unmatched.
pub fn associate(
    stmts: &[ClassificationStatement],
    cands: &[Candidate],
    roi: &Roi,
) -> AssociationResult {
    let mut bound = vec![false; cands.len()];
    let index_of = |id: usize| {
        cands
            .iter()
            .position(|c| c.id == id)
            .expect("id from candidate list")
    };
    let mut result = AssociationResult::default();
    for stmt in stmts {
        let matches: Vec<usize> = match stmt.descriptor {
            SpatialDescriptor::GridCell { row, col } => cands
                .iter()
                .enumerate()
                .filter(|(i, c)| !bound[*i] && grid_cell(roi, c.cx, c.cy) == (row, col))
                .map(|(_, c)| c.id)
                .collect(),
            ref other => resolve_scene(other, cands, roi)
                .into_iter()
                .filter(|&id| !bound[index_of(id)])
                .collect(),
        };
        match matches.as_slice() {
            [] => result.unmatched.push(Unmatched {
                statement: *stmt,
                reason: UnmatchedReason::NoCandidate,
            }),
            [id] => {
                bound[index_of(*id)] = true;
                result.bindings.push(Binding {
                    statement: *stmt,
                    candidate_id: *id,
                });
            }
            ids => result.unmatched.push(Unmatched {
                statement: *stmt,
                reason: UnmatchedReason::Ambiguous {
                    candidate_ids: ids.to_vec(),
                },
            }),
        }
    }
    result.unclaimed = cands
        .iter()
        .zip(&bound)
        .filter(|(_, b)| !**b)
        .map(|(c, _)| c.id)
        .collect();
    result
}

/// Grid cell of a centroid, for building statements from known positions.
pub fn cell_of(roi: &Roi, cx: f64, cy: f64) -> SpatialDescriptor {
    let (row, col) = grid_cell(roi, cx, cy);
    SpatialDescriptor::GridCell { row, col }
}
