//! Level-set tracing, polyline sampling, areas and SVG output.
//!
//! A contour is a circular sequence of per-cell pieces. Each piece runs
//! between two crossings on the cell boundary and is either a straight
//! segment (cells with `d = 0`) or an arc of the hyperbola
//! `(u - u*)(v - v*) = (level - saddle) / d`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{BilinearField, CellCoefficients};
use crate::tree::{Samples, SeedEntry, Site};

/// Tolerance under which a level counts as equal to a cell saddle value,
/// and under which a hyperbolic arc counts as straight.
pub const CRITICAL_TOL: f64 = 1e-12;

/// Default maximum distance between a hyperbolic arc and its chords.
pub const DEFAULT_CHORD_TOL: f64 = 0.05;

const MAX_SUBDIVISION_DEPTH: u32 = 48;

pub type Point = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PieceKind {
    Linear,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePiece {
    pub cell: (usize, usize),
    pub entry: Point,
    pub exit: Point,
    pub kind: PieceKind,
    pub coefficients: CellCoefficients,
    pub level: f64,
}

impl CurvePiece {
    fn new(coefficients: CellCoefficients, entry: Point, exit: Point, level: f64) -> Self {
        let mut piece = Self {
            cell: coefficients.cell,
            entry,
            exit,
            kind: PieceKind::Hyperbolic,
            coefficients,
            level,
        };
        if coefficients.d == 0.0 || piece.max_chord_deviation() <= CRITICAL_TOL {
            piece.kind = PieceKind::Linear;
        }
        piece
    }

    fn reversed(&self) -> Self {
        Self {
            entry: self.exit,
            exit: self.entry,
            ..*self
        }
    }

    fn origin(&self) -> Point {
        (self.cell.0 as f64, self.cell.1 as f64)
    }

    /// Hyperbola centre in image coordinates and the constant `k` of
    /// `(x - cx)(y - cy) = k`.
    fn hyperbola(&self) -> Option<(Point, f64)> {
        let (uc, vc, s) = self.coefficients.center()?;
        let (ox, oy) = self.origin();
        Some(((ox + uc, oy + vc), (self.level - s) / self.coefficients.d))
    }

    /// Signed area enclosed by the arc from entry to exit followed by the
    /// chord back to the entry.
    fn arc_chord_area(&self) -> f64 {
        if self.kind == PieceKind::Linear {
            return 0.0;
        }
        let Some(((cx, cy), k)) = self.hyperbola() else {
            return 0.0;
        };
        let (u1, u2) = (self.entry.0 - cx, self.exit.0 - cx);
        let (v1, v2) = (self.entry.1 - cy, self.exit.1 - cy);
        (u2 - u1) * (v1 + v2) / 2.0 - k * ((u2 - u1) / u1).ln_1p()
    }

    fn max_chord_deviation(&self) -> f64 {
        match self.hyperbola() {
            Some((center, k)) => {
                let p = Param::new(center, k, self.entry, self.exit);
                let (t1, t2) = (p.param(self.entry), p.param(self.exit));
                chord_deviation(self.entry, self.exit, p.point(p.tangent_param(t1, t2)))
            }
            None => 0.0,
        }
    }
}

/// Parameterisation of a hyperbola branch by whichever coordinate varies
/// more between the two end points.
struct Param {
    center: Point,
    k: f64,
    by_x: bool,
}

impl Param {
    fn new(center: Point, k: f64, a: Point, b: Point) -> Self {
        Self {
            center,
            k,
            by_x: (b.0 - a.0).abs() >= (b.1 - a.1).abs(),
        }
    }

    fn param(&self, p: Point) -> f64 {
        if self.by_x {
            p.0 - self.center.0
        } else {
            p.1 - self.center.1
        }
    }

    fn point(&self, t: f64) -> Point {
        if self.by_x {
            (self.center.0 + t, self.center.1 + self.k / t)
        } else {
            (self.center.0 + self.k / t, self.center.1 + t)
        }
    }

    /// Parameter where the tangent is parallel to the chord between `t1`
    /// and `t2`: their geometric mean.
    fn tangent_param(&self, t1: f64, t2: f64) -> f64 {
        t1.signum() * (t1 * t2).abs().sqrt()
    }
}

fn chord_deviation(a: Point, b: Point, p: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return (p.0 - a.0).hypot(p.1 - a.1);
    }
    ((p.0 - a.0) * dy - (p.1 - a.1) * dx).abs() / len
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contour {
    pub level: f64,
    pub pieces: Vec<CurvePiece>,
    /// Closed polyline without the repeated start point.
    pub polyline: Vec<Point>,
    /// Area enclosed by the exact curve, positive when counter-clockwise.
    pub signed_area: f64,
}

impl Contour {
    fn new(level: f64, pieces: Vec<CurvePiece>) -> Self {
        let corners: Vec<Point> = pieces.iter().map(|p| p.entry).collect();
        let arcs: f64 = pieces.iter().map(CurvePiece::arc_chord_area).sum();
        Self {
            level,
            signed_area: shoelace(&corners) + arcs,
            pieces,
            polyline: Vec::new(),
        }
    }

    /// Fills `polyline` for the given chord tolerance.
    pub fn sample(&mut self, chord_tol: f64) {
        self.polyline = polyline_sample(&self.pieces, chord_tol);
    }
}

/// Local edge `e` of a cell joins corner `e` to corner `e + 1`. Corners are
/// `(0,0), (1,0), (1,1), (0,1)` in local coordinates.
const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct State {
    cell: (usize, usize),
    edge: usize,
}

struct Tracer<'a> {
    field: &'a BilinearField<'a>,
    level: f64,
}

impl Tracer<'_> {
    fn corner_values(&self, (i, j): (usize, usize)) -> [f64; 4] {
        let g = self.field.grid();
        CORNERS.map(|(di, dj)| g.get(i + di, j + dj))
    }

    fn crosses(&self, f: &[f64; 4], edge: usize) -> bool {
        (f[edge] >= self.level) != (f[(edge + 1) % 4] >= self.level)
    }

    /// Crossing on a local edge, computed from the edge's canonical
    /// orientation (left to right, top to bottom) so both adjacent cells
    /// produce the identical point.
    fn crossing(&self, (i, j): (usize, usize), edge: usize) -> Point {
        let g = self.field.grid();
        let (x0, y0, horizontal) = match edge {
            0 => (i, j, true),
            1 => (i + 1, j, false),
            2 => (i, j + 1, true),
            _ => (i, j, false),
        };
        let (f0, f1) = if horizontal {
            (g.get(x0, y0), g.get(x0 + 1, y0))
        } else {
            (g.get(x0, y0), g.get(x0, y0 + 1))
        };
        let t = ((self.level - f0) / (f1 - f0)).clamp(0.0, 1.0);
        if horizontal {
            (x0 as f64 + t, y0 as f64)
        } else {
            (x0 as f64, y0 as f64 + t)
        }
    }

    fn exit_edge(&self, cell: (usize, usize), entry: usize) -> Result<usize> {
        let f = self.corner_values(cell);
        let crossed: Vec<usize> = (0..4).filter(|&e| self.crosses(&f, e)).collect();
        match crossed.len() {
            2 if crossed.contains(&entry) => Ok(if crossed[0] == entry {
                crossed[1]
            } else {
                crossed[0]
            }),
            4 => {
                let c = self.field.coefficients(cell.0, cell.1);
                let (_, _, s) = c.center().ok_or(Error::CriticalLevel(self.level))?;
                if (self.level - s).abs() <= CRITICAL_TOL {
                    return Err(Error::CriticalLevel(self.level));
                }
                // Above the saddle value the pieces cut off the upper
                // corners, below it the lower ones.
                let isolate_above = self.level > s;
                let next = (entry + 1) % 4;
                Ok(if (f[next] >= self.level) == isolate_above {
                    next
                } else {
                    (entry + 3) % 4
                })
            }
            _ => Err(Error::CriticalLevel(self.level)),
        }
    }

    fn neighbor(&self, State { cell: (i, j), edge }: State) -> Option<State> {
        let (cx, cy) = (self.field.cells_x(), self.field.cells_y());
        let (ni, nj) = match edge {
            0 => (i, j.checked_sub(1)?),
            1 => (i + 1, j),
            2 => (i, j + 1),
            _ => (i.checked_sub(1)?, j),
        };
        (ni < cx && nj < cy).then_some(State {
            cell: (ni, nj),
            edge: (edge + 2) % 4,
        })
    }

    fn trace(&self, start: State) -> Result<Vec<CurvePiece>> {
        let limit = 4 * self.field.cells_x() * self.field.cells_y() + 4;
        let mut pieces = Vec::new();
        let mut state = start;
        let first = self.crossing(start.cell, start.edge);
        let mut entry = first;
        loop {
            let exit_edge = self.exit_edge(state.cell, state.edge)?;
            let out = State {
                cell: state.cell,
                edge: exit_edge,
            };
            let next = self.neighbor(out).ok_or(Error::OpenContour(self.level))?;
            let exit = if next == start {
                first
            } else {
                self.crossing(state.cell, exit_edge)
            };
            let c = self.field.coefficients(state.cell.0, state.cell.1);
            pieces.push(CurvePiece::new(c, entry, exit, self.level));
            if next == start {
                return Ok(pieces);
            }
            if pieces.len() > limit {
                return Err(Error::OpenContour(self.level));
            }
            entry = exit;
            state = next;
        }
    }

    /// Start state for a seed edge: a grid edge, or the segment from a
    /// cell corner to the cell's saddle.
    fn start(&self, samples: &Samples, seed: &SeedEntry) -> Result<State> {
        let cell = seed.cell;
        let lost = || Error::SeedLookup {
            arc: usize::MAX,
            value: self.level,
        };
        let local = |site: Site| -> Option<usize> {
            match site {
                Site::Vertex(x, y) => {
                    let (dx, dy) = (
                        (x as usize).checked_sub(cell.0)?,
                        (y as usize).checked_sub(cell.1)?,
                    );
                    CORNERS.iter().position(|&c| c == (dx, dy))
                }
                Site::Cell(..) => None,
            }
        };
        let (sa, sb) = (samples.get(seed.below).site, samples.get(seed.above).site);
        let f = self.corner_values(cell);
        let edge = match (local(sa), local(sb)) {
            (Some(ka), Some(kb)) => {
                if (ka + 1) % 4 == kb {
                    ka
                } else if (kb + 1) % 4 == ka {
                    kb
                } else {
                    return Err(lost());
                }
            }
            (Some(k), None) | (None, Some(k)) => {
                let (before, after) = ((k + 3) % 4, k);
                if self.crosses(&f, after) {
                    after
                } else if self.crosses(&f, before) {
                    before
                } else {
                    return Err(lost());
                }
            }
            (None, None) => return Err(lost()),
        };
        if !self.crosses(&f, edge) {
            return Err(lost());
        }
        Ok(State { cell, edge })
    }

    /// Reverses the pieces if needed so the side above the level lies to
    /// the left of the direction of travel.
    fn orient(&self, start: State, pieces: &mut [CurvePiece]) {
        let (i, j) = start.cell;
        let (a, b) = (CORNERS[start.edge], CORNERS[(start.edge + 1) % 4]);
        let g = self.field.grid();
        let (pa, pb) = (
            ((i + a.0) as f64, (j + a.1) as f64),
            ((i + b.0) as f64, (j + b.1) as f64),
        );
        let (up, down) = if g.get(i + a.0, j + a.1) >= self.level {
            (pa, pb)
        } else {
            (pb, pa)
        };
        let p = &pieces[0];
        let t = (p.exit.0 - p.entry.0, p.exit.1 - p.entry.1);
        let normal = (-t.1, t.0);
        if normal.0 * (up.0 - down.0) + normal.1 * (up.1 - down.1) < 0.0 {
            pieces.reverse();
            for piece in pieces.iter_mut() {
                *piece = piece.reversed();
            }
        }
    }
}

/// Traces the closed level set through a seed edge. The polyline is left
/// empty; see [`Contour::sample`].
pub fn trace_contour(
    field: &BilinearField,
    samples: &Samples,
    seed: &SeedEntry,
    level: f64,
) -> Result<Contour> {
    let tracer = Tracer { field, level };
    let start = tracer.start(samples, seed)?;
    trace_from(&tracer, start)
}

/// Traces the level set entering cell `cell` through its local edge
/// `edge` (0 top, 1 right, 2 bottom, 3 left in image orientation).
pub fn trace_from_edge(
    field: &BilinearField,
    cell: (usize, usize),
    edge: usize,
    level: f64,
) -> Result<Contour> {
    if cell.0 >= field.cells_x() || cell.1 >= field.cells_y() || edge > 3 {
        return Err(Error::CellOutOfRange(cell.0, cell.1));
    }
    let tracer = Tracer { field, level };
    let start = State { cell, edge };
    if !tracer.crosses(&tracer.corner_values(cell), edge) {
        return Err(Error::CriticalLevel(level));
    }
    trace_from(&tracer, start)
}

fn trace_from(tracer: &Tracer, start: State) -> Result<Contour> {
    let mut pieces = tracer.trace(start)?;
    tracer.orient(start, &mut pieces);
    Ok(Contour::new(tracer.level, pieces))
}

/// Entry point of the piece followed by interior samples; the exit point
/// is the next piece's entry.
fn sample_piece_into(piece: &CurvePiece, chord_tol: f64, out: &mut Vec<Point>) {
    out.push(piece.entry);
    if piece.kind == PieceKind::Linear {
        return;
    }
    let Some((center, k)) = piece.hyperbola() else {
        return;
    };
    let p = Param::new(center, k, piece.entry, piece.exit);
    subdivide(
        &p,
        p.param(piece.entry),
        p.param(piece.exit),
        piece.entry,
        piece.exit,
        chord_tol,
        0,
        out,
    );
}

#[allow(clippy::too_many_arguments)]
fn subdivide(
    p: &Param,
    t1: f64,
    t2: f64,
    a: Point,
    b: Point,
    tol: f64,
    depth: u32,
    out: &mut Vec<Point>,
) {
    if depth >= MAX_SUBDIVISION_DEPTH {
        return;
    }
    let tm = p.tangent_param(t1, t2);
    let m = p.point(tm);
    if chord_deviation(a, b, m) <= tol {
        return;
    }
    subdivide(p, t1, tm, a, m, tol, depth + 1, out);
    out.push(m);
    subdivide(p, tm, t2, m, b, tol, depth + 1, out);
}

/// Polyline of a single piece including both end points.
pub fn sample_piece(piece: &CurvePiece, chord_tol: f64) -> Vec<Point> {
    let mut out = Vec::new();
    sample_piece_into(piece, chord_tol, &mut out);
    out.push(piece.exit);
    out
}

/// Closed polyline through all pieces, without repeating the start.
pub fn polyline_sample(pieces: &[CurvePiece], chord_tol: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(pieces.len() * 2);
    for piece in pieces {
        sample_piece_into(piece, chord_tol, &mut out);
    }
    out
}

/// Signed shoelace area; positive for counter-clockwise order in `(x, y)`.
pub fn shoelace(points: &[Point]) -> f64 {
    let n = points.len();
    let mut twice = 0.0;
    for k in 0..n {
        let (a, b) = (points[k], points[(k + 1) % n]);
        twice += a.0 * b.1 - b.0 * a.1;
    }
    twice / 2.0
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Area of the region bounded by disjoint closed polylines under the
/// even-odd rule: a polyline inside an odd number of the others bounds a
/// hole.
pub fn polygon_area(contours: &[Vec<Point>]) -> Result<f64> {
    let polys: Vec<&[Point]> = contours.iter().map(Vec::as_slice).collect();
    parity_area(&polys, |k| shoelace(polys[k]).abs())
}

/// Area of a segment bounded by sampled contours. Hole roles come from
/// even-odd parity of the polylines; magnitudes are the exact areas under
/// the curves, independent of the chord tolerance.
pub fn segment_area(contours: &[Contour]) -> Result<f64> {
    let polys: Vec<&[Point]> = contours.iter().map(|c| c.polyline.as_slice()).collect();
    parity_area(&polys, |k| contours[k].signed_area.abs())
}

fn parity_area(polys: &[&[Point]], area: impl Fn(usize) -> f64) -> Result<f64> {
    if let Some(bad) = polys.iter().find(|c| c.len() < 3) {
        return Err(Error::DegenerateContour(bad.len()));
    }
    let mut total = 0.0;
    for (k, c) in polys.iter().enumerate() {
        let depth = polys
            .iter()
            .enumerate()
            .filter(|&(m, other)| m != k && point_in_polygon(c[0], other))
            .count();
        let a = area(k);
        total += if depth % 2 == 0 { a } else { -a };
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgStyle {
    pub stroke_width: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self { stroke_width: 0.1 }
    }
}

const PALETTE: [&str; 12] = [
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6",
    "#bcf60c", "#fabebe", "#008080", "#e6beff",
];

/// One filled path per segment.
#[derive(Debug, Clone, Copy)]
pub struct SvgPath<'a> {
    pub id: usize,
    pub level: u8,
    pub contours: &'a [Vec<Point>],
}

/// Serializes paths into an SVG document of `width` x `height` pixels.
/// Grid vertex `(i, j)` lands on `(i, j) - origin`; pixel centres sit on
/// integer coordinates. One group per entry of `levels`, paths ordered by
/// `(level, id)`.
pub fn emit_svg(
    width: usize,
    height: usize,
    levels: &[u8],
    paths: &[SvgPath],
    origin: Point,
    style: &SvgStyle,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="-0.5 -0.5 {width} {height}">"#
    );
    let mut sorted: Vec<&SvgPath> = paths.iter().collect();
    sorted.sort_by_key(|p| (p.level, p.id));
    for &level in levels {
        let _ = writeln!(s, r#"<g id="level-{level}">"#);
        for p in sorted.iter().filter(|p| p.level == level) {
            let mut d = String::new();
            for c in p.contours {
                let mut prev = String::new();
                for (k, &(x, y)) in c.iter().enumerate() {
                    let xy = format!("{:.4} {:.4}", x - origin.0, y - origin.1);
                    if k > 0 && xy == prev {
                        continue;
                    }
                    let cmd = if k == 0 { "M" } else { "L" };
                    if !d.is_empty() {
                        d.push(' ');
                    }
                    let _ = write!(d, "{cmd} {xy}");
                    prev = xy;
                }
                d.push_str(" Z");
            }
            let _ = writeln!(
                s,
                r##"<path id="segment-{}" d="{d}" fill="{}" fill-rule="evenodd" stroke="#000000" stroke-width="{:.4}"/>"##,
                p.id,
                PALETTE[p.id % PALETTE.len()],
                style.stroke_width
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}
