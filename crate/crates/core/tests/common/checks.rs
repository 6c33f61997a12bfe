//! Property checks on finished segmentations. Membership and area are
//! measured on a supersampled lattice with independent evaluation of the
//! bilinear field; no library geometry routine is reused.

use std::collections::HashMap;

use levelseg::pipeline::Segmentation;

use super::{bilinear, Dsu, Fine};

type Point = (f64, f64);

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed or touching segment intersection.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (o1, o2, o3, o4) = (
        orient(a, b, c),
        orient(a, b, d),
        orient(c, d, a),
        orient(c, d, b),
    );
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

struct Edge {
    poly: usize,
    index: usize,
    len: usize,
    a: Point,
    b: Point,
}

/// Finds any intersection between edges of the closed polylines, other than
/// the shared vertex of consecutive edges of one polyline.
pub fn first_crossing(polys: &[&[Point]]) -> Option<(usize, usize)> {
    let mut edges = Vec::new();
    for (k, p) in polys.iter().enumerate() {
        let n = p.len();
        for i in 0..n {
            edges.push(Edge {
                poly: k,
                index: i,
                len: n,
                a: p[i],
                b: p[(i + 1) % n],
            });
        }
    }
    edges.sort_by(|x, y| x.a.0.min(x.b.0).total_cmp(&y.a.0.min(y.b.0)));
    for i in 0..edges.len() {
        let e = &edges[i];
        let xmax = e.a.0.max(e.b.0);
        for f in &edges[i + 1..] {
            if f.a.0.min(f.b.0) > xmax {
                break;
            }
            if e.poly == f.poly {
                let n = e.len;
                let gap = (e.index + n - f.index) % n;
                if gap == 1 || gap == n - 1 {
                    continue;
                }
            }
            if segments_intersect(e.a, e.b, f.a, f.b) {
                return Some((e.poly, f.poly));
            }
        }
    }
    None
}

pub fn even_odd(p: Point, polys: &[Vec<Point>]) -> bool {
    let mut inside = false;
    for poly in polys {
        let n = poly.len();
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            if (a.1 > p.1) != (b.1 > p.1) {
                let x = a.0 + (p.1 - a.1) / (b.1 - a.1) * (b.0 - a.0);
                if p.0 < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// On-level, closure and simplicity of every boundary contour. Contours of
/// one hierarchy level sharing a value must not cross or repeat; contours
/// at different values are exact level sets and cannot meet, so their
/// chord approximations are not compared.
pub fn check_geometry(seg: &Segmentation) -> Result<(), String> {
    let grid = &seg.grid;
    let sample_tol = 1e-6 * grid.value_range();
    for level in [1u8, 2] {
        let mut by_value: HashMap<u64, Vec<&[Point]>> = HashMap::new();
        for s in seg.segments.iter().filter(|s| s.level == level) {
            for c in &s.contours {
                let v = c.level;
                if c.pieces.is_empty() {
                    return Err(format!("segment {} has an empty contour", s.id));
                }
                let n = c.pieces.len();
                for (k, piece) in c.pieces.iter().enumerate() {
                    for p in [piece.entry, piece.exit] {
                        let err = (bilinear(grid, p.0, p.1) - v).abs();
                        if err > 1e-9 {
                            return Err(format!(
                                "segment {}: crossing {p:?} is {err:e} off level {v}",
                                s.id
                            ));
                        }
                    }
                    if piece.exit != c.pieces[(k + 1) % n].entry {
                        return Err(format!("segment {}: contour not closed at piece {k}", s.id));
                    }
                }
                for &p in &c.polyline {
                    let err = (bilinear(grid, p.0, p.1) - v).abs();
                    if err > sample_tol {
                        return Err(format!(
                            "segment {}: sample {p:?} is {err:e} off level {v}",
                            s.id
                        ));
                    }
                }
                if c.polyline.len() < 3 {
                    return Err(format!(
                        "segment {}: contour with {} points",
                        s.id,
                        c.polyline.len()
                    ));
                }
                let m = c.polyline.len();
                if (0..m).any(|i| c.polyline[i] == c.polyline[(i + 1) % m]) {
                    return Err(format!("segment {}: repeated vertex", s.id));
                }
                if let Some((a, b)) = first_crossing(&[&c.polyline]) {
                    return Err(format!("segment {}: contour edges {a}, {b} cross", s.id));
                }
                by_value.entry(v.to_bits()).or_default().push(&c.polyline);
            }
        }
        for (value, polys) in &by_value {
            let v = f64::from_bits(*value);
            for (i, p) in polys.iter().enumerate() {
                if polys[..i].iter().any(|q| q.contains(&p[0])) {
                    return Err(format!("level {level}: contour at {v} traced twice"));
                }
            }
            if let Some((a, b)) = first_crossing(polys) {
                return Err(format!(
                    "level {level}: contours {a} and {b} at {v} intersect"
                ));
            }
        }
    }
    Ok(())
}

/// Centres of the squares of side `1 / factor` tiling the grid domain.
fn lattice(seg: &Segmentation, factor: usize) -> Vec<Point> {
    let nx = (seg.grid.width() - 1) * factor;
    let ny = (seg.grid.height() - 1) * factor;
    let f = factor as f64;
    (0..nx * ny)
        .map(|i| (((i % nx) as f64 + 0.5) / f, ((i / nx) as f64 + 0.5) / f))
        .collect()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SetStats {
    /// Lattice points inside some segment, summed per level.
    pub covered: usize,
    /// Lattice points inside two or more segments of one level.
    pub overlap: usize,
    /// Lattice points inside level-2 segments with a parent.
    pub child: usize,
    /// Of those, points outside the parent.
    pub escaped: usize,
}

impl SetStats {
    pub fn overlap_fraction(&self) -> f64 {
        self.overlap as f64 / self.covered.max(1) as f64
    }

    pub fn escaped_fraction(&self) -> f64 {
        self.escaped as f64 / self.child.max(1) as f64
    }
}

/// Disjointness and nesting of the filled segments as rendered.
pub fn set_properties(seg: &Segmentation, factor: usize) -> SetStats {
    let points = lattice(seg, factor);
    let polylines: HashMap<usize, Vec<Vec<Point>>> =
        seg.segments.iter().map(|s| (s.id, s.polylines())).collect();
    let mut stats = SetStats::default();
    for &p in &points {
        let inside: Vec<usize> = seg
            .segments
            .iter()
            .filter(|s| even_odd(p, &polylines[&s.id]))
            .map(|s| s.id)
            .collect();
        for level in [1u8, 2] {
            let n = inside
                .iter()
                .filter(|&&id| seg.segments.iter().any(|s| s.id == id && s.level == level))
                .count();
            stats.covered += n.min(1);
            if n > 1 {
                stats.overlap += 1;
            }
        }
        for s in seg.segments.iter().filter(|s| s.level == 2) {
            let Some(parent) = s.parent else { continue };
            if inside.contains(&s.id) {
                stats.child += 1;
                if !inside.contains(&parent) {
                    stats.escaped += 1;
                }
            }
        }
    }
    stats
}

#[derive(Debug, Clone, Copy)]
pub struct MembershipCheck {
    pub id: usize,
    pub area: f64,
    pub oracle_area: f64,
    /// Samples where the polygon fill and the oracle disagree.
    pub disagreements: usize,
    /// Disagreements farther than `chord_tol` from every boundary.
    pub far_disagreements: usize,
    pub samples: usize,
}

impl MembershipCheck {
    pub fn area_error(&self) -> f64 {
        (self.area - self.oracle_area).abs() / self.oracle_area.max(f64::MIN_POSITIVE)
    }
}

fn boundary_distance(p: Point, polys: &[Vec<Point>]) -> f64 {
    let mut best = f64::INFINITY;
    for poly in polys {
        let n = poly.len();
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len2 = dx * dx + dy * dy;
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
            };
            let d = (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy);
            best = best.min(d);
        }
    }
    best
}

/// Straddling lattice pair nearest to `p`, as (below, above) indices.
fn nearest_crossing(fine: &Fine, level: f64, p: Point) -> Option<(usize, usize)> {
    let f = fine.factor as f64;
    let (cx, cy) = ((p.0 * f).round() as i64, (p.1 * f).round() as i64);
    let mut best: Option<(f64, (usize, usize))> = None;
    for l in cy - 3..=cy + 3 {
        for k in cx - 3..=cx + 3 {
            if k < 0 || l < 0 || k as usize >= fine.nx || l as usize >= fine.ny {
                continue;
            }
            let a = l as usize * fine.nx + k as usize;
            for (dk, dl) in [(1usize, 0usize), (0, 1)] {
                let (k2, l2) = (k as usize + dk, l as usize + dl);
                if k2 >= fine.nx || l2 >= fine.ny {
                    continue;
                }
                let b = l2 * fine.nx + k2;
                let (va, vb) = (fine.values[a], fine.values[b]);
                if (va > level) == (vb > level) {
                    continue;
                }
                let (pa, pb) = (fine.pos(a), fine.pos(b));
                let mid = ((pa.0 + pb.0) / 2.0, (pa.1 + pb.1) / 2.0);
                let d = (mid.0 - p.0).powi(2) + (mid.1 - p.1).powi(2);
                let pair = if va > level { (b, a) } else { (a, b) };
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, pair));
                }
            }
        }
    }
    best.map(|(_, pair)| pair)
}

/// Rebuilds every segment as a lattice region: the lattice is cut along the
/// level-set components met by the segment's boundary contours, and the
/// piece agreeing best with the polygon fill is taken as the oracle region.
/// Cut value, its bit pattern, and the (below, above) label pairs it separates.
type CutLevel = (f64, u64, Vec<(u32, u32)>);

pub fn membership_oracle(
    seg: &Segmentation,
    factor: usize,
    chord_tol: f64,
) -> Vec<MembershipCheck> {
    let fine = Fine::new(&seg.grid, factor);
    let n = fine.nx * fine.ny;
    let mut label_cache: HashMap<u64, Vec<u32>> = HashMap::new();
    let mut out = Vec::new();
    for s in &seg.segments {
        // A level-set component can be pinched below lattice resolution near
        // a saddle, so every lattice component pair met along the curve is
        // cut.
        let mut cuts: Vec<CutLevel> = Vec::new();
        for c in &s.contours {
            let key = c.level.to_bits();
            let labels = label_cache
                .entry(key)
                .or_insert_with(|| fine.label(c.level));
            let mut pairs: Vec<(u32, u32)> = c
                .polyline
                .iter()
                .filter_map(|&p| nearest_crossing(&fine, c.level, p))
                .map(|(b, a)| (labels[b], labels[a]))
                .collect();
            pairs.sort_unstable();
            pairs.dedup();
            cuts.push((c.level, key, pairs));
        }
        let mut dsu = Dsu::new(n);
        let blocked = |p: usize, q: usize| {
            cuts.iter().any(|(level, key, pairs)| {
                let (level, key) = (*level, *key);
                let (vp, vq) = (fine.values[p], fine.values[q]);
                if (vp > level) == (vq > level) {
                    return false;
                }
                let labels = &label_cache[&key];
                let (b, a) = if vp > level { (q, p) } else { (p, q) };
                pairs.contains(&(labels[b], labels[a]))
            })
        };
        for l in 0..fine.ny {
            for k in 0..fine.nx {
                let p = l * fine.nx + k;
                if k + 1 < fine.nx && !blocked(p, p + 1) {
                    dsu.union(p as u32, (p + 1) as u32);
                }
                if l + 1 < fine.ny && !blocked(p, p + fine.nx) {
                    dsu.union(p as u32, (p + fine.nx) as u32);
                }
            }
        }
        let polys = s.polylines();
        let nx = fine.nx;
        let roots: Vec<u32> = (0..n).map(|p| dsu.find(p as u32)).collect();
        let node_fill: Vec<bool> = (0..n).map(|p| even_odd(fine.pos(p), &polys)).collect();
        let mut score: HashMap<u32, i64> = HashMap::new();
        for p in 0..n {
            *score.entry(roots[p]).or_default() += if node_fill[p] { 1 } else { -1 };
        }
        let (&root, _) = score
            .iter()
            .max_by_key(|(r, sc)| (**sc, std::cmp::Reverse(**r)))
            .expect("lattice is non-empty");
        // Area and agreement are measured at the centres of the lattice
        // squares. A centre inherits the region of a corner lying on the
        // same side of every cut level; squares never straddle a pixel
        // line, so the field is bilinear across each of them.
        let levels: Vec<f64> = cuts.iter().map(|c| c.0).collect();
        let side = |v: f64| levels.iter().map(move |&w| v > w);
        let f = factor as f64;
        let (mut count, mut disagreements, mut far_disagreements) = (0usize, 0usize, 0usize);
        for l in 0..fine.ny - 1 {
            for k in 0..nx - 1 {
                let c = ((k as f64 + 0.5) / f, (l as f64 + 0.5) / f);
                let vc = bilinear(&seg.grid, c.0, c.1);
                let corners = [
                    l * nx + k,
                    l * nx + k + 1,
                    (l + 1) * nx + k,
                    (l + 1) * nx + k + 1,
                ];
                let q = corners
                    .iter()
                    .copied()
                    .find(|&q| side(fine.values[q]).eq(side(vc)))
                    .unwrap_or(corners[0]);
                let member = roots[q] == root;
                count += usize::from(member);
                if member != even_odd(c, &polys) {
                    disagreements += 1;
                    if boundary_distance(c, &polys) > chord_tol + 1e-9 {
                        far_disagreements += 1;
                    }
                }
            }
        }
        let oracle_area = count as f64 / (f * f);
        out.push(MembershipCheck {
            id: s.id,
            area: s.area,
            oracle_area,
            disagreements,
            far_disagreements,
            samples: (fine.nx - 1) * (fine.ny - 1),
        });
    }
    out
}
