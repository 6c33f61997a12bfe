//! Persistence pairing, the two-level persistence lens and its pullback
//! to image segments.
//!
//! Pairs come from pruning proper leaves of the contour tree in order of
//! increasing persistence. Level `k` of the lens cancels the longest prefix
//! of that pruning sequence whose pairs lie below `tau_k`; each arc of the
//! resulting simplified tree defines one region: the original arcs it
//! absorbed, cut at its two end values.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::BilinearField;
use crate::tree::{ArcId, ContourTree, NodeId};
use crate::vectorize::{segment_area, trace_contour, Contour};

/// Relative offset of boundary levels from cut values, as a fraction of
/// the value range.
pub const CUT_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSide {
    /// A minimum paired with the saddle above it.
    MinSide,
    /// A maximum paired with the saddle below it.
    MaxSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PersistencePair {
    pub extremum: NodeId,
    pub saddle: NodeId,
    pub persistence: f64,
    pub side: PairSide,
}

/// The unpaired branch between the global minimum and maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EssentialBranch {
    pub min: NodeId,
    pub max: NodeId,
    pub persistence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Persistence {
    /// Finite pairs in pruning order.
    pub pairs: Vec<PersistencePair>,
    pub essential: EssentialBranch,
}

impl Persistence {
    /// Number of leading pairs cancelled at threshold `tau`.
    pub fn cancelled_prefix(&self, tau: f64) -> usize {
        self.pairs
            .iter()
            .position(|p| p.persistence >= tau)
            .unwrap_or(self.pairs.len())
    }
}

/// Mutable view of a tree under leaf pruning and suppression of nodes
/// left with one arc above and one below.
struct DynTree {
    lower: Vec<NodeId>,
    upper: Vec<NodeId>,
    alive: Vec<bool>,
    incident: Vec<Vec<usize>>,
    live_arcs: usize,
}

impl DynTree {
    fn new(tree: &ContourTree) -> Self {
        let mut incident = vec![Vec::new(); tree.node_count()];
        let (mut lower, mut upper) = (Vec::new(), Vec::new());
        for (id, a) in tree.arcs.iter().enumerate() {
            lower.push(a.lower);
            upper.push(a.upper);
            incident[a.lower].push(id);
            incident[a.upper].push(id);
        }
        Self {
            alive: vec![true; lower.len()],
            live_arcs: lower.len(),
            lower,
            upper,
            incident,
        }
    }

    fn other(&self, arc: usize, n: NodeId) -> NodeId {
        if self.lower[arc] == n {
            self.upper[arc]
        } else {
            self.lower[arc]
        }
    }

    fn up_count(&self, n: NodeId) -> usize {
        self.incident[n]
            .iter()
            .filter(|&&a| self.lower[a] == n)
            .count()
    }

    fn down_count(&self, n: NodeId) -> usize {
        self.incident[n]
            .iter()
            .filter(|&&a| self.upper[a] == n)
            .count()
    }

    fn leaf_arc(&self, n: NodeId) -> Option<usize> {
        match self.incident[n].as_slice() {
            &[a] => Some(a),
            _ => None,
        }
    }

    fn remove(&mut self, arc: usize) {
        self.alive[arc] = false;
        self.live_arcs -= 1;
        for n in [self.lower[arc], self.upper[arc]] {
            self.incident[n].retain(|&a| a != arc);
        }
    }

    /// Merges the two arcs of `n` if it has exactly one above and one
    /// below. Returns `(below, above, merged)`.
    fn try_suppress(&mut self, n: NodeId) -> Option<(usize, usize, usize)> {
        let &[a, b] = self.incident[n].as_slice() else {
            return None;
        };
        let (down, up) = if self.upper[a] == n && self.lower[b] == n {
            (a, b)
        } else if self.upper[b] == n && self.lower[a] == n {
            (b, a)
        } else {
            return None;
        };
        let (lo, hi) = (self.lower[down], self.upper[up]);
        self.remove(down);
        self.remove(up);
        let id = self.lower.len();
        self.lower.push(lo);
        self.upper.push(hi);
        self.alive.push(true);
        self.live_arcs += 1;
        self.incident[lo].push(id);
        self.incident[hi].push(id);
        Some((down, up, id))
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    persistence: f64,
    /// Younger extrema first: higher minima and lower maxima in the total
    /// order.
    youth: i64,
    leaf: NodeId,
    arc: usize,
    fold: bool,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.persistence
            .total_cmp(&other.persistence)
            .then(self.youth.cmp(&other.youth))
            .then(self.leaf.cmp(&other.leaf))
            .then(self.arc.cmp(&other.arc))
            .then(self.fold.cmp(&other.fold))
    }
}

impl DynTree {
    /// An arc of zero value length whose lower end has nothing below and
    /// whose upper end has nothing above, both ends with another arc.
    /// Exact value ties produce such zigzags, which no leaf pruning can
    /// remove.
    fn is_fold(&self, tree: &ContourTree, arc: usize) -> bool {
        let (lo, hi) = (self.lower[arc], self.upper[arc]);
        self.alive[arc]
            && tree.node_value(lo) == tree.node_value(hi)
            && self.down_count(lo) == 0
            && self.up_count(hi) == 0
            && self.incident[lo].len() >= 2
            && self.incident[hi].len() >= 2
    }

    /// Removes `arc` and moves every other arc of `gone` to `keep`.
    fn contract(&mut self, arc: usize, keep: NodeId, gone: NodeId) {
        self.remove(arc);
        for a in std::mem::take(&mut self.incident[gone]) {
            if self.lower[a] == gone {
                self.lower[a] = keep;
            } else {
                self.upper[a] = keep;
            }
            self.incident[keep].push(a);
        }
    }

    /// The live arc joining `a` and `b`.
    fn arc_between(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.incident[a]
            .iter()
            .copied()
            .find(|&x| self.other(x, a) == b)
    }
}

/// For a fold arc, the end that survives contraction and the end that is
/// paired away. Essential extrema always survive.
fn fold_ends(tree: &ContourTree, lo: NodeId, hi: NodeId) -> Option<(NodeId, NodeId)> {
    let essential = |n: NodeId| n == tree.global_min() || n == tree.global_max();
    match (essential(lo), essential(hi)) {
        (true, true) => None,
        (true, false) => Some((lo, hi)),
        _ => Some((hi, lo)),
    }
}

/// Branch decomposition by pruning, at each step, the proper leaf of least
/// persistence. A leaf is proper when its neighbour keeps another arc on
/// the leaf's side. Among equal persistence the younger extremum goes first, so the elder one
/// survives. Zero-length folds left by value ties are cancelled by
/// contracting them.
pub fn compute_persistence(tree: &ContourTree) -> Result<Persistence> {
    let mut dyn_tree = DynTree::new(tree);
    let value = |n: NodeId| tree.node_value(n);
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Reverse<Candidate>>, t: &DynTree, leaf: NodeId| {
        if let Some(arc) = t.leaf_arc(leaf) {
            let s = t.other(arc, leaf);
            let rank = tree.nodes[leaf].sample as i64;
            heap.push(Reverse(Candidate {
                persistence: (value(s) - value(leaf)).abs(),
                youth: if t.lower[arc] == leaf { -rank } else { rank },
                leaf,
                arc,
                fold: false,
            }));
        }
    };
    let push_fold = |heap: &mut BinaryHeap<Reverse<Candidate>>, t: &DynTree, arc: usize| {
        if t.is_fold(tree, arc) {
            heap.push(Reverse(Candidate {
                persistence: 0.0,
                youth: 0,
                leaf: t.lower[arc],
                arc,
                fold: true,
            }));
        }
    };
    for n in 0..tree.node_count() {
        push(&mut heap, &dyn_tree, n);
    }
    for a in 0..tree.arc_count() {
        push_fold(&mut heap, &dyn_tree, a);
    }
    let mut pairs = Vec::new();
    while dyn_tree.live_arcs > 1 {
        let Some(Reverse(c)) = heap.pop() else {
            return Err(Error::InconsistentTrees(format!(
                "pruning stalled with {} arcs left",
                dyn_tree.live_arcs
            )));
        };
        let s = if c.fold {
            if !dyn_tree.is_fold(tree, c.arc) {
                continue;
            }
            let (lo, hi) = (dyn_tree.lower[c.arc], dyn_tree.upper[c.arc]);
            let Some((keep, gone)) = fold_ends(tree, lo, hi) else {
                continue;
            };
            pairs.push(PersistencePair {
                extremum: gone,
                saddle: keep,
                persistence: 0.0,
                side: if gone == lo {
                    PairSide::MinSide
                } else {
                    PairSide::MaxSide
                },
            });
            dyn_tree.contract(c.arc, keep, gone);
            keep
        } else {
            if !dyn_tree.alive[c.arc] || dyn_tree.leaf_arc(c.leaf) != Some(c.arc) {
                continue;
            }
            let s = dyn_tree.other(c.arc, c.leaf);
            let min_side = dyn_tree.lower[c.arc] == c.leaf;
            let proper = if min_side {
                dyn_tree.down_count(s) >= 2
            } else {
                dyn_tree.up_count(s) >= 2
            };
            if !proper {
                continue;
            }
            pairs.push(PersistencePair {
                extremum: c.leaf,
                saddle: s,
                persistence: c.persistence,
                side: if min_side {
                    PairSide::MinSide
                } else {
                    PairSide::MaxSide
                },
            });
            dyn_tree.remove(c.arc);
            s
        };
        match dyn_tree.try_suppress(s) {
            Some((_, _, merged)) => {
                let (lo, hi) = (dyn_tree.lower[merged], dyn_tree.upper[merged]);
                push(&mut heap, &dyn_tree, lo);
                push(&mut heap, &dyn_tree, hi);
                push_fold(&mut heap, &dyn_tree, merged);
            }
            None => {
                push(&mut heap, &dyn_tree, s);
                for k in 0..dyn_tree.incident[s].len() {
                    let a = dyn_tree.incident[s][k];
                    push(&mut heap, &dyn_tree, dyn_tree.other(a, s));
                    push_fold(&mut heap, &dyn_tree, a);
                }
            }
        }
    }
    let last = (0..dyn_tree.alive.len())
        .rev()
        .find(|&a| dyn_tree.alive[a])
        .ok_or_else(|| Error::InconsistentTrees("tree has no arcs".into()))?;
    let (min, max) = (dyn_tree.lower[last], dyn_tree.upper[last]);
    Ok(Persistence {
        pairs,
        essential: EssentialBranch {
            min,
            max,
            persistence: value(max) - value(min),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LensParams {
    pub tau1: f64,
    pub tau2: f64,
    pub min_area: f64,
}

impl Default for LensParams {
    fn default() -> Self {
        Self {
            tau1: 0.20 * 255.0,
            tau2: 0.08 * 255.0,
            min_area: 10.0,
        }
    }
}

impl LensParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau2 > 0.0 && self.tau2 < self.tau1 && self.tau1.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "thresholds must satisfy 0 < tau2 < tau1, got tau1 = {}, tau2 = {}",
                self.tau1, self.tau2
            )));
        }
        if self.min_area.is_nan() || self.min_area < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "min_area must be non-negative, got {}",
                self.min_area
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutPoint {
    pub arc: ArcId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LensRegion {
    pub id: usize,
    pub level: u8,
    /// End nodes of the simplified arc.
    pub lower: NodeId,
    pub upper: NodeId,
    /// Original arcs along the simplified arc, ascending.
    pub chain: Vec<ArcId>,
    /// Every original arc in the region, sorted.
    pub arcs: Vec<ArcId>,
    pub cuts: [CutPoint; 2],
    /// Whether the end node is a leaf of the simplified tree.
    pub lower_is_leaf: bool,
    pub upper_is_leaf: bool,
    pub parent: Option<usize>,
}

impl LensRegion {
    pub fn value_interval(&self) -> (f64, f64) {
        (self.cuts[0].value, self.cuts[1].value)
    }
}

#[derive(Debug, Clone, Default)]
struct Content {
    chain: Vec<ArcId>,
    extras: Vec<ArcId>,
}

/// Regions of the tree simplified by cancelling `prefix` leading pairs.
fn simplify(
    tree: &ContourTree,
    pairs: &[PersistencePair],
    level: u8,
    first_id: usize,
) -> Result<Vec<LensRegion>> {
    let mut t = DynTree::new(tree);
    let mut content: Vec<Content> = (0..tree.arc_count())
        .map(|a| Content {
            chain: vec![a],
            extras: Vec::new(),
        })
        .collect();
    // Pruned subtrees hanging at a node: (points upward, arcs).
    let mut hang: Vec<Vec<(bool, Vec<ArcId>)>> = vec![Vec::new(); tree.node_count()];
    for p in pairs {
        let arc = t.arc_between(p.extremum, p.saddle).ok_or_else(|| {
            Error::InconsistentTrees(format!("pair ({}, {}) has no arc", p.extremum, p.saddle))
        })?;
        if t.leaf_arc(p.extremum).is_none() {
            // A contracted fold: its arc and everything hanging at the
            // paired end move to the surviving end.
            let c = std::mem::take(&mut content[arc]);
            let mut group = c.chain;
            group.extend(c.extras);
            let moved = std::mem::take(&mut hang[p.extremum]);
            hang[p.saddle].extend(moved);
            hang[p.saddle].push((true, group));
            t.contract(arc, p.saddle, p.extremum);
        } else {
            let c = std::mem::take(&mut content[arc]);
            let mut group = c.chain;
            group.extend(c.extras);
            for (_, g) in std::mem::take(&mut hang[p.extremum]) {
                group.extend(g);
            }
            hang[p.saddle].push((t.upper[arc] == p.extremum, group));
            t.remove(arc);
        }
        if let Some((down, up, merged)) = t.try_suppress(p.saddle) {
            let (d, u) = (
                std::mem::take(&mut content[down]),
                std::mem::take(&mut content[up]),
            );
            let mut chain = d.chain;
            chain.extend(u.chain);
            let mut extras = d.extras;
            extras.extend(u.extras);
            for (_, g) in std::mem::take(&mut hang[p.saddle]) {
                extras.extend(g);
            }
            content.push(Content { chain, extras });
            debug_assert_eq!(content.len() - 1, merged);
        }
    }
    // Subtrees pruned at surviving nodes join a region on their side.
    for (n, groups) in std::mem::take(&mut hang).into_iter().enumerate() {
        for (upward, group) in groups {
            let side = t.incident[n]
                .iter()
                .copied()
                .find(|&a| (t.lower[a] == n) == upward)
                .or_else(|| t.incident[n].first().copied())
                .ok_or_else(|| Error::InconsistentTrees(format!("node {n} lost all arcs")))?;
            content[side].extras.extend(group);
        }
    }
    let mut regions = Vec::new();
    for a in (0..t.alive.len()).filter(|&a| t.alive[a]) {
        let c = &content[a];
        let (lower, upper) = (t.lower[a], t.upper[a]);
        let mut arcs: Vec<ArcId> = c.chain.iter().chain(&c.extras).copied().collect();
        arcs.sort_unstable();
        regions.push(LensRegion {
            id: first_id + regions.len(),
            level,
            lower,
            upper,
            chain: c.chain.clone(),
            arcs,
            cuts: [
                CutPoint {
                    arc: c.chain[0],
                    value: tree.node_value(lower),
                },
                CutPoint {
                    arc: *c.chain.last().expect("chain is never empty"),
                    value: tree.node_value(upper),
                },
            ],
            lower_is_leaf: t.incident[lower].len() == 1,
            upper_is_leaf: t.incident[upper].len() == 1,
            parent: None,
        });
    }
    Ok(regions)
}

/// Level-1 regions followed by level-2 regions; ids are positions in the
/// returned list.
pub fn build_lens(
    tree: &ContourTree,
    persistence: &Persistence,
    params: &LensParams,
) -> Result<Vec<LensRegion>> {
    params.validate()?;
    let k1 = persistence.cancelled_prefix(params.tau1);
    let k2 = persistence.cancelled_prefix(params.tau2);
    let mut regions = simplify(tree, &persistence.pairs[..k1], 1, 0)?;
    let mut owner = vec![usize::MAX; tree.arc_count()];
    for r in &regions {
        for &a in &r.arcs {
            owner[a] = r.id;
        }
    }
    let mut level2 = simplify(tree, &persistence.pairs[..k2], 2, regions.len())?;
    for r in &mut level2 {
        let p = owner[r.chain[0]];
        r.parent = (p != usize::MAX).then_some(p);
    }
    regions.extend(level2);
    Ok(regions)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub id: usize,
    pub level: u8,
    pub parent: Option<usize>,
    pub region: usize,
    pub contours: Vec<Contour>,
    pub area: f64,
    pub value_interval: (f64, f64),
}

impl Segment {
    pub fn polylines(&self) -> Vec<Vec<(f64, f64)>> {
        self.contours.iter().map(|c| c.polyline.clone()).collect()
    }
}

/// One connected piece of a region's interior and its boundary levels.
struct Component {
    region: usize,
    value_interval: (f64, f64),
    /// Arcs with the value span of each that lies in the component.
    pieces: Vec<(ArcId, f64, f64)>,
    boundary: Vec<(ArcId, f64)>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Arcs holding the level `w` reached from cut node `from` through `arc`
/// without passing another cut.
fn boundary_arcs(
    tree: &ContourTree,
    cut: &[bool],
    arc: ArcId,
    upward: bool,
    w: f64,
    out: &mut Vec<(ArcId, f64)>,
) {
    let mut stack = vec![arc];
    while let Some(b) = stack.pop() {
        let (lo, hi) = tree.arc_range(b);
        if lo < w && w < hi {
            out.push((b, w));
        } else if upward && hi <= w {
            let m = tree.arcs[b].upper;
            if !cut[m] {
                stack.extend(tree.nodes[m].up.iter().rev());
            }
        } else if !upward && lo >= w {
            let m = tree.arcs[b].lower;
            if !cut[m] {
                stack.extend(tree.nodes[m].down.iter().rev());
            }
        }
    }
}

fn components(
    tree: &ContourTree,
    regions: &[&LensRegion],
    frame_cut: bool,
    eps: f64,
) -> Vec<Component> {
    let mut cut = vec![false; tree.node_count()];
    let mut owner: Vec<Option<&LensRegion>> = vec![None; tree.arc_count()];
    for r in regions {
        cut[r.lower] |= !r.lower_is_leaf;
        cut[r.upper] |= !r.upper_is_leaf;
        for &a in &r.arcs {
            owner[a] = Some(r);
        }
    }
    if frame_cut {
        cut[tree.global_min()] = true;
    }

    let part = |a: ArcId, band: usize| 3 * a + band;
    let mut parent: Vec<usize> = (0..3 * tree.arc_count()).collect();
    let union = |parent: &mut Vec<usize>, x: usize, y: usize| {
        let (x, y) = (find(parent, x), find(parent, y));
        if x != y {
            parent[y.max(x)] = y.min(x);
        }
    };
    let mut bands = vec![(1usize, 1usize); tree.arc_count()];
    let mut splits: Vec<(ArcId, usize, f64)> = Vec::new();
    for (a, r) in owner.iter().enumerate() {
        let Some(r) = r else { continue };
        let (vlo, vhi) = r.value_interval();
        let band = |v: f64| {
            if v < vlo - eps {
                0
            } else if v > vhi + eps {
                2
            } else {
                1
            }
        };
        let (lo, hi) = tree.arc_range(a);
        let (bl, bu) = (band(lo), band(hi));
        bands[a] = (bl, bu);
        for b in bl..bu {
            let w = if b == 0 { vlo } else { vhi };
            if lo < w - eps && hi > w + eps {
                splits.push((a, b, w));
            } else {
                union(&mut parent, part(a, b), part(a, b + 1));
            }
        }
    }
    for (n, node) in tree.nodes.iter().enumerate() {
        if cut[n] {
            continue;
        }
        let mut it = node
            .up
            .iter()
            .map(|&a| part(a, bands[a].0))
            .chain(node.down.iter().map(|&a| part(a, bands[a].1)));
        if let Some(first) = it.next() {
            for p in it {
                union(&mut parent, first, p);
            }
        }
    }

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); parent.len()];
    for (a, r) in owner.iter().enumerate() {
        if r.is_none() {
            continue;
        }
        for b in bands[a].0..=bands[a].1 {
            let root = find(&mut parent, part(a, b));
            groups[root].push(part(a, b));
        }
    }
    let mut boundary: Vec<Vec<(ArcId, f64)>> = vec![Vec::new(); parent.len()];
    for &(a, b, w) in &splits {
        let below = find(&mut parent, part(a, b));
        let above = find(&mut parent, part(a, b + 1));
        boundary[below].push((a, w - eps));
        boundary[above].push((a, w + eps));
    }

    let mut out: Vec<Component> = Vec::new();
    for (root, parts) in groups.into_iter().enumerate() {
        if parts.is_empty() {
            continue;
        }
        let region = owner[parts[0] / 3].expect("grouped arcs are owned");
        let (vlo, vhi) = region.value_interval();
        let clip = |p: usize| {
            let (lo, hi) = tree.arc_range(p / 3);
            match p % 3 {
                0 => (lo, hi.min(vlo)),
                1 => (lo.max(vlo), hi.min(vhi)),
                _ => (lo.max(vhi), hi),
            }
        };
        let mut pieces: Vec<(ArcId, f64, f64)> = Vec::with_capacity(parts.len());
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &p in &parts {
            let (l, h) = clip(p);
            lo = lo.min(l);
            hi = hi.max(h);
            pieces.push((p / 3, l, h));
        }
        if hi - lo <= 2.0 * eps {
            continue;
        }
        let mut bounds = std::mem::take(&mut boundary[root]);
        for &p in &parts {
            let a = p / 3;
            let arc = &tree.arcs[a];
            let (bl, bu) = bands[a];
            if p % 3 == bl && cut[arc.lower] {
                let w = tree.node_value(arc.lower) + eps;
                boundary_arcs(tree, &cut, a, true, w, &mut bounds);
            }
            if p % 3 == bu && cut[arc.upper] {
                let w = tree.node_value(arc.upper) - eps;
                boundary_arcs(tree, &cut, a, false, w, &mut bounds);
            }
        }
        if bounds.is_empty() {
            continue;
        }
        bounds.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
        bounds.dedup();
        out.push(Component {
            region: region.id,
            value_interval: (lo, hi),
            pieces,
            boundary: bounds,
        });
    }
    out.sort_by(|x, y| {
        (x.region, x.pieces[0].0)
            .cmp(&(y.region, y.pieces[0].0))
            .then(x.pieces[0].1.total_cmp(&y.pieces[0].1))
    });
    out
}

/// Segment of the previous level holding the widest piece of a component.
fn enclosing(
    arc_segment: &[Vec<(f64, f64, usize)>],
    pieces: &[(ArcId, f64, f64)],
) -> Option<usize> {
    let &(arc, lo, hi) = pieces
        .iter()
        .max_by(|x, y| (x.2 - x.1).total_cmp(&(y.2 - y.1)))?;
    let mid = 0.5 * (lo + hi);
    arc_segment[arc]
        .iter()
        .find(|&&(l, h, _)| l <= mid && mid <= h)
        .map(|&(_, _, id)| id)
}

/// Pulls every connected interior component of every region back to the
/// image plane. Boundaries are traced at the cut values offset by
/// [`CUT_OFFSET`] times the value range towards the interior. A global
/// minimum on a constant frame is cut as well, so the outermost segment is
/// bounded by a curve just inside the frame.
pub fn extract_segments(
    tree: &ContourTree,
    regions: &[LensRegion],
    field: &BilinearField,
    chord_tol: f64,
) -> Result<Vec<Segment>> {
    let grid = field.grid();
    let eps = CUT_OFFSET * grid.value_range().max(f64::MIN_POSITIVE);
    let frame_cut = grid.has_min_frame();
    let mut segments: Vec<Segment> = Vec::new();
    let mut arc_segment: Vec<Vec<(f64, f64, usize)>> = vec![Vec::new(); tree.arc_count()];
    for level in [1u8, 2] {
        let level_regions: Vec<&LensRegion> = regions.iter().filter(|r| r.level == level).collect();
        let comps = components(tree, &level_regions, frame_cut, eps);
        let traced: Vec<Result<(Vec<Contour>, f64)>> = comps
            .par_iter()
            .map(|comp| {
                let mut contours = Vec::with_capacity(comp.boundary.len());
                for &(arc, w) in &comp.boundary {
                    let seed = tree.seed(arc, w)?;
                    let mut c = trace_contour(field, &tree.samples, &seed, w)?;
                    c.sample(chord_tol);
                    contours.push(c);
                }
                let area = segment_area(&contours)?;
                Ok((contours, area))
            })
            .collect();
        let mut next_arc_segment: Vec<Vec<(f64, f64, usize)>> = vec![Vec::new(); tree.arc_count()];
        for (comp, t) in comps.iter().zip(traced) {
            let (contours, area) = t?;
            let region = &regions[comp.region];
            let id = segments.len();
            for &(a, lo, hi) in &comp.pieces {
                next_arc_segment[a].push((lo, hi, id));
            }
            segments.push(Segment {
                id,
                level,
                parent: if level == 2 {
                    enclosing(&arc_segment, &comp.pieces)
                } else {
                    None
                },
                region: region.id,
                contours,
                area,
                value_interval: comp.value_interval,
            });
        }
        arc_segment = next_arc_segment;
    }
    Ok(segments)
}

/// Drops segments with area below `min_area`, and every segment whose
/// parent was dropped.
pub fn filter_small(segments: Vec<Segment>, min_area: f64) -> Vec<Segment> {
    let mut dropped = std::collections::HashSet::new();
    let mut kept = Vec::with_capacity(segments.len());
    for s in segments {
        let orphan = s.parent.is_some_and(|p| dropped.contains(&p));
        if s.area < min_area || orphan {
            dropped.insert(s.id);
        } else {
            kept.push(s);
        }
    }
    kept
}
