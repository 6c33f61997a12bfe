//! Contour tree of the bilinear interpolant.
//!
//! Samples are the grid vertices plus one sample per cell-interior saddle.
//! A saddle sample is adjacent to the four corners of its cell, vertices
//! are 4-adjacent to each other. Join and split trees come from union-find
//! sweeps over that graph, and the augmented contour tree from the usual
//! leaf-transfer merge. Regular samples end up as augmentation points on
//! the arcs.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{BilinearField, CriticalKind, CriticalPoint, Origin, SampleKey, TotalOrder};
use crate::grid::ScalarGrid;

const NONE: u32 = u32::MAX;

pub type NodeId = usize;
pub type ArcId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Site {
    Vertex(u32, u32),
    /// Saddle strictly inside cell `(i, j)`.
    Cell(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub key: SampleKey,
    pub site: Site,
}

/// All field samples sorted by the total order. A sample's index is its
/// rank.
#[derive(Debug, Clone)]
pub struct Samples {
    width: usize,
    height: usize,
    samples: Vec<Sample>,
    vertex_rank: Vec<u32>,
    cell_saddle_rank: Vec<u32>,
}

impl Samples {
    pub fn new(grid: &ScalarGrid) -> Self {
        let field = BilinearField::new(grid);
        let (w, h) = (grid.width(), grid.height());
        let mut samples = Vec::with_capacity(w * h + w * h / 4);
        for j in 0..h {
            for i in 0..w {
                samples.push(Sample {
                    key: SampleKey::vertex(grid, i, j),
                    site: Site::Vertex(i as u32, j as u32),
                });
            }
        }
        for j in 0..h - 1 {
            for i in 0..w - 1 {
                if let Some((u, v, value)) = field.coefficients(i, j).interior_saddle() {
                    samples.push(Sample {
                        key: SampleKey {
                            value,
                            x: i as f64 + u,
                            y: j as f64 + v,
                            origin: Origin::CellInterior,
                        },
                        site: Site::Cell(i as u32, j as u32),
                    });
                }
            }
        }
        samples.sort_unstable_by(|a, b| TotalOrder.cmp(&a.key, &b.key));
        let mut vertex_rank = vec![NONE; w * h];
        let mut cell_saddle_rank = vec![NONE; (w - 1) * (h - 1)];
        for (rank, s) in samples.iter().enumerate() {
            match s.site {
                Site::Vertex(i, j) => vertex_rank[j as usize * w + i as usize] = rank as u32,
                Site::Cell(i, j) => {
                    cell_saddle_rank[j as usize * (w - 1) + i as usize] = rank as u32
                }
            }
        }
        Self {
            width: w,
            height: h,
            samples,
            vertex_rank,
            cell_saddle_rank,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, rank: usize) -> &Sample {
        &self.samples[rank]
    }

    pub fn value(&self, rank: usize) -> f64 {
        self.samples[rank].key.value
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn vertex_rank(&self, i: usize, j: usize) -> usize {
        self.vertex_rank[j * self.width + i] as usize
    }

    pub fn cell_saddle_rank(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.cell_saddle_rank[j * (self.width - 1) + i];
        (r != NONE).then_some(r as usize)
    }

    /// Calls `f` with the rank of every graph neighbour of `rank`.
    #[inline]
    pub fn for_each_neighbor(&self, rank: usize, mut f: impl FnMut(usize)) {
        let (w, h) = (self.width, self.height);
        match self.samples[rank].site {
            Site::Vertex(i, j) => {
                let (i, j) = (i as usize, j as usize);
                if i + 1 < w {
                    f(self.vertex_rank(i + 1, j));
                }
                if j + 1 < h {
                    f(self.vertex_rank(i, j + 1));
                }
                if i > 0 {
                    f(self.vertex_rank(i - 1, j));
                }
                if j > 0 {
                    f(self.vertex_rank(i, j - 1));
                }
                for (ci, cj) in [(i, j), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1))]
                    .into_iter()
                    .chain([(i.wrapping_sub(1), j.wrapping_sub(1))])
                {
                    if ci < w - 1 && cj < h - 1 {
                        if let Some(r) = self.cell_saddle_rank(ci, cj) {
                            f(r);
                        }
                    }
                }
            }
            Site::Cell(i, j) => {
                let (i, j) = (i as usize, j as usize);
                f(self.vertex_rank(i, j));
                f(self.vertex_rank(i + 1, j));
                f(self.vertex_rank(i, j + 1));
                f(self.vertex_rank(i + 1, j + 1));
            }
        }
    }

    /// Whether `a` and `b` share a graph edge.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        let mut found = false;
        self.for_each_neighbor(a, |n| found |= n == b);
        found
    }

    /// A cell containing the straight graph edge between `a` and `b`.
    pub fn edge_cell(&self, a: usize, b: usize) -> (usize, usize) {
        match (self.samples[a].site, self.samples[b].site) {
            (Site::Cell(i, j), _) | (_, Site::Cell(i, j)) => (i as usize, j as usize),
            (Site::Vertex(i0, j0), Site::Vertex(i1, j1)) => {
                let i = i0.min(i1) as usize;
                let j = j0.min(j1) as usize;
                (i.min(self.width - 2), j.min(self.height - 2))
            }
        }
    }
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    #[inline]
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    /// Returns the new root.
    #[inline]
    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (big, small) = if self.size[a as usize] >= self.size[b as usize] {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        big
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeKind {
    /// Superlevel components merging on a descending sweep.
    Join,
    /// Sublevel components merging on an ascending sweep.
    Split,
}

/// Augmented merge tree over all samples. Each sample has at most one
/// parent toward the sweep's end, and any number of children.
#[derive(Debug, Clone)]
pub struct MergeTree {
    pub kind: MergeKind,
    parent: Vec<u32>,
    child_count: Vec<u32>,
    child_xor: Vec<u32>,
}

impl MergeTree {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, rank: usize) -> Option<usize> {
        let p = self.parent[rank];
        (p != NONE).then_some(p as usize)
    }

    pub fn child_count(&self, rank: usize) -> usize {
        self.child_count[rank] as usize
    }

    /// Samples where two or more components meet.
    pub fn merge_samples(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&r| self.child_count[r] >= 2)
            .collect()
    }

    /// Samples that start a component.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&r| self.child_count[r] == 0)
            .collect()
    }
}

fn sweep(samples: &Samples, kind: MergeKind) -> MergeTree {
    let n = samples.len();
    let mut uf = UnionFind::new(n);
    // Last-swept sample of each component, stored at the root.
    let mut frontier: Vec<u32> = (0..n as u32).collect();
    let mut parent = vec![NONE; n];
    let mut child_count = vec![0u32; n];
    let mut child_xor = vec![0u32; n];
    let order: Box<dyn Iterator<Item = usize>> = match kind {
        MergeKind::Join => Box::new((0..n).rev()),
        MergeKind::Split => Box::new(0..n),
    };
    for s in order {
        samples.for_each_neighbor(s, |nb| {
            let swept = match kind {
                MergeKind::Join => nb > s,
                MergeKind::Split => nb < s,
            };
            if !swept {
                return;
            }
            let rn = uf.find(nb as u32);
            let rs = uf.find(s as u32);
            if rn != rs {
                let tail = frontier[rn as usize];
                parent[tail as usize] = s as u32;
                child_count[s] += 1;
                child_xor[s] ^= tail;
                let root = uf.union(rn, rs);
                frontier[root as usize] = s as u32;
            }
        });
    }
    MergeTree {
        kind,
        parent,
        child_count,
        child_xor,
    }
}

pub fn build_join_tree(samples: &Samples) -> MergeTree {
    sweep(samples, MergeKind::Join)
}

pub fn build_split_tree(samples: &Samples) -> MergeTree {
    sweep(samples, MergeKind::Split)
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeNode {
    pub point: CriticalPoint,
    pub sample: usize,
    pub up: Vec<ArcId>,
    pub down: Vec<ArcId>,
}

impl TreeNode {
    pub fn degree(&self) -> usize {
        self.up.len() + self.down.len()
    }

    pub fn is_leaf(&self) -> bool {
        self.degree() == 1
    }

    pub fn value(&self) -> f64 {
        self.point.value
    }
}

/// One contiguous sample interval along an arc and the graph edge that
/// every contour in it crosses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedEntry {
    pub below: usize,
    pub above: usize,
    pub cell: (usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeArc {
    pub lower: NodeId,
    pub upper: NodeId,
    /// Regular samples on the arc, ascending.
    pub augmentation: Vec<usize>,
    /// `augmentation.len() + 1` entries once populated; entry `k` covers
    /// the values between the `k`-th and `k+1`-th sample of the chain
    /// `lower, augmentation.., upper`.
    pub seeds: Vec<SeedEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Home {
    Node(NodeId),
    Arc(ArcId),
}

#[derive(Debug, Clone)]
pub struct ContourTree {
    pub samples: Samples,
    pub nodes: Vec<TreeNode>,
    pub arcs: Vec<TreeArc>,
    home: Vec<Home>,
}

/// Builds the fully augmented contour tree, seed tables included.
pub fn build_contour_tree(grid: &ScalarGrid) -> Result<ContourTree> {
    let samples = Samples::new(grid);
    let join = build_join_tree(&samples);
    let split = build_split_tree(&samples);
    let mut tree = merge_trees(samples, &join, &split)?;
    build_seed_table(&mut tree)?;
    Ok(tree)
}

pub fn merge_trees(samples: Samples, join: &MergeTree, split: &MergeTree) -> Result<ContourTree> {
    let n = samples.len();
    if join.len() != n
        || split.len() != n
        || join.kind != MergeKind::Join
        || split.kind != MergeKind::Split
    {
        return Err(Error::InconsistentTrees(format!(
            "{} samples, join tree has {}, split tree has {}",
            n,
            join.len(),
            split.len()
        )));
    }
    let mut jt_down = join.parent.clone();
    let mut jt_up_deg = join.child_count.clone();
    let mut jt_xor = join.child_xor.clone();
    let mut st_up = split.parent.clone();
    let mut st_down_deg = split.child_count.clone();
    let mut st_xor = split.child_xor.clone();

    let mut removed = vec![false; n];
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(n.saturating_sub(1));
    let is_upper_leaf = |x: usize, jt_up_deg: &[u32], st_down_deg: &[u32], jt_down: &[u32]| {
        jt_up_deg[x] == 0 && st_down_deg[x] == 1 && jt_down[x] != NONE
    };
    let is_lower_leaf = |x: usize, jt_up_deg: &[u32], st_down_deg: &[u32], st_up: &[u32]| {
        st_down_deg[x] == 0 && jt_up_deg[x] == 1 && st_up[x] != NONE
    };

    let mut queue: VecDeque<u32> = (0..n as u32).collect();
    let mut remaining = n;
    while remaining > 1 {
        let Some(x) = queue.pop_front() else {
            return Err(Error::InconsistentTrees(format!(
                "merge stalled with {remaining} samples left"
            )));
        };
        let x = x as usize;
        if removed[x] {
            continue;
        }
        if is_upper_leaf(x, &jt_up_deg, &st_down_deg, &jt_down) {
            let y = jt_down[x] as usize;
            edges.push((y as u32, x as u32));
            jt_up_deg[y] -= 1;
            jt_xor[y] ^= x as u32;
            let c = st_xor[x];
            let p = st_up[x];
            st_up[c as usize] = p;
            if p != NONE {
                st_xor[p as usize] ^= x as u32 ^ c;
            }
            removed[x] = true;
            remaining -= 1;
            queue.push_back(y as u32);
            queue.push_back(c);
        } else if is_lower_leaf(x, &jt_up_deg, &st_down_deg, &st_up) {
            let y = st_up[x] as usize;
            edges.push((x as u32, y as u32));
            st_down_deg[y] -= 1;
            st_xor[y] ^= x as u32;
            let c = jt_xor[x];
            let p = jt_down[x];
            jt_down[c as usize] = p;
            if p != NONE {
                jt_xor[p as usize] ^= x as u32 ^ c;
            }
            removed[x] = true;
            remaining -= 1;
            queue.push_back(y as u32);
            queue.push_back(c);
        }
    }
    if edges.len() != n - 1 {
        return Err(Error::InconsistentTrees(format!(
            "{} edges for {} samples",
            edges.len(),
            n
        )));
    }
    Ok(reduce(samples, &edges))
}

/// Collapses regular samples of the augmented tree into arcs.
fn reduce(samples: Samples, edges: &[(u32, u32)]) -> ContourTree {
    let n = samples.len();
    let mut up_deg = vec![0u32; n];
    let mut down_deg = vec![0u32; n];
    for &(lo, hi) in edges {
        up_deg[lo as usize] += 1;
        down_deg[hi as usize] += 1;
    }
    // CSR of upward neighbours.
    let mut up_start = vec![0usize; n + 1];
    for r in 0..n {
        up_start[r + 1] = up_start[r] + up_deg[r] as usize;
    }
    let mut fill = up_start.clone();
    let mut up_adj = vec![0u32; edges.len()];
    for &(lo, hi) in edges {
        up_adj[fill[lo as usize]] = hi;
        fill[lo as usize] += 1;
    }
    for r in 0..n {
        up_adj[up_start[r]..up_start[r + 1]].sort_unstable();
    }

    let is_regular = |r: usize| up_deg[r] == 1 && down_deg[r] == 1;
    let mut home = vec![Home::Node(0); n];
    let mut nodes = Vec::new();
    for r in 0..n {
        if is_regular(r) {
            continue;
        }
        let kind = if down_deg[r] == 0 {
            CriticalKind::Minimum
        } else if up_deg[r] == 0 {
            CriticalKind::Maximum
        } else {
            CriticalKind::Saddle
        };
        let s = samples.get(r);
        home[r] = Home::Node(nodes.len());
        nodes.push(TreeNode {
            point: CriticalPoint {
                id: nodes.len(),
                x: s.key.x,
                y: s.key.y,
                value: s.key.value,
                kind,
                origin: s.key.origin,
            },
            sample: r,
            up: Vec::new(),
            down: Vec::new(),
        });
    }

    let mut arcs = Vec::with_capacity(nodes.len().saturating_sub(1));
    for lower in 0..nodes.len() {
        let r = nodes[lower].sample;
        for k in up_start[r]..up_start[r + 1] {
            let mut cur = up_adj[k] as usize;
            let mut augmentation = Vec::new();
            while is_regular(cur) {
                home[cur] = Home::Arc(arcs.len());
                augmentation.push(cur);
                cur = up_adj[up_start[cur]] as usize;
            }
            let Home::Node(upper) = home[cur] else {
                unreachable!("arc walk ended on a regular sample")
            };
            let id = arcs.len();
            nodes[lower].up.push(id);
            nodes[upper].down.push(id);
            arcs.push(TreeArc {
                lower,
                upper,
                augmentation,
                seeds: Vec::new(),
            });
        }
    }
    ContourTree {
        samples,
        nodes,
        arcs,
        home,
    }
}

/// Records, for each sample interval along every arc, a graph edge whose
/// straight segment crosses every level in that interval on that arc's
/// contour, together with a cell containing the edge.
pub fn build_seed_table(tree: &mut ContourTree) -> Result<()> {
    let samples = &tree.samples;
    // Arcs without regular samples whose ends are not graph neighbours:
    // (arc, lower sample, upper sample).
    let mut pending: Vec<(ArcId, usize, usize)> = Vec::new();
    for (id, arc) in tree.arcs.iter_mut().enumerate() {
        let lo = tree.nodes[arc.lower].sample;
        let hi = tree.nodes[arc.upper].sample;
        let mut seeds = Vec::with_capacity(arc.augmentation.len() + 1);
        // A regular sample has a single down-arc, so any lower neighbour
        // reaches it through this arc, and likewise upward.
        for &p in &arc.augmentation {
            let below = first_neighbor(samples, p, |nb| nb < p);
            seeds.push(SeedEntry {
                below,
                above: p,
                cell: samples.edge_cell(below, p),
            });
        }
        match arc.augmentation.last() {
            Some(&top) => {
                let above = first_neighbor(samples, top, |nb| nb > top);
                seeds.push(SeedEntry {
                    below: top,
                    above,
                    cell: samples.edge_cell(top, above),
                });
            }
            None if samples.adjacent(lo, hi) => seeds.push(SeedEntry {
                below: lo,
                above: hi,
                cell: samples.edge_cell(lo, hi),
            }),
            None => pending.push((id, lo, hi)),
        }
        arc.seeds = seeds;
    }
    if pending.is_empty() {
        return Ok(());
    }
    // The upper end's lower neighbours that share a sublevel component
    // with the lower end (just below the upper end) reach it through the
    // arc. Replay the ascending sweep to find one.
    pending.sort_by_key(|&(_, _, hi)| hi);
    let n = samples.len();
    let mut uf = UnionFind::new(n);
    let mut next = 0;
    for s in 0..n {
        while next < pending.len() && pending[next].2 == s {
            let (id, lo, hi) = pending[next];
            let root = uf.find(lo as u32);
            let mut below = NONE as usize;
            samples.for_each_neighbor(hi, |nb| {
                if below == NONE as usize && nb < hi && uf.find(nb as u32) == root {
                    below = nb;
                }
            });
            if below == NONE as usize {
                return Err(Error::InconsistentTrees(format!(
                    "arc {id}: no lower neighbour of its upper end reaches its lower end"
                )));
            }
            tree.arcs[id].seeds.push(SeedEntry {
                below,
                above: hi,
                cell: samples.edge_cell(below, hi),
            });
            next += 1;
        }
        samples.for_each_neighbor(s, |nb| {
            if nb < s {
                let (a, b) = (uf.find(nb as u32), uf.find(s as u32));
                if a != b {
                    uf.union(a, b);
                }
            }
        });
    }
    Ok(())
}

fn first_neighbor(samples: &Samples, rank: usize, pred: impl Fn(usize) -> bool) -> usize {
    let mut found = NONE as usize;
    samples.for_each_neighbor(rank, |nb| {
        if found == NONE as usize && pred(nb) {
            found = nb;
        }
    });
    found
}

impl ContourTree {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&n| self.nodes[n].is_leaf())
    }

    pub fn home(&self, rank: usize) -> Home {
        self.home[rank]
    }

    pub fn node_value(&self, node: NodeId) -> f64 {
        self.nodes[node].value()
    }

    /// Value interval `(lower, upper)` of an arc.
    pub fn arc_range(&self, arc: ArcId) -> (f64, f64) {
        let a = &self.arcs[arc];
        (self.node_value(a.lower), self.node_value(a.upper))
    }

    pub fn global_min(&self) -> NodeId {
        0
    }

    pub fn global_max(&self) -> NodeId {
        self.nodes.len() - 1
    }

    /// The seed entry for level `value` on `arc`: a graph edge whose
    /// endpoints straddle `value` strictly.
    pub fn seed(&self, arc: ArcId, value: f64) -> Result<SeedEntry> {
        let a = &self.arcs[arc];
        if a.seeds.is_empty() {
            return Err(Error::SeedLookup { arc, value });
        }
        let chain_value = |k: usize| -> f64 {
            if k == 0 {
                self.node_value(a.lower)
            } else if k <= a.augmentation.len() {
                self.samples.value(a.augmentation[k - 1])
            } else {
                self.node_value(a.upper)
            }
        };
        // First entry whose upper chain sample is above `value`.
        let len = a.seeds.len();
        let (mut lo, mut hi) = (0usize, len);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if chain_value(mid + 1) > value {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let entry = a.seeds.get(lo).ok_or(Error::SeedLookup { arc, value })?;
        let (vb, va) = (
            self.samples.value(entry.below),
            self.samples.value(entry.above),
        );
        if vb < value && value < va {
            Ok(*entry)
        } else {
            Err(Error::SeedLookup { arc, value })
        }
    }

    /// One record per line: `node <id> <kind> <value> <x> <y>` then
    /// `arc <id> <lower> <upper> <augmentation count>`.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let kind = match n.point.kind {
                CriticalKind::Minimum => "min",
                CriticalKind::Maximum => "max",
                CriticalKind::Saddle => "saddle",
            };
            let _ = writeln!(
                out,
                "node {} {} {} {} {}",
                n.point.id, kind, n.point.value, n.point.x, n.point.y
            );
        }
        for (id, a) in self.arcs.iter().enumerate() {
            let _ = writeln!(
                out,
                "arc {} {} {} {}",
                id,
                a.lower,
                a.upper,
                a.augmentation.len()
            );
        }
        out
    }
}
