//! Test-only oracles. Nothing here calls into the tree or lens code paths
//! it is used to check.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use levelseg::grid::ScalarGrid;
use levelseg::lens::{PairSide, Persistence};
use levelseg::tree::ContourTree;

pub mod checks;

pub fn random_grid(seed: u64, w: usize, h: usize) -> ScalarGrid {
    let mut rng = StdRng::seed_from_u64(seed);
    let values = (0..w * h).map(|_| rng.gen::<f64>() * 100.0).collect();
    ScalarGrid::new(w, h, values).unwrap()
}

/// Random grid of 8-bit values drawn from a handful of levels, with a
/// black border band, to exercise the tie order.
pub fn tie_heavy_grid(seed: u64, w: usize, h: usize) -> ScalarGrid {
    let mut rng = StdRng::seed_from_u64(seed);
    let levels = [0.0, 0.0, 0.0, 40.0, 40.0, 90.0, 200.0];
    let values = (0..w * h)
        .map(|k| {
            let (i, j) = (k % w, k / w);
            if i == 0 || j == 0 || i + 1 == w || j + 1 == h {
                0.0
            } else {
                levels[rng.gen_range(0..levels.len())]
            }
        })
        .collect();
    ScalarGrid::new(w, h, values).unwrap()
}

/// Random grids of 4 to 8 samples a side followed by tie-heavy 8x7 grids.
pub fn segmentation_corpus(random: u64, tie_heavy: u64) -> Vec<ScalarGrid> {
    (0..random)
        .map(|s| {
            let (w, h) = (4 + s as usize % 5, 4 + (s as usize / 5) % 5);
            random_grid(900 + s, w, h)
        })
        .chain((0..tie_heavy).map(|s| tie_heavy_grid(950 + s, 8, 7)))
        .collect()
}

/// Realizes the (value, y, x) sample order as an explicit perturbation so
/// the level-set oracle sees the same critical points as the tree.
pub fn tie_order_perturbed(grid: &ScalarGrid) -> ScalarGrid {
    let n = grid.values().len() as f64;
    let values = grid
        .values()
        .iter()
        .enumerate()
        .map(|(k, &v)| v + 1e-3 * k as f64 / n)
        .collect();
    ScalarGrid::new(grid.width(), grid.height(), values).unwrap()
}

/// Smooth 8-bit image made of random Gaussian bumps.
pub fn synthetic_image(seed: u64, w: u32, h: u32, bumps: usize) -> image::GrayImage {
    let mut rng = StdRng::seed_from_u64(seed);
    let (fw, fh) = (f64::from(w), f64::from(h));
    let bumps: Vec<(f64, f64, f64, f64)> = (0..bumps)
        .map(|_| {
            (
                rng.gen_range(0.1 * fw..0.9 * fw),
                rng.gen_range(0.1 * fh..0.9 * fh),
                rng.gen_range(30.0..120.0),
                rng.gen_range(8.0..60.0),
            )
        })
        .collect();
    image::GrayImage::from_fn(w, h, |x, y| {
        let v: f64 = bumps
            .iter()
            .map(|&(cx, cy, amp, s)| {
                let d2 = (f64::from(x) - cx).powi(2) + (f64::from(y) - cy).powi(2);
                amp * (-d2 / s).exp()
            })
            .sum();
        image::Luma([v.min(255.0) as u8])
    })
}

/// Nodes on the extremum's side of the saddle.
pub fn branch(tree: &ContourTree, extremum: usize, saddle: usize) -> Vec<bool> {
    let mut seen = vec![false; tree.node_count()];
    seen[saddle] = true;
    let mut stack = vec![extremum];
    while let Some(n) = stack.pop() {
        if std::mem::replace(&mut seen[n], true) {
            continue;
        }
        for &a in tree.nodes[n].up.iter().chain(&tree.nodes[n].down) {
            let arc = &tree.arcs[a];
            stack.push(if arc.lower == n { arc.upper } else { arc.lower });
        }
    }
    seen[saddle] = false;
    seen
}

/// Whether the branches of same-side pairs are disjoint or nested.
pub fn branches_nest(tree: &ContourTree, p: &Persistence) -> bool {
    [PairSide::MinSide, PairSide::MaxSide]
        .into_iter()
        .all(|side| {
            let branches: Vec<Vec<bool>> = p
                .pairs
                .iter()
                .filter(|q| q.side == side)
                .map(|q| branch(tree, q.extremum, q.saddle))
                .collect();
            let size = |b: &[bool]| b.iter().filter(|x| **x).count();
            branches.iter().enumerate().all(|(i, a)| {
                branches[i + 1..].iter().all(|b| {
                    let both = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
                    both == 0 || both == size(a) || both == size(b)
                })
            })
        })
}

/// Bilinear value by corner weights, exact at corners.
pub fn bilinear(grid: &ScalarGrid, x: f64, y: f64) -> f64 {
    let i = (x.floor() as usize).min(grid.width() - 2);
    let j = (y.floor() as usize).min(grid.height() - 2);
    let (u, v) = (x - i as f64, y - j as f64);
    (1.0 - u) * (1.0 - v) * grid.get(i, j)
        + u * (1.0 - v) * grid.get(i + 1, j)
        + (1.0 - u) * v * grid.get(i, j + 1)
        + u * v * grid.get(i + 1, j + 1)
}

/// Saddle value of cell `(i, j)` if the saddle lies strictly inside it.
pub fn cell_saddle(grid: &ScalarGrid, i: usize, j: usize) -> Option<f64> {
    let (f00, f10, f01, f11) = (
        grid.get(i, j),
        grid.get(i + 1, j),
        grid.get(i, j + 1),
        grid.get(i + 1, j + 1),
    );
    let den = f00 + f11 - f10 - f01;
    if den == 0.0 {
        return None;
    }
    let x = (f00 - f01) / den;
    let y = (f00 - f10) / den;
    (x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0).then(|| (f00 * f11 - f10 * f01) / den)
}

pub struct Dsu(Vec<u32>);

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu((0..n as u32).collect())
    }
    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.0[x as usize] != x {
            let p = self.0[self.0[x as usize] as usize];
            self.0[x as usize] = p;
            x = p;
        }
        x
    }
    pub fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb) as usize] = ra.min(rb);
        }
    }
}

/// Supersampled field: samples every `1/factor` pixel.
pub struct Fine {
    pub nx: usize,
    pub ny: usize,
    pub factor: usize,
    pub values: Vec<f64>,
    /// Saddle value of the pixel cell containing each fine square.
    cell_saddles: Vec<Option<f64>>,
    cells_x: usize,
}

impl Fine {
    pub fn new(grid: &ScalarGrid, factor: usize) -> Self {
        let nx = (grid.width() - 1) * factor + 1;
        let ny = (grid.height() - 1) * factor + 1;
        let mut values = Vec::with_capacity(nx * ny);
        for l in 0..ny {
            for k in 0..nx {
                values.push(bilinear(
                    grid,
                    k as f64 / factor as f64,
                    l as f64 / factor as f64,
                ));
            }
        }
        let cells_x = grid.width() - 1;
        let cell_saddles = (0..(grid.height() - 1))
            .flat_map(|j| (0..cells_x).map(move |i| (i, j)))
            .map(|(i, j)| cell_saddle(grid, i, j))
            .collect();
        Self {
            nx,
            ny,
            factor,
            values,
            cell_saddles,
            cells_x,
        }
    }

    pub fn pos(&self, idx: usize) -> (f64, f64) {
        (
            (idx % self.nx) as f64 / self.factor as f64,
            (idx / self.nx) as f64 / self.factor as f64,
        )
    }

    /// Component label of every fine sample for the partition of the
    /// domain into `f > level` and `f <= level`. Diagonal connections in
    /// alternating fine squares follow the side of the cell's saddle.
    pub fn label(&self, level: f64) -> Vec<u32> {
        let (nx, ny) = (self.nx, self.ny);
        let above: Vec<bool> = self.values.iter().map(|&v| v > level).collect();
        let mut dsu = Dsu::new(nx * ny);
        for l in 0..ny {
            for k in 0..nx {
                let p = l * nx + k;
                if k + 1 < nx && above[p] == above[p + 1] {
                    dsu.union(p as u32, (p + 1) as u32);
                }
                if l + 1 < ny && above[p] == above[p + nx] {
                    dsu.union(p as u32, (p + nx) as u32);
                }
                if k + 1 < nx && l + 1 < ny {
                    let (p10, p01, p11) = (p + 1, p + nx, p + nx + 1);
                    if above[p] == above[p11] && above[p10] == above[p01] && above[p] != above[p10]
                    {
                        let cell = (l / self.factor)
                            .min(self.cell_saddles.len() / self.cells_x - 1)
                            * self.cells_x
                            + (k / self.factor).min(self.cells_x - 1);
                        let saddle_above = self.cell_saddles[cell].is_some_and(|s| s > level);
                        let (a, b) = if above[p] == saddle_above {
                            (p, p11)
                        } else {
                            (p10, p01)
                        };
                        dsu.union(a as u32, b as u32);
                    }
                }
            }
        }
        (0..(nx * ny) as u32).map(|p| dsu.find(p)).collect()
    }

    /// Level-set components at `level` as (below component, above
    /// component) pairs, with one representative sample for each side.
    pub fn contours(&self, level: f64, labels: &[u32]) -> Vec<Contour> {
        let nx = self.nx;
        let mut seen: HashMap<(u32, u32), Contour> = HashMap::new();
        let mut add = |p: usize, q: usize| {
            let (b, a) = if self.values[p] > level {
                (q, p)
            } else {
                (p, q)
            };
            seen.entry((labels[b], labels[a])).or_insert(Contour {
                below: labels[b],
                above: labels[a],
                below_rep: b,
                above_rep: a,
            });
        };
        for l in 0..self.ny {
            for k in 0..nx {
                let p = l * nx + k;
                let ap = self.values[p] > level;
                if k + 1 < nx && ap != (self.values[p + 1] > level) {
                    add(p, p + 1);
                }
                if l + 1 < self.ny && ap != (self.values[p + nx] > level) {
                    add(p, p + nx);
                }
            }
        }
        let mut out: Vec<Contour> = seen.into_values().collect();
        out.sort_by_key(|c| (c.below, c.above));
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Contour {
    pub below: u32,
    pub above: u32,
    pub below_rep: usize,
    pub above_rep: usize,
}

/// Contour tree as value-labelled edges, computed from level-set
/// components at the mid-values between consecutive candidate critical
/// values (all vertex values and cell-saddle values).
#[derive(Debug, Clone)]
pub struct OracleTree {
    pub node_values: Vec<f64>,
    pub node_degrees: Vec<usize>,
    pub edges: Vec<(f64, f64)>,
    /// Node-index form of `edges`, `(lower, upper)`.
    pub arcs: Vec<(usize, usize)>,
}

pub fn contour_tree_oracle(grid: &ScalarGrid, factor: usize) -> OracleTree {
    let fine = Fine::new(grid, factor);
    let mut candidates: Vec<f64> = grid.values().to_vec();
    for j in 0..grid.height() - 1 {
        for i in 0..grid.width() - 1 {
            if let Some(s) = cell_saddle(grid, i, j) {
                candidates.push(s);
            }
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut node_values = Vec::new();
    let mut node_degrees = Vec::new();
    let mut edges = Vec::new();
    let mut arcs = Vec::new();
    // Open arcs: (start node) per contour of the previous layer.
    let mut prev: Option<(Vec<u32>, Vec<Contour>, Vec<usize>)> = None;
    for k in 0..candidates.len() - 1 {
        let level = 0.5 * (candidates[k] + candidates[k + 1]);
        let labels = fine.label(level);
        let contours = fine.contours(level, &labels);
        let event_value = candidates[k];
        let mut open = vec![usize::MAX; contours.len()];
        match &prev {
            None => {
                let node = node_values.len();
                node_values.push(event_value);
                node_degrees.push(contours.len());
                open.iter_mut().for_each(|o| *o = node);
            }
            Some((prev_labels, prev_contours, prev_open)) => {
                let mut groups: HashMap<(u32, u32), (Vec<usize>, Vec<usize>)> = HashMap::new();
                for (li, c) in prev_contours.iter().enumerate() {
                    let key = (labels[c.below_rep], c.above);
                    groups.entry(key).or_default().0.push(li);
                }
                for (ri, c) in contours.iter().enumerate() {
                    let key = (c.below, prev_labels[c.above_rep]);
                    groups.entry(key).or_default().1.push(ri);
                }
                let mut keys: Vec<_> = groups.keys().copied().collect();
                keys.sort();
                for key in keys {
                    let (left, right) = &groups[&key];
                    if left.len() == 1 && right.len() == 1 {
                        open[right[0]] = prev_open[left[0]];
                        continue;
                    }
                    let node = node_values.len();
                    node_values.push(event_value);
                    node_degrees.push(left.len() + right.len());
                    for &li in left {
                        edges.push((node_values[prev_open[li]], event_value));
                        arcs.push((prev_open[li], node));
                    }
                    for &ri in right {
                        open[ri] = node;
                    }
                }
            }
        }
        prev = Some((labels, contours, open));
    }
    let (_, contours, open) = prev.expect("at least two candidate values");
    let node = node_values.len();
    let top = *candidates.last().unwrap();
    node_values.push(top);
    node_degrees.push(contours.len());
    for o in open {
        edges.push((node_values[o], top));
        arcs.push((o, node));
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    OracleTree {
        node_values,
        node_degrees,
        edges,
        arcs,
    }
}

/// Persistence pairs by repeatedly cancelling, among all leaves whose
/// neighbour keeps another neighbour on the leaf's side, the one with the
/// smallest value difference, then splicing out neighbours left with one
/// neighbour above and one below. Values must be distinct. Returns
/// `(extremum value, saddle value)` pairs, sorted.
pub fn greedy_pairs(node_values: &[f64], arcs: &[(usize, usize)]) -> Vec<(f64, f64)> {
    let n = node_values.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in arcs {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut edges = arcs.len();
    let mut out = Vec::new();
    while edges > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for x in 0..n {
            if adj[x].len() != 1 {
                continue;
            }
            let s = adj[x][0];
            let below = node_values[x] < node_values[s];
            let same_side = adj[s]
                .iter()
                .filter(|&&m| (node_values[m] < node_values[s]) == below)
                .count();
            if same_side < 2 {
                continue;
            }
            let p = (node_values[s] - node_values[x]).abs();
            if best.is_none_or(|b| p < b.0) {
                best = Some((p, x, s));
            }
        }
        let (_, x, s) = best.expect("a tree with two or more arcs has a cancellable leaf");
        out.push((node_values[x], node_values[s]));
        adj[x].clear();
        adj[s].retain(|&m| m != x);
        edges -= 1;
        if adj[s].len() == 2 {
            let (a, b) = (adj[s][0], adj[s][1]);
            if (node_values[a] < node_values[s]) != (node_values[b] < node_values[s]) {
                adj[s].clear();
                adj[a].retain(|&m| m != s);
                adj[b].retain(|&m| m != s);
                adj[a].push(b);
                adj[b].push(a);
                edges -= 1;
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out
}
