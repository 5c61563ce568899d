//! Intersection graph of a ball sample and its connected components.
//!
//! Vertices are ball indices; an edge joins two balls whose open interiors
//! meet (strictly, so tangent balls stay separate). Construction bins ball
//! centers into a uniform grid sized by the median radius and only tests
//! pairs sharing a neighborhood of cells. Balls much larger than the cell,
//! or covering an unreasonable number of cells, fall back to a brute-force
//! side list; the output is identical either way, the split only bounds the
//! work per ball. Heavy-tailed radius laws make both paths necessary: the
//! bulk of balls are near the scale, a few are enormous.

use crate::sampler::{mix64, norm_sq, Ball};
use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::hash::{BuildHasherDefault, Hasher};

/// Mix hasher for the small integer keys below. Grids are rebuilt per sample
/// and never see adversarial input, so SipHash's flood resistance buys
/// nothing and its per-lookup cost dominates construction.
#[derive(Default)]
struct MixHasher(u64);

impl Hasher for MixHasher {
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = mix64(self.0 ^ u64::from(b));
        }
    }

    fn write_u64(&mut self, x: u64) {
        self.0 = mix64(self.0 ^ x);
    }

    fn write_usize(&mut self, x: usize) {
        self.write_u64(x as u64);
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

type FastMap<K, V> = HashMap<K, V, BuildHasherDefault<MixHasher>>;
type FastSet<T> = HashSet<T, BuildHasherDefault<MixHasher>>;

/// Radius in cell units beyond which one ball switches to the fallback list;
/// past this the ball would cover more cells than pair tests saved.
const OVERSIZE_RADIUS_FACTOR: f64 = 64.0;
const OVERSIZE_CELL_BUDGET: f64 = 33_000.0;

#[derive(Debug, Clone)]
pub struct IntersectionGraph {
    adjacency: Vec<Vec<usize>>,
    component_of: Vec<usize>,
    component_members: Vec<Vec<usize>>,
}

impl IntersectionGraph {
    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Component id of a vertex. Ids are canonical: components are numbered
    /// by the smallest vertex index they contain, in increasing order, so
    /// the labeling is independent of edge discovery order.
    pub fn component_of(&self, v: usize) -> usize {
        self.component_of[v]
    }

    pub fn component_count(&self) -> usize {
        self.component_members.len()
    }

    /// Vertex indices of one component, ascending.
    pub fn component(&self, id: usize) -> &[usize] {
        &self.component_members[id]
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.component_members
    }

    /// The component holding every ball whose interior covers the origin.
    /// Empty when no ball covers it. All covering balls pairwise intersect
    /// (they share the origin), so they lie in one component.
    pub fn origin_component<'a>(&'a self, balls: &[Ball]) -> &'a [usize] {
        for (i, b) in balls.iter().enumerate() {
            if b.covers_origin() {
                return self.component(self.component_of[i]);
            }
        }
        &[]
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        // Path halving.
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

fn median_radius(balls: &[Ball]) -> f64 {
    let mut radii: Vec<f64> = balls.iter().map(|b| b.radius).collect();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    radii[radii.len() / 2]
}

/// Cells are addressed by a fold of their integer coordinates rather than the
/// coordinate vector itself. Distinct cells may fold to one key; a merged
/// bucket only adds candidate pairs, which the exact pair test rejects, so
/// the graph is unchanged while keys stay allocation-free.
fn fold_coords(coords: impl Iterator<Item = i64>) -> u64 {
    let mut h = 0xA24B_AED4_963E_E407u64;
    for c in coords {
        h = mix64(h ^ (c as u64));
    }
    h
}

fn cell_key(center: &[f64], cell: f64) -> u64 {
    fold_coords(center.iter().map(|x| (x / cell).floor() as i64))
}

/// Build the graph with the default cell size (median radius).
pub fn build_graph(balls: &[Ball]) -> IntersectionGraph {
    if balls.is_empty() {
        return IntersectionGraph {
            adjacency: Vec::new(),
            component_of: Vec::new(),
            component_members: Vec::new(),
        };
    }
    build_graph_with_cell(balls, median_radius(balls).max(1e-9))
}

/// Build the graph with an explicit grid cell size. Output is invariant in
/// `cell`; the knob only trades insertion volume against pair tests.
pub fn build_graph_with_cell(balls: &[Ball], cell: f64) -> IntersectionGraph {
    assert!(cell.is_finite() && cell > 0.0, "cell size must be positive");
    let n = balls.len();
    let d = balls.first().map_or(0, |b| b.center.len());

    // Split oversized balls off to a short list tested against everything.
    let mut gridded: Vec<usize> = Vec::with_capacity(n);
    let mut oversized: Vec<usize> = Vec::new();
    for (i, b) in balls.iter().enumerate() {
        let cells_covered = (2.0 * b.radius / cell + 2.0).powi(d as i32);
        if b.radius > OVERSIZE_RADIUS_FACTOR * cell || cells_covered > OVERSIZE_CELL_BUDGET {
            oversized.push(i);
        } else {
            gridded.push(i);
        }
    }

    let mut grid: FastMap<u64, Vec<usize>> = FastMap::default();
    for &i in &gridded {
        grid.entry(cell_key(&balls[i].center, cell)).or_default().push(i);
    }

    let mut uf = UnionFind::new(n);
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut seen: FastSet<(usize, usize)> = FastSet::default();
    let mut connect = |a: usize, b: usize, uf: &mut UnionFind, adj: &mut Vec<Vec<usize>>| {
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            adj[a].push(b);
            adj[b].push(a);
            uf.union(a, b);
        }
    };

    // A gridded ball reaches at most its radius plus the largest gridded
    // radius; scanning the cell range of that reach finds every partner.
    let mut max_gridded_radius = 0.0f64;
    for &i in &gridded {
        max_gridded_radius = max_gridded_radius.max(balls[i].radius);
    }
    let mut base = vec![0i64; d];
    let mut offsets = vec![0i64; d];
    for &i in &gridded {
        let b = &balls[i];
        let reach = b.radius + max_gridded_radius;
        let span = (reach / cell).ceil() as i64;
        for (k, x) in b.center.iter().enumerate() {
            base[k] = (x / cell).floor() as i64;
        }
        scan_cells(&base, &mut offsets, 0, span, &mut |key| {
            if let Some(bucket) = grid.get(&key) {
                for &j in bucket {
                    if j > i && balls[i].touches(&balls[j]) {
                        connect(i, j, &mut uf, &mut adjacency);
                    }
                }
            }
        });
    }
    for &i in &oversized {
        for j in 0..n {
            if j != i && balls[i].touches(&balls[j]) {
                connect(i, j, &mut uf, &mut adjacency);
            }
        }
    }

    for adj in &mut adjacency {
        adj.sort_unstable();
    }

    // Number components by first appearance so labels are construction-
    // order independent.
    let mut component_of = vec![usize::MAX; n];
    let mut component_members: Vec<Vec<usize>> = Vec::new();
    let mut root_to_id: FastMap<usize, usize> = FastMap::default();
    for v in 0..n {
        let root = uf.find(v);
        let id = match root_to_id.entry(root) {
            Entry::Occupied(e) => *e.get(),
            Entry::Vacant(e) => {
                let id = component_members.len();
                component_members.push(Vec::new());
                *e.insert(id)
            }
        };
        component_of[v] = id;
        component_members[id].push(v);
    }

    IntersectionGraph { adjacency, component_of, component_members }
}

fn scan_cells(
    base: &[i64],
    offsets: &mut [i64],
    axis: usize,
    span: i64,
    visit: &mut impl FnMut(u64),
) {
    if axis == offsets.len() {
        visit(fold_coords(base.iter().zip(offsets.iter()).map(|(b, o)| b + o)));
        return;
    }
    for o in -span..=span {
        offsets[axis] = o;
        scan_cells(base, offsets, axis + 1, span, visit);
    }
}

/// Indices of balls meeting the open ball of `radius` around the origin.
/// With radius 1 this is the seed set for chain length.
pub fn start_set(balls: &[Ball], radius: f64) -> Vec<usize> {
    balls
        .iter()
        .enumerate()
        .filter(|(_, b)| {
            let reach = b.radius + radius;
            norm_sq(&b.center) < reach * reach
        })
        .map(|(i, _)| i)
        .collect()
}

/// Indices of balls meeting the sphere of `radius` around the origin: the
/// center is closer than the ball's radius to the sphere. These are the
/// balls a growing component could use to leave the region.
pub fn sphere_touch_set(balls: &[Ball], radius: f64) -> Vec<usize> {
    balls
        .iter()
        .enumerate()
        .filter(|(_, b)| (b.center_norm() - radius).abs() < b.radius)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
pub(crate) fn ball(center: &[f64], radius: f64) -> Ball {
    Ball { center: center.to_vec(), radius }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, RadiusDistribution, Window};
    use crate::sampler::{sample_centers_in, SeedPath};

    #[test]
    fn empty_input_gives_empty_graph() {
        let g = build_graph(&[]);
        assert_eq!(g.vertex_count(), 0);
        assert_eq!(g.component_count(), 0);
        assert!(g.origin_component(&[]).is_empty());
    }

    #[test]
    fn two_overlapping_balls_connect() {
        let balls = vec![ball(&[0.0, 0.0], 1.0), ball(&[1.5, 0.0], 1.0)];
        let g = build_graph(&balls);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.component_count(), 1);
    }

    #[test]
    fn tangent_balls_stay_separate() {
        // Interiors are open: distance exactly r1 + r2 is no intersection.
        let balls = vec![ball(&[0.0, 0.0], 1.0), ball(&[2.0, 0.0], 1.0)];
        let g = build_graph(&balls);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.component_count(), 2);
    }

    #[test]
    fn chain_of_balls_is_one_component() {
        let balls: Vec<Ball> = (0..10).map(|i| ball(&[1.8 * i as f64, 0.0], 1.0)).collect();
        let g = build_graph(&balls);
        assert_eq!(g.component_count(), 1);
        assert_eq!(g.edge_count(), 9);
        for v in 0..10 {
            assert_eq!(g.component_of(v), 0);
        }
    }

    #[test]
    fn component_ids_are_first_occurrence_ordered() {
        let balls = vec![
            ball(&[0.0, 0.0], 0.5),
            ball(&[10.0, 0.0], 0.5),
            ball(&[0.4, 0.0], 0.5),
            ball(&[20.0, 0.0], 0.5),
        ];
        let g = build_graph(&balls);
        assert_eq!(g.component_of(0), 0);
        assert_eq!(g.component_of(2), 0);
        assert_eq!(g.component_of(1), 1);
        assert_eq!(g.component_of(3), 2);
        assert_eq!(g.component(0), &[0, 2]);
    }

    #[test]
    fn origin_component_requires_strict_cover() {
        // Ball at distance 1 with radius 1: the origin is on the boundary,
        // not inside.
        let boundary = vec![ball(&[1.0, 0.0], 1.0)];
        let g = build_graph(&boundary);
        assert!(g.origin_component(&boundary).is_empty());

        let covering = vec![ball(&[0.5, 0.0], 1.0), ball(&[1.8, 0.0], 0.5)];
        let g = build_graph(&covering);
        assert_eq!(g.origin_component(&covering), &[0, 1]);
    }

    #[test]
    fn oversized_ball_connects_through_fallback() {
        // One huge ball among many small ones triggers the fallback path.
        let mut balls: Vec<Ball> = (0..50)
            .map(|i| ball(&[3.0 * i as f64, 40.0], 0.01))
            .collect();
        balls.push(ball(&[75.0, 0.0], 200.0));
        let g = build_graph(&balls);
        assert_eq!(g.component_count(), 1, "giant ball swallows everything");
    }

    #[test]
    fn graph_is_invariant_in_cell_size() {
        let params =
            ModelParams::new(2, 0.4, RadiusDistribution::Pareto { scale: 0.5, exponent: 4.0 })
                .unwrap();
        let sample =
            sample_centers_in(&params, Window::Box { side: 30.0 }, SeedPath::root(99)).unwrap();
        let balls = sample.balls();
        let reference = build_graph(balls);
        for cell in [0.1, 0.7, 3.0, 25.0] {
            let g = build_graph_with_cell(balls, cell);
            assert_eq!(g.edge_count(), reference.edge_count(), "cell {cell}");
            for v in 0..balls.len() {
                assert_eq!(g.neighbors(v), reference.neighbors(v), "cell {cell} vertex {v}");
                assert_eq!(g.component_of(v), reference.component_of(v), "cell {cell}");
            }
        }
    }

    #[test]
    fn graph_matches_quadratic_scan_on_random_input() {
        let params =
            ModelParams::new(3, 0.05, RadiusDistribution::Uniform { low: 0.3, high: 1.2 })
                .unwrap();
        for seed in 0..5 {
            let sample =
                sample_centers_in(&params, Window::Box { side: 12.0 }, SeedPath::root(seed))
                    .unwrap();
            let balls = sample.balls();
            let g = build_graph(balls);
            for i in 0..balls.len() {
                for j in (i + 1)..balls.len() {
                    let edge = g.neighbors(i).contains(&j);
                    assert_eq!(edge, balls[i].touches(&balls[j]), "pair ({i},{j}) seed {seed}");
                }
            }
        }
    }

    #[test]
    fn start_set_uses_open_intersection_with_unit_ball() {
        let balls = vec![
            ball(&[0.0, 0.0], 0.2),  // inside B(0,1)
            ball(&[1.5, 0.0], 0.6),  // overlaps it
            ball(&[2.0, 0.0], 1.0),  // tangent reach: 1 + 1 = 2, excluded
            ball(&[5.0, 0.0], 0.5),  // far away
        ];
        assert_eq!(start_set(&balls, 1.0), vec![0, 1]);
    }

    #[test]
    fn sphere_touch_set_picks_balls_straddling_the_sphere() {
        let balls = vec![
            ball(&[0.0, 0.0], 0.5),   // deep inside, misses sphere r=2
            ball(&[2.0, 0.0], 0.3),   // centered on the sphere
            ball(&[2.9, 0.0], 1.0),   // reaches back across
            ball(&[4.0, 0.0], 0.5),   // outside, too short
            ball(&[0.0, 0.0], 2.0),   // radius exactly 2: open, misses
        ];
        assert_eq!(sphere_touch_set(&balls, 2.0), vec![1, 2]);
    }
}
