//! Per-realization observables: the origin component and its volume, ball
//! count, diameter, the longest chain from the unit ball, sphere-to-sphere
//! crossings, the confined annulus crossing, the covering radius, and the
//! dilated-component volume.
//!
//! Everything here is a pure function of a ball list (plus a seed for the
//! Monte Carlo volume), so replicate-level parallelism stays outside.

use crate::graph::{build_graph, sphere_touch_set, start_set, IntersectionGraph};
use crate::model::{unit_ball_volume, ModelParams, Window};
use crate::sampler::{
    extend_touching, sample_centers_in, sample_touching, Ball, SampleError, SeedPath,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObservableError {
    #[error("dilation base radius must be positive, got {0}")]
    DilationRadius(f64),
    #[error("dilation width must be non-negative, got {0}")]
    DilationWidth(f64),
}

// Seed streams hung off a replicate seed; the sampler owns tags 0..2.
const GROWTH_STREAM: u64 = 3;
const VOLUME_STREAM: u64 = 4;

/// Hit-or-miss Monte Carlo volume: mean, binomial standard error, and the
/// number of points thrown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl VolumeEstimate {
    const EXACT_ZERO: VolumeEstimate = VolumeEstimate { mean: 0.0, stderr: 0.0, samples: 0 };
}

/// Volume of a union of balls by hit-or-miss sampling over the bounding box.
/// Unbiased; stderr is the binomial standard error scaled by the box volume.
/// An empty list is exactly zero.
pub fn union_volume(balls: &[Ball], n_samples: u64, seed: &SeedPath) -> VolumeEstimate {
    assert!(n_samples >= 1, "volume estimation needs at least one point");
    if balls.is_empty() {
        return VolumeEstimate::EXACT_ZERO;
    }
    let d = balls[0].center.len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for b in balls {
        for k in 0..d {
            lo[k] = lo[k].min(b.center[k] - b.radius);
            hi[k] = hi[k].max(b.center[k] + b.radius);
        }
    }
    let box_volume: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).product();
    let mut rng = seed.rng();
    let mut point = vec![0.0; d];
    let mut hits = 0u64;
    for _ in 0..n_samples {
        for k in 0..d {
            point[k] = lo[k] + (hi[k] - lo[k]) * rng.gen::<f64>();
        }
        if balls.iter().any(|b| b.contains(&point)) {
            hits += 1;
        }
    }
    let p = hits as f64 / n_samples as f64;
    VolumeEstimate {
        mean: box_volume * p,
        stderr: box_volume * (p * (1.0 - p) / n_samples as f64).sqrt(),
        samples: n_samples,
    }
}

/// Diameter of the union of the given balls: the supremum of distances
/// between points of the union, which is the max over ball pairs (a ball
/// paired with itself included) of `‖c_i − c_j‖ + r_i + r_j`. Zero for an
/// empty list.
pub fn diameter(balls: &[Ball]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in balls.iter().enumerate() {
        for b in &balls[i..] {
            let gap = crate::sampler::dist_sq(&a.center, &b.center).sqrt() + a.radius + b.radius;
            best = best.max(gap);
        }
    }
    best
}

/// Largest radius among balls whose center lies within half their own
/// radius of the origin; zero when no ball qualifies. A qualifying ball
/// covers `B(0, radius/2)`, so the union contains a ball of this radius
/// halved around the origin. Qualifying balls cover the origin itself,
/// so any sample whose window contains the origin sees them all.
pub fn covering_radius(balls: &[Ball]) -> f64 {
    balls
        .iter()
        .filter(|b| b.center_norm() < b.radius / 2.0)
        .map(|b| b.radius)
        .fold(0.0, f64::max)
}

/// Result of the longest-chain search. `exact` is false when some reachable
/// component was larger than the cap or a search ran out of its expansion
/// budget; `len` is then a lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainResult {
    pub len: u64,
    pub exact: bool,
}

const EXACT_EXPANSION_BUDGET: u64 = 5_000_000;
const OVERSIZE_EXPANSION_BUDGET: u64 = 500_000;

/// Longest simple path (counted in vertices) beginning at a start vertex.
/// Searches per component: components within `cap` vertices get an exact
/// branch-and-bound over simple paths, pruned by a breadth-first bound on
/// the vertices still reachable; larger components get a budgeted search
/// and mark the result inexact. An empty start set has chain length zero.
pub fn longest_chain(graph: &IntersectionGraph, start: &[usize], cap: usize) -> ChainResult {
    assert!(cap >= 1, "chain cap must be at least 1");
    if start.is_empty() {
        return ChainResult { len: 0, exact: true };
    }
    let mut starts_by_component: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &v in start {
        starts_by_component.entry(graph.component_of(v)).or_default().push(v);
    }
    let mut best_total = 0u64;
    let mut exact = true;
    for (component, mut starts) in starts_by_component {
        starts.sort_unstable();
        starts.dedup();
        let members = graph.component(component);
        let oversize = members.len() > cap;
        let mut search = ChainSearch::new(graph, members, if oversize {
            OVERSIZE_EXPANSION_BUDGET
        } else {
            EXACT_EXPANSION_BUDGET
        });
        for &s in &starts {
            search.run(search.local_index(s));
            if search.best == members.len() || search.exhausted {
                break;
            }
        }
        if oversize || search.exhausted {
            exact = false;
        }
        best_total = best_total.max(search.best as u64);
    }
    ChainResult { len: best_total, exact }
}

struct ChainSearch {
    adjacency: Vec<Vec<usize>>,
    global_to_local: HashMap<usize, usize>,
    visited: Vec<bool>,
    best: usize,
    budget: u64,
    exhausted: bool,
}

impl ChainSearch {
    fn new(graph: &IntersectionGraph, members: &[usize], budget: u64) -> Self {
        let global_to_local: HashMap<usize, usize> =
            members.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        let adjacency = members
            .iter()
            .map(|&g| graph.neighbors(g).iter().map(|n| global_to_local[n]).collect())
            .collect();
        ChainSearch {
            adjacency,
            global_to_local,
            visited: vec![false; members.len()],
            best: 0,
            budget,
            exhausted: false,
        }
    }

    fn local_index(&self, global: usize) -> usize {
        self.global_to_local[&global]
    }

    fn run(&mut self, start: usize) {
        self.visited[start] = true;
        self.extend(start, 1);
        self.visited[start] = false;
    }

    fn extend(&mut self, v: usize, depth: usize) {
        if self.budget == 0 {
            self.exhausted = true;
            return;
        }
        self.budget -= 1;
        self.best = self.best.max(depth);
        if self.best == self.visited.len() {
            return;
        }
        // No extension can beat the vertices still reachable from here.
        if depth + self.reachable_unvisited(v) <= self.best {
            return;
        }
        for i in 0..self.adjacency[v].len() {
            let w = self.adjacency[v][i];
            if !self.visited[w] {
                self.visited[w] = true;
                self.extend(w, depth + 1);
                self.visited[w] = false;
                if self.best == self.visited.len() || self.exhausted {
                    return;
                }
            }
        }
    }

    fn reachable_unvisited(&self, from: usize) -> usize {
        let mut seen = self.visited.clone();
        let mut stack = vec![from];
        let mut count = 0;
        while let Some(v) = stack.pop() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count
    }
}

/// Does some component own a ball meeting the sphere of radius `r` and a
/// ball meeting the sphere of radius `2r`? Strict open-ball contact on
/// both spheres.
pub fn sphere_crossing(balls: &[Ball], graph: &IntersectionGraph, r: f64) -> bool {
    assert!(r > 0.0, "crossing radius must be positive");
    spheres_linked(balls, graph, r, 2.0 * r)
}

fn spheres_linked(balls: &[Ball], graph: &IntersectionGraph, inner: f64, outer: f64) -> bool {
    let inner_set = sphere_touch_set(balls, inner);
    if inner_set.is_empty() {
        return false;
    }
    let inner_components: HashSet<usize> =
        inner_set.iter().map(|&v| graph.component_of(v)).collect();
    sphere_touch_set(balls, outer)
        .iter()
        .any(|&v| inner_components.contains(&graph.component_of(v)))
}

/// The confined crossing event on a realized ball list: some component
/// joins the sphere of radius `alpha` to the sphere of radius `8·alpha`.
pub fn confined_crossing_event(balls: &[Ball], graph: &IntersectionGraph, alpha: f64) -> bool {
    assert!(alpha > 0.0, "crossing scale must be positive");
    spheres_linked(balls, graph, alpha, 8.0 * alpha)
}

/// One realization of the confined crossing indicator: restrict the process
/// to balls with centers in the ball of radius `10·alpha`, and ask whether
/// that restriction joins the spheres at `alpha` and `8·alpha`. The
/// restriction is part of the event's definition, so there is no window
/// truncation error.
pub fn confined_crossing_indicator(
    params: &ModelParams,
    alpha: f64,
    seed: SeedPath,
) -> Result<bool, SampleError> {
    let sample = sample_centers_in(params, Window::Ball { radius: 10.0 * alpha }, seed)?;
    let graph = build_graph(sample.balls());
    Ok(confined_crossing_event(sample.balls(), &graph, alpha))
}

/// Volume of the dilation by `s` of the component of `Σ ∪ B(0, r)` holding
/// the central ball: a virtual ball of radius `r` joins the graph, its
/// component's radii inflate by `s`, and the union volume is estimated by
/// Monte Carlo. An empty list gives the exact dilated-ball volume.
pub fn dilated_component_volume(
    dimension: u32,
    balls: &[Ball],
    r: f64,
    s: f64,
    n_samples: u64,
    seed: &SeedPath,
) -> Result<VolumeEstimate, ObservableError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(ObservableError::DilationRadius(r));
    }
    if !(s.is_finite() && s >= 0.0) {
        return Err(ObservableError::DilationWidth(s));
    }
    if balls.is_empty() {
        return Ok(VolumeEstimate {
            mean: unit_ball_volume(dimension) * (r + s).powi(dimension as i32),
            stderr: 0.0,
            samples: 0,
        });
    }
    let mut augmented = balls.to_vec();
    augmented.push(Ball { center: vec![0.0; dimension as usize], radius: r });
    let graph = build_graph(&augmented);
    let component = graph.component(graph.component_of(balls.len()));
    let inflated: Vec<Ball> = component
        .iter()
        .map(|&i| Ball { center: augmented[i].center.clone(), radius: augmented[i].radius + s })
        .collect();
    Ok(union_volume(&inflated, n_samples, seed))
}

/// How a component realization is windowed and measured: the starting
/// window radius, how many doublings may chase a boundary-touching
/// component before censoring, the Monte Carlo point count for the volume,
/// and the chain search cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowPolicy {
    pub initial_radius: f64,
    pub max_doublings: u32,
    pub volume_samples: u64,
    pub chain_cap: usize,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            initial_radius: 4.0,
            max_doublings: 8,
            volume_samples: 100_000,
            chain_cap: 24,
        }
    }
}

/// Observables of one realization: the origin component's Monte Carlo
/// volume, its ball count, its diameter, the longest chain from the unit
/// ball with an exactness flag, the covering radius, and whether the window
/// growth budget censored the realization (all size observables are then
/// lower bounds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub volume: f64,
    pub volume_stderr: f64,
    pub ball_count: u64,
    pub diameter: f64,
    pub chain_len: u64,
    pub chain_exact: bool,
    pub boundary_censored: bool,
    pub covering_radius: f64,
    pub final_radius: f64,
}

/// Sample one realization and measure it. The sample starts in touching
/// mode on the initial window and doubles the window while any component
/// meeting the unit ball still has a ball at the window boundary; a
/// touching-mode ball away from the boundary sphere lies wholly inside the
/// window, so once no tracked component reaches the boundary, no unseen
/// process ball can attach to one and every tracked component is complete.
/// The origin component is tracked through this rule because an
/// origin-covering ball meets the unit ball.
pub fn component_report(
    params: &ModelParams,
    seed: &SeedPath,
    policy: &WindowPolicy,
) -> Result<ComponentReport, SampleError> {
    let mut radius = policy.initial_radius;
    let mut sample = sample_touching(params, Window::Ball { radius }, seed.clone())?;
    let growth_space = seed.child(GROWTH_STREAM);
    let mut censored = false;
    let mut doublings = 0u32;
    let (graph, starts) = loop {
        let graph = build_graph(sample.balls());
        let starts = start_set(sample.balls(), 1.0);
        let tracked: HashSet<usize> =
            starts.iter().map(|&v| graph.component_of(v)).collect();
        let open = sphere_touch_set(sample.balls(), radius)
            .iter()
            .any(|&v| tracked.contains(&graph.component_of(v)));
        if !open {
            break (graph, starts);
        }
        if doublings >= policy.max_doublings {
            censored = true;
            break (graph, starts);
        }
        radius *= 2.0;
        sample =
            extend_touching(&sample, Window::Ball { radius }, growth_space.child(doublings as u64))?;
        doublings += 1;
    };

    let balls = sample.balls();
    let origin: Vec<Ball> =
        graph.origin_component(balls).iter().map(|&i| balls[i].clone()).collect();
    let volume = if origin.is_empty() {
        VolumeEstimate::EXACT_ZERO
    } else {
        union_volume(&origin, policy.volume_samples, &seed.child(VOLUME_STREAM))
    };
    let chain = longest_chain(&graph, &starts, policy.chain_cap);
    Ok(ComponentReport {
        volume: volume.mean,
        volume_stderr: volume.stderr,
        ball_count: origin.len() as u64,
        diameter: diameter(&origin),
        chain_len: chain.len,
        chain_exact: chain.exact,
        boundary_censored: censored,
        covering_radius: covering_radius(balls),
        final_radius: radius,
    })
}
