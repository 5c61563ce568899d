//! Differential oracles: independent recomputation of the library's
//! analytic and algorithmic outputs by slower, simpler means. Closed-form
//! moments are checked against adaptive quadrature, the grid graph against
//! a quadratic scan with breadth-first components, the chain search against
//! unpruned path enumeration, dilated window volumes against hit-or-miss
//! sampling, and the covering radius against its exact survival law.
//!
//! Every check runs from a fixed seed, so a fresh checkout reports the same
//! pass/fail lines.

use crate::graph::build_graph;
use crate::model::{
    steiner_volume, tilt_integral, unit_ball_volume, Moment, ModelParams, RadiusDistribution,
    Window,
};
use crate::observables::{covering_radius, longest_chain, union_volume};
use crate::sampler::{sample_centers_in, sample_touching, thin, Ball, SeedPath};
use rand::Rng;
use std::f64::consts::PI;

/// One oracle check: which suite it belongs to, what it compared, whether
/// the comparison held, and a short human-readable detail line.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(suite: &'static str, name: &'static str, passed: bool, detail: String) -> Self {
        CheckOutcome { suite, name, passed, detail }
    }
}

pub const SUITES: &[&str] =
    &["graph", "chain", "moments", "steiner", "volume", "covering", "sampling"];

/// Run the named suite, or all suites when `filter` is `None`. Unknown
/// suite names yield an empty list; callers decide how loudly to complain.
pub fn run_suites(filter: Option<&str>, master_seed: u64) -> Vec<CheckOutcome> {
    let root = SeedPath::root(master_seed);
    let mut out = Vec::new();
    for (index, &suite) in SUITES.iter().enumerate() {
        if filter.map_or(true, |f| f == suite) {
            let seed = root.child(index as u64);
            match suite {
                "graph" => out.push(graph_suite(&seed)),
                "chain" => out.push(chain_suite(&seed)),
                "moments" => out.extend(moments_suite()),
                "steiner" => out.push(steiner_suite(&seed)),
                "volume" => out.push(volume_suite(&seed)),
                "covering" => out.extend(covering_suite(&seed)),
                "sampling" => out.extend(sampling_suite(&seed)),
                _ => unreachable!(),
            }
        }
    }
    out
}

// ---------------------------------------------------------------- quadrature

/// Adaptive Simpson integration to an absolute tolerance.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tolerance: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tolerance: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tolerance {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tolerance, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tolerance, depth - 1)
    }
    if a >= b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tolerance, 48)
}

/// `∫_{[alpha, ∞)} f(r) ν(dr)` by quadrature, sidestepping the library's
/// closed forms. The Pareto branch substitutes `t = scale/r`, turning the
/// unbounded integral into one over `(0, scale/alpha]`; that needs
/// `f(r)·r^{-exponent}` integrable, which callers guarantee by keeping the
/// polynomial degree of `f` below the exponent. Returns `None` on a
/// diverging Pareto branch.
fn integral_over_tail(
    dist: &RadiusDistribution,
    alpha: f64,
    degree: f64,
    f: &dyn Fn(f64) -> f64,
) -> Option<f64> {
    const TOL: f64 = 1e-12;
    // Stop just short of the substituted endpoint t = 0; the truncated mass
    // is far below the comparison tolerances.
    const T_FLOOR: f64 = 1e-9;
    match dist {
        RadiusDistribution::Constant { value } => {
            Some(if *value >= alpha { f(*value) } else { 0.0 })
        }
        RadiusDistribution::Uniform { low, high } => {
            let lo = alpha.max(*low);
            if lo >= *high {
                return Some(0.0);
            }
            let width = high - low;
            Some(adaptive_simpson(&|r| f(r) / width, lo, *high, TOL))
        }
        RadiusDistribution::Pareto { scale, exponent } => {
            if degree >= *exponent {
                return None;
            }
            let (x, e) = (*scale, *exponent);
            let upper = if alpha <= x { 1.0 } else { x / alpha };
            let g = move |t: f64| f(x / t) * e * t.powf(e - 1.0) / x;
            Some(adaptive_simpson(&g, T_FLOOR, upper, TOL) * x)
        }
        RadiusDistribution::Mixture { components } => {
            let mut total = 0.0;
            for c in components {
                total += c.weight * integral_over_tail(&c.law, alpha, degree, f)?;
            }
            Some(total)
        }
    }
}

/// `E(R^s)` by quadrature; `None` when a Pareto branch diverges.
pub fn moment_quadrature(dist: &RadiusDistribution, s: f64) -> Option<f64> {
    integral_over_tail(dist, 0.0, s, &|r| r.powf(s))
}

/// `∫_{[alpha, ∞)} r^d ν(dr)` by quadrature.
pub fn tail_mass_quadrature(dist: &RadiusDistribution, d: u32, alpha: f64) -> Option<f64> {
    integral_over_tail(dist, alpha, d as f64, &|r| r.powi(d as i32))
}

/// `λ·∫ |W ⊕ B(0,r)| ν(dr)` by quadrature over the dilated-window volume.
pub fn tilt_quadrature(
    dist: &RadiusDistribution,
    window: Window,
    d: u32,
    lambda: f64,
) -> Option<f64> {
    let f = move |r: f64| steiner_volume(window, d, r).expect("supported window");
    integral_over_tail(dist, 0.0, d as f64, &f).map(|v| lambda * v)
}

// -------------------------------------------------------------- brute force

/// Quadratic-scan intersection graph with breadth-first component labels,
/// written without the grid, the union-find, or the `Ball::touches`
/// predicate. Component ids are numbered by smallest member index, matching
/// the library's canonical labeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteGraph {
    pub adjacency: Vec<Vec<usize>>,
    pub component_of: Vec<usize>,
}

fn brute_adjacency(balls: &[Ball], touch: &dyn Fn(&Ball, &Ball) -> bool) -> Vec<Vec<usize>> {
    let n = balls.len();
    let mut adjacency = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if touch(&balls[i], &balls[j]) {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }
    adjacency
}

fn strict_touch(a: &Ball, b: &Ball) -> bool {
    let mut sq = 0.0;
    for (x, y) in a.center.iter().zip(&b.center) {
        sq += (x - y) * (x - y);
    }
    // Distance compared after a square root, deliberately different
    // arithmetic from the production predicate.
    sq.sqrt() < a.radius + b.radius
}

pub fn bruteforce_graph(balls: &[Ball]) -> BruteGraph {
    bruteforce_graph_with(balls, &strict_touch)
}

fn bruteforce_graph_with(balls: &[Ball], touch: &dyn Fn(&Ball, &Ball) -> bool) -> BruteGraph {
    let adjacency = brute_adjacency(balls, touch);
    let n = balls.len();
    let mut component_of = vec![usize::MAX; n];
    let mut next = 0;
    for v in 0..n {
        if component_of[v] != usize::MAX {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([v]);
        component_of[v] = next;
        while let Some(u) = queue.pop_front() {
            for &w in &adjacency[u] {
                if component_of[w] == usize::MAX {
                    component_of[w] = next;
                    queue.push_back(w);
                }
            }
        }
        next += 1;
    }
    BruteGraph { adjacency, component_of }
}

/// Compare the production graph against the brute-force one; `Err` carries
/// the first disagreement.
pub fn graph_matches_bruteforce(balls: &[Ball]) -> Result<(), String> {
    let fast = build_graph(balls);
    let brute = bruteforce_graph(balls);
    for v in 0..balls.len() {
        let mut expected = brute.adjacency[v].clone();
        expected.sort_unstable();
        if fast.neighbors(v) != expected.as_slice() {
            return Err(format!(
                "vertex {v}: adjacency {:?} vs brute-force {:?}",
                fast.neighbors(v),
                expected
            ));
        }
        if fast.component_of(v) != brute.component_of[v] {
            return Err(format!(
                "vertex {v}: component {} vs brute-force {}",
                fast.component_of(v),
                brute.component_of[v]
            ));
        }
    }
    Ok(())
}

/// Longest simple path from any start vertex by full enumeration, no
/// pruning, no cap. Exponential; callers keep components small.
pub fn enumerate_longest_chain(adjacency: &[Vec<usize>], starts: &[usize]) -> u64 {
    fn walk(adjacency: &[Vec<usize>], v: usize, visited: &mut [bool], depth: u64, best: &mut u64) {
        *best = (*best).max(depth);
        for &w in &adjacency[v] {
            if !visited[w] {
                visited[w] = true;
                walk(adjacency, w, visited, depth + 1, best);
                visited[w] = false;
            }
        }
    }
    let mut best = 0;
    let mut visited = vec![false; adjacency.len()];
    for &s in starts {
        visited.iter_mut().for_each(|v| *v = false);
        visited[s] = true;
        walk(adjacency, s, &mut visited, 1, &mut best);
    }
    best
}

// ------------------------------------------------------------------- suites

fn pareto15() -> RadiusDistribution {
    RadiusDistribution::Pareto { scale: 1.0, exponent: 5.0 }
}

/// Seeded sample matrices for the graph comparison: alternating dimension,
/// heavy-tailed radii, up to 200 balls.
pub fn graph_comparison_cases(seed: &SeedPath, cases: u64) -> Result<(), String> {
    for case in 0..cases {
        let (d, side, lambda) = if case % 2 == 0 { (2, 30.0, 0.145) } else { (3, 12.0, 0.075) };
        let params = ModelParams::new(d, lambda, pareto15()).map_err(|e| e.to_string())?;
        let sample = sample_centers_in(&params, Window::Box { side }, seed.child(case))
            .map_err(|e| e.to_string())?;
        let balls = &sample.balls()[..sample.len().min(200)];
        graph_matches_bruteforce(balls).map_err(|e| format!("case {case}: {e}"))?;
    }
    Ok(())
}

fn graph_suite(seed: &SeedPath) -> CheckOutcome {
    match graph_comparison_cases(seed, 100) {
        Ok(()) => CheckOutcome::new(
            "graph",
            "adjacency and components vs quadratic scan",
            true,
            "100 seeded configurations (d=2 and d=3, heavy-tailed radii) agree exactly".into(),
        ),
        Err(e) => CheckOutcome::new("graph", "adjacency and components vs quadratic scan", false, e),
    }
}

/// Compare the chain search against enumeration on seeded components of at
/// most `max_vertices` vertices, until `target` components have been
/// checked. Returns (checked, multi-vertex checked) or the first mismatch.
pub fn chain_comparison_cases(
    seed: &SeedPath,
    target: u64,
    max_vertices: usize,
) -> Result<(u64, u64), String> {
    let mut checked = 0u64;
    let mut multi = 0u64;
    let mut case = 0u64;
    while checked < target {
        let lambda = if case % 2 == 0 { 0.1 } else { 0.22 };
        let params = ModelParams::new(2, lambda, RadiusDistribution::Constant { value: 1.0 })
            .map_err(|e| e.to_string())?;
        let sample = sample_centers_in(&params, Window::Box { side: 14.0 }, seed.child(case))
            .map_err(|e| e.to_string())?;
        let balls = sample.balls();
        let graph = build_graph(balls);
        let brute = bruteforce_graph(balls);
        for id in 0..graph.component_count() {
            if checked >= target {
                break;
            }
            let members = graph.component(id);
            if members.len() < 2 || members.len() > max_vertices {
                continue;
            }
            let searched = longest_chain(&graph, members, max_vertices * 2);
            if !searched.exact {
                return Err(format!("case {case} component {id}: search reported inexact"));
            }
            let enumerated = enumerate_longest_chain(&brute.adjacency, members);
            if searched.len != enumerated {
                return Err(format!(
                    "case {case} component {id} ({} vertices): search {} vs enumeration {}",
                    members.len(),
                    searched.len,
                    enumerated
                ));
            }
            checked += 1;
            if members.len() >= 3 {
                multi += 1;
            }
        }
        case += 1;
        if case > 100_000 {
            return Err("ran out of cases before reaching the target".into());
        }
    }
    Ok((checked, multi))
}

fn chain_suite(seed: &SeedPath) -> CheckOutcome {
    match chain_comparison_cases(seed, 500, 12) {
        Ok((checked, multi)) => CheckOutcome::new(
            "chain",
            "longest chain vs exhaustive enumeration",
            true,
            format!("{checked} seeded components agree ({multi} with three or more balls)"),
        ),
        Err(e) => CheckOutcome::new("chain", "longest chain vs exhaustive enumeration", false, e),
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

fn moments_suite() -> Vec<CheckOutcome> {
    let mixture = RadiusDistribution::Mixture {
        components: vec![
            crate::model::MixtureComponent {
                weight: 0.3,
                law: RadiusDistribution::Constant { value: 2.0 },
            },
            crate::model::MixtureComponent {
                weight: 0.7,
                law: RadiusDistribution::Uniform { low: 1.0, high: 3.0 },
            },
        ],
    };
    let uniform = RadiusDistribution::Uniform { low: 0.5, high: 1.5 };
    let wide = RadiusDistribution::Uniform { low: 0.25, high: 2.0 };
    let pareto45 = RadiusDistribution::Pareto { scale: 1.0, exponent: 4.5 };

    let mut worst_moment = 0.0f64;
    let moment_cases: &[(&RadiusDistribution, f64)] = &[
        (&pareto45, 2.0),
        (&pareto15(), 1.0),
        (&pareto15(), 2.0),
        (&pareto15(), 3.0),
        (&uniform, 2.0),
        (&wide, 3.0),
        (&mixture, 2.0),
    ];
    for (dist, s) in moment_cases {
        let closed = match dist.moment(*s) {
            Moment::Finite(v) => v,
            Moment::Infinite => {
                worst_moment = f64::INFINITY;
                continue;
            }
        };
        let quad = moment_quadrature(dist, *s).expect("convergent case");
        worst_moment = worst_moment.max(rel_err(closed, quad));
    }

    let mut worst_tail = 0.0f64;
    let tail_cases: &[(&RadiusDistribution, f64)] = &[
        (&pareto15(), 2.0),
        (&pareto15(), 0.5),
        (&pareto45, 3.0),
        (&uniform, 1.0),
        (&mixture, 1.9),
    ];
    for (dist, alpha) in tail_cases {
        let closed = dist.tail_mass(2, *alpha).expect("finite");
        let quad = tail_mass_quadrature(dist, 2, *alpha).expect("convergent case");
        worst_tail = worst_tail.max(rel_err(closed, quad));
    }

    let mut worst_tilt = 0.0f64;
    let tilt_cases: &[(&RadiusDistribution, Window, u32, f64)] = &[
        (&pareto15(), Window::Ball { radius: 1.0 }, 2, 1.0),
        (&RadiusDistribution::Constant { value: 1.0 }, Window::Box { side: 10.0 }, 2, 0.2),
        (&uniform, Window::Box { side: 4.0 }, 3, 0.3),
    ];
    for (dist, window, d, lambda) in tilt_cases {
        let closed = tilt_integral(dist, *window, *d, *lambda).expect("finite");
        let quad = tilt_quadrature(dist, *window, *d, *lambda).expect("convergent case");
        worst_tilt = worst_tilt.max(rel_err(closed, quad));
    }

    const GATE: f64 = 1e-8;
    vec![
        CheckOutcome::new(
            "moments",
            "raw moments vs quadrature",
            worst_moment < GATE,
            format!("worst relative error {worst_moment:.2e} over {} cases", moment_cases.len()),
        ),
        CheckOutcome::new(
            "moments",
            "tail masses vs quadrature",
            worst_tail < GATE,
            format!("worst relative error {worst_tail:.2e} over {} cases", tail_cases.len()),
        ),
        CheckOutcome::new(
            "moments",
            "tilt integrals vs quadrature",
            worst_tilt < GATE,
            format!("worst relative error {worst_tilt:.2e} over {} cases", tilt_cases.len()),
        ),
    ]
}

/// Hit-or-miss estimate of `|W ⊕ B(0,r)|` with its standard error, written
/// against the window geometry directly.
pub fn dilation_volume_mc(
    window: Window,
    d: u32,
    r: f64,
    points: u64,
    seed: &SeedPath,
) -> (f64, f64) {
    let half_extent = match window {
        Window::Box { side } => side / 2.0 + r,
        Window::Ball { radius } => radius + r,
    };
    let bounding = (2.0 * half_extent).powi(d as i32);
    let inside = |p: &[f64]| -> bool {
        match window {
            Window::Ball { radius } => {
                p.iter().map(|x| x * x).sum::<f64>().sqrt() < radius + r
            }
            Window::Box { side } => {
                let mut sq = 0.0;
                for x in p {
                    let over = (x.abs() - side / 2.0).max(0.0);
                    sq += over * over;
                }
                sq.sqrt() < r
            }
        }
    };
    let mut rng = seed.rng();
    let mut point = vec![0.0; d as usize];
    let mut hits = 0u64;
    for _ in 0..points {
        for x in point.iter_mut() {
            *x = (rng.gen::<f64>() - 0.5) * 2.0 * half_extent;
        }
        if inside(&point) {
            hits += 1;
        }
    }
    let p = hits as f64 / points as f64;
    (bounding * p, bounding * (p * (1.0 - p) / points as f64).sqrt())
}

fn steiner_suite(seed: &SeedPath) -> CheckOutcome {
    let fixed: &[(Window, u32, f64)] = &[
        (Window::Box { side: 2.0 }, 2, 1.0),
        (Window::Box { side: 1.5 }, 3, 0.7),
        (Window::Ball { radius: 2.0 }, 2, 1.0),
    ];
    let mut cases: Vec<(Window, u32, f64)> = fixed.to_vec();
    let mut rng = seed.rng();
    for _ in 0..4 {
        let d = if rng.gen::<bool>() { 2 } else { 3 };
        let r = 0.2 + 1.5 * rng.gen::<f64>();
        let window = if rng.gen::<bool>() {
            Window::Box { side: 1.0 + 3.0 * rng.gen::<f64>() }
        } else {
            Window::Ball { radius: 0.5 + 2.0 * rng.gen::<f64>() }
        };
        cases.push((window, d, r));
    }
    let mut worst_sigma = 0.0f64;
    for (i, (window, d, r)) in cases.iter().enumerate() {
        let expect = steiner_volume(*window, *d, *r).expect("supported");
        let (mc, stderr) = dilation_volume_mc(*window, *d, *r, 2_000_000, &seed.child(i as u64));
        worst_sigma = worst_sigma.max((mc - expect).abs() / stderr);
    }
    CheckOutcome::new(
        "steiner",
        "dilated window volumes vs hit-or-miss",
        worst_sigma < 3.0,
        format!("worst deviation {worst_sigma:.2} standard errors over {} cases", cases.len()),
    )
}

fn volume_suite(seed: &SeedPath) -> CheckOutcome {
    let ball = |center: &[f64], radius: f64| Ball { center: center.to_vec(), radius };
    let lens = 2.0 * 0.5f64.acos() - 0.5 * 3.0f64.sqrt();
    let cases: Vec<(Vec<Ball>, f64)> = vec![
        (vec![ball(&[0.0, 0.0], 1.0)], PI),
        (vec![ball(&[0.0, 0.0], 1.0), ball(&[5.0, 0.0], 1.0)], 2.0 * PI),
        (vec![ball(&[0.0, 0.0], 1.0), ball(&[1.0, 0.0], 1.0)], 2.0 * PI - lens),
        (vec![ball(&[0.0, 0.0, 0.0], 1.0)], 4.0 * PI / 3.0),
    ];
    let mut worst_sigma = 0.0f64;
    for (i, (balls, expect)) in cases.iter().enumerate() {
        let est = union_volume(balls, 1_000_000, &seed.child(i as u64));
        worst_sigma = worst_sigma.max((est.mean - expect).abs() / est.stderr);
    }
    CheckOutcome::new(
        "volume",
        "union volumes vs closed forms",
        worst_sigma < 4.0,
        format!("worst deviation {worst_sigma:.2} standard errors over {} cases", cases.len()),
    )
}

/// Empirical covering-radius survival against the exact law
/// `P(A > a) = 1 − exp(−λ·v_d·2^{−d}·tail_mass(a))`.
pub fn covering_survival_cases(
    params: &ModelParams,
    thresholds: &[f64],
    replicates: u64,
    seed: &SeedPath,
) -> Result<Vec<(f64, f64, f64, f64)>, String> {
    let d = params.dimension();
    let window = Window::Ball { radius: 1.0 };
    let mut over = vec![0u64; thresholds.len()];
    for i in 0..replicates {
        let sample =
            sample_touching(params, window, seed.child(i)).map_err(|e| e.to_string())?;
        let a = covering_radius(sample.balls());
        for (k, t) in thresholds.iter().enumerate() {
            if a > *t {
                over[k] += 1;
            }
        }
    }
    let scale = params.intensity() * unit_ball_volume(d) / 2f64.powi(d as i32);
    thresholds
        .iter()
        .zip(&over)
        .map(|(t, o)| {
            let tail = params.radius().tail_mass(d, *t).map_err(|e| e.to_string())?;
            let expect = 1.0 - (-scale * tail).exp();
            let p = *o as f64 / replicates as f64;
            let stderr = (expect * (1.0 - expect) / replicates as f64).sqrt();
            Ok((*t, p, expect, stderr))
        })
        .collect()
}

fn covering_suite(seed: &SeedPath) -> Vec<CheckOutcome> {
    let params = ModelParams::new(2, 0.5, pareto15()).unwrap();
    let rows =
        covering_survival_cases(&params, &[1.0, 2.0, 4.0], 30_000, &seed.child(0)).unwrap();
    let mut worst_sigma = 0.0f64;
    for (_, p, expect, stderr) in &rows {
        worst_sigma = worst_sigma.max((p - expect).abs() / stderr);
    }
    let heavy = CheckOutcome::new(
        "covering",
        "covering-radius survival vs exact law",
        worst_sigma < 3.0,
        format!("worst deviation {worst_sigma:.2} standard errors at three thresholds"),
    );

    // Bounded radii: survival past the largest radius is exactly zero.
    let bounded =
        ModelParams::new(2, 0.5, RadiusDistribution::Constant { value: 1.0 }).unwrap();
    let rows = covering_survival_cases(&bounded, &[2.0], 2_000, &seed.child(1)).unwrap();
    let (_, p, expect, _) = rows[0];
    let atom = CheckOutcome::new(
        "covering",
        "bounded radii never exceed their maximum",
        p == 0.0 && expect == 0.0,
        format!("empirical survival {p}, exact law {expect}"),
    );
    vec![heavy, atom]
}

fn sampling_suite(seed: &SeedPath) -> Vec<CheckOutcome> {
    let mut out = Vec::new();

    // Touching-mode counts against hand-computed expected values.
    {
        let cases: [(ModelParams, Window, f64); 3] = [
            (
                ModelParams::new(2, 0.2, RadiusDistribution::Constant { value: 1.0 }).unwrap(),
                Window::Box { side: 10.0 },
                0.2 * (100.0 + 40.0 + PI),
            ),
            (
                ModelParams::new(2, 1.0, pareto15()).unwrap(),
                Window::Ball { radius: 1.0 },
                PI * (1.0 + 2.0 * 1.25 + 5.0 / 3.0),
            ),
            (
                ModelParams::new(3, 0.3, RadiusDistribution::Uniform { low: 0.5, high: 1.5 })
                    .unwrap(),
                Window::Box { side: 4.0 },
                0.3 * (160.0 + 13.0 * PI + 5.0 * PI / 3.0),
            ),
        ];
        let mut worst_sigma = 0.0f64;
        let reps = 20_000u64;
        for (k, (params, window, expect)) in cases.iter().enumerate() {
            let case_seed = seed.child(10 + k as u64);
            let total: u64 = (0..reps)
                .map(|i| sample_touching(params, *window, case_seed.child(i)).unwrap().len() as u64)
                .sum();
            let mean = total as f64 / reps as f64;
            let stderr = (expect / reps as f64).sqrt();
            worst_sigma = worst_sigma.max((mean - expect).abs() / stderr);
        }
        out.push(CheckOutcome::new(
            "sampling",
            "touching counts vs expected",
            worst_sigma < 4.0,
            format!("worst deviation {worst_sigma:.2} standard errors over 3 configurations"),
        ));
    }

    // Centers uniform over the window: chi-square on a 4x4 grid. The 0.999
    // quantile at 15 degrees of freedom is 37.697.
    {
        let params =
            ModelParams::new(2, 0.25, RadiusDistribution::Constant { value: 1.0 }).unwrap();
        let case_seed = seed.child(20);
        let mut cells = [0u64; 16];
        let mut total = 0u64;
        for i in 0..600 {
            let sample =
                sample_centers_in(&params, Window::Box { side: 8.0 }, case_seed.child(i)).unwrap();
            for b in sample.balls() {
                let cx = (((b.center[0] + 4.0) / 2.0) as usize).min(3);
                let cy = (((b.center[1] + 4.0) / 2.0) as usize).min(3);
                cells[4 * cx + cy] += 1;
                total += 1;
            }
        }
        let expected = total as f64 / 16.0;
        let chi2: f64 =
            cells.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        out.push(CheckOutcome::new(
            "sampling",
            "centers uniform in window",
            chi2 < 37.697,
            format!("chi-square {chi2:.1} on 15 degrees of freedom ({total} centers)"),
        ));
    }

    // Radii independent of centers in centers-in mode.
    {
        let params = ModelParams::new(2, 0.15, pareto15()).unwrap();
        let case_seed = seed.child(30);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..300 {
            let sample =
                sample_centers_in(&params, Window::Ball { radius: 6.0 }, case_seed.child(i))
                    .unwrap();
            for b in sample.balls() {
                xs.push(b.center_norm());
                ys.push(b.radius);
            }
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
        let corr = cov / (vx * vy).sqrt();
        let gate = 4.0 / n.sqrt();
        out.push(CheckOutcome::new(
            "sampling",
            "radii independent of centers",
            corr.abs() < gate,
            format!("|correlation| {:.4} under gate {:.4} ({} balls)", corr.abs(), gate, xs.len()),
        ));
    }

    // Restriction consistency: touching a small window directly vs touching
    // a large window filtered to balls reaching the small one. Two-sample
    // chi-square on the count distributions at level 1e-3.
    {
        let params =
            ModelParams::new(2, 0.2, RadiusDistribution::Constant { value: 1.0 }).unwrap();
        let case_seed = seed.child(40);
        let reps = 4_000u64;
        let direct: Vec<usize> = (0..reps)
            .map(|i| {
                sample_touching(&params, Window::Ball { radius: 3.0 }, case_seed.child(i))
                    .unwrap()
                    .len()
            })
            .collect();
        let restricted: Vec<usize> = (0..reps)
            .map(|i| {
                let s = sample_touching(
                    &params,
                    Window::Ball { radius: 5.0 },
                    case_seed.child(reps + i),
                )
                .unwrap();
                s.balls()
                    .iter()
                    .filter(|b| b.center_norm() < b.radius + 3.0)
                    .count()
            })
            .collect();
        let max_count = direct.iter().chain(&restricted).copied().max().unwrap_or(0);
        let mut histo = vec![[0u64; 2]; max_count + 1];
        for &c in &direct {
            histo[c][0] += 1;
        }
        for &c in &restricted {
            histo[c][1] += 1;
        }
        // Pool sparse high-count bins so every expected cell is at least 5.
        let mut bins: Vec<[u64; 2]> = Vec::new();
        let mut acc = [0u64; 2];
        for row in histo {
            acc[0] += row[0];
            acc[1] += row[1];
            if (acc[0] + acc[1]) as f64 / 2.0 >= 5.0 {
                bins.push(acc);
                acc = [0; 2];
            }
        }
        if acc[0] + acc[1] > 0 {
            if let Some(last) = bins.last_mut() {
                last[0] += acc[0];
                last[1] += acc[1];
            } else {
                bins.push(acc);
            }
        }
        let mut chi2 = 0.0;
        for bin in &bins {
            let pooled = (bin[0] + bin[1]) as f64 / 2.0;
            chi2 += (bin[0] as f64 - pooled).powi(2) / pooled;
            chi2 += (bin[1] as f64 - pooled).powi(2) / pooled;
        }
        let df = (bins.len().max(2) - 1) as u32;
        let gate = crate::experiments::chi_square_quantile(df, 0.999);
        out.push(CheckOutcome::new(
            "sampling",
            "window restriction consistency",
            chi2 < gate,
            format!("chi-square {chi2:.1} under gate {gate:.1} ({df} degrees of freedom)"),
        ));
    }

    // Thinning keeps each ball with the stated probability.
    {
        let params =
            ModelParams::new(2, 0.4, RadiusDistribution::Constant { value: 1.0 }).unwrap();
        let case_seed = seed.child(50);
        let mut kept = 0u64;
        let mut total = 0u64;
        for i in 0..2_500 {
            let base =
                sample_touching(&params, Window::Box { side: 10.0 }, case_seed.child(i)).unwrap();
            let thinned = thin(&base, 0.2).unwrap();
            kept += thinned.len() as u64;
            total += base.len() as u64;
        }
        let p = kept as f64 / total as f64;
        let stderr = (0.5 * 0.5 / total as f64).sqrt();
        out.push(CheckOutcome::new(
            "sampling",
            "thinning keep fraction",
            (p - 0.5).abs() < 4.0 * stderr,
            format!("kept fraction {p:.4} of {total} balls, expected 0.5"),
        ));
    }

    out
}
