//! Exact samplers for the ball process restricted to a window.
//!
//! Two modes exist. `CentersIn` keeps the balls whose centers fall in the
//! window: a homogeneous Poisson number of centers, uniform locations, iid
//! radii. `Touching` keeps every process ball that meets the window, which
//! is the right conditioning for cluster observables: a component anchored
//! near the origin is complete once none of its balls reaches the window
//! boundary. Touching mode draws the ball count from the tilt integral and
//! the radius from the size-biased law `∝ |W ⊕ B(0, r)| dν(r)`, sampled
//! exactly by decomposing the dilation polynomial into power tilts (each
//! power tilt of the base laws has a closed inverse CDF; a power-tilted
//! Pareto is again Pareto with a reduced exponent).
//!
//! All randomness flows through [`SeedPath`]: the count, each ball, and each
//! per-ball decision later (thinning) get their own derived stream, so every
//! sample is a pure function of its seed path regardless of thread layout.

use crate::model::{
    steiner_coefficients, tilt_integral, Moment, ModelError, ModelParams, Window,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("windows must share a shape to nest, got {from:?} then {to:?}")]
    ShapeMismatch { from: Window, to: Window },
    #[error("extension window must contain the current one, got {from} then {to}")]
    NotNested { from: f64, to: f64 },
    #[error("only touching-mode samples can be extended")]
    NotTouching,
    #[error("thinning target {target} must lie in (0, {base}]")]
    ThinTarget { target: f64, base: f64 },
    #[error("debug text: {0}")]
    Parse(String),
}

const COUNT_STREAM: u64 = 0;
const BALL_STREAM: u64 = 1;
const THIN_STREAM: u64 = 2;

/// Hierarchical seed: a master seed plus the chain of child indices taken to
/// reach one decision stream. Equal paths give identical streams; distinct
/// paths give streams that are independent for every practical purpose.
/// Deriving per-replicate and per-ball children keeps results byte-stable
/// under any thread scheduling.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPath(Vec<u64>);

impl SeedPath {
    pub fn root(master: u64) -> Self {
        SeedPath(vec![master])
    }

    pub fn child(&self, index: u64) -> Self {
        let mut segments = self.0.clone();
        segments.push(index);
        SeedPath(segments)
    }

    pub fn segments(&self) -> &[u64] {
        &self.0
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.fold())
    }

    /// Folded path value. `stream_rng(path.fold(), i)` equals
    /// `path.child(i).rng()` without materializing the child path, so hot
    /// loops pay the path walk once instead of per ball.
    pub(crate) fn fold(&self) -> u64 {
        let mut h = 0x9E37_79B9_7F4A_7C15u64;
        for &seg in &self.0 {
            h = mix64(h ^ mix64(seg));
        }
        h
    }
}

/// Stream of `child(index)` for a path already folded with [`SeedPath::fold`].
fn stream_rng(fold: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(fold ^ mix64(index)))
}

/// SplitMix64 finalizer; statistically strong avalanche for path folding.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// An open ball: center coordinates and radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    /// Strict open-ball intersection: tangent balls do not touch.
    pub fn touches(&self, other: &Ball) -> bool {
        let sum = self.radius + other.radius;
        dist_sq(&self.center, &other.center) < sum * sum
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        dist_sq(&self.center, point) < self.radius * self.radius
    }

    pub fn covers_origin(&self) -> bool {
        norm_sq(&self.center) < self.radius * self.radius
    }

    pub fn center_norm(&self) -> f64 {
        norm_sq(&self.center).sqrt()
    }
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Which balls of the process the sample keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Balls whose center lies in the window.
    CentersIn,
    /// Balls meeting the window (size-biased radii, dilated centers).
    Touching,
}

impl SamplingMode {
    fn as_str(self) -> &'static str {
        match self {
            SamplingMode::CentersIn => "centers_in",
            SamplingMode::Touching => "touching",
        }
    }
}

/// A realized ball set plus the window, mode, and seed lineage that produced
/// it. Per-ball decision streams (thinning) key off the stored seed path and
/// the ball index, and extensions only append, so decisions stay stable as a
/// sample grows.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSample {
    params: ModelParams,
    window: Window,
    mode: SamplingMode,
    seed: SeedPath,
    balls: Vec<Ball>,
}

impl BallSample {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn seed(&self) -> &SeedPath {
        &self.seed
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    /// Line-based debug dump: a header `d lambda mode window-kind window-param`
    /// followed by one `c_1 .. c_d r` line per ball. Floats use Rust's
    /// shortest round-trip formatting, so [`parse_debug_text`] restores them
    /// bit-for-bit.
    pub fn to_debug_text(&self) -> String {
        let mut out = String::new();
        let (kind, p) = match self.window {
            Window::Box { side } => ("box", side),
            Window::Ball { radius } => ("ball", radius),
        };
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            self.params.dimension(),
            self.params.intensity(),
            self.mode.as_str(),
            kind,
            p
        );
        for ball in &self.balls {
            for c in &ball.center {
                let _ = write!(out, "{c} ");
            }
            let _ = writeln!(out, "{}", ball.radius);
        }
        out
    }
}

/// A parsed debug dump. The text format carries no radius law or seed
/// lineage, so it parses to this raw record rather than a full sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DebugSample {
    pub dimension: u32,
    pub intensity: f64,
    pub mode: SamplingMode,
    pub window: Window,
    pub balls: Vec<Ball>,
}

pub fn parse_debug_text(text: &str) -> Result<DebugSample, SampleError> {
    let bad = |msg: String| SampleError::Parse(msg);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("missing header line".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(bad(format!("header needs 5 fields, got {}", fields.len())));
    }
    let dimension: u32 = fields[0].parse().map_err(|_| bad(format!("bad dimension {}", fields[0])))?;
    let intensity: f64 = fields[1].parse().map_err(|_| bad(format!("bad intensity {}", fields[1])))?;
    let mode = match fields[2] {
        "centers_in" => SamplingMode::CentersIn,
        "touching" => SamplingMode::Touching,
        other => return Err(bad(format!("unknown mode {other}"))),
    };
    let parameter: f64 = fields[4].parse().map_err(|_| bad(format!("bad window parameter {}", fields[4])))?;
    let window = match fields[3] {
        "box" => Window::Box { side: parameter },
        "ball" => Window::Ball { radius: parameter },
        other => return Err(bad(format!("unknown window kind {other}"))),
    };
    let mut balls = Vec::new();
    for line in lines {
        let nums: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let nums = nums.map_err(|_| bad(format!("bad ball line: {line}")))?;
        if nums.len() != dimension as usize + 1 {
            return Err(bad(format!(
                "ball line needs {} numbers, got {}",
                dimension + 1,
                nums.len()
            )));
        }
        let (radius, center) = nums.split_last().unwrap();
        balls.push(Ball { center: center.to_vec(), radius: *radius });
    }
    Ok(DebugSample { dimension, intensity, mode, window, balls })
}

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    draw as u64
}

fn sample_radius(dist: &crate::model::RadiusDistribution, rng: &mut ChaCha8Rng) -> f64 {
    use crate::model::RadiusDistribution::*;
    match dist {
        Constant { value } => *value,
        Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
        Pareto { scale, exponent } => {
            // u in (0, 1]; inverse survival function.
            let u = 1.0 - rng.gen::<f64>();
            scale * u.powf(-1.0 / exponent)
        }
        Mixture { components } => {
            let mut u = rng.gen::<f64>();
            for c in components {
                if u < c.weight {
                    return sample_radius(&c.law, rng);
                }
                u -= c.weight;
            }
            sample_radius(&components.last().expect("nonempty mixture").law, rng)
        }
    }
}

/// Sample from the law `∝ r^k dν(r)`. Closed inverse CDF for every variant:
/// a power-tilted Pareto(x, e) is Pareto(x, e - k).
fn sample_power_tilted(
    dist: &crate::model::RadiusDistribution,
    k: u32,
    rng: &mut ChaCha8Rng,
) -> f64 {
    use crate::model::RadiusDistribution::*;
    match dist {
        Constant { value } => *value,
        Uniform { low, high } => {
            let p = k as f64 + 1.0;
            let (lo, hi) = (low.powf(p), high.powf(p));
            (lo + (hi - lo) * rng.gen::<f64>()).powf(1.0 / p)
        }
        Pareto { scale, exponent } => {
            let u = 1.0 - rng.gen::<f64>();
            scale * u.powf(-1.0 / (exponent - k as f64))
        }
        Mixture { components } => {
            // Tilting reweights branches by their k-th moments.
            let weights: Vec<f64> = components
                .iter()
                .map(|c| c.weight * finite_moment(&c.law, k))
                .collect();
            let idx = pick_index(&weights, rng);
            sample_power_tilted(&components[idx].law, k, rng)
        }
    }
}

fn finite_moment(dist: &crate::model::RadiusDistribution, k: u32) -> f64 {
    match dist.moment(k as f64) {
        Moment::Finite(v) => v,
        Moment::Infinite => unreachable!("tilt weights checked finite before sampling"),
    }
}

fn pick_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn uniform_in_ball(rho: f64, d: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = norm_sq(&dir).sqrt();
        if norm < 1e-12 {
            continue;
        }
        let r = rho * rng.gen::<f64>().powf(1.0 / d as f64);
        return dir.into_iter().map(|x| x * r / norm).collect();
    }
}

fn uniform_in_window(window: Window, d: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match window {
        Window::Box { side } => (0..d).map(|_| (rng.gen::<f64>() - 0.5) * side).collect(),
        Window::Ball { radius } => uniform_in_ball(radius, d, rng),
    }
}

fn dist_to_box_sq(point: &[f64], side: f64) -> f64 {
    let half = side / 2.0;
    point
        .iter()
        .map(|x| {
            let d = x.abs() - half;
            if d > 0.0 {
                d * d
            } else {
                0.0
            }
        })
        .sum()
}

/// Does the open ball meet the window?
fn ball_touches_window(ball: &Ball, window: Window) -> bool {
    match window {
        Window::Ball { radius } => {
            let reach = ball.radius + radius;
            norm_sq(&ball.center) < reach * reach
        }
        Window::Box { side } => dist_to_box_sq(&ball.center, side) < ball.radius * ball.radius,
    }
}

/// Uniform point in the dilated window `W ⊕ B(0, r)`. Ball windows dilate to
/// balls; box windows use rejection from the bounding box (acceptance is at
/// least π/6 in d = 3, π/4 in d = 2).
fn uniform_in_dilation(window: Window, d: u32, r: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match window {
        Window::Ball { radius } => uniform_in_ball(radius + r, d, rng),
        Window::Box { side } => loop {
            let extent = side + 2.0 * r;
            let p: Vec<f64> = (0..d).map(|_| (rng.gen::<f64>() - 0.5) * extent).collect();
            if dist_to_box_sq(&p, side) < r * r {
                return p;
            }
        },
    }
}

/// Balls whose centers lie in `window`: Poisson(λ|W|) many, uniform centers,
/// iid radii.
pub fn sample_centers_in(
    params: &ModelParams,
    window: Window,
    seed: SeedPath,
) -> Result<BallSample, SampleError> {
    window.validate()?;
    let d = params.dimension();
    let mean = params.intensity() * window.volume(d);
    let n = poisson_count(&mut seed.child(COUNT_STREAM).rng(), mean);
    let ball_fold = seed.child(BALL_STREAM).fold();
    let balls = (0..n)
        .map(|i| {
            let mut rng = stream_rng(ball_fold, i);
            let radius = sample_radius(params.radius(), &mut rng);
            let center = uniform_in_window(window, d, &mut rng);
            Ball { center, radius }
        })
        .collect();
    Ok(BallSample { params: params.clone(), window, mode: SamplingMode::CentersIn, seed, balls })
}

struct TiltedLaw {
    degree_weights: Vec<f64>,
    mean_count: f64,
}

fn tilted_law(params: &ModelParams, window: Window) -> Result<TiltedLaw, ModelError> {
    let d = params.dimension();
    let coeffs = steiner_coefficients(window, d)?;
    let mut degree_weights = Vec::with_capacity(coeffs.len());
    for (k, g) in coeffs.iter().enumerate() {
        match params.radius().moment(k as f64) {
            Moment::Finite(m) => degree_weights.push(g * m),
            Moment::Infinite => return Err(ModelError::InfiniteMoment { power: k as f64 }),
        }
    }
    let total: f64 = degree_weights.iter().sum();
    Ok(TiltedLaw { degree_weights, mean_count: params.intensity() * total })
}

fn sample_touching_ball(
    params: &ModelParams,
    window: Window,
    law: &TiltedLaw,
    rng: &mut ChaCha8Rng,
) -> Ball {
    let k = pick_index(&law.degree_weights, rng) as u32;
    let radius = sample_power_tilted(params.radius(), k, rng);
    let center = uniform_in_dilation(window, params.dimension(), radius, rng);
    Ball { center, radius }
}

/// Every process ball meeting `window`. The count is Poisson with the tilt
/// integral as mean; radii follow the size-biased law, centers are uniform
/// in the dilation given the radius. This is the exact law of the restricted
/// process, not an approximation.
pub fn sample_touching(
    params: &ModelParams,
    window: Window,
    seed: SeedPath,
) -> Result<BallSample, SampleError> {
    window.validate()?;
    let law = tilted_law(params, window)?;
    debug_assert!(
        (law.mean_count - tilt_integral(params.radius(), window, params.dimension(), params.intensity()).unwrap())
            .abs()
            <= 1e-9 * law.mean_count.max(1.0)
    );
    let n = poisson_count(&mut seed.child(COUNT_STREAM).rng(), law.mean_count);
    let ball_fold = seed.child(BALL_STREAM).fold();
    let balls = (0..n)
        .map(|i| sample_touching_ball(params, window, &law, &mut stream_rng(ball_fold, i)))
        .collect();
    Ok(BallSample { params: params.clone(), window, mode: SamplingMode::Touching, seed, balls })
}

/// Grow a touching-mode sample to a larger window of the same shape without
/// disturbing the balls already drawn. The increment is the restriction of
/// the process to balls touching `larger` but not the old window: a Poisson
/// count with the difference of tilt integrals as mean, drawn by rejection
/// from the larger tilted law. Appending keeps old ball indices (and the
/// per-ball decision streams keyed on them) stable.
pub fn extend_touching(
    sample: &BallSample,
    larger: Window,
    seed: SeedPath,
) -> Result<BallSample, SampleError> {
    if sample.mode != SamplingMode::Touching {
        return Err(SampleError::NotTouching);
    }
    larger.validate()?;
    match (sample.window, larger) {
        (Window::Box { .. }, Window::Box { .. }) | (Window::Ball { .. }, Window::Ball { .. }) => {}
        (from, to) => return Err(SampleError::ShapeMismatch { from, to }),
    }
    if larger.parameter() < sample.window.parameter() {
        return Err(SampleError::NotNested {
            from: sample.window.parameter(),
            to: larger.parameter(),
        });
    }
    let params = &sample.params;
    let old_law = tilted_law(params, sample.window)?;
    let new_law = tilted_law(params, larger)?;
    let increment_mean = (new_law.mean_count - old_law.mean_count).max(0.0);
    let n = poisson_count(&mut seed.child(COUNT_STREAM).rng(), increment_mean);
    let ball_fold = seed.child(BALL_STREAM).fold();
    let mut balls = sample.balls.clone();
    balls.reserve(n as usize);
    for i in 0..n {
        let mut rng = stream_rng(ball_fold, i);
        // Conditioning the larger-window law on missing the old window is
        // exactly the law of the difference restriction.
        loop {
            let ball = sample_touching_ball(params, larger, &new_law, &mut rng);
            if !ball_touches_window(&ball, sample.window) {
                balls.push(ball);
                break;
            }
        }
    }
    Ok(BallSample {
        params: params.clone(),
        window: larger,
        mode: SamplingMode::Touching,
        seed: sample.seed.clone(),
        balls,
    })
}

/// Independent per-ball thinning down to a smaller intensity.
///
/// Ball `i` survives when its uniform threshold, derived from the sample's
/// seed lineage and `i`, falls below `target / λ`. Thresholds do not depend
/// on the target, so for thinnings of one base sample the kept sets nest:
/// thinning to λ₁ ≤ λ₂ keeps a subset of the λ₂ survivors. Thinning an
/// already-thinned sample is law-exact but re-indexes balls, so nesting is
/// only guaranteed relative to the common base.
pub fn thin(sample: &BallSample, target: f64) -> Result<BallSample, SampleError> {
    let base = sample.params.intensity();
    if !(target.is_finite() && target > 0.0 && target <= base) {
        return Err(SampleError::ThinTarget { target, base });
    }
    let keep_ratio = target / base;
    let thin_fold = sample.seed.child(THIN_STREAM).fold();
    let balls = sample
        .balls
        .iter()
        .enumerate()
        .filter(|(i, _)| stream_rng(thin_fold, *i as u64).gen::<f64>() < keep_ratio)
        .map(|(_, b)| b.clone())
        .collect();
    Ok(BallSample {
        params: sample.params.with_intensity(target)?,
        window: sample.window,
        mode: sample.mode,
        seed: sample.seed.clone(),
        balls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RadiusDistribution;

    fn const_params(intensity: f64) -> ModelParams {
        ModelParams::new(2, intensity, RadiusDistribution::Constant { value: 1.0 }).unwrap()
    }

    fn pareto_params(intensity: f64) -> ModelParams {
        ModelParams::new(2, intensity, RadiusDistribution::Pareto { scale: 1.0, exponent: 5.0 })
            .unwrap()
    }

    #[test]
    fn seed_paths_are_reproducible_and_distinct() {
        let a = SeedPath::root(7).child(3);
        let b = SeedPath::root(7).child(3);
        let c = SeedPath::root(7).child(4);
        assert_eq!(a.rng().gen::<u64>(), b.rng().gen::<u64>());
        assert_ne!(a.rng().gen::<u64>(), c.rng().gen::<u64>());
        // Path structure matters, not just the flattened segment values.
        let deep = SeedPath::root(7).child(3).child(0);
        assert_ne!(a.rng().gen::<u64>(), deep.rng().gen::<u64>());
    }

    #[test]
    fn samples_are_pure_functions_of_the_seed() {
        let params = pareto_params(0.4);
        let w = Window::Ball { radius: 5.0 };
        let a = sample_touching(&params, w, SeedPath::root(11)).unwrap();
        let b = sample_touching(&params, w, SeedPath::root(11)).unwrap();
        assert_eq!(a.balls(), b.balls());
        let c = sample_touching(&params, w, SeedPath::root(12)).unwrap();
        assert_ne!(a.balls(), c.balls());
    }

    #[test]
    fn centers_in_count_matches_mean() {
        let params = const_params(0.2);
        let w = Window::Box { side: 10.0 };
        let reps = 20_000;
        let seed = SeedPath::root(42);
        let total: u64 = (0..reps)
            .map(|i| sample_centers_in(&params, w, seed.child(i)).unwrap().len() as u64)
            .sum();
        let mean = total as f64 / reps as f64;
        let expect = 0.2 * 100.0;
        let stderr = (expect / reps as f64).sqrt();
        assert!((mean - expect).abs() < 5.0 * stderr, "mean {mean} vs {expect}");
    }

    #[test]
    fn touching_center_lands_inside_window_at_steiner_rate() {
        // Constant radius 1 on Box(10): P(center inside W) = 100 / (100 + 40 + π).
        let params = const_params(0.2);
        let w = Window::Box { side: 10.0 };
        let seed = SeedPath::root(9);
        let mut inside = 0u64;
        let mut total = 0u64;
        for i in 0..4_000 {
            let s = sample_touching(&params, w, seed.child(i)).unwrap();
            for b in s.balls() {
                total += 1;
                if b.center.iter().all(|x| x.abs() < 5.0) {
                    inside += 1;
                }
            }
        }
        let p = inside as f64 / total as f64;
        let expect = 100.0 / (100.0 + 40.0 + std::f64::consts::PI);
        let stderr = (expect * (1.0 - expect) / total as f64).sqrt();
        assert!((p - expect).abs() < 4.0 * stderr, "p {p} vs {expect} ({total} balls)");
    }

    #[test]
    fn tilted_radius_mean_matches_size_biased_law() {
        // Ball(1), d = 2, Pareto(1, 5): E_tilt(R) = (m1 + 2 m2 + m3) / (1 + 2 m1 + m2).
        let params = pareto_params(1.0);
        let w = Window::Ball { radius: 1.0 };
        let seed = SeedPath::root(13);
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut n = 0u64;
        for i in 0..6_000 {
            let s = sample_touching(&params, w, seed.child(i)).unwrap();
            for b in s.balls() {
                sum += b.radius;
                sq += b.radius * b.radius;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let expect = (1.25 + 2.0 * (5.0 / 3.0) + 2.5) / (1.0 + 2.0 * 1.25 + 5.0 / 3.0);
        let var = sq / n as f64 - mean * mean;
        let stderr = (var / n as f64).sqrt();
        assert!((mean - expect).abs() < 4.0 * stderr, "mean {mean} vs {expect}");
    }

    #[test]
    fn pareto_radius_tail_frequency() {
        let params = pareto_params(1.0);
        let w = Window::Box { side: 20.0 };
        let seed = SeedPath::root(5);
        let mut over = 0u64;
        let mut total = 0u64;
        for i in 0..1_000 {
            let s = sample_centers_in(&params, w, seed.child(i)).unwrap();
            for b in s.balls() {
                total += 1;
                if b.radius > 2.0 {
                    over += 1;
                }
            }
        }
        let p = over as f64 / total as f64;
        let expect = 2.0f64.powi(-5);
        let stderr = (expect * (1.0 - expect) / total as f64).sqrt();
        assert!((p - expect).abs() < 4.0 * stderr, "p {p} vs {expect}");
    }

    #[test]
    fn extension_appends_without_touching_existing_balls() {
        let params = pareto_params(0.3);
        let seed = SeedPath::root(21);
        let base = sample_touching(&params, Window::Ball { radius: 4.0 }, seed.clone()).unwrap();
        let grown =
            extend_touching(&base, Window::Ball { radius: 8.0 }, seed.child(77)).unwrap();
        assert_eq!(&grown.balls()[..base.len()], base.balls());
        assert_eq!(grown.window(), Window::Ball { radius: 8.0 });
        // Every appended ball touches the larger window but not the old one.
        for b in &grown.balls()[base.len()..] {
            assert!(ball_touches_window(b, Window::Ball { radius: 8.0 }));
            assert!(!ball_touches_window(b, Window::Ball { radius: 4.0 }));
        }
    }

    #[test]
    fn extension_rejects_bad_windows() {
        let params = const_params(0.2);
        let base = sample_touching(&params, Window::Ball { radius: 4.0 }, SeedPath::root(1)).unwrap();
        assert!(matches!(
            extend_touching(&base, Window::Ball { radius: 2.0 }, SeedPath::root(2)),
            Err(SampleError::NotNested { .. })
        ));
        assert!(matches!(
            extend_touching(&base, Window::Box { side: 20.0 }, SeedPath::root(2)),
            Err(SampleError::ShapeMismatch { .. })
        ));
        let centers = sample_centers_in(&params, Window::Ball { radius: 4.0 }, SeedPath::root(3)).unwrap();
        assert!(matches!(
            extend_touching(&centers, Window::Ball { radius: 8.0 }, SeedPath::root(4)),
            Err(SampleError::NotTouching)
        ));
    }

    #[test]
    fn extension_count_matches_difference_mean() {
        let params = const_params(0.15);
        let small = Window::Ball { radius: 3.0 };
        let large = Window::Ball { radius: 6.0 };
        let d = params.dimension();
        let expect = tilt_integral(params.radius(), large, d, 0.15).unwrap()
            - tilt_integral(params.radius(), small, d, 0.15).unwrap();
        let seed = SeedPath::root(33);
        let reps = 4_000;
        let mut total = 0u64;
        for i in 0..reps {
            let base = sample_touching(&params, small, seed.child(i)).unwrap();
            let grown = extend_touching(&base, large, seed.child(i).child(1)).unwrap();
            total += (grown.len() - base.len()) as u64;
        }
        let mean = total as f64 / reps as f64;
        let stderr = (expect / reps as f64).sqrt();
        assert!((mean - expect).abs() < 5.0 * stderr, "mean {mean} vs {expect}");
    }

    #[test]
    fn thinning_is_nested_and_law_exact() {
        let params = const_params(0.3);
        let seed = SeedPath::root(17);
        let mut kept = [0u64; 3];
        let targets = [0.1, 0.2, 0.3];
        let reps = 2_000;
        for i in 0..reps {
            let base = sample_touching(&params, Window::Ball { radius: 6.0 }, seed.child(i)).unwrap();
            let thinned: Vec<BallSample> =
                targets.iter().map(|t| thin(&base, *t).unwrap()).collect();
            // Nested: each survivor at a lower intensity survives at higher ones.
            for pair in thinned.windows(2) {
                for b in pair[0].balls() {
                    assert!(pair[1].balls().contains(b));
                }
            }
            for (k, t) in thinned.iter().enumerate() {
                kept[k] += t.len() as u64;
            }
        }
        let base_mean = tilt_integral(params.radius(), Window::Ball { radius: 6.0 }, 2, 0.3).unwrap();
        for (k, target) in targets.iter().enumerate() {
            let expect = base_mean * target / 0.3;
            let mean = kept[k] as f64 / reps as f64;
            let stderr = (expect / reps as f64).sqrt();
            assert!((mean - expect).abs() < 5.0 * stderr, "λ'={target}: {mean} vs {expect}");
        }
    }

    #[test]
    fn thinning_validates_target() {
        let params = const_params(0.3);
        let base = sample_touching(&params, Window::Ball { radius: 2.0 }, SeedPath::root(2)).unwrap();
        assert!(matches!(thin(&base, 0.4), Err(SampleError::ThinTarget { .. })));
        assert!(matches!(thin(&base, 0.0), Err(SampleError::ThinTarget { .. })));
        let same = thin(&base, 0.3).unwrap();
        assert_eq!(same.balls(), base.balls());
    }

    #[test]
    fn debug_text_round_trips_exactly() {
        let params = pareto_params(0.4);
        let sample = sample_touching(&params, Window::Ball { radius: 3.0 }, SeedPath::root(8)).unwrap();
        let text = sample.to_debug_text();
        let parsed = parse_debug_text(&text).unwrap();
        assert_eq!(parsed.dimension, 2);
        assert_eq!(parsed.intensity, 0.4);
        assert_eq!(parsed.mode, SamplingMode::Touching);
        assert_eq!(parsed.window, Window::Ball { radius: 3.0 });
        assert_eq!(parsed.balls, sample.balls());
    }

    #[test]
    fn debug_text_rejects_malformed_lines() {
        assert!(parse_debug_text("").is_err());
        assert!(parse_debug_text("2 0.5 touching ball").is_err());
        assert!(parse_debug_text("2 0.5 touching ball 3\n1.0 2.0\n").is_err());
        assert!(parse_debug_text("2 0.5 floating ball 3\n").is_err());
    }

    #[test]
    fn uniform_ball_points_have_right_radial_law() {
        let seed = SeedPath::root(3);
        let mut rng = seed.rng();
        let n = 40_000;
        let mean: f64 = (0..n)
            .map(|_| norm_sq(&uniform_in_ball(1.0, 2, &mut rng)).sqrt())
            .sum::<f64>()
            / n as f64;
        // E|X| = 2/3 for the uniform law on the unit disk.
        assert!((mean - 2.0 / 3.0).abs() < 0.01, "mean {mean}");
    }
}
