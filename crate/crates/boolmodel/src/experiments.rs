//! Replicated estimation campaigns: chain-length tail fits, crossing decay
//! curves with thinning-coupled intensity sweeps, moment stability sweeps
//! with a divergence diagnostic, intensity-threshold bracketing, and the
//! confined crossing curve.
//!
//! Every campaign is a pure function of (params, config, seed). Replicates
//! fan out over the rayon pool, but results are collected in replicate order
//! and reduced sequentially, so the output is identical for any thread
//! count.

use crate::model::{ModelError, ModelParams, Window};
use crate::observables::{
    component_report, confined_crossing_indicator, sphere_crossing, WindowPolicy,
};
use crate::graph::build_graph;
use crate::sampler::{sample_touching, thin, SampleError, SeedPath};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("bad experiment config: {0}")]
    Config(String),
    #[error("intensity bracket invalid: {0}")]
    Bracket(String),
}

fn ensure(cond: bool, msg: &str) -> Result<(), ExperimentError> {
    if cond {
        Ok(())
    } else {
        Err(ExperimentError::Config(msg.to_string()))
    }
}

fn strictly_increasing(grid: &[f64]) -> bool {
    grid.windows(2).all(|w| w[0] < w[1])
}

/// Run one closure per replicate in parallel, keeping replicate order.
fn replicate_map<T, F>(replicates: u64, seed: &SeedPath, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(SeedPath) -> Result<T, ExperimentError> + Sync,
{
    (0..replicates).into_par_iter().map(|i| f(seed.child(i))).collect()
}

fn proportion_stderr(hits: u64, n: u64) -> f64 {
    let p = hits as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Standard normal quantile (inverse CDF), by Acklam's rational
/// approximation; absolute error below 1.2e-9 across (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| -> f64 {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Chi-square quantile by the Wilson-Hilferty cube approximation; relative
/// error well under one percent for df ≥ 3, which is all the statistical
/// gates here need.
pub fn chi_square_quantile(df: u32, p: f64) -> f64 {
    assert!(df >= 1, "chi-square needs at least one degree of freedom");
    let z = normal_quantile(p);
    let k = df as f64;
    let t = 1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt();
    k * t * t * t
}

/// One-sided weighted least-squares trend test on proportions: slope of
/// `hits/totals` against `xs`, weighted by smoothed binomial variances.
/// `decreasing` holds when the slope's z-score falls below the one-sided
/// normal critical value at `level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendTest {
    pub slope: f64,
    pub z: f64,
    pub threshold: f64,
    pub decreasing: bool,
}

pub fn decreasing_trend(xs: &[f64], hits: &[u64], totals: &[u64], level: f64) -> TrendTest {
    assert!(xs.len() == hits.len() && xs.len() == totals.len());
    assert!(xs.len() >= 2, "trend needs at least two grid points");
    assert!(level > 0.0 && level < 0.5);
    let mut w = Vec::with_capacity(xs.len());
    let mut y = Vec::with_capacity(xs.len());
    for (&h, &n) in hits.iter().zip(totals) {
        // Smoothed variance keeps zero-hit bins from claiming certainty.
        let smoothed = (h as f64 + 1.0) / (n as f64 + 2.0);
        w.push(n as f64 / (smoothed * (1.0 - smoothed)));
        y.push(h as f64 / n as f64);
    }
    let w_total: f64 = w.iter().sum();
    let x_bar: f64 = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / w_total;
    let y_bar: f64 = y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / w_total;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - x_bar) * (x - x_bar)).sum();
    let sxy: f64 =
        xs.iter().zip(&y).zip(&w).map(|((x, y), w)| w * (x - x_bar) * (y - y_bar)).sum();
    let slope = sxy / sxx;
    // Var(y_i) = 1/w_i makes Var(slope) = 1/sxx under the null.
    let z = slope * sxx.sqrt();
    let threshold = -normal_quantile(1.0 - level);
    TrendTest { slope, z, threshold, decreasing: z < threshold }
}

fn experiment_policy() -> WindowPolicy {
    // Campaigns run hundreds of thousands of realizations; the per-report
    // volume budget is dialed down from the single-shot default and echoed
    // in the run manifest. The chain cap is raised instead: excluding
    // components that outgrow the exact search would bias exactly the long
    // chains the tail statistics care about, so the cap sits far above the
    // sizes subcritical runs produce.
    WindowPolicy { volume_samples: 4096, chain_cap: 128, ..WindowPolicy::default() }
}

/// Chain-tail campaign: empirical survival of the chain length and an
/// exponential fit on the log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainTailConfig {
    pub replicates: u64,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
    #[serde(default = "experiment_policy")]
    pub policy: WindowPolicy,
}

fn default_min_count() -> u64 {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalRow {
    pub n: u64,
    pub count: u64,
    pub estimate: f64,
    pub stderr: f64,
}

/// Survival table plus the exponential tail fit. The fit is present only
/// when at least three bins carried `min_count` exceedances; survival rows
/// are always returned. Censored replicates (inexact chain search or a
/// boundary-censored window) are excluded from the table and the fit, and
/// only their fraction is reported.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub survival: Vec<SurvivalRow>,
    pub eligible_replicates: u64,
    pub censored_fraction: f64,
    pub rate: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub fit_range: Option<(u64, u64)>,
}

pub fn chain_tail(
    params: &ModelParams,
    config: &ChainTailConfig,
    seed: &SeedPath,
) -> Result<TailFit, ExperimentError> {
    ensure(config.replicates >= 1, "replicates must be at least 1")?;
    ensure(config.min_count >= 1, "min_count must be at least 1")?;
    // The chain campaign never reads the volume field; one point keeps the
    // report cheap without touching its seed layout.
    let policy = WindowPolicy { volume_samples: 1, ..config.policy.clone() };
    let reports = replicate_map(config.replicates, seed, |s| {
        Ok(component_report(params, &s, &policy)?)
    })?;

    let mut lengths = Vec::with_capacity(reports.len());
    let mut censored = 0u64;
    for r in &reports {
        if r.chain_exact && !r.boundary_censored {
            lengths.push(r.chain_len);
        } else {
            censored += 1;
        }
    }
    let eligible = lengths.len() as u64;
    let censored_fraction = censored as f64 / config.replicates as f64;

    let max_len = lengths.iter().copied().max().unwrap_or(0);
    let mut at_least = vec![0u64; max_len as usize + 1];
    for &l in &lengths {
        at_least[l as usize] += 1;
    }
    for n in (0..max_len as usize).rev() {
        at_least[n] += at_least[n + 1];
    }
    let survival: Vec<SurvivalRow> = (1..=max_len)
        .map(|n| {
            let count = at_least[n as usize];
            SurvivalRow {
                n,
                count,
                estimate: count as f64 / eligible as f64,
                stderr: proportion_stderr(count, eligible),
            }
        })
        .collect();

    let fit_rows: Vec<&SurvivalRow> =
        survival.iter().filter(|r| r.count >= config.min_count).collect();
    let fit = if fit_rows.len() >= 3 {
        let xs: Vec<f64> = fit_rows.iter().map(|r| r.n as f64).collect();
        let ys: Vec<f64> = fit_rows.iter().map(|r| r.estimate.ln()).collect();
        let n = xs.len() as f64;
        let x_bar = xs.iter().sum::<f64>() / n;
        let y_bar = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - x_bar) * (x - x_bar)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_bar) * (y - y_bar)).sum();
        let slope = sxy / sxx;
        let intercept = y_bar - slope * x_bar;
        let ss_tot: f64 = ys.iter().map(|y| (y - y_bar) * (y - y_bar)).sum();
        let ss_res: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let fitted = intercept + slope * x;
                (y - fitted) * (y - fitted)
            })
            .sum();
        let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        Some((-slope, intercept, r_squared, (fit_rows[0].n, fit_rows[fit_rows.len() - 1].n)))
    } else {
        None
    };

    Ok(TailFit {
        survival,
        eligible_replicates: eligible,
        censored_fraction,
        rate: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
        r_squared: fit.map(|f| f.2),
        fit_range: fit.map(|f| f.3),
    })
}

/// Crossing decay campaign: for each radius in the grid, the probability
/// that a component joins the spheres at `r` and `2r`, simulated in
/// touching mode on a ball window of radius `2·r·kappa`. Paths detouring
/// outside that window are missed, so each realization is a lower bound on
/// the unrestricted event; `kappa` widens the window. When an intensity
/// grid is given, all intensities share one sample per replicate through
/// nested thinning, so estimates are monotone in intensity realization by
/// realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossingConfig {
    pub r_grid: Vec<f64>,
    // Skipped when absent so a config echo stays expressible in formats
    // without a null (TOML).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    pub replicates: u64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingRow {
    pub lambda: f64,
    pub r: f64,
    pub replicates: u64,
    pub hits: u64,
    pub estimate: f64,
    pub stderr: f64,
}

fn validate_crossing(params: &ModelParams, config: &CrossingConfig) -> Result<Vec<f64>, ExperimentError> {
    ensure(config.replicates >= 1, "replicates must be at least 1")?;
    ensure(!config.r_grid.is_empty(), "r_grid must be nonempty")?;
    ensure(config.r_grid.iter().all(|r| r.is_finite() && *r > 0.0), "r_grid must be positive")?;
    ensure(strictly_increasing(&config.r_grid), "r_grid must be strictly increasing")?;
    ensure(config.kappa.is_finite() && config.kappa >= 1.0, "kappa must be at least 1")?;
    let lambdas = match &config.lambda_grid {
        None => vec![params.intensity()],
        Some(grid) => {
            ensure(!grid.is_empty(), "lambda_grid must be nonempty")?;
            ensure(grid.iter().all(|l| l.is_finite() && *l > 0.0), "lambda_grid must be positive")?;
            ensure(strictly_increasing(grid), "lambda_grid must be strictly increasing")?;
            ensure(
                *grid.last().unwrap() <= params.intensity(),
                "lambda_grid must stay at or below the model intensity",
            )?;
            grid.clone()
        }
    };
    Ok(lambdas)
}

pub fn crossing_decay(
    params: &ModelParams,
    config: &CrossingConfig,
    seed: &SeedPath,
) -> Result<Vec<CrossingRow>, ExperimentError> {
    let lambdas = validate_crossing(params, config)?;
    // indicator[replicate][r][lambda]
    let indicators = replicate_map(config.replicates, seed, |rep_seed| {
        let mut per_r = Vec::with_capacity(config.r_grid.len());
        for (j, &r) in config.r_grid.iter().enumerate() {
            let window = Window::Ball { radius: 2.0 * r * config.kappa };
            let base = sample_touching(params, window, rep_seed.child(j as u64))?;
            let mut per_lambda = Vec::with_capacity(lambdas.len());
            for &lambda in &lambdas {
                // Thinning to the sample's own intensity keeps every ball;
                // grade the base sample directly instead of copying it.
                let crossed = if lambda == base.params().intensity() {
                    let graph = build_graph(base.balls());
                    sphere_crossing(base.balls(), &graph, r)
                } else {
                    let thinned = thin(&base, lambda)?;
                    let graph = build_graph(thinned.balls());
                    sphere_crossing(thinned.balls(), &graph, r)
                };
                per_lambda.push(crossed);
            }
            per_r.push(per_lambda);
        }
        Ok(per_r)
    })?;

    let mut rows = Vec::with_capacity(lambdas.len() * config.r_grid.len());
    for (li, &lambda) in lambdas.iter().enumerate() {
        for (ri, &r) in config.r_grid.iter().enumerate() {
            let hits = indicators.iter().filter(|rep| rep[ri][li]).count() as u64;
            rows.push(CrossingRow {
                lambda,
                r,
                replicates: config.replicates,
                hits,
                estimate: hits as f64 / config.replicates as f64,
                stderr: proportion_stderr(hits, config.replicates),
            });
        }
    }
    Ok(rows)
}

/// Moment stability sweep: running means of `|C|^{s/d}`, `#C^{s/d}`, and
/// `D^s` across independent seed groups, with a half-run divergence
/// diagnostic per group. The diagnostic is soft: no finite run proves a
/// moment infinite, it only flags means that are still growing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSweepConfig {
    pub s: f64,
    #[serde(default = "default_groups")]
    pub seed_groups: u32,
    pub replicates_per_group: u64,
    #[serde(default = "default_batches")]
    pub batches: u32,
    #[serde(default = "default_div_factor")]
    pub div_factor: f64,
    #[serde(default = "experiment_policy")]
    pub policy: WindowPolicy,
}

fn default_groups() -> u32 {
    10
}

fn default_batches() -> u32 {
    10
}

fn default_div_factor() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentBatchRow {
    pub group: u32,
    pub batch: u32,
    pub n: u64,
    pub volume_mean: f64,
    pub count_mean: f64,
    pub diameter_mean: f64,
}

/// Half-run comparison for one statistic in one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepStat {
    pub first_half: f64,
    pub second_half: f64,
    pub ratio: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupDiagnostics {
    pub group: u32,
    pub volume: SweepStat,
    pub ball_count: SweepStat,
    pub diameter: SweepStat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSweep {
    pub batch_rows: Vec<MomentBatchRow>,
    pub groups: Vec<GroupDiagnostics>,
    /// Divergence flag fired in a strict majority of groups, per statistic.
    pub volume_flagged: bool,
    pub count_flagged: bool,
    pub diameter_flagged: bool,
    pub censored_fraction: f64,
}

fn half_stat(values: &[f64], div_factor: f64) -> SweepStat {
    let half = values.len() / 2;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let first_half = mean(&values[..half]);
    let second_half = mean(&values[half..]);
    let ratio = if first_half == 0.0 {
        if second_half == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        second_half / first_half
    };
    SweepStat { first_half, second_half, ratio, diverged: second_half > div_factor * first_half }
}

pub fn moment_sweep(
    params: &ModelParams,
    config: &MomentSweepConfig,
    seed: &SeedPath,
) -> Result<MomentSweep, ExperimentError> {
    ensure(config.s.is_finite() && config.s > 0.0, "s must be positive")?;
    ensure(config.seed_groups >= 1, "need at least one seed group")?;
    ensure(config.replicates_per_group >= 2, "need at least two replicates per group")?;
    ensure(config.batches >= 1, "need at least one batch")?;
    ensure(
        config.replicates_per_group % config.batches as u64 == 0,
        "batches must divide replicates_per_group",
    )?;
    ensure(config.div_factor > 1.0, "div_factor must exceed 1")?;

    let power = config.s / params.dimension() as f64;
    let batch_size = config.replicates_per_group / config.batches as u64;
    let mut batch_rows = Vec::new();
    let mut groups = Vec::new();
    let mut censored = 0u64;
    for g in 0..config.seed_groups {
        let group_seed = seed.child(g as u64);
        let reports = replicate_map(config.replicates_per_group, &group_seed, |s| {
            Ok(component_report(params, &s, &config.policy)?)
        })?;
        censored += reports.iter().filter(|r| r.boundary_censored).count() as u64;
        let stats: Vec<[f64; 3]> = reports
            .iter()
            .map(|r| {
                [
                    r.volume.powf(power),
                    (r.ball_count as f64).powf(power),
                    r.diameter.powf(config.s),
                ]
            })
            .collect();

        let mut running = [0.0f64; 3];
        for b in 0..config.batches {
            let upto = ((b + 1) as u64 * batch_size) as usize;
            for item in &stats[(b as u64 * batch_size) as usize..upto] {
                for k in 0..3 {
                    running[k] += item[k];
                }
            }
            batch_rows.push(MomentBatchRow {
                group: g,
                batch: b,
                n: upto as u64,
                volume_mean: running[0] / upto as f64,
                count_mean: running[1] / upto as f64,
                diameter_mean: running[2] / upto as f64,
            });
        }

        let column = |k: usize| stats.iter().map(|s| s[k]).collect::<Vec<f64>>();
        groups.push(GroupDiagnostics {
            group: g,
            volume: half_stat(&column(0), config.div_factor),
            ball_count: half_stat(&column(1), config.div_factor),
            diameter: half_stat(&column(2), config.div_factor),
        });
    }

    let majority = |pick: fn(&GroupDiagnostics) -> bool| {
        2 * groups.iter().filter(|g| pick(g)).count() > config.seed_groups as usize
    };
    Ok(MomentSweep {
        volume_flagged: majority(|g| g.volume.diverged),
        count_flagged: majority(|g| g.ball_count.diverged),
        diameter_flagged: majority(|g| g.diameter.diverged),
        censored_fraction: censored as f64
            / (config.seed_groups as u64 * config.replicates_per_group) as f64,
        batch_rows,
        groups,
    })
}

/// Bisection bracket for the intensity where crossing probabilities stop
/// decaying. The per-probe decision is a heuristic with audited inputs: the
/// largest-radius estimate must fall below `eps_cross`, and either every
/// estimate does or the trend across the grid is significantly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketConfig {
    pub lambda_low: f64,
    pub lambda_high: f64,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    pub r_grid: Vec<f64>,
    pub replicates: u64,
    #[serde(default = "default_eps_cross")]
    pub eps_cross: f64,
    #[serde(default = "default_trend_level")]
    pub trend_level: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_iterations() -> u32 {
    6
}

fn default_eps_cross() -> f64 {
    0.05
}

fn default_trend_level() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeDecision {
    pub index: u32,
    pub lambda: f64,
    pub rows: Vec<CrossingRow>,
    pub tail_estimate: f64,
    pub tail_below: bool,
    pub all_below: bool,
    pub trend: TrendTest,
    pub decaying: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdBracket {
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub trace: Vec<ProbeDecision>,
}

pub fn bracket_threshold(
    params: &ModelParams,
    config: &BracketConfig,
    seed: &SeedPath,
) -> Result<ThresholdBracket, ExperimentError> {
    ensure(
        config.lambda_low.is_finite() && config.lambda_low > 0.0,
        "lambda_low must be positive",
    )?;
    ensure(config.lambda_low < config.lambda_high, "lambda bounds must be ordered")?;
    ensure(config.lambda_high.is_finite(), "lambda_high must be finite")?;
    ensure(config.iterations >= 1, "need at least one bisection")?;
    ensure(config.r_grid.len() >= 2, "r_grid needs at least two radii for the trend")?;
    ensure(config.eps_cross > 0.0 && config.eps_cross < 1.0, "eps_cross must be in (0,1)")?;
    ensure(
        config.trend_level > 0.0 && config.trend_level < 0.5,
        "trend_level must be in (0, 0.5)",
    )?;

    let crossing_config = CrossingConfig {
        r_grid: config.r_grid.clone(),
        lambda_grid: None,
        replicates: config.replicates,
        kappa: config.kappa,
    };
    let xs: Vec<f64> = config.r_grid.iter().map(|r| r.log2()).collect();
    let probe = |index: u32, lambda: f64| -> Result<ProbeDecision, ExperimentError> {
        let probed = params.with_intensity(lambda)?;
        let rows = crossing_decay(&probed, &crossing_config, &seed.child(index as u64))?;
        let hits: Vec<u64> = rows.iter().map(|r| r.hits).collect();
        let totals: Vec<u64> = rows.iter().map(|r| r.replicates).collect();
        let trend = decreasing_trend(&xs, &hits, &totals, config.trend_level);
        let tail_estimate = rows.last().unwrap().estimate;
        let tail_below = tail_estimate < config.eps_cross;
        let all_below = rows.iter().all(|r| r.estimate < config.eps_cross);
        // Deep in the decaying regime every estimate is near zero and no
        // trend is detectable; uniformly small estimates count as decay.
        let decaying = tail_below && (all_below || trend.decreasing);
        Ok(ProbeDecision { index, lambda, rows, tail_estimate, tail_below, all_below, trend, decaying })
    };

    let mut trace = Vec::new();
    let low_probe = probe(0, config.lambda_low)?;
    let low_ok = low_probe.decaying;
    let low_tail = low_probe.tail_estimate;
    trace.push(low_probe);
    if !low_ok {
        return Err(ExperimentError::Bracket(format!(
            "crossing estimates do not decay at lambda_low {} (largest-radius estimate {:.4})",
            config.lambda_low, low_tail
        )));
    }
    let high_probe = probe(1, config.lambda_high)?;
    let high_decays = high_probe.decaying;
    let high_tail = high_probe.tail_estimate;
    trace.push(high_probe);
    if high_decays {
        return Err(ExperimentError::Bracket(format!(
            "crossing estimates already decay at lambda_high {} (largest-radius estimate {:.4})",
            config.lambda_high, high_tail
        )));
    }

    let (mut low, mut high) = (config.lambda_low, config.lambda_high);
    for k in 0..config.iterations {
        let mid = 0.5 * (low + high);
        let decision = probe(2 + k, mid)?;
        if decision.decaying {
            low = mid;
        } else {
            high = mid;
        }
        trace.push(decision);
    }
    Ok(ThresholdBracket { lambda_low: low, lambda_high: high, trace })
}

/// Confined crossing curve: Monte Carlo of the confined indicator per scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfinedCrossingConfig {
    pub alphas: Vec<f64>,
    pub replicates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfinedRow {
    pub alpha: f64,
    pub replicates: u64,
    pub hits: u64,
    pub estimate: f64,
    pub stderr: f64,
}

pub fn confined_crossing_curve(
    params: &ModelParams,
    config: &ConfinedCrossingConfig,
    seed: &SeedPath,
) -> Result<Vec<ConfinedRow>, ExperimentError> {
    ensure(config.replicates >= 1, "replicates must be at least 1")?;
    ensure(!config.alphas.is_empty(), "alphas must be nonempty")?;
    ensure(config.alphas.iter().all(|a| a.is_finite() && *a > 0.0), "alphas must be positive")?;
    ensure(strictly_increasing(&config.alphas), "alphas must be strictly increasing")?;
    let mut rows = Vec::with_capacity(config.alphas.len());
    for (j, &alpha) in config.alphas.iter().enumerate() {
        let alpha_seed = seed.child(j as u64);
        let flags = replicate_map(config.replicates, &alpha_seed, |s| {
            Ok(confined_crossing_indicator(params, alpha, s)?)
        })?;
        let hits = flags.iter().filter(|f| **f).count() as u64;
        rows.push(ConfinedRow {
            alpha,
            replicates: config.replicates,
            hits,
            estimate: hits as f64 / config.replicates as f64,
            stderr: proportion_stderr(hits, config.replicates),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tilt_integral, RadiusDistribution};

    fn const_params(lambda: f64) -> ModelParams {
        ModelParams::new(2, lambda, RadiusDistribution::Constant { value: 1.0 }).unwrap()
    }

    #[test]
    fn normal_quantile_matches_reference_values() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-7);
        assert!((normal_quantile(0.99) - 2.3263478740408408).abs() < 1e-7);
        assert!((normal_quantile(0.999) - 3.090232306167813).abs() < 1e-7);
        assert!((normal_quantile(0.5)).abs() < 1e-9);
        assert!((normal_quantile(0.01) + normal_quantile(0.99)).abs() < 1e-7);
    }

    #[test]
    fn chi_square_quantile_matches_reference_values() {
        // 0.999 quantile at 15 df is 37.697, 0.99 at 10 df is 23.209.
        assert!((chi_square_quantile(15, 0.999) - 37.697).abs() / 37.697 < 0.01);
        assert!((chi_square_quantile(10, 0.99) - 23.209).abs() / 23.209 < 0.01);
    }

    #[test]
    fn trend_test_reads_obvious_slopes() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let totals = [2000u64; 4];
        let falling = decreasing_trend(&xs, &[400, 200, 80, 20], &totals, 0.01);
        assert!(falling.decreasing, "{falling:?}");
        let flat = decreasing_trend(&xs, &[200, 205, 195, 201], &totals, 0.01);
        assert!(!flat.decreasing, "{flat:?}");
        let rising = decreasing_trend(&xs, &[20, 80, 200, 400], &totals, 0.01);
        assert!(!rising.decreasing, "{rising:?}");
        let silent = decreasing_trend(&xs, &[0, 0, 0, 0], &totals, 0.01);
        assert!(!silent.decreasing, "all-zero grid carries no trend: {silent:?}");
    }

    #[test]
    fn chain_tail_survival_at_one_matches_touch_probability() {
        // P(chain length ≥ 1) = P(some ball meets the unit ball).
        let params = const_params(0.01);
        let config = ChainTailConfig {
            replicates: 20_000,
            min_count: 50,
            policy: experiment_policy(),
        };
        let fit = chain_tail(&params, &config, &SeedPath::root(40)).unwrap();
        let mu = tilt_integral(params.radius(), Window::Ball { radius: 1.0 }, 2, 0.01).unwrap();
        let expect = 1.0 - (-mu).exp();
        let row = &fit.survival[0];
        assert_eq!(row.n, 1);
        assert!(
            (row.estimate - expect).abs() < 3.0 * row.stderr.max(1e-4),
            "estimate {} vs {expect}",
            row.estimate
        );
        assert_eq!(fit.censored_fraction, 0.0);
    }

    #[test]
    fn chain_tail_survival_is_monotone_and_fits() {
        let params = const_params(0.15);
        let config = ChainTailConfig {
            replicates: 12_000,
            min_count: 50,
            policy: experiment_policy(),
        };
        let fit = chain_tail(&params, &config, &SeedPath::root(41)).unwrap();
        for pair in fit.survival.windows(2) {
            assert!(pair[1].estimate <= pair[0].estimate, "survival must fall");
        }
        let rate = fit.rate.expect("enough mass for a fit");
        assert!(rate > 0.0, "tail must decay, got rate {rate}");
        assert!(fit.r_squared.unwrap() > 0.9, "{:?}", fit.r_squared);
        assert!(fit.censored_fraction < 0.01, "{}", fit.censored_fraction);
        // Fit inputs come from bins above the count floor only.
        let (lo, hi) = fit.fit_range.unwrap();
        for row in &fit.survival {
            if row.n >= lo && row.n <= hi {
                assert!(row.count >= config.min_count);
            }
        }
    }

    #[test]
    fn chain_tail_refuses_thin_fits() {
        let params = const_params(0.01);
        let config =
            ChainTailConfig { replicates: 60, min_count: 50, policy: experiment_policy() };
        let fit = chain_tail(&params, &config, &SeedPath::root(42)).unwrap();
        assert!(fit.rate.is_none());
        assert!(fit.r_squared.is_none());
    }

    #[test]
    fn chain_tail_is_reproducible() {
        let params = const_params(0.1);
        let config =
            ChainTailConfig { replicates: 500, min_count: 50, policy: experiment_policy() };
        let a = chain_tail(&params, &config, &SeedPath::root(43)).unwrap();
        let b = chain_tail(&params, &config, &SeedPath::root(43)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chain_tail_is_thread_count_invariant() {
        let params = const_params(0.12);
        let config =
            ChainTailConfig { replicates: 800, min_count: 50, policy: experiment_policy() };
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let quad = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = single.install(|| chain_tail(&params, &config, &SeedPath::root(44))).unwrap();
        let b = quad.install(|| chain_tail(&params, &config, &SeedPath::root(44))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crossing_rows_are_coupled_monotone_in_intensity() {
        let params = const_params(0.3);
        let config = CrossingConfig {
            r_grid: vec![2.0, 4.0],
            lambda_grid: Some(vec![0.1, 0.2, 0.3]),
            replicates: 400,
            kappa: 2.0,
        };
        let rows = crossing_decay(&params, &config, &SeedPath::root(45)).unwrap();
        assert_eq!(rows.len(), 6);
        for ri in 0..2 {
            let by_lambda: Vec<&CrossingRow> =
                rows.iter().filter(|row| row.r == config.r_grid[ri]).collect();
            for pair in by_lambda.windows(2) {
                assert!(pair[0].lambda < pair[1].lambda);
                assert!(
                    pair[0].hits <= pair[1].hits,
                    "thinning coupling forces monotone hits, got {:?}",
                    rows
                );
            }
        }
    }

    #[test]
    fn crossing_estimates_decay_in_radius() {
        let params = const_params(0.15);
        let config = CrossingConfig {
            r_grid: vec![2.0, 4.0, 8.0],
            lambda_grid: None,
            replicates: 1500,
            kappa: 2.0,
        };
        let rows = crossing_decay(&params, &config, &SeedPath::root(46)).unwrap();
        let hits: Vec<u64> = rows.iter().map(|r| r.hits).collect();
        let totals: Vec<u64> = rows.iter().map(|r| r.replicates).collect();
        let xs: Vec<f64> = config.r_grid.iter().map(|r| r.log2()).collect();
        let trend = decreasing_trend(&xs, &hits, &totals, 0.01);
        assert!(trend.decreasing, "{rows:?} {trend:?}");
    }

    #[test]
    fn crossing_is_zero_when_window_is_effectively_empty() {
        let params = const_params(1e-9);
        let config = CrossingConfig {
            r_grid: vec![50.0],
            lambda_grid: None,
            replicates: 50,
            kappa: 2.0,
        };
        let rows = crossing_decay(&params, &config, &SeedPath::root(47)).unwrap();
        assert_eq!(rows[0].hits, 0);
        assert_eq!(rows[0].estimate, 0.0);
    }

    #[test]
    fn crossing_config_is_validated() {
        let params = const_params(0.2);
        let bad_grid = CrossingConfig {
            r_grid: vec![4.0, 2.0],
            lambda_grid: None,
            replicates: 10,
            kappa: 2.0,
        };
        assert!(crossing_decay(&params, &bad_grid, &SeedPath::root(1)).is_err());
        let bad_lambda = CrossingConfig {
            r_grid: vec![2.0],
            lambda_grid: Some(vec![0.1, 0.5]),
            replicates: 10,
            kappa: 2.0,
        };
        assert!(crossing_decay(&params, &bad_lambda, &SeedPath::root(1)).is_err());
    }

    #[test]
    fn moment_sweep_zero_stream_is_all_zero() {
        let params = const_params(1e-9);
        let config = MomentSweepConfig {
            s: 2.0,
            seed_groups: 2,
            replicates_per_group: 40,
            batches: 4,
            div_factor: 1.5,
            policy: WindowPolicy { volume_samples: 64, ..WindowPolicy::default() },
        };
        let sweep = moment_sweep(&params, &config, &SeedPath::root(48)).unwrap();
        assert_eq!(sweep.batch_rows.len(), 8);
        for row in &sweep.batch_rows {
            assert_eq!(row.volume_mean, 0.0);
            assert_eq!(row.count_mean, 0.0);
            assert_eq!(row.diameter_mean, 0.0);
        }
        for g in &sweep.groups {
            assert_eq!(g.diameter.ratio, 1.0);
            assert!(!g.diameter.diverged);
        }
        assert!(!sweep.volume_flagged && !sweep.count_flagged && !sweep.diameter_flagged);
    }

    #[test]
    fn moment_sweep_is_stable_for_bounded_radii() {
        let params = const_params(0.15);
        let config = MomentSweepConfig {
            s: 2.0,
            seed_groups: 3,
            replicates_per_group: 3_000,
            batches: 5,
            div_factor: 1.5,
            policy: WindowPolicy { volume_samples: 512, ..WindowPolicy::default() },
        };
        let sweep = moment_sweep(&params, &config, &SeedPath::root(49)).unwrap();
        assert!(!sweep.diameter_flagged, "{:?}", sweep.groups);
        assert!(sweep.censored_fraction < 0.01);
        for g in &sweep.groups {
            assert!(g.ball_count.ratio > 1.0 / 1.5 && g.ball_count.ratio < 1.5, "{g:?}");
        }
    }

    #[test]
    fn moment_sweep_validates_config() {
        let params = const_params(0.1);
        let bad = MomentSweepConfig {
            s: 2.0,
            seed_groups: 2,
            replicates_per_group: 41,
            batches: 4,
            div_factor: 1.5,
            policy: WindowPolicy::default(),
        };
        assert!(matches!(
            moment_sweep(&params, &bad, &SeedPath::root(1)),
            Err(ExperimentError::Config(_))
        ));
    }

    #[test]
    fn bracket_rejects_bad_initial_ends() {
        let params = const_params(1.0);
        let config = BracketConfig {
            lambda_low: 0.8, // far supercritical: decay test fails here
            lambda_high: 1.0,
            iterations: 2,
            r_grid: vec![2.0, 4.0],
            replicates: 120,
            eps_cross: 0.05,
            trend_level: 0.01,
            kappa: 2.0,
        };
        assert!(matches!(
            bracket_threshold(&params, &config, &SeedPath::root(50)),
            Err(ExperimentError::Bracket(_))
        ));
        let config = BracketConfig {
            lambda_low: 0.015,
            lambda_high: 0.03, // deep subcritical: still decaying at the top
            iterations: 2,
            r_grid: vec![2.0, 4.0],
            replicates: 200,
            eps_cross: 0.05,
            trend_level: 0.01,
            kappa: 2.0,
        };
        assert!(matches!(
            bracket_threshold(&params, &config, &SeedPath::root(51)),
            Err(ExperimentError::Bracket(_))
        ));
    }

    #[test]
    fn bracket_trace_folds_to_returned_bounds() {
        let params = const_params(1.0);
        let config = BracketConfig {
            lambda_low: 0.05,
            lambda_high: 1.0,
            iterations: 4,
            r_grid: vec![2.0, 4.0],
            replicates: 300,
            eps_cross: 0.05,
            trend_level: 0.01,
            kappa: 2.0,
        };
        let bracket = bracket_threshold(&params, &config, &SeedPath::root(52)).unwrap();
        assert_eq!(bracket.trace.len(), 2 + 4);
        let (mut low, mut high) = (config.lambda_low, config.lambda_high);
        for d in &bracket.trace[2..] {
            assert!((d.lambda - 0.5 * (low + high)).abs() < 1e-12);
            if d.decaying {
                low = d.lambda;
            } else {
                high = d.lambda;
            }
        }
        assert_eq!((low, high), (bracket.lambda_low, bracket.lambda_high));
        assert!(bracket.lambda_low < bracket.lambda_high);
        assert!(bracket.lambda_high - bracket.lambda_low <= (1.0 - 0.05) / 16.0 + 1e-12);
    }

    #[test]
    fn confined_curve_vanishes_at_small_scale() {
        let params = const_params(0.2);
        let config = ConfinedCrossingConfig { alphas: vec![0.001], replicates: 200 };
        let rows = confined_crossing_curve(&params, &config, &SeedPath::root(53)).unwrap();
        assert_eq!(rows[0].hits, 0);
    }

    #[test]
    fn confined_curve_is_reproducible() {
        let params = const_params(0.25);
        let config = ConfinedCrossingConfig { alphas: vec![1.0, 2.0], replicates: 300 };
        let a = confined_crossing_curve(&params, &config, &SeedPath::root(54)).unwrap();
        let b = confined_crossing_curve(&params, &config, &SeedPath::root(54)).unwrap();
        assert_eq!(a, b);
        assert!(a[0].estimate >= 0.0 && a[0].estimate <= 1.0);
    }
}
