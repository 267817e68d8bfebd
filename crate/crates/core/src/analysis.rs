//! Figures of merit extracted from probability traces, and parameter sweeps.

use std::f64::consts::PI;

use crate::ensemble::{default_trajectories, run_ensemble, EnsembleConfig, EnsembleTrace};
use crate::graph::{Graph, TargetKind};
use crate::hamiltonian::{default_gamma, SearchParameters};
use crate::propagator::{Backend, ProbabilityTrace, TimeGrid};
use crate::{Error, Result};

/// Peaks whose value lies within this of the global maximum count as
/// attaining it; the earliest one defines the optimal time.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

/// Smallest graph order used in scaling fits.
pub const MIN_FIT_ORDER: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    /// Refine each grid peak with the parabola through it and its neighbours.
    pub refine: bool,
    pub tie_tolerance: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            refine: true,
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchMetrics {
    pub p_succ: f64,
    pub t_max: f64,
    /// `t_max / p_succ`: expected total time when failed runs are repeated.
    pub avg_running_time: f64,
    pub stderr_p: f64,
    pub trajectories: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
struct Peak {
    index: usize,
    time: f64,
    value: f64,
}

/// Vertex of the parabola through three equally spaced samples, as an
/// offset in grid steps from the middle sample, and its value.
fn parabola_vertex(left: f64, mid: f64, right: f64) -> Option<(f64, f64)> {
    let curvature = left - 2.0 * mid + right;
    if curvature >= 0.0 {
        return None;
    }
    let offset = 0.5 * (left - right) / curvature;
    let value = mid - 0.25 * (left - right) * offset;
    Some((offset, value))
}

fn peaks(trace: &ProbabilityTrace, refine: bool) -> Vec<Peak> {
    let p = &trace.p;
    let step = trace.grid.step();
    let last = p.len() - 1;
    (0..p.len())
        .filter(|&k| (k == 0 || p[k] >= p[k - 1]) && (k == last || p[k] >= p[k + 1]))
        .map(|k| {
            let time = trace.grid.time(k);
            let refined = (refine && k > 0 && k < last)
                .then(|| parabola_vertex(p[k - 1], p[k], p[k + 1]))
                .flatten();
            match refined {
                Some((offset, value)) => Peak {
                    index: k,
                    time: time + offset * step,
                    value,
                },
                None => Peak {
                    index: k,
                    time,
                    value: p[k],
                },
            }
        })
        .collect()
}

pub fn extract_metrics(trace: &ProbabilityTrace) -> Result<SearchMetrics> {
    extract_metrics_with(trace, ExtractOptions::default())
}

/// Success probability, optimal time and average running time of a trace.
///
/// `p_succ` is the largest (refined) peak, clamped to `[0, 1]`; `t_max` is
/// the earliest peak within `tie_tolerance` of it.
pub fn extract_metrics_with(trace: &ProbabilityTrace, options: ExtractOptions) -> Result<SearchMetrics> {
    if trace.p.is_empty() {
        return Err(Error::Domain("empty trace".into()));
    }
    if trace.p.iter().all(|&p| p == 0.0) {
        return Err(Error::DegenerateTrace);
    }
    let peaks = peaks(trace, options.refine);
    let best = peaks.iter().map(|pk| pk.value).fold(f64::NEG_INFINITY, f64::max);
    let first = peaks
        .iter()
        .find(|pk| pk.value >= best - options.tie_tolerance)
        .expect("the maximum is among the peaks");
    let p_succ = best.clamp(0.0, 1.0);
    Ok(SearchMetrics {
        p_succ,
        t_max: first.time,
        avg_running_time: first.time / p_succ,
        stderr_p: trace.stderr[first.index],
        trajectories: 1,
        seed: 0,
    })
}

/// Metrics of an ensemble trace, echoing its trajectory count and seed.
pub fn ensemble_metrics(ens: &EnsembleTrace) -> Result<SearchMetrics> {
    let mut m = extract_metrics(&ens.trace)?;
    m.trajectories = ens.trajectories;
    m.seed = ens.seed;
    Ok(m)
}

/// Mean number of independent runs until the first success, `1/p_succ`.
pub fn expected_trials(p_succ: f64) -> Result<f64> {
    if p_succ == 0.0 {
        return Err(Error::Divergence);
    }
    if !(p_succ > 0.0 && p_succ <= 1.0) {
        return Err(Error::Domain(format!(
            "success probability must lie in (0, 1], got {p_succ}"
        )));
    }
    Ok(1.0 / p_succ)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Standard error of the exponent from the least-squares residuals.
    pub exponent_stderr: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub orders: Vec<f64>,
}

impl ScalingFit {
    pub fn predict(&self, n: f64) -> f64 {
        (self.intercept + self.exponent * n.ln()).exp()
    }
}

/// Least-squares line through `(ln N, ln T)`; the slope is the exponent.
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::Domain(format!("need at least 4 points, got {}", points.len())));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Domain("orders must be strictly increasing".into()));
    }
    if let Some(&(n, t)) = points.iter().find(|&&(n, t)| !(n > 0.0 && t > 0.0 && t.is_finite())) {
        return Err(Error::Domain(format!("cannot take logarithms of N = {n}, T = {t}")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let exponent = sxy / sxx;
    let intercept = y_mean - exponent * x_mean;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - exponent * x).powi(2))
        .sum();
    Ok(ScalingFit {
        exponent,
        intercept,
        exponent_stderr: (ssr / (m - 2.0) / sxx).sqrt(),
        residual: (ssr / m).sqrt(),
        orders: points.iter().map(|p| p.0).collect(),
    })
}

/// [`fit_scaling`] on the points with `N ≥ 8`.
pub fn fit_scaling_asymptotic(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let kept: Vec<_> = points.iter().copied().filter(|p| p.0 >= MIN_FIT_ORDER).collect();
    fit_scaling(&kept)
}

/// Graph family for sweeps, built per order `N`.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Complete,
    StarCentral,
    StarExternal,
    /// A fixed graph read from an edge list; its order cannot be swept.
    EdgeList(Graph),
}

impl GraphSpec {
    pub fn build(&self, n: usize) -> Result<Graph> {
        match self {
            GraphSpec::Complete => Graph::complete(n),
            GraphSpec::StarCentral => Graph::star(n, TargetKind::Central),
            GraphSpec::StarExternal => Graph::star(n, TargetKind::External),
            GraphSpec::EdgeList(g) if g.order() == n => Ok(g.clone()),
            GraphSpec::EdgeList(g) => Err(Error::Parameter(format!(
                "edge-list graph has order {}, requested {n}",
                g.order()
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GraphSpec::Complete => "complete",
            GraphSpec::StarCentral => "star-central",
            GraphSpec::StarExternal => "star-external",
            GraphSpec::EdgeList(_) => "edge-list",
        }
    }
}

/// Time grid over `horizon_factor · (π√N/2)`, i.e. in units of the
/// noiseless optimal time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub horizon_factor: f64,
    pub samples: usize,
}

impl Default for GridSpec {
    /// `2π√N` with 1024 samples.
    fn default() -> Self {
        GridSpec {
            horizon_factor: 4.0,
            samples: 1024,
        }
    }
}

impl GridSpec {
    pub fn grid(&self, n: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon_factor * noiseless_optimal_time(n), self.samples)
    }
}

/// `π√N/2`.
pub fn noiseless_optimal_time(n: usize) -> f64 {
    PI * (n as f64).sqrt() / 2.0
}

/// One parameter point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n: usize,
    pub rate: f64,
    pub nu: f64,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub graph: GraphSpec,
    pub orders: Vec<usize>,
    pub rates: Vec<f64>,
    pub strengths: Vec<f64>,
    pub gamma: Option<f64>,
    /// Fixed trajectory count; `None` uses the rate-dependent default.
    pub trajectories: Option<usize>,
    pub seed: u64,
    pub grid: GridSpec,
    pub backend: Backend,
}

impl SweepSpec {
    /// Points in sweep order: `N` outermost, then `μ`, then `ν`.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut points = Vec::new();
        for &n in &self.orders {
            for &rate in &self.rates {
                for &nu in &self.strengths {
                    points.push(SweepPoint { n, rate, nu });
                }
            }
        }
        points
    }

    pub fn ensemble_config(&self, point: SweepPoint) -> Result<EnsembleConfig> {
        let graph = self.graph.build(point.n)?;
        let gamma = match self.gamma {
            Some(g) => g,
            None => default_gamma(&graph)?,
        };
        let params = SearchParameters::new(gamma, point.nu, graph.target())?;
        let trajectories = self.trajectories.unwrap_or_else(|| default_trajectories(point.rate));
        let mut cfg = EnsembleConfig::new(
            graph,
            params,
            point.rate,
            trajectories,
            self.seed,
            self.grid.grid(point.n)?,
        );
        cfg.backend = self.backend;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub gamma: f64,
    pub metrics: SearchMetrics,
}

pub fn run_point(spec: &SweepSpec, point: SweepPoint) -> Result<SweepRow> {
    let cfg = spec.ensemble_config(point)?;
    let ens = run_ensemble(&cfg)?;
    Ok(SweepRow {
        point,
        gamma: cfg.params.gamma(),
        metrics: ensemble_metrics(&ens)?,
    })
}

/// Runs every point in order. Every point reuses the master seed, so
/// neighbouring points share noise realizations where the graph allows.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.points().into_iter().map(|point| run_point(spec, point)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::noiseless_trace;
    use proptest::prelude::*;

    fn trace_from(grid: TimeGrid, f: impl Fn(f64) -> f64) -> ProbabilityTrace {
        ProbabilityTrace::exact(grid, grid.times().map(f).collect())
    }

    #[test]
    fn noiseless_complete_ten() {
        let g = Graph::complete(10).unwrap();
        let params = SearchParameters::optimal(&g, 0.0).unwrap();
        let grid = GridSpec::default().grid(10).unwrap();
        let m = extract_metrics(&noiseless_trace(&g, &params, &grid).unwrap()).unwrap();
        let t_opt = noiseless_optimal_time(10);
        assert!((m.p_succ - 1.0).abs() < 1e-4);
        assert!((m.t_max - t_opt).abs() <= grid.step() / 2.0, "{m:?}");
        assert!((m.avg_running_time - t_opt).abs() < 1e-2);
    }

    #[test]
    fn running_time_arithmetic() {
        let grid = TimeGrid::new(4.0, 401).unwrap();
        let tr = trace_from(grid, |t| 0.5 - 0.1 * (t - 2.0).powi(2));
        let m = extract_metrics(&tr).unwrap();
        assert!((m.p_succ - 0.5).abs() < 1e-12);
        assert!((m.t_max - 2.0).abs() < 1e-9);
        assert!((m.avg_running_time - 4.0).abs() < 1e-8);
    }

    #[test]
    fn noiseless_star_external_hundred() {
        let g = Graph::star(100, TargetKind::External).unwrap();
        let params = SearchParameters::optimal(&g, 0.0).unwrap();
        let grid = GridSpec::default().grid(100).unwrap();
        let m = extract_metrics(&noiseless_trace(&g, &params, &grid).unwrap()).unwrap();
        assert!((m.p_succ - (1.0 - 1e-4)).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn degenerate_and_empty_traces() {
        let grid = TimeGrid::new(1.0, 3).unwrap();
        assert!(matches!(
            extract_metrics(&ProbabilityTrace::exact(grid, vec![0.0; 3])),
            Err(Error::DegenerateTrace)
        ));
    }

    #[test]
    fn first_maximum_wins_ties() {
        let grid = TimeGrid::new(10.0, 11).unwrap();
        let p = vec![0.1, 0.3, 0.8, 0.3, 0.1, 0.3, 0.8, 0.3, 0.1, 0.0, 0.0];
        let m = extract_metrics(&ProbabilityTrace::exact(grid, p)).unwrap();
        assert_eq!(m.t_max, 2.0);
    }

    #[test]
    fn later_higher_peak_wins() {
        let grid = TimeGrid::new(10.0, 11).unwrap();
        let p = vec![0.1, 0.3, 0.8, 0.3, 0.1, 0.3, 0.9, 0.3, 0.1, 0.0, 0.0];
        let opts = ExtractOptions {
            refine: false,
            ..Default::default()
        };
        let m = extract_metrics_with(&ProbabilityTrace::exact(grid, p), opts).unwrap();
        assert_eq!((m.t_max, m.p_succ), (6.0, 0.9));
    }

    #[test]
    fn endpoint_maximum() {
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let m = extract_metrics(&ProbabilityTrace::exact(grid, vec![0.1, 0.2, 0.3, 0.4, 0.5])).unwrap();
        assert_eq!((m.t_max, m.p_succ), (1.0, 0.5));
    }

    #[test]
    fn trials() {
        assert_eq!(expected_trials(1.0).unwrap(), 1.0);
        assert_eq!(expected_trials(0.5).unwrap(), 2.0);
        assert!(matches!(expected_trials(0.0), Err(Error::Divergence)));
        assert!(expected_trials(1.5).is_err());
    }

    #[test]
    fn exact_power_laws() {
        let sqrt: Vec<_> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&n: &f64| (n, PI / 2.0 * n.sqrt()))
            .collect();
        let fit = fit_scaling(&sqrt).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-12);
        assert!((fit.predict(128.0) - PI / 2.0 * 128f64.sqrt()).abs() < 1e-9);
        let linear: Vec<_> = [8.0, 16.0, 32.0, 64.0].iter().map(|&n| (n, 3.0 * n)).collect();
        assert!((fit_scaling(&linear).unwrap().exponent - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_domain_errors() {
        assert!(fit_scaling(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
        assert!(fit_scaling(&[(1.0, 1.0), (2.0, 0.0), (3.0, 3.0), (4.0, 4.0)]).is_err());
        assert!(fit_scaling(&[(1.0, 1.0), (3.0, 2.0), (2.0, 3.0), (4.0, 4.0)]).is_err());
    }

    #[test]
    fn asymptotic_fit_drops_small_orders() {
        let pts: Vec<_> = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&n: &f64| (n, n.sqrt()))
            .collect();
        assert_eq!(
            fit_scaling_asymptotic(&pts).unwrap().orders,
            vec![8.0, 16.0, 32.0, 64.0]
        );
    }

    #[test]
    fn sweep_order() {
        let spec = SweepSpec {
            graph: GraphSpec::Complete,
            orders: vec![4, 8],
            rates: vec![0.1],
            strengths: vec![0.2, 0.5],
            gamma: None,
            trajectories: Some(3),
            seed: 1,
            grid: GridSpec {
                horizon_factor: 2.0,
                samples: 16,
            },
            backend: Backend::Exact,
        };
        let pts = spec.points();
        assert_eq!(pts.len(), 4);
        assert_eq!((pts[1].n, pts[1].nu), (4, 0.5));
        assert_eq!(pts[2].n, 8);
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 4);
        assert!((rows[0].gamma - 0.25).abs() < 1e-15);
        assert_eq!(rows[3].metrics.trajectories, 3);
    }

    proptest! {
        #[test]
        fn refinement_recovers_parabola_peak(centre in 1.0f64..9.0, height in 0.2f64..1.0, width in 0.5f64..3.0) {
            let grid = TimeGrid::new(10.0, 201).unwrap();
            let tr = trace_from(grid, |t| height - ((t - centre) / width).powi(2) * 0.1);
            let m = extract_metrics(&tr).unwrap();
            prop_assert!((m.t_max - centre).abs() < 1e-3 * grid.step());
            prop_assert!((m.p_succ - height).abs() < 1e-12);
        }

        #[test]
        fn smooth_peak_within_half_step(centre in 1.0f64..9.0, width in 0.5f64..3.0) {
            let grid = TimeGrid::new(10.0, 201).unwrap();
            let tr = trace_from(grid, |t| (-((t - centre) / width).powi(2)).exp() * 0.9);
            let m = extract_metrics(&tr).unwrap();
            prop_assert!((m.t_max - centre).abs() < grid.step() / 2.0);
        }

        #[test]
        fn running_time_stable_under_subsampling(centre in 2.0f64..8.0, width in 1.0f64..3.0) {
            let fine = TimeGrid::new(10.0, 401).unwrap();
            let coarse = TimeGrid::new(10.0, 201).unwrap();
            let f = |t: f64| 0.8 * (-((t - centre) / width).powi(2)).exp();
            let a = extract_metrics(&trace_from(fine, f)).unwrap().avg_running_time;
            let b = extract_metrics(&trace_from(coarse, f)).unwrap().avg_running_time;
            prop_assert!(((a - b) / a).abs() < 1e-3);
        }
    }
}
