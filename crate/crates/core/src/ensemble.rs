//! Monte Carlo averaging of the noisy search over telegraph-noise
//! realizations.
//!
//! Only the target population is accumulated: `⟨w|ρ(t)|w⟩` is linear in
//! `ρ`, so averaging `|⟨w|ψ(t)⟩|²` over trajectories gives the same number
//! as averaging the full density matrix first.
//!
//! Trajectory `i` uses seed `derive_seed(master, i)`. Trajectories are
//! grouped into fixed-size chunks reduced in index order, and the chunk
//! statistics are merged with a fixed pairwise tree, so results are
//! bit-identical for any worker count.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::graph::Graph;
use crate::hamiltonian::{noiseless_hamiltonian, noisy_hamiltonian_from_signs, LazySchedule, SearchParameters};
use crate::propagator::{evolve_static, propagate, Backend, ProbabilityTrace, PropagateOptions, TimeGrid, WalkerState};
use crate::rtn::NoiseRealization;
use crate::seeding::derive_seed;
use crate::{Error, Result};

/// Trajectories reduced sequentially before tree merging.
const CHUNK: usize = 32;

/// Largest link count the exhaustive static-disorder average accepts.
pub const ORACLE_LINK_LIMIT: usize = 20;

/// Trajectory count used when none is given: 10 000 for `μ ≥ 1`, 20 000 below.
pub fn default_trajectories(rate: f64) -> usize {
    if rate >= 1.0 {
        10_000
    } else {
        20_000
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub graph: Graph,
    pub params: SearchParameters,
    pub rate: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub grid: TimeGrid,
    pub backend: Backend,
    /// Also average the full density matrix at this grid index.
    pub density_at: Option<usize>,
}

impl EnsembleConfig {
    pub fn new(
        graph: Graph,
        params: SearchParameters,
        rate: f64,
        trajectories: usize,
        seed: u64,
        grid: TimeGrid,
    ) -> Self {
        EnsembleConfig {
            graph,
            params,
            rate,
            trajectories,
            seed,
            grid,
            backend: Backend::Auto,
            density_at: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::Parameter("trajectory count must be at least 1".into()));
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(Error::Parameter(format!(
                "switching rate must be finite and ≥ 0, got {}",
                self.rate
            )));
        }
        if self.params.target() >= self.graph.order() {
            return Err(Error::Parameter("target outside graph".into()));
        }
        if let Some(k) = self.density_at {
            if k >= self.grid.samples() {
                return Err(Error::Parameter(format!("density index {k} outside grid")));
            }
        }
        Ok(())
    }

    pub fn trajectory_seed(&self, index: u64) -> u64 {
        derive_seed(self.seed, index)
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleTrace {
    pub trace: ProbabilityTrace,
    pub trajectories: usize,
    pub seed: u64,
    /// Backend actually used after resolving `Auto`.
    pub backend: Backend,
    pub density: Option<DMatrix<Complex64>>,
    pub warnings: Vec<String>,
}

impl EnsembleTrace {
    pub fn mean(&self) -> &[f64] {
        &self.trace.p
    }

    pub fn stderr(&self) -> &[f64] {
        &self.trace.stderr
    }
}

/// Running mean and sum of squared deviations per grid sample.
#[derive(Debug, Clone)]
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    density: Option<DMatrix<Complex64>>,
    warnings: Vec<String>,
}

impl Moments {
    fn empty(samples: usize) -> Self {
        Moments {
            count: 0,
            mean: vec![0.0; samples],
            m2: vec![0.0; samples],
            density: None,
            warnings: Vec::new(),
        }
    }

    fn push(&mut self, p: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(p) {
            let delta = x - *mean;
            *mean += delta / c;
            *m2 += delta * (x - *mean);
        }
    }

    fn merge(mut self, other: Moments) -> Moments {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * nb / n;
            self.m2[k] += other.m2[k] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        self.density = match (self.density, other.density) {
            (Some(a), Some(b)) => Some(a + b),
            (a, b) => a.or(b),
        };
        self.warnings.extend(other.warnings);
        self
    }
}

fn tree_merge(mut parts: Vec<Moments>) -> Moments {
    match parts.len() {
        0 => unreachable!("at least one chunk"),
        1 => parts.pop().expect("one part"),
        len => {
            let right = parts.split_off(len / 2);
            tree_merge(parts).merge(tree_merge(right))
        }
    }
}

struct TrajectoryResult {
    p: Vec<f64>,
    state: Option<nalgebra::DVector<Complex64>>,
    warnings: Vec<String>,
}

fn run_trajectory(cfg: &EnsembleConfig, backend: Backend, index: u64) -> Result<TrajectoryResult> {
    let seed = cfg.trajectory_seed(index);
    let realization = NoiseRealization::sample(&cfg.graph, cfg.rate, cfg.grid.horizon(), seed)?;
    let schedule = LazySchedule::new(&cfg.graph, cfg.params, &realization)?;
    let options = PropagateOptions {
        capture: cfg.density_at,
        ..Default::default()
    };
    let run = propagate(
        &schedule,
        &WalkerState::uniform(cfg.graph.order()),
        cfg.params.target(),
        &cfg.grid,
        backend,
        options,
    )?;
    Ok(TrajectoryResult {
        p: run.p,
        state: run.captured,
        warnings: run.warnings,
    })
}

/// Single trajectory `index` of the ensemble, for replaying failures or
/// inspecting one realization.
pub fn trajectory_trace(cfg: &EnsembleConfig, index: u64) -> Result<ProbabilityTrace> {
    cfg.validate()?;
    let backend = cfg
        .backend
        .resolve(cfg.graph.link_count(), cfg.rate, cfg.grid.horizon());
    let run = run_trajectory(cfg, backend, index)?;
    Ok(ProbabilityTrace::exact(cfg.grid, run.p))
}

/// Noiseless reference trace for the configuration's graph and coupling.
pub fn noiseless_trace(graph: &Graph, params: &SearchParameters, grid: &TimeGrid) -> Result<ProbabilityTrace> {
    let h = noiseless_hamiltonian(graph, params)?;
    evolve_static(&h, &WalkerState::uniform(graph.order()), params.target(), grid)
}

/// Ensemble average of `p_w(t)` over `cfg.trajectories` noise realizations.
///
/// With `ν = 0` the noise drops out of the Hamiltonian and the noiseless
/// trace is returned directly, with zero error.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleTrace> {
    cfg.validate()?;
    let backend = cfg
        .backend
        .resolve(cfg.graph.link_count(), cfg.rate, cfg.grid.horizon());
    let samples = cfg.grid.samples();

    if cfg.params.nu() == 0.0 {
        let trace = noiseless_trace(&cfg.graph, &cfg.params, &cfg.grid)?;
        let density = match cfg.density_at {
            Some(k) => {
                let h = noiseless_hamiltonian(&cfg.graph, &cfg.params)?;
                let u = crate::propagator::Spectral::new(&h)?.propagator(cfg.grid.time(k));
                let psi = u * WalkerState::uniform(cfg.graph.order()).amplitudes();
                Some(&psi * psi.adjoint())
            }
            None => None,
        };
        return Ok(EnsembleTrace {
            trace,
            trajectories: cfg.trajectories,
            seed: cfg.seed,
            backend,
            density,
            warnings: Vec::new(),
        });
    }

    let chunks = cfg.trajectories.div_ceil(CHUNK);
    let parts: Vec<Result<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut moments = Moments::empty(samples);
            let first = chunk * CHUNK;
            let last = (first + CHUNK).min(cfg.trajectories);
            for index in first..last {
                let index = index as u64;
                let run = run_trajectory(cfg, backend, index).map_err(|e| Error::Trajectory {
                    index,
                    seed: cfg.trajectory_seed(index),
                    source: Box::new(e),
                })?;
                moments.push(&run.p);
                if let Some(psi) = run.state {
                    let rho = &psi * psi.adjoint();
                    moments.density = Some(match moments.density.take() {
                        Some(acc) => acc + rho,
                        None => rho,
                    });
                }
                if moments.warnings.is_empty() {
                    moments.warnings = run.warnings;
                }
            }
            Ok(moments)
        })
        .collect();
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let total = tree_merge(parts);

    let m = total.count as f64;
    let stderr = if total.count > 1 {
        total
            .m2
            .iter()
            .map(|&m2| (m2.max(0.0) / (m - 1.0)).sqrt() / m.sqrt())
            .collect()
    } else {
        vec![0.0; samples]
    };
    let mut warnings = total.warnings;
    warnings.dedup();
    Ok(EnsembleTrace {
        trace: ProbabilityTrace {
            grid: cfg.grid,
            p: total.mean,
            stderr,
        },
        trajectories: total.count,
        seed: cfg.seed,
        backend,
        density: total.density.map(|d| d / Complex64::new(m, 0.0)),
        warnings,
    })
}

/// Exact `μ → 0` limit: the average of static-disorder traces over all
/// `2^l` link sign patterns, each weighted `2^(−l)`.
pub fn semi_static_oracle(graph: &Graph, params: &SearchParameters, grid: &TimeGrid) -> Result<ProbabilityTrace> {
    let links = graph.link_count();
    if links > ORACLE_LINK_LIMIT {
        return Err(Error::TooManyLinks {
            links,
            limit: ORACLE_LINK_LIMIT,
        });
    }
    if params.nu() == 0.0 {
        return noiseless_trace(graph, params, grid);
    }
    let configurations = 1usize << links;
    let psi0 = WalkerState::uniform(graph.order());
    let sums: Vec<Result<Vec<f64>>> = (0..configurations.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut acc = vec![0.0; grid.samples()];
            for c in chunk * CHUNK..((chunk + 1) * CHUNK).min(configurations) {
                let signs: Vec<i8> = (0..links).map(|k| if c >> k & 1 == 1 { 1 } else { -1 }).collect();
                let h = noisy_hamiltonian_from_signs(graph, params, &signs);
                let trace = evolve_static(&h, &psi0, params.target(), grid)?;
                for (a, p) in acc.iter_mut().zip(trace.p) {
                    *a += p;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![0.0; grid.samples()];
    for part in sums {
        for (t, p) in total.iter_mut().zip(part?) {
            *t += p;
        }
    }
    let weight = 1.0 / configurations as f64;
    Ok(ProbabilityTrace::exact(
        *grid,
        total.into_iter().map(|s| s * weight).collect(),
    ))
}
