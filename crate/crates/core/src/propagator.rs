//! Time evolution of the walker and sampling of the target probability
//! `p_w(t) = |⟨w|ψ(t)⟩|²` on a uniform grid.
//!
//! All exponentials are spectral: each constant Hamiltonian is diagonalised
//! once, `H = V diag(E) Vᵀ`, and every grid sample inside its interval is
//! evaluated from the state at the interval's start. Nothing is integrated
//! step by step, so per-sample error does not accumulate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::hamiltonian::{HamiltonianSchedule, PiecewiseHamiltonian};
use crate::{Error, Result};

/// Allowed drift of `‖ψ‖²` from one before propagation is declared failed.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    samples: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, samples: usize) -> Result<Self> {
        if samples < 2 {
            return Err(Error::Parameter(format!(
                "time grid needs at least 2 samples, got {samples}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Parameter(format!(
                "grid horizon must be positive, got {horizon}"
            )));
        }
        Ok(TimeGrid { horizon, samples })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn step(&self) -> f64 {
        self.horizon / (self.samples - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.samples {
            self.horizon
        } else {
            k as f64 * self.horizon / (self.samples - 1) as f64
        }
    }

    pub fn times(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.samples).map(|k| self.time(k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkerState {
    amplitudes: DVector<Complex64>,
}

impl WalkerState {
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm_squared();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Parameter(format!("state is not normalised: ‖ψ‖² = {norm}")));
        }
        Ok(WalkerState { amplitudes })
    }

    /// `|s⟩ = N^(−1/2) Σ_j |j⟩`.
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1, "uniform state needs at least one node");
        let a = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
        WalkerState {
            amplitudes: DVector::from_element(n, a),
        }
    }

    pub fn basis(n: usize, node: usize) -> Self {
        let mut amplitudes = DVector::zeros(n);
        amplitudes[node] = Complex64::new(1.0, 0.0);
        WalkerState { amplitudes }
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn probability(&self, node: usize) -> f64 {
        self.amplitudes[node].norm_sqr()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTrace {
    pub grid: TimeGrid,
    pub p: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl ProbabilityTrace {
    /// Trace without statistical error (a single trajectory or exact result).
    pub fn exact(grid: TimeGrid, p: Vec<f64>) -> Self {
        assert_eq!(p.len(), grid.samples());
        let stderr = vec![0.0; p.len()];
        ProbabilityTrace { grid, p, stderr }
    }

    pub fn times(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.grid.times()
    }
}

/// Eigendecomposition of a real symmetric Hamiltonian.
#[derive(Debug, Clone)]
pub struct Spectral {
    energies: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl Spectral {
    pub fn new(h: &DMatrix<f64>) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Numerical(format!("Hamiltonian is {}×{}", h.nrows(), h.ncols())));
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("Hamiltonian has non-finite entries".into()));
        }
        let n = h.nrows();
        SymmetricEigen::try_new(h.clone(), f64::EPSILON, 64 * n.max(8))
            .map(|e| Spectral {
                energies: e.eigenvalues,
                vectors: e.eigenvectors,
            })
            .ok_or_else(|| {
                let asym = (h - h.transpose()).amax();
                Error::Numerical(format!(
                    "eigendecomposition did not converge (n = {n}, ‖H‖_max = {:.3e}, asymmetry = {asym:.3e})",
                    h.amax()
                ))
            })
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Coordinates of `psi` in the eigenbasis, `Vᵀψ`.
    pub fn coefficients(&self, psi: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.energies.len();
        DVector::from_fn(n, |k, _| {
            self.vectors
                .column(k)
                .iter()
                .zip(psi.iter())
                .map(|(&v, &a)| a * v)
                .sum()
        })
    }

    /// `V · diag(e^(−iEτ)) · c`.
    pub fn state_at(&self, coefficients: &DVector<Complex64>, tau: f64) -> DVector<Complex64> {
        let phased: Vec<Complex64> = self
            .energies
            .iter()
            .zip(coefficients.iter())
            .map(|(&e, &c)| c * Complex64::from_polar(1.0, -e * tau))
            .collect();
        let n = self.vectors.nrows();
        DVector::from_fn(n, |row, _| {
            self.vectors.row(row).iter().zip(&phased).map(|(&v, &c)| c * v).sum()
        })
    }

    /// Amplitude of a single node after time `tau`, O(n).
    fn node_weights(&self, node: usize, coefficients: &DVector<Complex64>) -> Vec<Complex64> {
        self.vectors
            .row(node)
            .iter()
            .zip(coefficients.iter())
            .map(|(&v, &c)| c * v)
            .collect()
    }

    /// `e^(−iHτ)` as a dense complex matrix.
    pub fn propagator(&self, tau: f64) -> DMatrix<Complex64> {
        let n = self.energies.len();
        let phases: Vec<Complex64> = self
            .energies
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -e * tau))
            .collect();
        DMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| phases[k] * (self.vectors[(i, k)] * self.vectors[(j, k)]))
                .sum()
        })
    }
}

fn amplitude(weights: &[Complex64], energies: &DVector<f64>, tau: f64) -> Complex64 {
    weights
        .iter()
        .zip(energies.iter())
        .map(|(&w, &e)| w * Complex64::from_polar(1.0, -e * tau))
        .sum()
}

/// Which integrator advances a piecewise-constant Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    /// One exact exponential per noise segment.
    Exact,
    /// Switches take effect only at multiples of `step`.
    Stepped { step: f64 },
    /// Exact when the expected event count is small, stepped otherwise.
    Auto,
}

/// Expected event count above which [`Backend::Auto`] switches to stepping.
pub const AUTO_EVENT_LIMIT: f64 = 1e5;

impl Backend {
    /// Resolves `Auto` given the link count, switching rate and horizon.
    pub fn resolve(self, links: usize, rate: f64, horizon: f64) -> Backend {
        match self {
            Backend::Auto => {
                if links as f64 * rate * horizon <= AUTO_EVENT_LIMIT {
                    Backend::Exact
                } else {
                    Backend::Stepped {
                        step: (1.0 / (20.0 * rate)).min(horizon / 1e4),
                    }
                }
            }
            other => other,
        }
    }
}

/// Result of propagating one state through a schedule.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub p: Vec<f64>,
    /// Largest `|‖ψ‖² − 1|` observed at segment boundaries and samples.
    pub max_norm_error: f64,
    /// Full state at the requested grid index, if any.
    pub captured: Option<DVector<Complex64>>,
    pub warnings: Vec<String>,
}

/// Options for [`propagate`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PropagateOptions {
    /// Capture the full state at this grid index.
    pub capture: Option<usize>,
    /// Check the norm at every grid sample (O(n²) per sample).
    pub check_every_sample: bool,
    /// Diagonalise every segment, even short ones.
    pub spectral_only: bool,
}

/// Segments with `‖H‖_∞ · Δt` at most this use the power series.
const TAYLOR_MAX_NORM: f64 = 1.0;
/// ... and at most this many grid samples; beyond it one eigendecomposition
/// is cheaper than a series per sample.
const TAYLOR_MAX_SAMPLES: usize = 4;
const TAYLOR_MAX_TERMS: usize = 40;

/// Max absolute column sum; equals the row-sum norm for symmetric `h`.
fn column_norm(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    h.as_slice()
        .chunks_exact(n)
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Scratch buffers for the power series, reused across segments.
struct Series {
    term_re: Vec<f64>,
    term_im: Vec<f64>,
    next_re: Vec<f64>,
    next_im: Vec<f64>,
}

impl Series {
    fn new(n: usize) -> Self {
        Series {
            term_re: vec![0.0; n],
            term_im: vec![0.0; n],
            next_re: vec![0.0; n],
            next_im: vec![0.0; n],
        }
    }

    /// `out = e^(−iHτ)ψ` by its power series, summed until the next term drops
    /// below machine precision. Only used for `‖Hτ‖ ≤ 1`, where at most ~18
    /// terms are needed and the truncation error is below one ulp of `ψ`.
    fn apply(
        &mut self,
        h: &DMatrix<f64>,
        psi: &DVector<Complex64>,
        tau: f64,
        out: &mut DVector<Complex64>,
    ) -> Result<()> {
        let n = psi.len();
        let hs = h.as_slice();
        for (i, z) in psi.iter().enumerate() {
            self.term_re[i] = z.re;
            self.term_im[i] = z.im;
        }
        out.copy_from(psi);
        for k in 1..=TAYLOR_MAX_TERMS {
            // (−iτ/k)·H(a + ib) = (τ/k)·Hb − i(τ/k)·Ha
            let c = tau / k as f64;
            self.next_re.fill(0.0);
            self.next_im.fill(0.0);
            for ((col, &a), &b) in hs.chunks_exact(n).zip(&self.term_re).zip(&self.term_im) {
                for ((&hij, re), im) in col.iter().zip(&mut self.next_re).zip(&mut self.next_im) {
                    *re += hij * b;
                    *im -= hij * a;
                }
            }
            let mut largest = 0.0_f64;
            let terms = self.term_re.iter_mut().zip(&mut self.term_im);
            let next = self.next_re.iter().zip(&self.next_im);
            for (((tr, ti), (&nr, &ni)), z) in terms.zip(next).zip(out.iter_mut()) {
                *tr = nr * c;
                *ti = ni * c;
                *z += Complex64::new(*tr, *ti);
                largest = largest.max(tr.abs()).max(ti.abs());
            }
            if largest <= f64::EPSILON * 1e-2 {
                return Ok(());
            }
        }
        Err(Error::Numerical(format!("power series did not converge for τ = {tau}")))
    }
}

/// `p_w(t_k)` for a constant Hamiltonian, using one eigendecomposition.
pub fn evolve_static(h: &DMatrix<f64>, psi0: &WalkerState, target: usize, grid: &TimeGrid) -> Result<ProbabilityTrace> {
    let schedule = HamiltonianSchedule::constant(h.clone(), grid.horizon())?;
    evolve_schedule_exact(&schedule, psi0, target, grid)
}

pub fn evolve_schedule_exact<S: PiecewiseHamiltonian + ?Sized>(
    schedule: &S,
    psi0: &WalkerState,
    target: usize,
    grid: &TimeGrid,
) -> Result<ProbabilityTrace> {
    let run = propagate(
        schedule,
        psi0,
        target,
        grid,
        Backend::Exact,
        PropagateOptions::default(),
    )?;
    Ok(ProbabilityTrace::exact(*grid, run.p))
}

pub fn evolve_schedule_stepped<S: PiecewiseHamiltonian + ?Sized>(
    schedule: &S,
    psi0: &WalkerState,
    target: usize,
    grid: &TimeGrid,
    step: f64,
) -> Result<ProbabilityTrace> {
    let run = propagate(
        schedule,
        psi0,
        target,
        grid,
        Backend::Stepped { step },
        PropagateOptions::default(),
    )?;
    Ok(ProbabilityTrace::exact(*grid, run.p))
}

/// Effective intervals `(start, segment index)` seen by a backend.
///
/// For the stepped backend a breakpoint `b` becomes active at the first step
/// boundary `jδ ≥ b`; several breakpoints inside one step collapse, and
/// consecutive steps frozen on the same segment merge into one interval.
fn effective_intervals<S: PiecewiseHamiltonian + ?Sized>(
    schedule: &S,
    backend: Backend,
    horizon: f64,
) -> Result<Vec<(f64, usize)>> {
    let bps = schedule.breakpoints();
    match backend {
        Backend::Exact | Backend::Auto => Ok(bps[..bps.len() - 1]
            .iter()
            .enumerate()
            .take_while(|(_, &b)| b < horizon)
            .map(|(i, &b)| (b, i))
            .collect()),
        Backend::Stepped { step } => {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::Parameter(format!("step must be positive, got {step}")));
            }
            let mut intervals: Vec<(f64, usize)> = vec![(0.0, 0)];
            for (i, &b) in bps.iter().enumerate().take(bps.len() - 1).skip(1) {
                let mut j = (b / step).ceil();
                if (j - 1.0) * step >= b {
                    j -= 1.0;
                }
                if j * step < b {
                    j += 1.0;
                }
                let start = j * step;
                if start >= horizon {
                    break;
                }
                match intervals.last_mut() {
                    Some(last) if last.0 == start => last.1 = i,
                    _ => intervals.push((start, i)),
                }
            }
            Ok(intervals)
        }
    }
}

/// Advances `psi0` through `schedule`, sampling `p_w` on `grid`.
pub fn propagate<S: PiecewiseHamiltonian + ?Sized>(
    schedule: &S,
    psi0: &WalkerState,
    target: usize,
    grid: &TimeGrid,
    backend: Backend,
    options: PropagateOptions,
) -> Result<Propagation> {
    let n = schedule.dim();
    if psi0.dim() != n {
        return Err(Error::Parameter(format!(
            "state has dimension {}, Hamiltonian {n}",
            psi0.dim()
        )));
    }
    if target >= n {
        return Err(Error::Parameter(format!("target {target} outside dimension {n}")));
    }
    let horizon = grid.horizon();
    if horizon > schedule.horizon() * (1.0 + 1e-12) {
        return Err(Error::Parameter(format!(
            "grid horizon {horizon} exceeds schedule horizon {}",
            schedule.horizon()
        )));
    }
    if let Some(k) = options.capture {
        if k >= grid.samples() {
            return Err(Error::Parameter(format!("capture index {k} outside grid")));
        }
    }

    let backend = match backend {
        Backend::Auto => Backend::Exact,
        other => other,
    };
    let mut warnings = Vec::new();
    if let Backend::Stepped { step } = backend {
        let shortest = schedule
            .breakpoints()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if schedule.segment_count() > 1 && step > shortest {
            warnings.push(format!(
                "step {step} exceeds the shortest noise segment {shortest:.3e}; switches are delayed to step boundaries"
            ));
        }
    }

    let intervals = effective_intervals(schedule, backend, horizon)?;
    let mut psi = psi0.amplitudes.clone();
    let mut p = Vec::with_capacity(grid.samples());
    let mut captured = None;
    let mut max_norm_error = (psi.norm_squared() - 1.0).abs();
    let mut k = 0;
    let mut h = DMatrix::zeros(n, n);
    let mut series = Series::new(n);
    let mut scratch = psi.clone();

    for (idx, &(start, segment)) in intervals.iter().enumerate() {
        let end = intervals.get(idx + 1).map_or(horizon, |next| next.0);
        let last = idx + 1 == intervals.len();
        schedule.fill_segment(segment, &mut h);
        let first_sample = k;
        while k < grid.samples() && (grid.time(k) < end || last) {
            k += 1;
        }
        let sample_times = (first_sample..k).map(|j| (j, grid.time(j) - start));
        let short = (end - start) * column_norm(&h) <= TAYLOR_MAX_NORM;

        let mut record = |j: usize, state: Option<DVector<Complex64>>, pj: f64| {
            p.push(pj);
            if let Some(state) = state {
                max_norm_error = max_norm_error.max((state.norm_squared() - 1.0).abs());
                if options.capture == Some(j) {
                    captured = Some(state);
                }
            }
        };
        let wants_state = |j: usize| options.capture == Some(j) || options.check_every_sample;

        if short && !options.spectral_only && k - first_sample <= TAYLOR_MAX_SAMPLES {
            for (j, tau) in sample_times {
                series.apply(&h, &psi, tau, &mut scratch)?;
                let pj = scratch[target].norm_sqr();
                record(j, wants_state(j).then(|| scratch.clone()), pj);
            }
            if !last {
                series.apply(&h, &psi, end - start, &mut scratch)?;
                std::mem::swap(&mut psi, &mut scratch);
            }
        } else {
            let spectral = Spectral::new(&h)?;
            let coefficients = spectral.coefficients(&psi);
            let weights = spectral.node_weights(target, &coefficients);
            for (j, tau) in sample_times {
                let pj = amplitude(&weights, &spectral.energies, tau).norm_sqr();
                record(j, wants_state(j).then(|| spectral.state_at(&coefficients, tau)), pj);
            }
            if !last {
                psi = spectral.state_at(&coefficients, end - start);
            }
        }
        if !last {
            let drift = (psi.norm_squared() - 1.0).abs();
            max_norm_error = max_norm_error.max(drift);
            if drift > NORM_TOLERANCE {
                return Err(Error::Numerical(format!(
                    "norm drifted by {drift:.3e} at t = {end} (segment {segment})"
                )));
            }
        }
    }
    debug_assert_eq!(p.len(), grid.samples());

    Ok(Propagation {
        p,
        max_norm_error,
        captured,
        warnings,
    })
}
