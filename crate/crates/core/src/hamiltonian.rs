//! Search Hamiltonians `H = γL − |w⟩⟨w|` and their noisy, piecewise-constant
//! counterparts `H(t) = γL_g(t) − |w⟩⟨w|`.
//!
//! Under noise each link `(j, k)` has hopping weight `1 + ν g_jk(t)`, with
//! `g_jk(t) = ±1` the link's telegraph value. Diagonal entries are the sums
//! of the weights of incident links, so every column of `L_g(t)` sums to
//! zero at every instant.

use std::borrow::Cow;
use std::cell::RefCell;

use nalgebra::DMatrix;

use crate::graph::{Family, Graph};
use crate::rtn::NoiseRealization;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParameters {
    gamma: f64,
    nu: f64,
    target: usize,
}

impl SearchParameters {
    pub fn new(gamma: f64, nu: f64, target: usize) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Parameter(format!("gamma must be finite and ≥ 0, got {gamma}")));
        }
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::Parameter(format!("noise strength must lie in [0, 1], got {nu}")));
        }
        Ok(SearchParameters { gamma, nu, target })
    }

    /// Parameters with the graph's noiseless optimal coupling and target.
    pub fn optimal(graph: &Graph, nu: f64) -> Result<Self> {
        Self::new(default_gamma(graph)?, nu, graph.target())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn with_nu(self, nu: f64) -> Result<Self> {
        Self::new(self.gamma, nu, self.target)
    }
}

/// Noiseless optimal coupling: `1/N` on the complete graph and on the star
/// with central target, `1` on the star with an external target.
pub fn default_gamma(graph: &Graph) -> Result<f64> {
    let n = graph.order() as f64;
    match graph.family() {
        Family::Complete | Family::Star { central_target: true } => Ok(1.0 / n),
        Family::Star { central_target: false } => Ok(1.0),
        Family::Generic => Err(Error::NoDefaultGamma),
    }
}

fn check_target(graph: &Graph, params: &SearchParameters) -> Result<()> {
    if params.target >= graph.order() {
        return Err(Error::Parameter(format!(
            "target {} outside graph of order {}",
            params.target,
            graph.order()
        )));
    }
    Ok(())
}

fn add_oracle(mut h: DMatrix<f64>, target: usize) -> DMatrix<f64> {
    h[(target, target)] -= 1.0;
    h
}

pub fn noiseless_hamiltonian(graph: &Graph, params: &SearchParameters) -> Result<DMatrix<f64>> {
    check_target(graph, params)?;
    Ok(add_oracle(graph.laplacian() * params.gamma, params.target))
}

/// Laplacian with link weights `1 + ν·signs[k]`.
pub fn noisy_laplacian_from_signs(graph: &Graph, signs: &[i8], nu: f64) -> DMatrix<f64> {
    assert_eq!(signs.len(), graph.link_count(), "one sign per link");
    graph.weighted_laplacian(|k| 1.0 + nu * f64::from(signs[k]))
}

/// `L_g(t)` for the realization's link values at time `t`.
pub fn noisy_laplacian(graph: &Graph, realization: &NoiseRealization, nu: f64, t: f64) -> Result<DMatrix<f64>> {
    check_realization(graph, realization)?;
    let signs = realization.signs_at(t)?;
    Ok(noisy_laplacian_from_signs(graph, &signs, nu))
}

pub fn noisy_hamiltonian_from_signs(graph: &Graph, params: &SearchParameters, signs: &[i8]) -> DMatrix<f64> {
    add_oracle(
        noisy_laplacian_from_signs(graph, signs, params.nu) * params.gamma,
        params.target,
    )
}

fn check_realization(graph: &Graph, realization: &NoiseRealization) -> Result<()> {
    if realization.link_order() != graph.edges() {
        return Err(Error::Parameter("realization was sampled for a different graph".into()));
    }
    Ok(())
}

/// A Hamiltonian that is constant on each interval `[b_i, b_{i+1})`.
pub trait PiecewiseHamiltonian {
    /// `[0, …, horizon]`, strictly increasing, at least two entries.
    fn breakpoints(&self) -> &[f64];

    fn segment_matrix(&self, index: usize) -> Cow<'_, DMatrix<f64>>;

    /// Writes segment `index` into `out` (`dim × dim`) without allocating.
    fn fill_segment(&self, index: usize, out: &mut DMatrix<f64>) {
        out.copy_from(&self.segment_matrix(index));
    }

    fn dim(&self) -> usize;

    fn segment_count(&self) -> usize {
        self.breakpoints().len() - 1
    }

    fn horizon(&self) -> f64 {
        *self.breakpoints().last().expect("at least two breakpoints")
    }

    /// Index of the segment containing `t` (the last one for `t = horizon`).
    fn segment_at(&self, t: f64) -> usize {
        let bps = self.breakpoints();
        bps.partition_point(|&b| b <= t).saturating_sub(1).min(bps.len() - 2)
    }
}

/// Eagerly built schedule: every segment matrix is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSchedule {
    breakpoints: Vec<f64>,
    segments: Vec<DMatrix<f64>>,
}

impl HamiltonianSchedule {
    pub fn new(breakpoints: Vec<f64>, segments: Vec<DMatrix<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 || segments.len() != breakpoints.len() - 1 {
            return Err(Error::Parameter(format!(
                "{} breakpoints for {} segments",
                breakpoints.len(),
                segments.len()
            )));
        }
        if breakpoints[0] != 0.0 || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("breakpoints must start at 0 and increase".into()));
        }
        let n = segments[0].nrows();
        if segments.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Parameter("segment matrices must share one square shape".into()));
        }
        Ok(HamiltonianSchedule { breakpoints, segments })
    }

    /// A single segment holding `h` on `[0, horizon]`.
    pub fn constant(h: DMatrix<f64>, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![h])
    }

    pub fn segments(&self) -> &[DMatrix<f64>] {
        &self.segments
    }
}

impl PiecewiseHamiltonian for HamiltonianSchedule {
    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn segment_matrix(&self, index: usize) -> Cow<'_, DMatrix<f64>> {
        Cow::Borrowed(&self.segments[index])
    }

    fn dim(&self) -> usize {
        self.segments[0].nrows()
    }
}

/// Builds every segment of `H(t)` for one noise realization.
///
/// Segment `i` uses the link values after all switches before `b_{i+1}`,
/// i.e. the values just after breakpoint `b_i`.
pub fn build_schedule(
    graph: &Graph,
    params: &SearchParameters,
    realization: &NoiseRealization,
) -> Result<HamiltonianSchedule> {
    check_target(graph, params)?;
    check_realization(graph, realization)?;
    let breakpoints = realization.merged_breakpoints();
    let events = realization.events();
    let mut signs = realization.initial_signs();
    let mut next_event = 0;
    let mut segments = Vec::with_capacity(breakpoints.len() - 1);
    for end in &breakpoints[1..] {
        while next_event < events.len() && events[next_event].0 < *end {
            signs[events[next_event].1] *= -1;
            next_event += 1;
        }
        segments.push(noisy_hamiltonian_from_signs(graph, params, &signs));
    }
    HamiltonianSchedule::new(breakpoints, segments)
}

/// Segment matrices produced on demand from the realization, so memory stays
/// flat however many switches occur.
///
/// Link signs are tracked with a cursor over the sorted switch events, so
/// visiting segments in increasing order costs one sign flip per event.
#[derive(Debug, Clone)]
pub struct LazySchedule<'a> {
    graph: &'a Graph,
    params: SearchParameters,
    realization: &'a NoiseRealization,
    breakpoints: Vec<f64>,
    events: Vec<(f64, usize)>,
    cursor: RefCell<SignCursor>,
}

#[derive(Debug, Clone)]
struct SignCursor {
    /// Segment the signs belong to, `None` before the first query.
    segment: Option<usize>,
    next_event: usize,
    signs: Vec<i8>,
}

impl<'a> LazySchedule<'a> {
    pub fn new(graph: &'a Graph, params: SearchParameters, realization: &'a NoiseRealization) -> Result<Self> {
        check_target(graph, &params)?;
        check_realization(graph, realization)?;
        Ok(LazySchedule {
            graph,
            params,
            realization,
            breakpoints: realization.merged_breakpoints(),
            events: realization.events(),
            cursor: RefCell::new(SignCursor {
                segment: None,
                next_event: 0,
                signs: realization.initial_signs(),
            }),
        })
    }

    /// Link values on segment `index`: every switch before `b_{index+1}`
    /// has been applied.
    pub fn signs_for_segment(&self, index: usize) -> Vec<i8> {
        self.with_signs(index, |signs| signs.to_vec())
    }

    fn with_signs<T>(&self, index: usize, f: impl FnOnce(&[i8]) -> T) -> T {
        let mut cursor = self.cursor.borrow_mut();
        if cursor.segment.is_some_and(|s| s > index) {
            cursor.next_event = 0;
            cursor.signs = self.realization.initial_signs();
        }
        let end = self.breakpoints[index + 1];
        while cursor.next_event < self.events.len() && self.events[cursor.next_event].0 < end {
            let link = self.events[cursor.next_event].1;
            cursor.signs[link] *= -1;
            cursor.next_event += 1;
        }
        cursor.segment = Some(index);
        f(&cursor.signs)
    }
}

impl PiecewiseHamiltonian for LazySchedule<'_> {
    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn segment_matrix(&self, index: usize) -> Cow<'_, DMatrix<f64>> {
        let n = self.graph.order();
        let mut out = DMatrix::zeros(n, n);
        self.fill_segment(index, &mut out);
        Cow::Owned(out)
    }

    fn fill_segment(&self, index: usize, out: &mut DMatrix<f64>) {
        let (gamma, nu) = (self.params.gamma, self.params.nu);
        self.with_signs(index, |signs| {
            self.graph
                .weighted_laplacian_into(|k| 1.0 + nu * f64::from(signs[k]), out);
        });
        // Same operation order as the eager builder, so both agree bit for bit.
        *out *= gamma;
        out[(self.params.target, self.params.target)] -= 1.0;
    }

    fn dim(&self) -> usize {
        self.graph.order()
    }
}
