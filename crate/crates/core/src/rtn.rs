//! Random telegraph noise on graph links.
//!
//! Each link carries an independent ±1 process that flips at the arrival
//! times of a Poisson process of rate μ. Trajectories are stored as an
//! initial sign plus the explicit, sorted switch times, so the value at any
//! instant is exact.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::graph::Graph;
use crate::seeding::substream;
use crate::{Error, Result};

/// Breakpoints closer than this are merged into one.
pub const BREAKPOINT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkTrajectory {
    initial_sign: i8,
    switch_times: Vec<f64>,
    horizon: f64,
}

impl LinkTrajectory {
    pub fn new(initial_sign: i8, switch_times: Vec<f64>, horizon: f64) -> Result<Self> {
        if initial_sign != 1 && initial_sign != -1 {
            return Err(Error::Parameter(format!("initial sign must be ±1, got {initial_sign}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
        }
        let increasing = switch_times.windows(2).all(|w| w[0] < w[1]);
        let in_range = switch_times.iter().all(|&t| t > 0.0 && t < horizon);
        if !increasing || !in_range {
            return Err(Error::Parameter(
                "switch times must be strictly increasing inside (0, horizon)".into(),
            ));
        }
        Ok(LinkTrajectory {
            initial_sign,
            switch_times,
            horizon,
        })
    }

    pub fn initial_sign(&self) -> i8 {
        self.initial_sign
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of switches at or before `t`.
    pub fn switches_until(&self, t: f64) -> usize {
        self.switch_times.partition_point(|&s| s <= t)
    }

    /// g(t); right-continuous, so at a switch instant the new value is returned.
    pub fn value_at(&self, t: f64) -> Result<i8> {
        if !(0.0..self.horizon).contains(&t) {
            return Err(Error::OutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.value_unchecked(t))
    }

    pub(crate) fn value_unchecked(&self, t: f64) -> i8 {
        if self.switches_until(t).is_multiple_of(2) {
            self.initial_sign
        } else {
            -self.initial_sign
        }
    }

    /// Draws one stationary trajectory: the initial sign is ±1 with equal
    /// probability, and switches follow a Poisson process of the given rate.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, rate: f64, horizon: f64) -> Self {
        let initial_sign = if rng.random_bool(0.5) { 1 } else { -1 };
        let mut switch_times = Vec::new();
        if rate > 0.0 {
            let waiting = Exp::new(rate).expect("rate is positive and finite");
            let mut t = 0.0;
            loop {
                t += waiting.sample(rng);
                if t >= horizon {
                    break;
                }
                // A zero waiting time would break strict monotonicity.
                if t > 0.0 && switch_times.last().is_none_or(|&last| t > last) {
                    switch_times.push(t);
                }
            }
        }
        LinkTrajectory {
            initial_sign,
            switch_times,
            horizon,
        }
    }
}

/// Independent telegraph trajectories, one per graph link.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    link_order: Vec<(usize, usize)>,
    trajectories: Vec<LinkTrajectory>,
    rate: f64,
    horizon: f64,
    seed: u64,
}

impl NoiseRealization {
    /// Samples one realization. Link `k` draws from substream `(seed, k)`.
    pub fn sample(graph: &Graph, rate: f64, horizon: f64, seed: u64) -> Result<Self> {
        validate_rate_horizon(rate, horizon)?;
        let trajectories = (0..graph.link_count())
            .map(|k| LinkTrajectory::sample(&mut substream(seed, k as u64), rate, horizon))
            .collect();
        Ok(NoiseRealization {
            link_order: graph.edges().to_vec(),
            trajectories,
            rate,
            horizon,
            seed,
        })
    }

    /// Assembles a realization from explicit trajectories, in link order.
    pub fn from_trajectories(graph: &Graph, trajectories: Vec<LinkTrajectory>) -> Result<Self> {
        if trajectories.len() != graph.link_count() {
            return Err(Error::Parameter(format!(
                "{} trajectories for {} links",
                trajectories.len(),
                graph.link_count()
            )));
        }
        let horizon = trajectories.first().map_or(f64::INFINITY, |t| t.horizon);
        if trajectories.iter().any(|t| t.horizon != horizon) {
            return Err(Error::Parameter("trajectories have different horizons".into()));
        }
        Ok(NoiseRealization {
            link_order: graph.edges().to_vec(),
            trajectories,
            rate: f64::NAN,
            horizon,
            seed: 0,
        })
    }

    /// Time-independent signs, one per link, valid on `[0, horizon)`.
    pub fn frozen(graph: &Graph, signs: &[i8], horizon: f64) -> Result<Self> {
        let trajectories = signs
            .iter()
            .map(|&s| LinkTrajectory::new(s, Vec::new(), horizon))
            .collect::<Result<Vec<_>>>()?;
        let mut r = Self::from_trajectories(graph, trajectories)?;
        r.rate = 0.0;
        r.horizon = horizon;
        Ok(r)
    }

    pub fn link_order(&self) -> &[(usize, usize)] {
        &self.link_order
    }

    pub fn trajectories(&self) -> &[LinkTrajectory] {
        &self.trajectories
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn signs_at(&self, t: f64) -> Result<Vec<i8>> {
        self.trajectories.iter().map(|tr| tr.value_at(t)).collect()
    }

    pub fn initial_signs(&self) -> Vec<i8> {
        self.trajectories.iter().map(|tr| tr.initial_sign).collect()
    }

    /// All switch events as `(time, link)`, sorted by time then link.
    pub fn events(&self) -> Vec<(f64, usize)> {
        let mut events: Vec<(f64, usize)> = self
            .trajectories
            .iter()
            .enumerate()
            .flat_map(|(k, tr)| tr.switch_times.iter().map(move |&t| (t, k)))
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        events
    }

    pub fn event_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.switch_times.len()).sum()
    }

    /// Sorted union of every link's switch times with `0` and the horizon
    /// as endpoints. Times within [`BREAKPOINT_TOLERANCE`] collapse to one.
    pub fn merged_breakpoints(&self) -> Vec<f64> {
        let mut times = vec![0.0];
        for (t, _) in self.events() {
            push_breakpoint(&mut times, t);
        }
        if self.horizon - times.last().copied().unwrap_or(0.0) > BREAKPOINT_TOLERANCE {
            times.push(self.horizon);
        } else {
            *times.last_mut().expect("nonempty") = self.horizon;
        }
        times
    }

    /// Debug dump: `link,initial_sign,switch_time`, one row per switch.
    /// Links that never switch get a single row with an empty time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("link,initial_sign,switch_time\n");
        for (k, tr) in self.trajectories.iter().enumerate() {
            if tr.switch_times.is_empty() {
                let _ = writeln!(out, "{k},{},", tr.initial_sign);
            }
            for t in &tr.switch_times {
                let _ = writeln!(out, "{k},{},{t}", tr.initial_sign);
            }
        }
        out
    }
}

pub(crate) fn push_breakpoint(times: &mut Vec<f64>, t: f64) {
    match times.last() {
        Some(&last) if t - last <= BREAKPOINT_TOLERANCE => {}
        _ => times.push(t),
    }
}

fn validate_rate_horizon(rate: f64, horizon: f64) -> Result<()> {
    if !rate.is_finite() || rate < 0.0 {
        return Err(Error::Parameter(format!(
            "switching rate must be finite and ≥ 0, got {rate}"
        )));
    }
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::Parameter(format!(
            "horizon must be finite and > 0, got {horizon}"
        )));
    }
    Ok(())
}

/// Samples `count` independent single-link trajectories, trajectory `i` from
/// substream `(seed, i)`. Used for statistical checks of the process itself.
pub fn sample_trajectories(rate: f64, horizon: f64, count: usize, seed: u64) -> Result<Vec<LinkTrajectory>> {
    validate_rate_horizon(rate, horizon)?;
    Ok((0..count)
        .map(|i| LinkTrajectory::sample(&mut substream(seed, i as u64), rate, horizon))
        .collect())
}

pub const MIN_AUTOCORRELATION_SAMPLE: usize = 100;

/// Sample mean of `g(t₀ + τ)·g(t₀)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Empirical autocorrelation `(1/M) Σ g(t₀+τ) g(t₀)` over a sample of
/// trajectories. By stationarity its expectation is `e^(−2μτ)`.
pub fn autocorrelation_estimate(sample: &[LinkTrajectory], lag: f64, probe_time: f64) -> Result<f64> {
    autocorrelation_with_error(sample, lag, probe_time).map(|e| e.mean)
}

pub fn autocorrelation_with_error(sample: &[LinkTrajectory], lag: f64, probe_time: f64) -> Result<Estimate> {
    if sample.len() < MIN_AUTOCORRELATION_SAMPLE {
        return Err(Error::Statistics {
            got: sample.len(),
            need: MIN_AUTOCORRELATION_SAMPLE,
        });
    }
    let products = sample
        .iter()
        .map(|tr| Ok(f64::from(tr.value_at(probe_time + lag)? * tr.value_at(probe_time)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_stderr(&products))
}

pub(crate) fn mean_and_stderr(xs: &[f64]) -> Estimate {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return Estimate { mean, stderr: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Estimate {
        mean,
        stderr: (var / m).sqrt(),
    }
}

/// Pearson goodness-of-fit of observed counts against Poisson(mean).
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Bins are grown from `k = 0` until each holds an expected count of at
/// least 5; the last bin absorbs the upper tail.
pub fn poisson_chi_square(counts: &[usize], mean: f64) -> Result<ChiSquareTest> {
    const MIN_EXPECTED: f64 = 5.0;
    if counts.is_empty() {
        return Err(Error::Statistics { got: 0, need: 1 });
    }
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::Parameter(format!("Poisson mean must be positive, got {mean}")));
    }
    let total = counts.len() as f64;
    let poisson = Poisson::new(mean).map_err(|e| Error::Parameter(e.to_string()))?;
    let max_count = counts.iter().copied().max().unwrap_or(0);

    let mut histogram = vec![0usize; max_count + 1];
    for &c in counts {
        histogram[c] += 1;
    }

    // (lowest k, expected, observed) per bin; the final bin is the open tail.
    let mut bins: Vec<(u64, f64, f64)> = Vec::new();
    let mut start = 0u64;
    let mut expected = 0.0;
    let mut observed = 0.0;
    let mut cumulative = 0.0;
    let mut k = 0u64;
    loop {
        let p = poisson.pmf(k);
        expected += p * total;
        cumulative += p;
        observed += histogram.get(k as usize).copied().unwrap_or(0) as f64;
        k += 1;
        let tail = (1.0 - cumulative).max(0.0) * total;
        if expected >= MIN_EXPECTED && tail >= MIN_EXPECTED {
            bins.push((start, expected, observed));
            start = k;
            expected = 0.0;
            observed = 0.0;
        } else if tail < MIN_EXPECTED && k as f64 > mean {
            break;
        }
    }
    let tail_observed: f64 = histogram.iter().skip(start as usize).sum::<usize>() as f64;
    let tail_expected = (total - bins.iter().map(|b| b.1).sum::<f64>()).max(0.0);
    bins.push((start, tail_expected, tail_observed));

    if bins.len() < 2 {
        return Err(Error::Statistics {
            got: counts.len(),
            need: 10,
        });
    }
    let statistic: f64 = bins.iter().map(|&(_, e, o)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        degrees_of_freedom: dof,
        p_value: 1.0 - dist.cdf(statistic),
        bins: bins.len(),
    })
}
