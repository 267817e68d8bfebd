//! Star graph with an external target at `γ = 1`, reduced to its
//! three-dimensional Krylov subspace.
//!
//! With hub `|c⟩` (node 0), target leaf `|w⟩` (node 1) and the uniform
//! superposition of the remaining leaves `|s'⟩`, the search Hamiltonian
//! `H = L − |w⟩⟨w|` maps `span{|c⟩, |w⟩, |s'⟩}` into itself and reads
//!
//! ```text
//!         ⎡ N−1    −1   −√(N−2) ⎤
//! H_red = ⎢ −1      0      0    ⎥
//!         ⎣ −√(N−2) 0      1    ⎦
//! ```
//!
//! Dividing by `N` gives `H⁽⁰⁾ + H⁽¹⁾`, where `H⁽⁰⁾` carries the `O(1)` and
//! `O(N^(−1/2))` entries. Its eigenvector `|e₁⟩` is asymptotically `|s⟩` and
//! degenerate with `|w⟩`; the mixed pair `(|w⟩ ± |e₁⟩)/√2` then splits by
//! `2/√N`, which drives `|s⟩` to `|w⟩` in time `π√N/2`.

use nalgebra::{DVector, Matrix3, SymmetricEigen, Vector3};

use crate::analysis::noiseless_optimal_time;
use crate::graph::{Graph, TargetKind};
use crate::hamiltonian::{noiseless_hamiltonian, SearchParameters};
use crate::propagator::{ProbabilityTrace, Spectral, TimeGrid, WalkerState};
use crate::{Error, Result};

/// Reduced-basis index of each Krylov vector.
pub const HUB: usize = 0;
pub const TARGET: usize = 1;
pub const REST: usize = 2;

/// Smallest order for which the perturbative pairing is meaningful.
pub const MIN_PERTURBATIVE_ORDER: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedStarSystem {
    pub n: usize,
    pub h_red: Matrix3<f64>,
}

pub fn reduce_star(n: usize) -> Result<ReducedStarSystem> {
    if n < 3 {
        return Err(Error::InvalidOrder { n, min: 3 });
    }
    let nf = n as f64;
    let r = (nf - 2.0).sqrt();
    #[rustfmt::skip]
    let h_red = Matrix3::new(
        nf - 1.0, -1.0, -r,
        -1.0,      0.0, 0.0,
        -r,        0.0, 1.0,
    );
    Ok(ReducedStarSystem { n, h_red })
}

impl ReducedStarSystem {
    /// Full-space vector of reduced-basis index `HUB`, `TARGET` or `REST`.
    pub fn basis_vector(&self, which: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.n);
        match which {
            HUB => v[0] = 1.0,
            TARGET => v[1] = 1.0,
            REST => {
                let a = 1.0 / ((self.n - 2) as f64).sqrt();
                v.rows_mut(2, self.n - 2).fill(a);
            }
            _ => panic!("reduced basis has three vectors"),
        }
        v
    }

    /// Maps reduced coordinates to the full `n`-dimensional space.
    pub fn embed(&self, v: &Vector3<f64>) -> DVector<f64> {
        (0..3).fold(DVector::zeros(self.n), |acc, k| acc + self.basis_vector(k) * v[k])
    }

    /// Reduced coordinates of a full-space vector.
    pub fn project(&self, v: &DVector<f64>) -> Vector3<f64> {
        Vector3::from_fn(|k, _| self.basis_vector(k).dot(v))
    }

    /// `|s⟩` in reduced coordinates.
    pub fn uniform(&self) -> Vector3<f64> {
        let nf = self.n as f64;
        Vector3::new(1.0 / nf.sqrt(), 1.0 / nf.sqrt(), ((nf - 2.0) / nf).sqrt())
    }

    /// Applies the full star Hamiltonian (`γ = 1`, target on node 1) to a
    /// full-space vector in O(n), without forming the matrix.
    pub fn apply_full(&self, v: &DVector<f64>) -> DVector<f64> {
        let leaves: f64 = v.iter().skip(1).sum();
        let mut out = DVector::zeros(self.n);
        out[0] = (self.n - 1) as f64 * v[0] - leaves;
        for j in 1..self.n {
            out[j] = v[j] - v[0];
        }
        out[1] -= v[1];
        out
    }

    /// `max |H B − B H_red|` over the embedded basis `B`; zero when the span
    /// is invariant and `H_red` is its matrix.
    pub fn invariance_residual(&self) -> f64 {
        (0..3)
            .map(|k| {
                let hb = self.apply_full(&self.basis_vector(k));
                let bh = self.embed(&self.h_red.column(k).into_owned());
                (hb - bh).amax()
            })
            .fold(0.0, f64::max)
    }

    /// Eigenpairs of `H_red`, ascending.
    pub fn exact_eigenpairs(&self) -> ([f64; 3], [Vector3<f64>; 3]) {
        let eig = SymmetricEigen::new(self.h_red);
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let energies = order.map(|k| eig.eigenvalues[k]);
        let vectors = order.map(|k| {
            let v = eig.eigenvectors.column(k).into_owned();
            // Fix the sign so the target component is non-negative.
            if v[TARGET] < 0.0 {
                -v
            } else {
                v
            }
        });
        (energies, vectors)
    }
}

/// `H⁽⁰⁾` and `H⁽¹⁾` with `N (H⁽⁰⁾ + H⁽¹⁾) = H_red`.
pub fn perturbative_split(n: usize) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    if n < 3 {
        return Err(Error::InvalidOrder { n, min: 3 });
    }
    let nf = n as f64;
    let a = (nf - 2.0).sqrt() / nf;
    #[rustfmt::skip]
    let h0 = Matrix3::new(
        1.0, 0.0, -a,
        0.0, 0.0, 0.0,
        -a,  0.0, 0.0,
    );
    let inv = 1.0 / nf;
    #[rustfmt::skip]
    let h1 = Matrix3::new(
        -inv, -inv, 0.0,
        -inv,  0.0, 0.0,
        0.0,   0.0, inv,
    );
    Ok((h0, h1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct H0Spectrum {
    /// `E⁽⁰⁾₀ = 0`, `E⁽⁰⁾₁,₂ = (1 ∓ √(1 + 4/N − 8/N²))/2`.
    pub energies: [f64; 3],
    /// `|e₀⟩ = |w⟩`, `|e₁⟩`, `|e₂⟩` in reduced coordinates.
    pub vectors: [Vector3<f64>; 3],
}

/// Closed-form spectrum of `H⁽⁰⁾`.
///
/// The hub/rest block `[[1, −a], [−a, 0]]`, `a = √(N−2)/N`, has eigenvectors
/// `∝ −(N E/√(N−2))|c⟩ + |s'⟩`; the coefficient tends to `−√N E` for large
/// `N`. Vectors are normalised and have a positive `|s'⟩` component.
pub fn h0_spectrum(n: usize) -> Result<H0Spectrum> {
    if n < 3 {
        return Err(Error::InvalidOrder { n, min: 3 });
    }
    let nf = n as f64;
    let root = (1.0 + 4.0 / nf - 8.0 / (nf * nf)).sqrt();
    let e1 = (1.0 - root) / 2.0;
    let e2 = (1.0 + root) / 2.0;
    let vector = |e: f64| Vector3::new(-nf * e / (nf - 2.0).sqrt(), 0.0, 1.0).normalize();
    Ok(H0Spectrum {
        energies: [0.0, e1, e2],
        vectors: [Vector3::new(0.0, 1.0, 0.0), vector(e1), vector(e2)],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbativeSpectrum {
    pub n: usize,
    /// Leading-order `E₀,₁ = ∓1/√N`.
    pub predicted_energies: [f64; 2],
    /// `λ₀,₁ = (|w⟩ ± |e₁⟩)/√2`.
    pub predicted_vectors: [Vector3<f64>; 2],
    pub h0: H0Spectrum,
    /// Exact eigenpairs of `H_red`, ascending.
    pub exact_energies: [f64; 3],
    pub exact_vectors: [Vector3<f64>; 3],
}

impl PerturbativeSpectrum {
    pub fn predicted_gap(&self) -> f64 {
        self.predicted_energies[1] - self.predicted_energies[0]
    }

    pub fn exact_gap(&self) -> f64 {
        self.exact_energies[1] - self.exact_energies[0]
    }

    /// `|⟨λ₀^pred|λ₀^exact⟩|`.
    pub fn ground_overlap(&self) -> f64 {
        self.predicted_vectors[0].dot(&self.exact_vectors[0]).abs()
    }

    pub fn excited_overlap(&self) -> f64 {
        self.predicted_vectors[1].dot(&self.exact_vectors[1]).abs()
    }
}

pub fn perturbed_pairs(n: usize) -> Result<PerturbativeSpectrum> {
    if n < MIN_PERTURBATIVE_ORDER {
        return Err(Error::InvalidOrder {
            n,
            min: MIN_PERTURBATIVE_ORDER,
        });
    }
    perturbed_pairs_unchecked(n)
}

fn perturbed_pairs_unchecked(n: usize) -> Result<PerturbativeSpectrum> {
    let reduced = reduce_star(n)?;
    let h0 = h0_spectrum(n)?;
    let w = h0.vectors[0];
    let e1 = h0.vectors[1];
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let root = (n as f64).sqrt();
    let (exact_energies, exact_vectors) = reduced.exact_eigenpairs();
    Ok(PerturbativeSpectrum {
        n,
        predicted_energies: [-1.0 / root, 1.0 / root],
        predicted_vectors: [(w + e1) * inv_sqrt2, (w - e1) * inv_sqrt2],
        h0,
        exact_energies,
        exact_vectors,
    })
}

/// Two-level amplitudes `a_k = ⟨w|λ_k⟩⟨λ_k|s⟩` for the two lowest exact
/// eigenpairs.
fn two_level_amplitudes(reduced: &ReducedStarSystem) -> ([f64; 2], [f64; 2]) {
    let (energies, vectors) = reduced.exact_eigenpairs();
    let s = reduced.uniform();
    let amps = [0, 1].map(|k| vectors[k][TARGET] * vectors[k].dot(&s));
    ([energies[0], energies[1]], amps)
}

/// `p_w(t)` from the two asymptotically degenerate eigenpairs of `H_red`,
/// dropping the high-energy third component.
pub fn asymptotic_trace(n: usize, grid: &TimeGrid) -> Result<ProbabilityTrace> {
    if n < MIN_PERTURBATIVE_ORDER {
        return Err(Error::InvalidOrder {
            n,
            min: MIN_PERTURBATIVE_ORDER,
        });
    }
    let reduced = reduce_star(n)?;
    let (energies, amps) = two_level_amplitudes(&reduced);
    let p = grid
        .times()
        .map(|t| {
            let re = amps[0] * (energies[0] * t).cos() + amps[1] * (energies[1] * t).cos();
            let im = amps[0] * (energies[0] * t).sin() + amps[1] * (energies[1] * t).sin();
            re * re + im * im
        })
        .collect();
    Ok(ProbabilityTrace::exact(*grid, p))
}

/// Two-level prediction of the success probability, `(|a₀| + |a₁|)²`.
pub fn predicted_success(n: usize) -> Result<f64> {
    let reduced = reduce_star(n)?;
    let (_, amps) = two_level_amplitudes(&reduced);
    Ok((amps[0].abs() + amps[1].abs()).powi(2))
}

/// Largest norm of the component of `e^(−iHt)|s⟩` outside the Krylov span,
/// evaluated with a dense full-space eigendecomposition at each `t`.
pub fn krylov_leakage(n: usize, times: &[f64]) -> Result<f64> {
    let reduced = reduce_star(n)?;
    let graph = Graph::star(n, TargetKind::External)?;
    let h = noiseless_hamiltonian(&graph, &SearchParameters::new(1.0, 0.0, graph.target())?)?;
    let spectral = Spectral::new(&h)?;
    let coefficients = spectral.coefficients(WalkerState::uniform(n).amplitudes());
    let basis: Vec<DVector<f64>> = (0..3).map(|k| reduced.basis_vector(k)).collect();
    let mut worst = 0.0f64;
    for &t in times {
        let psi = spectral.state_at(&coefficients, t);
        let mut remainder = psi.clone();
        for b in &basis {
            let overlap: num_complex::Complex64 = b.iter().zip(psi.iter()).map(|(&x, &a)| a * x).sum();
            for (r, &x) in remainder.iter_mut().zip(b.iter()) {
                *r -= overlap * x;
            }
        }
        worst = worst.max(remainder.norm());
    }
    Ok(worst)
}

/// One row of the theory table.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRow {
    pub n: usize,
    pub e0_exact: f64,
    pub e1_exact: f64,
    pub gap: f64,
    pub overlap_lambda0: f64,
    pub one_minus_psucc_pred: f64,
    /// The closed-form `H_red` is the restriction of the full Hamiltonian.
    pub h_red_check: bool,
}

/// Tolerance for the invariance check behind [`TheoryRow::h_red_check`].
pub const H_RED_CHECK_TOLERANCE: f64 = 1e-10;

pub fn theory_row(n: usize) -> Result<TheoryRow> {
    let reduced = reduce_star(n)?;
    let spectrum = perturbed_pairs_unchecked(n)?;
    let scale = (n as f64).max(1.0);
    Ok(TheoryRow {
        n,
        e0_exact: spectrum.exact_energies[0],
        e1_exact: spectrum.exact_energies[1],
        gap: spectrum.exact_gap(),
        overlap_lambda0: spectrum.ground_overlap(),
        one_minus_psucc_pred: 1.0 - predicted_success(n)?,
        h_red_check: reduced.invariance_residual() <= H_RED_CHECK_TOLERANCE * scale,
    })
}

/// Grid over `[0, factor · π√N/2]` convenient for comparing traces.
pub fn optimal_time_grid(n: usize, factor: f64, samples: usize) -> Result<TimeGrid> {
    TimeGrid::new(factor * noiseless_optimal_time(n), samples)
}
