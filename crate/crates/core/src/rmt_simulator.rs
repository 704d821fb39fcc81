//! Finite realisations `Σ = Y + Λ`, their Gram spectra and resolvent checks.
//!
//! Double precision only. Every row of `X` is drawn from its own ChaCha8
//! stream (`seed`, stream = row index) so results do not depend on thread
//! scheduling or on how many rows are sampled.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{ComplexKernel, KernelPoint, VarianceProfile};

type C64 = Complex<f64>;

/// Generator recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.3), seed_from_u64(seed), stream = row index";

/// Eigenvalues in `[−NEGATIVE_CLAMP, 0)` are rounded to 0.
pub const NEGATIVE_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryLaw {
    Gaussian,
    /// `±1` with probability 1/2.
    Rademacher,
    /// Uniform on `[−√3, √3]`.
    Uniform,
    /// Independent real and imaginary parts, each of variance 1/2.
    ComplexGaussian,
}

impl EntryLaw {
    pub fn is_complex(self) -> bool {
        matches!(self, EntryLaw::ComplexGaussian)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub entry_law: EntryLaw,
    pub seed: u64,
    /// `N`
    pub rows: usize,
    /// `n`
    pub cols: usize,
}

impl EnsembleSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(invalid("ensemble dimensions must be positive"));
        }
        if self.rows > self.cols {
            return Err(invalid(format!(
                "ensemble needs N <= n, got N = {} > n = {}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

/// A sampled `Σ`, real or complex according to the entry law.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaMatrix {
    Real(DMatrix<f64>),
    Complex(DMatrix<C64>),
}

impl SigmaMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            SigmaMatrix::Real(m) => m.nrows(),
            SigmaMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            SigmaMatrix::Real(m) => m.ncols(),
            SigmaMatrix::Complex(m) => m.ncols(),
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        match self {
            SigmaMatrix::Real(m) => m.norm_squared(),
            SigmaMatrix::Complex(m) => m.norm_squared(),
        }
    }

    pub fn to_complex(&self) -> DMatrix<C64> {
        match self {
            SigmaMatrix::Real(m) => m.map(|v| C64::new(v, 0.0)),
            SigmaMatrix::Complex(m) => m.clone(),
        }
    }

    /// `Σᴴ`, so that the co-Gram spectrum is the Gram spectrum of the result.
    pub fn adjoint(&self) -> SigmaMatrix {
        match self {
            SigmaMatrix::Real(m) => SigmaMatrix::Real(m.transpose()),
            SigmaMatrix::Complex(m) => SigmaMatrix::Complex(m.adjoint()),
        }
    }
}

/// Eigenvalues of `ΣΣᴴ`, ascending and non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub eigenvalues: Vec<f64>,
    pub seed: Option<u64>,
    pub rows: usize,
    pub cols: usize,
}

impl SpectrumSample {
    /// One eigenvalue per line under a `#` metadata header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let seed = self
            .seed
            .map_or_else(|| "none".to_string(), |s| s.to_string());
        writeln!(w, "# seed={seed} rows={} cols={}", self.rows, self.cols)?;
        writeln!(w, "# rng={RNG_NAME}")?;
        writeln!(w, "eigenvalue")?;
        for v in &self.eigenvalues {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }
}

fn draw_real(law: EntryLaw, rng: &mut ChaCha8Rng) -> f64 {
    match law {
        EntryLaw::Gaussian => rng.sample(StandardNormal),
        EntryLaw::Rademacher => {
            if rng.gen::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        EntryLaw::Uniform => {
            let r3 = 3f64.sqrt();
            rng.gen_range(-r3..r3)
        }
        EntryLaw::ComplexGaussian => unreachable!("complex law drawn through draw_complex"),
    }
}

fn draw_complex(rng: &mut ChaCha8Rng) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// `Σ_ij = σ(i/N, j/n)/√n · X_ij + Λ_ii·1{i=j}` with 1-based `i`, `j`.
pub fn sample_sigma_matrix(
    spec: &EnsembleSpec,
    profile: &VarianceProfile<f64>,
    lambda_diag: &[f64],
) -> Result<SigmaMatrix> {
    spec.validate()?;
    let (nr, nc) = (spec.rows, spec.cols);
    if lambda_diag.len() != nr {
        return Err(invalid(format!(
            "lambda_diag has length {}, expected N = {nr}",
            lambda_diag.len()
        )));
    }
    if lambda_diag.iter().any(|l| !l.is_finite()) {
        return Err(invalid("lambda_diag entries must be finite"));
    }
    let scale = |i: usize, j: usize| {
        let x = (i + 1) as f64 / nr as f64;
        let y = (j + 1) as f64 / nc as f64;
        (profile.eval(x, y).max(0.0) / nc as f64).sqrt()
    };
    if spec.entry_law.is_complex() {
        let mut m = DMatrix::<C64>::zeros(nr, nc);
        for i in 0..nr {
            let mut rng = row_rng(spec.seed, i);
            for j in 0..nc {
                m[(i, j)] = draw_complex(&mut rng) * scale(i, j);
            }
            m[(i, i)] += C64::new(lambda_diag[i], 0.0);
        }
        Ok(SigmaMatrix::Complex(m))
    } else {
        let mut m = DMatrix::<f64>::zeros(nr, nc);
        for i in 0..nr {
            let mut rng = row_rng(spec.seed, i);
            for j in 0..nc {
                m[(i, j)] = draw_real(spec.entry_law, &mut rng) * scale(i, j);
            }
            m[(i, i)] += lambda_diag[i];
        }
        Ok(SigmaMatrix::Real(m))
    }
}

fn finish_eigenvalues(mut ev: Vec<f64>, frob_sq: f64) -> Result<Vec<f64>> {
    for v in ev.iter_mut() {
        if !v.is_finite() {
            return Err(Error::NumericalFailure("non-finite eigenvalue".into()));
        }
        if *v < 0.0 {
            if *v < -NEGATIVE_CLAMP {
                return Err(Error::NumericalFailure(format!(
                    "Gram eigenvalue {v:e} is below -{NEGATIVE_CLAMP:e}"
                )));
            }
            *v = 0.0;
        }
    }
    ev.sort_by(f64::total_cmp);
    let trace: f64 = ev.iter().sum();
    let rel = (trace - frob_sq).abs() / frob_sq.max(f64::MIN_POSITIVE);
    if rel > 1e-8 {
        return Err(Error::NumericalFailure(format!(
            "trace identity violated: relative gap {rel:e}"
        )));
    }
    Ok(ev)
}

fn hermitian_eigenvalues(gram: DMatrix<C64>) -> Result<Vec<f64>> {
    let dim = gram.nrows();
    SymmetricEigen::try_new(gram, f64::EPSILON, 1000 * dim.max(1))
        .map(|e| e.eigenvalues.iter().copied().collect())
        .ok_or_else(|| Error::NumericalFailure("Hermitian eigensolve did not converge".into()))
}

fn real_eigenvalues(gram: DMatrix<f64>) -> Result<Vec<f64>> {
    let dim = gram.nrows();
    SymmetricEigen::try_new(gram, f64::EPSILON, 1000 * dim.max(1))
        .map(|e| e.eigenvalues.iter().copied().collect())
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolve did not converge".into()))
}

/// Spectrum of `ΣΣᴴ`.
pub fn gram_eigenvalues(sigma: &SigmaMatrix) -> Result<SpectrumSample> {
    if sigma.nrows() == 0 || sigma.ncols() == 0 {
        return Err(invalid("matrix must be nonempty"));
    }
    let ev = match sigma {
        SigmaMatrix::Real(m) => real_eigenvalues(m * m.transpose())?,
        SigmaMatrix::Complex(m) => hermitian_eigenvalues(m * m.adjoint())?,
    };
    Ok(SpectrumSample {
        eigenvalues: finish_eigenvalues(ev, sigma.frobenius_sq())?,
        seed: None,
        rows: sigma.nrows(),
        cols: sigma.ncols(),
    })
}

/// Spectrum of `ΣᴴΣ` (length `n`).
///
/// At least `n − N` of these vanish exactly; eigenvalues below
/// `n·ε·μ_max` are set to 0 so that the zero multiplicity is exact.
pub fn cogram_eigenvalues(sigma: &SigmaMatrix) -> Result<SpectrumSample> {
    let mut sample = gram_eigenvalues(&sigma.adjoint())?;
    let top = sample.eigenvalues.last().copied().unwrap_or(0.0);
    let floor = sample.eigenvalues.len() as f64 * f64::EPSILON * top;
    for v in sample.eigenvalues.iter_mut() {
        if *v <= floor {
            *v = 0.0;
        }
    }
    Ok(sample)
}

/// Samples `Σ` and returns its Gram spectrum tagged with the seed.
pub fn simulate_spectrum(
    spec: &EnsembleSpec,
    profile: &VarianceProfile<f64>,
    lambda_diag: &[f64],
) -> Result<SpectrumSample> {
    let sigma = sample_sigma_matrix(spec, profile, lambda_diag)?;
    let mut sample = gram_eigenvalues(&sigma)?;
    sample.seed = Some(spec.seed);
    Ok(sample)
}

/// One spectrum per seed, computed in parallel; output order follows `seeds`.
pub fn simulate_many(
    spec: &EnsembleSpec,
    profile: &VarianceProfile<f64>,
    lambda_diag: &[f64],
    seeds: &[u64],
) -> Vec<Result<SpectrumSample>> {
    seeds
        .par_iter()
        .map(|s| simulate_spectrum(&spec.with_seed(*s), profile, lambda_diag))
        .collect()
}

fn check_upper(z: C64) -> Result<()> {
    if !(z.im > 0.0) || !z.re.is_finite() {
        return Err(invalid("z must lie in the open upper half-plane"));
    }
    Ok(())
}

/// `(A − zI)` for a Hermitian `A`.
fn shifted(mut a: DMatrix<C64>, z: C64) -> DMatrix<C64> {
    for k in 0..a.nrows() {
        a[(k, k)] -= z;
    }
    a
}

/// Diagonal of `(A − zI)⁻¹` from one LU factorisation.
fn resolvent_diagonal(a: DMatrix<C64>, z: C64) -> Result<Vec<C64>> {
    let dim = a.nrows();
    let lu = shifted(a, z).lu();
    let cols = lu
        .solve(&DMatrix::<C64>::identity(dim, dim))
        .ok_or_else(|| Error::NumericalFailure("singular resolvent factorisation".into()))?;
    Ok((0..dim).map(|k| cols[(k, k)]).collect())
}

/// `L^n_z` with points `(i/N, Λ_ii²)` and weights `q_ii(z)/N`, and
/// `f_n = (1/N) Tr Q(z)`.
pub fn empirical_stieltjes(
    sigma: &SigmaMatrix,
    lambda_diag: &[f64],
    z: C64,
) -> Result<(ComplexKernel<f64>, C64)> {
    check_upper(z)?;
    let nr = sigma.nrows();
    if lambda_diag.len() != nr {
        return Err(invalid("lambda_diag length must equal the number of rows"));
    }
    let s = sigma.to_complex();
    let q = resolvent_diagonal(&s * s.adjoint(), z)?;
    let inv_n = 1.0 / nr as f64;
    let points = lambda_diag
        .iter()
        .enumerate()
        .map(|(i, l)| KernelPoint {
            t: (i + 1) as f64 * inv_n,
            zeta: l * l,
        })
        .collect();
    let weights: Vec<C64> = q.iter().map(|v| v * inv_n).collect();
    let f = weights.iter().sum();
    Ok((ComplexKernel::new(points, weights)?, f))
}

/// `|q_ii(z) − 1/(−z − z·ξ(Σ₍ᵢ₎ᴴΣ₍ᵢ₎ − zI)⁻¹ξᴴ)|` with `ξ` the `i`-th row
/// (1-based) and `Σ₍ᵢ₎` the matrix without it.
pub fn schur_identity_check(sigma: &SigmaMatrix, z: C64, i: usize) -> Result<f64> {
    check_upper(z)?;
    let nr = sigma.nrows();
    if i == 0 || i > nr {
        return Err(invalid(format!("row index {i} outside 1..={nr}")));
    }
    let s = sigma.to_complex();
    let q = resolvent_diagonal(&s * s.adjoint(), z)?[i - 1];

    let xi = s.row(i - 1).into_owned();
    let reduced = s.clone().remove_row(i - 1);
    let inner = shifted(reduced.adjoint() * &reduced, z);
    let rhs: DVector<C64> = xi.adjoint();
    let sol = inner
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("singular Schur complement".into()))?;
    let quad = (&xi * sol)[(0, 0)];
    let schur = (-z - z * quad).inv();
    Ok((q - schur).norm())
}

/// Zeroes every `Λ_ii` with `Λ_ii² > bound_sq`; returns the count removed.
pub fn truncate_diagonal(lambda_diag: &[f64], bound_sq: f64) -> Result<(Vec<f64>, usize)> {
    if !(bound_sq >= 0.0) {
        return Err(invalid("bound_sq must be non-negative"));
    }
    let mut count = 0;
    let out = lambda_diag
        .iter()
        .map(|l| {
            if l * l <= bound_sq {
                *l
            } else {
                count += 1;
                0.0
            }
        })
        .collect();
    Ok((out, count))
}

/// Kolmogorov-Smirnov distance between the ECDF of sorted `values` and `cdf`.
///
/// Both sides of each jump are compared; the left limit of `cdf` is taken at
/// the preceding float.
pub fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let mut worst: f64 = 0.0;
    let mut k = 0;
    while k < n {
        let x = values[k];
        let mut end = k;
        while end < n && values[end] == x {
            end += 1;
        }
        let below = k as f64 / nf;
        let at = end as f64 / nf;
        worst = worst
            .max((at - cdf(x)).abs())
            .max((below - cdf(x.next_down())).abs());
        k = end;
    }
    worst
}

pub fn ks_compare(sample: &SpectrumSample, cdf: impl Fn(f64) -> f64) -> f64 {
    ks_statistic(&sample.eigenvalues, cdf)
}

/// Right-continuous ECDF of sorted `values`.
pub fn ecdf(values: &[f64]) -> impl Fn(f64) -> f64 + '_ {
    move |x| values.partition_point(|v| *v <= x) as f64 / values.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(law: EntryLaw, seed: u64, rows: usize, cols: usize) -> EnsembleSpec {
        EnsembleSpec {
            entry_law: law,
            seed,
            rows,
            cols,
        }
    }

    fn unit() -> VarianceProfile<f64> {
        VarianceProfile::constant(1.0).unwrap()
    }

    #[test]
    fn zero_profile_gives_padded_diagonal() {
        let zero = VarianceProfile::constant(0.0).unwrap();
        let lam = [1.5, -2.0, 0.25];
        let SigmaMatrix::Real(m) =
            sample_sigma_matrix(&spec(EntryLaw::Gaussian, 1, 3, 5), &zero, &lam).unwrap()
        else {
            panic!("real law produced a complex matrix");
        };
        let mut expected = DMatrix::<f64>::zeros(3, 5);
        for (i, l) in lam.iter().enumerate() {
            expected[(i, i)] = *l;
        }
        assert_eq!(m, expected);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        for law in [
            EntryLaw::Gaussian,
            EntryLaw::Rademacher,
            EntryLaw::Uniform,
            EntryLaw::ComplexGaussian,
        ] {
            let s = spec(law, 42, 4, 7);
            let a = sample_sigma_matrix(&s, &unit(), &[0.0; 4]).unwrap();
            let b = sample_sigma_matrix(&s, &unit(), &[0.0; 4]).unwrap();
            assert_eq!(a, b);
            let c = sample_sigma_matrix(&s.with_seed(43), &unit(), &[0.0; 4]).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn rows_do_not_depend_on_row_count() {
        let a =
            sample_sigma_matrix(&spec(EntryLaw::Gaussian, 9, 2, 6), &unit(), &[0.0; 2]).unwrap();
        let b =
            sample_sigma_matrix(&spec(EntryLaw::Gaussian, 9, 5, 6), &unit(), &[0.0; 5]).unwrap();
        let (SigmaMatrix::Real(a), SigmaMatrix::Real(b)) = (a, b) else {
            panic!("expected real matrices");
        };
        assert_eq!(a.row(1), b.row(1));
    }

    #[test]
    fn entry_variance_matches_profile() {
        let profile = VarianceProfile::separable(vec![0.5, 2.0], vec![1.0, 3.0]).unwrap();
        let draws = 100_000u64;
        for law in [EntryLaw::Gaussian, EntryLaw::Uniform, EntryLaw::Rademacher] {
            let (rows, cols) = (2, 2);
            let (i, j) = (1, 1);
            let target = profile.eval(1.0, 1.0) / cols as f64;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for seed in 0..draws {
                let SigmaMatrix::Real(m) =
                    sample_sigma_matrix(&spec(law, seed, rows, cols), &profile, &[0.0; 2]).unwrap()
                else {
                    unreachable!()
                };
                let v = m[(i, j)] * m[(i, j)];
                sum += v;
                sum_sq += v * v;
            }
            let mean = sum / draws as f64;
            let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
            let slack = 3.0 * se.max(1e-12 * target);
            assert!(
                (mean - target).abs() <= slack,
                "{law:?}: {mean} vs {target}"
            );
        }
    }

    #[test]
    fn dimension_errors() {
        assert!(
            sample_sigma_matrix(&spec(EntryLaw::Gaussian, 0, 3, 2), &unit(), &[0.0; 3]).is_err()
        );
        assert!(
            sample_sigma_matrix(&spec(EntryLaw::Gaussian, 0, 2, 3), &unit(), &[0.0; 3]).is_err()
        );
    }

    #[test]
    fn identity_block_spectrum() {
        let mut m = DMatrix::<f64>::zeros(3, 5);
        for k in 0..3 {
            m[(k, k)] = 1.0;
        }
        let s = gram_eigenvalues(&SigmaMatrix::Real(m)).unwrap();
        assert!(s.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn diagonal_spectrum_squares() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let s = gram_eigenvalues(&SigmaMatrix::Real(m)).unwrap();
        for (v, e) in s.eigenvalues.iter().zip([1.0, 4.0, 9.0]) {
            assert_relative_eq!(*v, e, epsilon = 1e-13);
        }
    }

    #[test]
    fn trace_identity_on_random_matrices() {
        for law in [EntryLaw::Gaussian, EntryLaw::ComplexGaussian] {
            let sigma = sample_sigma_matrix(&spec(law, 3, 8, 12), &unit(), &[0.5; 8]).unwrap();
            let s = gram_eigenvalues(&sigma).unwrap();
            let tr: f64 = s.eigenvalues.iter().sum();
            assert!((tr - sigma.frobenius_sq()).abs() <= 1e-10 * sigma.frobenius_sq());
            assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn scalar_resolvent() {
        let sigma = SigmaMatrix::Real(DMatrix::from_element(1, 1, 2.0));
        let z = C64::new(0.3, 0.7);
        let (l, f) = empirical_stieltjes(&sigma, &[2.0], z).unwrap();
        let expected = (C64::new(4.0, 0.0) - z).inv();
        assert!((f - expected).norm() < 1e-15);
        assert_eq!(l.points()[0], KernelPoint { t: 1.0, zeta: 4.0 });
    }

    #[test]
    fn resolvent_trace_matches_spectrum() {
        for law in [
            EntryLaw::Gaussian,
            EntryLaw::Rademacher,
            EntryLaw::ComplexGaussian,
        ] {
            let lam: Vec<f64> = (0..16).map(|k| (k % 3) as f64).collect();
            let sigma = sample_sigma_matrix(&spec(law, 5, 16, 24), &unit(), &lam).unwrap();
            let s = gram_eigenvalues(&sigma).unwrap();
            for z in [C64::new(0.0, 1.0), C64::new(2.0, 0.1), C64::new(-1.0, 3.0)] {
                let (l, f) = empirical_stieltjes(&sigma, &lam, z).unwrap();
                let from_ev: C64 = s
                    .eigenvalues
                    .iter()
                    .map(|m| (C64::new(*m, 0.0) - z).inv())
                    .sum::<C64>()
                    / 16.0;
                assert!((f - from_ev).norm() <= 1e-10, "{law:?} {z}");
                let bound = 1.0 / z.im + 1e-12;
                assert!(l.weights().iter().all(|w| w.norm() * 16.0 <= bound));
            }
        }
    }

    #[test]
    fn schur_identity_single_row() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5]);
        let r = schur_identity_check(&SigmaMatrix::Real(m), C64::new(0.2, 1.0), 1).unwrap();
        assert!(r <= 1e-12);
    }

    #[test]
    fn schur_identity_random() {
        for law in [EntryLaw::Gaussian, EntryLaw::ComplexGaussian] {
            let sigma =
                sample_sigma_matrix(&spec(law, 11, 4, 6), &unit(), &[1.0, 0.0, 2.0, 0.5]).unwrap();
            for i in 1..=4 {
                let r = schur_identity_check(&sigma, C64::new(0.0, 1.0), i).unwrap();
                assert!(r <= 1e-10, "{law:?} row {i}: {r}");
            }
        }
        let sigma =
            sample_sigma_matrix(&spec(EntryLaw::Gaussian, 1, 2, 3), &unit(), &[0.0; 2]).unwrap();
        assert!(schur_identity_check(&sigma, C64::new(0.0, 1.0), 0).is_err());
        assert!(schur_identity_check(&sigma, C64::new(0.0, 1.0), 3).is_err());
        assert!(schur_identity_check(&sigma, C64::new(0.0, -1.0), 1).is_err());
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(
            truncate_diagonal(&[1.0, -1.5], 4.0).unwrap(),
            (vec![1.0, -1.5], 0)
        );
        assert_eq!(
            truncate_diagonal(&[1.0, 10.0], 4.0).unwrap(),
            (vec![1.0, 0.0], 1)
        );
        assert!(truncate_diagonal(&[1.0], -1.0).is_err());
    }

    #[test]
    fn ks_examples() {
        let vals = [0.5, 1.0, 1.0, 2.0, 3.5];
        assert_eq!(ks_statistic(&vals, ecdf(&vals)), 0.0);
        let zeros = [0.0; 4];
        let delta_one = |x: f64| if x >= 1.0 { 1.0 } else { 0.0 };
        assert_eq!(ks_statistic(&zeros, delta_one), 1.0);
    }

    #[test]
    fn ks_sees_left_limits() {
        // CDF of δ₁ against a single sample at 1 matches; a sample at 1 against
        // δ₀ differs by 1 just below the jump.
        let delta = |a: f64| move |x: f64| if x >= a { 1.0 } else { 0.0 };
        assert_eq!(ks_statistic(&[1.0], delta(1.0)), 0.0);
        assert_eq!(ks_statistic(&[1.0], delta(0.0)), 1.0);
    }

    #[test]
    fn simulate_many_is_ordered_and_deterministic() {
        let s = spec(EntryLaw::Gaussian, 0, 6, 9);
        let a = simulate_many(&s, &unit(), &[0.0; 6], &[3, 1, 2]);
        let b: Vec<_> = [3, 1, 2]
            .iter()
            .map(|seed| simulate_spectrum(&s.with_seed(*seed), &unit(), &[0.0; 6]))
            .collect();
        assert_eq!(a, b);
        assert_eq!(a[0].as_ref().unwrap().seed, Some(3));
    }

    #[test]
    fn csv_export() {
        let s = SpectrumSample {
            eigenvalues: vec![0.0, 1.25],
            seed: Some(7),
            rows: 2,
            cols: 3,
        };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# seed=7 rows=2 cols=3\n"));
        assert!(text.ends_with("eigenvalue\n0e0\n1.25e0\n"));
    }
}
