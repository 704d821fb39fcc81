//! From Stieltjes transforms to densities, CDFs and mass diagnostics.

use num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::master_solver::SolveReport;
use crate::Real;

/// Which limiting law a curve describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumSide {
    /// `ℙ`, the limit of the spectrum of `ΣΣᵀ` (no atom at 0 for `c ≤ 1`).
    Gram,
    /// `ℙ̃`, the limit of the spectrum of `ΣᵀΣ` (atom `1 − c` at 0).
    CoGram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve<T> {
    pub x_grid: Vec<T>,
    pub values: Vec<T>,
    /// Height `ε` of the inversion line `x + iε`.
    pub epsilon: T,
    pub atom_at_zero: T,
    pub side: SpectrumSide,
}

impl<T: Real> DensityCurve<T> {
    /// `atom + ∫ values dx` by the trapezoid rule.
    pub fn total_mass(&self) -> T {
        self.atom_at_zero + trapezoid(&self.x_grid, &self.values)
    }

    /// The curve of `ℙ̃` given the curve of `ℙ`.
    ///
    /// `f̃ = c f − (1−c)/z`, so `ℙ̃ = c ℙ + (1−c) δ₀`; the atom is placed
    /// analytically rather than read off the smeared inversion.
    pub fn dual(&self, c: T) -> Result<Self> {
        if self.side != SpectrumSide::Gram {
            return Err(invalid("dual curve must be built from the Gram-side curve"));
        }
        Ok(Self {
            x_grid: self.x_grid.clone(),
            values: self.values.iter().map(|v| *v * c).collect(),
            epsilon: self.epsilon,
            atom_at_zero: T::one() - c,
            side: SpectrumSide::CoGram,
        })
    }
}

pub(crate) fn trapezoid<T: Real>(x: &[T], y: &[T]) -> T {
    x.windows(2)
        .zip(y.windows(2))
        .fold(T::zero(), |s, (xw, yw)| {
            s + (xw[1] - xw[0]) * (yw[0] + yw[1]) * T::lit(0.5)
        })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StieltjesPair<T> {
    pub f: Complex<T>,
    pub f_tilde: Complex<T>,
    /// `|f̃ − (c f − (1−c)/z)|`
    pub duality_residual: T,
}

pub fn stieltjes_pair<T: Real>(report: &SolveReport<T>, c: T, z: Complex<T>) -> StieltjesPair<T> {
    let predicted = report.f * c - z.inv() * (T::one() - c);
    StieltjesPair {
        f: report.f,
        f_tilde: report.f_tilde,
        duality_residual: (report.f_tilde - predicted).norm(),
    }
}

/// Uniform grid of `points` nodes on `[0, 1.2·x_max]` with
/// `x_max = (√(cσ²_max) + √σ²_max)² + max λ`.
pub fn default_x_grid<T: Real>(c: T, sigma_max_sq: T, max_lambda: T, points: usize) -> Vec<T> {
    let x_max = ((c * sigma_max_sq).sqrt() + sigma_max_sq.sqrt()).powi(2) + max_lambda;
    uniform_grid(T::zero(), T::lit(1.2) * x_max, points)
}

pub fn uniform_grid<T: Real>(lo: T, hi: T, points: usize) -> Vec<T> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let h = (hi - lo) / T::from_usize_lossy(points - 1);
            (0..points)
                .map(|k| lo + h * T::from_usize_lossy(k))
                .collect()
        }
    }
}

/// `values[k] = Im f(x_k + iε)/π` for the Gram-side law `ℙ`.
pub fn density_from_stieltjes<T: Real>(
    mut f_at: impl FnMut(Complex<T>) -> Result<Complex<T>>,
    x_grid: &[T],
    epsilon: T,
) -> Result<DensityCurve<T>> {
    if !(epsilon > T::zero()) {
        return Err(invalid("inversion height epsilon must be positive"));
    }
    if x_grid.is_empty() || x_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("x grid must be non-empty and strictly increasing"));
    }
    let clamp = T::lit(1e-12);
    let mut values = Vec::with_capacity(x_grid.len());
    for x in x_grid {
        let f = f_at(Complex::new(*x, epsilon))?;
        let v = f.im / T::PI();
        if v < -clamp || !v.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "negative density {v} at x = {x}"
            )));
        }
        values.push(v.max(T::zero()));
    }
    Ok(DensityCurve {
        x_grid: x_grid.to_vec(),
        values,
        epsilon,
        atom_at_zero: T::zero(),
        side: SpectrumSide::Gram,
    })
}

/// `Re(−iy·f(iy))` for each `y`; tends to the total mass as `y → ∞`.
pub fn mass_check<T: Real>(
    mut f_at: impl FnMut(Complex<T>) -> Result<Complex<T>>,
    ys: &[T],
) -> Result<Vec<T>> {
    if ys.iter().any(|y| !(*y > T::zero())) {
        return Err(invalid("mass check heights must be positive"));
    }
    ys.iter()
        .map(|y| {
            let iy = Complex::new(T::zero(), *y);
            f_at(iy).map(|f| (-iy * f).re)
        })
        .collect()
}

/// Piecewise-linear CDF built from a density curve and an atom at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCdf<T> {
    x: Vec<T>,
    cdf: Vec<T>,
    atom: T,
    /// `atom + ∫ density` before renormalisation.
    raw_total: T,
}

/// Accepted range for the pre-normalisation mass.
pub const MASS_WINDOW: (f64, f64) = (0.95, 1.05);

impl<T: Real> GridCdf<T> {
    pub fn raw_total(&self) -> T {
        self.raw_total
    }

    pub fn atom(&self) -> T {
        self.atom
    }

    /// `|raw_total − 1|`.
    pub fn mass_defect(&self) -> T {
        (self.raw_total - T::one()).abs()
    }

    pub fn within_mass_window(&self) -> bool {
        let t = self.raw_total.as_f64();
        t >= MASS_WINDOW.0 && t <= MASS_WINDOW.1
    }

    pub fn grid(&self) -> &[T] {
        &self.x
    }

    pub fn values(&self) -> &[T] {
        &self.cdf
    }

    pub fn eval(&self, x: T) -> T {
        if x < T::zero() {
            return T::zero();
        }
        let last = self.x.len() - 1;
        if x >= self.x[last] {
            return T::one();
        }
        if x < self.x[0] {
            return self.atom;
        }
        let k = self.x.partition_point(|g| *g <= x) - 1;
        let (x0, x1) = (self.x[k], self.x[k + 1]);
        let s = (x - x0) / (x1 - x0);
        self.cdf[k] + s * (self.cdf[k + 1] - self.cdf[k])
    }
}

/// `CDF(x) = atom·1_{x≥0} + ∫₀ˣ density`, with the continuous part rescaled
/// so that the CDF ends at exactly 1.
pub fn cdf_with_atom<T: Real>(curve: &DensityCurve<T>) -> Result<GridCdf<T>> {
    if curve.x_grid.len() < 2 || curve.x_grid.len() != curve.values.len() {
        return Err(invalid(
            "density curve needs at least two matching grid points",
        ));
    }
    let mut acc = T::zero();
    let mut running = Vec::with_capacity(curve.x_grid.len());
    running.push(T::zero());
    for (xw, yw) in curve.x_grid.windows(2).zip(curve.values.windows(2)) {
        acc += (xw[1] - xw[0]) * (yw[0] + yw[1]) * T::lit(0.5);
        running.push(acc);
    }
    let atom = curve.atom_at_zero;
    let raw_total = atom + acc;
    let scale = if acc > T::zero() {
        (T::one() - atom) / acc
    } else {
        T::zero()
    };
    let mut cdf: Vec<T> = running.iter().map(|r| atom + *r * scale).collect();
    if let Some(last) = cdf.last_mut() {
        *last = T::one();
    }
    Ok(GridCdf {
        x: curve.x_grid.clone(),
        cdf,
        atom,
        raw_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::mp_stieltjes;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    type C = Complex<f64>;

    fn point_mass_at_zero(z: C) -> Result<C> {
        Ok(-z.inv())
    }

    #[test]
    fn cauchy_kernel_for_point_mass() {
        let eps = 0.05;
        let xs = uniform_grid(0.0, 1.0, 11);
        let curve = density_from_stieltjes(point_mass_at_zero, &xs, eps).unwrap();
        for (x, v) in xs.iter().zip(&curve.values) {
            assert_abs_diff_eq!(*v, eps / (PI * (x * x + eps * eps)), epsilon = 1e-14);
        }
    }

    #[test]
    fn cauchy_mass_within_ten_epsilon() {
        for eps in [1e-1, 1e-2, 1e-3] {
            let xs = uniform_grid(-10.0 * eps, 10.0 * eps, 4001);
            let curve = density_from_stieltjes(point_mass_at_zero, &xs, eps).unwrap();
            let m = trapezoid(&curve.x_grid, &curve.values);
            assert!(m >= 0.93, "eps={eps}: {m}");
        }
    }

    #[test]
    fn mp_density_at_two() {
        let f = |z: C| mp_stieltjes(z, 1.0, 1.0);
        let curve = density_from_stieltjes(f, &[2.0], 1e-4).unwrap();
        assert_abs_diff_eq!(curve.values[0], 1.0 / (2.0 * PI), epsilon = 1e-4);
    }

    #[test]
    fn inversion_rejects_bad_inputs() {
        assert!(density_from_stieltjes(point_mass_at_zero, &[0.0, 1.0], 0.0).is_err());
        assert!(density_from_stieltjes(point_mass_at_zero, &[1.0, 0.5], 0.1).is_err());
        let err = density_from_stieltjes(|z: C| Ok(z.inv()), &[1.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure(_)));
    }

    #[test]
    fn evaluator_errors_propagate() {
        let err = density_from_stieltjes(
            |_z: C| Err(Error::NumericalFailure("boom".into())),
            &[0.0, 1.0],
            0.1,
        )
        .unwrap_err();
        assert_eq!(err, Error::NumericalFailure("boom".into()));
    }

    #[test]
    fn mass_check_examples() {
        let ys = [1.0, 10.0, 1e4];
        let exact = mass_check(point_mass_at_zero, &ys).unwrap();
        assert!(exact.iter().all(|v| (*v - 1.0).abs() <= 1e-15));

        let shifted = mass_check(|z: C| Ok((C::new(1.0, 0.0) - z).inv()), &[1e4]).unwrap();
        assert!((shifted[0] - 1.0).abs() <= 1e-4);

        let mp = mass_check(|z: C| mp_stieltjes(z, 1.0, 1.0), &[1e4]).unwrap();
        assert!((mp[0] - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn mass_check_error_decays_like_inverse_y() {
        let ys = [10.0, 100.0, 1000.0, 1e4];
        let v = mass_check(|z: C| mp_stieltjes(z, 0.5, 1.0), &ys).unwrap();
        let err: Vec<f64> = v.iter().map(|m| (m - 1.0).abs()).collect();
        assert!(err.windows(2).all(|w| w[1] < w[0]), "{err:?}");
        let constant = err[3] * ys[3];
        assert!(err[2] * ys[2] <= 1.5 * constant.max(err[2] * ys[2]));
        for (e, y) in err.iter().zip(&ys).skip(2) {
            assert!(*e <= 1.01 * constant.max(err[2] * ys[2]) / y);
        }
    }

    fn mp_curve(c: f64) -> DensityCurve<f64> {
        let xs = default_x_grid(c, 1.0, 0.0, 2000);
        density_from_stieltjes(|z| mp_stieltjes(z, c, 1.0), &xs, 1e-3).unwrap()
    }

    #[test]
    fn gram_side_has_no_atom_and_ends_at_one() {
        let curve = mp_curve(1.0);
        assert_eq!(curve.atom_at_zero, 0.0);
        let cdf = cdf_with_atom(&curve).unwrap();
        assert!(cdf.within_mass_window(), "{}", cdf.raw_total());
        assert_eq!(*cdf.values().last().unwrap(), 1.0);
        assert!(cdf.values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn dual_side_carries_the_missing_mass_at_zero() {
        let curve = mp_curve(0.5).dual(0.5).unwrap();
        assert_eq!(curve.side, SpectrumSide::CoGram);
        let cdf = cdf_with_atom(&curve).unwrap();
        assert_abs_diff_eq!(cdf.eval(0.0), 0.5, epsilon = 1e-15);
        assert_eq!(cdf.eval(-0.1), 0.0);
        assert_eq!(cdf.eval(100.0), 1.0);
        assert!(cdf.values().windows(2).all(|w| w[0] <= w[1]));
        assert!(curve.dual(0.5).is_err());
    }
}
