//! Reduced cases with independent solution routes, used as oracles for the
//! master solver.

use num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::measures::{check_lambda_law, QuadratureRule, VarianceProfile};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarFixedPointOptions<T> {
    /// Stop when `|f_new − f| ≤ tol · max(1, |f|)`.
    pub tol: T,
    pub max_iters: usize,
    pub damping: T,
}

impl<T: Real> Default for ScalarFixedPointOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-14).max(T::lit(100.0) * T::epsilon()),
            max_iters: 100_000,
            damping: T::lit(0.5),
        }
    }
}

impl<T: Real> ScalarFixedPointOptions<T> {
    fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) || self.max_iters == 0 {
            return Err(invalid(
                "scalar fixed point needs tol > 0 and max_iters >= 1",
            ));
        }
        if !(self.damping > T::zero() && self.damping <= T::one()) {
            return Err(invalid("scalar damping must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn check_z_c<T: Real>(z: Complex<T>, c: T) -> Result<()> {
    if !(z.im > T::zero()) {
        return Err(invalid("z must lie in the open upper half plane"));
    }
    if !(c > T::zero() && c <= T::one()) {
        return Err(invalid("c must lie in (0, 1]"));
    }
    Ok(())
}

/// Root with `Im f > 0` of `z c σ² f² + (z − (1−c)σ²) f + 1 = 0`.
pub fn mp_stieltjes<T: Real>(z: Complex<T>, c: T, sigma_sq: T) -> Result<Complex<T>> {
    check_z_c(z, c)?;
    if !(sigma_sq > T::zero()) {
        return Err(invalid("sigma_sq must be positive"));
    }
    let a = z * (c * sigma_sq);
    let b = z - Complex::from((T::one() - c) * sigma_sq);
    let disc = (b * b - a * T::lit(4.0)).sqrt();
    // q = −(b ± √disc)/2 with the sign avoiding cancellation; roots q/a and 1/q.
    let s = if (b.conj() * disc).re >= T::zero() {
        b + disc
    } else {
        b - disc
    };
    let q = -s * T::lit(0.5);
    let r1 = q / a;
    let r2 = q.inv();
    Ok(if r1.im >= r2.im { r1 } else { r2 })
}

/// Marchenko–Pastur density of the `ΣΣᵀ` limit with entry variance `σ²/n`.
pub fn mp_density<T: Real>(x: T, c: T, sigma_sq: T) -> T {
    let (lo, hi) = mp_support(c, sigma_sq);
    if x <= lo || x >= hi || x <= T::zero() {
        return T::zero();
    }
    ((hi - x) * (x - lo)).sqrt() / (T::lit(2.0) * T::PI() * sigma_sq * c * x)
}

/// `[σ²(1−√c)², σ²(1+√c)²]`.
pub fn mp_support<T: Real>(c: T, sigma_sq: T) -> (T, T) {
    let r = c.sqrt();
    let lo = sigma_sq * (T::one() - r) * (T::one() - r);
    let hi = sigma_sq * (T::one() + r) * (T::one() + r);
    (lo, hi)
}

/// Damped scalar fixed point for constant `σ²` and `H = du ⊗ H_Λ`:
///
/// `f = Σ_k w_k / (−z(1 + cσ²f) + (1−c)σ² + λ_k/(1 + cσ²f))`.
pub fn iid_noncentered_f<T: Real>(
    z: Complex<T>,
    c: T,
    sigma_sq: T,
    h_lambda: &[(T, T)],
    opts: &ScalarFixedPointOptions<T>,
) -> Result<Complex<T>> {
    check_z_c(z, c)?;
    check_lambda_law(h_lambda)?;
    opts.validate()?;
    if !(sigma_sq >= T::zero()) {
        return Err(invalid("sigma_sq must be non-negative"));
    }
    let one = Complex::from(T::one());
    let shift = Complex::from((T::one() - c) * sigma_sq);
    let rhs = |f: Complex<T>| {
        let g = one + f * (c * sigma_sq);
        h_lambda.iter().fold(Complex::from(T::zero()), |s, (l, w)| {
            s + (-z * g + shift + g.inv() * *l).inv() * *w
        })
    };
    let mut f = -z.inv();
    for _ in 0..opts.max_iters {
        let next = f * (T::one() - opts.damping) + rhs(f) * opts.damping;
        let step = (next - f).norm();
        f = next;
        if !f.re.is_finite() || !f.im.is_finite() {
            return Err(Error::NumericalFailure("scalar iteration diverged".into()));
        }
        if step <= opts.tol * f.norm().max(T::one()) {
            return Ok(f);
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iters,
        residual: (rhs(f) - f).norm().as_f64(),
        im_z: z.im.as_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct CenteredOptions<T> {
    /// Rule for `u` (and for the inner `x` integral, since `k` lives on it).
    pub u_rule: QuadratureRule<T>,
    /// Rule for the middle `t` integral.
    pub t_rule: QuadratureRule<T>,
    pub scalar: ScalarFixedPointOptions<T>,
}

impl<T: Real> CenteredOptions<T> {
    /// Midpoint rules on `[0, 1]` with the given node counts.
    pub fn midpoint(u_nodes: usize, t_nodes: usize) -> Result<Self> {
        Ok(Self {
            u_rule: QuadratureRule::midpoint_on(T::zero(), T::one(), u_nodes)?,
            t_rule: QuadratureRule::midpoint_on(T::zero(), T::one(), t_nodes)?,
            scalar: ScalarFixedPointOptions::default(),
        })
    }
}

impl<T: Real> Default for CenteredOptions<T> {
    fn default() -> Self {
        Self::midpoint(256, 256).expect("valid default rule")
    }
}

#[derive(Debug, Clone)]
pub struct CenteredSolution<T> {
    pub u_grid: Vec<T>,
    /// `k(u, z)` on `u_grid`.
    pub k: Vec<Complex<T>>,
    /// `f(z) = ∫ k(u, z) du`.
    pub f: Complex<T>,
    pub iterations: usize,
}

/// Solves `k(u) = 1 / (−z + ∫ σ²(u,t) / (1 + c∫σ²(x,t)k(x)dx) dt)` on a grid.
pub fn centered_profile_k<T: Real>(
    z: Complex<T>,
    c: T,
    profile: &VarianceProfile<T>,
    opts: &CenteredOptions<T>,
) -> Result<CenteredSolution<T>> {
    check_z_c(z, c)?;
    opts.scalar.validate()?;
    let us = opts.u_rule.nodes();
    let uw = opts.u_rule.weights();
    let ts = opts.t_rule.nodes();
    let tw = opts.t_rule.weights();
    if us.is_empty() || ts.is_empty() {
        return Err(invalid("centered oracle needs non-empty u and t rules"));
    }
    // sig[a][b] = σ²(u_a, t_b)
    let sig: Vec<Vec<T>> = us
        .iter()
        .map(|u| ts.iter().map(|t| profile.eval(*u, *t)).collect())
        .collect();
    let one = Complex::from(T::one());

    let rhs = |k: &[Complex<T>]| -> Vec<Complex<T>> {
        let inner: Vec<Complex<T>> = (0..ts.len())
            .map(|b| {
                let s = (0..us.len()).fold(Complex::from(T::zero()), |s, a| {
                    s + k[a] * (uw[a] * sig[a][b])
                });
                (one + s * c).inv()
            })
            .collect();
        sig.iter()
            .map(|row| {
                let m = row
                    .iter()
                    .zip(tw)
                    .zip(&inner)
                    .fold(Complex::from(T::zero()), |s, ((s2, w), g)| {
                        s + *g * (*s2 * *w)
                    });
                (m - z).inv()
            })
            .collect()
    };

    let mut k = vec![-z.inv(); us.len()];
    let damp = opts.scalar.damping;
    for iter in 1..=opts.scalar.max_iters {
        let target = rhs(&k);
        let mut step = T::zero();
        let mut scale = T::one();
        for (cur, new) in k.iter_mut().zip(target) {
            let next = *cur * (T::one() - damp) + new * damp;
            step = step.max((next - *cur).norm());
            scale = scale.max(next.norm());
            *cur = next;
        }
        if !step.is_finite() {
            return Err(Error::NumericalFailure(
                "centered iteration diverged".into(),
            ));
        }
        if step <= opts.scalar.tol * scale {
            let f = k
                .iter()
                .zip(uw)
                .fold(Complex::from(T::zero()), |s, (v, w)| s + *v * *w);
            return Ok(CenteredSolution {
                u_grid: us.to_vec(),
                k,
                f,
                iterations: iter,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.scalar.max_iters,
        residual: f64::NAN,
        im_z: z.im.as_f64(),
    })
}

/// Pointwise defect `max_u |k(u) − rhs(k)(u)|` of a centred solution.
pub fn centered_residual<T: Real>(
    z: Complex<T>,
    c: T,
    profile: &VarianceProfile<T>,
    opts: &CenteredOptions<T>,
    sol: &CenteredSolution<T>,
) -> T {
    let us = opts.u_rule.nodes();
    let uw = opts.u_rule.weights();
    let one = Complex::from(T::one());
    let inner: Vec<(T, Complex<T>)> = opts
        .t_rule
        .nodes()
        .iter()
        .zip(opts.t_rule.weights())
        .map(|(t, w)| {
            let s = us
                .iter()
                .zip(uw)
                .zip(&sol.k)
                .fold(Complex::from(T::zero()), |s, ((x, wx), kx)| {
                    s + *kx * (*wx * profile.eval(*x, *t))
                });
            (*w, (one + s * c).inv())
        })
        .collect();
    us.iter()
        .zip(&sol.k)
        .map(|(u, ku)| {
            let m = opts
                .t_rule
                .nodes()
                .iter()
                .zip(&inner)
                .fold(Complex::from(T::zero()), |s, (t, (w, g))| {
                    s + *g * (*w * profile.eval(*u, *t))
                });
            (*ku - (m - z).inv()).norm()
        })
        .fold(T::zero(), T::max)
}
