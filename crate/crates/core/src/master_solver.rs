//! Damped Picard iteration for the coupled kernel system `(π_z, π̃_z)`.
//!
//! For an atom `(u_i, λ_i, w_i)` of `H` and the current pair of kernels,
//!
//! ```text
//! d_i  = 1 + c ∫ σ²(t, c·u_i) π(dt)          d̃_i = 1 + ∫ σ²(u_i, t) π̃(dt)
//! D_i  = −z·d̃_i + λ_i / d_i                  D̃_i = −z·d_i + λ_i / d̃_i
//! κ_j  = −z (1 + c ∫ σ²(t, t_j) π(dt))       t_j ∈ [c, 1] quadrature node
//! ```
//!
//! and one step maps `π_i ← w_i/D_i`, `π̃_i ← c·w_i/D̃_i` (at `(c·u_i, λ_i)`)
//! and `π̃_j ← ω_j/κ_j` (at `(t_j, 0)`).
//!
//! Every built-in profile has an exact finite-rank expansion
//! `σ²(x,y) = Σ_r ρ_r(x) γ_r(y)`, so each profile integral costs
//! `O(rank · points)` rather than `O(points²)`.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::measures::{
    tv_distance, tv_distance_merged, ComplexKernel, JointLimitMeasure, KernelPoint, QuadratureRule,
    VarianceProfile,
};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Stop once `tv(π^p, π^{p−1}) + tv(π̃^p, π̃^{p−1}) ≤ tol`.
    pub tol: T,
    pub max_iters: usize,
    /// Fixed damping in `(0, 1]`; `None` picks 1 inside the contraction
    /// region and 0.5 elsewhere.
    pub damping: Option<T>,
    pub min_denominator: T,
    /// Geometric factor applied to `Im z` between continuation rungs.
    pub continuation_factor: T,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-12).max(T::lit(1000.0) * T::epsilon()),
            max_iters: 10_000,
            damping: None,
            min_denominator: T::lit(1e-14),
            continuation_factor: T::lit(0.7),
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(invalid("solver tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("solver max_iters must be at least 1"));
        }
        if let Some(d) = self.damping {
            if !(d > T::zero() && d <= T::one()) {
                return Err(invalid("damping must lie in (0, 1]"));
            }
        }
        if !(self.min_denominator >= T::zero()) {
            return Err(invalid("min_denominator must be non-negative"));
        }
        if !(self.continuation_factor > T::zero() && self.continuation_factor < T::one()) {
            return Err(invalid("continuation factor must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub z: Complex<T>,
    pub pi: ComplexKernel<T>,
    pub pi_tilde: ComplexKernel<T>,
    /// `f(z) = ∫ dπ_z`, Stieltjes transform of the `ΣΣᵀ` limit.
    pub f: Complex<T>,
    /// `f̃(z) = ∫ dπ̃_z`, Stieltjes transform of the `ΣᵀΣ` limit.
    pub f_tilde: Complex<T>,
    pub residuals: Vec<T>,
    pub iterations: usize,
    pub damping: T,
}

/// Which argument of `σ²` the kernel variable fills in [`profile_integrals`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSide {
    /// `∫ σ²(v, t) kernel(dt, dζ)`
    First,
    /// `∫ σ²(t, v) kernel(dt, dζ)`
    Second,
}

/// Direct evaluation of a profile integral against a kernel.
pub fn profile_integrals<T: Real>(
    profile: &VarianceProfile<T>,
    kernel: &ComplexKernel<T>,
    side: ProfileSide,
    v: T,
) -> Complex<T> {
    kernel.points().iter().zip(kernel.weights()).fold(
        Complex::new(T::zero(), T::zero()),
        |s, (p, w)| {
            let s2 = match side {
                ProfileSide::First => profile.eval(v, p.t),
                ProfileSide::Second => profile.eval(p.t, v),
            };
            s + *w * s2
        },
    )
}

/// Smallest `Im z` at which all four contraction bounds drop to `1/2`.
///
/// With `m₁ = ∫λ dH` the bounds are `2cσ²m₁/y²`, `√2σ²/y`, `3σ²/y` and
/// `2σ²m₁/y²` (for `|Re z| ≤ Im z`).
pub fn contraction_start_height<T: Real>(sigma_max_sq: T, c: T, lambda_m1: T) -> T {
    let two = T::lit(2.0);
    let s = sigma_max_sq;
    (two * (c * s * lambda_m1).sqrt())
        .max(two * T::SQRT_2() * s)
        .max(T::lit(6.0) * s)
        .max(two * (s * lambda_m1).sqrt())
}

/// `θ = max(α, β, α̃, β̃)` bound at height `y`; the Picard residual ratio is at most `2θ`.
pub fn contraction_theta<T: Real>(sigma_max_sq: T, c: T, lambda_m1: T, y: T) -> T {
    let two = T::lit(2.0);
    let s = sigma_max_sq;
    let y2 = y * y;
    (two * c * s * lambda_m1 / y2)
        .max(T::SQRT_2() * s / y)
        .max(T::lit(3.0) * s / y)
        .max(two * s * lambda_m1 / y2)
}

/// The discretised system for one `(c, H, σ², quadrature)`; independent of `z`.
#[derive(Debug, Clone)]
pub struct MasterSystem<T> {
    c: T,
    h: JointLimitMeasure<T>,
    profile: VarianceProfile<T>,
    quad: QuadratureRule<T>,
    pi_points: Vec<KernelPoint<T>>,
    tilde_points: Vec<KernelPoint<T>>,
    rank: usize,
    /// `ρ_r(u_i)`, row-major `M × rank`.
    pi_row: Vec<T>,
    /// `γ_r(t̃_l)` over the iterate layout of `π̃`, row-major `(M + Q) × rank`.
    tilde_col: Vec<T>,
}

struct Denominators<T> {
    tol: T,
}

impl<T: Real> Denominators<T> {
    fn check(&self, which: &'static str, index: usize, v: Complex<T>) -> Result<()> {
        let m = v.norm();
        if m < self.tol || !m.is_finite() {
            return Err(Error::DegenerateDenominator {
                which,
                index,
                modulus: m.as_f64(),
            });
        }
        Ok(())
    }
}

fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

impl<T: Real> MasterSystem<T> {
    pub fn new(
        c: T,
        h: JointLimitMeasure<T>,
        profile: VarianceProfile<T>,
        quad: QuadratureRule<T>,
    ) -> Result<Self> {
        if !(c > T::zero() && c <= T::one()) {
            return Err(invalid(format!("aspect ratio c = {c} must lie in (0, 1]")));
        }
        let (lo, hi) = quad.interval();
        let slack = T::lit(1e-12).max(T::lit(100.0) * T::epsilon());
        let expect_empty = c == T::one();
        if expect_empty != quad.is_empty()
            || (!quad.is_empty() && ((lo - c).abs() > slack || (hi - T::one()).abs() > slack))
        {
            return Err(invalid("quadrature rule must live on [c, 1]"));
        }

        let pi_points: Vec<_> = h
            .atoms()
            .iter()
            .map(|a| KernelPoint {
                t: a.u,
                zeta: a.lambda,
            })
            .collect();
        let tilde_points: Vec<_> = h
            .atoms()
            .iter()
            .map(|a| KernelPoint {
                t: c * a.u,
                zeta: a.lambda,
            })
            .chain(quad.nodes().iter().map(|t| KernelPoint {
                t: *t,
                zeta: T::zero(),
            }))
            .collect();

        let rank = profile.rank();
        let mut pi_row = vec![T::zero(); pi_points.len() * rank];
        for (p, out) in pi_points.iter().zip(pi_row.chunks_mut(rank)) {
            profile.row_factors(p.t, out);
        }
        let mut tilde_col = vec![T::zero(); tilde_points.len() * rank];
        for (p, out) in tilde_points.iter().zip(tilde_col.chunks_mut(rank)) {
            profile.col_factors(p.t, out);
        }

        Ok(Self {
            c,
            h,
            profile,
            quad,
            pi_points,
            tilde_points,
            rank,
            pi_row,
            tilde_col,
        })
    }

    /// System with the default midpoint rule on `[c, 1]`.
    pub fn with_default_quadrature(
        c: T,
        h: JointLimitMeasure<T>,
        profile: VarianceProfile<T>,
    ) -> Result<Self> {
        let quad = QuadratureRule::midpoint(c, crate::measures::DEFAULT_QUADRATURE_NODES)?;
        Self::new(c, h, profile, quad)
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn measure(&self) -> &JointLimitMeasure<T> {
        &self.h
    }

    pub fn profile(&self) -> &VarianceProfile<T> {
        &self.profile
    }

    pub fn quadrature(&self) -> &QuadratureRule<T> {
        &self.quad
    }

    /// Support of `π̃^p` for `p ≥ 1`: `{(c·u_i, λ_i)} ∪ {(t_j, 0)}`.
    pub fn tilde_points(&self) -> &[KernelPoint<T>] {
        &self.tilde_points
    }

    pub fn pi_points(&self) -> &[KernelPoint<T>] {
        &self.pi_points
    }

    pub fn contraction_height(&self) -> T {
        contraction_start_height(self.profile.sigma_max_sq(), self.c, self.h.lambda_moment())
    }

    pub fn contraction_theta(&self, y: T) -> T {
        contraction_theta(
            self.profile.sigma_max_sq(),
            self.c,
            self.h.lambda_moment(),
            y,
        )
    }

    /// Damping used when [`SolverOptions::damping`] is `None`.
    pub fn auto_damping(&self, z: Complex<T>) -> T {
        let s = self.profile.sigma_max_sq();
        if s == T::zero() || (z.im >= self.contraction_height() && z.re.abs() <= z.im) {
            T::one()
        } else {
            T::lit(0.5)
        }
    }

    /// `π⁰ = π̃⁰ = −H/z`, both carried on the atoms of `H`.
    pub fn init_kernels(&self, z: Complex<T>) -> Result<(ComplexKernel<T>, ComplexKernel<T>)> {
        check_upper_half_plane(z)?;
        let minus_inv_z = -z.inv();
        let weights: Vec<_> = self
            .h
            .atoms()
            .iter()
            .map(|a| minus_inv_z * a.weight)
            .collect();
        let pi = ComplexKernel::new(self.pi_points.clone(), weights.clone())?;
        let tilde = ComplexKernel::new(self.pi_points.clone(), weights)?;
        Ok((pi, tilde))
    }

    /// `Σ_k ρ_r(u_k) π_k` for each `r`.
    fn pi_moments(&self, pi: &ComplexKernel<T>) -> Vec<Complex<T>> {
        let mut m = vec![zero::<T>(); self.rank];
        for (w, row) in pi.weights().iter().zip(self.pi_row.chunks(self.rank)) {
            for (acc, r) in m.iter_mut().zip(row) {
                *acc += *w * *r;
            }
        }
        m
    }

    /// `Σ_l γ_r(t_l) π̃_l` for each `r`, on whatever layout the kernel carries.
    fn tilde_moments(&self, tilde: &ComplexKernel<T>) -> Vec<Complex<T>> {
        let mut m = vec![zero::<T>(); self.rank];
        if tilde.points() == self.tilde_points.as_slice() {
            for (w, col) in tilde.weights().iter().zip(self.tilde_col.chunks(self.rank)) {
                for (acc, g) in m.iter_mut().zip(col) {
                    *acc += *w * *g;
                }
            }
        } else {
            let mut col = vec![T::zero(); self.rank];
            for (p, w) in tilde.points().iter().zip(tilde.weights()) {
                self.profile.col_factors(p.t, &mut col);
                for (acc, g) in m.iter_mut().zip(&col) {
                    *acc += *w * *g;
                }
            }
        }
        m
    }

    #[inline]
    fn dot(coeffs: &[T], moments: &[Complex<T>]) -> Complex<T> {
        coeffs
            .iter()
            .zip(moments)
            .fold(zero::<T>(), |s, (a, m)| s + *m * *a)
    }

    /// One undamped application of the right-hand side of the system.
    ///
    /// `pi_prev` must live on the atoms of `H`; `pi_tilde_prev` may live on any
    /// point set (the initial `π̃⁰` sits on `H`, later iterates on
    /// [`tilde_points`](Self::tilde_points)).
    pub fn picard_step(
        &self,
        z: Complex<T>,
        pi_prev: &ComplexKernel<T>,
        pi_tilde_prev: &ComplexKernel<T>,
        min_denominator: T,
    ) -> Result<(ComplexKernel<T>, ComplexKernel<T>)> {
        check_upper_half_plane(z)?;
        if pi_prev.points() != self.pi_points.as_slice() {
            return Err(invalid("pi kernel must live on the atoms of H"));
        }
        let guard = Denominators {
            tol: min_denominator,
        };
        let m = self.pi_moments(pi_prev);
        let n = self.tilde_moments(pi_tilde_prev);
        let one = Complex::new(T::one(), T::zero());
        let c = self.c;
        let atoms = self.h.atoms();
        let n_atoms = atoms.len();

        let mut pi_w = Vec::with_capacity(n_atoms);
        let mut tilde_w = Vec::with_capacity(self.tilde_points.len());
        for (i, a) in atoms.iter().enumerate() {
            let row = &self.pi_row[i * self.rank..(i + 1) * self.rank];
            let col = &self.tilde_col[i * self.rank..(i + 1) * self.rank];
            let d_tilde = one + Self::dot(row, &n);
            let d = one + Self::dot(col, &m) * c;
            guard.check("d", i, d)?;
            guard.check("d_tilde", i, d_tilde)?;
            let big_d = -z * d_tilde + d.inv() * a.lambda;
            let big_d_tilde = -z * d + d_tilde.inv() * a.lambda;
            guard.check("D", i, big_d)?;
            guard.check("D_tilde", i, big_d_tilde)?;
            pi_w.push(big_d.inv() * a.weight);
            tilde_w.push(big_d_tilde.inv() * (c * a.weight));
        }
        for (j, omega) in self.quad.weights().iter().enumerate() {
            let l = n_atoms + j;
            let col = &self.tilde_col[l * self.rank..(l + 1) * self.rank];
            let kappa = -z * (one + Self::dot(col, &m) * c);
            guard.check("kappa", j, kappa)?;
            tilde_w.push(kappa.inv() * *omega);
        }
        Ok((
            ComplexKernel::new(self.pi_points.clone(), pi_w)?,
            ComplexKernel::new(self.tilde_points.clone(), tilde_w)?,
        ))
    }

    /// `tv` size of one undamped step from `(pi, pi_tilde)`.
    pub fn fixed_point_residual(
        &self,
        z: Complex<T>,
        pi: &ComplexKernel<T>,
        pi_tilde: &ComplexKernel<T>,
        min_denominator: T,
    ) -> Result<T> {
        let (p, t) = self.picard_step(z, pi, pi_tilde, min_denominator)?;
        Ok(tv_distance(&p, pi)? + tv_distance_merged(&t, pi_tilde))
    }

    /// Solves at `z` starting from `π⁰ = π̃⁰ = −H/z`.
    pub fn solve_master(&self, z: Complex<T>, opts: &SolverOptions<T>) -> Result<SolveReport<T>> {
        let (pi, tilde) = self.init_kernels(z)?;
        self.solve_from(z, pi, tilde, opts)
    }

    /// Solves at `z` from a caller-supplied starting pair.
    pub fn solve_from(
        &self,
        z: Complex<T>,
        mut pi: ComplexKernel<T>,
        mut tilde: ComplexKernel<T>,
        opts: &SolverOptions<T>,
    ) -> Result<SolveReport<T>> {
        opts.validate()?;
        check_upper_half_plane(z)?;
        let damping = opts.damping.unwrap_or_else(|| self.auto_damping(z));
        let keep = T::one() - damping;
        let mut residuals = Vec::new();

        for iter in 1..=opts.max_iters {
            let (mut next_pi, mut next_tilde) =
                self.picard_step(z, &pi, &tilde, opts.min_denominator)?;
            if damping < T::one() {
                mix(&mut next_pi, &pi, damping, keep);
                if next_tilde.points() == tilde.points() {
                    mix(&mut next_tilde, &tilde, damping, keep);
                }
            }
            let r = tv_distance(&next_pi, &pi)? + tv_distance_merged(&next_tilde, &tilde);
            if !r.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "non-finite residual at iteration {iter}, z = {z}"
                )));
            }
            residuals.push(r);
            pi = next_pi;
            tilde = next_tilde;
            if r <= opts.tol {
                return self.finish(z, pi, tilde, residuals, iter, damping);
            }
        }
        Err(Error::NoConvergence {
            iterations: opts.max_iters,
            residual: residuals.last().map_or(f64::NAN, |r| r.as_f64()),
            im_z: z.im.as_f64(),
        })
    }

    fn finish(
        &self,
        z: Complex<T>,
        pi: ComplexKernel<T>,
        tilde: ComplexKernel<T>,
        residuals: Vec<T>,
        iterations: usize,
        damping: T,
    ) -> Result<SolveReport<T>> {
        let f = pi.total_mass();
        let f_tilde = tilde.total_mass();
        let slack = T::lit(1e3) * T::epsilon() * (T::one() + z.im.recip());
        if !pi.satisfies_stieltjes_bounds(z, T::one(), slack)
            || !tilde.satisfies_stieltjes_bounds(z, T::one(), slack)
        {
            return Err(Error::NumericalFailure(format!(
                "solution at z = {z} violates Stieltjes kernel bounds (f = {f}, f~ = {f_tilde})"
            )));
        }
        Ok(SolveReport {
            z,
            pi,
            pi_tilde: tilde,
            f,
            f_tilde,
            residuals,
            iterations,
            damping,
        })
    }

    /// Rung heights from `max(contraction height, Im z)` down to `Im z`.
    pub fn continuation_heights(&self, z: Complex<T>, factor: T) -> Vec<T> {
        let target = z.im;
        let mut y = self.contraction_height().max(target);
        let mut out = vec![y];
        while y > target {
            y = (y * factor).max(target);
            out.push(y);
        }
        out
    }

    /// Walks `Im z` down geometrically from the contraction height to the
    /// target, warm-starting every rung from the previous solution.
    pub fn solve_continued(
        &self,
        z: Complex<T>,
        opts: &SolverOptions<T>,
    ) -> Result<SolveReport<T>> {
        opts.validate()?;
        check_upper_half_plane(z)?;
        let heights = self.continuation_heights(z, opts.continuation_factor);
        let mut report: Option<SolveReport<T>> = None;
        for y in heights {
            let zk = Complex::new(z.re, y);
            let next = match report.take() {
                None => self.solve_master(zk, opts)?,
                Some(prev) => self.solve_from(zk, prev.pi, prev.pi_tilde, opts)?,
            };
            report = Some(next);
        }
        Ok(report.expect("at least one rung"))
    }

    /// [`solve_continued`](Self::solve_continued) for many targets, in parallel.
    /// Results keep the order of `targets`.
    pub fn solve_with_continuation(
        &self,
        targets: &[Complex<T>],
        opts: &SolverOptions<T>,
    ) -> Vec<(Complex<T>, Result<SolveReport<T>>)> {
        targets
            .par_iter()
            .map(|z| (*z, self.solve_continued(*z, opts)))
            .collect()
    }

    /// Sequential evaluator that warm-starts each solve from the previous one.
    pub fn warm_start(&self, opts: SolverOptions<T>) -> WarmStart<'_, T> {
        WarmStart {
            system: self,
            opts,
            state: None,
        }
    }
}

fn mix<T: Real>(next: &mut ComplexKernel<T>, prev: &ComplexKernel<T>, damping: T, keep: T) {
    for (n, p) in next.weights_mut().iter_mut().zip(prev.weights()) {
        *n = *n * damping + *p * keep;
    }
}

fn check_upper_half_plane<T: Real>(z: Complex<T>) -> Result<()> {
    if !(z.im > T::zero()) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(invalid(format!(
            "z = {z} must lie in the open upper half plane"
        )));
    }
    Ok(())
}

/// Evaluates `f(z)` along a path (e.g. `x + iε` over an increasing grid),
/// warm-starting from the previous kernels and falling back to continuation
/// from the contraction height when the warm start fails.
pub struct WarmStart<'a, T> {
    system: &'a MasterSystem<T>,
    opts: SolverOptions<T>,
    state: Option<(ComplexKernel<T>, ComplexKernel<T>)>,
}

impl<T: Real> WarmStart<'_, T> {
    pub fn solve(&mut self, z: Complex<T>) -> Result<SolveReport<T>> {
        let warm = match self.state.take() {
            Some((pi, tilde)) => self.system.solve_from(z, pi, tilde, &self.opts),
            None => self.system.solve_continued(z, &self.opts),
        };
        let report = match warm {
            Ok(r) => r,
            Err(Error::NoConvergence { .. }) | Err(Error::DegenerateDenominator { .. }) => {
                self.system.solve_continued(z, &self.opts)?
            }
            Err(e) => return Err(e),
        };
        self.state = Some((report.pi.clone(), report.pi_tilde.clone()));
        Ok(report)
    }

    pub fn f(&mut self, z: Complex<T>) -> Result<Complex<T>> {
        self.solve(z).map(|r| r.f)
    }
}
