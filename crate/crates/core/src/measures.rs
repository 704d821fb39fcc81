//! Variance profiles, the joint limit measure `H`, quadrature on `[c, 1]`
//! and complex point kernels with their total-variation distance.

use std::cmp::Ordering;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::Real;

/// Default node count of the midpoint rule carrying the Lebesgue part of `π̃`.
pub const DEFAULT_QUADRATURE_NODES: usize = 256;

/// The closed set of built-in variance profiles `σ²(x, y)` on `[0,1]²`.
///
/// `x` indexes rows (`i/N`), `y` indexes columns (`j/n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind<T> {
    /// `σ²(x, y) = value`.
    Constant { value: T },
    /// `σ²(x, y) = g(x)·h(y)` with `g`, `h` piecewise linear on uniform grids over `[0,1]`.
    Separable { row: Vec<T>, col: Vec<T> },
    /// Bilinear interpolation of `values[a][b] = σ²(a/Rx, b/Ry)`.
    BilinearGrid { values: Vec<Vec<T>> },
    /// Constant on rectangles cut by interior breakpoints. Not continuous.
    PiecewiseConstantBlocks {
        row_breaks: Vec<T>,
        col_breaks: Vec<T>,
        values: Vec<Vec<T>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile<T> {
    kind: ProfileKind<T>,
    sigma_max_sq: T,
}

fn check_values<T: Real>(vals: &[T], what: &str) -> Result<()> {
    if vals.is_empty() {
        return Err(invalid(format!("{what}: empty value list")));
    }
    if vals.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(invalid(format!(
            "{what}: values must be finite and non-negative"
        )));
    }
    Ok(())
}

fn check_breaks<T: Real>(breaks: &[T], what: &str) -> Result<()> {
    let inside = breaks.iter().all(|b| *b > T::zero() && *b < T::one());
    let increasing = breaks.windows(2).all(|w| w[0] < w[1]);
    if !inside || !increasing {
        return Err(invalid(format!(
            "{what}: breakpoints must be strictly increasing inside (0, 1)"
        )));
    }
    Ok(())
}

fn max_of<T: Real>(vals: impl IntoIterator<Item = T>) -> T {
    vals.into_iter().fold(T::zero(), T::max)
}

/// Cell index and fractional offset of `x ∈ [0,1]` on a grid with `cells` cells.
#[inline]
fn locate<T: Real>(x: T, cells: usize) -> (usize, T) {
    if cells == 0 {
        return (0, T::zero());
    }
    let pos = x.max(T::zero()).min(T::one()) * T::from_usize_lossy(cells);
    let i = pos.floor().to_usize().unwrap_or(0).min(cells - 1);
    (i, pos - T::from_usize_lossy(i))
}

#[inline]
fn piecewise_linear<T: Real>(vals: &[T], x: T) -> T {
    let cells = vals.len() - 1;
    let (i, s) = locate(x, cells);
    let next = (i + 1).min(cells);
    (T::one() - s) * vals[i] + s * vals[next]
}

#[inline]
fn block_index<T: Real>(breaks: &[T], x: T) -> usize {
    breaks.iter().take_while(|b| **b <= x).count()
}

impl<T: Real> VarianceProfile<T> {
    pub fn new(kind: ProfileKind<T>) -> Result<Self> {
        let sigma_max_sq = match &kind {
            ProfileKind::Constant { value } => {
                check_values(std::slice::from_ref(value), "constant profile")?;
                *value
            }
            ProfileKind::Separable { row, col } => {
                check_values(row, "separable profile row factor")?;
                check_values(col, "separable profile column factor")?;
                max_of(row.iter().copied()) * max_of(col.iter().copied())
            }
            ProfileKind::BilinearGrid { values } => {
                let width = values.first().map_or(0, Vec::len);
                if width == 0 || values.iter().any(|r| r.len() != width) {
                    return Err(invalid("bilinear grid must be a non-empty rectangle"));
                }
                for r in values {
                    check_values(r, "bilinear grid")?;
                }
                max_of(values.iter().flatten().copied())
            }
            ProfileKind::PiecewiseConstantBlocks {
                row_breaks,
                col_breaks,
                values,
            } => {
                check_breaks(row_breaks, "block row breaks")?;
                check_breaks(col_breaks, "block column breaks")?;
                if values.len() != row_breaks.len() + 1
                    || values.iter().any(|r| r.len() != col_breaks.len() + 1)
                {
                    return Err(invalid(
                        "block values must be (row_breaks+1) x (col_breaks+1)",
                    ));
                }
                for r in values {
                    check_values(r, "block values")?;
                }
                max_of(values.iter().flatten().copied())
            }
        };
        Ok(Self { kind, sigma_max_sq })
    }

    pub fn constant(value: T) -> Result<Self> {
        Self::new(ProfileKind::Constant { value })
    }

    pub fn separable(row: Vec<T>, col: Vec<T>) -> Result<Self> {
        Self::new(ProfileKind::Separable { row, col })
    }

    pub fn bilinear(values: Vec<Vec<T>>) -> Result<Self> {
        Self::new(ProfileKind::BilinearGrid { values })
    }

    pub fn blocks(row_breaks: Vec<T>, col_breaks: Vec<T>, values: Vec<Vec<T>>) -> Result<Self> {
        Self::new(ProfileKind::PiecewiseConstantBlocks {
            row_breaks,
            col_breaks,
            values,
        })
    }

    pub fn kind(&self) -> &ProfileKind<T> {
        &self.kind
    }

    /// Upper bound of `σ²` over the unit square.
    pub fn sigma_max_sq(&self) -> T {
        self.sigma_max_sq
    }

    /// `σ²(x, y)`; arguments are clamped into `[0, 1]`.
    pub fn eval(&self, x: T, y: T) -> T {
        match &self.kind {
            ProfileKind::Constant { value } => *value,
            ProfileKind::Separable { row, col } => {
                piecewise_linear(row, x) * piecewise_linear(col, y)
            }
            ProfileKind::BilinearGrid { values } => {
                let rx = values.len() - 1;
                let ry = values[0].len() - 1;
                let (i, s) = locate(x, rx);
                let (j, t) = locate(y, ry);
                let (i1, j1) = ((i + 1).min(rx), (j + 1).min(ry));
                let one = T::one();
                (one - s) * (one - t) * values[i][j]
                    + s * (one - t) * values[i1][j]
                    + (one - s) * t * values[i][j1]
                    + s * t * values[i1][j1]
            }
            ProfileKind::PiecewiseConstantBlocks {
                row_breaks,
                col_breaks,
                values,
            } => values[block_index(row_breaks, x)][block_index(col_breaks, y)],
        }
    }

    /// The transposed profile `(x, y) ↦ σ²(y, x)`.
    pub fn transposed(&self) -> Self {
        let kind = match &self.kind {
            ProfileKind::Constant { value } => ProfileKind::Constant { value: *value },
            ProfileKind::Separable { row, col } => ProfileKind::Separable {
                row: col.clone(),
                col: row.clone(),
            },
            ProfileKind::BilinearGrid { values } => ProfileKind::BilinearGrid {
                values: transpose(values),
            },
            ProfileKind::PiecewiseConstantBlocks {
                row_breaks,
                col_breaks,
                values,
            } => ProfileKind::PiecewiseConstantBlocks {
                row_breaks: col_breaks.clone(),
                col_breaks: row_breaks.clone(),
                values: transpose(values),
            },
        };
        Self {
            kind,
            sigma_max_sq: self.sigma_max_sq,
        }
    }

    /// The profile `(x, y) ↦ a·σ²(x, y)` for `a ≥ 0`.
    pub fn scaled(&self, a: T) -> Result<Self> {
        if !(a >= T::zero()) || !a.is_finite() {
            return Err(invalid(format!(
                "profile scale {a} must be finite and >= 0"
            )));
        }
        let scale = |v: &[T]| v.iter().map(|x| *x * a).collect::<Vec<T>>();
        let kind = match &self.kind {
            ProfileKind::Constant { value } => ProfileKind::Constant { value: *value * a },
            ProfileKind::Separable { row, col } => ProfileKind::Separable {
                row: scale(row),
                col: col.clone(),
            },
            ProfileKind::BilinearGrid { values } => ProfileKind::BilinearGrid {
                values: values.iter().map(|r| scale(r)).collect(),
            },
            ProfileKind::PiecewiseConstantBlocks {
                row_breaks,
                col_breaks,
                values,
            } => ProfileKind::PiecewiseConstantBlocks {
                row_breaks: row_breaks.clone(),
                col_breaks: col_breaks.clone(),
                values: values.iter().map(|r| scale(r)).collect(),
            },
        };
        Self::new(kind)
    }

    /// Number of terms `r` in the exact expansion `σ²(x,y) = Σ_r ρ_r(x)·γ_r(y)`.
    pub fn rank(&self) -> usize {
        match &self.kind {
            ProfileKind::Constant { .. } | ProfileKind::Separable { .. } => 1,
            ProfileKind::BilinearGrid { values } => values.len(),
            ProfileKind::PiecewiseConstantBlocks { row_breaks, .. } => row_breaks.len() + 1,
        }
    }

    /// Writes the row factors `ρ_r(x)` of the finite-rank expansion into `out`.
    pub fn row_factors(&self, x: T, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.rank());
        match &self.kind {
            ProfileKind::Constant { value } => out[0] = *value,
            ProfileKind::Separable { row, .. } => out[0] = piecewise_linear(row, x),
            ProfileKind::BilinearGrid { values } => {
                let rx = values.len() - 1;
                out.iter_mut().for_each(|o| *o = T::zero());
                let (i, s) = locate(x, rx);
                out[i] = T::one() - s;
                if i < rx {
                    out[i + 1] = s;
                }
            }
            ProfileKind::PiecewiseConstantBlocks { row_breaks, .. } => {
                out.iter_mut().for_each(|o| *o = T::zero());
                out[block_index(row_breaks, x)] = T::one();
            }
        }
    }

    /// Writes the column factors `γ_r(y)` of the finite-rank expansion into `out`.
    pub fn col_factors(&self, y: T, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.rank());
        match &self.kind {
            ProfileKind::Constant { .. } => out[0] = T::one(),
            ProfileKind::Separable { col, .. } => out[0] = piecewise_linear(col, y),
            ProfileKind::BilinearGrid { values } => {
                let ry = values[0].len() - 1;
                let (j, t) = locate(y, ry);
                let j1 = (j + 1).min(ry);
                for (o, row) in out.iter_mut().zip(values) {
                    *o = (T::one() - t) * row[j] + t * row[j1];
                }
            }
            ProfileKind::PiecewiseConstantBlocks {
                col_breaks, values, ..
            } => {
                let b = block_index(col_breaks, y);
                for (o, row) in out.iter_mut().zip(values) {
                    *o = row[b];
                }
            }
        }
    }
}

fn transpose<T: Copy>(m: &[Vec<T>]) -> Vec<Vec<T>> {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| m.iter().map(|r| r[j]).collect())
        .collect()
}

/// One atom `(u, λ, w)` of `H`; `λ` is the squared diagonal entry `Λ_ii²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom<T> {
    pub u: T,
    pub lambda: T,
    pub weight: T,
}

/// Finite discrete probability measure on `[0,1] × ℝ₊`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLimitMeasure<T> {
    atoms: Vec<Atom<T>>,
}

pub(crate) fn mass_tolerance<T: Real>(n: usize) -> T {
    T::lit(1e-12).max(T::lit(8.0) * T::from_usize_lossy(n.max(1)) * T::epsilon())
}

impl<T: Real> JointLimitMeasure<T> {
    pub fn new(atoms: Vec<Atom<T>>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(invalid("joint measure needs at least one atom"));
        }
        for (k, a) in atoms.iter().enumerate() {
            if !(a.u >= T::zero() && a.u <= T::one()) {
                return Err(invalid(format!("atom {k}: u must lie in [0, 1]")));
            }
            if !(a.lambda.is_finite() && a.lambda >= T::zero()) {
                return Err(invalid(format!("atom {k}: lambda must be finite and >= 0")));
            }
            if !(a.weight.is_finite() && a.weight > T::zero()) {
                return Err(invalid(format!("atom {k}: weight must be positive")));
            }
        }
        let total = atoms.iter().fold(T::zero(), |s, a| s + a.weight);
        if (total - T::one()).abs() > mass_tolerance::<T>(atoms.len()) {
            return Err(invalid(format!("atom weights sum to {total}, expected 1")));
        }
        Ok(Self { atoms })
    }

    /// `(1/N) Σ δ_(i/N, Λ_ii²)` for a diagonal `Λ_11..Λ_NN`.
    pub fn from_diagonal(lambda_diag: &[T]) -> Result<Self> {
        if lambda_diag.is_empty() {
            return Err(invalid("empty diagonal"));
        }
        if lambda_diag.iter().any(|l| !l.is_finite()) {
            return Err(invalid("diagonal entries must be finite"));
        }
        let n = T::from_usize_lossy(lambda_diag.len());
        let w = T::one() / n;
        let atoms = lambda_diag
            .iter()
            .enumerate()
            .map(|(i, l)| Atom {
                u: T::from_usize_lossy(i + 1) / n,
                lambda: *l * *l,
                weight: w,
            })
            .collect();
        Self::new(atoms)
    }

    /// Discretisation of `du ⊗ H_Λ` with atoms at `u = i/M`.
    ///
    /// λ-values are dealt by largest running deficit, so every prefix of the
    /// sequence (and in particular the whole grid) keeps each λ-marginal
    /// within `1/M` of its target weight.
    pub fn product(h_lambda: &[(T, T)], m: usize) -> Result<Self> {
        Self::product_with(h_lambda, m, T::zero())
    }

    /// Same as [`product`](Self::product) with atoms at the midpoints `(i − ½)/M`.
    pub fn product_midpoint(h_lambda: &[(T, T)], m: usize) -> Result<Self> {
        Self::product_with(h_lambda, m, T::lit(0.5))
    }

    fn product_with(h_lambda: &[(T, T)], m: usize, shift: T) -> Result<Self> {
        check_lambda_law(h_lambda)?;
        if m < h_lambda.len() {
            return Err(invalid(
                "grid count must be at least the number of lambda values",
            ));
        }
        let mf = T::from_usize_lossy(m);
        let mut counts = vec![0usize; h_lambda.len()];
        let mut atoms = Vec::with_capacity(m);
        for i in 1..=m {
            let fi = T::from_usize_lossy(i);
            let mut best = 0;
            let mut best_deficit = T::neg_infinity();
            for (k, (_, w)) in h_lambda.iter().enumerate() {
                let deficit = *w * fi - T::from_usize_lossy(counts[k]);
                if deficit > best_deficit {
                    best = k;
                    best_deficit = deficit;
                }
            }
            counts[best] += 1;
            atoms.push(Atom {
                u: (fi - shift) / mf,
                lambda: h_lambda[best].0,
                weight: T::one() / mf,
            });
        }
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `∫ λ H(du, dλ)`.
    pub fn lambda_moment(&self) -> T {
        self.atoms
            .iter()
            .fold(T::zero(), |s, a| s + a.weight * a.lambda)
    }

    pub fn max_lambda(&self) -> T {
        max_of(self.atoms.iter().map(|a| a.lambda))
    }

    /// Total weight carried by each distinct λ, sorted by λ.
    pub fn lambda_marginal(&self) -> Vec<(T, T)> {
        let mut out: Vec<(T, T)> = Vec::new();
        for a in &self.atoms {
            match out.iter_mut().find(|(l, _)| *l == a.lambda) {
                Some(entry) => entry.1 += a.weight,
                None => out.push((a.lambda, a.weight)),
            }
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        out
    }
}

/// Validates a discrete law `(λ_k, w_k)` on `ℝ₊`.
pub(crate) fn check_lambda_law<T: Real>(h_lambda: &[(T, T)]) -> Result<()> {
    if h_lambda.is_empty() {
        return Err(invalid("lambda law is empty"));
    }
    if h_lambda
        .iter()
        .any(|(l, w)| !l.is_finite() || *l < T::zero() || !w.is_finite() || *w <= T::zero())
    {
        return Err(invalid(
            "lambda law needs finite lambda >= 0 and positive weights",
        ));
    }
    let total = h_lambda.iter().fold(T::zero(), |s, (_, w)| s + *w);
    if (total - T::one()).abs() > mass_tolerance::<T>(h_lambda.len()) {
        return Err(invalid(format!(
            "lambda weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Positive-weight rule on an interval, used for the Lebesgue part `1_[c,1](u) du`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    lower: T,
    upper: T,
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    /// Composite midpoint rule with `n` nodes on `[c, 1]`; empty when `c = 1`.
    pub fn midpoint(c: T, n: usize) -> Result<Self> {
        Self::midpoint_on(c, T::one(), n)
    }

    pub fn midpoint_on(lower: T, upper: T, n: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower <= upper) {
            return Err(invalid("quadrature interval must satisfy lower <= upper"));
        }
        if lower == upper {
            return Ok(Self {
                lower,
                upper,
                nodes: Vec::new(),
                weights: Vec::new(),
            });
        }
        if n == 0 {
            return Err(invalid(
                "quadrature needs at least one node on a non-empty interval",
            ));
        }
        let h = (upper - lower) / T::from_usize_lossy(n);
        let nodes = (0..n)
            .map(|j| lower + (T::from_usize_lossy(j) + T::lit(0.5)) * h)
            .collect();
        Ok(Self {
            lower,
            upper,
            nodes,
            weights: vec![h; n],
        })
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn interval(&self) -> (T, T) {
        (self.lower, self.upper)
    }

    pub fn total_weight(&self) -> T {
        self.weights.iter().fold(T::zero(), |s, w| s + *w)
    }

    pub fn integrate(&self, mut f: impl FnMut(T) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |s, (x, w)| s + *w * f(*x))
    }
}

/// Support point `(t, ζ)` of a kernel measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPoint<T> {
    pub t: T,
    pub zeta: T,
}

/// Complex weighted point measure: `π_z` or `π̃_z` at one fixed `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexKernel<T> {
    points: Vec<KernelPoint<T>>,
    weights: Vec<Complex<T>>,
}

impl<T: Real> ComplexKernel<T> {
    pub fn new(points: Vec<KernelPoint<T>>, weights: Vec<Complex<T>>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(invalid(format!(
                "kernel has {} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[KernelPoint<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[Complex<T>] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `∫ dπ`: the sum of the weights.
    pub fn total_mass(&self) -> Complex<T> {
        self.weights
            .iter()
            .fold(Complex::new(T::zero(), T::zero()), |s, w| s + *w)
    }

    /// `Σ |w_k|`: the total-variation norm.
    pub fn tv_norm(&self) -> T {
        self.weights.iter().fold(T::zero(), |s, w| s + w.norm())
    }

    /// Checks `|∫dπ| ≤ mass/Im z`, `Im ∫dπ ≥ 0` and `Im(z∫dπ) ≥ 0` up to `slack`.
    pub fn satisfies_stieltjes_bounds(&self, z: Complex<T>, mass: T, slack: T) -> bool {
        let f = self.total_mass();
        f.norm() <= mass / z.im + slack && f.im >= -slack && (z * f).im >= -slack
    }
}

/// `Σ |a_k − b_k|` for kernels on one shared point sequence.
pub fn tv_distance<T: Real>(a: &ComplexKernel<T>, b: &ComplexKernel<T>) -> Result<T> {
    if a.points != b.points {
        return Err(invalid("tv_distance requires identical point sequences"));
    }
    Ok(a.weights
        .iter()
        .zip(&b.weights)
        .fold(T::zero(), |s, (x, y)| s + (*x - *y).norm()))
}

fn cmp_points<T: Real>(p: &KernelPoint<T>, q: &KernelPoint<T>) -> Ordering {
    p.t.partial_cmp(&q.t)
        .unwrap_or(Ordering::Equal)
        .then(p.zeta.partial_cmp(&q.zeta).unwrap_or(Ordering::Equal))
}

/// Total variation of `a − b` for kernels on arbitrary point sets; equal
/// points are merged before taking moduli.
pub fn tv_distance_merged<T: Real>(a: &ComplexKernel<T>, b: &ComplexKernel<T>) -> T {
    if a.points == b.points {
        return tv_distance(a, b).unwrap_or_else(|_| unreachable!());
    }
    let mut entries: Vec<(KernelPoint<T>, Complex<T>)> = a
        .points
        .iter()
        .copied()
        .zip(a.weights.iter().copied())
        .chain(b.points.iter().copied().zip(b.weights.iter().map(|w| -*w)))
        .collect();
    entries.sort_by(|x, y| cmp_points(&x.0, &y.0));
    let mut total = T::zero();
    let mut iter = entries.into_iter().peekable();
    while let Some((p, mut w)) = iter.next() {
        while let Some((q, v)) = iter.peek() {
            if *q == p {
                w += *v;
                iter.next();
            } else {
                break;
            }
        }
        total += w.norm();
    }
    total
}
