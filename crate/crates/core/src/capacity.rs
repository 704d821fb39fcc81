//! Channel capacity `C_n = (1/n) Σ log(1 + μ_k/s²)` and its limit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rmt_simulator::SpectrumSample;
use crate::spectra::{DensityCurve, SpectrumSide};
use crate::Real;

/// Additive noise variance `s²`, kept apart from the variance profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NoiseLevel(f64);

impl NoiseLevel {
    pub fn new(s_sq: f64) -> Result<Self> {
        if s_sq > 0.0 && s_sq.is_finite() {
            Ok(Self(s_sq))
        } else {
            Err(invalid(format!(
                "noise variance must be positive, got {s_sq}"
            )))
        }
    }

    pub fn s_sq(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for NoiseLevel {
    type Error = crate::Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<NoiseLevel> for f64 {
    fn from(n: NoiseLevel) -> f64 {
        n.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Nats,
    Bits,
}

impl LogBase {
    fn convert(self, nats: f64) -> f64 {
        match self {
            LogBase::Nats => nats,
            LogBase::Bits => nats / std::f64::consts::LN_2,
        }
    }
}

pub fn capacity_from_spectrum(sample: &SpectrumSample, noise: NoiseLevel, base: LogBase) -> f64 {
    let s = noise.s_sq();
    let total: f64 = sample.eigenvalues.iter().map(|m| (m / s).ln_1p()).sum();
    base.convert(total / sample.cols.max(1) as f64)
}

/// `c·∫ log(1 + x/s²) dℙ(x)` by the trapezoid rule on the curve's grid.
///
/// The atom at zero contributes nothing. Curves of the co-Gram law are
/// rejected since the normalisation assumes `ℙ`.
pub fn capacity_from_limit<T: Real>(
    curve: &DensityCurve<T>,
    c: f64,
    noise: NoiseLevel,
    base: LogBase,
) -> Result<f64> {
    if curve.side != SpectrumSide::Gram {
        return Err(invalid("capacity is defined on the Gram-side law"));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(invalid(format!("ratio c must lie in (0, 1], got {c}")));
    }
    if curve.x_grid.len() != curve.values.len() {
        return Err(invalid("density curve grid and values differ in length"));
    }
    let s = noise.s_sq();
    let g = |k: usize| {
        let x = curve.x_grid[k].as_f64();
        (x.max(0.0) / s).ln_1p() * curve.values[k].as_f64()
    };
    let integral: f64 = (1..curve.x_grid.len())
        .map(|k| {
            let h = curve.x_grid[k].as_f64() - curve.x_grid[k - 1].as_f64();
            0.5 * h * (g(k - 1) + g(k))
        })
        .sum();
    Ok(base.convert(c * integral))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::uniform_grid;
    use std::f64::consts::LN_2;

    fn sample(ev: Vec<f64>, rows: usize, cols: usize) -> SpectrumSample {
        SpectrumSample {
            eigenvalues: ev,
            seed: None,
            rows,
            cols,
        }
    }

    fn noise(s: f64) -> NoiseLevel {
        NoiseLevel::new(s).unwrap()
    }

    #[test]
    fn spectrum_examples() {
        let one = sample(vec![1.0], 1, 1);
        assert!((capacity_from_spectrum(&one, noise(1.0), LogBase::Nats) - LN_2).abs() < 1e-15);
        assert!((capacity_from_spectrum(&one, noise(1.0), LogBase::Bits) - 1.0).abs() < 1e-15);
        let zeros = sample(vec![0.0; 5], 5, 8);
        assert_eq!(
            capacity_from_spectrum(&zeros, noise(1.0), LogBase::Nats),
            0.0
        );
    }

    #[test]
    fn noise_must_be_positive() {
        assert!(NoiseLevel::new(0.0).is_err());
        assert!(NoiseLevel::new(-1.0).is_err());
        assert!(NoiseLevel::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<NoiseLevel>("0.0").is_err());
    }

    #[test]
    fn spectrum_monotone_and_scale_invariant() {
        let s = sample(vec![0.1, 0.7, 2.5, 4.0], 4, 6);
        let caps: Vec<f64> = [0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|v| capacity_from_spectrum(&s, noise(*v), LogBase::Nats))
            .collect();
        assert!(caps.windows(2).all(|w| w[1] < w[0]));
        for a in [0.25, 3.0, 100.0] {
            let scaled = sample(s.eigenvalues.iter().map(|m| m * a).collect(), 4, 6);
            let lhs = capacity_from_spectrum(&scaled, noise(1.5 * a), LogBase::Nats);
            let rhs = capacity_from_spectrum(&s, noise(1.5), LogBase::Nats);
            assert!((lhs - rhs).abs() <= 1e-14 * rhs);
        }
    }

    fn narrow_bump_at_one(width: f64) -> DensityCurve<f64> {
        let xs = uniform_grid(0.0, 2.0, 40_001);
        let values = xs
            .iter()
            .map(|x: &f64| ((width - (x - 1.0).abs()) / (width * width)).max(0.0))
            .collect();
        DensityCurve {
            x_grid: xs,
            values,
            epsilon: width,
            atom_at_zero: 0.0,
            side: SpectrumSide::Gram,
        }
    }

    #[test]
    fn limit_of_point_mass_at_one() {
        let curve = narrow_bump_at_one(1e-3);
        let v = capacity_from_limit(&curve, 1.0, noise(1.0), LogBase::Nats).unwrap();
        assert!((v - LN_2).abs() < 1e-6, "{v}");
    }

    #[test]
    fn limit_monotone_and_vanishing() {
        let curve = narrow_bump_at_one(0.3);
        let caps: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 1e12]
            .iter()
            .map(|s| capacity_from_limit(&curve, 0.5, noise(*s), LogBase::Nats).unwrap())
            .collect();
        assert!(caps.windows(2).all(|w| w[1] < w[0]));
        assert!(caps[4] < 1e-12);
    }

    #[test]
    fn limit_rejects_cogram_curves() {
        let curve = narrow_bump_at_one(0.1).dual(0.5).unwrap();
        assert!(capacity_from_limit(&curve, 0.5, noise(1.0), LogBase::Nats).is_err());
    }
}
