//! JSON run configuration, validation and normalisation to `c ≤ 1`.

use std::path::Path;

use gram_profile::capacity::NoiseLevel;
use gram_profile::master_solver::{MasterSystem, SolverOptions};
use gram_profile::measures::{
    Atom, JointLimitMeasure, ProfileKind, QuadratureRule, VarianceProfile,
};
use gram_profile::rmt_simulator::{EnsembleSpec, EntryLaw};
use gram_profile::spectra::SpectrumSide;
use gram_profile::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `N/n`. Derived from the ensemble when omitted.
    pub c: Option<f64>,
    /// Permits `c > 1` (or `N > n`) by solving and sampling the transposed model.
    #[serde(default)]
    pub allow_transpose: bool,
    pub profile: ProfileKind<f64>,
    pub h: Option<HSpec>,
    pub quadrature_nodes: Option<usize>,
    /// Evaluation points `[re, im]` for `solve`.
    #[serde(default)]
    pub z_grid: Vec<[f64; 2]>,
    #[serde(default)]
    pub density: DensitySpec,
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub solver: SolverSpec,
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum HSpec {
    /// Explicit diagonal `Λ_11, …`; `H = (1/N) Σ δ_(i/N, Λ_ii²)`.
    Diagonal {
        lambda: Vec<f64>,
    },
    /// `du ⊗ H_Λ` with `H_Λ = Σ w_k δ_{λ_k}` (λ values are `Λ²`).
    Product {
        lambda_law: Vec<(f64, f64)>,
        #[serde(default = "default_m")]
        m: usize,
        #[serde(default)]
        midpoint: bool,
    },
    Atoms {
        atoms: Vec<Atom<f64>>,
    },
}

fn default_m() -> usize {
    256
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub points: Option<usize>,
    pub epsilon: Option<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub side: Option<SideSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideSpec {
    Gram,
    Cogram,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub entry_law: EntryLaw,
    pub rows: usize,
    pub cols: usize,
    /// Diagonal of `Λ`, length `min(rows, cols)`.
    pub lambda_diag: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub damping: Option<f64>,
    pub min_denominator: Option<f64>,
    pub continuation_factor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub s_sq: f64,
}

/// Parsed file: typed config plus the raw JSON used for echo and hashing.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: Value,
}

fn field(name: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("field `{name}`: {msg}"))
}

pub fn load(path: &Path) -> Result<LoadedConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| {
        Failure::Config(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
        Failure::Config(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    Ok(LoadedConfig { config, raw })
}

/// SHA-256 of the canonical (key-sorted, compact) JSON with `seeds` removed,
/// so that runs over different seed sets share one hash.
pub fn config_hash(raw: &Value) -> String {
    let mut v = raw.clone();
    if let Value::Object(map) = &mut v {
        map.remove("seeds");
    }
    let canonical = serde_json::to_string(&v).expect("JSON value serialises");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything a command needs, expressed in the solved frame (`c ≤ 1`).
pub struct Prepared {
    pub c: f64,
    /// `N/n` as configured, before any transposition.
    pub c_input: f64,
    pub transposed: bool,
    pub system: MasterSystem<f64>,
    pub solver: SolverOptions<f64>,
    pub z_grid: Vec<Complex64>,
    pub density: DensitySettings,
    pub ensemble: Option<PreparedEnsemble>,
    pub noise: Option<NoiseLevel>,
}

pub struct DensitySettings {
    pub points: usize,
    pub epsilon: f64,
    pub range: Option<(f64, f64)>,
    pub side: SpectrumSide,
}

pub struct PreparedEnsemble {
    pub spec: EnsembleSpec,
    pub profile: VarianceProfile<f64>,
    pub lambda_diag: Vec<f64>,
}

impl Prepared {
    pub fn convention(&self) -> String {
        if self.transposed {
            format!(
                "transposed: configured N/n = {} > 1, so results describe the transposed model \
                 (rows and columns swapped, profile (N/n)·σ²(y,x), c = {})",
                self.c_input, self.c
            )
        } else {
            "direct".to_string()
        }
    }
}

fn solver_options(s: &SolverSpec) -> Result<SolverOptions<f64>, Failure> {
    let d = SolverOptions::<f64>::default();
    let opts = SolverOptions {
        tol: s.tol.unwrap_or(d.tol),
        max_iters: s.max_iters.unwrap_or(d.max_iters),
        damping: s.damping.or(d.damping),
        min_denominator: s.min_denominator.unwrap_or(d.min_denominator),
        continuation_factor: s.continuation_factor.unwrap_or(d.continuation_factor),
    };
    opts.validate().map_err(|e| field("solver", e))?;
    Ok(opts)
}

fn lambda_from_product(law: &[(f64, f64)], rows: usize) -> Result<Vec<f64>, Failure> {
    let h = JointLimitMeasure::product(law, rows).map_err(|e| field("h.lambda_law", e))?;
    Ok(h.atoms().iter().map(|a| a.lambda.sqrt()).collect())
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, Failure> {
    let profile = VarianceProfile::new(cfg.profile.clone()).map_err(|e| field("profile", e))?;

    if let Some(e) = &cfg.ensemble {
        if e.rows == 0 || e.cols == 0 {
            return Err(field("ensemble", "rows and cols must be positive"));
        }
    }
    let c_ens = cfg.ensemble.as_ref().map(|e| e.rows as f64 / e.cols as f64);
    let c_input = match (cfg.c, c_ens) {
        (Some(c), Some(ce)) if (c - ce).abs() > 1e-12 * ce.max(1.0) => {
            return Err(field(
                "c",
                format!("c = {c} disagrees with ensemble rows/cols = {ce}"),
            ));
        }
        (Some(c), _) => c,
        (None, Some(ce)) => ce,
        (None, None) => return Err(field("c", "required when no ensemble is given")),
    };
    if !(c_input > 0.0 && c_input.is_finite()) {
        return Err(field("c", format!("must be positive, got {c_input}")));
    }
    let transposed = c_input > 1.0;
    if transposed && !cfg.allow_transpose {
        return Err(field(
            "c",
            format!("c = {c_input} > 1 (N > n) requires \"allow_transpose\": true"),
        ));
    }
    let c = if transposed { 1.0 / c_input } else { c_input };
    let solved_profile = if transposed {
        profile
            .transposed()
            .scaled(c_input)
            .map_err(|e| field("profile", e))?
    } else {
        profile
    };

    let ensemble = match &cfg.ensemble {
        None => None,
        Some(e) => {
            let (rows, cols) = if transposed {
                (e.cols, e.rows)
            } else {
                (e.rows, e.cols)
            };
            let lambda_diag = match (&e.lambda_diag, &cfg.h) {
                (Some(l), _) => l.clone(),
                (None, Some(HSpec::Diagonal { lambda })) => lambda.clone(),
                (None, Some(HSpec::Product { lambda_law, .. })) => {
                    lambda_from_product(lambda_law, rows)?
                }
                (None, None) => vec![0.0; rows],
                (None, Some(HSpec::Atoms { .. })) => {
                    return Err(field(
                        "ensemble.lambda_diag",
                        "required when h is given as explicit atoms",
                    ))
                }
            };
            if lambda_diag.len() != rows {
                return Err(field(
                    "ensemble.lambda_diag",
                    format!(
                        "expected min(rows, cols) = {rows} entries, got {}",
                        lambda_diag.len()
                    ),
                ));
            }
            Some(PreparedEnsemble {
                spec: EnsembleSpec {
                    entry_law: e.entry_law,
                    seed: 0,
                    rows,
                    cols,
                },
                profile: solved_profile.clone(),
                lambda_diag,
            })
        }
    };

    let h = match &cfg.h {
        Some(HSpec::Diagonal { lambda }) => {
            JointLimitMeasure::from_diagonal(lambda).map_err(|e| field("h.lambda", e))?
        }
        Some(HSpec::Product {
            lambda_law,
            m,
            midpoint,
        }) => if *midpoint {
            JointLimitMeasure::product_midpoint(lambda_law, *m)
        } else {
            JointLimitMeasure::product(lambda_law, *m)
        }
        .map_err(|e| field("h", e))?,
        Some(HSpec::Atoms { atoms }) => {
            if transposed {
                return Err(field(
                    "h",
                    "explicit atoms cannot be transposed; give them for the transposed model",
                ));
            }
            JointLimitMeasure::new(atoms.clone()).map_err(|e| field("h.atoms", e))?
        }
        None => match &ensemble {
            Some(e) => JointLimitMeasure::from_diagonal(&e.lambda_diag)
                .map_err(|err| field("ensemble.lambda_diag", err))?,
            None => JointLimitMeasure::product(&[(0.0, 1.0)], default_m())
                .expect("default measure is valid"),
        },
    };

    let nodes = cfg
        .quadrature_nodes
        .unwrap_or(gram_profile::measures::DEFAULT_QUADRATURE_NODES);
    if nodes == 0 {
        return Err(field("quadrature_nodes", "must be positive"));
    }
    let quad = QuadratureRule::midpoint(c, nodes).map_err(|e| field("quadrature_nodes", e))?;
    let system = MasterSystem::new(c, h, solved_profile, quad).map_err(|e| field("h", e))?;

    let mut z_grid = Vec::with_capacity(cfg.z_grid.len());
    for (k, [re, im]) in cfg.z_grid.iter().enumerate() {
        if !(*im > 0.0) || !re.is_finite() || !im.is_finite() {
            return Err(field(&format!("z_grid[{k}]"), "needs finite re and im > 0"));
        }
        z_grid.push(Complex64::new(*re, *im));
    }

    let d = &cfg.density;
    let points = d.points.unwrap_or(2000);
    let epsilon = d.epsilon.unwrap_or(1e-3);
    if points < 2 {
        return Err(field("density.points", "need at least 2 points"));
    }
    if !(epsilon > 0.0) {
        return Err(field("density.epsilon", "must be positive"));
    }
    let range = match (d.x_min, d.x_max) {
        (None, None) => None,
        (lo, Some(hi)) => {
            let lo = lo.unwrap_or(0.0);
            if !(hi > lo) {
                return Err(field("density.x_max", "must exceed x_min"));
            }
            Some((lo, hi))
        }
        (Some(_), None) => return Err(field("density.x_max", "required with x_min")),
    };
    let side = match d.side.unwrap_or(SideSpec::Gram) {
        SideSpec::Gram => SpectrumSide::Gram,
        SideSpec::Cogram => SpectrumSide::CoGram,
    };

    let noise = match &cfg.noise {
        None => None,
        Some(n) => Some(NoiseLevel::new(n.s_sq).map_err(|e| field("noise.s_sq", e))?),
    };

    Ok(Prepared {
        c,
        c_input,
        transposed,
        system,
        solver: solver_options(&cfg.solver)?,
        z_grid,
        density: DensitySettings {
            points,
            epsilon,
            range,
            side,
        },
        ensemble,
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> RunConfig {
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn hash_ignores_key_order_and_seeds() {
        let a: Value = serde_json::from_str(
            r#"{"c":0.5,"profile":{"kind":"constant","value":1.0},"seeds":[1]}"#,
        )
        .unwrap();
        let b: Value = serde_json::from_str(
            r#"{"profile":{"value":1.0,"kind":"constant"},"c":0.5,"seeds":[2,3]}"#,
        )
        .unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c: Value =
            serde_json::from_str(r#"{"c":0.25,"profile":{"kind":"constant","value":1.0}}"#)
                .unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }

    #[test]
    fn c_above_one_needs_transpose() {
        let cfg = parse(r#"{"c":1.5,"profile":{"kind":"constant","value":1.0}}"#);
        assert!(matches!(prepare(&cfg), Err(Failure::Config(_))));
        let cfg =
            parse(r#"{"c":1.5,"allow_transpose":true,"profile":{"kind":"constant","value":1.0}}"#);
        let p = prepare(&cfg).ok().unwrap();
        assert!(p.transposed);
        assert!((p.c - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.system.profile().sigma_max_sq() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn ensemble_fixes_c_and_lambda() {
        let cfg = parse(
            r#"{"profile":{"kind":"constant","value":1.0},
                "h":{"type":"product","lambda_law":[[0.0,0.5],[4.0,0.5]]},
                "ensemble":{"entry_law":"gaussian","rows":4,"cols":8}}"#,
        );
        let p = prepare(&cfg).ok().unwrap();
        assert_eq!(p.c, 0.5);
        let e = p.ensemble.unwrap();
        assert_eq!(e.lambda_diag, vec![0.0, 2.0, 0.0, 2.0]);

        let bad = parse(
            r#"{"c":0.4,"profile":{"kind":"constant","value":1.0},
                "ensemble":{"entry_law":"gaussian","rows":4,"cols":8}}"#,
        );
        assert!(prepare(&bad).is_err());
    }

    #[test]
    fn transposed_ensemble_swaps_dimensions() {
        let cfg = parse(
            r#"{"allow_transpose":true,
                "profile":{"kind":"separable","row":[1.0,2.0],"col":[3.0,3.0]},
                "ensemble":{"entry_law":"rademacher","rows":6,"cols":3}}"#,
        );
        let p = prepare(&cfg).ok().unwrap();
        let e = p.ensemble.unwrap();
        assert_eq!((e.spec.rows, e.spec.cols), (3, 6));
        assert_eq!(p.c, 0.5);
        // (N/n)·σ²(y, x) with N/n = 2
        assert!((e.profile.eval(0.3, 1.0) - 2.0 * 3.0 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_fields_are_named() {
        let cfg =
            parse(r#"{"c":0.5,"profile":{"kind":"constant","value":1.0},"z_grid":[[0.0,-1.0]]}"#);
        match prepare(&cfg) {
            Err(Failure::Config(msg)) => assert!(msg.contains("z_grid[0]"), "{msg}"),
            _ => panic!("expected a config failure"),
        }
    }
}
