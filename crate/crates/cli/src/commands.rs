//! The five workflows. Every output file starts with `#` metadata lines that
//! carry the config hash, so artifacts from different configs never mix.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gram_profile::capacity::{capacity_from_limit, capacity_from_spectrum, LogBase};
use gram_profile::rmt_simulator::{ks_compare, simulate_spectrum, SpectrumSample, RNG_NAME};
use gram_profile::spectra::{
    cdf_with_atom, default_x_grid, density_from_stieltjes, stieltjes_pair, uniform_grid,
    DensityCurve, GridCdf, SpectrumSide,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Prepared, PreparedEnsemble};
use crate::Failure;

pub struct Context<'a> {
    pub command: &'static str,
    pub out: &'a Path,
    pub hash: String,
    pub raw: &'a Value,
    pub prepared: &'a Prepared,
    /// Sorted and de-duplicated.
    pub seeds: Vec<u64>,
    pub base: LogBase,
}

impl Context<'_> {
    fn header(&self, extra: &[String]) -> String {
        let mut h = String::new();
        writeln!(h, "# gram-profile {}", self.command).unwrap();
        writeln!(h, "# config_hash={}", self.hash).unwrap();
        writeln!(h, "# convention={}", self.prepared.convention()).unwrap();
        for line in extra {
            writeln!(h, "# {line}").unwrap();
        }
        h
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, body: &str) -> Result<(), Failure> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).expect("JSON value serialises");
        text.push('\n');
        self.write(name, &text)
    }

    /// `run_<command>.json`: config echo, hash, seeds, generator and frame.
    fn write_run_record(&self) -> Result<(), Failure> {
        let p = self.prepared;
        let record = json!({
            "command": self.command,
            "config_hash": self.hash,
            "config": self.raw,
            "seeds": self.seeds,
            "rng": RNG_NAME,
            "convention": p.convention(),
            "solved_frame": {
                "c": p.c,
                "rows": p.ensemble.as_ref().map(|e| e.spec.rows),
                "cols": p.ensemble.as_ref().map(|e| e.spec.cols),
            },
            "version": env!("CARGO_PKG_VERSION"),
        });
        self.write_json(&format!("run_{}.json", self.command), &record)
    }

    fn ensemble(&self) -> Result<&PreparedEnsemble, Failure> {
        self.prepared.ensemble.as_ref().ok_or_else(|| {
            Failure::Config(format!("field `ensemble`: required by `{}`", self.command))
        })
    }

    fn require_seeds(&self) -> Result<(), Failure> {
        if self.seeds.is_empty() {
            return Err(Failure::Config(format!(
                "field `seeds`: `{}` needs at least one seed (config or --seeds)",
                self.command
            )));
        }
        Ok(())
    }
}

pub fn solve(ctx: &Context) -> Result<(), Failure> {
    let p = ctx.prepared;
    if p.z_grid.is_empty() {
        return Err(Failure::Config(
            "field `z_grid`: `solve` needs at least one point".into(),
        ));
    }
    let mut zs = p.z_grid.clone();
    zs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    zs.dedup();
    let mut body = ctx.header(&[]);
    body.push_str("z_re,z_im,f_re,f_im,ft_re,ft_im,dual_resid,iters\n");
    for (z, res) in p.system.solve_with_continuation(&zs, &p.solver) {
        let r = res?;
        let pair = stieltjes_pair(&r, p.c, z);
        writeln!(
            body,
            "{},{},{},{},{},{},{},{}",
            z.re,
            z.im,
            r.f.re,
            r.f.im,
            r.f_tilde.re,
            r.f_tilde.im,
            pair.duality_residual,
            r.iterations
        )
        .unwrap();
    }
    ctx.write("solve.csv", &body)?;
    ctx.write_run_record()
}

fn x_grid(p: &Prepared) -> Vec<f64> {
    match p.density.range {
        Some((lo, hi)) => uniform_grid(lo, hi, p.density.points),
        None => default_x_grid(
            p.c,
            p.system.profile().sigma_max_sq(),
            p.system.measure().max_lambda(),
            p.density.points,
        ),
    }
}

fn gram_curve(p: &Prepared) -> Result<DensityCurve<f64>, Failure> {
    let xs = x_grid(p);
    let mut ws = p.system.warm_start(p.solver);
    Ok(density_from_stieltjes(|z| ws.f(z), &xs, p.density.epsilon)?)
}

pub fn density(ctx: &Context) -> Result<(), Failure> {
    let p = ctx.prepared;
    let gram = gram_curve(p)?;
    let curve = match p.density.side {
        SpectrumSide::Gram => gram,
        SpectrumSide::CoGram => gram.dual(p.c)?,
    };
    let side = match curve.side {
        SpectrumSide::Gram => "gram",
        SpectrumSide::CoGram => "cogram",
    };
    let mut body = ctx.header(&[
        format!("side={side}"),
        format!("epsilon={}", curve.epsilon),
        format!("atom_at_zero={}", curve.atom_at_zero),
        format!("total_mass={}", curve.total_mass()),
    ]);
    body.push_str("x,density\n");
    for (x, v) in curve.x_grid.iter().zip(&curve.values) {
        writeln!(body, "{x},{v}").unwrap();
    }
    ctx.write("density.csv", &body)?;
    ctx.write_run_record()
}

fn spectrum_file(seed: u64) -> String {
    format!("spectrum_seed_{seed}.csv")
}

fn simulate_seeds(ctx: &Context, seeds: &[u64]) -> Result<Vec<SpectrumSample>, Failure> {
    let e = ctx.ensemble()?;
    seeds
        .par_iter()
        .map(|s| simulate_spectrum(&e.spec.with_seed(*s), &e.profile, &e.lambda_diag))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::from)
}

fn spectrum_csv(ctx: &Context, s: &SpectrumSample) -> String {
    let e = &ctx
        .prepared
        .ensemble
        .as_ref()
        .expect("ensemble checked")
        .spec;
    let mut body = ctx.header(&[
        format!("seed={}", s.seed.expect("simulated samples carry a seed")),
        format!(
            "rows={} cols={} entry_law={:?}",
            s.rows, s.cols, e.entry_law
        ),
        format!("rng={RNG_NAME}"),
    ]);
    body.push_str("eigenvalue\n");
    for v in &s.eigenvalues {
        writeln!(body, "{v}").unwrap();
    }
    body
}

pub fn simulate(ctx: &Context) -> Result<(), Failure> {
    ctx.ensemble()?;
    ctx.require_seeds()?;
    for s in simulate_seeds(ctx, &ctx.seeds)? {
        ctx.write(&spectrum_file(s.seed.unwrap()), &spectrum_csv(ctx, &s))?;
    }
    ctx.write_run_record()
}

/// Reads a spectrum written by `simulate`, refusing files from another config.
fn read_spectrum(ctx: &Context, path: &Path, seed: u64) -> Result<SpectrumSample, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut hash = None;
    let mut values = Vec::new();
    for line in text.lines() {
        if let Some(meta) = line.strip_prefix("# ") {
            if let Some(h) = meta.strip_prefix("config_hash=") {
                hash = Some(h.to_string());
            }
        } else if line != "eigenvalue" && !line.is_empty() {
            values.push(line.parse::<f64>().map_err(|e| {
                Failure::Config(format!("{}: bad eigenvalue {line:?}: {e}", path.display()))
            })?);
        }
    }
    if hash.as_deref() != Some(ctx.hash.as_str()) {
        return Err(Failure::Config(format!(
            "{} was produced by a different config (hash {}, expected {})",
            path.display(),
            hash.unwrap_or_else(|| "missing".into()),
            ctx.hash
        )));
    }
    let e = &ctx.ensemble()?.spec;
    if values.len() != e.rows {
        return Err(Failure::Config(format!(
            "{}: expected {} eigenvalues, found {}",
            path.display(),
            e.rows,
            values.len()
        )));
    }
    Ok(SpectrumSample {
        eigenvalues: values,
        seed: Some(seed),
        rows: e.rows,
        cols: e.cols,
    })
}

/// Spectra for all seeds: reused from earlier `simulate` output when present.
fn spectra(ctx: &Context) -> Result<Vec<SpectrumSample>, Failure> {
    ctx.ensemble()?;
    ctx.require_seeds()?;
    let mut fresh = Vec::new();
    let mut found = Vec::new();
    for seed in &ctx.seeds {
        let path = ctx.path(&spectrum_file(*seed));
        if path.exists() {
            found.push(read_spectrum(ctx, &path, *seed)?);
        } else {
            fresh.push(*seed);
        }
    }
    found.extend(simulate_seeds(ctx, &fresh)?);
    found.sort_by_key(|s| s.seed);
    Ok(found)
}

fn limit_cdf(ctx: &Context) -> Result<GridCdf<f64>, Failure> {
    let cdf = cdf_with_atom(&gram_curve(ctx.prepared)?)?;
    if !cdf.within_mass_window() {
        return Err(Failure::Core(gram_profile::Error::NumericalFailure(format!(
            "limit density carries mass {} (outside [0.95, 1.05]); widen the x range or lower epsilon",
            cdf.raw_total()
        ))));
    }
    Ok(cdf)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn compare(ctx: &Context) -> Result<(), Failure> {
    let samples = spectra(ctx)?;
    let cdf = limit_cdf(ctx)?;
    let ks: Vec<f64> = samples
        .iter()
        .map(|s| ks_compare(s, |x| cdf.eval(x)))
        .collect();

    let mut body = ctx.header(&[format!("rng={RNG_NAME}")]);
    body.push_str("seed,ks\n");
    for (s, k) in samples.iter().zip(&ks) {
        writeln!(body, "{},{k}", s.seed.unwrap()).unwrap();
    }
    ctx.write("compare.csv", &body)?;

    let mut cdf_body = ctx.header(&[format!("limit_mass={}", cdf.raw_total())]);
    cdf_body.push_str("x,cdf\n");
    for (x, v) in cdf.grid().iter().zip(cdf.values()) {
        writeln!(cdf_body, "{x},{v}").unwrap();
    }
    ctx.write("limit_cdf.csv", &cdf_body)?;

    let per_seed: Vec<Value> = samples
        .iter()
        .zip(&ks)
        .map(|(s, k)| json!({ "seed": s.seed, "ks": k }))
        .collect();
    ctx.write_json(
        "compare.json",
        &json!({
            "config_hash": ctx.hash,
            "per_seed": per_seed,
            "median_ks": median(&ks),
            "limit_mass": cdf.raw_total(),
            "convention": ctx.prepared.convention(),
        }),
    )?;
    ctx.write_run_record()
}

pub fn capacity(ctx: &Context) -> Result<(), Failure> {
    let p = ctx.prepared;
    let noise = p
        .noise
        .ok_or_else(|| Failure::Config("field `noise`: `capacity` needs noise.s_sq".into()))?;
    let samples = spectra(ctx)?;
    let per_seed: Vec<f64> = samples
        .iter()
        .map(|s| capacity_from_spectrum(s, noise, ctx.base))
        .collect();
    let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    let limit = capacity_from_limit(&gram_curve(p)?, p.c, noise, ctx.base)?;
    let unit = match ctx.base {
        LogBase::Nats => "nats",
        LogBase::Bits => "bits",
    };

    let mut body = ctx.header(&[
        format!("unit={unit} s_sq={}", noise.s_sq()),
        format!("limit={limit}"),
    ]);
    body.push_str("seed,capacity\n");
    for (s, v) in samples.iter().zip(&per_seed) {
        writeln!(body, "{},{v}", s.seed.unwrap()).unwrap();
    }
    ctx.write("capacity.csv", &body)?;

    let per: Vec<Value> = samples
        .iter()
        .zip(&per_seed)
        .map(|(s, v)| json!({ "seed": s.seed, "capacity": v }))
        .collect();
    ctx.write_json(
        "capacity.json",
        &json!({
            "config_hash": ctx.hash,
            "unit": unit,
            "s_sq": noise.s_sq(),
            "per_seed": per,
            "empirical_mean": mean,
            "limit": limit,
            "relative_gap": (mean - limit).abs() / limit.abs().max(f64::MIN_POSITIVE),
            "convention": p.convention(),
        }),
    )?;
    ctx.write_run_record()
}
