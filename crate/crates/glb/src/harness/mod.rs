//! Experiment driver: parses `key = value` configs, runs studies, and writes
//! deterministic artifacts (CSV tables, GLB1 snapshots, summary.json) plus a
//! manifest with sha256 digests.

mod config;

pub use config::{parse_config, ExperimentConfig, Study};

use crate::bundle::{read_snapshot, write_snapshot, RefConnection, State};
use crate::energy::{energy, residuals};
use crate::error::{GlbError, Result};
use crate::lattice::{
    build_lattice, codiff, exterior_d, gaffney_probe, green_decay_probe,
    hodge_decompose, poincare_probe, solve_poisson, FormField, Lattice,
};
use crate::observables::{clearing_probe, jacobian, jacobian_slice_sums, online_centers,
    radial_profile, vortex_set};
use crate::solver::{continuation, init_state, minimize, reference, InitMode, SolveOptions};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

/// Outcome of a completed experiment.
#[derive(Debug)]
pub struct RunReport {
    /// Named boolean checks in deterministic order.
    pub checks: BTreeMap<String, bool>,
    pub all_pass: bool,
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
}

/// Intermediate bookkeeping while a study runs.
struct RunCtx {
    out: PathBuf,
    written: Vec<PathBuf>,
    checks: BTreeMap<String, bool>,
}

impl RunCtx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_text(&mut self, name: &str, content: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, content)?;
        self.written.push(p);
        Ok(())
    }

    fn write_csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut s = String::with_capacity(rows.len() * 32 + header.len() + 2);
        s.push_str(header);
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        self.write_text(name, &s)
    }

    fn write_snapshot_file(&mut self, name: &str, state: &State, epsilon: f64) -> Result<()> {
        let p = self.path(name);
        let mut w = BufWriter::new(fs::File::create(&p)?);
        write_snapshot(&mut w, state, epsilon)?;
        self.written.push(p);
        Ok(())
    }

    fn check(&mut self, name: &str, pass: bool) {
        self.checks.insert(name.to_string(), pass);
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

/// Shortest-roundtrip decimal formatting used in every CSV cell.
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn json_checks(checks: &BTreeMap<String, bool>) -> Value {
    let mut m = Map::new();
    for (k, v) in checks {
        m.insert(k.clone(), Value::Bool(*v));
    }
    Value::Object(m)
}

fn solve_options(cfg: &ExperimentConfig) -> SolveOptions {
    SolveOptions {
        method: cfg.method,
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iterations,
        initial_step: cfg.initial_step,
        seed: cfg.seed,
        ..Default::default()
    }
}

fn build(cfg: &ExperimentConfig) -> Result<(Arc<Lattice>, Arc<RefConnection>)> {
    let sizes = vec![cfg.sites; cfg.n];
    let lengths = vec![cfg.length; cfg.n];
    let lat = build_lattice(cfg.n, &sizes, &lengths)?;
    let conn = reference(&lat, cfg.degree);
    Ok((lat, conn))
}

fn default_init(cfg: &ExperimentConfig) -> InitMode {
    cfg.init.unwrap_or(if cfg.degree == 0 {
        InitMode::Vacuum
    } else {
        InitMode::VortexAnsatz
    })
}

/// Obtain a state: load the configured snapshot, or minimize from scratch.
fn obtain_state(cfg: &ExperimentConfig) -> Result<(State, f64)> {
    if let Some(path) = &cfg.snapshot {
        let mut r = BufReader::new(fs::File::open(path)?);
        return read_snapshot(&mut r);
    }
    let (_lat, conn) = build(cfg)?;
    let eps = *cfg.epsilons.last().expect("validated nonempty");
    if cfg.epsilons.len() > 1 {
        let res = continuation(&conn, &cfg.epsilons, default_init(cfg), &solve_options(cfg))?;
        Ok((res.states.into_iter().last().expect("nonempty"), eps))
    } else {
        let st = init_state(&conn, default_init(cfg), eps, cfg.seed)?;
        let (out, trace) = minimize(&st, eps, &solve_options(cfg))?;
        if !trace.converged {
            return Err(GlbError::Solver {
                residual: trace.final_grad_inf,
                iterations: trace.iterations.len(),
            });
        }
        Ok((out, eps))
    }
}

/// Quantization monitor: per-slice flux of J in units of π must equal the
/// bundle degree up to roundoff.
fn quantization_ok(state: &State) -> (bool, Vec<f64>) {
    let d = state.connection().degree as f64;
    let jf = jacobian(state);
    let sums = jacobian_slice_sums(&jf);
    let pi = std::f64::consts::PI;
    let ok = sums
        .iter()
        .all(|s| (s - pi * d).abs() <= 1e-8 * d.abs().max(1.0));
    (ok, sums)
}

/// Default dyadic radii 8h, 16h, … capped at min(L)/4.
fn default_radii(lat: &Arc<Lattice>) -> Vec<f64> {
    let h = lat.spacing();
    let hi = lat.min_length() / 4.0;
    let mut radii = Vec::new();
    let mut rho = 8.0 * h;
    while rho < hi * (1.0 - 1e-12) {
        radii.push(rho);
        rho *= 2.0;
    }
    radii.push(hi);
    radii
}

fn study_minimize(cfg: &ExperimentConfig, ctx: &mut RunCtx) -> Result<Value> {
    let (_lat, conn) = build(cfg)?;
    let eps = cfg.epsilons[0];
    let st = init_state(&conn, default_init(cfg), eps, cfg.seed)?;
    let (out, trace) = minimize(&st, eps, &solve_options(cfg))?;

    let breakdown = energy(&out, eps)?;
    let res = &trace.final_residuals;
    let vort = vortex_set(&out, cfg.threshold)?;
    let (quant_ok, slice_sums) = quantization_ok(&out);

    ctx.check("converged", trace.converged);
    ctx.check(
        "max_principle",
        trace.max_modulus_seen <= 1.0 + 1e-2 && out.max_modulus() <= 1.0 + 1e-3,
    );
    ctx.check(
        "criticality",
        trace.converged && res.el_u_inf.max(res.el_a_inf) <= 10.0 * cfg.tolerance,
    );
    ctx.check("quantization", quant_ok);

    ctx.write_snapshot_file("state.glb1", &out, eps)?;

    Ok(json!({
        "epsilon": eps,
        "converged": trace.converged,
        "aborted": trace.aborted,
        "iterations": trace.iterations.len(),
        "energy": {
            "total": breakdown.total,
            "kinetic": breakdown.kinetic,
            "curvature": breakdown.curvature,
            "potential": breakdown.potential,
        },
        "residuals": {
            "el_u_l2": res.el_u_l2,
            "el_u_inf": res.el_u_inf,
            "el_a_l2": res.el_a_l2,
            "el_a_inf": res.el_a_inf,
        },
        "grad_inf": trace.final_grad_inf,
        "max_u": out.max_modulus(),
        "min_u": out.min_modulus(),
        "vortex_components": vort.components,
        "slice_charges_over_pi": vort.slice_charges,
        "jacobian_slice_sums": slice_sums,
    }))
}

const SWEEP_HEADER: &str = "epsilon,energy_total,energy_kinetic,energy_curvature,\
energy_potential,lambda_ratio,curvature_ratio,max_u,eps_max_du,eps_max_f,vortex_components";

fn study_sweep(cfg: &ExperimentConfig, ctx: &mut RunCtx) -> Result<Value> {
    let (_lat, conn) = build(cfg)?;
    if cfg.epsilons.len() < 2 {
        return Err(GlbError::Config(
            "sweep needs at least two epsilon values".into(),
        ));
    }
    let res = continuation(&conn, &cfg.epsilons, default_init(cfg), &solve_options(cfg))?;

    let rows: Vec<String> = res
        .entries
        .iter()
        .map(|en| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt(en.epsilon),
                fmt(en.breakdown.total),
                fmt(en.breakdown.kinetic),
                fmt(en.breakdown.curvature),
                fmt(en.breakdown.potential),
                fmt(en.lambda_ratio),
                fmt(en.curvature_ratio),
                fmt(en.max_u),
                fmt(en.eps_max_du),
                fmt(en.eps_max_f),
                en.vortex_components
            )
        })
        .collect();
    ctx.write_csv("sweep.csv", SWEEP_HEADER, &rows)?;
    for (i, (st, en)) in res.states.iter().zip(&res.entries).enumerate() {
        ctx.write_snapshot_file(&format!("state-{i:02}.glb1"), st, en.epsilon)?;
    }

    let dabs = cfg.degree.unsigned_abs() as f64;
    let pi = std::f64::consts::PI;
    let slope_norm = if dabs > 0.0 {
        res.fit.slope / (pi * dabs)
    } else {
        f64::NAN
    };
    let lams: Vec<f64> = res.entries.iter().map(|e| e.lambda_ratio).collect();
    let lam_max = lams.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lam_min = lams.iter().cloned().fold(f64::INFINITY, f64::min);
    let curs: Vec<f64> = res.entries.iter().map(|e| e.curvature_ratio).collect();

    ctx.check(
        "scaling_slope",
        dabs > 0.0 && (0.8..=1.2).contains(&slope_norm),
    );
    ctx.check("scaling_r2", res.fit.r2 > 0.99);
    ctx.check("lambda_bounded", lam_min > 0.0 && lam_max / lam_min <= 2.0);
    ctx.check(
        "curvature_ratio_decreasing",
        curs.windows(2).all(|w| w[1] < w[0]),
    );
    ctx.check(
        "max_principle",
        res.entries.iter().all(|e| e.max_u <= 1.0 + 1e-3),
    );
    let (quant_ok, _) = quantization_ok(res.states.last().expect("nonempty"));
    ctx.check("quantization", quant_ok);

    Ok(json!({
        "epsilons": cfg.epsilons,
        "fit": { "slope": res.fit.slope, "intercept": res.fit.intercept, "r2": res.fit.r2 },
        "slope_over_pi_degree": slope_norm,
        "lambda_ratio_range": [lam_min, lam_max],
        "iterations": res.traces.iter().map(|t| t.iterations.len()).collect::<Vec<_>>(),
    }))
}

const MONO_HEADER: &str = "center_id,rho,E,X,f,p_eps,theta,violation";

fn study_monotonicity(cfg: &ExperimentConfig, ctx: &mut RunCtx) -> Result<Value> {
    let (state, eps) = obtain_state(cfg)?;
    let lat = state.lattice().clone();
    let radii = match &cfg.radii {
        Some(r) => r.clone(),
        None => default_radii(&lat),
    };
    let centers = online_centers(&state, cfg.centers);

    let dabs = state.connection().degree.unsigned_abs() as f64;
    let pi = std::f64::consts::PI;
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    for (ci, &c) in centers.iter().enumerate() {
        let p = radial_profile(&state, eps, c, &radii)?;
        for (ri, &rho) in p.radii.iter().enumerate() {
            rows.push(format!(
                "{ci},{},{},{},{},{},{},{}",
                fmt(rho),
                fmt(p.e[ri]),
                fmt(p.x[ri]),
                fmt(p.f[ri]),
                fmt(p.p_eps[ri]),
                fmt(p.theta[ri]),
                fmt(p.violation)
            ));
        }
        ctx.check(&format!("monotonicity_c{ci}"), p.violation <= 0.10);
        if dabs > 0.0 {
            let window_ok = p
                .theta
                .iter()
                .all(|&t| t >= pi * dabs && t <= 4.0 * pi * dabs);
            ctx.check(&format!("theta_window_c{ci}"), window_ok);
        }
        profiles.push(json!({
            "center": c,
            "radii": p.radii,
            "f": p.f,
            "theta": p.theta,
            "violation": p.violation,
        }));
    }
    ctx.write_csv("monotonicity.csv", MONO_HEADER, &rows)?;

    Ok(json!({
        "epsilon": eps,
        "centers": centers,
        "profiles": profiles,
    }))
}

const CLEARING_HEADER: &str = "center_id,R,mass_ratio,min_u,hypothesis,pass";

/// Probe centers far from the vortex line: xy offsets from the line position
/// by at least a third of the period, at the middle z-slice in 3D.
fn offline_centers(state: &State, count: usize) -> Vec<usize> {
    let lat = state.lattice().clone();
    let n = lat.dim();
    let on = online_centers(state, 1);
    let anchor = on.first().copied().unwrap_or(0);
    let nx = lat.sizes()[0];
    let ny = lat.sizes()[1];
    let ax = lat.site_coord(anchor, 0);
    let ay = lat.site_coord(anchor, 1);
    let offsets = [
        (nx / 2, ny / 2),
        (0, ny / 2),
        (nx / 2, 0),
        (nx / 3, ny / 3),
        (2 * nx / 3, ny / 3),
        (nx / 3, 2 * ny / 3),
    ];
    let mut out = Vec::new();
    for (dx, dy) in offsets {
        if out.len() >= count {
            break;
        }
        let mut coords = vec![0usize; n];
        coords[0] = (ax + dx) % nx;
        coords[1] = (ay + dy) % ny;
        if n == 3 {
            coords[2] = lat.sizes()[2] / 2;
        }
        out.push(lat.site_of_coords(&coords));
    }
    out
}

fn study_clearing(cfg: &ExperimentConfig, ctx: &mut RunCtx) -> Result<Value> {
    let (state, eps) = obtain_state(cfg)?;
    let lat = state.lattice().clone();
    let r = cfg.radius_r.unwrap_or(lat.min_length() / 4.0);

    let on = online_centers(&state, 1);
    let off = offline_centers(&state, cfg.centers);
    let mut centers = on.clone();
    centers.extend(&off);
    let rep = clearing_probe(&state, eps, &centers, r, cfg.eta0)?;

    let mut rows = Vec::new();
    for (ci, e) in rep.entries.iter().enumerate() {
        rows.push(format!(
            "{ci},{},{},{},{},{}",
            fmt(rep.r),
            fmt(e.mass_ratio),
            fmt(e.min_u),
            e.hypothesis,
            e.pass
        ));
    }
    ctx.write_csv("clearing.csv", CLEARING_HEADER, &rows)?;

    let all_pass = rep.entries.iter().all(|e| e.pass);
    let cleared = rep
        .entries
        .iter()
        .skip(on.len())
        .filter(|e| e.hypothesis && e.min_u >= 0.5)
        .count();
    ctx.check("implication_holds", all_pass);
    ctx.check("cleared_centers_at_least_3", cleared >= 3);

    Ok(json!({
        "epsilon": eps,
        "R": rep.r,
        "eta0": rep.eta0,
        "online_centers": on,
        "offline_centers": off,
        "cleared_offline_centers": cleared,
        "entries": rep.entries.iter().map(|e| json!({
            "center": e.center,
            "mass_ratio": e.mass_ratio,
            "min_u": e.min_u,
            "hypothesis": e.hypothesis,
            "pass": e.pass,
        })).collect::<Vec<_>>(),
    }))
}

const APPENDIX_HEADER: &str = "probe,rho_or_k,statistic,value";

fn random_form(lat: &Arc<Lattice>, k: usize, rng: &mut ChaCha8Rng) -> FormField {
    let vals: Vec<f64> = (0..lat.cell_count(k))
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    FormField::from_values(lat, k, vals)
}

fn study_appendix(cfg: &ExperimentConfig, ctx: &mut RunCtx) -> Result<Value> {
    let sizes = vec![cfg.sites; cfg.n];
    let lengths = vec![cfg.length; cfg.n];
    let lat = build_lattice(cfg.n, &sizes, &lengths)?;
    let n = lat.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows: Vec<String> = Vec::new();

    // d∘d = 0
    let mut dd_max: f64 = 0.0;
    for k in 0..n.saturating_sub(1) {
        let a = random_form(&lat, k, &mut rng);
        let dda = exterior_d(&exterior_d(&a)?)?;
        let m = dda.norm_inf();
        dd_max = dd_max.max(m);
        rows.push(format!("dd_zero,{k},max_abs,{}", fmt(m)));
    }
    ctx.check("dd_zero", dd_max <= 1e-12);

    // <da, b> = <a, δb>
    let mut adj_max: f64 = 0.0;
    for k in 1..=n {
        let a = random_form(&lat, k - 1, &mut rng);
        let b = random_form(&lat, k, &mut rng);
        let lhs = exterior_d(&a)?.inner(&b);
        let rhs = a.inner(&codiff(&b)?);
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
        adj_max = adj_max.max(rel);
        rows.push(format!("adjointness,{k},max_rel,{}", fmt(rel)));
    }
    ctx.check("adjointness", adj_max <= 1e-12);

    // Poisson residual on a random 0-form source
    let rhs0 = random_form(&lat, 0, &mut rng);
    let sol = solve_poisson(&rhs0)?;
    rows.push(format!("poisson,0,relative_residual,{}", fmt(sol.residual)));
    rows.push(format!("poisson,0,iterations,{}", sol.iterations));
    ctx.check("poisson", sol.residual <= 1e-10);

    // Hodge reconstruction of a random 1-form
    let a1 = random_form(&lat, 1, &mut rng);
    let parts = hodge_decompose(&a1)?;
    let rec = parts.reconstruct()?;
    let mut diff: f64 = 0.0;
    for (x, y) in rec.values().iter().zip(a1.values()) {
        diff = diff.max((x - y).abs());
    }
    let rel = diff / a1.norm_inf().max(1e-300);
    rows.push(format!("hodge,1,reconstruction_rel,{}", fmt(rel)));
    ctx.check("hodge", rel <= 1e-8);

    // Gaffney stability across two ball radii
    let center = lat.site_of_coords(&vec![lat.sizes()[0] / 2; n]);
    let rhos = [lat.min_length() / 8.0, lat.min_length() / 4.0];
    let mut medians = Vec::new();
    for &rho in &rhos {
        let stats = gaffney_probe(&lat, center, rho, 24, cfg.seed)?;
        rows.push(format!("gaffney,{},median,{}", fmt(rho), fmt(stats.median)));
        rows.push(format!("gaffney,{},max,{}", fmt(rho), fmt(stats.max)));
        medians.push(stats.median);
    }
    let gaffney_stable = medians[0] > 0.0
        && medians[1] > 0.0
        && medians[1] / medians[0] <= 2.0
        && medians[0] / medians[1] <= 2.0;
    ctx.check("gaffney_stable", gaffney_stable);

    // Green-function decay (3D only; degenerate in 2D)
    let mut green_summary = Value::Null;
    if n == 3 {
        let g = green_decay_probe(&lat, 0, center)?;
        rows.push(format!("green,0,slope,{}", fmt(g.fit.slope)));
        rows.push(format!("green,0,r2,{}", fmt(g.fit.r2)));
        rows.push(format!("green,0,points,{}", g.points));
        ctx.check(
            "green_slope",
            g.fit.slope >= -1.3 && g.fit.slope <= -0.7,
        );
        green_summary = json!({ "slope": g.fit.slope, "r2": g.fit.r2, "points": g.points });
    }

    // Poincaré ratio on mean-free 1-forms
    let rho = lat.min_length() / 4.0;
    let ratio = poincare_probe(&lat, center, rho, 1, 16, cfg.seed)?;
    rows.push(format!("poincare,{},max_ratio,{}", fmt(rho), fmt(ratio)));
    ctx.check("poincare_finite", ratio.is_finite() && ratio > 0.0);

    ctx.write_csv("appendix.csv", APPENDIX_HEADER, &rows)?;

    Ok(json!({
        "n": n,
        "sites": cfg.sites,
        "dd_zero_max": dd_max,
        "adjointness_max_rel": adj_max,
        "poisson_residual": sol.residual,
        "hodge_reconstruction_rel": rel,
        "gaffney_medians": medians,
        "green": green_summary,
        "poincare_ratio": ratio,
    }))
}

fn study_report(cfg: &ExperimentConfig, ctx: &mut RunCtx) -> Result<Value> {
    let path = cfg.snapshot.as_ref().ok_or_else(|| {
        GlbError::Config("report study requires `snapshot = <path>`".into())
    })?;
    let mut r = BufReader::new(fs::File::open(path)?);
    let (state, eps) = read_snapshot(&mut r)?;

    let breakdown = energy(&state, eps)?;
    let res = residuals(&state, eps)?;
    let vort = vortex_set(&state, cfg.threshold)?;
    let (quant_ok, slice_sums) = quantization_ok(&state);

    ctx.check("quantization", quant_ok);
    ctx.check(
        "finite",
        breakdown.total.is_finite() && res.el_u_l2.is_finite() && res.el_a_l2.is_finite(),
    );
    ctx.check("max_principle", state.max_modulus() <= 1.0 + 1e-3);

    Ok(json!({
        "snapshot": path,
        "epsilon": eps,
        "degree": state.connection().degree,
        "energy": {
            "total": breakdown.total,
            "kinetic": breakdown.kinetic,
            "curvature": breakdown.curvature,
            "potential": breakdown.potential,
        },
        "residuals": {
            "el_u_l2": res.el_u_l2,
            "el_u_inf": res.el_u_inf,
            "el_a_l2": res.el_a_l2,
            "el_a_inf": res.el_a_inf,
            "london_l2": res.london,
            "modulus_eq_l2": res.modulus_eq,
        },
        "max_u": state.max_modulus(),
        "min_u": state.min_modulus(),
        "vortex": {
            "threshold": vort.threshold,
            "cells": vort.cells.len(),
            "components": vort.components,
            "slice_charges_over_pi": vort.slice_charges,
        },
        "jacobian_slice_sums": slice_sums,
    }))
}

/// Run a study end to end, writing artifacts into `out_dir`.
///
/// On success the directory holds the study artifacts, `summary.json` (with
/// the named checks), and `manifest.json` with sha256 digests of every
/// artifact. On failure partial artifacts are removed and only a manifest
/// describing the failure is left behind.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    let start = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut ctx = RunCtx {
        out: out_dir.to_path_buf(),
        written: Vec::new(),
        checks: BTreeMap::new(),
    };

    let study_result = match cfg.study {
        Study::Minimize => study_minimize(cfg, &mut ctx),
        Study::Sweep => study_sweep(cfg, &mut ctx),
        Study::ProbeMonotonicity => study_monotonicity(cfg, &mut ctx),
        Study::ProbeClearing => study_clearing(cfg, &mut ctx),
        Study::ProbeAppendix => study_appendix(cfg, &mut ctx),
        Study::Report => study_report(cfg, &mut ctx),
    };

    let summary = match study_result {
        Ok(v) => v,
        Err(e) => {
            // clean up partial artifacts; leave a failure manifest
            for p in &ctx.written {
                let _ = fs::remove_file(p);
            }
            let manifest = json!({
                "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
                "study": cfg.study.name(),
                "status": "failed",
                "error": e.to_string(),
                "config": cfg.echo,
                "artifacts": [],
                "wall_time_seconds": start.elapsed().as_secs_f64(),
            });
            fs::write(
                out_dir.join("manifest.json"),
                serde_json::to_string_pretty(&manifest).expect("serializable") + "\n",
            )?;
            return Err(e);
        }
    };

    // summary.json with the study payload and the named checks
    let summary_doc = json!({
        "study": cfg.study.name(),
        "seed": cfg.seed,
        "checks": json_checks(&ctx.checks),
        "results": summary,
    });
    let summary_path = out_dir.join("summary.json");
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary_doc).expect("serializable") + "\n",
    )?;
    ctx.written.push(summary_path);

    // manifest with digests of every artifact, written last
    let mut artifacts = Vec::new();
    let mut names = Vec::new();
    let mut files: Vec<&PathBuf> = ctx.written.iter().collect();
    files.sort();
    for p in files {
        let name = p
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        artifacts.push(json!({ "file": name, "sha256": sha256_file(p)? }));
        names.push(p.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string());
    }
    let manifest = json!({
        "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "study": cfg.study.name(),
        "status": "ok",
        "config": cfg.echo,
        "seed": cfg.seed,
        "artifacts": artifacts,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("serializable") + "\n",
    )?;

    let all_pass = ctx.checks.values().all(|&b| b);
    Ok(RunReport {
        checks: ctx.checks,
        all_pass,
        out_dir: out_dir.to_path_buf(),
        artifacts: names,
    })
}
