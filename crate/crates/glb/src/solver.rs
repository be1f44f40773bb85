//! Critical-point finding by energy minimization (Barzilai-Borwein gradient
//! flow or nonlinear conjugate gradients), state initialization, and
//! ε-continuation with scaling-law fits.

use crate::bundle::{covariant_derivative, curvature, make_reference_connection, RefConnection, State};
use crate::energy::{energy, energy_and_gradient, residuals, EnergyBreakdown, Residuals};
use crate::error::{GlbError, Result};
use crate::lattice::{fit_line, FormField, LineFit};
use crate::observables::vortex_set;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Minimization method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GradientFlow,
    NonlinearCg,
}

/// Initial-state construction mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Vacuum,
    Random,
    VortexAnsatz,
}

/// Solver options; the tolerance applies to the residual-scaled gradient
/// ‖grad‖_∞/h^n, which equals the Euler-Lagrange residual sup norm.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub method: Method,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: Method::GradientFlow,
            tolerance: 1e-8,
            max_iterations: 200_000,
            initial_step: 1e-3,
            backtrack_factor: 0.5,
            max_backtracks: 60,
            seed: 0,
        }
    }
}

/// One accepted iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub energy: f64,
    pub grad_inf: f64,
    pub step: f64,
}

/// Record of a minimization run.
#[derive(Debug)]
pub struct SolveTrace {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub aborted: Option<String>,
    pub final_energy: f64,
    pub final_grad_inf: f64,
    pub final_residuals: Residuals,
    pub wall_time: Duration,
    pub max_modulus_seen: f64,
    pub max_principle_warning: bool,
}

/// Build an initial state on the reference connection.
pub fn init_state(
    conn: &Arc<RefConnection>,
    mode: InitMode,
    epsilon: f64,
    seed: u64,
) -> Result<State> {
    if !(epsilon > 0.0) {
        return Err(GlbError::Parameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let lat = conn.lattice().clone();
    let ns = lat.num_sites();
    match mode {
        InitMode::Vacuum => Ok(State::new(
            conn,
            vec![Complex64::new(1.0, 0.0); ns],
            FormField::zeros(&lat, 1),
        )),
        InitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut u = Vec::with_capacity(ns);
            for _ in 0..ns {
                // uniform in the closed unit disk by rejection
                loop {
                    let re: f64 = rng.gen_range(-1.0..1.0);
                    let im: f64 = rng.gen_range(-1.0..1.0);
                    if re * re + im * im <= 1.0 {
                        u.push(Complex64::new(re, im));
                        break;
                    }
                }
            }
            let amp = 1.0 / lat.min_length();
            let mut a = FormField::zeros(&lat, 1);
            for v in a.values_mut() {
                *v = rng.gen_range(-amp..amp);
            }
            Ok(State::new(conn, u, a))
        }
        InitMode::VortexAnsatz => {
            let d = conn.degree;
            if d == 0 {
                return Err(GlbError::Mode(
                    "vortex-ansatz requires a nonzero bundle degree".into(),
                ));
            }
            let k = d.unsigned_abs() as usize;
            let h = lat.spacing();
            // |d| well-separated core positions on the xy diagonal, snapped
            // to vertices
            let mut centers = Vec::with_capacity(k);
            for i in 0..k {
                let frac = (i as f64 + 0.5) / k as f64;
                let cx = ((frac * lat.sizes()[0] as f64).round() as usize) % lat.sizes()[0];
                let cy = ((frac * lat.sizes()[1] as f64).round() as usize) % lat.sizes()[1];
                centers.push([cx as f64 * h, cy as f64 * h]);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut u = Vec::with_capacity(ns);
            for v in 0..ns {
                let x = lat.site_coord(v, 0) as f64 * h;
                let y = lat.site_coord(v, 1) as f64 * h;
                let mut m = 1.0;
                for c in &centers {
                    let mut dx = (x - c[0]).abs() % lat.lengths()[0];
                    if dx > 0.5 * lat.lengths()[0] {
                        dx = lat.lengths()[0] - dx;
                    }
                    let mut dy = (y - c[1]).abs() % lat.lengths()[1];
                    if dy > 0.5 * lat.lengths()[1] {
                        dy = lat.lengths()[1] - dy;
                    }
                    m *= ((dx * dx + dy * dy).sqrt() / epsilon).tanh();
                }
                // tiny phase noise breaks the reality symmetry of the flow
                let phase: f64 = rng.gen_range(-1e-3..1e-3);
                u.push(Complex64::from_polar(m, phase));
            }
            // A = 0: the reference curvature F₀ is already the uniformly
            // smeared flux; the flow localizes it onto the cores.
            Ok(State::new(conn, u, FormField::zeros(&lat, 1)))
        }
    }
}

struct GradBuffers {
    gu: Vec<Complex64>,
    ga: FormField,
}

fn grad_inf_norm(gu: &[Complex64], ga: &FormField, cell_weight: f64) -> f64 {
    let mut m: f64 = 0.0;
    for z in gu {
        m = m.max(z.norm());
    }
    m = m.max(ga.norm_inf());
    m / cell_weight
}

fn axpy_state(dst: &mut State, src: &State, t: f64, gu: &[Complex64], ga: &FormField) {
    for ((d, s), g) in dst.u.iter_mut().zip(&src.u).zip(gu) {
        *d = s - t * g;
    }
    for ((d, s), g) in dst
        .a
        .values_mut()
        .iter_mut()
        .zip(src.a.values())
        .zip(ga.values())
    {
        *d = s - t * g;
    }
}

fn dot(gu1: &[Complex64], ga1: &FormField, gu2: &[Complex64], ga2: &FormField) -> f64 {
    let mut s = 0.0;
    for (a, b) in gu1.iter().zip(gu2) {
        s += a.re * b.re + a.im * b.im;
    }
    for (a, b) in ga1.values().iter().zip(ga2.values()) {
        s += a * b;
    }
    s
}

/// Minimize the energy at fixed ε. Returns the final state and the trace;
/// non-convergence is reported through the trace, not as an error.
pub fn minimize(state: &State, epsilon: f64, options: &SolveOptions) -> Result<(State, SolveTrace)> {
    let start = Instant::now();
    let lat = state.lattice().clone();
    let w = lat.cell_weight();
    if !(options.tolerance > 0.0) || options.max_iterations < 1 {
        return Err(GlbError::Parameter(
            "tolerance must be > 0 and max iterations >= 1".into(),
        ));
    }

    let mut cur = state.clone();
    let mut trial = state.clone();
    let mut g = GradBuffers {
        gu: Vec::new(),
        ga: FormField::zeros(&lat, 1),
    };
    let mut energy_cur = energy_and_gradient(&cur, epsilon, &mut g.gu, &mut g.ga)?;

    let monitor_max_principle = cur.max_modulus() <= 1.0;
    let mut max_modulus_seen = cur.max_modulus();
    let mut warning = false;
    let mut aborted: Option<String> = None;

    let mut trace = Vec::new();
    let mut converged = false;

    // nonlinear-CG direction memory
    let mut prev_gu: Vec<Complex64> = Vec::new();
    let mut prev_ga = FormField::zeros(&lat, 1);
    let mut dir_gu: Vec<Complex64> = Vec::new();
    let mut dir_ga = FormField::zeros(&lat, 1);

    // BB memory: previous step and gradient
    let mut last_t = options.initial_step;
    let mut have_prev = false;

    // non-monotone (Grippo-type) line-search reference window and a
    // no-progress guard that detects the floating-point floor
    const NM_WINDOW: usize = 10;
    const STALL_WINDOW: usize = 5_000;
    const ARMIJO_C: f64 = 1e-4;
    let mut recent: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
    recent.push_back(energy_cur);
    let mut best_energy = energy_cur;
    let mut since_best = 0usize;

    for _iter in 0..options.max_iterations {
        let gnorm = grad_inf_norm(&g.gu, &g.ga, w);
        if gnorm <= options.tolerance {
            converged = true;
            break;
        }

        // choose a search direction
        let use_cg = options.method == Method::NonlinearCg;
        if use_cg {
            if dir_gu.is_empty() {
                dir_gu = g.gu.iter().map(|z| -z).collect();
                dir_ga = FormField::from_values(&lat, 1, g.ga.values().iter().map(|v| -v).collect());
            } else {
                // Polak-Ribière+ with automatic restart
                let gg = dot(&prev_gu, &prev_ga, &prev_gu, &prev_ga).max(1e-300);
                let mut num = dot(&g.gu, &g.ga, &g.gu, &g.ga);
                num -= dot(&g.gu, &g.ga, &prev_gu, &prev_ga);
                let beta = (num / gg).max(0.0);
                for (dv, gv) in dir_gu.iter_mut().zip(&g.gu) {
                    *dv = -gv + beta * *dv;
                }
                for (dv, gv) in dir_ga.values_mut().iter_mut().zip(g.ga.values()) {
                    *dv = -gv + beta * *dv;
                }
                if dot(&dir_gu, &dir_ga, &g.gu, &g.ga) >= 0.0 {
                    for (dv, gv) in dir_gu.iter_mut().zip(&g.gu) {
                        *dv = -gv;
                    }
                    for (dv, gv) in dir_ga.values_mut().iter_mut().zip(g.ga.values()) {
                        *dv = -gv;
                    }
                }
            }
        }

        // step length: BB2 from the last accepted move, else keep last step
        let mut t = if use_cg {
            (last_t * 2.0).min(1.0)
        } else if have_prev {
            // s = -last_t * g_prev, y = g - g_prev
            let mut sy = 0.0;
            let mut yy = 0.0;
            for (gn, gp) in g.gu.iter().zip(&prev_gu) {
                let y = gn - gp;
                sy += -last_t * (gp.re * y.re + gp.im * y.im);
                yy += y.norm_sqr();
            }
            for (gn, gp) in g.ga.values().iter().zip(prev_ga.values()) {
                let y = gn - gp;
                sy += -last_t * gp * y;
                yy += y * y;
            }
            let bb = sy / yy.max(1e-300);
            if bb.is_finite() && bb > 0.0 {
                bb.min(1e6)
            } else {
                // nonconvex stretch: reuse the last accepted step and let
                // backtracking cut it down
                last_t
            }
        } else {
            options.initial_step
        };

        // directional derivative of the trial move (d = -g for the flow)
        let slope = if use_cg {
            dot(&dir_gu, &dir_ga, &g.gu, &g.ga)
        } else {
            -dot(&g.gu, &g.ga, &g.gu, &g.ga)
        };
        let e_ref = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        // backtracking with non-monotone Armijo acceptance: compare against
        // the worst of the last few accepted energies so BB can take its
        // natural, occasionally ascending, steps
        let mut accepted = false;
        let mut energy_new = energy_cur;
        for _bt in 0..=options.max_backtracks {
            if use_cg {
                // move along dir
                for ((d, s), v) in trial.u.iter_mut().zip(&cur.u).zip(&dir_gu) {
                    *d = s + t * v;
                }
                for ((d, s), v) in trial
                    .a
                    .values_mut()
                    .iter_mut()
                    .zip(cur.a.values())
                    .zip(dir_ga.values())
                {
                    *d = s + t * v;
                }
            } else {
                axpy_state(&mut trial, &cur, t, &g.gu, &g.ga);
            }
            energy_new = energy(&trial, epsilon)?.total;
            let modulus_ok = !monitor_max_principle || trial.max_modulus() <= 1.0 + 1e-3;
            if energy_new <= e_ref + ARMIJO_C * t * slope && modulus_ok {
                accepted = true;
                break;
            }
            t *= options.backtrack_factor;
        }
        if !accepted {
            aborted = Some(format!(
                "line search stalled at energy {energy_cur:.6e}, grad_inf {gnorm:.3e} \
                 (tolerance {:.1e} may be below the floating-point floor)",
                options.tolerance
            ));
            break;
        }

        std::mem::swap(&mut cur.u, &mut trial.u);
        std::mem::swap(&mut cur.a, &mut trial.a);
        energy_cur = energy_new;
        recent.push_back(energy_cur);
        if recent.len() > NM_WINDOW {
            recent.pop_front();
        }
        if energy_cur < best_energy {
            best_energy = energy_cur;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_WINDOW {
                aborted = Some(format!(
                    "no energy improvement in {STALL_WINDOW} iterations at energy \
                     {energy_cur:.6e}, grad_inf {gnorm:.3e} (tolerance {:.1e} may be \
                     below the floating-point floor)",
                    options.tolerance
                ));
                break;
            }
        }
        last_t = t;
        have_prev = true;
        std::mem::swap(&mut prev_gu, &mut g.gu);
        std::mem::swap(&mut prev_ga, &mut g.ga);
        energy_and_gradient(&cur, epsilon, &mut g.gu, &mut g.ga)?;

        let mm = cur.max_modulus();
        max_modulus_seen = max_modulus_seen.max(mm);
        if monitor_max_principle {
            if mm > 1.0 + 1e-2 {
                aborted = Some(format!(
                    "max-principle violation: max|u| = {mm} exceeded 1 + 1e-2"
                ));
                trace.push(IterationRecord {
                    energy: energy_cur,
                    grad_inf: gnorm,
                    step: t,
                });
                break;
            }
            if mm > 1.0 + 1e-3 {
                warning = true;
            }
        }
        trace.push(IterationRecord {
            energy: energy_cur,
            grad_inf: gnorm,
            step: t,
        });
    }

    let final_grad_inf = grad_inf_norm(&g.gu, &g.ga, w);
    if !converged && aborted.is_none() && final_grad_inf <= options.tolerance {
        converged = true;
    }
    let final_residuals = residuals(&cur, epsilon)?;
    let solve_trace = SolveTrace {
        iterations: trace,
        converged,
        aborted,
        final_energy: energy_cur,
        final_grad_inf,
        final_residuals,
        wall_time: start.elapsed(),
        max_modulus_seen,
        max_principle_warning: warning,
    };
    Ok((cur, solve_trace))
}

/// Per-ε monitors of a continuation run.
#[derive(Debug, Clone)]
pub struct ContinuationEntry {
    pub epsilon: f64,
    pub breakdown: EnergyBreakdown,
    /// total / |log ε|.
    pub lambda_ratio: f64,
    /// ∫|F|² / |log ε|.
    pub curvature_ratio: f64,
    pub max_u: f64,
    pub eps_max_du: f64,
    pub eps_max_f: f64,
    pub vortex_components: usize,
}

/// Result of a warm-started ε-continuation.
#[derive(Debug)]
pub struct ContinuationResult {
    pub entries: Vec<ContinuationEntry>,
    /// Linear fit of total energy vs |log ε|.
    pub fit: LineFit,
    pub states: Vec<State>,
    pub traces: Vec<SolveTrace>,
}

/// Minimize along a strictly decreasing ε schedule, warm-starting each solve
/// from the previous minimizer.
pub fn continuation(
    conn: &Arc<RefConnection>,
    schedule: &[f64],
    init: InitMode,
    options: &SolveOptions,
) -> Result<ContinuationResult> {
    let lat = conn.lattice().clone();
    if schedule.is_empty() {
        return Err(GlbError::Range("empty epsilon schedule".into()));
    }
    for w in schedule.windows(2) {
        if w[1] >= w[0] {
            return Err(GlbError::Range(format!(
                "epsilon schedule must be strictly decreasing: {} then {}",
                w[0], w[1]
            )));
        }
    }
    let floor = 2.0 * lat.spacing();
    for &e in schedule {
        if e < floor {
            return Err(GlbError::Range(format!(
                "epsilon {e} below the resolution floor 2h = {floor}"
            )));
        }
    }

    let mut state = init_state(conn, init, schedule[0], options.seed)?;
    let mut entries = Vec::with_capacity(schedule.len());
    let mut states = Vec::with_capacity(schedule.len());
    let mut traces = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        let (next, trace) = minimize(&state, eps, options)?;
        if !trace.converged {
            return Err(GlbError::Solver {
                residual: trace.final_grad_inf,
                iterations: trace.iterations.len(),
            });
        }
        state = next;

        let breakdown = energy(&state, eps)?;
        let log_abs = eps.ln().abs();
        let du = covariant_derivative(&state);
        let max_du = du.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let f = curvature(&state);
        let max_f = f.norm_inf();
        let f2_integral = 2.0 * breakdown.curvature;
        let vortices = vortex_set(&state, 0.5)?;
        entries.push(ContinuationEntry {
            epsilon: eps,
            breakdown,
            lambda_ratio: breakdown.total / log_abs,
            curvature_ratio: f2_integral / log_abs,
            max_u: state.max_modulus(),
            eps_max_du: eps * max_du,
            eps_max_f: eps * max_f,
            vortex_components: vortices.components,
        });
        states.push(state.clone());
        traces.push(trace);
    }

    let xs: Vec<f64> = schedule.iter().map(|e| e.ln().abs()).collect();
    let ys: Vec<f64> = entries.iter().map(|en| en.breakdown.total).collect();
    let fit = fit_line(&xs, &ys);

    Ok(ContinuationResult {
        entries,
        fit,
        states,
        traces,
    })
}

/// Convenience builder mirroring the bundle constructor, used by the
/// harness and tests.
pub fn reference(lattice: &Arc<crate::lattice::Lattice>, d: i64) -> Arc<RefConnection> {
    Arc::new(make_reference_connection(lattice, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;

    fn conn2d(n: usize, d: i64) -> Arc<RefConnection> {
        let lat = build_lattice(2, &[n, n], &[1.0, 1.0]).unwrap();
        reference(&lat, d)
    }

    #[test]
    fn vacuum_returns_immediately() {
        let conn = conn2d(8, 0);
        let st = init_state(&conn, InitMode::Vacuum, 0.1, 0).unwrap();
        let (out, trace) = minimize(&st, 0.1, &SolveOptions::default()).unwrap();
        assert!(trace.converged);
        assert!(trace.iterations.is_empty());
        assert_eq!(trace.final_energy, 0.0);
        assert_eq!(out.max_modulus(), 1.0);
    }

    #[test]
    fn init_deterministic() {
        let conn = conn2d(8, 1);
        for mode in [InitMode::Random, InitMode::VortexAnsatz] {
            let a = init_state(&conn, mode, 0.1, 42).unwrap();
            let b = init_state(&conn, mode, 0.1, 42).unwrap();
            assert_eq!(a.u, b.u);
            assert_eq!(a.a.values(), b.a.values());
        }
    }

    #[test]
    fn vortex_ansatz_single_core() {
        let conn = conn2d(32, 1);
        let st = init_state(&conn, InitMode::VortexAnsatz, 0.1, 7).unwrap();
        let count = st.u.iter().filter(|z| z.norm() < 0.1).count();
        assert_eq!(count, 1);
        assert!(st.max_modulus() <= 1.0);
    }

    #[test]
    fn vortex_ansatz_needs_degree() {
        let conn = conn2d(8, 0);
        assert!(matches!(
            init_state(&conn, InitMode::VortexAnsatz, 0.1, 0),
            Err(GlbError::Mode(_))
        ));
    }

    #[test]
    fn random_init_in_unit_disk() {
        let conn = conn2d(16, 0);
        let st = init_state(&conn, InitMode::Random, 0.1, 3).unwrap();
        assert!(st.max_modulus() <= 1.0);
    }

    fn check_converges_to_vacuum(method: Method) {
        let conn = conn2d(32, 0);
        let st = init_state(&conn, InitMode::Random, 0.1, 11).unwrap();
        let opts = SolveOptions {
            method,
            tolerance: 1e-8,
            ..Default::default()
        };
        let (out, trace) = minimize(&st, 0.1, &opts).unwrap();
        assert!(trace.converged, "aborted: {:?}", trace.aborted);
        assert!(trace.final_energy < 1e-6, "E = {}", trace.final_energy);
        let mm = out.max_modulus();
        assert!((mm - 1.0).abs() <= 1e-3, "max|u| = {mm}");
        // non-monotone descent: each accepted energy is bounded by the worst
        // of the previous ten
        let es: Vec<f64> = trace.iterations.iter().map(|r| r.energy).collect();
        for i in 1..es.len() {
            let lo = i.saturating_sub(10);
            let worst = es[lo..i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(es[i] <= worst + 1e-12, "iteration {i}");
        }
        // criticality handoff
        assert!(trace.final_residuals.el_u_inf <= 10.0 * opts.tolerance);
        assert!(trace.final_residuals.el_a_inf <= 10.0 * opts.tolerance);
        // max principle honored along the flow
        assert!(trace.max_modulus_seen <= 1.0 + 1e-2);
    }

    #[test]
    fn bb_flow_converges_to_vacuum() {
        check_converges_to_vacuum(Method::GradientFlow);
    }

    #[test]
    fn ncg_converges_to_vacuum() {
        check_converges_to_vacuum(Method::NonlinearCg);
    }

    #[test]
    fn continuation_validation() {
        let conn = conn2d(16, 1);
        let opts = SolveOptions::default();
        assert!(continuation(&conn, &[], InitMode::VortexAnsatz, &opts).is_err());
        assert!(continuation(&conn, &[0.1, 0.2], InitMode::VortexAnsatz, &opts).is_err());
        assert!(continuation(&conn, &[0.1, 0.05], InitMode::VortexAnsatz, &opts).is_err()); // 2h floor
    }

    #[test]
    fn continuation_small_sweep() {
        let conn = conn2d(32, 1);
        let opts = SolveOptions {
            tolerance: 5e-5,
            ..Default::default()
        };
        let res = continuation(&conn, &[0.2, 0.15], InitMode::VortexAnsatz, &opts).unwrap();
        assert_eq!(res.entries.len(), 2);
        for en in &res.entries {
            assert!(en.breakdown.total > 0.0);
            assert!(en.max_u <= 1.0 + 1e-3);
        }
        assert!(res.fit.slope.is_finite());
    }
}
