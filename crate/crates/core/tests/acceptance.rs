//! Acceptance suite: prints one PASS/FAIL line per criterion.
//!
//! Environment:
//! - `ISAC_ACCEPTANCE_ONLY=1,3,4` runs a subset (the others print SKIP).
//! - `ISAC_ACCEPTANCE_STRICT=1` makes the process exit non-zero when any
//!   criterion fails; by default the verdicts are reported and the target
//!   exits successfully.

mod common;

use std::time::Instant;

use common::{phase_grid_optimum, rel_err, toy_channel, toy_params};
use isac_core::channel::{gen_channels, SystemParams};
use isac_core::conic::{
    embed_hermitian, epigraph_maxmin, hermitian_dense_coef, hermitian_trace_coef, solve, unembed, BlockCoef,
    ConicProblem, LinearFunctional, Relation, Sense, Status,
};
use isac_core::experiments::{run_convergence, run_gain_vs_gamma, ExperimentConfig, ResultRow, Scheme};
use isac_core::metrics::{combined_channel, min_gain, ReflectDesign, TransmitDesign};
use isac_core::numerics::{
    c64, db_to_linear, eig_hermitian, seeded_stream, standard_complex_matrix, standard_complex_vector,
    HermitianMatrix,
};
use isac_core::optimizer::{algorithm1, AlternatingSettings};
use isac_core::reflect::build_lifted;
use isac_core::transmit::{build_sdr21_with, prop1_extract, solve_sdr21};
use isac_core::Error;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Rows produced by the Monte Carlo criteria, checked again by criterion 8.
#[derive(Default)]
struct Suite {
    rows: Vec<ResultRow>,
}

fn check(flag: bool, failures: &mut Vec<String>, what: String) {
    if !flag {
        failures.push(what);
    }
}

// 1 -------------------------------------------------------------------------

fn rank_one_exactness() -> Verdict {
    let mut optima = 0;
    let mut failures = Vec::new();
    let mut worst = [0.0_f64; 3];
    let mut min_eigs = [f64::INFINITY; 2];
    let mut seed = 0;
    while optima < 100 && seed < 400 {
        seed += 1;
        let mut rng = seeded_stream(seed, 0);
        let gamma_db = 16.0 * rng.random::<f64>();
        let params = SystemParams {
            gamma: db_to_linear(gamma_db),
            ..SystemParams::default()
        };
        let chan = gen_channels(&params, &mut rng).unwrap();
        let refl = ReflectDesign::random(params.n, &mut rng);
        let sol = solve_sdr21(&chan, &refl, &params).unwrap();
        if sol.status != Status::Optimal {
            continue;
        }
        optima += 1;
        let h = combined_channel(&chan, &refl).unwrap();
        let (tx, rep) = prop1_extract(&sol.w_star, &sol.r0_star, &h).unwrap();
        let obj = min_gain(&params.sensing_angles, params.element_spacing_ratio, &chan, &refl, &tx).unwrap();
        let obj_err = rel_err(obj, sol.objective);
        worst[0] = worst[0].max(rep.covariance_residual);
        worst[1] = worst[1].max(rep.snr_residual);
        worst[2] = worst[2].max(obj_err);
        min_eigs[0] = min_eigs[0].min(rep.min_eig_w_gap);
        min_eigs[1] = min_eigs[1].min(rep.min_eig_r0);
        check(rep.covariance_residual <= 1e-7, &mut failures, format!("seed {seed}: covariance {:.1e}", rep.covariance_residual));
        check(rep.snr_residual <= 1e-7, &mut failures, format!("seed {seed}: snr {:.1e}", rep.snr_residual));
        check(rep.min_eig_w_gap >= -1e-8, &mut failures, format!("seed {seed}: W gap eig {:.1e}", rep.min_eig_w_gap));
        check(rep.min_eig_r0 >= -1e-8, &mut failures, format!("seed {seed}: R0 eig {:.1e}", rep.min_eig_r0));
        check(obj_err <= 1e-7, &mut failures, format!("seed {seed}: objective {obj_err:.1e}"));
    }
    check(optima >= 100, &mut failures, format!("only {optima} optimal instances"));
    Verdict::new(
        failures.is_empty(),
        format!(
            "{optima} optima; max residuals cov {:.1e}, snr {:.1e}, objective {:.1e}; min eig W*-W^ {:.1e}, R0^ {:.1e}{}",
            worst[0],
            worst[1],
            worst[2],
            min_eigs[0],
            min_eigs[1],
            summary(&failures)
        ),
    )
}

fn summary(failures: &[String]) -> String {
    match failures.len() {
        0 => String::new(),
        n => format!("; {n} violations, first: {}", failures[0]),
    }
}

// 2 -------------------------------------------------------------------------

fn random_hermitian(n: usize, seed: u64) -> HermitianMatrix {
    let mut rng = seeded_stream(seed, 9);
    HermitianMatrix::symmetrized(standard_complex_matrix(n, n, &mut rng))
}

fn solver_oracles() -> Verdict {
    let mut failures = Vec::new();
    let mut worst_lambda: f64 = 0.0;
    for n in 1..=16usize {
        for rep in 0..3u64 {
            let c = random_hermitian(n, 1000 * n as u64 + rep);
            let mut base = ConicProblem::new(vec![2 * n], 0, Sense::Maximize);
            base.add_constraint(LinearFunctional::new().block(0, hermitian_trace_coef(n)), Relation::Eq, 1.0);
            let f = LinearFunctional::new().block(0, hermitian_dense_coef(&c));
            let p = epigraph_maxmin(&[f], base).unwrap().0;
            let sol = solve(&p).unwrap();
            let (ev, _) = eig_hermitian(&c);
            let lmax = ev[n - 1];
            let err = (sol.objective - lmax).abs() / lmax.abs().max(1e-12);
            worst_lambda = worst_lambda.max(err);
            check(
                sol.status == Status::Optimal && err <= 1e-6,
                &mut failures,
                format!("lambda_max n={n}: {:?} rel {err:.1e}", sol.status),
            );
        }
    }
    let mut worst_embed: f64 = 0.0;
    for n in 1..=16usize {
        let a = random_hermitian(n, 5000 + n as u64);
        let b = random_hermitian(n, 6000 + n as u64);
        let (ea, eb) = (embed_hermitian(&a), embed_hermitian(&b));
        let scale = (a.frobenius() * b.frobenius()).max(1.0);
        let e1 = (ea.trace() - 2.0 * a.trace()).abs() / a.frobenius().max(1.0);
        let e2 = ((ea.transpose() * &eb).trace() - 2.0 * a.trace_product(&b)).abs() / scale;
        let e3 = unembed(&ea).unwrap().sub(&a).frobenius() / a.frobenius().max(1.0);
        let e = e1.max(e2).max(e3);
        worst_embed = worst_embed.max(e);
        check(e <= 1e-12, &mut failures, format!("embedding n={n}: {e:.1e}"));
    }
    let mut infeasible = 0;
    let trace = |n: usize| LinearFunctional::new().block(0, BlockCoef::sparse((0..n).map(|i| (i, i, 1.0)).collect()));
    let mut toys = Vec::new();
    let mut p = ConicProblem::new(vec![3], 0, Sense::Minimize)
        .with_objective(LinearFunctional::new().block(0, BlockCoef::sparse(vec![(0, 0, 1.0)])));
    p.add_constraint(trace(3), Relation::Le, -1.0);
    toys.push(p);
    let mut p = ConicProblem::new(vec![4], 0, Sense::Maximize)
        .with_objective(LinearFunctional::new().block(0, BlockCoef::sparse(vec![(0, 0, 1.0)])));
    p.add_constraint(trace(4), Relation::Ge, 2.0);
    p.add_constraint(trace(4), Relation::Le, 1.0);
    toys.push(p);
    let mut p = ConicProblem::new(vec![2], 0, Sense::Minimize);
    p.add_constraint(LinearFunctional::new().block(0, BlockCoef::sparse(vec![(0, 1, 1.0)])), Relation::Eq, 1.0);
    p.add_constraint(trace(2), Relation::Le, 1.0);
    p.add_constraint(LinearFunctional::new().block(0, BlockCoef::sparse(vec![(0, 0, 1.0)])), Relation::Le, 0.1);
    p.add_constraint(LinearFunctional::new().block(0, BlockCoef::sparse(vec![(1, 1, 1.0)])), Relation::Le, 0.1);
    toys.push(p);
    for (k, p) in toys.iter().enumerate() {
        let sol = solve(p).unwrap();
        let certified = sol.status == Status::Infeasible && sol.certificate.is_some_and(|c| c > 1e-6);
        if certified {
            infeasible += 1;
        }
        check(certified, &mut failures, format!("toy {k}: {:?} certificate {:?}", sol.status, sol.certificate));
    }
    Verdict::new(
        failures.is_empty(),
        format!(
            "lambda_max n=1..16 worst rel {worst_lambda:.1e}; embedding worst {worst_embed:.1e}; {infeasible}/{} infeasible toys certified{}",
            toys.len(),
            summary(&failures)
        ),
    )
}

// 3 -------------------------------------------------------------------------

fn lifting_consistency() -> Verdict {
    let mut failures = Vec::new();
    let (mut worst_gain, mut worst_snr): (f64, f64) = (0.0, 0.0);
    for seed in 0..100u64 {
        let params = SystemParams {
            n: 8,
            ..SystemParams::default()
        };
        let mut rng = seeded_stream(seed, 0);
        let chan = gen_channels(&params, &mut rng).unwrap();
        let refl = ReflectDesign::random(params.n, &mut rng);
        let w = standard_complex_vector(params.m, &mut rng);
        let f = standard_complex_matrix(params.m, 1 + (seed as usize % params.m), &mut rng);
        let r0 = HermitianMatrix::symmetrized(&f * f.adjoint());
        let s = params.p0 / (w.norm_squared() + r0.trace());
        let tx = TransmitDesign::new(&w * c64(s.sqrt(), 0.0), r0.scale(s)).unwrap();
        let lp = build_lifted(&chan, &tx, &params).unwrap();
        let v_bar = refl.v_bar();

        let phi = refl.phi();
        let cov = tx.covariance();
        let m_eff = &phi * &chan.g;
        let shaped = &m_eff * cov.as_matrix() * m_eff.adjoint();
        for (l, &theta) in params.sensing_angles.iter().enumerate() {
            let a = isac_core::channel::steering_vector(theta, params.n, params.element_spacing_ratio);
            let direct = a.dotc(&(&shaped * &a)).re;
            let lifted = lp.r2(l).quad_form(&v_bar);
            let e = rel_err(direct, lifted);
            worst_gain = worst_gain.max(e);
            check(e <= 1e-9, &mut failures, format!("seed {seed} angle {l}: gain {e:.1e}"));
        }
        let h = chan.g.adjoint() * phi.adjoint() * &chan.h_r + &chan.h_d;
        let direct = h.dotc(&tx.w).norm_sqr() / params.sigma2;
        let lifted = (lp.r3_dense().quad_form(&v_bar) + lp.direct_term) / params.sigma2;
        let e = rel_err(direct, lifted);
        worst_snr = worst_snr.max(e);
        check(e <= 1e-9, &mut failures, format!("seed {seed}: snr {e:.1e}"));
    }
    Verdict::new(
        failures.is_empty(),
        format!("100 tuples at N=8; worst gain rel {worst_gain:.1e}, worst SNR rel {worst_snr:.1e}{}", summary(&failures)),
    )
}

// 4 -------------------------------------------------------------------------

fn brute_force_equivalence() -> Verdict {
    let mut failures = Vec::new();
    let mut worst: f64 = f64::INFINITY;
    let mut cases = 0;
    for n in [1usize, 2] {
        let grid = if n == 1 { 20_000 } else { 720 };
        for seed in 0..20u64 {
            for frac in [0.0, 0.5, 0.8] {
                let theta = (-60.0 + 6.0 * seed as f64).to_radians();
                let mut params = toy_params(n, 2, theta);
                let chan = toy_channel(&params, 500 + seed);
                params.gamma = 0.0;
                let (_, max_snr) = phase_grid_optimum(&chan, &params, grid);
                params.gamma = frac * max_snr;
                let Some(oracle) = phase_grid_optimum(&chan, &params, grid).0 else {
                    continue;
                };
                cases += 1;
                let settings = AlternatingSettings::default();
                let mut rng = seeded_stream(500 + seed, 1);
                let init = ReflectDesign::random(n, &mut rng);
                let got = match algorithm1(&chan, &params, init, &settings, &mut rng) {
                    Err(Error::Infeasible(_)) | Err(Error::RoundingFailed { .. }) => {
                        algorithm1(&chan, &params, ReflectDesign::cascade_aligned(&chan), &settings, &mut rng)
                    }
                    other => other,
                };
                match got {
                    Ok(sol) => {
                        let ratio = sol.min_gain / oracle;
                        worst = worst.min(ratio);
                        check(
                            ratio >= 0.95,
                            &mut failures,
                            format!("N={n} seed {seed} frac {frac}: ratio {ratio:.4}"),
                        );
                    }
                    Err(e) => failures.push(format!("N={n} seed {seed} frac {frac}: {e}")),
                }
            }
        }
    }
    Verdict::new(
        failures.is_empty(),
        format!("{cases} toy instances (N in {{1,2}}, M=2, L=1); worst pipeline/grid ratio {worst:.4}{}", summary(&failures)),
    )
}

// 5 -------------------------------------------------------------------------

fn convergence(suite: &mut Suite) -> Verdict {
    let mut cfg = ExperimentConfig::default();
    cfg.system.snr_threshold_db = 10.0;
    cfg.run.trials = 100;
    cfg.run.schemes = vec![Scheme::Proposed];
    let res = run_convergence(&cfg).expect("convergence study");
    let monotone = res.traces.iter().filter(|(_, t)| t.is_monotone(1e-9)).count();
    let within = res.converged_within(15);
    let iters: Vec<f64> = res.traces.iter().map(|(_, t)| t.iterations() as f64).collect();
    let med_iters = isac_core::experiments::median(&iters);
    let feasible = res.traces.len();
    suite.rows.extend(res.rows.iter().cloned());
    Verdict::new(
        feasible > 0 && monotone == feasible && within >= 0.9,
        format!(
            "{feasible}/100 runs produced a design; monotone {monotone}/{feasible}; converged within 15 iterations {:.0}% (need >= 90%); median iterations {med_iters}",
            100.0 * within
        ),
    )
}

// 6 -------------------------------------------------------------------------

fn scheme_ordering(suite: &mut Suite) -> Verdict {
    let mut cfg = ExperimentConfig::default();
    cfg.run.trials = 50;
    cfg.run.gamma_sweep_db = (0..=8).map(|k| 2.0 * k as f64).collect();
    let res = run_gain_vs_gamma(&cfg).expect("gain-versus-threshold study");
    suite.rows.extend(res.rows.iter().cloned());
    let med = |s: Scheme, g: f64| res.cell(s, g).map_or(f64::NAN, |c| c.median_min_gain);
    let infeas = |s: Scheme, g: f64| res.cell(s, g).map_or(f64::NAN, |c| c.infeasibility_rate);
    let mut failures = Vec::new();
    let mut table = Vec::new();
    for &g in &cfg.run.gamma_sweep_db {
        let p = med(Scheme::Proposed, g);
        let i = med(Scheme::InfoOnly, g);
        let s = med(Scheme::Separate, g);
        table.push(format!(
            "{g}dB prop {:.2} info {:.2} sep {:.2} sep-infeas {:.2}",
            10.0 * p.log10(),
            10.0 * i.log10(),
            10.0 * s.log10(),
            infeas(Scheme::Separate, g)
        ));
        check(!(p < i), &mut failures, format!("proposed below info-only at {g} dB"));
        check(!(p < s), &mut failures, format!("proposed below separate at {g} dB"));
        if g <= 6.0 {
            check(
                infeas(Scheme::Separate, g) <= 0.2,
                &mut failures,
                format!("separate infeasibility {:.2} > 0.2 at {g} dB", infeas(Scheme::Separate, g)),
            );
        }
    }
    let r10 = med(Scheme::InfoOnly, 10.0) / med(Scheme::Proposed, 10.0);
    let r16 = med(Scheme::InfoOnly, 16.0) / med(Scheme::Proposed, 16.0);
    let sep16 = infeas(Scheme::Separate, 16.0);
    check(r10 <= 0.7, &mut failures, format!("info/proposed median ratio {r10:.3} > 0.7 at 10 dB"));
    check(r16 >= 0.9, &mut failures, format!("info/proposed median ratio {r16:.3} < 0.9 at 16 dB"));
    check(sep16 >= 0.8, &mut failures, format!("separate infeasibility {sep16:.2} < 0.8 at 16 dB"));
    let verdict = if failures.is_empty() {
        String::new()
    } else {
        format!("; unmet: {}", failures.join("; "))
    };
    Verdict::new(
        failures.is_empty(),
        format!(
            "50 trials per threshold; info/prop ratio {r10:.3} at 10 dB, {r16:.3} at 16 dB; separate infeasibility {sep16:.2} at 16 dB; medians [{}]{verdict}",
            table.join(" | ")
        ),
    )
}

// 7 -------------------------------------------------------------------------

fn sensing_beam_checks() -> Verdict {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    let mut seed = 0;
    while draws < 20 && seed < 200 {
        seed += 1;
        let mut rng = seeded_stream(7000 + seed, 0);
        let params = SystemParams {
            rician_k: f64::INFINITY,
            irs_pos: [5.0 + 40.0 * rng.random::<f64>(), -20.0 + 40.0 * rng.random::<f64>()],
            cu_pos: [20.0 + 60.0 * rng.random::<f64>(), -30.0 + 60.0 * rng.random::<f64>()],
            gamma: db_to_linear(12.0 * rng.random::<f64>()),
            sensing_angles: (0..5).map(|_| (-80.0 + 160.0 * rng.random::<f64>()).to_radians()).collect(),
            ..SystemParams::default()
        };
        let chan = gen_channels(&params, &mut rng).unwrap();
        let refl = ReflectDesign::random(params.n, &mut rng);
        let joint = build_sdr21_with(&chan, &refl, &params, true).unwrap().solve().unwrap();
        let info = build_sdr21_with(&chan, &refl, &params, false).unwrap().solve().unwrap();
        if joint.status != Status::Optimal || info.status != Status::Optimal {
            check(joint.status == info.status, &mut failures, format!("draw {seed}: {:?} vs {:?}", joint.status, info.status));
            continue;
        }
        draws += 1;
        let e = rel_err(joint.objective, info.objective);
        worst = worst.max(e);
        check(e <= 1e-5, &mut failures, format!("draw {seed}: R0=0 changes optimum by {e:.1e}"));
    }
    check(draws >= 20, &mut failures, format!("only {draws} LoS draws solved"));

    let mut ratios = Vec::new();
    let mut seed = 0;
    while ratios.len() < 100 && seed < 400 {
        seed += 1;
        let params = SystemParams {
            rician_k: 0.0,
            ..SystemParams::default()
        };
        let mut rng = seeded_stream(9000 + seed, 0);
        let chan = gen_channels(&params, &mut rng).unwrap();
        let refl = ReflectDesign::random(params.n, &mut rng);
        let sol = solve_sdr21(&chan, &refl, &params).unwrap();
        if sol.status != Status::Optimal {
            continue;
        }
        let h = combined_channel(&chan, &refl).unwrap();
        let (tx, _) = prop1_extract(&sol.w_star, &sol.r0_star, &h).unwrap();
        ratios.push(tx.r0.trace() / params.p0);
    }
    let med = isac_core::experiments::median(&ratios);
    check(ratios.len() >= 100, &mut failures, format!("only {} Rayleigh draws solved", ratios.len()));
    check(med > 0.01, &mut failures, format!("median tr(R0)/P0 {med:.4} <= 0.01"));
    Verdict::new(
        failures.is_empty(),
        format!(
            "LoS: {draws} draws, worst relative change {worst:.1e}; Rayleigh: median tr(R0)/P0 {med:.4} over {} seeds{}",
            ratios.len(),
            summary(&failures)
        ),
    )
}

// 8 -------------------------------------------------------------------------

fn certification(suite: &Suite) -> Option<Verdict> {
    if suite.rows.is_empty() {
        return None;
    }
    let designs: Vec<&ResultRow> = suite.rows.iter().filter(|r| r.status.has_solution()).collect();
    let bad: Vec<String> = designs
        .iter()
        .filter(|r| !r.certified)
        .map(|r| format!("{} seed {} at {} dB", r.scheme, r.seed, r.gamma_db))
        .collect();
    Some(Verdict::new(
        bad.is_empty(),
        format!(
            "{} designs from {} Monte Carlo trials checked; {} violations{}",
            designs.len(),
            suite.rows.len(),
            bad.len(),
            bad.first().map(|b| format!(", first: {b}")).unwrap_or_default()
        ),
    ))
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ISAC_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("ISAC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let selected = |k: u32| only.as_ref().is_none_or(|o| o.contains(&k));
    let mut suite = Suite::default();
    let mut failed = 0;
    let mut passed = 0;

    let names = [
        "rank-one reconstruction exactness",
        "conic solver oracles",
        "lifting consistency",
        "brute-force equivalence at toy scale",
        "convergence at 10 dB",
        "scheme ordering over the threshold sweep",
        "sensing beam under LoS and Rayleigh links",
        "feasibility certification",
    ];
    for (idx, name) in names.iter().enumerate() {
        let k = idx as u32 + 1;
        if !selected(k) {
            println!("criterion {k} ({name}): SKIP");
            continue;
        }
        let start = Instant::now();
        let verdict = match k {
            1 => Some(rank_one_exactness()),
            2 => Some(solver_oracles()),
            3 => Some(lifting_consistency()),
            4 => Some(brute_force_equivalence()),
            5 => Some(convergence(&mut suite)),
            6 => Some(scheme_ordering(&mut suite)),
            7 => Some(sensing_beam_checks()),
            _ => certification(&suite),
        };
        match verdict {
            Some(v) => {
                if v.pass {
                    passed += 1;
                } else {
                    failed += 1;
                }
                println!(
                    "criterion {k} ({name}): {} [{:.1}s] {}",
                    if v.pass { "PASS" } else { "FAIL" },
                    start.elapsed().as_secs_f64(),
                    v.detail
                );
            }
            None => println!("criterion {k} ({name}): SKIP (no Monte Carlo rows; run criteria 5 or 6)"),
        }
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
