use isac_core::conic::{
    embed_hermitian, epigraph_maxmin, hermitian_dense_coef, hermitian_trace_coef, solve,
    unembed, BlockCoef, ConicProblem, LinearFunctional, Relation, Sense, Status,
};
use isac_core::conic::sdpa::to_sdpa_string;
use isac_core::numerics::{eig_hermitian, seeded_stream, standard_complex_matrix, HermitianMatrix, RMat};

fn random_hermitian(n: usize, seed: u64) -> HermitianMatrix {
    let mut rng = seeded_stream(seed, 7);
    HermitianMatrix::symmetrized(standard_complex_matrix(n, n, &mut rng))
}

/// max t  s.t. t <= tr(C V), tr V <= 1, V PSD (complex, embedded).
fn lambda_max_problem(c: &HermitianMatrix) -> ConicProblem {
    let n = c.dim();
    let mut base = ConicProblem::new(vec![2 * n], 0, Sense::Maximize);
    base.add_constraint(
        LinearFunctional::new().block(0, hermitian_trace_coef(n)),
        Relation::Le,
        1.0,
    );
    let f = LinearFunctional::new().block(0, hermitian_dense_coef(c));
    epigraph_maxmin(&[f], base).unwrap().0
}

#[test]
fn lambda_max_matches_eigendecomposition() {
    for (k, n) in [1usize, 2, 3, 5, 8, 12, 16].into_iter().enumerate() {
        let c = random_hermitian(n, 100 + k as u64);
        let sol = solve(&lambda_max_problem(&c)).unwrap();
        assert_eq!(sol.status, Status::Optimal, "n={n}");
        let (ev, _) = eig_hermitian(&c);
        let lmax = ev[n - 1];
        let rel = (sol.objective - lmax).abs() / lmax.abs().max(1e-12);
        assert!(rel <= 1e-6, "n={n}: {} vs {lmax}", sol.objective);
        let v = unembed(&sol.blocks[0]).unwrap();
        assert!((c.trace_product(&v) - lmax).abs() / lmax.abs() <= 1e-6);
    }
}

#[test]
fn forced_diagonal_minimum_trace() {
    let mut p = ConicProblem::new(vec![2], 0, Sense::Minimize).with_objective(
        LinearFunctional::new().block(0, BlockCoef::sparse(vec![(0, 0, 1.0), (1, 1, 1.0)])),
    );
    p.add_constraint(
        LinearFunctional::new().block(0, BlockCoef::sparse(vec![(0, 0, 1.0)])),
        Relation::Eq,
        1.0,
    );
    let sol = solve(&p).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.objective - 1.0).abs() < 1e-6);
    let x = &sol.blocks[0];
    assert!((x[(0, 0)] - 1.0).abs() < 1e-6);
    assert!(x[(1, 1)].abs() < 1e-6 && x[(0, 1)].abs() < 1e-3);
    assert!(sol.relative_gap <= 1e-7);
    assert!(sol.max_violation <= 1e-6);
}

#[test]
fn negative_trace_is_infeasible() {
    let mut p = ConicProblem::new(vec![3], 0, Sense::Minimize)
        .with_objective(LinearFunctional::new().block(0, BlockCoef::sparse(vec![(0, 0, 1.0)])));
    p.add_constraint(
        LinearFunctional::new().block(0, BlockCoef::sparse(vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)])),
        Relation::Le,
        -1.0,
    );
    let sol = solve(&p).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
    assert!(sol.certificate.unwrap() > 1e-6);
}

#[test]
fn trivially_violated_zero_row_is_infeasible() {
    let mut p = ConicProblem::new(vec![1], 0, Sense::Minimize);
    p.add_constraint(LinearFunctional::new(), Relation::Ge, 1.0);
    assert_eq!(solve(&p).unwrap().status, Status::Infeasible);
}

#[test]
fn unbounded_direction_detected() {
    // max X11 with no upper limit
    let mut p = ConicProblem::new(vec![2], 0, Sense::Maximize)
        .with_objective(LinearFunctional::new().block(0, BlockCoef::sparse(vec![(0, 0, 1.0)])));
    p.add_constraint(
        LinearFunctional::new().block(0, BlockCoef::sparse(vec![(1, 1, 1.0)])),
        Relation::Eq,
        1.0,
    );
    assert_eq!(solve(&p).unwrap().status, Status::Unbounded);
}

#[test]
fn duplicated_objectives_collapse() {
    let c = random_hermitian(4, 9);
    let n = 4;
    let mut base = ConicProblem::new(vec![2 * n], 0, Sense::Maximize);
    base.add_constraint(LinearFunctional::new().block(0, hermitian_trace_coef(n)), Relation::Le, 1.0);
    let f = LinearFunctional::new().block(0, hermitian_dense_coef(&c));
    let (p2, _) = epigraph_maxmin(&[f.clone(), f], base).unwrap();
    let one = solve(&lambda_max_problem(&c)).unwrap();
    let two = solve(&p2).unwrap();
    assert!((one.objective - two.objective).abs() <= 1e-6 * one.objective.abs());
}

#[test]
fn low_rank_and_dense_coefficients_agree() {
    let mut rng = seeded_stream(5, 1);
    let f = RMat::from_fn(6, 2, |_, _| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng));
    let dense = &f * f.transpose();
    let build = |coef: BlockCoef| {
        let mut base = ConicProblem::new(vec![6], 0, Sense::Maximize);
        base.add_constraint(
            LinearFunctional::new().block(0, BlockCoef::sparse((0..6).map(|i| (i, i, 1.0)).collect())),
            Relation::Le,
            2.0,
        );
        epigraph_maxmin(&[LinearFunctional::new().block(0, coef)], base).unwrap().0
    };
    let a = solve(&build(BlockCoef::Dense(dense))).unwrap();
    let b = solve(&build(BlockCoef::low_rank(f, nalgebra::DVector::from_element(2, 1.0)))).unwrap();
    assert_eq!(a.status, Status::Optimal);
    assert!((a.objective - b.objective).abs() <= 1e-6 * a.objective);
}

#[test]
fn solver_is_deterministic() {
    let c = random_hermitian(6, 3);
    let a = solve(&lambda_max_problem(&c)).unwrap();
    let b = solve(&lambda_max_problem(&c)).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}

#[test]
fn embedding_round_trip_preserves_objective() {
    let c = random_hermitian(5, 4);
    let sol = solve(&lambda_max_problem(&c)).unwrap();
    let v = unembed(&sol.blocks[0]).unwrap();
    assert!(v.min_eigenvalue() >= -1e-8);
    let re = embed_hermitian(&v);
    let coef = hermitian_dense_coef(&c);
    let before = coef.inner(&sol.blocks[0]);
    let after = coef.inner(&re);
    assert!((before - after).abs() <= 1e-7 * before.abs().max(1.0));
}

#[test]
fn embedding_doubles_traces_and_inner_products() {
    for n in [1usize, 3, 7, 16] {
        let a = random_hermitian(n, 40 + n as u64);
        let b = random_hermitian(n, 80 + n as u64);
        let (ea, eb) = (embed_hermitian(&a), embed_hermitian(&b));
        assert!((ea.trace() - 2.0 * a.trace()).abs() <= 1e-12 * a.frobenius().max(1.0));
        let inner = (ea.transpose() * &eb).trace();
        assert!((inner - 2.0 * a.trace_product(&b)).abs() <= 1e-12 * (a.frobenius() * b.frobenius()).max(1.0));
        let back = unembed(&ea).unwrap();
        assert!(back.sub(&a).frobenius() <= 1e-12 * a.frobenius().max(1.0));
    }
}

#[test]
fn conflicting_bounds_are_certified_infeasible() {
    // tr X >= 2 and tr X <= 1
    let mut p = ConicProblem::new(vec![4], 0, Sense::Maximize)
        .with_objective(LinearFunctional::new().block(0, BlockCoef::sparse(vec![(0, 0, 1.0)])));
    let tr = || LinearFunctional::new().block(0, BlockCoef::sparse((0..4).map(|i| (i, i, 1.0)).collect()));
    p.add_constraint(tr(), Relation::Ge, 2.0);
    p.add_constraint(tr(), Relation::Le, 1.0);
    let sol = solve(&p).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
    assert!(sol.certificate.unwrap() > 1e-6);
}

#[test]
fn sdpa_dump_lists_every_constraint() {
    let c = random_hermitian(3, 11);
    let p = lambda_max_problem(&c);
    let text = to_sdpa_string(&p);
    let mut lines = text.lines().filter(|l| !l.starts_with('"'));
    let m: usize = lines.next().unwrap().trim().parse().unwrap();
    assert_eq!(m, p.constraints.len());
    let nblocks: usize = lines.next().unwrap().trim().parse().unwrap();
    let sizes: Vec<i64> = lines.next().unwrap().split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(sizes.len(), nblocks);
    assert_eq!(sizes[0], 6);
    let rhs: Vec<f64> = lines.next().unwrap().split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(rhs.len(), m);
    for l in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        assert_eq!(f.len(), 5, "{l}");
        let (mat, blk, i, j): (usize, usize, usize, usize) =
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap());
        assert!(mat <= m && blk >= 1 && blk <= nblocks && i <= j);
        f[4].parse::<f64>().unwrap();
    }
}
