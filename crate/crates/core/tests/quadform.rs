use qgraph::graph::{apply_surgery, make_equilateral_star, make_star, BoundaryType, SurgeryOp};
use qgraph::quadform::{
    build_transplant_trial, l2_norm_sq, rayleigh_quotient, FormOptions, QuadformError, TrialFunction,
};
use qgraph::secular::{eigenfunction_at, lowest_eigenvalues, SolverOptions};

#[test]
fn extension_by_zero_keeps_the_rayleigh_quotient() {
    let opts = SolverOptions::default();
    let form = FormOptions::default();
    let g = make_star(&[0.6, 1.0, 1.4, 0.9], BoundaryType::Neumann).unwrap();
    let lambda = lowest_eigenvalues(&g, 1, &opts).unwrap()[0];
    let psi = &eigenfunction_at(&g, lambda, &opts).unwrap()[0];
    let f = TrialFunction::from_eigenfunction(&g, psi);
    let op = SurgeryOp::AttachEdge { vertex: "c".into(), length: 0.8, position: 4, edge_id: None, tip_bc: None };
    let h = apply_surgery(&g, &op).unwrap();
    let extended = f.transfer(&g, &h);
    assert!((l2_norm_sq(&extended, &form) - l2_norm_sq(&f, &form)).abs() < 1e-12);
    let q = rayleigh_quotient(&h, &extended, &form).unwrap();
    assert!((q - lambda).abs() < 1e-9 * lambda.abs(), "{q} vs {lambda}");
    let new_lambda = lowest_eigenvalues(&h, 1, &opts).unwrap()[0];
    assert!(new_lambda <= q + 1e-9);
}

#[test]
fn transplant_trial_lowers_the_rayleigh_quotient() {
    let opts = SolverOptions::default();
    let form = FormOptions::default();
    let g = make_star(&[0.7, 1.1, 1.6], BoundaryType::Neumann).unwrap();
    let lambda = lowest_eigenvalues(&g, 1, &opts).unwrap()[0];
    let psi = &eigenfunction_at(&g, lambda, &opts).unwrap()[0];
    for ell in [0.1, 0.3, 0.6] {
        let (h, trial) = build_transplant_trial(&g, psi, "e1", "e2", ell).unwrap();
        assert!((h.total_length() - g.total_length()).abs() < 1e-12);
        let q = rayleigh_quotient(&h, &trial, &form).unwrap();
        let after = lowest_eigenvalues(&h, 1, &opts).unwrap()[0];
        assert!(q < lambda, "ℓ = {ell}: {q} ≥ {lambda}");
        assert!(after <= q + 1e-9, "ℓ = {ell}: {after} > {q}");
    }
}

#[test]
fn whole_edge_transplant_needs_even_degree() {
    let opts = SolverOptions::default();
    let odd = make_equilateral_star(3, 1.0, BoundaryType::Neumann).unwrap();
    let lambda = lowest_eigenvalues(&odd, 1, &opts).unwrap()[0];
    let psi = &eigenfunction_at(&odd, lambda, &opts).unwrap()[0];
    assert!(matches!(
        build_transplant_trial(&odd, psi, "e1", "e2", 1.0),
        Err(QuadformError::PreconditionViolated(_))
    ));
    let even = make_star(&[0.5, 1.0, 1.2, 0.8], BoundaryType::Neumann).unwrap();
    let lambda = lowest_eigenvalues(&even, 1, &opts).unwrap()[0];
    let psi = &eigenfunction_at(&even, lambda, &opts).unwrap()[0];
    let (h, trial) = build_transplant_trial(&even, psi, "e1", "e2", 0.5).unwrap();
    assert_eq!(h.num_edges(), 3);
    let q = rayleigh_quotient(&h, &trial, &FormOptions::default()).unwrap();
    assert!(q <= lambda + 1e-9);
}
