use std::sync::Arc;

use proptest::prelude::*;
use qgraph::coupling::{build_vertex_pair, vertex_residual};
use qgraph::experiments::{permute_enumerations, random_graph, rng_for};
use qgraph::fem::oracle_eigenvalues;
use qgraph::graph::{
    make_equilateral_star, make_figure8, make_star, BoundaryType, Edge, EndpointRef, MetricGraph, Vertex,
};
use qgraph::quadform::{
    form_lower_bound, form_sesquilinear, form_value, l2_norm_sq, EdgeFn, FormOptions, TrialFunction,
};
use qgraph::secular::{eigenfunction_at, find_spectrum, lowest_eigenvalues, SolverOptions};
use qgraph::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Complex cubic `p(x) = Σ a_k x^k` together with its derivative.
fn cubic(a: [C64; 4]) -> EdgeFn {
    Arc::new(move |x: f64| {
        let v = a[0] + a[1] * x + a[2] * x * x + a[3] * x * x * x;
        let d = a[1] + a[2] * (2.0 * x) + a[3] * (3.0 * x * x);
        (v, d)
    })
}

fn coeffs() -> impl Strategy<Value = [C64; 4]> {
    prop::array::uniform4((-2.0..2.0f64, -2.0..2.0f64)).prop_map(|a| a.map(|(re, im)| c(re, im)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn form_is_hermitian_on_odd_stars(
        lengths in prop::collection::vec(0.2..2.0f64, 3),
        polys in prop::collection::vec(coeffs(), 3),
        other in prop::collection::vec(coeffs(), 3),
    ) {
        let g = make_star(&lengths, BoundaryType::Neumann).unwrap();
        let f = TrialFunction::from_fns(&g, polys.into_iter().map(cubic).collect());
        let h = TrialFunction::from_fns(&g, other.into_iter().map(cubic).collect());
        let opts = FormOptions::default();
        let v = form_sesquilinear(&g, &f, &f, &opts);
        prop_assert!(v.im.abs() < 1e-10 * v.re.abs().max(1.0), "Im a[f] = {}", v.im);
        let fh = form_sesquilinear(&g, &f, &h, &opts);
        let hf = form_sesquilinear(&g, &h, &f, &opts);
        prop_assert!((fh - hf.conj()).norm() < 1e-10 * fh.norm().max(1.0));
    }

    #[test]
    fn form_dominates_its_lower_bound(
        lengths in prop::collection::vec(0.3..2.0f64, 5),
        polys in prop::collection::vec(coeffs(), 5),
        frac in 0.05..1.0f64,
    ) {
        let g = make_star(&lengths, BoundaryType::Neumann).unwrap();
        let f = TrialFunction::from_fns(&g, polys.into_iter().map(cubic).collect());
        let opts = FormOptions::default();
        let l = frac * g.min_edge_length();
        let value = form_value(&g, &f, &opts).unwrap();
        let bound = form_lower_bound(&g, &f, l, &opts);
        prop_assert!(value >= bound - 1e-9 * value.abs().max(1.0), "{value} < {bound}");
    }

    #[test]
    fn sum_rules_hold_on_star_eigenfunction_traces(
        n in 3usize..=6,
        lengths in prop::collection::vec(0.3..2.0f64, 6),
    ) {
        let g = make_star(&lengths[..n], BoundaryType::Neumann).unwrap();
        let opts = SolverOptions::default();
        for lambda in lowest_eigenvalues(&g, 3, &opts).unwrap() {
            for psi in eigenfunction_at(&g, lambda, &opts).unwrap() {
                let (f, df) = psi.traces(&g, "c").unwrap();
                let scale = f.iter().chain(df.iter()).map(|z| z.norm()).fold(1.0, f64::max);
                let pair = build_vertex_pair(g.vertex("c").unwrap());
                prop_assert!(vertex_residual(&pair, &f, &df).unwrap() < 1e-9 * scale);
                let flux: C64 = df.iter().sum();
                prop_assert!(flux.norm() < 1e-9 * scale, "Σ F' = {flux} at λ = {lambda}");
                if n % 2 == 0 {
                    let alt: C64 = f.iter().enumerate().map(|(j, z)| if j % 2 == 0 { *z } else { -*z }).sum();
                    prop_assert!(alt.norm() < 1e-9 * scale, "Σ (-1)^j F = {alt} at λ = {lambda}");
                }
            }
        }
    }
}

#[test]
fn sum_rules_hold_on_general_graphs() {
    let opts = SolverOptions::default();
    let mut rng = rng_for(11);
    for _ in 0..6 {
        let g = random_graph(&mut rng, 3, 4, (0.4, 1.5));
        for lambda in lowest_eigenvalues(&g, 3, &opts).unwrap() {
            for psi in eigenfunction_at(&g, lambda, &opts).unwrap() {
                for v in g.vertices().iter().filter(|v| v.boundary == BoundaryType::Coupled) {
                    let (f, df) = psi.traces(&g, &v.id).unwrap();
                    let scale = f.iter().chain(df.iter()).map(|z| z.norm()).fold(1.0, f64::max);
                    let flux: C64 = df.iter().sum();
                    assert!(flux.norm() < 1e-9 * scale, "vertex {} λ = {lambda}", v.id);
                    if v.degree() % 2 == 0 {
                        let alt: C64 = f.iter().enumerate().map(|(j, z)| if j % 2 == 0 { *z } else { -*z }).sum();
                        assert!(alt.norm() < 1e-9 * scale, "vertex {} λ = {lambda}", v.id);
                    }
                }
            }
        }
    }
}

#[test]
fn rayleigh_identity_for_eigenpairs() {
    let opts = SolverOptions::default();
    let form = FormOptions::default();
    let graphs = [
        make_star(&[0.6, 1.1, 1.7], BoundaryType::Neumann).unwrap(),
        make_star(&[0.8, 0.9, 1.3, 0.5], BoundaryType::Dirichlet).unwrap(),
        make_equilateral_star(6, 1.0, BoundaryType::Neumann).unwrap(),
        make_figure8(0.7, 1.4).unwrap(),
    ];
    for g in &graphs {
        for lambda in lowest_eigenvalues(g, 5, &opts).unwrap() {
            for psi in eigenfunction_at(g, lambda, &opts).unwrap() {
                let f = TrialFunction::from_eigenfunction(g, &psi);
                let norm = l2_norm_sq(&f, &form);
                let value = form_value(g, &f, &form).unwrap();
                let rel = (value - lambda * norm).abs() / (lambda.abs() * norm).max(1e-12);
                assert!(
                    rel < 1e-6 || (value - lambda * norm).abs() < 1e-9,
                    "a[ψ] = {value}, λ‖ψ‖² = {}",
                    lambda * norm
                );
            }
        }
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn star_and_tree_spectra_ignore_the_enumeration() {
    let opts = SolverOptions::default();
    let mut rng = rng_for(3);
    let mut graphs = vec![
        make_star(&[0.4, 0.9, 1.3, 0.7, 1.1], BoundaryType::Neumann).unwrap(),
        make_star(&[0.5, 1.5, 1.0, 0.8], BoundaryType::Dirichlet).unwrap(),
    ];
    for nv in [4, 5, 6] {
        graphs.push(random_graph(&mut rng, nv, nv - 1, (0.3, 1.5)));
    }
    for g in &graphs {
        let base = lowest_eigenvalues(g, 5, &opts).unwrap();
        for _ in 0..3 {
            let h = permute_enumerations(g, &mut rng);
            let other = lowest_eigenvalues(&h, 5, &opts).unwrap();
            assert!(max_diff(&base, &other) < 1e-8, "{base:?} vs {other:?}");
        }
    }
}

fn interleaved_figure8(l1: f64, l2: f64) -> MetricGraph {
    MetricGraph::new(
        vec![Vertex::new(
            "v",
            BoundaryType::Coupled,
            vec![EndpointRef::start("e1"), EndpointRef::start("e2"), EndpointRef::end("e1"), EndpointRef::end("e2")],
        )],
        vec![Edge::new("e1", "v", "v", l1), Edge::new("e2", "v", "v", l2)],
    )
    .unwrap()
}

/// On graphs with cycles the spectrum depends on the cyclic order: the
/// interleaved figure-8 loses the eigenvalue -1. Two independent methods agree.
#[test]
fn cyclic_enumeration_changes_the_figure8_spectrum() {
    let opts = SolverOptions::default();
    let standard = make_figure8(1.0, 1.0).unwrap();
    let interleaved = interleaved_figure8(1.0, 1.0);
    let a = lowest_eigenvalues(&standard, 3, &opts).unwrap();
    let b = lowest_eigenvalues(&interleaved, 3, &opts).unwrap();
    assert!((a[0] + 1.0).abs() < 1e-8);
    assert!(b[0].abs() < 1e-8, "{b:?}");
    let fem = oracle_eigenvalues(&interleaved, 3, 1e-3).unwrap();
    assert!(max_diff(&b, &fem) < 5e-2, "{b:?} vs {fem:?}");
    let fem_standard = oracle_eigenvalues(&standard, 3, 1e-3).unwrap();
    assert!(max_diff(&a, &fem_standard) < 5e-2, "{a:?} vs {fem_standard:?}");
}

#[test]
fn figure8_positive_roots_scale_as_inverse_square() {
    let opts = SolverOptions::default();
    let base = find_spectrum(&make_figure8(1.0, 2.0).unwrap(), (1e-3, 40.0), &opts).unwrap().expanded();
    assert!(base.len() >= 4);
    for t in [0.5, 0.8, 1.5] {
        let g = make_figure8(t, 2.0 * t).unwrap();
        let scaled = find_spectrum(&g, (1e-3, 40.0 / (t * t)), &opts).unwrap().expanded();
        assert_eq!(scaled.len(), base.len(), "t = {t}");
        for (x, y) in base.iter().zip(&scaled) {
            assert!((x / (t * t) - y).abs() < 1e-8 * y.max(1.0), "t = {t}: {} vs {y}", x / (t * t));
        }
    }
}

#[test]
fn neumann_three_star_ground_state_rises_with_length() {
    let opts = SolverOptions::default();
    let mut prev = f64::NEG_INFINITY;
    for l in [0.5, 1.0, 2.0, 3.0, 5.0] {
        let g = make_equilateral_star(3, l, BoundaryType::Neumann).unwrap();
        let l1 = lowest_eigenvalues(&g, 1, &opts).unwrap()[0];
        assert!(l1 > prev, "λ₁({l}) = {l1} ≤ {prev}");
        assert!(l1 < -3.0);
        prev = l1;
    }
}

#[test]
fn reordering_a_star_vertex_keeps_the_dtn_determinant_modulus() {
    use qgraph::secular::{Method, SecularSystem};
    let mut rng = rng_for(5);
    let g = make_star(&[0.5, 0.9, 1.4, 0.7], BoundaryType::Neumann).unwrap();
    let base = SecularSystem::new(&g, Method::Dtn).unwrap();
    for _ in 0..4 {
        let h = permute_enumerations(&g, &mut rng);
        let other = SecularSystem::new(&h, Method::Dtn).unwrap();
        for lambda in [-6.0, -2.5, -0.7, -0.1] {
            let a = base.matrix(lambda).unwrap().determinant().norm();
            let b = other.matrix(lambda).unwrap().determinant().norm();
            assert!((a - b).abs() < 1e-10 * a.max(1.0), "λ = {lambda}: {a} vs {b}");
        }
    }
    let standard = SecularSystem::new(&make_figure8(1.0, 1.0).unwrap(), Method::Dtn).unwrap();
    let interleaved = SecularSystem::new(&interleaved_figure8(1.0, 1.0), Method::Dtn).unwrap();
    let a = standard.matrix(-1.0).unwrap().determinant().norm();
    let b = interleaved.matrix(-1.0).unwrap().determinant().norm();
    assert!(a < 1e-10 && b > 1e-3, "{a} vs {b}");
}
