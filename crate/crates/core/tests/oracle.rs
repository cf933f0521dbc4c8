use qgraph::experiments::{random_graph, reference_graphs, rng_for};
use qgraph::fem::{discretize, oracle_eigenvalues};
use qgraph::secular::{find_spectrum, lowest_eigenvalues, negative_floor, Method, SolverOptions};
use rand::Rng;

const H: f64 = 1e-3;
const COUNT: usize = 8;

fn tolerance(h: f64, lambda: f64) -> f64 {
    (5e-2f64).max(10.0 * h * (1.0 + lambda.abs()))
}

#[test]
fn fem_matches_secular_spectra() {
    let opts = SolverOptions::default();
    for (name, g) in reference_graphs() {
        let exact = lowest_eigenvalues(&g, COUNT, &opts).unwrap();
        let coarse = oracle_eigenvalues(&g, COUNT, H).unwrap();
        let fine = oracle_eigenvalues(&g, COUNT, H / 2.0).unwrap();
        for k in 0..COUNT {
            let (gap, gap_fine) = ((coarse[k] - exact[k]).abs(), (fine[k] - exact[k]).abs());
            assert!(gap < tolerance(H, exact[k]), "{name} λ{}: fem {} vs {}", k + 1, coarse[k], exact[k]);
            assert!(gap_fine < gap || gap_fine <= 1e-9, "{name} λ{}: gap {gap} → {gap_fine}", k + 1);
            assert!(coarse[k] >= exact[k] - 1e-9, "{name} λ{}: Ritz value below eigenvalue", k + 1);
        }
    }
}

#[test]
fn inertia_bisection_matches_dense_pencil() {
    for (name, g) in reference_graphs().into_iter().take(6) {
        let dense = discretize(&g, 0.05).unwrap().eigenvalues();
        let bisected = oracle_eigenvalues(&g, 6, 0.05).unwrap();
        for (a, b) in dense.iter().zip(&bisected) {
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{name}: {a} vs {b}");
        }
    }
}

#[test]
fn edge_and_dtn_routes_agree_on_random_graphs() {
    let edge = SolverOptions::default();
    let dtn = SolverOptions::default().with_method(Method::Dtn);
    let mut rng = rng_for(17);
    for _ in 0..12 {
        let ne = rng.random_range(1..=6usize);
        let nv = rng.random_range(1..=ne + 1);
        let g = random_graph(&mut rng, nv, ne, (0.3, 1.6));
        let window = (negative_floor(&g), 0.0);
        let a = find_spectrum(&g, window, &edge).unwrap();
        let b = find_spectrum(&g, window, &dtn).unwrap();
        assert_eq!(a.count(), b.count(), "{}", g.to_json());
        for (x, y) in a.expanded().iter().zip(b.expanded()) {
            assert!((x - y).abs() < 1e-8 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}
