use std::f64::consts::PI;

use qgraph::graph::{make_equilateral_star, make_figure8, make_star, BoundaryType};
use qgraph::secular::{
    count_negative, eigenfunction_at, find_spectrum, lowest_eigenvalues, star_secular_closed_form,
    star_secular_reduced, SolverOptions,
};
use qgraph::C64;

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    assert!(fa * f(b) < 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm * fa <= 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

fn negative_kappas(lengths: &[f64], bc: BoundaryType) -> Vec<f64> {
    let g = make_star(lengths, bc).unwrap();
    let spec = find_spectrum(&g, (-40.0, -1e-6), &SolverOptions::default()).unwrap();
    let mut k: Vec<f64> = spec.expanded().iter().map(|l| (-l).sqrt()).collect();
    k.sort_by(|a, b| b.total_cmp(a));
    k
}

#[test]
fn reference_star_roots() {
    let k = negative_kappas(&[1.0; 3], BoundaryType::Neumann);
    assert_eq!(k.len(), 1);
    assert!((k[0] - 1.82).abs() < 5e-3);
    assert!((-k[0] * k[0] + 3.33).abs() < 5e-3);
    let k = negative_kappas(&[1.0; 4], BoundaryType::Neumann);
    assert_eq!(k.len(), 1);
    assert!((k[0] - 1.20).abs() < 5e-3);
    let k = negative_kappas(&[1.0; 6], BoundaryType::Neumann);
    assert_eq!(k.len(), 2);
    assert!((k[0] - 1.82).abs() < 5e-3 && (k[1] - 0.84).abs() < 5e-3);
    let k = negative_kappas(&[1.0; 3], BoundaryType::Dirichlet);
    assert_eq!(k.len(), 1);
    assert!((k[0] - 1.60).abs() < 5e-3);
}

#[test]
fn reduced_equations_match_solver() {
    let cases: Vec<(Vec<f64>, BoundaryType)> = vec![
        (vec![0.5, 1.2, 2.1], BoundaryType::Neumann),
        (vec![1.0; 3], BoundaryType::Neumann),
        (vec![1.0; 4], BoundaryType::Neumann),
        (vec![0.8; 6], BoundaryType::Neumann),
        (vec![0.9, 1.4, 0.7], BoundaryType::Dirichlet),
    ];
    for (lengths, bc) in cases {
        let found = negative_kappas(&lengths, bc);
        let f = |k: f64| star_secular_reduced(&lengths, bc, k).unwrap();
        // Sign changes of the reduced function on a fine κ grid.
        let grid: Vec<f64> = (1..=8000).map(|i| i as f64 * 1e-3).collect();
        let mut roots: Vec<f64> = grid
            .windows(2)
            .filter(|w| f(w[0]) * f(w[1]) < 0.0)
            .map(|w| bisect(f, w[0], w[1]))
            .collect();
        roots.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(roots.len(), found.len(), "{lengths:?}");
        for (a, b) in roots.iter().zip(&found) {
            assert!((a * a - b * b).abs() < 1e-8, "{lengths:?}: {a} vs {b}");
            assert!(star_secular_closed_form(&lengths, bc, *b).norm() < 1e-6 * star_secular_closed_form(&lengths, bc, 1.3 * b).norm());
        }
    }
}

#[test]
fn negative_counts_on_equilateral_stars() {
    let opts = SolverOptions::default();
    for (n, expected) in [(3, 1), (4, 1), (6, 2)] {
        let g = make_equilateral_star(n, 1.0, BoundaryType::Neumann).unwrap();
        assert_eq!(count_negative(&g, &opts).unwrap(), expected, "N = {n}");
    }
    let g = make_equilateral_star(3, 0.5, BoundaryType::Dirichlet).unwrap();
    assert_eq!(count_negative(&g, &opts).unwrap(), 0);
}

#[test]
fn figure8_spectrum() {
    let opts = SolverOptions::default();
    for (l1, l2) in [(1.0, 1.0), (0.3, 1.7), (2.0, 0.45)] {
        let g = make_figure8(l1, l2).unwrap();
        let spec = find_spectrum(&g, (-10.0, -1e-6), &opts).unwrap();
        assert_eq!(spec.count(), 1);
        assert!((spec.eigenvalues[0].lambda + 1.0).abs() < 1e-8);
    }
    let g = make_figure8(0.5, 0.5).unwrap();
    let spec = find_spectrum(&g, (-10.0, 640.0), &opts).unwrap();
    let got: Vec<(f64, usize)> = spec.eigenvalues.iter().map(|e| (e.lambda, e.multiplicity)).collect();
    let mut expected = vec![(-1.0, 1), (0.0, 1)];
    for n in 1..=4 {
        expected.push(((2.0 * n as f64 * PI).powi(2), if n % 2 == 1 { 1 } else { 3 }));
    }
    assert_eq!(got.len(), expected.len(), "{got:?}");
    for ((a, ma), (b, mb)) in got.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        assert_eq!(ma, mb);
    }
}

#[test]
fn lowest_eigenvalues_of_equilateral_figure8() {
    let g = make_figure8(0.5, 0.5).unwrap();
    let low = lowest_eigenvalues(&g, 6, &SolverOptions::default()).unwrap();
    let four = 4.0 * PI * PI;
    let expected = [-1.0, 0.0, four, 4.0 * four, 4.0 * four, 4.0 * four];
    for (a, b) in low.iter().zip(expected) {
        assert!((a - b).abs() < 1e-6, "{low:?}");
    }
}

#[test]
fn four_star_eigenfunction_phases() {
    let g = make_equilateral_star(4, 1.0, BoundaryType::Neumann).unwrap();
    let opts = SolverOptions::default();
    let lambda = find_spectrum(&g, (-10.0, -1e-6), &opts).unwrap().eigenvalues[0].lambda;
    let psi = &eigenfunction_at(&g, lambda, &opts).unwrap()[0];
    let (f, _) = psi.traces(&g, "c").unwrap();
    let i = C64::i();
    for j in 0..3 {
        assert!((f[j + 1] / f[j] - i).norm() < 1e-9);
    }
}
