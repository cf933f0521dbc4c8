use qgraph::experiments::{
    monotonicity_cases, transplantation_cases, verify_star_count_ladder, verify_transplantation, Suite,
};
use qgraph::secular::SolverOptions;

#[test]
fn reports_are_reproducible_for_a_seed() {
    let opts = SolverOptions::default();
    let a = verify_transplantation(&transplantation_cases(9, 8), 9, &opts);
    let b = verify_transplantation(&transplantation_cases(9, 8), 9, &opts);
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.summary.cases, 8);
    assert_eq!(a.summary.fail, 0);
    assert_ne!(transplantation_cases(9, 8), transplantation_cases(10, 8));
}

#[test]
fn report_csv_has_one_row_per_check() {
    let r = verify_star_count_ladder(3.0, &SolverOptions::default());
    let checks: usize = r.entries.iter().map(|e| e.checks.len().max(1)).sum();
    let csv = r.to_csv();
    assert!(csv.starts_with("case,label,claim,lhs,rhs,margin,tolerance,status\n"));
    assert_eq!(csv.lines().count(), checks + 1);
}

#[test]
fn monotonicity_cases_cover_sixty_configurations() {
    assert_eq!(monotonicity_cases(0).len(), 60);
    assert_eq!("general-bounds".parse::<Suite>().unwrap(), Suite::Bounds);
    assert!("nonsense".parse::<Suite>().is_err());
}
