use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qgraph::experiments::{sweep_lambda1_vs_length, Family};
use qgraph::graph::{apply_sequence, make_equilateral_star, make_figure8, make_star, BoundaryType, SurgeryOp};
use qgraph::secular::{lowest_eigenvalues, SolverOptions};

fn qgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qgraph")).args(args).output().expect("qgraph runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

/// `(lambda, mult)` rows of `spectrum --csv` output.
fn csv_spectrum(text: &str) -> Vec<(f64, usize)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn spectrum_of_reference_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let star = write(dir.path(), "star3.json", &make_equilateral_star(3, 1.0, BoundaryType::Neumann).unwrap().to_json());
    let fig8 = write(dir.path(), "fig8.json", &make_figure8(0.7, 1.3).unwrap().to_json());

    let o = qgraph(&["spectrum", &star, "--window", "-10:0", "--csv"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_spectrum(&stdout(&o));
    let negative: Vec<_> = rows.iter().filter(|r| r.0 < 0.0).collect();
    assert_eq!(negative.len(), 1);
    assert!((negative[0].0 + 3.33).abs() < 5e-3);

    let o = qgraph(&["spectrum", &fig8, "--window", "-10:0", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let l1 = v["eigenvalues"][0]["lambda"].as_f64().unwrap();
    assert!((l1 + 1.0).abs() < 1e-8);
    assert_eq!(v["method"], "edge");
    assert_eq!(v["tolerances"]["rank_tol"], 1e-8);

    let o = qgraph(&["spectrum", &star, "--window", "-10:0", "--method", "dtn", "--csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert!((csv_spectrum(&stdout(&o))[0].0 + 3.33).abs() < 5e-3);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{ \"vertices\": [");
    assert_eq!(qgraph(&["spectrum", &bad, "--window", "-10:0"]).status.code(), Some(2));
    let star = write(dir.path(), "star.json", &make_equilateral_star(3, 1.0, BoundaryType::Neumann).unwrap().to_json());
    assert_eq!(qgraph(&["spectrum", &star, "--window", "0:-1"]).status.code(), Some(2));
    assert_eq!(qgraph(&["spectrum", &star, "--window", "1:5", "--method", "dtn"]).status.code(), Some(2));
    let out = dir.path().to_str().unwrap();
    assert_eq!(qgraph(&["verify", "no-such-suite", "--out", out]).status.code(), Some(2));
    assert_eq!(qgraph(&["sweep", "hexagon", "--param", "1:2:3"]).status.code(), Some(2));
    let ops = write(dir.path(), "ops.json", r#"[{"op": "extend_edge", "edge": "e9", "delta": 1.0}]"#);
    assert_eq!(qgraph(&["surgery", &star, &ops]).status.code(), Some(2));
}

fn surgery_rows(text: &str) -> Vec<Vec<f64>> {
    let v: serde_json::Value = serde_json::from_str(text).unwrap();
    v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["lambdas"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect()
}

#[test]
fn surgery_tracks_lowest_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SolverOptions::default();
    let runs: Vec<(Vec<f64>, BoundaryType, Vec<SurgeryOp>)> = vec![
        (
            vec![0.8, 1.2, 1.0],
            BoundaryType::Neumann,
            vec![SurgeryOp::Transplant { from_edge: "e1".into(), to_edge: "e2".into(), length: 0.3 }],
        ),
        (
            vec![1.0; 4],
            BoundaryType::Neumann,
            vec![SurgeryOp::AttachEdge { vertex: "c".into(), length: 0.5, position: 4, edge_id: None, tip_bc: None }],
        ),
        (
            vec![0.7, 0.9, 1.1],
            BoundaryType::Dirichlet,
            vec![
                SurgeryOp::ExtendEdge { edge: "e1".into(), delta: 0.4 },
                SurgeryOp::ExtendEdge { edge: "e3".into(), delta: 0.2 },
            ],
        ),
    ];
    for (lengths, bc, ops) in runs {
        let g = make_star(&lengths, bc).unwrap();
        let gp = write(dir.path(), "g.json", &g.to_json());
        let op = write(dir.path(), "ops.json", &serde_json::to_string(&ops).unwrap());
        let o = qgraph(&["surgery", &gp, &op, "--track", "2", "--json"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let rows = surgery_rows(&stdout(&o));
        let mut graphs = vec![g.clone()];
        graphs.extend(apply_sequence(&g, &ops).unwrap());
        assert_eq!(rows.len(), graphs.len());
        for (row, h) in rows.iter().zip(&graphs) {
            let expected = lowest_eigenvalues(h, 2, &opts).unwrap();
            assert_eq!(row, &expected);
        }
    }
}

#[test]
fn sweep_matches_library() {
    let opts = SolverOptions::default();
    let cases = [("neumann_star(3)", Family::NeumannStar(3)), ("dirichlet_star:3", Family::DirichletStar(3)), ("figure8", Family::Figure8)];
    for (name, family) in cases {
        let o = qgraph(&["sweep", name, "--param", "0.5:2:3"]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        assert!(text.starts_with("parameter,lambda1,negative_count,gap_to_limit,trend,method,rank_tol,kappa_step\n"));
        let rows = sweep_lambda1_vs_length(family, &[0.5, 1.25, 2.0], &opts).unwrap();
        let lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(lines.len(), 3);
        for (line, row) in lines.iter().zip(&rows) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[0].parse::<f64>().unwrap(), row.parameter);
            assert_eq!(f[1].parse::<f64>().unwrap(), row.lambda1);
            assert_eq!(f[2].parse::<usize>().unwrap(), row.negative_count);
        }
    }
}

#[test]
fn verify_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = qgraph(&["verify", "star-ladder", "--seed", "5", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let mut names: Vec<String> =
        fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 2);
    assert!(names[0].starts_with("star-ladder-5-") && names[0].ends_with(".csv"));
    assert!(names[1].starts_with("star-ladder-5-") && names[1].ends_with(".json"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(&names[1])).unwrap()).unwrap();
    assert_eq!(report["seed"], 5);
    assert_eq!(report["summary"]["fail"], 0);
    assert_eq!(report["tolerances"]["solver"]["method"], "edge");
}

#[test]
fn thread_cap_is_respected_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let star = write(dir.path(), "star.json", &make_equilateral_star(4, 1.0, BoundaryType::Neumann).unwrap().to_json());
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_qgraph"))
            .args(["spectrum", &star, "--window", "-5:20", "--csv"])
            .env("QGRAPH_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    let two = run("2");
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, two.stdout);
    assert_eq!(run("zero").status.code(), Some(2));
}
