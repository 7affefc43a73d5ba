use std::process::Command;

fn phlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_phlab")).args(args).output().expect("binary runs")
}

#[test]
fn malformed_matrix_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[skeleton]\nmatrix = [[2, 1], [1]]\n").unwrap();
    let out =
        phlab(&["skeleton", "--config", cfg.to_str().unwrap(), "--output", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("skeleton.matrix"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_field_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[cones]\npoints = 10\nwidht = 0.1\n").unwrap();
    let out = phlab(&["verify-cones", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("widht"));
}

#[test]
fn verify_construction_passes_and_reports_the_splitting_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = phlab(&["verify-construction", "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("PASS splitting_P_diagonal (criterion 2): 1 <= dP/dc <="), "{report}");
    for key in ["M = ", "k = ", "eps0 = ", "lambda_uu = ", "seed: "] {
        assert!(report.contains(key), "{key}");
    }
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    // Each check appears exactly once.
    let names: Vec<&str> =
        csv.lines().filter(|l| l.starts_with("check,")).map(|l| l.split(',').nth(1).unwrap()).collect();
    let mut dedup = names.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(names.len(), dedup.len());
    assert!(dir.path().join("plot.gp").exists());
}

#[test]
fn failed_check_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    // A negative tolerance cannot be met, so the fixed-point check fails.
    std::fs::write(&cfg, "[lyapunov]\norbits = 2\nmin_agreeing = 2\nlength = 2000\ntransient = 100\nfixed_point_length = 10\nfixed_point_tolerance = -1.0\n").unwrap();
    let out = phlab(&["lyapunov", "-c", cfg.to_str().unwrap(), "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cu_exponent_at_p"));
}
