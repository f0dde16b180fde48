use vtsdd::harness::{density_grid, density_pgm, parse_config, read_density_grid, run_experiment, Summary};
use vtsdd::mesh::GridMesh;
use vtsdd::Error;

fn small_config(out: &std::path::Path, precond: &str) -> String {
    format!("# small run\nny = 4\nN = 4\nprecond = {precond}\nout = {}\n", out.display())
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let cfg = parse_config(&small_config(&dir.path().join(run), "s2")).unwrap();
        let rep = run_experiment(&cfg).unwrap();
        files.push([
            std::fs::read(&rep.iterations).unwrap(),
            std::fs::read(&rep.summary).unwrap(),
            std::fs::read(&rep.density).unwrap(),
            std::fs::read(&rep.density_pgm).unwrap(),
        ]);
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn iteration_log_matches_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&small_config(dir.path(), "s0")).unwrap();
    let rep = run_experiment(&cfg).unwrap();
    let csv = std::fs::read_to_string(&rep.iterations).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), rep.result.newton_count());
    let total: usize = rows.iter().map(|r| r.split(',').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    let s = Summary::from_result(&rep.result);
    assert_eq!(total, s.total_gmres);
    let summary = std::fs::read_to_string(&rep.summary).unwrap();
    assert!(summary.contains(&s.avg_gmres_str()));
}

#[test]
fn single_subdomain_is_rejected() {
    let err = parse_config("ny = 8\nN = 1\n").unwrap_err();
    assert!(matches!(err, Error::Config { ref key, .. } if key == "N"), "{err}");
    for bad in ["N = 5", "ny = 7", "precond = s3", "theta = abc", "nonsense = 1", "ny 8"] {
        let res = parse_config(bad).and_then(|c| {
            c.problem()?;
            Ok(c)
        });
        assert!(res.is_err(), "{bad}");
    }
}

#[test]
fn density_grid_round_trip() {
    let mesh = GridMesh::new(6).unwrap();
    let rho: Vec<f64> = (0..mesh.element_count()).map(|i| 0.01 + (i as f64 * 0.37).sin().abs() * 0.98).collect();
    let text = density_grid(&rho, &mesh);
    assert_eq!(text.lines().count(), 6);
    let back = read_density_grid(&text, &mesh).unwrap();
    for (a, b) in rho.iter().zip(&back) {
        assert!((a - b).abs() <= 1e-8 * a.abs());
    }
    let pgm = density_pgm(&rho, &mesh, 0.01, 1.0);
    assert!(pgm.starts_with("P2"));
}
