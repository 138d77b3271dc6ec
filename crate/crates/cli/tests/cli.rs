use std::path::Path;
use std::process::{Command, Output};

fn curvling(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvling")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn points_csv(dir: &Path) -> String {
    let path = dir.join("points.csv");
    let mut text = String::from("x,y,mass\n");
    for k in 0..40 {
        let a = k as f64 * 0.157;
        text += &format!("{},{},{}\n", 0.5 + 0.3 * a.cos(), 0.5 + 0.2 * (1.3 * a).sin(), 1 + k % 3);
    }
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// Plain PGM with a dark diagonal band.
fn band_pgm(dir: &Path) -> String {
    let path = dir.join("band.pgm");
    let mut text = String::from("P2\n# band\n16 16\n255\n");
    for r in 0..16i32 {
        let row: Vec<String> = (0..16i32).map(|c| if (r - c).abs() <= 1 { "20" } else { "255" }.to_string()).collect();
        text += &row.join(" ");
        text += "\n";
    }
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn transport_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let points = points_csv(dir.path());
    let out = dir.path().join("run");
    let o =
        curvling(&["transport", "--points", &points, "--segments", "30", "--seed", "4", "-o", out.to_str().unwrap()]);
    ok(&o);
    for f in ["potential.csv", "history.csv", "polyline.json", "render.svg", "manifest.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "transport");
    assert_eq!(manifest["seed"], 4);
    let potential = std::fs::read_to_string(out.join("potential.csv")).unwrap();
    assert_eq!(potential.lines().count(), 41);
}

#[test]
fn curvle_is_reproducible_and_dumps_iterates() {
    let dir = tempfile::tempdir().unwrap();
    let image = band_pgm(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = curvling(&[
            "curvle",
            "--image",
            &image,
            "--segments",
            "40",
            "--init",
            "uniform-vertices",
            "--max-iter",
            "6",
            "--k1",
            "0.1",
            "--k2",
            "0.1",
            "--dump-every",
            "3",
            "--seed",
            "2",
            "-o",
            out.to_str().unwrap(),
        ]);
        ok(&o);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["polyline_00000.json", "polyline_00003.json", "polyline_00006.json", "shape_history.csv"] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    assert_eq!(std::fs::read(a.join("polyline.json")).unwrap(), std::fs::read(b.join("polyline.json")).unwrap());
    assert_eq!(
        std::fs::read(a.join("shape_history.csv")).unwrap(),
        std::fs::read(b.join("shape_history.csv")).unwrap()
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["summary"]["constraint_violation"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let points = points_csv(dir.path());
    let out = dir.path().join("cfg");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "seed = 7\n[input]\npoints = {points:?}\n[polyline]\ninit = \"random_walk\"\nsegments = 12\n\
             [shape]\nmax_iter = 2\n[output]\ndir = {:?}\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    ok(&curvling(&["filaments", "--config", cfg.to_str().unwrap(), "--seed", "8"]));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("polyline.json")).unwrap()).unwrap();
    assert_eq!(doc["disjoint_mode"], true);
    assert_eq!(doc["seed"], 8);
    assert_eq!(doc["vertices"].as_array().unwrap().len(), 13);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["config"].as_str().unwrap().contains("seed = 8"));
}

#[test]
fn bad_configuration_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[solver]\ngrad_toll = 1e-9\n").unwrap();
    let o = curvling(&["transport", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("grad_toll"));
    let o = curvling(&["transport"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no input"));
}

#[test]
fn check_passes_on_a_random_instance() {
    let o = curvling(&["check", "--random", "15,6", "--seed", "1"]);
    ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("0 violations"), "{text}");
    assert!(text.contains("gradient vs central differences"));
}

#[test]
fn bench_reports_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("solvers.csv");
    ok(&curvling(&[
        "bench",
        "solvers",
        "--n",
        "60",
        "--p",
        "10",
        "--seeds",
        "0",
        "--iterations",
        "30",
        "-o",
        csv.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 6, "{text}");
    assert!(text.lines().nth(1).unwrap().starts_with("hybrid,"));

    let o = curvling(&[
        "--threads",
        "1",
        "bench",
        "scaling",
        "--n",
        "300",
        "--p",
        "100",
        "--thread-counts",
        "1,2",
        "--repeats",
        "1",
    ]);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("true"));
}
