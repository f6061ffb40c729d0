use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sbridge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbridge"))
        .current_dir(dir)
        .env_remove("SBRIDGE_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// `(t, x, value)` rows of an emitted field file.
fn read_field(path: &Path) -> Vec<(f64, f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,value"));
    lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .collect()
}

fn gaussian(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Two-column CSV of a Gaussian sampled on the default grid.
fn gaussian_csv(dir: &Path, name: &str, mean: f64, var: f64) -> PathBuf {
    let mut text = String::from("x,value\n");
    for i in 0..513 {
        let x = -10.0 + 20.0 * i as f64 / 512.0;
        text.push_str(&format!("{x:.17e},{:.17e}\n", gaussian(x, mean, var)));
    }
    write(dir, name, &text)
}

const HEAT: &str = "[kernel]\nkind = \"heat\"\nnu = 0.5\n";

#[test]
fn list_scenarios_prints_the_builtins() {
    let tmp = TempDir::new().unwrap();
    let out = sbridge(tmp.path(), &["list-scenarios"]);
    assert_eq!(code(&out), 0);
    let mut names: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    names.sort();
    assert_eq!(names, ["example1", "example2", "quantum-free"]);
}

#[test]
fn unnormalized_boundary_fails_validation_before_solving() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "[boundary.rho0]\nkind = \"gaussian\"\nscale = 1.5\n",
    );
    let out = sbridge(
        tmp.path(),
        &[
            "bridge-solve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "o",
        ],
    );
    assert_eq!(code(&out), 6, "{}", stderr(&out));
    assert!(stderr(&out).contains("not normalized"));
    assert!(!tmp.path().join("o").exists());

    let mut half = String::from("x,value\n");
    for i in 0..=200 {
        let x = -10.0 + 0.1 * i as f64;
        half.push_str(&format!("{x},{}\n", 0.5 * gaussian(x, 0.0, 1.0)));
    }
    write(tmp.path(), "half.csv", &half);
    let cfg = write(
        tmp.path(),
        "d.toml",
        "[boundary.rho0]\nkind = \"csv\"\npath = \"half.csv\"\n",
    );
    let out = sbridge(
        tmp.path(),
        &[
            "bridge-solve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "o",
        ],
    );
    assert_eq!(code(&out), 6, "{}", stderr(&out));
}

#[test]
fn pinned_kernel_reports_ck_violation() {
    let tmp = TempDir::new().unwrap();
    let out = sbridge(
        tmp.path(),
        &[
            "kernel-check-ck",
            "--kernel",
            "pinned-example2",
            "--out",
            "o",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL Chapman-Kolmogorov pinned-example2"));
    assert!(stderr(&out).contains("checks failed"));

    let out = sbridge(
        tmp.path(),
        &["kernel-check-ck", "--kernel", "example1", "--out", "o"],
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn seeded_simulation_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "s.toml",
        &format!(
            "{HEAT}[boundary.rho0]\nmean = -1.0\n[boundary.rho_t]\nkind = \"gaussian\"\nmean = 1.0\n\
             [sde]\nn_paths = 400\nrecord_intervals = 4\n[tolerances]\nks = 0.2\n"
        ),
    );
    let cfg = cfg.to_str().unwrap();
    let run = |out: &str, seed: &str| {
        let o = sbridge(
            tmp.path(),
            &["simulate", "--config", cfg, "--out", out, "--seed", seed],
        );
        assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
        fs::read(tmp.path().join(out).join("paths.csv")).unwrap()
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(String::from_utf8(a).unwrap().starts_with("path_id,t,x\n"));
}

#[test]
fn emitted_density_round_trips_as_boundary_data() {
    let tmp = TempDir::new().unwrap();
    let first = write(
        tmp.path(),
        "first.toml",
        &format!("{HEAT}[boundary.rho0]\nmean = -1.0\n[boundary.rho_t]\nkind = \"gaussian\"\nmean = 1.5\nvariance = 0.5\n"),
    );
    let out = sbridge(
        tmp.path(),
        &[
            "bridge-solve",
            "--config",
            first.to_str().unwrap(),
            "--out",
            "one",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let second = write(
        tmp.path(),
        "second.toml",
        &format!(
            "{HEAT}[boundary.rho0]\nkind = \"csv\"\npath = \"one/rho.csv\"\nt = 0.0\n\
             [boundary.rho_t]\nkind = \"csv\"\npath = \"one/rho.csv\"\nt = 1.0\n"
        ),
    );
    let out = sbridge(
        tmp.path(),
        &[
            "bridge-solve",
            "--config",
            second.to_str().unwrap(),
            "--out",
            "two",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let a = read_field(&tmp.path().join("one/rho.csv"));
    let b = read_field(&tmp.path().join("two/rho.csv"));
    assert_eq!(a.len(), b.len());
    for t in [0.0, 1.0] {
        for (p, q) in a.iter().zip(&b).filter(|(p, _)| p.0 == t) {
            assert_eq!(p.1, q.1);
            assert!(
                (p.2 - q.2).abs() <= 1e-12,
                "t = {t}, x = {}: {} vs {}",
                p.1,
                p.2,
                q.2
            );
        }
    }
}

#[test]
fn heat_bridge_from_csv_gaussians_emits_factors() {
    let tmp = TempDir::new().unwrap();
    gaussian_csv(tmp.path(), "rho0.csv", -1.0, 1.0);
    gaussian_csv(tmp.path(), "rho_t.csv", 1.5, 0.5);
    let cfg = write(
        tmp.path(),
        "b.toml",
        &format!(
            "{HEAT}[boundary.rho0]\nkind = \"csv\"\npath = \"rho0.csv\"\n\
             [boundary.rho_t]\nkind = \"csv\"\npath = \"rho_t.csv\"\n"
        ),
    );
    let out = sbridge(
        tmp.path(),
        &[
            "bridge-solve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "o",
        ],
    );
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));

    let u0 = read_field(&tmp.path().join("o/u0.csv"));
    let vt = read_field(&tmp.path().join("o/v_t.csv"));
    assert_eq!((u0.len(), vt.len()), (513, 513));
    assert!(u0.iter().all(|r| r.0 == 0.0 && r.2 > 0.0));
    assert!(vt.iter().all(|r| r.0 == 1.0 && r.2 > 0.0));

    // Both marginals of u0(y) k(y, x) vT(x), with the heat kernel of variance 2 nu T = 1
    // integrated here by the trapezoid rule on the emitted nodes.
    let h = 20.0 / 512.0;
    let w = |i: usize| if i == 0 || i == 512 { h / 2.0 } else { h };
    let k = |y: f64, x: f64| gaussian(x, y, 1.0);
    let mass0: f64 = (0..513).map(|i| w(i) * gaussian(u0[i].1, -1.0, 1.0)).sum();
    let mass_t: f64 = (0..513).map(|i| w(i) * gaussian(vt[i].1, 1.5, 0.5)).sum();
    let mut worst: f64 = 0.0;
    for i in 0..513 {
        let kv: f64 = (0..513).map(|j| w(j) * k(u0[i].1, vt[j].1) * vt[j].2).sum();
        let ku: f64 = (0..513).map(|j| w(j) * u0[j].2 * k(u0[j].1, vt[i].1)).sum();
        worst = worst
            .max((u0[i].2 * kv - gaussian(u0[i].1, -1.0, 1.0) / mass0).abs())
            .max((vt[i].2 * ku - gaussian(vt[i].1, 1.5, 0.5) / mass_t).abs());
    }
    assert!(worst < 1e-9, "marginal error {worst}");
}

#[test]
fn gallery_quantum_free_passes() {
    let tmp = TempDir::new().unwrap();
    let out = sbridge(tmp.path(), &["gallery", "quantum-free", "--out", "g"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(!stdout(&out).contains("FAIL"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("g/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["config"]["scenario"]["name"], "quantum-free");
    assert!(summary["checks"].as_array().unwrap().len() > 10);
}

#[test]
fn usage_and_input_errors_have_distinct_codes() {
    let tmp = TempDir::new().unwrap();
    let bad = write(
        tmp.path(),
        "bad.toml",
        "[grid]\npoints = 65\nx_min = \"left\"\n",
    );
    let out = sbridge(
        tmp.path(),
        &["bridge-solve", "--config", bad.to_str().unwrap()],
    );
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let missing = write(
        tmp.path(),
        "m.toml",
        "[boundary.rho0]\nkind = \"csv\"\npath = \"nowhere.csv\"\n",
    );
    let out = sbridge(
        tmp.path(),
        &["bridge-solve", "--config", missing.to_str().unwrap()],
    );
    assert_eq!(code(&out), 4);

    let out = sbridge(tmp.path(), &["gallery", "no-such-scenario", "--out", "o"]);
    assert_eq!(code(&out), 2);
    let out = sbridge(tmp.path(), &["no-such-command"]);
    assert_eq!(code(&out), 2);
    let out = sbridge(
        tmp.path(),
        &["bridge-solve", "--grid-points", "2", "--out", "o"],
    );
    assert_eq!(code(&out), 6);
}

#[test]
fn run_dispatches_on_pipeline_and_honours_env_out_dir() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "r.toml",
        "[scenario]\npipeline = \"kernel-check-ck\"\n[kernel]\nkind = \"quantum-k1\"\n",
    );
    let out = Command::new(env!("CARGO_BIN_EXE_sbridge"))
        .current_dir(tmp.path())
        .env("SBRIDGE_OUT_DIR", "from-env")
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("Chapman-Kolmogorov quantum-k1"));
    assert!(tmp.path().join("from-env/summary.json").is_file());
}

#[test]
fn shipped_scenarios_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let tmp = TempDir::new().unwrap();
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = sbridge(
                tmp.path(),
                &[
                    "kernel-check-ck",
                    "--config",
                    path.to_str().unwrap(),
                    "--grid-points",
                    "129",
                    "--out",
                    "o",
                ],
            );
            assert!(
                matches!(code(&out), 0 | 1),
                "{}: {}",
                path.display(),
                stderr(&out)
            );
            seen += 1;
        }
    }
    assert_eq!(seen, 4);
}
