use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const MODEL: &str = "\
[mesh]
extents = 2000 2000 1000
divisions = 4 4 4
layers = 700

[materials]
material = 1600 400 1850
material = 5800 3000 2700
";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crustfem"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &TempDir, name: &str, body: &str) -> String {
    std::fs::write(dir.path().join(name), body).unwrap();
    name.to_string()
}

fn summary(path: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn solve_manufactured_meets_tolerance() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "run.cfg", &format!("{MODEL}[solve]\nrhs = manufactured\ncolumns = 2\n"));
    let o = run(dir.path(), &["solve", "--config", &cfg, "--out", "res"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&dir.path().join("res/solve.summary"));
    let r: f64 = s["max_residual"].parse().unwrap();
    assert!(r <= 1e-8, "max_residual={r}");
    assert_eq!(s["converged"], "true");
    // stdout carries the same key=value lines
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains(&format!("max_residual={}", s["max_residual"])));
    assert!(dir.path().join("res/solution.bin").is_file());
}

#[test]
fn verify_passes_on_unit_cube() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["verify", "--out", "v"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(&dir.path().join("v/verify.summary"))["result"], "pass");
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}

#[test]
fn verify_passes_on_layered_model() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "run.cfg", MODEL);
    let o = run(dir.path(), &["verify", "--config", &cfg, "--out", "v"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn invert_rejects_four_alphas() {
    let dir = TempDir::new().unwrap();
    let a = config(&dir, "a.cfg", "[inversion]\nalpha_count = 4\n");
    assert_eq!(code(&run(dir.path(), &["invert", "--config", &a])), 2);
    let b = config(&dir, "b.cfg", "[inversion]\nalphas = 1e-3 1e-2 1e-1 1\n");
    assert_eq!(code(&run(dir.path(), &["invert", "--config", &b])), 2);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn validation_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let c = config(&dir, "typo.cfg", "[solver]\nouter_tolerance = 1e-8\n");
    let o = run(dir.path(), &["solve", "--config", &c]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("outer_tolerance"));
    assert_eq!(code(&run(dir.path(), &["solve", "--batch", "0"])), 2);
    let c = config(&dir, "one_mat.cfg", "[mesh]\nlayers = 0.5\n[materials]\nmaterial = 2 1 1\n");
    assert_eq!(code(&run(dir.path(), &["solve", "--config", &c])), 2);
    assert_eq!(code(&run(dir.path(), &["greens"])), 2);
}

#[test]
fn non_convergence_exits_3_without_outputs() {
    let dir = TempDir::new().unwrap();
    let c = config(&dir, "nc.cfg", "[solver]\nouter_max_iter = 2\n[solve]\nrhs = random\n");
    let o = run(dir.path(), &["solve", "--config", &c, "--out", "nc"]);
    assert_eq!(code(&o), 3);
    assert!(!dir.path().join("nc").exists());
}

#[test]
fn mesh_files_reproduce_generated_box() {
    let dir = TempDir::new().unwrap();
    let gen = config(&dir, "gen.cfg", &format!("{MODEL}[solve]\nrhs = random\n"));
    assert_eq!(code(&run(dir.path(), &["mesh", "--config", &gen, "--out", "m"])), 0);
    let from_file = config(
        &dir,
        "file.cfg",
        "[mesh]\nfile = m/mesh.txt\ndirichlet = m/dirichlet.txt\n\
         [materials]\nmaterial = 1600 400 1850\nmaterial = 5800 3000 2700\n[solve]\nrhs = random\n",
    );
    assert_eq!(code(&run(dir.path(), &["solve", "--config", &gen, "--out", "a", "--seed", "5"])), 0);
    assert_eq!(code(&run(dir.path(), &["solve", "--config", &from_file, "--out", "b", "--seed", "5"])), 0);
    let read = |d: &str| std::fs::read(dir.path().join(d).join("solution.bin")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn greens_and_invert_round_trip() {
    let dir = TempDir::new().unwrap();
    let c = config(
        &dir,
        "f.cfg",
        &format!(
            "{MODEL}[fault]\nstrike = 90\ndip = 90\nrectangle = 500 1000 1000 1000 500\ncenters = 3 2\n\
             [observations]\nsurface_grid = 4 4\n[inversion]\nalpha_count = 15\n"
        ),
    );
    let o = run(dir.path(), &["greens", "--config", &c, "--batch", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let g = summary(&dir.path().join("out/greens.summary"));
    assert_eq!(g["cols"], "12");
    assert_eq!(g["rows"], "48");
    assert_eq!(g["solver_calls"], "3");
    let o = run(dir.path(), &["invert", "--config", &c]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&dir.path().join("out/invert.summary"));
    assert_eq!(s["unknowns"], "12");
    assert!(s["synthetic_rel_error"].parse::<f64>().unwrap().is_finite());
    let slip = std::fs::read_to_string(dir.path().join("out/slip.txt")).unwrap();
    assert_eq!(slip.lines().filter(|l| !l.starts_with('#')).count(), 12);
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let c = config(
        &dir,
        "d.cfg",
        &format!(
            "{MODEL}[solve]\nrhs = random\ncolumns = 3\n\
             [fault]\nstrike = 90\ndip = 90\nrectangle = 500 1000 1000 1000 500\ncenters = 2 1\n\
             [observations]\nsurface_grid = 3 3\n[inversion]\nsynthetic_noise = 0.01\nalpha_count = 9\n"
        ),
    );
    for out in ["r1", "r2"] {
        for cmd in ["solve", "greens", "invert"] {
            let o = run(dir.path(), &[cmd, "--config", &c, "--out", out, "--seed", "11", "--workers", "1"]);
            assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    for f in [
        "solution.bin",
        "solve.summary",
        "greens.bin",
        "greens.summary",
        "lcurve.txt",
        "slip.txt",
        "invert.summary",
    ] {
        let a = std::fs::read(dir.path().join("r1").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}
