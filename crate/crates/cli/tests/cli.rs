use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn mixmom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixmom"))
        .args(args)
        .current_dir(dir)
        .env("MIXMOM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn preset(dir: &Path, name: &str, n: usize, extra: &[&str]) -> Output {
    let nx = format!("domain.nx={n}");
    let ny = format!("domain.ny={n}");
    let out = format!("output.dir=out-{name}");
    let mut args = vec!["preset", name, "--override", &nx, "--override", &ny, "--override", &out];
    for e in extra {
        args.extend(["--override", e]);
    }
    mixmom(dir, &args)
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stdout: {}\nstderr: {}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
}

#[test]
fn linesource_smoke_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&preset(tmp.path(), "linesource", 50, &[]));
    let dir = tmp.path().join("out-linesource");
    for f in ["field_final.txt", "cut_horizontal.txt", "cut_diagonal.txt", "mass_history.txt", "summary.txt", "config.toml"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let summary = fs::read_to_string(dir.join("summary.txt")).unwrap();
    for key in ["mass_initial", "mass_final", "min_u00", "limiter_activations", "symmetry_error", "wall_seconds"] {
        assert!(summary.lines().any(|l| l.starts_with(&format!("{key} = "))), "{key} missing in\n{summary}");
    }
    let field = fs::read_to_string(dir.join("field_final.txt")).unwrap();
    assert!(field.contains("x y u00 u10_xp u10_xm u01_yp u01_ym"));
    assert_eq!(field.lines().filter(|l| !l.starts_with('#')).count(), 1 + 50 * 50);

    let check = mixmom(&dir, &["check", "field_final.txt"]);
    ok(&check);
    assert!(String::from_utf8_lossy(&check.stdout).contains("violations = 0"));

    // The echoed configuration runs again.
    let rerun = mixmom(&dir, &["run", "config.toml", "--override", "output.dir=again"]);
    ok(&rerun);
    assert_eq!(fs::read(dir.join("field_final.txt")).unwrap(), fs::read(dir.join("again/field_final.txt")).unwrap());
}

#[test]
fn reruns_are_bitwise_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&preset(d.path(), "twobeams", 20, &[]));
    }
    for f in ["field_final.txt", "cut_diagonal.txt", "mass_history.txt"] {
        let p = Path::new("out-twobeams").join(f);
        assert_eq!(fs::read(a.path().join(&p)).unwrap(), fs::read(b.path().join(&p)).unwrap(), "{f}");
    }
}

#[test]
fn qk1_with_scattering_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = preset(tmp.path(), "linesource", 10, &["model.closure.kind=qk1"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("qk1") && err.contains("sigma_s"), "{err}");
    assert!(!tmp.path().join("out-linesource").exists());
}

#[test]
fn check_locates_corruption_and_rejects_empty_files() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&preset(tmp.path(), "twobeams", 8, &["model.closure={ kind = \"p1\" }"]));
    let dir = tmp.path().join("out-twobeams");
    let text = fs::read_to_string(dir.join("field_final.txt")).unwrap();
    // Give the cell (3, 2) a first moment larger than its density.
    let mut seen = 0;
    let corrupted: Vec<String> = text
        .lines()
        .map(|l| {
            if l.starts_with('#') || l.starts_with('x') {
                return l.to_string();
            }
            seen += 1;
            if seen == 2 * 8 + 3 + 1 {
                let mut v: Vec<String> = l.split_whitespace().map(str::to_string).collect();
                v[3] = "5e0".into();
                v.join(" ")
            } else {
                l.to_string()
            }
        })
        .collect();
    fs::write(dir.join("bad.txt"), corrupted.join("\n")).unwrap();
    let o = mixmom(&dir, &["check", "bad.txt", "--worst", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("violations = 1") && out.contains("cell (3, 2)"), "{out}");

    fs::write(dir.join("empty.txt"), "").unwrap();
    let o = mixmom(&dir, &["check", "empty.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));
}

#[test]
fn presets_run_quickly_at_coarse_resolution() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["linesource", "twobeams", "twobeams-rotated"] {
        let t = Instant::now();
        ok(&preset(tmp.path(), name, 25, &[]));
        let s = t.elapsed().as_secs_f64();
        assert!(s < 10.0, "{name} took {s:.1} s");
        let summary = fs::read_to_string(tmp.path().join(format!("out-{name}/summary.txt"))).unwrap();
        assert!(summary.contains("closure = mk1") && summary.contains("realizability_violations = 0"), "{summary}");
    }
}

#[test]
fn preset_print_round_trips_through_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mixmom(tmp.path(), &["preset", "twobeams-rotated", "--print", "--override", "domain.nx=12", "--override", "domain.ny=12"]);
    ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("nx = 12") && text.contains("[[boundary.left.beams]]"));
    fs::write(tmp.path().join("rot.toml"), &text).unwrap();
    ok(&mixmom(tmp.path(), &["run", "rot.toml", "--override", "time.t_final=0.1"]));
    assert!(tmp.path().join("out-twobeams-rotated/field_final.txt").is_file());
}

#[test]
fn tabulate_then_reuse_and_cuts() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&mixmom(tmp.path(), &["tabulate", "--resolution", "32", "--out", "table.txt"]));
    assert!(tmp.path().join("table.txt").is_file());
    let o = preset(
        tmp.path(),
        "linesource",
        10,
        &["numerics.table_path=table.txt", "numerics.table_resolution=32", "output.snapshot_interval=0.2"],
    );
    ok(&o);
    let dir = tmp.path().join("out-linesource");
    for f in ["field_0000.txt", "field_0001.txt", "field_0002.txt", "field_final.txt"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    ok(&mixmom(&dir, &["cuts", "field_final.txt", "--out-dir", "cuts"]));
    let cut = fs::read_to_string(dir.join("cuts/field_final_cut_diagonal.txt")).unwrap();
    assert!(cut.contains("s x y u00"));
    assert_eq!(cut.lines().filter(|l| !l.starts_with('#')).count(), 11);
}

#[test]
fn bad_invocations_fail() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(!mixmom(tmp.path(), &["preset", "nope"]).status.success());
    assert!(!mixmom(tmp.path(), &["run", "missing.toml"]).status.success());
    assert!(!preset(tmp.path(), "twobeams", 10, &["time.cfl=1.5"]).status.success());
    assert!(!preset(tmp.path(), "twobeams", 10, &["domain.nz=3"]).status.success());
}
