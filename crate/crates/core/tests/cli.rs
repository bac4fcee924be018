use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cbf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbf"))
        .args(args)
        .current_dir(dir)
        .env("CBF_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cbf(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn distance(stdout: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("distance: "))
        .unwrap()
        .parse()
        .unwrap()
}

/// Files anywhere under `dir` that look like finished outputs.
fn finished_files(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(finished_files(&path));
        } else if path.extension().is_none_or(|e| e != "partial") {
            out.push(path.display().to_string());
        }
    }
    out
}

#[test]
fn sphere_level3_has_258_rows() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["sphere", "--level", "3", "-o", "s.xyz"]);
    let text = fs::read_to_string(dir.path().join("s.xyz")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 258);
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 6));
}

#[test]
fn eigen_distance_shrinks_from_level3_to_level4() {
    let dir = tempfile::tempdir().unwrap();
    let d3 = distance(&ok(
        dir.path(),
        &["eigen", "--level", "3", "--m", "100", "-o", "e3.csv"],
    ));
    let d4 = distance(&ok(
        dir.path(),
        &["eigen", "--level", "4", "--m", "100", "-o", "e4.csv"],
    ));
    let text = fs::read_to_string(dir.path().join("e4.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "index,computed,exact,abserr");
    assert_eq!(text.lines().count(), 101);
    assert!(d4.is_finite() && d4 > 0.0 && d4 < d3, "{d3} {d4}");
}

#[test]
fn heat_without_diffusion_keeps_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "heat",
            "--level",
            "4",
            "--eps",
            "0",
            "--t-end",
            "1",
            "--output-dir",
            "h",
        ],
    );
    let h = dir.path().join("h");
    let mut snaps: Vec<_> = fs::read_dir(&h)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with("heat_0")
        })
        .collect();
    snaps.sort();
    assert!(snaps.len() > 2);
    let first = fs::read(&snaps[0]).unwrap();
    let last = fs::read(snaps.last().unwrap()).unwrap();
    assert_eq!(first, last);
    let errors = fs::read_to_string(h.join("heat_errors.csv")).unwrap();
    assert_eq!(errors.lines().next().unwrap(), "t,L2_err,Linf_err");
}

#[test]
fn bell_initial_condition_writes_no_error_table() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "heat",
            "--level",
            "2",
            "--initial",
            "bell",
            "--t-end",
            "0.05",
            "--output-dir",
            "h",
        ],
    );
    assert!(!dir.path().join("h/heat_errors.csv").exists());
    assert!(dir.path().join("h/heat_000000.csv").exists());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        ok(
            dir.path(),
            &[
                "eigen",
                "--level",
                "3",
                "-o",
                &format!("{run}/spectrum.csv"),
            ],
        );
        ok(
            dir.path(),
            &[
                "smooth",
                "--level",
                "2",
                "--perturb",
                "0.05",
                "--steps",
                "5",
                "--output-dir",
                run,
            ],
        );
    }
    for file in ["spectrum.csv", "smoothing.csv", "smooth_000005.xyz"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn normals_and_assemble_commands() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["sphere", "--level", "2", "-o", "s.xyz"]);
    // strip normals to exercise estimation
    let bare: String = fs::read_to_string(dir.path().join("s.xyz"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().take(3).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    fs::write(dir.path().join("bare.xyz"), bare).unwrap();
    ok(
        dir.path(),
        &["normals", "-i", "bare.xyz", "-k", "8", "-o", "n.xyz"],
    );
    let text = fs::read_to_string(dir.path().join("n.xyz")).unwrap();
    assert!(text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .all(|l| l.split_whitespace().count() == 6));

    let out = ok(
        dir.path(),
        &["assemble", "-i", "n.xyz", "--output-dir", "m"],
    );
    assert!(out.contains("condition estimate:"));
    let a = fs::read_to_string(dir.path().join("m/A.mtx")).unwrap();
    assert!(a.starts_with("%%MatrixMarket matrix coordinate real general\n66 66 "));
    assert!(dir.path().join("m/B.mtx").exists());
}

#[test]
fn failures_exit_nonzero_and_leave_no_finished_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    let out = cbf(p, &["eigen", "-i", "missing.xyz", "-o", "x.csv"]);
    assert_eq!(out.status.code(), Some(3));

    fs::write(p.join("dup.xyz"), "0 0 0\n1 0 0\n0 1 0\n0 0 0\n").unwrap();
    let out = cbf(p, &["eigen", "-i", "dup.xyz", "-o", "x.csv"]);
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");

    fs::write(p.join("line.xyz"), "0 0 0\n1 0 0\n2 0 0\n3 0 0\n4 0 0\n").unwrap();
    let out = cbf(p, &["normals", "-i", "line.xyz", "-k", "3", "-o", "n.xyz"]);
    assert_eq!(out.status.code(), Some(5));

    let out = cbf(
        p,
        &[
            "eigen",
            "--level",
            "2",
            "--c",
            "1",
            "--rho",
            "1",
            "--support-multiplier",
            "3",
        ],
    );
    assert_eq!(out.status.code(), Some(2));

    let out = cbf(
        p,
        &[
            "eigen", "--level", "2", "--c", "1", "--rho", "0.5", "-o", "x.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));

    let out = cbf(
        p,
        &[
            "heat",
            "--level",
            "2",
            "--dt",
            "100",
            "--t-end",
            "100000",
            "--output-dir",
            "h",
        ],
    );
    assert_eq!(out.status.code(), Some(7));

    let mut left = finished_files(p);
    left.sort();
    assert_eq!(
        left,
        vec![
            p.join("dup.xyz").display().to_string(),
            p.join("line.xyz").display().to_string()
        ]
    );
}

#[test]
fn thread_setting_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cbf"))
        .args(["sphere", "--level", "1"])
        .current_dir(dir.path())
        .env("CBF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
