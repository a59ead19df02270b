use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
[time]
steps = 10

[objective]
theta_max = 600.0
";

fn thermistor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermistor"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_string_lossy().into_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn mesh_info_audits_the_desk_box() {
    let out = thermistor(&["mesh-info"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("vertices        96"), "{text}");
    assert!(text.contains("tets            270"));
    assert!(text.contains("boundary faces  156"));
}

#[test]
fn free_and_constrained_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let free = dir.path().join("free");
    let con = dir.path().join("con");
    for (scenario, out) in [("free", &free), ("constrained", &con)] {
        let o = thermistor(&[
            "--config",
            &cfg,
            "--scenario",
            scenario,
            "--out",
            out.to_str().unwrap(),
            "run",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (rf, rc) = (report(&free), report(&con));
    assert_eq!(rf["status"], "ok");
    assert_eq!(rf["scenario"], "free");
    assert!(rf["max_violation_K"].as_f64().unwrap() > 0.0);
    assert!(rc["max_violation_K"].as_f64().unwrap() <= 1e-2);
    assert_eq!(rc["termination"], "violation_reached");
    assert_eq!(rc["min_principle"]["violated"], false);
    assert!(rc["scaling"]["joule_number"].as_f64().unwrap() > 0.0);

    let control = std::fs::read_to_string(con.join("control.csv")).unwrap();
    let rows: Vec<&str> = control.lines().collect();
    assert_eq!(rows[0], "time_s,u_A_per_m2");
    assert_eq!(rows.len(), 12);
    for row in [rows[1], rows[11]] {
        assert_eq!(row.split(',').nth(1).unwrap().parse::<f64>().unwrap(), 0.0);
    }
    assert!(con.join("probe_0.csv").is_file());
    assert!(con.join("trajectory.bin").is_file());
    let vtk = std::fs::read_to_string(con.join("fields_final.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version"));
    assert!(vtk.contains("theta_K"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let o = thermistor(&[
            "--config",
            &cfg,
            "--scenario",
            "free",
            "--out",
            out.to_str().unwrap(),
            "run",
        ]);
        assert!(o.status.success());
        let kept = dir.path().join(name);
        std::fs::rename(&out, &kept).unwrap();
        let mut entries: Vec<_> = std::fs::read_dir(&kept)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        entries.sort();
        files.push(entries);
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn dump_all_writes_every_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("all");
    let o = thermistor(&[
        "--config",
        &cfg,
        "--scenario",
        "free",
        "--dump-fields",
        "all",
        "--out",
        out.to_str().unwrap(),
        "run",
    ]);
    assert!(o.status.success());
    for k in 0..=10 {
        assert!(out.join(format!("fields_{k:04}.vtk")).is_file());
    }
    assert!(!out.join("fields_final.vtk").exists());
}

#[test]
fn check_gradient_reports_small_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = thermistor(&[
        "--config",
        &cfg,
        "--seed",
        "4",
        "check-gradient",
        "--directions",
        "2",
        "--lambda",
        "1e3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed = 4"));
    assert_eq!(text.lines().filter(|l| l.starts_with("direction")).count(), 2);
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[time]\nstep = 3\n").unwrap();
    let o = thermistor(&["--config", p.to_str().unwrap(), "mesh-info"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml"));

    std::fs::write(&p, "[mesh]\nfile = \"missing.mesh\"\n").unwrap();
    let o = thermistor(&["--config", p.to_str().unwrap(), "run"]);
    assert!(!o.status.success());
}

#[test]
fn mesh_file_paths_resolve_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = thermistor_cli::config::RunConfig::default().physical_mesh().unwrap();
    mesh.save(&dir.path().join("box.mesh")).unwrap();
    let p = dir.path().join("cfg.toml");
    std::fs::write(&p, "[mesh]\nfile = \"box.mesh\"\n").unwrap();
    let o = thermistor(&["--config", p.to_str().unwrap(), "mesh-info"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().contains("tets            270"));
}
