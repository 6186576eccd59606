use std::path::PathBuf;

use serde_json::Value;

use super::*;

fn scene(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenes")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn graze(args: &[&str]) -> (Invocation, Value) {
    let inv = run_cli(std::iter::once("graze").chain(args.iter().copied()));
    let report = serde_json::from_str(&inv.stdout).unwrap_or(Value::Null);
    (inv, report)
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn verify_two_disk_passes() {
    let s = scene("two_disk.json");
    let (inv, r) = graze(&["verify", "--scene", &s, "--trials", "30"]);
    assert_eq!(inv.code, 0, "{}", inv.stderr);
    assert_eq!(r["passed"], true);
    assert_eq!(r["seed"], 1);
    for c in r["checks"].as_array().unwrap() {
        assert!(c["tolerance"].is_number(), "{c}");
    }
    assert_eq!(r["data"]["orbits"], serde_json::json!(["0-1"]));
}

#[test]
fn corrupted_jacobian_names_the_check() {
    let (inv, r) = graze(&["verify", "--trials", "10", "--corrupt-jacobian"]);
    assert_eq!(inv.code, 1);
    assert_eq!(r["passed"], false);
    assert_eq!(check(&r, "jacobian.dB_du.fd_rel_err")["passed"], false);
    assert_eq!(check(&r, "jacobian.dF_dstate.fd_rel_err")["passed"], true);
    assert!(inv.stderr.contains("jacobian.dB_du.fd_rel_err"));
}

#[test]
fn seeded_runs_share_a_digest() {
    let args = ["verify", "--trials", "10", "--seed", "7"];
    let (_, a) = graze(&args);
    let (_, b) = graze(&args);
    assert_eq!(a["digest"], b["digest"]);
    assert_eq!(a["inputs_digest"], b["inputs_digest"]);
    let (_, c) = graze(&["verify", "--trials", "10", "--seed", "8"]);
    assert_ne!(a["digest"], c["digest"]);
}

#[test]
fn outputs_are_deterministic() {
    let s = scene("constructed.json");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let reports: Vec<Value> = dirs
        .iter()
        .map(|d| {
            let out = d.path().to_string_lossy().into_owned();
            graze(&[
                "continue", "--scene", &s, "--orbit", "0-2-3-1", "--out", &out,
            ])
            .1
        })
        .collect();
    assert_eq!(reports[0]["digest"], reports[1]["digest"]);
    for name in reports[0]["outputs"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn two_disk_has_one_orbit_row() {
    let s = scene("two_disk.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (inv, r) = graze(&["orbits", "--scene", &s, "--max-period", "2", "--out", &out]);
    assert_eq!(inv.code, 0);
    assert_eq!(r["data"]["orbits"].as_array().unwrap().len(), 1);
    let csv = fs::read_to_string(dir.path().join("orbits.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    // one orbit of period 2: one row per collision
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|l| l.starts_with("0,0-1,")));
    let svg = fs::read_to_string(dir.path().join("orbits.svg")).unwrap();
    assert!(svg.contains("<polygon"));
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn constructed_scene_passes_filters() {
    let s = scene("constructed.json");
    let (inv, r) = graze(&[
        "orbits",
        "--scene",
        &s,
        "--max-period",
        "4",
        "--near-delta",
        "0.05",
        "--near-scatterer",
        "0",
        "--single-hit-0",
        "--alpha0-max",
        "0.5235987755982988",
    ]);
    assert_eq!(inv.code, 0);
    let seqs: Vec<&str> = r["data"]["orbits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["sequence"].as_str().unwrap())
        .collect();
    assert!(seqs.contains(&"0-2-3-1"), "{seqs:?}");
}

#[test]
fn near_tangent_filter() {
    let s = scene("near_tangent.json");
    let (_, r) = graze(&[
        "orbits",
        "--scene",
        &s,
        "--max-period",
        "2",
        "--near-delta",
        "0.1",
    ]);
    let orbits = r["data"]["orbits"].as_array().unwrap();
    assert_eq!(orbits.len(), 1);
    assert_eq!(orbits[0]["sequence"], "0-1");
    let c = orbits[0]["nearest_approach"]["clearance"].as_f64().unwrap();
    assert!((c - 1.05).abs() < 1e-9);
}

#[test]
fn empty_filter_result_is_not_a_failure() {
    let s = scene("triangle.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (inv, r) = graze(&[
        "orbits",
        "--scene",
        &s,
        "--near-delta",
        "0.01",
        "--out",
        &out,
    ]);
    assert_eq!(inv.code, 0);
    assert!(r["data"]["orbits"].as_array().unwrap().is_empty());
    assert_eq!(r["notes"].as_array().unwrap().len(), 1);
    let csv = fs::read_to_string(dir.path().join("orbits.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "header only");
}

#[test]
fn perturb_constructed_scene() {
    let s = scene("constructed.json");
    let (inv, r) = graze(&["perturb", "--scene", &s, "--orbit", "0-2-3-1"]);
    assert_eq!(inv.code, 0, "{}", inv.stderr);
    let resp = &r["data"]["response"];
    assert!((resp["h"].as_f64().unwrap() - 1.03).abs() < 1e-9);
    // bound columns dominate the measured ones
    let ell = resp["ell0_plus"]
        .as_f64()
        .unwrap()
        .abs()
        .max(resp["ell0_minus"].as_f64().unwrap().abs());
    assert!(ell < resp["bound_ell"].as_f64().unwrap());
    assert!(resp["alpha0_prime"].as_f64().unwrap().abs() < resp["bound_alpha"].as_f64().unwrap());
    assert_eq!(check(&r, "perturb.h_prime_ceiling")["passed"], true);
}

#[test]
fn zero_forcing_reports_zero_derivatives() {
    let s = scene("zero_forcing.json");
    let (inv, r) = graze(&[
        "perturb", "--scene", &s, "--orbit", "0-1-2-1", "--theta", "0",
    ]);
    assert_eq!(inv.code, 0, "{}", inv.stderr);
    let resp = &r["data"]["response"];
    assert!(resp["alpha0"].as_f64().unwrap().abs() < 1e-10);
    for key in ["alpha0_prime", "ell0_plus", "ell0_minus"] {
        assert!(
            resp[key].as_f64().unwrap().abs() < 1e-10,
            "{key} = {}",
            resp[key]
        );
    }
    for u in resp["u0_prime"].as_array().unwrap() {
        assert!(u.as_f64().unwrap().abs() < 1e-10);
    }
    // a fixed direction skips the ceiling on h′
    assert!(r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["name"] != "perturb.h_prime_ceiling"));
}

#[test]
fn perturb_reports_bad_setup_as_failed_check() {
    // scatterer 0 hit twice
    let s = scene("triangle.json");
    let (inv, r) = graze(&["perturb", "--scene", &s, "--orbit", "0-1-0-2"]);
    assert_eq!(inv.code, 1);
    assert_eq!(check(&r, "perturb.setup")["passed"], false);
}

#[test]
fn continue_emits_certificate_and_frames() {
    let s = scene("constructed.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let (inv, r) = graze(&[
        "continue", "--scene", &s, "--orbit", "0-2-3-1", "--out", &out,
    ]);
    assert_eq!(inv.code, 0, "{}", inv.stderr);
    let cert = &r["data"]["certificate"];
    assert!(cert["grazing_distance"].as_f64().unwrap().abs() < 1e-6);
    let disp = check(&r, "continue.displacement");
    assert_eq!(disp["passed"], true);
    assert!(disp["value"].as_f64().unwrap() <= 0.1);
    let steps = r["data"]["steps"].as_u64().unwrap() as usize;
    let frames = fs::read_dir(dir.path().join("frames")).unwrap().count();
    assert_eq!(frames, steps.min(MAX_FRAMES));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), steps + 1);
    let written: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("certificate.json")).unwrap())
            .unwrap();
    assert_eq!(&written, cert);
}

#[test]
fn step_limit_exits_nonzero() {
    let s = scene("constructed.json");
    let (inv, r) = graze(&[
        "continue",
        "--scene",
        &s,
        "--orbit",
        "0-2-3-1",
        "--max-steps",
        "1",
        "--step",
        "1e-4",
        "--min-step",
        "1e-8",
    ]);
    assert_eq!(inv.code, 1);
    assert_eq!(r["data"]["outcome"], "step-limit");
    assert_eq!(check(&r, "continue.certificate")["passed"], false);
}

#[test]
fn scene_parse_error_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\"centers\": [[0, 0],\n  [4, 0]],, }\n").unwrap();
    let p = path.to_string_lossy().into_owned();
    let (inv, _) = graze(&["verify", "--scene", &p]);
    assert_eq!(inv.code, 2);
    assert!(inv.stdout.is_empty());
    assert!(inv.stderr.contains(":2:"), "{}", inv.stderr);
    assert!(inv.stderr.contains("scene parse error"));
}

#[test]
fn overlapping_scene_names_the_pair() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("overlap.json");
    fs::write(&path, r#"{"centers": [[0, 0], [1.5, 0]]}"#).unwrap();
    let p = path.to_string_lossy().into_owned();
    let (inv, _) = graze(&["orbits", "--scene", &p]);
    assert_eq!(inv.code, 2);
    assert!(inv.stderr.contains("0 and 1"), "{}", inv.stderr);
}

#[test]
fn bad_arguments_are_usage_errors() {
    let s = scene("two_disk.json");
    assert_eq!(
        graze(&["perturb", "--scene", &s, "--orbit", "0-7"]).0.code,
        2
    );
    assert_eq!(
        graze(&["perturb", "--scene", &s, "--orbit", "0-1", "--theta", "up"])
            .0
            .code,
        2
    );
    assert_eq!(graze(&["verify", "--format", "png"]).0.code, 2);
    assert_eq!(graze(&["--help"]).0.code, 0);
}

#[test]
fn theta_parses() {
    assert_eq!("auto".parse::<Theta>(), Ok(Theta::Auto));
    assert_eq!("0.5".parse::<Theta>(), Ok(Theta::Angle(0.5)));
    assert!("nan".parse::<Theta>().is_err());
}

#[test]
fn frame_subsampling_keeps_ends() {
    assert_eq!(frame_indices(3), vec![0, 1, 2]);
    let idx = frame_indices(1000);
    assert_eq!(idx.len(), MAX_FRAMES);
    assert_eq!(idx[0], 0);
    assert_eq!(*idx.last().unwrap(), 999);
    assert!(idx.windows(2).all(|w| w[0] < w[1]));
}
