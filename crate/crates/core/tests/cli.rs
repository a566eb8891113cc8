use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::Parser;
use k3_lax::cli::{load_lattice, run, RunConfig};
use k3_lax::lattice::signature;
use k3_lax::Error;
use serde_json::Value;
use tempfile::TempDir;

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn k3lax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_k3lax")).args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn rank_one(dir: &TempDir) -> PathBuf {
    write(dir, "rank1.json", r#"{"gram": [[2]], "H": [1]}"#)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn load_lattice_examples() {
    let dir = TempDir::new().unwrap();
    let lat = load_lattice(&rank_one(&dir)).unwrap();
    assert_eq!((lat.rank(), lat.d(), lat.name()), (1, 1, "rank1"));

    let lat = load_lattice(&write(&dir, "r2.json", r#"{"gram": [[2,0],[0,-4]], "H": [1,0]}"#)).unwrap();
    assert_eq!((lat.rank(), lat.d()), (2, 1));
    assert_eq!(signature(lat.gram()), (1, 1, 0));

    // missing H is a parse failure with a position
    let err = load_lattice(&write(&dir, "bad.json", r#"{"gram": [[2,1],[0,2]]}"#)).unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.contains("line 1")), "{err}");
    let err = load_lattice(&write(&dir, "trunc.json", "{\"gram\": [[2]],\n \"H\": [1")).unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.contains("line 2")), "{err}");

    let err = load_lattice(&write(&dir, "asym.json", r#"{"gram": [[2,1],[0,2]], "H": [1,0]}"#)).unwrap_err();
    assert!(matches!(&err, Error::Lattice(m) if m.contains("symmetric")), "{err}");
    let err = load_lattice(&write(&dir, "sig.json", r#"{"gram": [[2,0],[0,2]], "H": [1,0]}"#)).unwrap_err();
    assert!(matches!(&err, Error::Lattice(m) if m.contains("signature")), "{err}");
    let err = load_lattice(&write(&dir, "odd.json", r#"{"gram": [[2,1],[1,-4]], "H": [1,1]}"#)).unwrap_err();
    assert!(matches!(&err, Error::Lattice(m) if m.contains("even")), "{err}");
    assert!(matches!(load_lattice(&dir.path().join("missing.json")), Err(Error::Config(_))));
}

#[test]
fn lax_report() {
    let dir = TempDir::new().unwrap();
    let out = k3lax(&["lax", "--lattice", p(&rank_one(&dir)), "--mu", "0"]);
    assert!(out.status.success());
    let r = json_of(&out);
    assert_eq!(r["command"], "lax");
    let lp = &r["results"]["lax_point"];
    assert_eq!(lp["delta0"], serde_json::json!({"r": 1, "D": [0], "s": 1}));
    assert_eq!(lp["alpha0"], serde_json::json!({"a": "1", "b": "0", "d": 1}));
    let fam = r["results"]["family"].as_array().unwrap();
    let row = fam.iter().find(|x| x["ell"] == 1).unwrap();
    assert_eq!(row["squared_mass"]["exact"]["a"], "5");
    assert_eq!(row["z"]["re"]["a"], "-1");
    assert_eq!(row["z"]["im"]["a"], "2");
    assert_eq!(r["provenance"]["box"], "8,8,40");
    assert_eq!(r["results"]["kernel_classes"].as_array().unwrap().len(), 2);
}

#[test]
fn lax_csv_table() {
    let dir = TempDir::new().unwrap();
    let out = k3lax(&["lax", "--lattice", p(&rank_one(&dir)), "--out", "csv", "--ell-min", "0", "--ell-max", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ell,r,D1,s,re_z,im_z,squared_mass,squared_mass_decimal"));
    assert_eq!(lines.next(), Some("0,1,0,1,0,0,0,0.00000000000000000e0"));
    assert_eq!(lines.next(), Some("1,1,1,2,-1,2,5,5.00000000000000000e0"));
    assert_eq!(lines.next(), Some("2,1,2,5,-4,4,32,3.20000000000000000e1"));
    assert_eq!(lines.next(), None);
}

#[test]
fn separate_report() {
    let dir = TempDir::new().unwrap();
    let r = json_of(&k3lax(&["separate", "--lattice", p(&rank_one(&dir))]));
    let c = &r["results"]["certificate"];
    assert_eq!((c["a"].as_u64(), c["p"].as_u64()), (Some(1), Some(5)));
    assert_eq!(r["results"]["verified"], true);
    assert_eq!(r["results"]["separation"]["valuation"], 1);
    assert_eq!(r["results"]["separation"]["ratio_irrational"], true);

    let r = json_of(&k3lax(&["separate", "--lattice", p(&rank_one(&dir)), "--mu", "1"]));
    assert_eq!(r["results"]["certificate"]["a"], 4);
}

#[test]
fn reconstruct_hidden_charge() {
    let dir = TempDir::new().unwrap();
    let r = json_of(&k3lax(&["reconstruct", "--lattice", p(&rank_one(&dir)), "--B", "0", "--alpha", "2"]));
    let res = &r["results"];
    assert_eq!(res["residual"], serde_json::json!({"a": "0", "b": "0", "d": 1}));
    assert_eq!(res["matches_hidden"], true);
    // Z(v) = -s + 4r + 4iD at B = 0, alpha = 2; basis (1,0,1), (1,-1,2), (1,2,5); Z(v_1) = 3
    let c = res["coefficients"].as_array().unwrap();
    assert_eq!(c[0]["re"]["a"], "1");
    assert_eq!((c[1]["re"]["a"].as_str(), c[1]["im"]["a"].as_str()), (Some("2/3"), Some("-4/3")));
    assert_eq!((c[2]["re"]["a"].as_str(), c[2]["im"]["a"].as_str()), (Some("-1/3"), Some("8/3")));

    let r = json_of(&k3lax(&["reconstruct", "--lattice", p(&rank_one(&dir)), "--B", "0", "--alpha", "2", "--mode", "float"]));
    assert_eq!(r["results"]["matches_hidden"], true);
    let r = json_of(&k3lax(&["reconstruct", "--lattice", p(&rank_one(&dir)), "--seed", "11"]));
    assert_eq!(r["results"]["matches_hidden"], true);
}

#[test]
fn reconstruct_from_mass_file() {
    let dir = TempDir::new().unwrap();
    // |Z|^2 at B = 0, alpha = 2 for the basis and companions, scaled by 2
    let masses = write(
        &dir,
        "masses.json",
        r#"[
            {"v": {"r": 1, "D": [0], "s": 1}, "squared_mass": "18"},
            {"v": {"r": 1, "D": [-1], "s": 2}, "squared_mass": 40},
            {"v": "1,2,5", "squared_mass": {"a": "130", "b": "0", "d": 1}},
            {"v": "-2,-1,-1", "squared_mass": "130"},
            {"v": "-5,2,-1", "squared_mass": "850"},
            {"v": "-10,13,-17", "squared_mass": "6466"}
        ]"#,
    );
    let r = json_of(&k3lax(&["reconstruct", "--lattice", p(&rank_one(&dir)), "--masses", p(&masses)]));
    let c = r["results"]["coefficients"].as_array().unwrap();
    assert_eq!((c[1]["re"]["a"].as_str(), c[1]["im"]["a"].as_str()), (Some("2/3"), Some("-4/3")));
    let r = json_of(&k3lax(&["reconstruct", "--lattice", p(&rank_one(&dir)), "--masses", p(&masses), "--mode", "float"]));
    let im: f64 = r["results"]["coefficients"][2]["im"].as_str().unwrap().parse().unwrap();
    assert!((im - 8.0 / 3.0).abs() < 1e-12);

    let partial = write(&dir, "partial.json", r#"[{"v": "1,0,1", "squared_mass": "9"}]"#);
    let out = k3lax(&["reconstruct", "--lattice", p(&rank_one(&dir)), "--masses", p(&partial)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json_of(&out)["error"]["kind"], "MissingMass");
}

#[test]
fn exit_codes_and_error_objects() {
    let dir = TempDir::new().unwrap();
    let lat = rank_one(&dir);
    let out = k3lax(&["lax", "--lattice", p(&lat), "--mu", "1/3", "--box", "2,8,40"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json_of(&out)["error"]["kind"], "NoSphericalClass");

    let bad = write(&dir, "bad.json", r#"{"gram": [[2,1],[0,2]], "H": [1, 0]}"#);
    let out = k3lax(&["enum", "--lattice", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_of(&out)["error"]["kind"], "LatticeError");

    let out = k3lax(&["enum"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_of(&out)["error"]["kind"], "ConfigError");

    let out = k3lax(&["basis", "--lattice", p(&lat), "--out", "csv"]);
    assert_eq!(out.status.code(), Some(2));

    let out = k3lax(&["pair", "--lattice", p(&lat), "--u", "1,0", "--v", "0,0,1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_of(&out)["error"]["kind"], "DimensionError");
}

#[test]
fn pair_and_enum() {
    let dir = TempDir::new().unwrap();
    let lat = rank_one(&dir);
    let r = json_of(&k3lax(&["pair", "--lattice", p(&lat), "--u", "1,0,1", "--v", "1,1,2"]));
    assert_eq!(r["results"]["pairing"], -3);
    assert_eq!(r["results"]["chi"], 3);
    assert_eq!(r["results"]["reflection_of_v_in_u"], serde_json::json!({"r": -2, "D": [1], "s": -1}));

    let r = json_of(&k3lax(&["enum", "--lattice", p(&lat), "--mu", "1"]));
    assert_eq!(r["results"]["r0"], 2);
    assert_eq!(r["results"]["classes"][0]["v"], serde_json::json!({"r": 2, "D": [1], "s": 1}));

    let out = k3lax(&["enum", "--lattice", p(&lat), "--box", "1,1,2", "--out", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "r,D1,s,slope\n-1,-1,-2,2\n-1,0,-1,0\n-1,1,-2,-2\n1,-1,2,-2\n1,0,1,0\n1,1,2,2\n");
}

#[test]
fn chamber_at_lax_point_and_generic_point() {
    let dir = TempDir::new().unwrap();
    let lat = rank_one(&dir);
    let r = json_of(&k3lax(&["chamber", "--lattice", p(&lat)]));
    let res = &r["results"];
    // the lax point itself lies on the wall of (1, 0, 1)
    assert_eq!(res["wall_hits"].as_array().unwrap().len(), 2);
    assert_eq!(res["support_constant"]["ratio_squared"]["a"], "36/5");

    let r = json_of(&k3lax(&["chamber", "--lattice", p(&lat), "--alpha", "3/2", "--B", "1/3"]));
    assert_eq!(r["results"]["in_p_plus"], true);
    assert!(r["results"]["wall_hits"].as_array().unwrap().is_empty());

    let d2 = write(&dir, "d2.json", r#"{"gram": [[4]], "H": [1]}"#);
    let r = json_of(&k3lax(&["chamber", "--lattice", p(&d2), "--alpha", "1/2*sqrtd"]));
    assert_eq!(r["inputs"]["alpha"]["exact"], serde_json::json!({"a": "0", "b": "1/2", "d": 2}));
    assert_eq!(r["results"]["wall_hits"].as_array().unwrap().len(), 2);
}

#[test]
fn walls_report() {
    let dir = TempDir::new().unwrap();
    let r = json_of(&k3lax(&["walls", "--lattice", p(&rank_one(&dir)), "--box", "4,4,20", "--ell", "1"]));
    assert_eq!(r["results"]["wall_count"], 96);
    let first = &r["results"]["walls"][0];
    assert!(first["witnesses"].as_array().unwrap().len() >= 1);
}

#[test]
fn selftest_passes() {
    let dir = TempDir::new().unwrap();
    let r = json_of(&k3lax(&["selftest", "--samples", "100", "--lattice", p(&rank_one(&dir))]));
    assert_eq!(r["results"]["failed"], 0);
    assert!(r["results"]["passed"].as_u64().unwrap() > 1000);
}

#[test]
fn run_is_deterministic_across_pools() {
    let dir = TempDir::new().unwrap();
    let lat = rank_one(&dir);
    let cfg = RunConfig::try_parse_from(["k3lax", "walls", "--lattice", p(&lat), "--box", "5,5,30", "--ell", "2"]).unwrap();
    let render = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run(&cfg).unwrap().render(cfg.output).unwrap())
    };
    let one = render(1);
    assert_eq!(one, render(3));
    assert_eq!(one, render(8));
}
