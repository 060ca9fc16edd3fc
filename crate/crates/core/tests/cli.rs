use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pathsim"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

#[test]
fn writes_one_report_per_protocol() {
    let out = tempfile::tempdir().unwrap();
    let st =
        bin().arg("--scenario").arg(scenario("fig6")).arg("--out").arg(out.path()).arg("--trace").status().unwrap();
    assert!(st.success());
    for f in ["yamr.json", "yamr_hiding.json", "yamr.trace.json", "yamr_hiding.trace.json"] {
        assert!(out.path().join(f).exists(), "{f}");
    }
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("yamr.json")).unwrap()).unwrap();
    assert_eq!(r["protocol"], "yamr");
    assert_eq!(r["converged"], true);
}

#[test]
fn compare_prints_csv_table() {
    let o = bin()
        .arg("--scenario")
        .arg(scenario("fig3"))
        .args(["--compare", "--format", "csv", "--protocol", "bgp", "--protocol", "rbgp"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("protocol,converged,messages"));
    assert!(lines[1].starts_with("bgp,true,"));
    assert!(lines[2].starts_with("rbgp,true,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"version":1,"fixture":"fig3","origins":[99],"protocols":["bgp"]}"#).unwrap();
    assert_eq!(bin().arg("--scenario").arg(&bad).status().unwrap().code(), Some(2));

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"version":1,"fixture":"fig3","origins":[1],"colour":"red"}"#).unwrap();
    assert_eq!(bin().arg("--scenario").arg(&unknown).status().unwrap().code(), Some(2));

    let st = bin().arg("--scenario").arg(scenario("fig3")).args(["--quiesce-limit", "0"]).output().unwrap();
    assert_eq!(st.status.code(), Some(3));

    let missing = dir.path().join("nope.json");
    assert_eq!(bin().arg("--scenario").arg(&missing).status().unwrap().code(), Some(4));

    assert_eq!(bin().args(["--protocol", "ospf", "--gen", "4", "1"]).status().unwrap().code(), Some(2));
}

#[test]
fn gen_is_seeded() {
    let a = bin().args(["--gen", "9", "7"]).output().unwrap();
    let b = bin().args(["--gen", "9", "7"]).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}
