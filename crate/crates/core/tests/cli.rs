use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_islnet"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(name: &str, ws: &Path) -> Output {
    bin()
        .arg("run")
        .arg(scenario(name))
        .arg("--workspace")
        .arg(ws)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn inspect(ws: &Path, what: &[&str]) -> Output {
    bin().arg("inspect").arg(ws).args(what).output().unwrap()
}

fn replay(ws: &Path) -> Output {
    bin().arg("replay").arg(ws).output().unwrap()
}

#[test]
fn two_node_matches_golden_log() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let out = run("two_node.isl", &ws);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/two_node.log")).unwrap();
    assert_eq!(fs::read_to_string(ws.join("ledger.log")).unwrap(), golden);
}

#[test]
fn untrusted_share_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("untrusted_share.isl", &dir.path().join("ws"));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Unauthorized"), "{}", stderr(&out));
}

#[test]
fn empty_scenario_is_genesis() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let out = run("empty.isl", &ws);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "");
    let log = fs::read_to_string(ws.join("ledger.log")).unwrap();
    assert_eq!(log.lines().count(), 1);
    let r = replay(&ws);
    assert_eq!(stdout(&r), "MATCH\n");
    let balances = stdout(&inspect(&ws, &["balances"]));
    assert!(balances.starts_with("treasury 0000000000000000000000000000000000000000 1000000000\n"));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["two_node.isl", "transfer_learning.isl", "untrusted_share.isl", "empty.isl"] {
        let (w1, w2) = (dir.path().join(format!("{name}-1")), dir.path().join(format!("{name}-2")));
        let (o1, o2) = (run(name, &w1), run(name, &w2));
        assert_eq!(o1.status.code(), o2.status.code());
        assert_eq!(o1.stdout, o2.stdout);
        for f in ["ledger.log", "state.txt"] {
            assert_eq!(fs::read(w1.join(f)).unwrap(), fs::read(w2.join(f)).unwrap(), "{name} {f}");
        }
        for what in [&["registry"][..], &["balances"]] {
            assert_eq!(inspect(&w1, what).stdout, inspect(&w2, what).stdout);
        }
        assert_eq!(stdout(&replay(&w1)), "MATCH\n", "{name}");
    }
}

#[test]
fn inspect_reports() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    assert!(run("transfer_learning.isl", &ws).status.success());

    let registry = stdout(&inspect(&ws, &["registry"]));
    let entries: Vec<&str> = registry
        .lines()
        .filter(|l| l.starts_with("dataset ") || l.starts_with("model "))
        .collect();
    assert_eq!(entries.len(), 6);
    assert!(entries.iter().all(|l| l.contains(" tx-")));

    let balances = stdout(&inspect(&ws, &["balances"]));
    assert!(balances.lines().any(|l| l.starts_with("room2 ") && l.ends_with(" 5025 delta=+25")), "{balances}");
    assert!(balances.lines().any(|l| l.starts_with("room3 ") && l.ends_with(" 4975 delta=-25")), "{balances}");

    let ft_addr = registry
        .lines()
        .find(|l| l.contains("iri=isl://room3/model/occ-ft"))
        .and_then(|l| l.split(' ').nth(1))
        .unwrap();
    let prov = stdout(&inspect(&ws, &["provenance", ft_addr]));
    let lines: Vec<&str> = prov.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains("model=isl://room2/model/occ "));
    assert!(lines[1].contains("model=isl://room3/model/occ-ft "));

    let missing = inspect(&ws, &["provenance", &"0".repeat(64)]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("UnknownResource"));

    let graph = stdout(&inspect(&ws, &["graph", "room3"]));
    assert!(graph.contains("<isl://room3/model/occ-ft> <isl://schema/baseModel> <isl://room2/model/occ> ."));
}

#[test]
fn replay_detects_edits() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    assert!(run("two_node.isl", &ws).status.success());
    assert_eq!(stdout(&replay(&ws)), "MATCH\n");

    let log = fs::read_to_string(ws.join("ledger.log")).unwrap();
    fs::write(ws.join("ledger.log"), log.replace(" value=10\n", " value=9\n")).unwrap();
    let r = replay(&ws);
    assert_ne!(r.status.code(), Some(0));
    assert!(stdout(&r) == "MISMATCH\n" || stderr(&r).contains("CorruptLog"));

    fs::write(ws.join("ledger.log"), log.replace("seq=3 ", "seq=x ")).unwrap();
    let r = replay(&ws);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("CorruptLog"));
}

#[test]
fn usage_and_parse_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.isl");
    fs::write(&bad, "create-network 10\nshare a\n").unwrap();
    let out = bin()
        .arg("run")
        .arg(&bad)
        .arg("--workspace")
        .arg(dir.path().join("ws"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ParseError: line 2"));
    assert!(!dir.path().join("ws").exists());

    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("run").output().unwrap().status.code(), Some(2));
    assert_eq!(inspect(&dir.path().join("none"), &["registry"]).status.code(), Some(2));
    let ws = dir.path().join("ws2");
    assert!(run("empty.isl", &ws).status.success());
    assert_eq!(inspect(&ws, &["everything"]).status.code(), Some(2));
    assert_eq!(run("empty.isl", &ws).status.code(), Some(2));
}
