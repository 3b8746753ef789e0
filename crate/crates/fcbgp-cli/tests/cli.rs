//! End-to-end checks of the binary: exit codes, determinism, output shapes.

use std::path::Path;
use std::process::{Command, Output};

use fcbgp::crypto::SecretKey;
use fcbgp::fc::{sign_fc, Pathlet};
use fcbgp::trust::{AsNumber, Prefix};
use fcbgp::wire::{encode_update, write_fixture, BgpUpdate, FixtureRecord};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fcbgp"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .env_remove("FCBGP_OUT_DIR")
        .current_dir(dir)
        .output()
        .expect("spawn fcbgp")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn simulate_bundled_scenario_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let out1 = run(&["simulate", "--seed", "7"], tmp.path());
    assert!(out1.status.success(), "{out1:?}");
    let text = stdout(&out1);
    assert!(text.contains("AS5 best 10.1.0.0/24 via [1 2 3 4] PartiallyTrusted"));
    assert!(text.contains("AS2 best 10.1.0.0/24 via [1] Trusted"));
    let out2 = run(&["simulate", "--seed", "7"], tmp.path());
    assert_eq!(stdout(&out1), stdout(&out2));
    // Pinned golden digest for the bundled scenario at seed 7.
    assert!(
        text.contains("919ca6e8427bce332d17b7858fcc74b24a2a91b660e9ecd296596f3ba8d0daf8"),
        "unexpected trace digest in: {text}"
    );
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--seed", "banana"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["simulate"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["metrics", "--seed", "1", "--rates", "1.5"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(
        &["simulate", "--seed", "1", "--scenario", "no-such-file"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let bad = tmp.path().join("bad.fcs");
    std::fs::write(&bad, "link 1\n").unwrap();
    let out = run(
        &["simulate", "--seed", "1", "--scenario", bad.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn metrics_writes_csvs_and_honors_env_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let outdir = tmp.path().join("from-env");
    let out = bin()
        .args(["metrics", "--seed", "3", "--asn-count", "60", "--path-count", "80"])
        .env("FCBGP_OUT_DIR", &outdir)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let hijack = std::fs::read_to_string(outdir.join("hijack.csv")).unwrap();
    assert!(hijack.starts_with("rate,l,mode,hijack_rate\n"));
    assert!(hijack.contains(",fcbgp,") && hijack.contains(",bgpsec,"));
    let filtering = std::fs::read_to_string(outdir.join("filtering.csv")).unwrap();
    assert!(filtering.starts_with("rate,mean_f\n"));
    // Rerun into a second directory: identical cell values.
    let outdir2 = tmp.path().join("again");
    let out = bin()
        .args(["metrics", "--seed", "3", "--asn-count", "60", "--path-count", "80"])
        .env("FCBGP_OUT_DIR", &outdir2)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        hijack,
        std::fs::read_to_string(outdir2.join("hijack.csv")).unwrap()
    );
}

#[test]
fn inspect_shows_fc_attribute_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let prefix: Prefix = "10.0.0.0/24".parse().unwrap();
    let path = vec![AsNumber(1), AsNumber(2)];
    let fcs: Vec<_> = [(0u32, 1u32, 2u32), (1, 2, 3)]
        .iter()
        .map(|&(p, c, n)| {
            let key = SecretKey::derive(b"cli-test", c);
            let pathlet = Pathlet::new(AsNumber(p), AsNumber(c), AsNumber(n), prefix).unwrap();
            sign_fc(AsNumber(c), &pathlet, &key).unwrap()
        })
        .collect();
    let update = BgpUpdate::announcement(prefix, path, &fcs).unwrap();
    let bytes = write_fixture(&[FixtureRecord::Update(encode_update(&update).unwrap())]);
    let fixture = tmp.path().join("two-fc.fcbgp");
    std::fs::write(&fixture, &bytes).unwrap();
    let out = run(&["inspect", fixture.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("attr type-code 41"));
    assert!(text.contains("E=1"));
    assert!(text.contains("10.0.0.0/24"));

    // Truncated fixture: data error with an offset in the message.
    let cut = tmp.path().join("cut.fcbgp");
    std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    let out = run(&["inspect", cut.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset"));
}

#[test]
fn churn_reports_fractions() {
    let tmp = tempfile::tempdir().unwrap();
    let records = tmp.path().join("paths.txt");
    std::fs::write(
        &records,
        "9|10.0.0.0/24|1,2,3\n9|10.0.0.0/24|1,2,4\n9|10.0.0.0/24|1,2,4\n",
    )
    .unwrap();
    let out = run(&["churn", records.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("new-path: 1 (0.3333)"));
    assert!(text.contains("path-change: 1 (0.3333)"));
    assert!(text.contains("duplicate: 1"));
    assert!(text.contains("  1 -> 1"));

    std::fs::write(&records, "9|10.0.0.0/24|1,2,2\n").unwrap();
    let out = run(&["churn", records.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
