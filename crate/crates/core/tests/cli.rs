mod common;

use ngvas::cli::{parse_file, parse_str, render, run_command, EXIT_CONTRACT, EXIT_FAILS, EXIT_OK};

fn path(name: &str) -> String {
    common::fixture_dir().join(format!("{name}.ngvas")).to_string_lossy().into_owned()
}

fn json(args: &[&str]) -> (serde_json::Value, i32) {
    let mut a = args.to_vec();
    a.push("--json");
    let o = run_command(&a);
    (serde_json::from_str(&o.text).unwrap_or_else(|e| panic!("{args:?}: {e}\n{}", o.text)), o.code)
}

#[test]
fn validate_exit_codes() {
    assert_eq!(run_command(&["validate", &path("tiny-nl")]).code, EXIT_OK);
    let (v, code) = json(&["validate", &path("no-such-file")]);
    assert_eq!(code, EXIT_CONTRACT);
    assert!(v["error"]["message"].as_str().unwrap().contains("cannot read"));
}

#[test]
fn perfect_verdicts_map_to_exit_codes() {
    assert_eq!(run_command(&["perfect", &path("tiny-nl")]).code, EXIT_OK);
    assert_eq!(run_command(&["perfect", &path("once"), "--bound", "4"]).code, EXIT_FAILS);
    let (v, code) = json(&["perfect", &path("two-exit")]);
    assert_eq!(code, EXIT_CONTRACT);
    assert_eq!(v["error"]["kind"], "contract");
}

#[test]
fn usage_errors_are_contract_errors() {
    assert_eq!(run_command(&["frobnicate"]).code, EXIT_CONTRACT);
    assert_eq!(run_command(&["widetree", &path("tiny-nl")]).code, EXIT_CONTRACT);
    assert_eq!(run_command(&["--help"]).code, EXIT_OK);
}

#[test]
fn iterate_reports_the_threshold() {
    let (v, code) = json(&["iterate", &path("pump1")]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["plan"]["k0"], 49);
    assert_eq!(v["k"], 49);
    assert_eq!(v["enabled"], true);
    assert_eq!(v["effect"], serde_json::json!([0]));
    let (_, code) = json(&["iterate", &path("pump1"), "--k", "3"]);
    assert_eq!(code, EXIT_CONTRACT);
}

#[test]
fn eek_counts_round_trip() {
    let (v, code) = json(&["eek", "realize", &path("tiny-nl"), "--counts", "p1=2,p2=2,p3=1"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["parikh_ok"], true);
    let (_, code) = json(&["eek", "realize", &path("tiny-nl"), "--counts", "p1=1,p2=2,p3=1", "--hom"]);
    assert_eq!(code, EXIT_CONTRACT);
}

#[test]
fn widetree_within_bounds() {
    for k in ["1", "7", "16"] {
        let (v, code) = json(&["widetree", &path("tiny-nl"), "--k", k]);
        assert_eq!(code, EXIT_OK, "{v}");
    }
}

#[test]
fn reach_finds_the_single_letter_run() {
    let (v, code) = json(&["reach", &path("once"), "--from", "0,0", "--to", "0,1", "--bound", "2"]);
    assert_eq!(code, EXIT_OK, "{v}");
    assert_eq!(v["verdict"], "reachable");
}

#[test]
fn system_selection() {
    let (v, _) = json(&["rank", &path("with-child"), "--system", "C"]);
    let (w, _) = json(&["rank", &path("with-child")]);
    assert_ne!(v, w);
    let (e, code) = json(&["rank", &path("with-child"), "--system", "nope"]);
    assert_eq!(code, EXIT_CONTRACT, "{e}");
}

#[test]
fn fixtures_round_trip_through_render() {
    for p in common::fixture_paths() {
        let m = parse_file(&p).unwrap();
        let text = render(&m);
        let again = parse_str(&text).unwrap();
        assert_eq!(m, again, "{}", p.display());
        assert_eq!(render(&again), text);
    }
}

#[test]
fn text_and_json_agree_on_exit_code() {
    for p in common::fixture_paths() {
        let f = p.to_string_lossy().into_owned();
        for cmd in ["validate", "rank", "km"] {
            let a = run_command(&[cmd, &f]);
            let b = run_command(&[cmd, &f, "--json"]);
            assert_eq!(a.code, b.code, "{cmd} {f}");
        }
    }
}
