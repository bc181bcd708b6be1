use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn schwarz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_schwarz"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn lines(o: &Output) -> Vec<Value> {
    String::from_utf8(o.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

fn record<'a>(report: &'a [Value], id: &str) -> &'a Value {
    report
        .iter()
        .find(|v| v["id"] == id)
        .unwrap_or_else(|| panic!("no record {id}"))
}

fn summary(report: &[Value]) -> &Value {
    &report.last().expect("summary line")["summary"]
}

fn gen(dir: &Path, name: &str, args: &[&str]) -> PathBuf {
    let path = dir.join(format!("{name}.map.json"));
    let mut full = vec!["gen"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", path.to_str().unwrap()]);
    let o = schwarz(&full);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    path
}

fn choi(path: &Path) -> Vec<Vec<(f64, f64)>> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["choi"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| {
            row.as_array()
                .unwrap()
                .iter()
                .map(|z| (z[0].as_f64().unwrap(), z[1].as_f64().unwrap()))
                .collect()
        })
        .collect()
}

#[test]
fn gen_builders() {
    let dir = TempDir::new().unwrap();
    let c = choi(&gen(dir.path(), "cr", &["choi-reduction", "--t", "3", "--n", "4"]));
    assert_eq!((c.len(), c[0].len()), (16, 16));

    let c = choi(&gen(dir.path(), "dep", &["depolarizing", "--n", "3", "--m", "3"]));
    for (i, row) in c.iter().enumerate() {
        for (j, &(re, im)) in row.iter().enumerate() {
            let want = if i == j { 1.0 / 3.0 } else { 0.0 };
            assert!((re - want).abs() < 1e-15 && im.abs() < 1e-15);
        }
    }

    let c = choi(&gen(dir.path(), "id", &["identity", "--n", "2"]));
    for (r, row) in c.iter().enumerate() {
        for (s, &(re, im)) in row.iter().enumerate() {
            let on = |k: usize| k == 0 || k == 3;
            let want = if on(r) && on(s) { 1.0 } else { 0.0 };
            assert_eq!((re, im), (want, 0.0), "entry ({r},{s})");
        }
    }

    let o = schwarz(&["gen", "choi-reduction", "--n", "4"]);
    assert_eq!(code(&o), 2);
    let o = schwarz(&["gen", "no-such-map"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn check_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cr = gen(dir.path(), "cr", &["choi-reduction", "--t", "3", "--n", "4"]);
    let o = schwarz(&["check", cr.to_str().unwrap(), "--checks", "cp,kpos=4"]);
    assert_eq!(code(&o), 1);
    let r = lines(&o);
    assert_eq!(summary(&r)["violations"], 2);
    assert_eq!(record(&r, "cp")["result"]["status"], "proven_violation");
    assert!((record(&r, "cp")["result"]["value"].as_f64().unwrap() + 1.0).abs() < 1e-9);
    assert_eq!(record(&r, "kpos_4")["result"]["status"], "proven_violation");

    let dep = gen(dir.path(), "dep", &["depolarizing", "--n", "3", "--m", "3"]);
    let o = schwarz(&["check", dep.to_str().unwrap(), "--checks", "cp,gschwarz"]);
    assert_eq!(code(&o), 0);

    let t2 = gen(dir.path(), "t2", &["transpose", "--n", "2"]);
    let o = schwarz(&["check", t2.to_str().unwrap(), "--checks", "gschwarz"]);
    assert_eq!(code(&o), 1);
    let r = lines(&o);
    assert_eq!(record(&r, "gschwarz")["result"]["certificate"]["kind"], "schwarz");

    let o = schwarz(&["check", t2.to_str().unwrap(), "--checks", "kpos=3"]);
    assert_eq!(code(&o), 2);
    let o = schwarz(&["check", t2.to_str().unwrap(), "--checks", "nonsense"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn records_are_sorted_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let t2 = gen(dir.path(), "t2", &["transpose", "--n", "2"]);
    let args = [
        "check",
        t2.to_str().unwrap(),
        "--checks",
        "op2pos,gschwarz,cp,idmon,schwarz-block,kpos=2",
        "--restarts",
        "4",
        "--samples",
        "20",
    ];
    let a = schwarz(&args);
    let b = schwarz(&args);
    assert_eq!(a.stdout, b.stdout);
    let ids: Vec<String> = lines(&a)
        .iter()
        .filter_map(|v| v["id"].as_str().map(String::from))
        .collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert_eq!(ids.len(), 6);

    let out = dir.path().join("report.jsonl");
    let mut with_out = args.to_vec();
    with_out.extend_from_slice(&["--out", out.to_str().unwrap()]);
    let c = schwarz(&with_out);
    assert_eq!(std::fs::read(&out).unwrap(), a.stdout);
    assert!(c.stdout.is_empty());
}

#[test]
fn tracial_runs() {
    let dir = TempDir::new().unwrap();
    let app = gen(dir.path(), "app", &["tensored-choi", "--normalize"]);
    let o = schwarz(&["tracial", app.to_str().unwrap(), "--mode", "gs", "--samples", "1000"]);
    assert_eq!(code(&o), 0);
    let r = lines(&o);
    let batch = &record(&r, "batch")["result"];
    assert!(batch["min_gap"].as_f64().unwrap() >= -1e-9);
    assert_eq!(batch["transport_failures"], 0);
    assert_eq!(batch["gaps"].as_array().unwrap().len(), 1000);

    let t2 = gen(dir.path(), "t2", &["transpose", "--n", "2"]);
    let o = schwarz(&["tracial", t2.to_str().unwrap(), "--mode", "schwarz", "--witness"]);
    assert_eq!(code(&o), 1);
    assert_eq!(record(&lines(&o), "witness")["violation"], true);

    let id = gen(dir.path(), "id", &["identity", "--n", "3"]);
    for mode in ["gs", "schwarz", "fmono"] {
        let o = schwarz(&["tracial", id.to_str().unwrap(), "--mode", mode, "--samples", "60"]);
        assert_eq!(code(&o), 0);
        let r = lines(&o);
        for g in record(&r, "batch")["result"]["gaps"].as_array().unwrap() {
            assert!(g.as_f64().unwrap().abs() <= 1e-12 * 1e3, "{mode}: {g}");
        }
    }

    let o = schwarz(&["tracial", t2.to_str().unwrap(), "--mode", "sideways"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn monotone_runs() {
    let dir = TempDir::new().unwrap();
    let dep = gen(dir.path(), "dep", &["depolarizing", "--n", "3", "--m", "3"]);
    let o = schwarz(&["monotone", dep.to_str().unwrap(), "--f", "power:0.5"]);
    assert_eq!(code(&o), 0);
    assert_eq!(summary(&lines(&o))["violations"], 0);

    let t2 = gen(dir.path(), "t2", &["transpose", "--n", "2"]);
    let o = schwarz(&["monotone", t2.to_str().unwrap(), "--f", "identity"]);
    assert_eq!(code(&o), 1);
    let r = lines(&o);
    assert_eq!(record(&r, "equivalence")["result"]["disagree"], 0);
    assert!(record(&r, "hp_a")["result"]["violations"].as_u64().unwrap() > 0);
    assert!(record(&r, "hp_b")["result"]["violations"].as_u64().unwrap() > 0);

    let u = gen(dir.path(), "u", &["unitary", "--n", "3"]);
    for f in ["identity", "power:0.3", "loewner:1,1,1"] {
        let o = schwarz(&["monotone", u.to_str().unwrap(), "--f", f, "--samples", "10"]);
        assert_eq!(code(&o), 0);
        let r = lines(&o);
        for id in ["hp_a", "hp_b"] {
            assert!(record(&r, id)["result"]["min_value"].as_f64().unwrap().abs() <= 1e-9);
        }
        for id in ["l1", "l2"] {
            assert!(record(&r, id)["result"]["max_abs_gap"].as_f64().unwrap() <= 1e-9);
        }
    }

    let o = schwarz(&["monotone", dep.to_str().unwrap(), "--f", "power:1.5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn suite_modes() {
    let dir = TempDir::new().unwrap();
    let o = schwarz(&["suite", "--samples", "10"]);
    assert!(code(&o) == 0 || code(&o) == 1);
    let r = lines(&o);
    assert_eq!(summary(&r)["criteria"], 10);
    assert!(summary(&r)["passed"].as_u64().unwrap() > 0);

    let bad = dir.path().join("bad.map.json");
    std::fs::write(&bad, "{\"n\": 2, \"m\": 2, \"choi\": [[").unwrap();
    let o = schwarz(&["suite", "--samples", "2", "--map", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.map.json"));

    let o = schwarz(&["suite"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = lines(&o);
    assert_eq!(summary(&r)["passed"], 10);
}
