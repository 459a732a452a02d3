use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disent")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("{key} missing in {v}"))
}

/// Rows of a CSV table as `column -> cell` lookups.
fn csv(text: &str) -> Vec<Vec<(String, String)>> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    lines
        .map(|l| {
            let cells = split_csv(l);
            assert_eq!(cells.len(), header.len(), "{l}");
            header.iter().cloned().zip(cells).collect()
        })
        .collect()
}

fn split_csv(line: &str) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut quoted = false;
    for ch in line.chars() {
        match ch {
            '"' => quoted = !quoted,
            ',' if !quoted => out.push(String::new()),
            _ => out.last_mut().unwrap().push(ch),
        }
    }
    out
}

fn cell<'a>(row: &'a [(String, String)], key: &str) -> &'a str {
    &row.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("no column {key}")).1
}

fn fcell(row: &[(String, String)], key: &str) -> f64 {
    cell(row, key).parse().unwrap()
}

#[test]
fn measure_bell() {
    let o = run(&["measure", "--state", "bell", "--eps", "0.1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert!((num(&v, "ree_ppt_bits") - 1.0).abs() <= 1e-3);
    assert!((num(&v, "ree_ensemble_bits") - 1.0).abs() <= 2e-3);
    assert!((num(&v, "mutual_info_bits") - 2.0).abs() <= 1e-9);
    assert_eq!(v["state_id"], "bell");
}

#[test]
fn measure_classical_pair() {
    let o = run(&["measure", "--state", "maxcorr:2", "--tol", "1e-6"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!(num(&v, "ree_ppt_bits") <= 1e-6);
    assert!(num(&v, "ree_ensemble_bits") <= 1e-6);
    assert!((num(&v, "mutual_info_bits") - 1.0).abs() <= 1e-9);
}

#[test]
fn bad_state_files_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"dims":[{"label":"A","dim":2}],"matrix_re":[[1,0],[0]],"matrix_im":[[0,0],[0,0]]}"#,
    )
    .unwrap();
    let o = run(&["measure", "--state", &format!("file:{}", path.display())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("matrix_re[1]"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());

    let o = run(&["measure", "--state", "file:/nonexistent/state.json"]);
    assert_eq!(code(&o), 1);
    let o = run(&["measure", "--state", "nosuchfamily:3"]);
    assert_eq!(code(&o), 1);
    assert!(!stderr(&o).is_empty());
}

#[test]
fn state_files_are_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bell.json");
    let bell = disent::qmatrix::make_state(&disent::qmatrix::StateFamily::Bell).unwrap();
    std::fs::write(&path, disent::qmatrix::state_to_json(&bell)).unwrap();
    let from_file = run(&["measure", "--state", &format!("file:{}", path.display()), "--format", "csv"]);
    let named = run(&["measure", "--state", "bell", "--format", "csv"]);
    assert_eq!(code(&from_file), 0, "{}", stderr(&from_file));
    let a = csv(&stdout(&from_file));
    let b = csv(&stdout(&named));
    assert_eq!(a[0][1..], b[0][1..]);
}

#[test]
fn usage_errors() {
    assert_eq!(code(&run(&["measure"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["measure", "--state", "bell", "--eps", "1.5"])), 1);
    assert_eq!(code(&run(&["protocol", "--state", "bell", "--eps", "0.1", "--delta", "0.2"])), 1);
    let help = run(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("family[:param[,param]]"));
}

#[test]
fn protocol_bell() {
    let o = run(&["protocol", "--state", "bell", "--eps", "0.2", "--delta", "0.1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["pass"], true);
    assert!(num(&v, "achieved_distance") <= 0.2);
    for key in ["M", "log2_M", "eps_target", "delta", "lower_bound_bits", "upper_bound_bits", "catalyst_id", "approx_mode"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

#[test]
fn protocol_separable_and_werner() {
    let o = run(&["protocol", "--state", "maxcorr:2", "--eps", "0.1", "--delta", "0.05"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["M"], 1);
    assert_eq!(v["pass"], true);

    let o = run(&["protocol", "--state", "werner:0.9", "--eps", "0.25", "--delta", "0.1", "--format", "csv"]);
    let rows = csv(&stdout(&o));
    let r = &rows[0];
    let log2m = fcell(r, "log2_M");
    assert!(fcell(r, "lower_bits") <= log2m + 1e-9);
    assert!(log2m <= fcell(r, "upper_bits") + 1e-3);
    assert_eq!(code(&o), if cell(r, "pass") == "true" { 0 } else { 1 });
}

#[test]
fn verify_thm1_is_deterministic() {
    let a = run(&["verify", "thm1", "--grid", "default", "--seed", "0"]);
    let b = run(&["verify", "thm1", "--grid", "default", "--seed", "0", "--threads", "1"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let rows = csv(&stdout(&a));
    assert!(rows.len() >= 4);
    assert!(rows.iter().all(|r| cell(r, "pass") == "true"));
    assert!(stdout(&a).starts_with("state_id,eps,delta,M,log2_M,lower_bits,upper_bits,achieved_distance,approx_mode,pass\n"));
}

#[test]
fn verify_lemma_rows() {
    let o = run(&["verify", "lemma", "--grid", "default"]);
    assert_eq!(code(&o), 0);
    let rows = csv(&stdout(&o));
    assert!(rows.len() >= 20);
    for r in &rows {
        assert!(fcell(r, "bound") >= fcell(r, "measured_P"));
    }
}

#[test]
fn verify_recovery_and_appendix() {
    let o = run(&["verify", "recovery", "--state", "ghz3", "--eps", "0.3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = &csv(&stdout(&o))[0];
    assert!(fcell(r, "achieved_distance") <= 0.3);
    assert!((fcell(r, "cmi_bits") - 1.0).abs() <= 1e-9);

    let o = run(&["verify", "appendix", "--state", "ghz3", "--M", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(cell(&csv(&stdout(&o))[0], "holds"), "true");

    let o = run(&["verify", "appendix", "--state", "ghz3", "--M", "5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("32768"), "{}", stderr(&o));
}

#[test]
fn werner_sweep() {
    let o = run(&["sweep", "--grid", "werner=0:1:0.05", "--approx", "ppt", "--tol", "1e-6"]);
    assert_eq!(code(&o), 0);
    let rows = csv(&stdout(&o));
    assert_eq!(rows.len(), 21);
    for r in &rows {
        let p = fcell(r, "param");
        let e = fcell(r, "ree_ppt_bits");
        if p <= 0.5 + 1e-12 {
            assert!(e <= 1e-6, "p = {p}: {e}");
        } else {
            assert!(e > 1e-6, "p = {p}: {e}");
        }
        assert_eq!(cell(r, "status"), "ok");
    }
}

#[test]
fn eps_sweep_and_threads() {
    let a = run(&["sweep", "--grid", "eps=0:0.5:0.05", "--state", "bell", "--threads", "1"]);
    let b = run(&["sweep", "--grid", "eps=0:0.5:0.05", "--state", "bell", "--threads", "3"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let col: Vec<f64> = csv(&stdout(&a)).iter().map(|r| fcell(r, "e_max_ppt_bits")).collect();
    assert_eq!(col.len(), 11);
    assert!(col.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{col:?}");
    assert_eq!(code(&run(&["sweep", "--grid", "werner=1:0:0.1"])), 1);
    assert_eq!(code(&run(&["sweep", "--grid", "werner=0:1:0.1", "--threads", "0"])), 1);
}

#[test]
fn numbers_carry_twelve_significant_digits() {
    let o = run(&["verify", "lemma", "--grid", "default"]);
    for r in csv(&stdout(&o)) {
        let m = cell(&r, "measured_P");
        let digits = m.trim_start_matches(['0', '.', '-']).replace('.', "");
        let digits = digits.split(['e', 'E']).next().unwrap();
        assert!(digits.len() <= 12, "{m}");
    }
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn out_files_are_written_whole_or_not_at_all() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let p = path.to_str().unwrap();
    let o = run(&["measure", "--state", "bell", "--out", p]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).is_empty());
    let written = std::fs::read(&path).unwrap();
    assert_eq!(written, run(&["measure", "--state", "bell"]).stdout);

    let o = run(&["measure", "--state", "nosuchfamily", "--out", p]);
    assert_eq!(code(&o), 1);
    assert_eq!(std::fs::read(&path).unwrap(), written);
    let o = run(&["verify", "appendix", "--state", "ghz3", "--M", "5", "--out", p]);
    assert_eq!(code(&o), 2);
    assert_eq!(std::fs::read(&path).unwrap(), written);
    assert_eq!(listing(dir.path()), vec!["report.json".to_string()]);

    let fresh = dir.path().join("fresh.csv");
    let o = run(&["measure", "--state", "nosuchfamily", "--out", fresh.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(!fresh.exists());
}
