use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_convdom");

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    (out.status.code().expect("exit code"), String::from_utf8(out.stdout).expect("utf-8 output"))
}

fn json(args: &[&str]) -> (i32, Value) {
    let (code, out) = run(args);
    let v = serde_json::from_str(&out).unwrap_or_else(|e| panic!("{e}: {out}"));
    (code, v)
}

fn validator() -> jsonschema::Validator {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../schemas/report.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

const DOMINATED: [&str; 10] = ["--f", "x^2", "--g", "2*x^2", "--h", "t", "--phi", "identity", "--interval", "0"];

fn dominated(cmd: &str, extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = vec![cmd.into()];
    v.extend(DOMINATED.iter().map(|s| s.to_string()));
    v.push("1".into());
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn check_dominated_example() {
    let (code, v) = json(&as_strs(&dominated("check-dominated", &[])));
    assert_eq!(code, 0);
    assert_eq!(v["result"]["report"]["verdict"], "holds-on-samples");
    assert_eq!(v["result"]["report"]["samples_checked"], 21 * 21 * 19);
}

#[test]
fn verify_hh_example() {
    let (code, v) = json(&as_strs(&dominated("verify-hh", &["--bound", "both"])));
    assert_eq!(code, 0);
    let mid = &v["result"]["reports"][0];
    assert_eq!(format!("{:.6}", mid["lhs"].as_f64().unwrap()), "0.083333");
    assert_eq!(format!("{:.6}", mid["rhs"].as_f64().unwrap()), "0.166667");
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["check-dominated", "--f", "2*x^2", "--g", "x^2", "--interval", "0", "1"]).0, 1);
    assert_eq!(run(&["check-convex", "--f", "1 - x^2", "--interval", "0", "1"]).0, 1);
    assert_eq!(run(&["check-convex", "--f", "ln(x)", "--interval", "0", "1"]).0, 2);
    assert_eq!(run(&["check-convex", "--f", "x^2", "--interval", "1", "1"]).0, 2);
    assert_eq!(run(&["check-convex", "--f", "x^2"]).0, 2);
    assert_eq!(run(&["verify-hh", "--f", "x", "--g", "x", "--phi", "x^2", "--interval", "0", "1"]).0, 2);
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&[]).0, 2);
}

#[test]
fn evaluation_error_names_the_point() {
    let (code, v) = json(&["check-convex", "--f", "ln(x)", "--interval", "0", "1"]);
    assert_eq!(code, 2);
    assert_eq!(v["errors"][0]["kind"], "evaluation");
    let msg = v["errors"][0]["message"].as_str().unwrap();
    assert!(msg.contains("(x, y, t) = (0, 0,") && msg.contains("domain"), "{msg}");
}

#[test]
fn every_output_matches_the_schema() {
    let schema = validator();
    let cases: Vec<Vec<String>> = vec![
        dominated("check-convex", &[]),
        dominated("check-dominated", &["--samples", "500", "--seed", "3"]),
        dominated("lemma2", &["--grid", "5", "5", "5"]),
        dominated("verify-hh", &["--bound", "midpoint"]),
        dominated("verify-hh", &["--bound", "endpoint"]),
        dominated("corollary", &["--which", "all"]),
        ["verify-hh", "--f", "x^2", "--g", "2*x^2", "--h", "1/t", "--interval", "0", "1"]
            .into_iter()
            .map(String::from)
            .collect(),
        vec!["search", "--f", "2*x^2", "--g", "x^2", "--interval", "0", "1", "--refine"]
            .into_iter()
            .map(String::from)
            .collect(),
        vec!["check-dominated".into(), "--f".into(), "x^".into()],
        vec!["nonsense".into()],
    ];
    for args in &cases {
        let (_, out) = run(&as_strs(args));
        let v: Value = serde_json::from_str(&out).unwrap_or_else(|e| panic!("{args:?}: {e}: {out}"));
        let errors: Vec<String> = schema.iter_errors(&v).map(|e| format!("{} at {}", e, e.instance_path())).collect();
        assert!(errors.is_empty(), "{args:?}: {errors:#?}");
    }
}

#[test]
fn text_and_json_agree_numerically() {
    let args = dominated("verify-hh", &["--bound", "both"]);
    let (_, v) = json(&as_strs(&args));
    let mut text_args = args.clone();
    text_args.extend(["--format".to_string(), "text".to_string()]);
    let (code, text) = run(&as_strs(&text_args));
    assert_eq!(code, 0);
    for (i, field) in [(0, "lhs"), (0, "rhs"), (1, "lhs"), (1, "margin"), (1, "mean_g")] {
        let key = format!("result.reports[{i}].{field} = ");
        let line = text.lines().find(|l| l.starts_with(&key)).unwrap_or_else(|| panic!("{key} missing"));
        let from_text: f64 = line[key.len()..].parse().unwrap();
        let from_json = v["result"]["reports"][i][field].as_f64().unwrap();
        assert!((from_text - from_json).abs() <= 1e-11 * from_json.abs().max(1e-300), "{field}");
    }
}

#[test]
fn csv_reports() {
    let (code, out) = run(&as_strs(&dominated("corollary", &["--which", "all", "--format", "csv"])));
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "corollary,bound,coefficient,lhs,rhs,margin,holds,vacuous,quad_error");
    // linear, power and one give two rows each, reciprocal one
    assert_eq!(lines.len(), 1 + 7);
    assert!(lines.iter().any(|l| l.starts_with("reciprocal,midpoint,0.25,")));
}

#[test]
fn config_file_and_flag_override() {
    let dir = std::env::temp_dir().join(format!("convdom-it-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("pair.conf");
    std::fs::write(
        &path,
        "# dominated pair\nf = x^2\ng = 2*x^2\nh = t^s\ns = 0.5\ninterval = 0 1\nsamples = 400\nseed = 1\n",
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let (code, v) = json(&["check-dominated", "--config", p]);
    assert_eq!(code, 0);
    assert_eq!(v["inputs"]["h"], "t^0.5");
    assert_eq!(v["inputs"]["plan"]["strategy"]["count"], 400);
    let (code, v) = json(&["check-dominated", "--config", p, "--f", "3*x^2"]);
    assert_eq!(code, 1);
    assert_eq!(v["inputs"]["f"], "3*x^2");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = ["search", "--f", "2*x^2 + x", "--g", "x^2", "--h", "1", "--interval", "-1", "2", "--samples", "3000", "--seed", "17", "--refine"];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a, b);
    let mut other = args;
    other[13] = "18";
    assert_ne!(run(&other).1, a.1);
}
