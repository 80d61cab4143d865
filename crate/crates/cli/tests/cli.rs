use std::path::Path;
use std::process::{Command, Output};

fn evac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = evac(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_bundle(dir: &Path) -> std::path::PathBuf {
    let b = dir.join("bundle");
    ok(&[
        "generate",
        "--out",
        p(&b),
        "--devices",
        "60",
        "--days-before-fire",
        "4",
        "--fire-days",
        "2",
        "--seed",
        "3",
    ]);
    b
}

#[test]
fn help_shows_defaults() {
    let text = ok(&["infer-trips", "--help"]);
    for want in ["[default: 500]", "[default: 5]", "[default: 250]"] {
        assert!(text.contains(want), "missing {want}");
    }
    assert!(ok(&["rolling-forecast", "--help"]).contains("[default: 0]"));
}

#[test]
fn pipeline_reruns_byte_identically_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let b = small_bundle(dir.path());
    let inf = dir.path().join("inf");
    ok(&["infer-trips", "--bundle", p(&b), "--out", p(&inf)]);
    let g = dir.path().join("graphs");
    let text = ok(&[
        "build-graphs",
        "--bundle",
        p(&b),
        "--panel",
        p(&inf.join("panel.csv")),
        "--out",
        p(&g),
    ]);
    assert!(text.contains("fused: 16 nodes"));
    let first = dir.path().join("first");
    let panel = inf.join("panel.csv");
    ok(&[
        "rolling-forecast",
        "--bundle",
        p(&b),
        "--panel",
        p(&panel),
        "--out",
        p(&first),
        "--preset",
        "desk",
        "--max-epochs",
        "3",
    ]);
    let second = dir.path().join("second");
    ok(&[
        "rolling-forecast",
        "--config",
        p(&first.join("manifest.json")),
        "--out",
        p(&second),
    ]);
    let mut names: Vec<_> = std::fs::read_dir(&first)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    // two days: forecast, checkpoint and train log each, plus report and manifest
    assert_eq!(names.len(), 8, "{names:?}");
    for n in names.iter().filter(|n| *n != "manifest.json") {
        assert_eq!(
            std::fs::read(first.join(n)).unwrap(),
            std::fs::read(second.join(n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn inline_inference_matches_a_saved_panel() {
    let dir = tempfile::tempdir().unwrap();
    let b = small_bundle(dir.path());
    let inf = dir.path().join("inf");
    ok(&["infer-trips", "--bundle", p(&b), "--out", p(&inf)]);
    let a = dir.path().join("a");
    let c = dir.path().join("c");
    let common = ["--preset", "desk", "--max-epochs", "2", "--model", "mlp"];
    let mut args = vec!["train", "--bundle", p(&b), "--out", p(&a)];
    args.extend(common);
    ok(&args);
    let panel = inf.join("panel.csv");
    let mut args = vec!["train", "--bundle", p(&b), "--panel", p(&panel), "--out", p(&c)];
    args.extend(common);
    ok(&args);
    let name = "report_synthetic_mlp_0h.json";
    assert_eq!(
        std::fs::read(a.join(name)).unwrap(),
        std::fs::read(c.join(name)).unwrap()
    );
}

#[test]
fn eval_of_identical_series_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.csv");
    std::fs::write(
        &f,
        "tract_id,hour_iso8601,y_pred,y_obs\nA,2019-10-16T00:00:00Z,3,4\nB,2019-10-16T00:00:00Z,1,0\n",
    )
    .unwrap();
    let out = dir.path().join("e");
    let text = ok(&[
        "eval",
        "--pred",
        p(&f),
        "--obs",
        p(&f),
        "--obs-column",
        "y_pred",
        "--out",
        p(&out),
    ]);
    assert!(text.starts_with("MAE 0.000000  RMSE 0.000000"), "{text}");
    let text = ok(&["eval", "--forecast", p(&f), "--out", p(&out)]);
    assert!(text.starts_with("MAE 1.000000  RMSE 1.000000"), "{text}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["all"]["n_cells"], 2);
}

#[test]
fn bad_configuration_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[inference]\nradius_m = -3.0\n").unwrap();
    let out = evac(&[
        "infer-trips",
        "--config",
        p(&cfg),
        "--bundle",
        p(dir.path()),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inference.radius_m"));

    std::fs::write(&cfg, "[rolling]\ndelay_hours = \"soon\"\n").unwrap();
    let out = evac(&["train", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delay_hours"));
}

#[test]
fn missing_input_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let gone = dir.path().join("no_such_bundle");
    let out = evac(&["rolling-forecast", "--bundle", p(&gone), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_bundle"));
    let out = evac(&["ablate", "--components", "weather,nonsense", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}
