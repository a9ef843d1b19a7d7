use std::process::{Command, Output};

use serde_json::Value;

fn ffbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ffbias"))
        .args(args)
        .env_remove("FFBIAS_WORKERS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn census_by_hand() {
    let v = json(&ffbias(&["census", "--field", "2^1", "--nvars", "2", "--poly", "x0*x1", "--n", "1"]));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["counts"]["0"], 3);
    assert_eq!(v["counts"]["1"], 1);
    assert_eq!(v["total"], 4);
}

#[test]
fn census_over_extension_prints_elements() {
    let out = ffbias(&["census", "--field", "2^1", "--poly", "x0", "--n", "2"]);
    let v = json(&out);
    assert!(v["counts"].as_object().unwrap().values().all(|c| c == 1));
    // counts are listed in element order
    let text = String::from_utf8(out.stdout).unwrap();
    let pos: Vec<usize> = ["\"0\"", "\"1\"", "\"y\"", "\"1+y\""]
        .iter()
        .map(|k| text.find(k).unwrap())
        .collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{text}");
}

#[test]
fn bias_of_hyperbolic_quadric() {
    let v = json(&ffbias(&[
        "bias", "--field", "3^1", "--nvars", "4", "--poly", "x0*x1+x2*x3", "--nmax", "2",
    ]));
    for level in v["levels"].as_array().unwrap() {
        assert_eq!(level["b_n_exact"], "2/1");
        assert_eq!(level["uniform"], false);
    }
    assert_eq!(v["bias_estimate_exact"], "1/2");
    assert_eq!(v["bias_estimate"], 0.5);
}

#[test]
fn bias_of_linear_poly_is_zero() {
    let v = json(&ffbias(&["bias", "--field", "5^1", "--poly", "x0 + 2*x1", "--nmax", "2"]));
    assert_eq!(v["bias_estimate"], 0.0);
    assert!(v["levels"].as_array().unwrap().iter().all(|l| l["uniform"] == true));
}

#[test]
fn rank_interval() {
    let v = json(&ffbias(&["rank", "--poly", "x0*x1+x2*x3", "--field", "3^1"]));
    assert_eq!((v["lo"].as_u64(), v["hi"].as_u64()), (Some(2), Some(2)));
    assert_eq!(v["lo_method"], "quadratic-exact");
}

#[test]
fn singular_codim() {
    let v = json(&ffbias(&["singular", "--poly", "x0*x1", "--field", "3^1", "--nmax", "3"]));
    assert_eq!(v["codim"], 1);
    assert_eq!(v["confident"], true);
    assert!(v["levels"].as_array().unwrap().iter().all(|l| l["points"].is_u64()));
}

#[test]
fn good_reports_every_c() {
    let v = json(&ffbias(&[
        "good", "--poly", "x0*x1+x2*x3", "--field", "3^1", "--c", "2,3", "--nmax", "2",
    ]));
    let verdicts = v["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 2);
    assert_eq!(verdicts[0]["c"], 2);
}

#[test]
fn verify_lemma3_paths() {
    let ok = ffbias(&[
        "verify-lemma3", "--poly", "x0*x1+x2*x3", "--field", "3^1", "--c", "3", "--nmax", "3",
    ]);
    let v = json(&ok);
    assert_eq!(v["m_hat_level"], 1);
    assert_eq!(v["non_increasing"], true);

    let bad = ffbias(&["verify-lemma3", "--poly", "x0*x1", "--field", "3^1", "--c", "3"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("not 3-good"));
    let v: Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(v["verdict"]["overall"], "not-c-good");
}

#[test]
fn derived_bound_statuses() {
    let v = json(&ffbias(&[
        "derived-bound", "--poly", "x0*x1+x2*x3", "--field", "3^1", "--nmax", "2", "--sing-nmax", "3",
    ]));
    assert_eq!(v["status"], "holds");
    let v = json(&ffbias(&["derived-bound", "--poly", "x0*x1", "--field", "3^1", "--nmax", "2"]));
    assert_eq!(v["status"], "vacuous");
}

#[test]
fn ensemble_csv_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("rows.csv");
    let agg_path = dir.path().join("agg.json");
    let out = ffbias(&[
        "ensemble",
        "--field",
        "3^1",
        "--nvars",
        "4",
        "--degree",
        "2",
        "--size",
        "3",
        "--plant",
        "hyperbolic:2",
        "--nmax",
        "2",
        "--sing-nmax",
        "2",
        "--c",
        "3",
        "--out",
        csv_path.to_str().unwrap(),
        "--aggregate",
        agg_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "seed", "poly", "rank_lo", "rank_hi", "codim_X", "codim_confident", "c_good_at_3", "b_1", "b_2",
            "bias_est", "bound_slack", "error"
        ]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(&row[2], "2");
        assert_eq!(&row[9], "0.500000");
        assert_eq!(&row[11], "");
    }
    let agg: Value = serde_json::from_str(&std::fs::read_to_string(&agg_path).unwrap()).unwrap();
    assert_eq!(agg["size"], 3);
}

#[test]
fn usage_errors_exit_2() {
    let malformed = ffbias(&["bias", "--field", "3^1", "--poly", "x0*+x1"]);
    assert_eq!(code(&malformed), 2);
    assert!(String::from_utf8_lossy(&malformed.stderr).contains("position"));
    assert_eq!(code(&ffbias(&["census", "--poly", "x0"])), 2);
    assert_eq!(code(&ffbias(&["census", "--field", "4^1", "--poly", "x0"])), 2);
    assert_eq!(code(&ffbias(&["rank", "--field", "3^1", "--poly", "x0", "--budget", "0"])), 2);
    assert_eq!(code(&ffbias(&["ensemble", "--field", "3^1", "--size", "0"])), 2);
    assert_eq!(code(&ffbias(&["census", "--field", "3^1", "--poly", "x0", "--c", "a"])), 2);
    assert_eq!(code(&ffbias(&["frobnicate"])), 2);
    assert_eq!(code(&ffbias(&["singular", "--field", "3^1", "--poly", "x0", "--variety", "z"])), 2);
    for cmd in ["census", "bias", "rank", "singular", "good", "verify-lemma3", "derived-bound"] {
        assert_eq!(code(&ffbias(&[cmd, "--field", "3^1"])), 2, "{cmd} without poly");
    }
}

#[test]
fn budget_exhaustion_exits_1() {
    let args = ["--field", "3^1", "--poly", "x0*x1*x2 + x3", "--budget", "10"];
    for cmd in ["census", "bias", "singular", "good", "verify-lemma3", "derived-bound"] {
        let mut full = vec![cmd];
        full.extend(args);
        assert_eq!(code(&ffbias(&full)), 1, "{cmd}");
    }
}

#[test]
fn config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(
        &path,
        "# census settings\nfield = 2^1\nnvars = 2\npoly = \"x0*x1\"\nn = 2  # overridden below\n",
    )
    .unwrap();
    let cfg = path.to_str().unwrap();
    let v = json(&ffbias(&["census", "--config", cfg]));
    assert_eq!(v["n"], 2);
    assert_eq!(v["total"], 16);
    let v = json(&ffbias(&["census", "--config", cfg, "--n", "1"]));
    assert_eq!(v["counts"]["0"], 3);

    std::fs::write(&path, "field = 2^1\ncolour = blue\n").unwrap();
    assert_eq!(code(&ffbias(&["census", "--config", cfg, "--poly", "x0"])), 2);
    assert_eq!(code(&ffbias(&["census", "--config", "/nonexistent/run.cfg"])), 2);
}

#[test]
fn workers_env_and_flag_give_identical_output() {
    let args = ["census", "--field", "3^1", "--nvars", "4", "--poly", "x0^3 + x1*x2*x3 + x0", "--n", "2"];
    let base = ffbias(&args).stdout;
    for w in ["1", "3"] {
        let mut with_flag = args.to_vec();
        with_flag.extend(["--workers", w]);
        assert_eq!(ffbias(&with_flag).stdout, base);
        let env = Command::new(env!("CARGO_BIN_EXE_ffbias"))
            .args(args)
            .env("FFBIAS_WORKERS", w)
            .output()
            .unwrap();
        assert_eq!(env.stdout, base);
    }
    let bad = Command::new(env!("CARGO_BIN_EXE_ffbias"))
        .args(args)
        .env("FFBIAS_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = ffbias(&["rank", "--field", "5^1", "--poly", "x0*x1", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["hi"], 1);
}
