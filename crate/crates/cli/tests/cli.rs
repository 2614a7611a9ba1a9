use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rfsurf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfsurf"))
        .args(args)
        .env_remove("RF_SURFACE_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

#[test]
fn selftest_passes() {
    let o = rfsurf(&["selftest"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn unstable_langevin_step_is_a_config_error() {
    let o = rfsurf(&["langevin", "--dt", "10"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("stability bound"));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = rfsurf(&["bogus"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn config_errors_name_the_field() {
    let o = rfsurf(&["green", "--d", "2", "--x", "1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("invalid x"));
    let o = rfsurf(&["scaling", "--observable", "nope", "--L", "4,8"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("observable"));
    let o = rfsurf(&["scaling", "--observable", "height_var_real", "--L", "8,4", "--exact"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("invalid L"));
    let o = rfsurf(&["ivgff", "--beta", "0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("beta"));
}

#[test]
fn scaling_emits_csv_and_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let o = rfsurf(&[
        "scaling",
        "--observable",
        "height_var_real",
        "--d",
        "1",
        "--L",
        "16,32,64,128",
        "--exact",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("d,L,lambda,beta,observable,estimate,stderr,n,seed"));
    // Σ_y G(0,y)² on a chain of 33 sites, from the dense oracle
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[1], "16");
    assert!((first[5].parse::<f64>().unwrap() - 820.25).abs() < 1e-6);
    let fit = json(&o);
    assert_eq!(fit["model"], "power");
    let e = fit["exponent"].as_f64().unwrap();
    assert!((2.85..=3.15).contains(&e), "{e}");
    assert!(out.with_extension("csv.meta.json").exists());
}

fn scaling_args<'a>(sides: &'a str, out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut a = vec![
        "scaling",
        "--observable",
        "height_norm_iv",
        "--d",
        "1",
        "--L",
        sides,
        "--n",
        "12",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ];
    a.extend_from_slice(extra);
    a
}

#[test]
fn outputs_are_reproducible_and_resume_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let ck = dir.path().join("ck.csv");
    assert_eq!(code(&rfsurf(&scaling_args("8,16,32,64", &a, &[]))), 0);
    assert_eq!(code(&rfsurf(&scaling_args("8,16,32,64", &b, &["--jobs", "1"]))), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let ck_s = ck.to_str().unwrap();
    assert_eq!(code(&rfsurf(&scaling_args("8,16", &c, &["--checkpoint", ck_s]))), 0);
    assert_eq!(fs::read_to_string(&ck).unwrap().lines().count(), 3);
    assert_eq!(code(&rfsurf(&scaling_args("8,16,32,64", &c, &["--checkpoint", ck_s]))), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&c).unwrap());

    let o = rfsurf(&scaling_args("8,16", &c, &["--checkpoint", ck_s, "--lambda", "2"]));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("checkpoint"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# membrane run\nL=8,16\nlambda=3\nstencil=clamped\n").unwrap();
    let o = rfsurf(&["membrane", "--config", cfg.to_str().unwrap(), "--lambda", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = json(&o);
    assert_eq!(rows.as_array().unwrap().len(), 2);
    let plain = json(&rfsurf(&["membrane", "--L", "8,16", "--stencil", "clamped"]));
    assert_eq!(rows, plain);

    fs::write(&cfg, "frobnicate=1\n").unwrap();
    let o = rfsurf(&["membrane", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("frobnicate"));
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: Option<&str>, args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_rfsurf"));
        cmd.arg("ground-state").args(args).env_remove("RF_SURFACE_SEED");
        if let Some(s) = env {
            cmd.env("RF_SURFACE_SEED", s);
        }
        serde_json::from_slice::<serde_json::Value>(&cmd.output().unwrap().stdout).unwrap()
    };
    assert_eq!(run(Some("7"), &[])["seed"], 7);
    assert_eq!(run(Some("7"), &["--seed", "9"])["seed"], 9);
    assert_eq!(run(None, &[])["seed"], 0);
    assert_eq!(run(Some("7"), &[])["energy"], run(None, &["--seed", "7"])["energy"]);
}

#[test]
fn ivgff_exact_peierls_and_sets() {
    let o = rfsurf(&["ivgff", "peierls", "--d", "1", "--L", "1", "--exact", "--band", "6", "--lambda", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert!(v["phi"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(v["peierls"]["union_bound_holds"], true);

    let o = rfsurf(&["ivgff", "--d", "1", "--L", "1", "--sweeps", "3000", "--band", "6"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let names: Vec<String> = json(&o)["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["observable"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(names, ["phi", "phi_sq", "zero", "grad_sq_avg", "d_plus", "d_minus"]);

    let o = rfsurf(&["ivgff", "sets", "--d", "2", "--L", "3", "--max-sites", "3", "--nmax", "100"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("size,boundary,field_sum,sites\n"));
    assert_eq!(text.lines().count(), 1 + 1 + 4 + 18);

    let o = rfsurf(&["ivgff", "--d", "2", "--L", "3", "--exact"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn ground_state_writes_field_files() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("v.bin");
    let csv = dir.path().join("eta.dat");
    let o = rfsurf(&[
        "ground-state",
        "--d",
        "2",
        "--L",
        "3",
        "--potential",
        "qsqrt:0.5",
        "--field-out",
        bin.to_str().unwrap(),
        "--disorder-out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (h, v) = rfsurf::io::read_field_binary(fs::File::open(&bin).unwrap()).unwrap();
    assert_eq!((h.dim, h.side, h.distribution.as_str()), (2, 3, "gaussian"));
    let lat = h.lattice().unwrap();
    assert!((v.get(lat.origin()) - json(&o)["height_at_origin"].as_f64().unwrap()).abs() < 1e-15);
    assert!(rfsurf::io::read_field_binary(fs::File::open(&csv).unwrap()).is_ok());

    let o = rfsurf(&["ground-state", "--d", "1", "--L", "4", "--disorder-out", csv.to_str().unwrap(), "--field-format", "csv"]);
    assert_eq!(code(&o), 0);
    let (h, eta) = rfsurf::io::read_field_csv(fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!((h.dim, h.side, h.base_seed), (1, 4, 0));
    assert_eq!(eta.values().len(), 11);
}

#[test]
fn langevin_coupled_and_heat_kernel() {
    let o = rfsurf(&["langevin", "--d", "1", "--L", "4", "--t-max", "4", "--every", "40", "--coupled"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert!(v["max_update_defect"].as_f64().unwrap() < 1e-12);
    assert_eq!(v["w_origin"][0], 0.0);

    let o = rfsurf(&["heat-kernel", "--d", "1", "--L", "6", "--t-max", "20"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let frames = json(&o)["frames"].as_array().unwrap().clone();
    assert_eq!(frames[0]["mass"], 1.0);
    assert!(frames.windows(2).all(|w| w[1]["mass"].as_f64() <= w[0]["mass"].as_f64()));
}

#[test]
fn efron_stein_linear_is_an_equality() {
    let o = rfsurf(&["efron-stein", "--d", "1", "--L", "1"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!((v["variance"]["mean"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    assert!((v["bound"]["mean"].as_f64().unwrap() - 1.5).abs() < 1e-12);
}
