use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn abcpg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abcpg"))
        .args(args)
        .current_dir(dir)
        .env_clear()
        .output()
        .expect("spawn abcpg")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

const FIT_FAST: &[&str] = &["--particles", "30", "--burn-in", "40", "--samples", "60", "--seed", "11"];

#[test]
fn simulate_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&abcpg(d, &["simulate", "-T", "40", "--seed", "5", "--alpha", "1.75", "--beta", "0.1", "-o", "sim.csv"]));
    let sim = fs::read_to_string(d.join("sim.csv")).unwrap();
    assert_eq!(sim.lines().count(), 42);

    let mut args = vec!["fit", "sim.csv", "--out-dir", "a", "--alpha", "1.75", "--beta", "0.1"];
    args.extend_from_slice(FIT_FAST);
    ok(&abcpg(d, &args));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("a/fit_report.json")).unwrap()).unwrap();
    for key in ["tau", "phi", "sigma2"] {
        let (est, lo, hi) = (
            report[key]["est"].as_f64().unwrap(),
            report[key]["lo"].as_f64().unwrap(),
            report[key]["hi"].as_f64().unwrap(),
        );
        assert!(lo <= est && est <= hi, "{key}: {lo} {est} {hi}");
    }
    assert_eq!(report["seed"], 11);
    assert_eq!(report["config"]["n_particles"], 30);
    assert_eq!(report["config"]["filter"], "abc-capf");

    let vol = fs::read_to_string(d.join("a/volatility_bands.csv")).unwrap();
    assert_eq!(vol.lines().next(), Some("t,date,lower,mean,upper"));
    assert_eq!(vol.lines().count(), 41);
    for line in vol.lines().skip(1) {
        let f: Vec<f64> = line.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
        assert!(f[0] <= f[1] && f[1] <= f[2], "{line}");
    }
    let ret = fs::read_to_string(d.join("a/return_bands.csv")).unwrap();
    assert_eq!(ret.lines().next(), Some("t,date,lower,upper"));
    for line in ret.lines().skip(1) {
        let f: Vec<f64> = line.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
        assert!(f[0] <= f[1], "{line}");
    }

    // same seed, same bytes
    args[3] = "b";
    ok(&abcpg(d, &args));
    for f in ["fit_report.json", "volatility_bands.csv", "return_bands.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn fit_price_file_carries_dates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut csv = String::from("date,open,close\n");
    let mut p: f64 = 1400.0;
    for i in 0..30 {
        p *= 1.0 + 0.01 * ((i * 7 % 11) as f64 - 5.0) / 5.0;
        csv.push_str(&format!("2008-02-{:02},{},{}\n", i + 1, p, p * 1.002));
    }
    fs::write(d.join("px.csv"), csv).unwrap();
    let mut args = vec!["fit", "px.csv", "--out-dir", "o"];
    args.extend_from_slice(FIT_FAST);
    ok(&abcpg(d, &args));
    let vol = fs::read_to_string(d.join("o/volatility_bands.csv")).unwrap();
    assert!(vol.lines().nth(1).unwrap().starts_with("1,2008-02-02,"));
    assert_eq!(vol.lines().count(), 30);
}

#[test]
fn environment_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_abcpg"))
        .args(["simulate", "-o", "s.csv"])
        .current_dir(d)
        .env_clear()
        .env("ABCPG_LENGTH", "7")
        .output()
        .unwrap();
    ok(&out);
    assert_eq!(fs::read_to_string(d.join("s.csv")).unwrap().lines().count(), 9);
}

#[test]
fn simulate_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = abcpg(d, &["simulate", "--seed", "3"]);
    let b = abcpg(d, &["simulate", "--seed", "3"]);
    let c = abcpg(d, &["simulate", "--seed", "4"]);
    ok(&a);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn errors_are_one_line_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: &[(&[&str], i32, &str)] = &[
        (&["fit"], 2, "usage"),
        (&["fit", "x.csv", "--filter", "abc-xyz"], 2, "usage"),
        (&["fit", "missing.csv"], 2, "io"),
        (&["fit", "x.csv", "--particles", "0"], 2, "config"),
        (&["simulate", "--alpha", "3"], 2, "config"),
        (&["bench", "nope.cfg"], 2, "io"),
    ];
    for (args, code, kind) in cases {
        let out = abcpg(d, args);
        assert_eq!(out.status.code(), Some(*code), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with(&format!("error: kind={kind} msg=\"")), "{args:?}: {err}");
    }

    fs::write(d.join("bad.csv"), "date,price\n2008-01-02,10\n2008-01-03,-1\n").unwrap();
    let out = abcpg(d, &["fit", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kind=parse") && err.contains("bad.csv:3:"), "{err}");

    ok(&abcpg(d, &["version"]));
    ok(&abcpg(d, &["--help"]));
}

#[test]
fn bench_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("study.cfg"),
        "grid = 10:0.9, 1:0.95\nstable_settings = 1.75:0.1\nT = 15\nn_particles = 10\n\
         epsilons = 0.001, 0.0005\nn_replicates = 3\nburn_in = 5\nn_samples = 10\nmaster_seed = 42\n",
    )
    .unwrap();
    ok(&abcpg(d, &["bench", "study.cfg", "--no-timing", "--jobs", "2", "--out-dir", "r1"]));
    ok(&abcpg(d, &["bench", "study.cfg", "--no-timing", "--jobs", "1", "--out-dir", "r2"]));
    let mut names: Vec<_> = fs::read_dir(d.join("r1"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["manifest.json", "rmse_alpha1.75_beta0.1_eps0.0005.csv", "rmse_alpha1.75_beta0.1_eps0.001.csv"]
    );
    for n in &names {
        assert_eq!(fs::read(d.join("r1").join(n)).unwrap(), fs::read(d.join("r2").join(n)).unwrap(), "{n}");
    }
    let table = fs::read_to_string(d.join("r1/rmse_alpha1.75_beta0.1_eps0.001.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 3);
    assert!(table.lines().nth(1).unwrap().starts_with("10,0.9,ABC-PG-cBF,"));
    assert!(table.lines().nth(1).unwrap().ends_with(",3,0.000"));
}
