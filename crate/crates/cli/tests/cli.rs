use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

const SMALL_FOREST: &str = "\
t,bootstrap,max_depth,max_features,min_samples_leaf,min_samples_split,n_estimators
1.0,false,50,log2,1,2,15
1.1,false,50,log2,1,2,15
1.2,false,50,log2,1,2,15
1.3,false,50,log2,1,2,15
1.4,false,50,log2,1,2,15
1.5,false,50,log2,1,2,15
";

const SHORT_SESSIONS: &str = "\
[session]
duration = 240.0
prompts = 8
";

fn facetouch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facetouch"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = facetouch(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = facetouch(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// Short sessions plus an ensemble of small forests, built once.
struct Fixture {
    root: PathBuf,
}

impl Fixture {
    fn trials(&self) -> PathBuf {
        self.root.join("data/trials.jsonl")
    }
    fn sessions(&self) -> PathBuf {
        self.root.join("data/sessions")
    }
    fn ensemble(&self) -> PathBuf {
        self.root.join("model")
    }
    fn hyperparams(&self) -> PathBuf {
        self.root.join("hp.csv")
    }
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let root = scratch("fixture");
        let f = Fixture { root };
        let config = f.root.join("short.toml");
        fs::write(&config, SHORT_SESSIONS).unwrap();
        fs::write(f.hyperparams(), SMALL_FOREST).unwrap();
        let data = f.root.join("data");
        ok(&["synth", "--seed", "11", "--config", s(&config), "--out-dir", s(&data)]);
        ok(&[
            "train",
            "--seed",
            "12",
            "--trials",
            s(&f.trials()),
            "--hyperparams",
            s(&f.hyperparams()),
            "--out",
            s(&f.ensemble()),
        ]);
        f
    })
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn synth_defaults_follow_the_protocol() {
    let dir = scratch("synth_defaults");
    let (a, b) = (dir.join("a"), dir.join("b"));
    let stdout = ok(&["synth", "--seed", "3", "--out-dir", s(&a)]);
    assert!(stdout.contains("366 trials (216 touch, 150 no-touch)"), "{stdout}");
    for p in ["P1", "P2", "P3"] {
        assert!(stdout.contains(&format!("sessions/{p}: 30 prompts")), "{stdout}");
        let prompts = fs::read_to_string(a.join("sessions").join(p).join("prompts.csv")).unwrap();
        assert_eq!(prompts.lines().count(), 31);
    }
    assert!(!a.join("sessions/P4").exists());

    ok(&["synth", "--seed", "3", "--out-dir", s(&b)]);
    assert_eq!(tree_bytes(&a), tree_bytes(&b));
}

#[test]
fn stochastic_commands_require_a_seed() {
    let dir = scratch("no_seed");
    let err = fails(&["synth", "--out-dir", s(&dir)]);
    assert!(err.contains("requires --seed"), "{err}");
    let err = fails(&["train", "--trials", "x", "--out", s(&dir)]);
    assert!(err.contains("requires --seed"), "{err}");
}

#[test]
fn train_writes_one_model_per_instant() {
    let f = fixture();
    let manifest = fs::read_to_string(f.ensemble().join("manifest.json")).unwrap();
    for t in ["1.0", "1.1", "1.2", "1.3", "1.4", "1.5"] {
        assert!(f.ensemble().join(format!("model_{t}.json")).is_file());
        assert!(manifest.contains(&format!("\"model_{t}.json\"")));
    }
    let curve = fs::read_to_string(f.ensemble().join("f1_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 7);
}

#[test]
fn train_is_reproducible_and_accepts_one_instant() {
    let f = fixture();
    let dir = scratch("train_single");
    let out = dir.join("single");
    let stdout = ok(&[
        "train",
        "--seed",
        "12",
        "--trials",
        s(&f.trials()),
        "--hyperparams",
        s(&f.hyperparams()),
        "--schedule",
        "1.5",
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("saved 1 models"), "{stdout}");
    // Same seed and settings: the 1.5 s forest matches the full ensemble's.
    assert_eq!(
        fs::read(out.join("model_1.5.json")).unwrap(),
        fs::read(f.ensemble().join("model_1.5.json")).unwrap()
    );
}

#[test]
fn train_reports_missing_input() {
    let dir = scratch("train_missing");
    let missing = dir.join("nope.jsonl");
    let err = fails(&[
        "train",
        "--seed",
        "1",
        "--trials",
        s(&missing),
        "--out",
        s(&dir.join("m")),
    ]);
    assert!(err.contains("nope.jsonl"), "{err}");
    assert!(!dir.join("m").exists());
}

#[test]
fn tune_emits_one_row_per_instant() {
    let f = fixture();
    let dir = scratch("tune");
    let space = dir.join("space.toml");
    fs::write(
        &space,
        "bootstrap = [false]\nmax_depth = [2, 20]\nmax_features = [\"log2\", \"sqrt\"]\n\
         min_samples_leaf = [1]\nmin_samples_split = [2]\nn_estimators = [5, 10]\n",
    )
    .unwrap();
    let out = dir.join("hp.csv");
    let args = |extra: &[&'static str], out: &Path| {
        let mut v = vec![
            "tune".to_string(),
            "--seed".into(),
            "4".into(),
            "--trials".into(),
            s(&f.trials()).into(),
            "--space".into(),
            s(&space).into(),
            "--folds".into(),
            "3".into(),
            "--schedule".into(),
            "1.2,1.5".into(),
            "--out".into(),
            s(out).into(),
        ];
        v.extend(extra.iter().map(|e| e.to_string()));
        v
    };
    let run = |v: Vec<String>| ok(&v.iter().map(String::as_str).collect::<Vec<_>>());

    run(args(&["--n-iter", "3"], &out));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "t,bootstrap,max_depth,max_features,min_samples_leaf,min_samples_split,n_estimators"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1.2,") && lines[2].starts_with("1.5,"));

    let grid = dir.join("grid.csv");
    run(args(&["--skip-random"], &grid));
    assert_eq!(fs::read_to_string(&grid).unwrap().lines().count(), 3);

    fs::write(&space, "n_estimators = []\n").unwrap();
    let v = args(&[], &dir.join("empty.csv"));
    let err = fails(&v.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(err.contains("n_estimators"), "{err}");
}

#[test]
fn eval_prints_per_session_tables() {
    let f = fixture();
    let out = scratch("eval");
    let stdout = ok(&[
        "eval",
        "--ensemble",
        s(&f.ensemble()),
        "--sessions",
        s(&f.sessions()),
        "--out",
        s(&out),
    ]);
    let header = stdout.lines().nth(1).unwrap();
    for column in ["P1", "P2", "P3", "Overall"] {
        assert!(header.contains(column), "{stdout}");
    }
    assert!(stdout.contains("Face touching detected") && stdout.contains("False positives rate"));
    assert!(!stdout.contains("Full window only"));
    assert_eq!(fs::read_to_string(out.join("report.txt")).unwrap(), stdout);
    let report = fs::read_to_string(out.join("report.toml")).unwrap();
    assert!(
        report.contains("[overall]") && report.contains("prompts = 24"),
        "{report}"
    );

    let compared = ok(&[
        "eval",
        "--ensemble",
        s(&f.ensemble()),
        "--sessions",
        s(&f.sessions()),
        "--compare-full",
    ]);
    assert!(compared.contains("Full window only (1.5 s)"), "{compared}");

    let empty = scratch("eval_empty");
    let err = fails(&["eval", "--ensemble", s(&f.ensemble()), "--sessions", s(&empty)]);
    assert!(err.contains("no session"), "{err}");
}

#[test]
fn detect_file_and_stdin_agree() {
    let f = fixture();
    let stream = f.sessions().join("P1/stream.csv");
    let dir = scratch("detect");
    let from_file = dir.join("file.jsonl");
    ok(&[
        "detect",
        "--ensemble",
        s(&f.ensemble()),
        "--input",
        s(&stream),
        "--out",
        s(&from_file),
    ]);
    let file_log = fs::read_to_string(&from_file).unwrap();
    assert!(!file_log.is_empty());

    let mut child = Command::new(env!("CARGO_BIN_EXE_facetouch"))
        .args(["detect", "--ensemble", s(&f.ensemble()), "--input", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let bytes = fs::read(&stream).unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let writer = std::thread::spawn(move || stdin.write_all(&bytes).unwrap());
    let out = child.wait_with_output().unwrap();
    writer.join().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), file_log);
}

#[test]
fn detect_quiet_and_malformed_streams() {
    let f = fixture();
    let dir = scratch("detect_edge");
    let quiet = dir.join("quiet.csv");
    let mut text = String::from("t,ax,ay,az\n");
    for i in 0..2000 {
        text.push_str(&format!("{},0.2,0.1,0.97\n", i as f64 / 100.0));
    }
    fs::write(&quiet, &text).unwrap();
    let events = ok(&["detect", "--ensemble", s(&f.ensemble()), "--input", s(&quiet)]);
    assert_eq!(events, "");

    let bad = dir.join("bad.csv");
    fs::write(&bad, "t,ax,ay,az\n0,0,0,1\n0.01,0,0,1\n0.02,0,oops,1\n").unwrap();
    let err = fails(&["detect", "--ensemble", s(&f.ensemble()), "--input", s(&bad)]);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn plot_bins_rows_per_axis_and_class() {
    let f = fixture();
    let out = scratch("bins");
    ok(&["plot-bins", "--trials", s(&f.trials()), "--out", s(&out)]);
    for (file, count) in [("bins_touch.csv", 216), ("bins_no_touch.csv", 150)] {
        let text = fs::read_to_string(out.join(file)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "axis,bin,t_start,t_end,count,min,q1,median,q3,max,mean");
        assert_eq!(lines.len(), 1 + 3 * 15);
        assert_eq!(lines.iter().filter(|l| l.starts_with("y,")).count(), 15);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[..5], ["x", "0", "0", "0.1", &(count * 10).to_string()]);
    }

    let ten = scratch("bins_ten");
    ok(&[
        "plot-bins",
        "--trials",
        s(&f.trials()),
        "--out",
        s(&ten),
        "--bins",
        "10",
    ]);
    let text = fs::read_to_string(ten.join("bins_touch.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 10);

    let empty = ten.join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    fails(&["plot-bins", "--trials", s(&empty), "--out", s(&ten)]);
}

#[test]
fn help_lists_flags_and_unknown_flags_fail() {
    let help = ok(&["--help"]);
    for word in [
        "synth",
        "train",
        "tune",
        "eval",
        "detect",
        "plot-bins",
        "--seed",
        "--config",
    ] {
        assert!(help.contains(word), "{help}");
    }
    let tune_help = ok(&["tune", "--help"]);
    for flag in [
        "--trials",
        "--out",
        "--space",
        "--schedule",
        "--folds",
        "--n-iter",
        "--skip-random",
    ] {
        assert!(tune_help.contains(flag), "{tune_help}");
    }
    let err = fails(&["eval", "--bogus"]);
    assert!(err.contains("--bogus"), "{err}");
}

#[test]
fn config_rejects_unknown_keys() {
    let dir = scratch("config");
    let config = dir.join("c.toml");
    fs::write(&config, "[synth]\nnoise = 0.1\n").unwrap();
    let err = fails(&["synth", "--seed", "1", "--config", s(&config), "--out-dir", s(&dir)]);
    assert!(err.contains("noise"), "{err}");
}
