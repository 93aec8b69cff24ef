use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
[zone]
width = 200.0
height = 160.0

[lattice]
cell_size = 10.0
fov_side = 40.0

[[sources]]
position = [100.0, -15.0]
facing = "north"

[[sources]]
position = [-15.0, 80.0]
facing = "east"

[sensors]
count = 3

[run]
steps = 40

[stats]
quadrature_n = 256
"#;

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.toml"), SMALL).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_tstep"))
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn usage_errors_exit_one() {
    let sb = Sandbox::new();
    assert_eq!(code(&sb.run(&["--help"])), 0);
    assert_eq!(code(&sb.run(&["--version"])), 0);
    assert_eq!(code(&sb.run(&["run", "--help"])), 0);
    assert_eq!(code(&sb.run(&[])), 1);
    assert_eq!(code(&sb.run(&["fly"])), 1);
    assert_eq!(
        code(&sb.run(&["run", "--scenario", "s.toml", "--bogus"])),
        1
    );
    assert_eq!(
        code(&sb.run(&["run", "--scenario", "s.toml", "--strategy", "teleport"])),
        1
    );
    assert_eq!(code(&sb.run(&["run"])), 1);
    assert_eq!(
        code(&sb.run(&[
            "compare",
            "--scenario",
            "s.toml",
            "--strategies",
            "stationary,nope"
        ])),
        1
    );
}

#[test]
fn configuration_errors_exit_two() {
    let sb = Sandbox::new();
    let out = sb.run(&["run", "--scenario", "missing.toml"]);
    assert_eq!(code(&out), 2);
    std::fs::write(
        sb.path("bad.toml"),
        SMALL.replace("fov_side = 40.0", "fov_side = 4.0"),
    )
    .unwrap();
    let out = sb.run(&["precompute", "--scenario", "bad.toml"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("lattice.fov_side") && err.contains("lattice.cell_size"),
        "{err}"
    );
    assert_eq!(
        code(&sb.run(&["run", "--scenario", "s.toml", "--steps", "0"])),
        2
    );

    // a cache built for another scenario is refused by `run`
    sb.ok(&["precompute", "--scenario", "s.toml", "--out", "c.stats"]);
    std::fs::write(
        sb.path("other.toml"),
        SMALL.replace("count = 3", "count = 3\n[targets]\nspeed = 15.0"),
    )
    .unwrap();
    let out = sb.run(&[
        "run",
        "--scenario",
        "other.toml",
        "--stats-cache",
        "c.stats",
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn runtime_errors_exit_three() {
    let sb = Sandbox::new();
    std::fs::write(sb.path("junk.bin"), b"not a stream").unwrap();
    assert_eq!(
        code(&sb.run(&["replay", "--scenario", "s.toml", "--replay", "junk.bin"])),
        3
    );
    assert_eq!(
        code(&sb.run(&["run", "--scenario", "s.toml", "--out", "no/such/dir/x.csv"])),
        3
    );
}

#[test]
fn precompute_reuses_and_rebuilds() {
    let sb = Sandbox::new();
    let first = sb.ok(&["precompute", "--scenario", "s.toml"]);
    assert!(first.contains("(built)"), "{first}");
    assert!(first.contains("d_hat       min"), "{first}");
    let second = sb.ok(&["precompute", "--scenario", "s.toml"]);
    assert!(second.contains("(hit)"), "{second}");
    assert!(sb.path(".tstep-cache").is_dir());

    std::fs::write(
        sb.path("s.toml"),
        SMALL.replace("count = 3", "count = 3\n[targets]\narrival_rate = 0.5"),
    )
    .unwrap();
    let third = sb.ok(&["precompute", "--scenario", "s.toml"]);
    assert!(third.contains("(built)"), "{third}");
    assert_eq!(
        std::fs::read_dir(sb.path(".tstep-cache")).unwrap().count(),
        2
    );

    sb.ok(&["precompute", "--scenario", "s.toml", "--out", "x.stats"]);
    std::fs::write(sb.path("s.toml"), SMALL).unwrap();
    let rebuilt = sb.ok(&["precompute", "--scenario", "s.toml", "--out", "x.stats"]);
    assert!(rebuilt.contains("(rebuilt)"), "{rebuilt}");
}

#[test]
fn runs_are_byte_identical_and_replayable() {
    let sb = Sandbox::new();
    let args = |out: &str, log: &str| {
        vec![
            "run",
            "--scenario",
            "s.toml",
            "--seed",
            "7",
            "--out",
            out,
            "--step-log",
            log,
            "--plan-trace",
        ]
        .into_iter()
        .map(String::from)
        .chain([format!("{out}.trace")])
        .collect::<Vec<_>>()
    };
    for (o, l) in [("a.csv", "a.jsonl"), ("b.csv", "b.jsonl")] {
        let a: Vec<String> = args(o, l);
        sb.ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    }
    assert_eq!(read(&sb.path("a.csv")), read(&sb.path("b.csv")));
    assert_eq!(read(&sb.path("a.jsonl")), read(&sb.path("b.jsonl")));
    assert_eq!(read(&sb.path("a.csv.trace")), read(&sb.path("b.csv.trace")));
    let csv = String::from_utf8(read(&sb.path("a.csv"))).unwrap();
    assert!(
        csv.starts_with("EN,NS,AD,ZD,AF,D1S,D2S,D3S,TV\nt-step-coordinated,3,"),
        "{csv}"
    );

    let recorded = sb.ok(&[
        "run",
        "--scenario",
        "s.toml",
        "--seed",
        "7",
        "--record",
        "s.bin",
    ]);
    assert_eq!(recorded.as_bytes(), read(&sb.path("a.csv")));
    let replayed = sb.ok(&[
        "run",
        "--scenario",
        "s.toml",
        "--seed",
        "7",
        "--replay",
        "s.bin",
    ]);
    assert_eq!(replayed, recorded);
    // the recorded traffic, not the seed, drives the replay
    let other_seed = sb.ok(&[
        "replay",
        "--scenario",
        "s.toml",
        "--seed",
        "8",
        "--replay",
        "s.bin",
        "--strategy",
        "stationary",
    ]);
    let stationary = sb.ok(&[
        "run",
        "--scenario",
        "s.toml",
        "--seed",
        "7",
        "--strategy",
        "stationary",
    ]);
    assert_eq!(other_seed, stationary);
}

#[test]
fn compare_report_layout() {
    let sb = Sandbox::new();
    let one = sb.ok(&[
        "compare",
        "--scenario",
        "s.toml",
        "--strategies",
        "stationary",
        "--seeds",
        "1",
    ]);
    let table: Vec<&str> = one.lines().take_while(|l| !l.is_empty()).collect();
    assert_eq!(table.len(), 2, "{one}");
    assert!(!one.contains("dAF"), "{one}");
    assert_eq!(one.lines().filter(|l| l.starts_with("# seed")).count(), 1);

    let same = sb.ok(&[
        "compare",
        "--scenario",
        "s.toml",
        "--strategies",
        "t-step-coordinated,t-step-coordinated",
        "--seeds",
        "3",
    ]);
    let diff = same
        .lines()
        .find(|l| l.starts_with("t-step-coordinated,t-step-coordinated,"))
        .unwrap();
    let fields: Vec<&str> = diff.split(',').collect();
    assert_eq!(fields[2], "0.0000", "{same}");
    assert_eq!(fields[6], "0.000", "{same}");

    let pair = sb.ok(&[
        "compare",
        "--scenario",
        "s.toml",
        "--strategies",
        "stationary,random-walk",
        "--base",
        "random-walk",
        "--seeds",
        "2",
    ]);
    let rows: Vec<&str> = pair.lines().skip(1).take(2).collect();
    assert!(
        rows[0].starts_with("random-walk,") && rows[1].starts_with("stationary,"),
        "{pair}"
    );
    assert!(
        pair.contains("# base random-walk | 2 seeds | 40 steps"),
        "{pair}"
    );
}
