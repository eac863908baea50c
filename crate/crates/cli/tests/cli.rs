use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_censor-econ"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_blacklist_ranks_polymorphic_first() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["run", "blacklist-poly-vs-steg", "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("grand total cost:"));
    assert!(stdout(&o).contains("final fn_rate:"));
    for f in ["scenario.json", "cycles.csv", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let report: serde_json_like::Report = serde_json_like::read(&dir.path().join("report.json"));
    let poly = report.rank_of("polymorphic");
    let steg = report.rank_of("steganographic");
    assert!(poly < steg, "ranking {:?}", report.tools);
}

/// Minimal reader for the ranking in report.json, so the test does not
/// depend on the library's types.
mod serde_json_like {
    use std::path::Path;

    pub struct Report {
        pub tools: Vec<String>,
    }

    impl Report {
        pub fn rank_of(&self, tool: &str) -> usize {
            self.tools
                .iter()
                .position(|t| t == tool)
                .unwrap_or_else(|| panic!("{tool} not ranked"))
        }
    }

    pub fn read(p: &Path) -> Report {
        let text = std::fs::read_to_string(p).unwrap();
        let ranking = &text[text.find("\"ranking\"").expect("report has a ranking")..];
        let tools = ranking
            .match_indices("\"tool\": \"")
            .map(|(i, m)| {
                let rest = &ranking[i + m.len()..];
                rest[..rest.find('"').unwrap()].to_owned()
            })
            .collect();
        Report { tools }
    }
}

#[test]
fn same_seed_same_cycles_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = bin(&[
            "run",
            "figure2-steganography",
            "--override",
            "seed=7",
            "--out",
            path(d.path()),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ca = std::fs::read(a.path().join("cycles.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.path().join("cycles.csv")).unwrap());
    assert!(String::from_utf8(ca)
        .unwrap()
        .starts_with("cycle,tool,classification,operating,storage,implementation,total,fn_rate,fp_rate,feature_set"));
}

#[test]
fn resolved_scenario_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(bin(&["run", "tool-reeval", "--seed", "11", "--out", path(a.path())])
        .status
        .success());
    let resolved = a.path().join("scenario.json");
    let o = bin(&["run", path(&resolved), "--out", path(b.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["cycles.csv", "report.json", "scenario.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn missing_cost_entry_exits_2_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["run", "figure1-polymorphism", "--out", path(dir.path())]);
    assert!(o.status.success());
    let json = std::fs::read_to_string(dir.path().join("scenario.json")).unwrap();
    let broken = json.replace("\"disallowed_allow\": 1.0,", "");
    assert_ne!(broken, json);
    let p = dir.path().join("broken.json");
    std::fs::write(&p, broken).unwrap();
    let o = bin(&["run", path(&p), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cost_matrix.disallowed_allow"), "{}", stderr(&o));
}

#[test]
fn unknown_key_in_toml_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.toml");
    std::fs::write(&p, "name = \"x\"\nseed = 1\ncycles = 1\nsurprise = true\n").unwrap();
    let o = bin(&["validate", path(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("surprise"), "{}", stderr(&o));
}

#[test]
fn runtime_error_exits_1() {
    let o = bin(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_three_presets() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "eval",
        "tool-reeval",
        "scramblesuit",
        "skypemorph",
        "stegotorus",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("tool_scores.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "rank,tool,score,feature_set,obfuscated_features");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,"));
    assert!(stdout(&o).contains("stegotorus"));
}

#[test]
fn eval_vacuous_demand_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "eval",
        "tool-reeval",
        "plain-tor",
        "scramblesuit",
        "--override",
        "demand.max_fn_rate=1.0",
        "--override",
        "demand.max_fp_rate=1.0",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("tool_scores.csv")).unwrap();
    for row in csv.lines().skip(1) {
        assert_eq!(row.split(',').nth(2), Some("0"), "{row}");
    }
}

#[test]
fn eval_usage_errors_exit_2() {
    assert_eq!(bin(&["eval", "tool-reeval"]).status.code(), Some(2));
    let o = bin(&["eval", "tool-reeval", "ghost"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tools.ghost"));
}

#[test]
fn sweep_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "sweep",
        "figure1-polymorphism",
        "--seeds",
        "1,2",
        "--override",
        "traffic.n_flows=200",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("seed,grand_total,final_fn_rate,final_fp_rate\n1,"));
    let o = bin(&["validate", "blacklist-poly-vs-steg"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("ok: blacklist-poly-vs-steg"));
    let o = bin(&["stock"]);
    assert_eq!(stdout(&o).lines().count(), 4);
}

#[test]
fn frozen_flag_freezes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "run",
        "figure2-steganography",
        "--frozen-classifier",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("cycles.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().ends_with(",true"), "{csv}");
}
