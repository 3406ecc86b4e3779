use std::process::{Command, Output};

fn circulant(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circulant"))
        .args(args)
        .env_remove("CIRCULANT_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn schedule_halving_22() {
    let out = circulant(&["schedule", "-p", "22", "--scheme", "halving"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("skips: 11 6 3 2 1, rounds: 5"), "{text}");
    assert!(text.contains("run lengths: 11 5 3 1 1"), "{text}");
}

#[test]
fn schedule_single_rank() {
    let out = circulant(&["schedule", "-p", "1"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("rounds: 0"));
}

#[test]
fn unrepresentable_custom_schedule_exits_1() {
    let out = circulant(&["schedule", "-p", "8", "--scheme", "custom", "--skips", "5,1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("i=3 unrepresentable"), "{}", stdout(&out));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["schedule", "-p", "0"][..],
        &["schedule", "-p", "8", "--scheme", "custom"],
        &["schedule", "-p", "8", "--scheme", "linear", "--skips", "4,2,1"],
        &["run", "-p", "4", "--collective", "bogus"],
        &["run", "-p", "3", "--collective", "alltoall", "--sizes", "1,2,1"],
        &["run", "-p", "3", "--sizes", "1,2"],
        &["cost", "-p", "4", "--alpha", "-1"],
    ] {
        assert_eq!(circulant(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn schedule_json_and_dot() {
    let out = circulant(&["schedule", "-p", "22", "--json"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["skips"], serde_json::json!([11, 6, 3, 2, 1]));
    assert_eq!(doc["valid"], true);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tree.dot");
    let out = circulant(&["schedule", "-p", "22", "--dot", path.to_str().unwrap()]);
    assert!(out.status.success());
    let dot = std::fs::read_to_string(&path).unwrap();
    assert!(dot.starts_with("digraph"));
    for edge in ["21 -> 10 [label=\"11\"]", "20 -> 9 [label=\"11\"]", "19 -> 8 [label=\"11\"]", "11 -> 0 [label=\"11\"]"] {
        assert!(dot.contains(edge), "{edge}");
    }
    assert_eq!(dot.matches("->").count(), 21);
}

#[test]
fn run_examples() {
    let cases = [
        (&["run", "-p", "22", "--collective", "reduce_scatter", "--verify"][..], "rounds=5 blocks/rank=21 ops/rank=21 VERIFIED"),
        (&["run", "-p", "1", "--collective", "allreduce", "--verify"], "rounds=0 VERIFIED"),
        (&["run", "-p", "22", "--collective", "allreduce", "--verify"], "rounds=10 blocks/rank=42 ops/rank=21 VERIFIED"),
    ];
    for (args, want) in cases {
        let out = circulant(args);
        assert!(out.status.success(), "{args:?}");
        assert!(stdout(&out).contains(want), "{args:?}: {}", stdout(&out));
    }
}

#[test]
fn run_verifies_every_collective_element_and_mode() {
    for collective in ["reduce_scatter", "allreduce", "allgather", "alltoall"] {
        for elem in ["int64", "float64", "symbolic"] {
            for mode in ["sequential", "parallel", "threaded"] {
                let layout: &[&str] = if collective == "alltoall" { &["-m", "26"] } else { &["--random-sizes", "3"] };
                let mut args = vec!["run", "-p", "13", "--collective", collective, "--elem", elem, "--mode", mode, "--verify"];
                args.extend_from_slice(layout);
                let out = circulant(&args);
                assert!(out.status.success(), "{args:?}: {}", stdout(&out));
                assert!(stdout(&out).contains("VERIFIED"));
            }
        }
    }
}

#[test]
fn symbolic_run_shows_worked_example() {
    let out = circulant(&["run", "-p", "22", "--elem", "symbolic", "--show", "--verify"]);
    assert!(out.status.success());
    let want = "rank 21 block 21: x21+x10+(x15+x4)+(x18+x7+(x12+x1))+(x19+x8+(x13+x2)+(x16+x5))+(x20+x9+(x14+x3)+(x17+x6+(x11+x0)))";
    assert!(stdout(&out).lines().any(|l| l == want), "{}", stdout(&out));
}

#[test]
fn other_schemes_and_fused_round_verify() {
    for scheme in ["doubling", "linear", "sqrt"] {
        let out = circulant(&["run", "-p", "19", "--scheme", scheme, "--collective", "allreduce", "--verify", "--fused-first-round"]);
        assert!(out.status.success(), "{scheme}");
    }
    let out = circulant(&["run", "-p", "10", "--skips", "5,3,2,1", "--verify"]);
    assert!(out.status.success());
    let out = circulant(&["run", "-p", "10", "--skips", "4,3,2,1", "--scheme", "custom", "--verify"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_is_deterministic_in_seed_and_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for mode in ["sequential", "threaded", "parallel"] {
        let jsonl = dir.path().join(format!("{mode}.jsonl"));
        let csv = dir.path().join(format!("{mode}.csv"));
        let out = Command::new(env!("CARGO_BIN_EXE_circulant"))
            .args(["run", "-p", "17", "--collective", "allreduce", "--random-sizes", "4", "--show", "--verify", "--mode", mode])
            .args(["--trace-jsonl", jsonl.to_str().unwrap(), "--trace-csv", csv.to_str().unwrap()])
            .env("CIRCULANT_SEED", "99")
            .output()
            .unwrap();
        assert!(out.status.success());
        assert!(stdout(&out).contains("seed=99"));
        traces.push((out.stdout, std::fs::read(&jsonl).unwrap(), std::fs::read(&csv).unwrap()));
    }
    assert!(traces.windows(2).all(|w| w[0] == w[1]));
    let first_line = String::from_utf8(traces[0].1.clone()).unwrap();
    let round0: serde_json::Value = serde_json::from_str(first_line.lines().next().unwrap()).unwrap();
    assert_eq!(round0["round"], 0);
    assert_eq!(round0["entries"].as_array().unwrap().len(), 17);

    let other = circulant(&["run", "-p", "17", "--collective", "allreduce", "--random-sizes", "4", "--show", "--seed", "98"]);
    assert_ne!(other.stdout, traces[0].0);
}

#[test]
fn cost_examples() {
    let out = circulant(&["cost", "-p", "1,4", "-m", "4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p,m,scheme,alpha,beta,gamma,analytic,measured,upper_bound"));
    assert_eq!(lines.next(), Some("1,4,halving,1,1,1,0,0,0"));
    assert_eq!(lines.next(), Some("4,4,halving,1,1,1,8,8,18"));

    let out = circulant(&["cost", "-p", "5", "-m", "5", "--scheme", "linear", "--alpha", "1", "--beta", "0", "--gamma", "0"]);
    assert_eq!(stdout(&out).lines().nth(1), Some("5,5,linear,1,0,0,4,4,4"));
}

#[test]
fn cost_grid_is_cartesian_and_measured_within_bound() {
    let out = circulant(&[
        "cost", "-p", "7,22", "-m", "22,23", "--scheme", "halving,sqrt", "--alpha", "1,0.5", "--beta", "2", "--gamma", "1/3",
        "--collective", "allreduce", "--exact",
    ]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 2 * 2 * 2);
    let num = |s: &str| -> f64 {
        match s.split_once('/') {
            Some((n, d)) => n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap(),
            None => s.parse().unwrap(),
        }
    };
    for row in &rows {
        assert!(num(&row[7]) <= num(&row[8]), "{row:?}");
        if row[1] == *"22" && (row[0] == *"22") {
            assert_eq!(row[6], row[7], "uniform blocks: analytic equals measured {row:?}");
        }
    }
}
