//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p peerflip --test acceptance`.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use peerflip::tables::{read_table, HIERARCHY, THRESHOLDS_BY_LAYER};
use peerflip::reference::LAYER_THRESHOLDS;
use peerflip::gateway::cache_key_hash;
use peerflip::Config;
use peerflip_core::analysis::{curves_from_records, threshold_50, Grouping};
use peerflip_core::consensus::run_consensus;
use peerflip_core::flip::run_flip_grid;
use peerflip_core::metrics::node_metrics;
use peerflip_core::{
    complete_graph, metrics, optimize_topology, render_prompt, ring_lattice, seed, Answer, AnnealConfig, Catalog,
    GridConfig, LogisticAgent, MajorityRule, Ordering, PeerSummary, PromptSpec, Scenario, TopologyObjective,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn timed(limit: Duration, start: Instant) -> Result<f64, String> {
    let s = start.elapsed().as_secs_f64();
    check(start.elapsed() < limit, format!("took {s:.1} s, limit {} s", limit.as_secs()))?;
    Ok(s)
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_peerflip")
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let m = metrics(&complete_graph(100).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    check((m.radius, m.diameter) == (1, 1), format!("radius/diameter {}/{}", m.radius, m.diameter))?;
    check(m.mean_closeness == 1.0, format!("closeness {}", m.mean_closeness))?;
    check(m.mean_betweenness == 0.0, format!("betweenness {}", m.mean_betweenness))?;
    check(m.mean_clustering == 1.0, format!("clustering {}", m.mean_clustering))?;
    check(
        (m.mean_constraint - 0.0402).abs() <= 0.005,
        format!("constraint {}", m.mean_constraint),
    )?;
    let s = timed(Duration::from_secs(5), start)?;
    Ok(format!("constraint {:.4}, {s:.2} s", m.mean_constraint))
}

fn criterion_2() -> Outcome {
    let mut rng = seed::rng(0xacce97);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let (n, edges) = oracle::random_connected(&mut rng, 12);
        let g = peerflip_core::Graph::from_edges(n, &edges).map_err(|e| e.to_string())?;
        let m = node_metrics(&g).map_err(|e| e.to_string())?;
        let o = oracle::Dense::new(n, &edges);
        for (name, got, want) in [
            ("closeness", &m.closeness, o.closeness()),
            ("betweenness", &m.betweenness, o.betweenness()),
            ("clustering", &m.clustering, o.clustering()),
            ("constraint", &m.constraint, o.constraint()),
        ] {
            for (v, (a, b)) in got.iter().zip(&want).enumerate() {
                let d = (a - b).abs();
                worst = worst.max(d);
                check(d <= 1e-9, format!("graph {i} {name}[{v}]: {a} vs {b}"))?;
            }
        }
    }
    Ok(format!("20 graphs, max deviation {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let cases = [
        (TopologyObjective::MaxMeanClustering, 0.90, true),
        (TopologyObjective::MinMeanClustering, 0.05, false),
    ];
    let results: Vec<Result<(f64, f64), String>> = std::thread::scope(|s| {
        let handles: Vec<_> = cases
            .iter()
            .map(|&(objective, _, _)| {
                s.spawn(move || {
                    let start = Instant::now();
                    let cfg = AnnealConfig {
                        nodes: 100,
                        degree: 19,
                        seed: 0,
                        budget: 200_000,
                    };
                    let g = optimize_topology(objective, &cfg).map_err(|e| e.to_string())?;
                    let secs = timed(Duration::from_secs(300), start)?;
                    check(g.degrees().all(|d| d == 19), format!("{objective}: not 19-regular"))?;
                    check(g.is_connected(), format!("{objective}: disconnected"))?;
                    let c = metrics(&g).map_err(|e| e.to_string())?.mean_clustering;
                    Ok((c, secs))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("optimizer thread")).collect()
    });
    let mut notes = Vec::new();
    for (&(objective, bound, at_least), r) in cases.iter().zip(results) {
        let (c, secs) = r?;
        let ok = if at_least { c >= bound } else { c <= bound };
        check(ok, format!("{objective}: clustering {c:.4} vs bound {bound}"))?;
        notes.push(format!("{objective} {c:.3} in {secs:.1} s"));
    }
    Ok(notes.join(", "))
}

fn run_bin(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(bin())
        .args(args)
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = manifest_dir().join("fixtures/layer_thresholds.csv");
    let out = dir.path().join("analysis");
    run_bin(&[
        "analyze",
        "--fixture",
        fixture.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])?;
    let rows = read_table(&out.join(THRESHOLDS_BY_LAYER)).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (layer, yes, no) in LAYER_THRESHOLDS {
        let row = rows
            .iter()
            .find(|r| r["layer"] == layer.to_string())
            .ok_or(format!("{layer} missing"))?;
        for (col, want) in [("yes_threshold", yes), ("no_threshold", no)] {
            let got: f64 = row[col].parse().map_err(|_| format!("{layer} {col}: `{}`", row[col]))?;
            worst = worst.max((got - want).abs());
            check((got - want).abs() <= 0.1, format!("{layer} {col}: {got} vs {want}"))?;
        }
    }
    let hierarchy = read_table(&out.join(HIERARCHY)).map_err(|e| e.to_string())?;
    let yes: Vec<&str> = hierarchy
        .iter()
        .filter(|r| r["initial"] == "Yes")
        .map(|r| r["layer"].as_str())
        .collect();
    let want = ["values", "opinions", "intentions", "beliefs", "attitudes"];
    check(yes == want, format!("Yes hierarchy {yes:?}"))?;
    let s = timed(Duration::from_secs(10), start)?;
    Ok(format!("ten thresholds within {worst:.1e}, hierarchy {}, {s:.2} s", yes.join(">")))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let agent = LogisticAgent::new(70.0, 5.0).map_err(|e| e.to_string())?;
    let mut grid = GridConfig::with_defaults(PromptSpec::all().collect(), 2024);
    grid.repetitions = 200;
    let mut records = Vec::with_capacity(grid.trial_count());
    run_flip_grid(&grid, &Catalog::builtin(), &agent, |r| records.push(r)).map_err(|e| e.to_string())?;
    let closed = |d: f64| 1.0 / (1.0 + (-(d - 70.0) / 5.0).exp());
    let pooled = Grouping {
        by_topic: false,
        by_layer: false,
        by_frame: false,
    };
    let layered = Grouping {
        by_topic: false,
        by_layer: true,
        by_frame: false,
    };
    let mut worst_dev: f64 = 0.0;
    let mut crossings = Vec::new();
    for grouping in [pooled, layered] {
        for curve in curves_from_records(&records, grouping) {
            for p in &curve.points {
                let dev = (p.rate() - closed(f64::from(p.disagree_percent))).abs();
                worst_dev = worst_dev.max(dev);
                check(dev <= 0.06, format!("{} at {}: {:.3}", curve.key, p.disagree_percent, p.rate()))?;
            }
            let t = threshold_50(&curve).map_err(|e| e.to_string())?;
            let x = t.crossing.value().ok_or(format!("{}: censored", curve.key))?;
            check((x - 70.0).abs() <= 1.5, format!("{}: crossing {x:.2}", curve.key))?;
            crossings.push(x);
        }
    }
    let s = timed(Duration::from_secs(60), start)?;
    Ok(format!(
        "{} trials, pooled crossings {:.2}/{:.2}, max |rate - closed form| {worst_dev:.3}, {s:.1} s",
        records.len(),
        crossings[0],
        crossings[1]
    ))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let settings = peerflip_core::ConsensusSettings::new("Q?", None);
    let complete = complete_graph(100).map_err(|e| e.to_string())?;
    let mut fast = 0;
    for i in 0..100u64 {
        let scenario = if i % 2 == 0 { Scenario::MinorityNo } else { Scenario::MinorityYes };
        let o = run_consensus(&complete, "complete", &MajorityRule, scenario, &settings, i).map_err(|e| e.to_string())?;
        check(o.reached, format!("complete seed {i}: no consensus"))?;
        check(
            o.final_majority == Some(scenario.minority().negate()),
            format!("complete seed {i}: ended at {:?}", o.final_majority),
        )?;
        fast += usize::from(o.cycles_to_consensus.is_some_and(|c| c <= 7));
    }
    check(fast >= 95, format!("only {fast}/100 within 7 cycles"))?;
    let lattice = ring_lattice(100, 19).map_err(|e| e.to_string())?;
    let mut worst = 0;
    for i in 0..20u64 {
        let scenario = if i % 2 == 0 { Scenario::MinorityNo } else { Scenario::MinorityYes };
        let o = run_consensus(&lattice, "lattice", &MajorityRule, scenario, &settings, 1000 + i)
            .map_err(|e| e.to_string())?;
        let c = o.cycles_to_consensus.ok_or(format!("lattice seed {i}: no consensus in 25 cycles"))?;
        worst = worst.max(c);
    }
    let s = timed(Duration::from_secs(60), start)?;
    Ok(format!("complete {fast}/100 within 7 cycles, lattice 20/20 (max {worst} cycles), {s:.2} s"))
}

const BOXED: &str = "Consider the following question:\n\
\n\
\"Is your feeling toward green energy positive because of its financial benefits?\"\n\
\n\
Previously, you answered: \"Yes\". Out of your 10 peers:\n\
- 75% answered the opposite.\n\
- 25% answered the same as you.\n\
\n\
Taking into account your peers\u{2019} responses, what is your final answer to the question?\n\
Respond only with \"Yes\" or \"No\". Do not include any explanation or additional text.";

fn criterion_7() -> Outcome {
    let question = "Is your feeling toward green energy positive because of its financial benefits?";
    let peers = PeerSummary::from_agreement(10, 25).map_err(|e| e.to_string())?;
    let yes_first = render_prompt(question, Answer::Yes, &peers, Ordering::YesFirst);
    check(yes_first == BOXED, format!("library prompt differs:\n{yes_first}"))?;
    let cli = run_bin(&["render-prompt"])?;
    check(cli == BOXED.as_bytes(), "CLI prompt bytes differ")?;
    let no_first = render_prompt(question, Answer::Yes, &peers, Ordering::NoFirst);
    let swapped = BOXED.replace("\"Yes\" or \"No\"", "\"No\" or \"Yes\"");
    check(no_first == swapped, format!("counterbalanced prompt:\n{no_first}"))?;
    let differing: Vec<_> = yes_first
        .lines()
        .zip(no_first.lines())
        .filter(|(a, b)| a != b)
        .collect();
    check(differing.len() == 1, format!("{} lines differ", differing.len()))?;
    let cli_no = run_bin(&["render-prompt", "--ordering", "no-first"])?;
    check(cli_no == no_first.as_bytes(), "CLI counterbalanced bytes differ")?;
    Ok(format!("{} bytes exact; counterbalanced variant differs in one line", BOXED.len()))
}

fn resume_config(dir: &Path) -> PathBuf {
    let text = format!(
        "[run]\nmaster_seed = 77\noutput_dir = \"{}\"\n\n\
         [agent]\nkind = \"llm\"\n\n\
         [llm]\nprovider = \"simulated\"\nmodel = \"mock-1\"\nmax_in_flight = 4\nrequests_per_minute = 1000000\n\n\
         [llm.simulated]\ntheta = 65.0\nscale = 8.0\ninvalid_rate = 0.1\nlatency_ms = 10\n\n\
         [flip]\ntopics = [\"green_energy\"]\nframes = [\"economic\"]\nrepetitions = 4\n",
        dir.join("out").display()
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).expect("write config");
    path
}

fn line_count(path: &Path) -> usize {
    fs::read(path).map_or(0, |b| b.iter().filter(|&&c| c == b'\n').count())
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let killed_dir = tmp.path().join("killed");
    let clean_dir = tmp.path().join("clean");
    fs::create_dir_all(&killed_dir).map_err(|e| e.to_string())?;
    fs::create_dir_all(&clean_dir).map_err(|e| e.to_string())?;
    let killed_cfg = resume_config(&killed_dir);
    let clean_cfg = resume_config(&clean_dir);
    let config = Config::load(Some(&killed_cfg), &[]).map_err(|e| e.to_string())?;
    let grid = config.flip_grid().map_err(|e| e.to_string())?;
    let total = grid.trial_count();
    let records = killed_dir.join("out/records.csv");

    let mut child = Command::new(bin())
        .args(["--config", killed_cfg.to_str().unwrap(), "flip-grid"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let deadline = Instant::now() + Duration::from_secs(60);
    while line_count(&records) < total / 3 {
        check(Instant::now() < deadline, "interrupted run made no progress")?;
        std::thread::sleep(Duration::from_millis(2));
    }
    let still_running = child.try_wait().map_err(|e| e.to_string())?.is_none();
    child.kill().map_err(|e| e.to_string())?;
    child.wait().map_err(|e| e.to_string())?;
    check(still_running, "run finished before it could be killed")?;
    let at_kill = line_count(&records).saturating_sub(1);
    check(at_kill < total, format!("{at_kill} of {total} rows at kill"))?;

    run_bin(&["--config", killed_cfg.to_str().unwrap(), "flip-grid"])?;
    run_bin(&["--config", clean_cfg.to_str().unwrap(), "flip-grid"])?;

    let cache = killed_dir.join("out/transcripts");
    let stored: Vec<String> = fs::read_dir(&cache)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    check(stored.len() == total, format!("{} transcripts for {total} trials", stored.len()))?;
    for t in grid.trials() {
        let name = format!("{}.json", cache_key_hash(&t.key()));
        check(stored.contains(&name), format!("no transcript for {:?}", t.key()))?;
    }
    check(line_count(&records) == total + 1, "resumed records are not one row per trial")?;

    for cfg in [&killed_cfg, &clean_cfg] {
        run_bin(&["--config", cfg.to_str().unwrap(), "analyze"])?;
    }
    let mut compared = BTreeMap::new();
    for name in peerflip::tables::ANALYSIS_FILES {
        let a = fs::read(killed_dir.join("out/analysis").join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(clean_dir.join("out/analysis").join(name)).map_err(|e| e.to_string())?;
        check(a == b, format!("{name} differs between resumed and uninterrupted runs"))?;
        compared.insert(name, a.len());
    }
    let a = fs::read(&records).map_err(|e| e.to_string())?;
    let b = fs::read(clean_dir.join("out/records.csv")).map_err(|e| e.to_string())?;
    check(a == b, "records differ between resumed and uninterrupted runs")?;
    Ok(format!(
        "killed at {at_kill}/{total} rows; {total} transcripts, {} analysis files identical",
        compared.len()
    ))
}

fn main() {
    let criteria: [(u8, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let only: Option<u8> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failures = 0;
    for (n, f) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {n}: PASS ({detail})"),
            Err(why) => {
                failures += 1;
                println!("criterion {n}: FAIL ({why})");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
