//! Headered tabular outputs: threshold tables, hierarchies, long-format
//! curves, consensus outcomes and summaries, network metrics.

use std::collections::BTreeMap;
use std::path::Path;

use peerflip_core::analysis::{
    asymmetry_table, frame_table, hierarchy, stickiness_table, threshold_with, AnalysisError, AsymmetryRow,
    FrameTable, Grouping, StickinessTable, ThresholdMethod,
};
use peerflip_core::consensus::CellSummary;
use peerflip_core::{
    Answer, Archetype, ConsensusOutcome, Crossing, FlipCurve, Frame, GraphMetrics, Hierarchy, Layer, Scenario,
    ThresholdResult, Topic,
};

use crate::error::{LabError, Result};
use crate::fsutil::{read_bytes, write_atomic};

pub const THRESHOLDS_BY_LAYER: &str = "thresholds_by_layer.csv";
pub const HIERARCHY: &str = "hierarchy.csv";
pub const THRESHOLDS_BY_FRAME: &str = "thresholds_by_frame.csv";
pub const STICKINESS_BY_TOPIC: &str = "stickiness_by_topic.csv";
pub const CURVES: &str = "curves.csv";
pub const CONSENSUS_OUTCOMES: &str = "consensus_outcomes.csv";
pub const CONSENSUS_SUMMARY: &str = "consensus_summary.csv";
pub const NETWORK_METRICS: &str = "network_metrics.csv";

/// Every table written by `analyze`.
pub const ANALYSIS_FILES: [&str; 5] = [THRESHOLDS_BY_LAYER, HIERARCHY, THRESHOLDS_BY_FRAME, STICKINESS_BY_TOPIC, CURVES];

/// Curves at the three granularities the tables need, plus per topic and
/// layer for the figures.
pub const GROUPINGS: [Grouping; 4] = [
    Grouping {
        by_topic: false,
        by_layer: true,
        by_frame: false,
    },
    Grouping {
        by_topic: false,
        by_layer: true,
        by_frame: true,
    },
    Grouping::LAYER,
    Grouping::LAYER_FRAME,
];

/// Everything derived from one set of flip curves.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub curves: Vec<FlipCurve>,
    /// Per layer, topics and frames pooled.
    pub by_layer: Vec<ThresholdResult>,
    pub asymmetry: Vec<AsymmetryRow>,
    pub hierarchies: Vec<std::result::Result<Hierarchy, AnalysisError>>,
    pub by_frame: FrameTable,
    pub stickiness: StickinessTable,
}

impl AnalysisReport {
    /// `curves_for` yields the curves of one grouping.
    pub fn build(
        mut curves_for: impl FnMut(Grouping) -> Result<Vec<FlipCurve>>,
        method: ThresholdMethod,
    ) -> Result<AnalysisReport> {
        let mut curves = Vec::new();
        let mut thresholds = Vec::with_capacity(GROUPINGS.len());
        for g in GROUPINGS {
            let cs = curves_for(g)?;
            let ts = cs
                .iter()
                .map(|c| threshold_with(c, method))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            curves.extend(cs);
            thresholds.push(ts);
        }
        let by_layer = thresholds[0].clone();
        let column = |initial: Answer| -> Vec<(Layer, Crossing)> {
            by_layer
                .iter()
                .filter(|t| t.key.initial == initial)
                .filter_map(|t| t.key.layer.map(|l| (l, t.crossing)))
                .collect()
        };
        let (yes, no) = (column(Answer::Yes), column(Answer::No));
        let asymmetry = if yes.len() == Layer::ALL.len() && no.len() == Layer::ALL.len() {
            asymmetry_table(&yes, &no)?
        } else {
            Layer::ALL
                .iter()
                .filter_map(|&l| {
                    let y = yes.iter().find(|c| c.0 == l)?.1;
                    let n = no.iter().find(|c| c.0 == l)?.1;
                    Some(AsymmetryRow {
                        layer: l,
                        yes: y,
                        no: n,
                        difference: y.value().zip(n.value()).map(|(a, b)| a - b),
                    })
                })
                .collect()
        };
        let hierarchies = Answer::BOTH
            .iter()
            .map(|&a| hierarchy(a, &column(a)))
            .collect();
        Ok(AnalysisReport {
            curves,
            asymmetry,
            hierarchies,
            by_frame: frame_table(&thresholds[1]),
            stickiness: stickiness_table(&thresholds[3]),
            by_layer,
        })
    }

    pub fn layer_threshold(&self, layer: Layer, initial: Answer) -> Option<Crossing> {
        self.by_layer
            .iter()
            .find(|t| t.key.layer == Some(layer) && t.key.initial == initial)
            .map(|t| t.crossing)
    }

    pub fn hierarchy(&self, initial: Answer) -> Option<&Hierarchy> {
        self.hierarchies
            .iter()
            .filter_map(|h| h.as_ref().ok())
            .find(|h| h.initial == initial)
    }

    /// Write the five analysis tables into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_table(&dir.join(THRESHOLDS_BY_LAYER), &self.layer_rows())?;
        write_table(&dir.join(HIERARCHY), &self.hierarchy_rows())?;
        write_table(&dir.join(THRESHOLDS_BY_FRAME), &self.frame_rows())?;
        write_table(&dir.join(STICKINESS_BY_TOPIC), &self.stickiness_rows())?;
        write_table(&dir.join(CURVES), &curve_rows(&self.curves))
    }

    fn layer_rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![strings(&[
            "layer",
            "yes_threshold",
            "yes_status",
            "no_threshold",
            "no_status",
            "difference",
            "later_crossings",
        ])];
        for a in &self.asymmetry {
            let later: Vec<String> = self
                .by_layer
                .iter()
                .filter(|t| t.key.layer == Some(a.layer))
                .flat_map(|t| t.later_crossings.iter().map(move |x| format!("{}:{x:.2}", t.key.initial)))
                .collect();
            rows.push(vec![
                a.layer.to_string(),
                crossing_value(a.yes),
                a.yes.label().into(),
                crossing_value(a.no),
                a.no.label().into(),
                opt(a.difference, 2),
                later.join(" "),
            ]);
        }
        rows
    }

    fn hierarchy_rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![strings(&["initial", "rank", "layer", "threshold", "gap_to_next", "flag"])];
        for (a, h) in Answer::BOTH.iter().zip(&self.hierarchies) {
            match h {
                Ok(h) => {
                    for (i, (layer, value)) in h.order.iter().zip(&h.values).enumerate() {
                        let next = h.order.get(i + 1);
                        let gap = h.values.get(i + 1).map(|v| value - v);
                        let flag = match next {
                            Some(n) if h.ties.contains(&(*layer, *n)) => "tie",
                            Some(n) if h.close_pairs.iter().any(|c| c.0 == *layer && c.1 == *n) => "close",
                            _ => "",
                        };
                        rows.push(vec![
                            a.to_string(),
                            (i + 1).to_string(),
                            layer.to_string(),
                            format!("{value:.2}"),
                            opt(gap, 2),
                            flag.into(),
                        ]);
                    }
                }
                Err(e) => rows.push(vec![
                    a.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.to_string(),
                ]),
            }
        }
        rows
    }

    fn frame_rows(&self) -> Vec<Vec<String>> {
        let frames: Vec<Frame> = Frame::ALL
            .iter()
            .copied()
            .filter(|&f| self.by_frame.cells.keys().any(|k| k.1 == f))
            .collect();
        let mut header = vec!["layer".to_string()];
        for f in &frames {
            for a in Answer::BOTH {
                header.push(format!("{f}_{}", a.label().to_lowercase()));
            }
        }
        let mut rows = vec![header];
        for &layer in Layer::ALL {
            if !self.by_frame.cells.keys().any(|k| k.0 == layer) {
                continue;
            }
            let mut row = vec![layer.to_string()];
            for &f in &frames {
                for a in Answer::BOTH {
                    row.push(
                        self.by_frame
                            .cells
                            .get(&(layer, f, a))
                            .map_or_else(String::new, |&c| crossing_or_label(c)),
                    );
                }
            }
            rows.push(row);
        }
        let mut avg = vec!["average".to_string()];
        for &f in &frames {
            for a in Answer::BOTH {
                avg.push(opt(self.by_frame.column_means.get(&(f, a)).copied().flatten(), 2));
            }
        }
        rows.push(avg);
        rows
    }

    fn stickiness_rows(&self) -> Vec<Vec<String>> {
        let s = &self.stickiness;
        let topics: Vec<Topic> = s.by_topic.keys().copied().collect();
        let mut header = vec!["frame".to_string()];
        for t in topics.iter().map(ToString::to_string).chain(["average".to_string()]) {
            header.push(t.clone());
            header.push(format!("{t}_rounded"));
        }
        let mut rows = vec![header];
        let push_pair = |row: &mut Vec<String>, v: Option<f64>| {
            row.push(opt(v, 1));
            row.push(v.map_or_else(String::new, |x| format!("{:.0}", x.round())));
        };
        for (&frame, &avg) in &s.by_frame {
            let mut row = vec![frame.to_string()];
            for &t in &topics {
                push_pair(&mut row, s.cells.get(&(frame, t)).copied().flatten());
            }
            push_pair(&mut row, avg);
            rows.push(row);
        }
        let mut row = vec!["average".to_string()];
        for t in &topics {
            push_pair(&mut row, s.by_topic[t]);
        }
        row.push(String::new());
        row.push(String::new());
        rows.push(row);
        rows
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(String::new, |x| format!("{x:.digits$}"))
}

fn crossing_value(c: Crossing) -> String {
    opt(c.value(), 2)
}

fn crossing_or_label(c: Crossing) -> String {
    c.value().map_or_else(|| c.label().to_string(), |v| format!("{v:.2}"))
}

fn pooled<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| "pooled".to_string(), |v| v.to_string())
}

pub fn curve_rows(curves: &[FlipCurve]) -> Vec<Vec<String>> {
    let mut rows = vec![strings(&[
        "topic",
        "layer",
        "frame",
        "initial",
        "disagree_percent",
        "flipped",
        "n",
        "rate",
    ])];
    for c in curves {
        for p in &c.points {
            rows.push(vec![
                pooled(c.key.topic),
                pooled(c.key.layer),
                pooled(c.key.frame),
                c.key.initial.to_string(),
                p.disagree_percent.to_string(),
                p.flipped.to_string(),
                p.n.to_string(),
                format!("{:.6}", p.rate()),
            ]);
        }
    }
    rows
}

pub fn write_table(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.write_record(r).map_err(|e| LabError::format(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::format(path, e))?;
    write_atomic(path, &bytes)
}

pub fn read_table(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let bytes = read_bytes(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| LabError::format(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| LabError::format(path, e))?;
            Ok(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect())
        })
        .collect()
}

pub const OUTCOME_HEADER: [&str; 9] = [
    "topology",
    "scenario",
    "seed",
    "reached",
    "cycles",
    "updates",
    "final_yes",
    "final_answer",
    "failed_decisions",
];

pub fn outcome_row(o: &ConsensusOutcome) -> Vec<String> {
    vec![
        o.topology.clone(),
        o.scenario.label().into(),
        o.seed.to_string(),
        o.reached.to_string(),
        o.cycles_to_consensus.map_or_else(String::new, |c| c.to_string()),
        o.updates.to_string(),
        o.final_yes.to_string(),
        o.final_majority.map_or_else(String::new, |a| a.to_string()),
        o.failed_decisions.to_string(),
    ]
}

pub fn read_outcomes(path: &Path) -> Result<Vec<ConsensusOutcome>> {
    let bad = |m: String| LabError::format(path, m);
    read_table(path)?
        .into_iter()
        .map(|row| {
            let get = |k: &str| row.get(k).cloned().ok_or_else(|| bad(format!("missing column {k}")));
            let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|e| bad(format!("{k}: {e}"))) };
            let cycles = get("cycles")?;
            let answer = get("final_answer")?;
            Ok(ConsensusOutcome {
                topology: get("topology")?,
                scenario: get("scenario")?.parse::<Scenario>().map_err(|e| bad(e.to_string()))?,
                seed: num("seed")?,
                reached: get("reached")?.parse().map_err(|e| bad(format!("reached: {e}")))?,
                cycles_to_consensus: if cycles.is_empty() {
                    None
                } else {
                    Some(cycles.parse().map_err(|e| bad(format!("cycles: {e}")))?)
                },
                updates: num("updates")?,
                final_yes: num("final_yes")? as usize,
                final_majority: if answer.is_empty() {
                    None
                } else {
                    Some(answer.parse::<Answer>().map_err(|e| bad(e.to_string()))?)
                },
                failed_decisions: num("failed_decisions")?,
            })
        })
        .collect()
}

pub fn summary_rows(summary: &[CellSummary]) -> Vec<Vec<String>> {
    let mut rows = vec![strings(&[
        "topology",
        "scenario",
        "runs",
        "n_success",
        "success_rate",
        "mean_cycles",
        "sem",
    ])];
    for s in summary {
        rows.push(vec![
            s.topology.clone(),
            s.scenario.label().into(),
            s.runs.to_string(),
            s.n_success.to_string(),
            format!("{:.4}", s.success_rate),
            opt(s.mean_cycles, 4),
            opt(s.sem, 4),
        ]);
    }
    rows
}

pub fn metrics_rows(rows_in: &[(Archetype, u64, usize, usize, GraphMetrics)]) -> Vec<Vec<String>> {
    let mut rows = vec![strings(&[
        "archetype",
        "seed",
        "nodes",
        "edges",
        "radius",
        "diameter",
        "mean_closeness",
        "max_closeness",
        "mean_betweenness",
        "max_betweenness",
        "mean_clustering",
        "mean_constraint",
        "constraint_variance",
    ])];
    for (a, seed, n, m, g) in rows_in {
        rows.push(vec![
            a.label().into(),
            seed.to_string(),
            n.to_string(),
            m.to_string(),
            g.radius.to_string(),
            g.diameter.to_string(),
            format!("{:.6}", g.mean_closeness),
            format!("{:.6}", g.max_closeness),
            format!("{:.6}", g.mean_betweenness),
            format!("{:.6}", g.max_betweenness),
            format!("{:.6}", g.mean_clustering),
            format!("{:.6}", g.mean_constraint),
            format!("{:.6}", g.constraint_variance),
        ]);
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{fixture_curves, threshold_fixture};
    use crate::reference::{frame_threshold, layer_threshold};
    use peerflip_core::consensus::summarize_cell;

    fn grid() -> Vec<u8> {
        (0..=100).step_by(10).collect()
    }

    #[test]
    fn layer_fixture_reproduces_its_thresholds() {
        let fixture = threshold_fixture(&grid(), |s, a| layer_threshold(s.layer, a));
        let report = AnalysisReport::build(|g| fixture_curves(&fixture, g), ThresholdMethod::Linear).unwrap();
        for &l in Layer::ALL {
            for a in Answer::BOTH {
                let got = report.layer_threshold(l, a).unwrap().value().unwrap();
                assert!((got - layer_threshold(l, a)).abs() < 1e-3, "{l} {a}: {got}");
            }
        }
        let yes = report.hierarchy(Answer::Yes).unwrap();
        assert_eq!(
            yes.order,
            [Layer::Values, Layer::Opinions, Layer::Intentions, Layer::Beliefs, Layer::Attitudes]
        );
        let s = &report.stickiness;
        assert!(s.cells.values().all(|v| v.is_some()));
    }

    #[test]
    fn tables_are_written_with_headers() {
        let fixture = threshold_fixture(&grid(), |s, a| frame_threshold(s.layer, s.frame, a));
        let report = AnalysisReport::build(|g| fixture_curves(&fixture, g), ThresholdMethod::Linear).unwrap();
        let dir = tempfile::tempdir().unwrap();
        report.write(dir.path()).unwrap();
        let frames = read_table(&dir.path().join(THRESHOLDS_BY_FRAME)).unwrap();
        assert_eq!(frames.len(), 6);
        assert_eq!(frames[0]["layer"], "values");
        assert_eq!(frames[0]["moral_yes"], "85.10");
        assert_eq!(frames[5]["layer"], "average");
        assert_eq!(frames[5]["economic_no"].parse::<f64>().unwrap().round(), 75.0);
        let curves = read_table(&dir.path().join(CURVES)).unwrap();
        assert!(curves.iter().any(|r| r["topic"] == "pooled" && r["frame"] == "pooled"));
        assert!(curves.iter().any(|r| r["topic"] == "green_energy" && r["frame"] == "moral"));
        let sticky = read_table(&dir.path().join(STICKINESS_BY_TOPIC)).unwrap();
        assert_eq!(sticky.len(), 4);
        assert_eq!(sticky[3]["frame"], "average");
        let hier = read_table(&dir.path().join(HIERARCHY)).unwrap();
        assert_eq!(hier.len(), 10);
    }

    #[test]
    fn outcomes_round_trip() {
        let outcomes = vec![
            ConsensusOutcome {
                topology: "lattice".into(),
                scenario: Scenario::MinorityNo,
                seed: 9,
                reached: true,
                cycles_to_consensus: Some(3),
                updates: 250,
                final_yes: 100,
                final_majority: Some(Answer::Yes),
                failed_decisions: 1,
            },
            ConsensusOutcome {
                topology: "lattice".into(),
                scenario: Scenario::MinorityYes,
                seed: 10,
                reached: false,
                cycles_to_consensus: None,
                updates: 2500,
                final_yes: 50,
                final_majority: None,
                failed_decisions: 0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CONSENSUS_OUTCOMES);
        let mut rows = vec![strings(&OUTCOME_HEADER)];
        rows.extend(outcomes.iter().map(outcome_row));
        write_table(&path, &rows).unwrap();
        assert_eq!(read_outcomes(&path).unwrap(), outcomes);
        let summary = summary_rows(&[summarize_cell("lattice", Scenario::MinorityNo, &outcomes[..1])]);
        assert_eq!(summary[1][4], "1.0000");
        assert_eq!(summary[1][6], "");
    }
}
