//! Replay fixtures: flip probabilities per (topic, layer, frame, initial, d).

use std::path::Path;

use serde::{Deserialize, Serialize};

use peerflip_core::analysis::{CurveKey, FlipCurve, Grouping};
use peerflip_core::{Answer, PromptSpec, ReplayFixture};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FixtureRow {
    topic: String,
    layer: String,
    frame: String,
    initial: String,
    disagree_percent: u8,
    flip_probability: f64,
}

pub fn read_fixture(path: &Path) -> Result<ReplayFixture> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| LabError::format(path, e))?;
    let mut fixture = ReplayFixture::new();
    for (i, row) in reader.deserialize::<FixtureRow>().enumerate() {
        let row = row.map_err(|e| LabError::format(path, e))?;
        let bad = |e: &dyn std::fmt::Display| LabError::format(path, format!("row {}: {e}", i + 1));
        let spec = PromptSpec::new(
            row.topic.parse().map_err(|e| bad(&e))?,
            row.layer.parse().map_err(|e| bad(&e))?,
            row.frame.parse().map_err(|e| bad(&e))?,
        );
        let initial: Answer = row.initial.parse().map_err(|e| bad(&e))?;
        if !(0.0..=1.0).contains(&row.flip_probability) || row.disagree_percent > 100 {
            return Err(bad(&"probability or percent out of range"));
        }
        if fixture.get(spec, initial, row.disagree_percent).is_some() {
            return Err(bad(&"duplicate cell"));
        }
        fixture.insert(spec, initial, row.disagree_percent, row.flip_probability);
    }
    Ok(fixture)
}

pub fn write_fixture(path: &Path, fixture: &ReplayFixture) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| LabError::format(path, e))?;
    for (spec, initial, d, p) in fixture.iter() {
        writer
            .serialize(FixtureRow {
                topic: spec.topic.to_string(),
                layer: spec.layer.to_string(),
                frame: spec.frame.to_string(),
                initial: initial.to_string(),
                disagree_percent: d,
                flip_probability: p,
            })
            .map_err(|e| LabError::format(path, e))?;
    }
    writer.flush().map_err(|e| LabError::io(path, e))
}

/// Probabilities on `grid` whose linear 50% crossing is exactly `t`.
///
/// With `d1 ≤ t < d2` the bracketing grid points and `f = (t - d1)/(d2 - d1)`,
/// the curve is 0 below `d1`, `0.5 - f/2` at `d1`, `1 - f/2` at `d2` and 1
/// above.
pub fn step_curve(grid: &[u8], t: f64) -> Vec<(u8, f64)> {
    let i1 = grid
        .iter()
        .rposition(|&d| f64::from(d) <= t)
        .unwrap_or(0);
    let d1 = f64::from(grid[i1]);
    let f = match grid.get(i1 + 1) {
        Some(&d2) => ((t - d1) / (f64::from(d2) - d1)).clamp(0.0, 1.0),
        None => 0.0,
    };
    grid.iter()
        .enumerate()
        .map(|(i, &d)| {
            let p = if i < i1 {
                0.0
            } else if i == i1 {
                0.5 - 0.5 * f
            } else if i == i1 + 1 {
                1.0 - 0.5 * f
            } else {
                1.0
            };
            (d, p)
        })
        .collect()
}

/// A fixture over every catalog cell and stance with crossings from
/// `threshold`.
pub fn threshold_fixture(grid: &[u8], threshold: impl Fn(PromptSpec, Answer) -> f64) -> ReplayFixture {
    let mut fixture = ReplayFixture::new();
    for spec in PromptSpec::all() {
        for initial in Answer::BOTH {
            for (d, p) in step_curve(grid, threshold(spec, initial)) {
                fixture.insert(spec, initial, d, p);
            }
        }
    }
    fixture
}

/// Which reference thresholds a generated fixture encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// One crossing per (layer, stance), shared by every topic and frame.
    Layer,
    /// One crossing per (layer, frame, stance), shared by every topic.
    Frame,
}

pub fn reference_fixture(kind: ReferenceKind, grid: &[u8]) -> ReplayFixture {
    use crate::reference::{frame_threshold, layer_threshold};
    match kind {
        ReferenceKind::Layer => threshold_fixture(grid, |s, a| layer_threshold(s.layer, a)),
        ReferenceKind::Frame => threshold_fixture(grid, |s, a| frame_threshold(s.layer, s.frame, a)),
    }
}

/// Read a fixture as flip curves, pooling cells as `grouping` directs. Each
/// cell counts as [`peerflip_core::analysis::FIXTURE_WEIGHT`] trials.
pub fn fixture_curves(fixture: &ReplayFixture, grouping: Grouping) -> Result<Vec<FlipCurve>> {
    use std::collections::BTreeMap;
    let mut cells: BTreeMap<CurveKey, Vec<FlipCurve>> = BTreeMap::new();
    let mut per_cell: BTreeMap<(PromptSpec, Answer), Vec<(u8, f64)>> = BTreeMap::new();
    for (spec, initial, d, p) in fixture.iter() {
        per_cell.entry((spec, initial)).or_default().push((d, p));
    }
    for ((spec, initial), rates) in per_cell {
        let key = CurveKey {
            topic: grouping.by_topic.then_some(spec.topic),
            layer: grouping.by_layer.then_some(spec.layer),
            frame: grouping.by_frame.then_some(spec.frame),
            initial,
        };
        cells
            .entry(key)
            .or_default()
            .push(FlipCurve::from_rates(key, &rates));
    }
    cells
        .into_iter()
        .map(|(key, curves)| {
            let mut pooled = peerflip_core::analysis::aggregate(&curves)?;
            pooled.key = key;
            Ok(pooled)
        })
        .collect()
}
