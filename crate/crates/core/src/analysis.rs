//! From flip records to curves, 50% thresholds, hierarchies and the
//! asymmetry/stickiness tables.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::agents::Answer;
use crate::catalog::{Frame, Layer, Topic};
use crate::flip::FlipRecord;

/// Trial weight given to each fixture probability when a fixture is read
/// as a curve.
pub const FIXTURE_WEIGHT: u64 = 1_000_000;

/// Gap (in percentage points) under which adjacent hierarchy entries are
/// flagged as close.
pub const CLOSE_GAP: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("curve needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("curve grid is not strictly increasing")]
    UnorderedGrid,
    #[error("curve point at d={0} has no trials")]
    EmptyPoint(u8),
    #[error("curves to pool have different grids")]
    GridMismatch,
    #[error("nothing to aggregate")]
    NoCurves,
    #[error("layer {0} missing from hierarchy input")]
    MissingLayer(Layer),
    #[error("censored thresholds cannot be ranked: {0}")]
    Censored(String),
    #[error("logistic fit did not converge")]
    FitFailed,
}

/// A curve's coordinates. `None` means pooled over that dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CurveKey {
    pub topic: Option<Topic>,
    pub layer: Option<Layer>,
    pub frame: Option<Frame>,
    pub initial: Answer,
}

impl fmt::Display for CurveKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let or_pooled = |o: Option<&'static str>| o.unwrap_or("pooled");
        write!(
            f,
            "{}/{}/{}/{}",
            or_pooled(self.topic.map(Topic::label)),
            or_pooled(self.layer.map(Layer::label)),
            or_pooled(self.frame.map(Frame::label)),
            self.initial
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurvePoint {
    pub disagree_percent: u8,
    pub flipped: u64,
    pub n: u64,
}

impl CurvePoint {
    pub fn rate(&self) -> f64 {
        self.flipped as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlipCurve {
    pub key: CurveKey,
    pub points: Vec<CurvePoint>,
}

impl FlipCurve {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.points.windows(2).any(|w| w[0].disagree_percent >= w[1].disagree_percent) {
            return Err(AnalysisError::UnorderedGrid);
        }
        if let Some(p) = self.points.iter().find(|p| p.n == 0) {
            return Err(AnalysisError::EmptyPoint(p.disagree_percent));
        }
        Ok(())
    }

    /// A curve from `(d, rate)` pairs, each weighted [`FIXTURE_WEIGHT`].
    pub fn from_rates(key: CurveKey, rates: &[(u8, f64)]) -> FlipCurve {
        let points = rates
            .iter()
            .map(|&(d, r)| CurvePoint {
                disagree_percent: d,
                flipped: libm::round(r.clamp(0.0, 1.0) * FIXTURE_WEIGHT as f64) as u64,
                n: FIXTURE_WEIGHT,
            })
            .collect();
        FlipCurve { key, points }
    }
}

/// Which dimensions a set of curves keeps separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grouping {
    pub by_topic: bool,
    pub by_layer: bool,
    pub by_frame: bool,
}

impl Grouping {
    /// Per topic and layer, frames pooled.
    pub const LAYER: Grouping = Grouping {
        by_topic: true,
        by_layer: true,
        by_frame: false,
    };
    pub const LAYER_FRAME: Grouping = Grouping {
        by_topic: true,
        by_layer: true,
        by_frame: true,
    };

    fn key(self, topic: Topic, layer: Layer, frame: Frame, initial: Answer) -> CurveKey {
        CurveKey {
            topic: self.by_topic.then_some(topic),
            layer: self.by_layer.then_some(layer),
            frame: self.by_frame.then_some(frame),
            initial,
        }
    }
}

/// Group records into curves, excluding failed trials. Grid points whose
/// trials all failed are dropped.
pub fn curves_from_records<'a>(
    records: impl IntoIterator<Item = &'a FlipRecord>,
    grouping: Grouping,
) -> Vec<FlipCurve> {
    let mut cells: BTreeMap<CurveKey, BTreeMap<u8, (u64, u64)>> = BTreeMap::new();
    for r in records {
        if r.failed {
            continue;
        }
        let key = grouping.key(r.spec.topic, r.spec.layer, r.spec.frame, r.initial);
        let cell = cells.entry(key).or_default().entry(r.disagree_percent).or_default();
        cell.0 += u64::from(r.flipped);
        cell.1 += 1;
    }
    cells
        .into_iter()
        .map(|(key, pts)| FlipCurve {
            key,
            points: pts
                .into_iter()
                .map(|(d, (flipped, n))| CurvePoint {
                    disagree_percent: d,
                    flipped,
                    n,
                })
                .collect(),
        })
        .collect()
}

/// Pool curves on a common grid; counts add, keys keep only the
/// coordinates all inputs share.
pub fn aggregate(curves: &[FlipCurve]) -> Result<FlipCurve, AnalysisError> {
    let (first, rest) = curves.split_first().ok_or(AnalysisError::NoCurves)?;
    let mut out = first.clone();
    for c in rest {
        if c.points.len() != out.points.len()
            || c.points
                .iter()
                .zip(&out.points)
                .any(|(a, b)| a.disagree_percent != b.disagree_percent)
        {
            return Err(AnalysisError::GridMismatch);
        }
        for (acc, p) in out.points.iter_mut().zip(&c.points) {
            acc.flipped += p.flipped;
            acc.n += p.n;
        }
        let k = &mut out.key;
        if k.topic != c.key.topic {
            k.topic = None;
        }
        if k.layer != c.key.layer {
            k.layer = None;
        }
        if k.frame != c.key.frame {
            k.frame = None;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossing {
    At(f64),
    /// The curve starts above one half.
    NeverCrossesBelow,
    /// The curve never reaches one half.
    NeverCrossesAbove,
}

impl Crossing {
    pub fn value(self) -> Option<f64> {
        match self {
            Crossing::At(x) => Some(x),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Crossing::At(_) => "crosses",
            Crossing::NeverCrossesBelow => "never_crosses_below",
            Crossing::NeverCrossesAbove => "never_crosses_above",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub key: CurveKey,
    pub crossing: Crossing,
    /// Upward crossings after the first, for non-monotone curves.
    pub later_crossings: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMethod {
    #[default]
    Linear,
    LogisticFit,
}

fn upward_crossing(d1: f64, r1: f64, d2: f64, r2: f64) -> Option<f64> {
    (r1 < 0.5 && r2 >= 0.5).then(|| d1 + (0.5 - r1) / (r2 - r1) * (d2 - d1))
}

/// Disagreement at which the flip rate first reaches one half, by linear
/// interpolation inside the first bracketing grid interval.
pub fn threshold_50(curve: &FlipCurve) -> Result<ThresholdResult, AnalysisError> {
    curve.validate()?;
    if curve.points.len() < 2 {
        return Err(AnalysisError::TooFewPoints(curve.points.len()));
    }
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .map(|p| (f64::from(p.disagree_percent), p.rate()))
        .collect();
    let mut crossings = Vec::new();
    let (d0, r0) = pts[0];
    if r0 == 0.5 {
        crossings.push(d0);
    }
    for w in pts.windows(2) {
        if let Some(x) = upward_crossing(w[0].0, w[0].1, w[1].0, w[1].1) {
            crossings.push(x);
        }
    }
    let crossing = if r0 > 0.5 {
        Crossing::NeverCrossesBelow
    } else if let Some(&x) = crossings.first() {
        Crossing::At(x)
    } else {
        Crossing::NeverCrossesAbove
    };
    let later_crossings = match crossing {
        Crossing::At(_) => crossings.split_off(1),
        _ => crossings,
    };
    Ok(ThresholdResult {
        key: curve.key,
        crossing,
        later_crossings,
    })
}

/// Maximum-likelihood logistic fit `p(d) = 1 / (1 + exp(-(d - theta) / scale))`
/// by Newton iterations on the binomial log-likelihood. Returns
/// `(theta, scale)`.
pub fn fit_logistic(curve: &FlipCurve) -> Result<(f64, f64), AnalysisError> {
    curve.validate()?;
    if curve.points.len() < 2 {
        return Err(AnalysisError::TooFewPoints(curve.points.len()));
    }
    // logit p = a + b x with x = d / 100
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in &curve.points {
            let x = f64::from(p.disagree_percent) / 100.0;
            let mu = 1.0 / (1.0 + libm::exp(-(a + b * x)));
            let n = p.n as f64;
            let resid = p.flipped as f64 - n * mu;
            let w = n * mu * (1.0 - mu);
            ga += resid;
            gb += resid * x;
            haa += w;
            hab += w * x;
            hbb += w * x * x;
        }
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-300 {
            return Err(AnalysisError::FitFailed);
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        a += da;
        b += db;
        if !(a.is_finite() && b.is_finite()) {
            return Err(AnalysisError::FitFailed);
        }
        if da.abs() < 1e-12 && db.abs() < 1e-12 {
            if b <= 0.0 {
                return Err(AnalysisError::FitFailed);
            }
            return Ok((-a / b * 100.0, 100.0 / b));
        }
    }
    Err(AnalysisError::FitFailed)
}

pub fn threshold_with(curve: &FlipCurve, method: ThresholdMethod) -> Result<ThresholdResult, AnalysisError> {
    match method {
        ThresholdMethod::Linear => threshold_50(curve),
        ThresholdMethod::LogisticFit => {
            let linear = threshold_50(curve)?;
            let crossing = match fit_logistic(curve) {
                Ok((theta, _)) if (0.0..=100.0).contains(&theta) => Crossing::At(theta),
                _ => linear.crossing,
            };
            Ok(ThresholdResult {
                key: curve.key,
                crossing,
                later_crossings: Vec::new(),
            })
        }
    }
}

/// Layers ordered from most to least resistant.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub initial: Answer,
    pub order: Vec<Layer>,
    pub values: Vec<f64>,
    /// Adjacent entries with identical thresholds (ordered by layer).
    pub ties: Vec<(Layer, Layer)>,
    /// Adjacent entries whose thresholds differ by at most [`CLOSE_GAP`].
    pub close_pairs: Vec<(Layer, Layer, f64)>,
}

/// Sort the five layers by descending threshold. Exact ties fall back to
/// layer declaration order and are flagged.
pub fn hierarchy(initial: Answer, thresholds: &[(Layer, Crossing)]) -> Result<Hierarchy, AnalysisError> {
    let mut rows = Vec::with_capacity(Layer::ALL.len());
    let mut censored = Vec::new();
    for &layer in Layer::ALL {
        let (_, c) = thresholds
            .iter()
            .find(|(l, _)| *l == layer)
            .ok_or(AnalysisError::MissingLayer(layer))?;
        match c.value() {
            Some(v) => rows.push((layer, v)),
            None => censored.push(format!("{layer}: {}", c.label())),
        }
    }
    if !censored.is_empty() {
        return Err(AnalysisError::Censored(censored.join(", ")));
    }
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut ties = Vec::new();
    let mut close_pairs = Vec::new();
    for w in rows.windows(2) {
        let gap = w[0].1 - w[1].1;
        if gap == 0.0 {
            ties.push((w[0].0, w[1].0));
        }
        if gap <= CLOSE_GAP {
            close_pairs.push((w[0].0, w[1].0, gap));
        }
    }
    Ok(Hierarchy {
        initial,
        order: rows.iter().map(|r| r.0).collect(),
        values: rows.iter().map(|r| r.1).collect(),
        ties,
        close_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymmetryRow {
    pub layer: Layer,
    pub yes: Crossing,
    pub no: Crossing,
    /// Yes minus No, when both crossed.
    pub difference: Option<f64>,
}

/// Per-layer Yes→No versus No→Yes thresholds.
pub fn asymmetry_table(
    yes: &[(Layer, Crossing)],
    no: &[(Layer, Crossing)],
) -> Result<Vec<AsymmetryRow>, AnalysisError> {
    Layer::ALL
        .iter()
        .map(|&layer| {
            let find = |xs: &[(Layer, Crossing)]| {
                xs.iter()
                    .find(|(l, _)| *l == layer)
                    .map(|x| x.1)
                    .ok_or(AnalysisError::MissingLayer(layer))
            };
            let (y, n) = (find(yes)?, find(no)?);
            Ok(AsymmetryRow {
                layer,
                yes: y,
                no: n,
                difference: y.value().zip(n.value()).map(|(a, b)| a - b),
            })
        })
        .collect()
}

fn mean_of(xs: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for x in xs {
        total += x?;
        count += 1;
    }
    (count > 0).then(|| total / f64::from(count))
}

/// Thresholds per layer × frame × initial stance, plus per-column means
/// over layers.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTable {
    pub cells: BTreeMap<(Layer, Frame, Answer), Crossing>,
    pub column_means: BTreeMap<(Frame, Answer), Option<f64>>,
}

pub fn frame_table(thresholds: &[ThresholdResult]) -> FrameTable {
    let mut cells = BTreeMap::new();
    for t in thresholds {
        if let (Some(l), Some(f)) = (t.key.layer, t.key.frame) {
            cells.insert((l, f, t.key.initial), t.crossing);
        }
    }
    let mut column_means = BTreeMap::new();
    for &f in Frame::ALL {
        for a in Answer::BOTH {
            let col = Layer::ALL
                .iter()
                .map(|&l| cells.get(&(l, f, a)).and_then(|c: &Crossing| c.value()));
            column_means.insert((f, a), mean_of(col));
        }
    }
    FrameTable { cells, column_means }
}

/// Yes→No "stickiness": per (frame, topic) the mean over layers of the
/// per-layer thresholds, with means by frame and by topic.
#[derive(Debug, Clone, PartialEq)]
pub struct StickinessTable {
    pub cells: BTreeMap<(Frame, Topic), Option<f64>>,
    pub by_frame: BTreeMap<Frame, Option<f64>>,
    pub by_topic: BTreeMap<Topic, Option<f64>>,
}

pub fn stickiness_table(thresholds: &[ThresholdResult]) -> StickinessTable {
    let mut per_layer: BTreeMap<(Frame, Topic), Vec<Option<f64>>> = BTreeMap::new();
    for t in thresholds {
        if t.key.initial != Answer::Yes {
            continue;
        }
        if let (Some(topic), Some(_), Some(frame)) = (t.key.topic, t.key.layer, t.key.frame) {
            per_layer.entry((frame, topic)).or_default().push(t.crossing.value());
        }
    }
    let cells: BTreeMap<_, _> = per_layer
        .into_iter()
        .map(|(k, v)| {
            let full = v.len() == Layer::ALL.len();
            (k, if full { mean_of(v) } else { None })
        })
        .collect();
    let topics: Vec<Topic> = {
        let mut t: Vec<_> = cells.keys().map(|k| k.1).collect();
        t.dedup();
        t.sort();
        t.dedup();
        t
    };
    let frames: Vec<Frame> = {
        let mut f: Vec<_> = cells.keys().map(|k| k.0).collect();
        f.dedup();
        f
    };
    let by_frame = frames
        .iter()
        .map(|&f| (f, mean_of(topics.iter().map(|&t| cells.get(&(f, t)).copied().flatten()))))
        .collect();
    let by_topic = topics
        .iter()
        .map(|&t| (t, mean_of(frames.iter().map(|&f| cells.get(&(f, t)).copied().flatten()))))
        .collect();
    StickinessTable {
        cells,
        by_frame,
        by_topic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn key() -> CurveKey {
        CurveKey {
            topic: Some(Topic::GreenEnergy),
            layer: Some(Layer::Values),
            frame: None,
            initial: Answer::Yes,
        }
    }

    fn curve(points: &[(u8, u64, u64)]) -> FlipCurve {
        FlipCurve {
            key: key(),
            points: points
                .iter()
                .map(|&(d, f, n)| CurvePoint {
                    disagree_percent: d,
                    flipped: f,
                    n,
                })
                .collect(),
        }
    }

    #[test]
    fn interpolates_between_grid_points() {
        let c = curve(&[(60, 4, 10), (70, 6, 10)]);
        assert_eq!(threshold_50(&c).unwrap().crossing, Crossing::At(65.0));
    }

    #[test]
    fn censoring() {
        let high = curve(&[(0, 9, 10), (50, 9, 10), (100, 9, 10)]);
        assert_eq!(threshold_50(&high).unwrap().crossing, Crossing::NeverCrossesBelow);
        let low = curve(&[(0, 1, 10), (100, 4, 10)]);
        assert_eq!(threshold_50(&low).unwrap().crossing, Crossing::NeverCrossesAbove);
    }

    #[test]
    fn equality_crosses_at_the_point() {
        let c = curve(&[(40, 2, 10), (50, 5, 10), (60, 9, 10)]);
        assert_eq!(threshold_50(&c).unwrap().crossing, Crossing::At(50.0));
        let c = curve(&[(40, 5, 10), (50, 9, 10)]);
        assert_eq!(threshold_50(&c).unwrap().crossing, Crossing::At(40.0));
    }

    #[test]
    fn non_monotone_reports_later_crossings() {
        let c = curve(&[(0, 0, 10), (10, 6, 10), (20, 2, 10), (30, 8, 10)]);
        let t = threshold_50(&c).unwrap();
        assert!((t.crossing.value().unwrap() - (0.0 + 0.5 / 0.6 * 10.0)).abs() < 1e-12);
        assert_eq!(t.later_crossings.len(), 1);
        assert!((t.later_crossings[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_curves() {
        assert_eq!(threshold_50(&curve(&[(10, 1, 2)])), Err(AnalysisError::TooFewPoints(1)));
        assert_eq!(
            threshold_50(&curve(&[(20, 1, 2), (10, 1, 2)])),
            Err(AnalysisError::UnorderedGrid)
        );
        assert_eq!(
            threshold_50(&curve(&[(10, 0, 0), (20, 1, 2)])),
            Err(AnalysisError::EmptyPoint(10))
        );
    }

    #[test]
    fn pooling_weights_by_counts() {
        let mk = |frame, f| FlipCurve {
            key: CurveKey { frame: Some(frame), ..key() },
            points: vec![CurvePoint { disagree_percent: 50, flipped: f, n: 50 }],
        };
        let pooled = aggregate(&[mk(Frame::Moral, 10), mk(Frame::Economic, 20), mk(Frame::Sociotropic, 30)]).unwrap();
        assert_eq!(pooled.points[0].n, 150);
        assert!((pooled.points[0].rate() - 0.4).abs() < 1e-15);
        assert_eq!(pooled.key.frame, None);
        let single = mk(Frame::Moral, 10);
        assert_eq!(aggregate(core::slice::from_ref(&single)).unwrap(), single);
        let other = FlipCurve {
            key: key(),
            points: vec![CurvePoint { disagree_percent: 60, flipped: 1, n: 1 }],
        };
        assert_eq!(aggregate(&[single, other]), Err(AnalysisError::GridMismatch));
        assert_eq!(aggregate(&[]), Err(AnalysisError::NoCurves));
    }

    fn table3(yes: bool) -> Vec<(Layer, Crossing)> {
        let v = if yes {
            [84.9, 68.9, 62.9, 80.1, 76.5]
        } else {
            [63.1, 68.1, 92.5, 61.9, 84.0]
        };
        Layer::ALL.iter().zip(v).map(|(&l, x)| (l, Crossing::At(x))).collect()
    }

    #[test]
    fn reference_hierarchies() {
        use Layer::*;
        let h = hierarchy(Answer::Yes, &table3(true)).unwrap();
        assert_eq!(h.order, vec![Values, Opinions, Intentions, Beliefs, Attitudes]);
        let h = hierarchy(Answer::No, &table3(false)).unwrap();
        assert_eq!(h.order, vec![Attitudes, Intentions, Beliefs, Values, Opinions]);
        assert_eq!(h.close_pairs.len(), 1);
        assert_eq!((h.close_pairs[0].0, h.close_pairs[0].1), (Values, Opinions));
        assert!((h.close_pairs[0].2 - 1.2).abs() < 1e-9);
    }

    #[test]
    fn equal_thresholds_keep_declaration_order() {
        let flat: Vec<_> = Layer::ALL.iter().map(|&l| (l, Crossing::At(70.0))).collect();
        let h = hierarchy(Answer::Yes, &flat).unwrap();
        assert_eq!(h.order, Layer::ALL.to_vec());
        assert_eq!(h.ties.len(), 4);
    }

    #[test]
    fn hierarchy_rejects_censored_or_missing() {
        let mut t = table3(true);
        t[2].1 = Crossing::NeverCrossesAbove;
        assert!(matches!(hierarchy(Answer::Yes, &t), Err(AnalysisError::Censored(_))));
        assert_eq!(
            hierarchy(Answer::Yes, &table3(true)[..4]),
            Err(AnalysisError::MissingLayer(Layer::Intentions))
        );
    }

    #[test]
    fn asymmetry_differences() {
        let rows = asymmetry_table(&table3(true), &table3(false)).unwrap();
        assert!((rows[0].difference.unwrap() - 21.8).abs() < 1e-9);
        assert!((rows[1].difference.unwrap() - 0.8).abs() < 1e-9);
        let same = asymmetry_table(&table3(true), &table3(true)).unwrap();
        assert!(same.iter().all(|r| r.difference == Some(0.0)));
    }

    #[test]
    fn logistic_fit_recovers_parameters() {
        let theta = 72.0;
        let scale = 6.0;
        let rates: Vec<(u8, f64)> = (0..=100u8)
            .step_by(10)
            .map(|d| (d, 1.0 / (1.0 + libm::exp(-(f64::from(d) - theta) / scale))))
            .collect();
        let c = FlipCurve::from_rates(key(), &rates);
        let (t, s) = fit_logistic(&c).unwrap();
        assert!((t - theta).abs() < 0.05, "{t}");
        assert!((s - scale).abs() < 0.05, "{s}");
        let via = threshold_with(&c, ThresholdMethod::LogisticFit).unwrap();
        assert!((via.crossing.value().unwrap() - theta).abs() < 0.05);
    }
}
