//! Reference 50% thresholds used to build regression fixtures.

use peerflip_core::{Answer, Frame, Layer};

/// Per layer: (Yes→No, No→Yes) crossing, frames and topics pooled.
pub const LAYER_THRESHOLDS: [(Layer, f64, f64); 5] = [
    (Layer::Values, 84.9, 63.1),
    (Layer::Beliefs, 68.9, 68.1),
    (Layer::Attitudes, 62.9, 92.5),
    (Layer::Opinions, 80.1, 61.9),
    (Layer::Intentions, 76.5, 84.0),
];

/// Per layer and frame: (Yes→No, No→Yes).
pub type FrameRow = (Layer, [(Frame, f64, f64); 3]);

pub const FRAME_THRESHOLDS: [FrameRow; 5] = [
    (
        Layer::Values,
        [(Frame::Moral, 85.1, 64.7), (Frame::Economic, 84.6, 58.7), (Frame::Sociotropic, 85.0, 63.9)],
    ),
    (
        Layer::Beliefs,
        [(Frame::Moral, 75.2, 66.1), (Frame::Economic, 67.6, 74.3), (Frame::Sociotropic, 65.0, 65.4)],
    ),
    (
        Layer::Attitudes,
        [(Frame::Moral, 65.0, 95.0), (Frame::Economic, 55.0, 95.0), (Frame::Sociotropic, 67.0, 72.0)],
    ),
    (
        Layer::Opinions,
        [(Frame::Moral, 84.5, 55.3), (Frame::Economic, 65.0, 64.2), (Frame::Sociotropic, 82.4, 65.0)],
    ),
    (
        Layer::Intentions,
        [(Frame::Moral, 78.0, 93.4), (Frame::Economic, 70.4, 85.0), (Frame::Sociotropic, 81.7, 74.9)],
    ),
];

/// Column means of [`FRAME_THRESHOLDS`] as printed: (frame, Yes, No).
pub const FRAME_AVERAGES: [(Frame, f64, f64); 3] = [
    (Frame::Moral, 77.6, 74.9),
    (Frame::Economic, 68.5, 75.4),
    (Frame::Sociotropic, 76.2, 68.2),
];

pub fn layer_threshold(layer: Layer, initial: Answer) -> f64 {
    let (_, yes, no) = LAYER_THRESHOLDS
        .iter()
        .find(|(l, _, _)| *l == layer)
        .copied()
        .expect("all layers listed");
    match initial {
        Answer::Yes => yes,
        Answer::No => no,
    }
}

pub fn frame_threshold(layer: Layer, frame: Frame, initial: Answer) -> f64 {
    let (_, cells) = FRAME_THRESHOLDS
        .iter()
        .find(|(l, _)| *l == layer)
        .expect("all layers listed");
    let (_, yes, no) = cells.iter().find(|c| c.0 == frame).expect("all frames listed");
    match initial {
        Answer::Yes => *yes,
        Answer::No => *no,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_averages_are_layer_means() {
        for (frame, yes, no) in FRAME_AVERAGES {
            for (initial, printed) in [(Answer::Yes, yes), (Answer::No, no)] {
                let mean = Layer::ALL
                    .iter()
                    .map(|&l| frame_threshold(l, frame, initial))
                    .sum::<f64>()
                    / 5.0;
                assert!((mean - printed).abs() <= 0.05 + 1e-9, "{frame} {initial}: {mean}");
            }
        }
    }
}
