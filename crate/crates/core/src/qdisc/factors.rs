//! Congestion indicator and drawing-factor arithmetic.

use std::ops::Range;

use super::QdiscParams;

/// EWMA of the instantaneous queue length.
pub fn update_avg_queue(avg: f64, current: usize, w_q: f64) -> f64 {
    (1.0 - w_q) * avg + w_q * current as f64
}

/// Linear early-drop probability between the thresholds; zero below
/// `t_min`, one at or above `t_max`.
pub fn red_drop_probability(avg: f64, params: &QdiscParams) -> f64 {
    let t_min = params.t_min as f64;
    let t_max = params.t_max as f64;
    if avg < t_min {
        0.0
    } else if avg >= t_max {
        1.0
    } else {
        params.max_p * (avg - t_min) / (t_max - t_min)
    }
}

/// Number of candidate packets CHOKeD draws for an arrival that finds
/// `current` packets queued: `round(Q_c * sqrt(B) / ((t_max - t_min) * ln B))`,
/// rounding half away from zero.
pub fn drawing_factor(current: usize, params: &QdiscParams) -> u32 {
    let b = params.buffer_capacity as f64;
    let span = (params.t_max - params.t_min) as f64;
    let raw = current as f64 * b.sqrt() / (span * b.ln());
    raw.round() as u32
}

/// Splits the drawing factor into the rear draw count (the full factor)
/// and the front draw count (half of it, rounded half away from zero).
pub fn drawing_split(factor: u32) -> (u32, u32) {
    let front = (factor as f64 / 2.0).round() as u32;
    (factor, front)
}

/// Buffer positions of the front (oldest) and rear (newest) regions.
/// Index 0 is the head; the rear takes the extra slot for odd lengths.
pub fn partition_regions(current: usize) -> (Range<usize>, Range<usize>) {
    let split = current / 2;
    (0..split, split..current)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_params() -> QdiscParams {
        QdiscParams::default()
    }

    #[test]
    fn ewma_examples() {
        assert!((update_avg_queue(40.0, 40, 0.02) - 40.0).abs() < 1e-12);
        assert!((update_avg_queue(0.0, 50, 0.02) - 1.0).abs() < 1e-12);
        // 0.98 * 40 + 0.02 * 80
        assert!((update_avg_queue(40.0, 80, 0.02) - 40.8).abs() < 1e-12);
    }

    #[test]
    fn red_probability_regions() {
        let p = default_params();
        assert_eq!(red_drop_probability(40.0, &p), 0.0);
        assert_eq!(red_drop_probability(30.0, &p), 0.0);
        assert_eq!(red_drop_probability(85.0, &p), 1.0);
        assert_eq!(red_drop_probability(80.0, &p), 1.0);
        // 0.1 * (60 - 40) / (80 - 40)
        assert!((red_drop_probability(60.0, &p) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn drawing_factor_anchor_points() {
        let p = default_params();
        assert_eq!(drawing_factor(83, &p), 5);
        assert_eq!(drawing_factor(11, &p), 1);
        assert_eq!(drawing_factor(0, &p), 0);
    }

    #[test]
    fn drawing_factor_is_monotone_over_buffer() {
        for (b, lo, hi) in [(100, 40, 80), (300, 120, 240), (500, 200, 400), (2, 1, 2)] {
            let p = QdiscParams {
                buffer_capacity: b,
                t_min: lo,
                t_max: hi,
                ..QdiscParams::default()
            };
            let mut prev = 0;
            for q in 0..=b {
                let d = drawing_factor(q, &p);
                assert!(d >= prev, "B={b}: factor dropped at q_c={q}");
                prev = d;
            }
        }
    }

    #[test]
    fn split_examples() {
        assert_eq!(drawing_split(5), (5, 3));
        assert_eq!(drawing_split(0), (0, 0));
        assert_eq!(drawing_split(4), (4, 2));
        assert_eq!(drawing_split(1), (1, 1));
    }

    #[test]
    fn regions() {
        assert_eq!(partition_regions(100), (0..50, 50..100));
        assert_eq!(partition_regions(0), (0..0, 0..0));
        assert_eq!(partition_regions(7), (0..3, 3..7));
        assert_eq!(partition_regions(1), (0..0, 0..1));
    }
}
