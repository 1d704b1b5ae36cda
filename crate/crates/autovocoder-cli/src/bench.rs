//! Real-time-factor measurement with an injectable clock.
//!
//! RTF = total generated audio duration / total synthesis wall time, over
//! every (utterance × repeat) pair of one run. Utterances are generated
//! strictly one at a time — no batching — and only the synthesis call sits
//! between the clock reads, so loading and feature precomputation never
//! count. The clock is a trait so tests can drive the arithmetic with fake
//! timestamps.

/// Monotonic time source, in seconds from an arbitrary origin.
pub trait Clock {
    fn now_s(&mut self) -> f64;
}

/// Wall clock backed by [`std::time::Instant`].
pub struct WallClock(std::time::Instant);

impl WallClock {
    pub fn new() -> Self {
        WallClock(std::time::Instant::now())
    }
}

impl Clock for WallClock {
    fn now_s(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Totals of one benchmark run.
#[derive(Debug, Clone, Copy)]
pub struct RtfRun {
    pub audio_s: f64,
    pub wall_s: f64,
}

impl RtfRun {
    pub fn rtf(&self) -> f64 {
        self.audio_s / self.wall_s
    }
}

/// One run: synthesize every utterance `repeats` times, timing each
/// `synth(i)` call individually. `durations_s[i]` is the audio duration the
/// call produces.
pub fn measure_rtf(
    durations_s: &[f64],
    repeats: usize,
    clock: &mut dyn Clock,
    mut synth: impl FnMut(usize),
) -> RtfRun {
    let mut wall_s = 0.0;
    for _ in 0..repeats {
        for i in 0..durations_s.len() {
            let t0 = clock.now_s();
            synth(i);
            wall_s += clock.now_s() - t0;
        }
    }
    let audio_s = durations_s.iter().sum::<f64>() * repeats as f64;
    RtfRun { audio_s, wall_s }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Advances a fixed step on every read.
    struct TickClock {
        t: f64,
        step: f64,
    }

    impl Clock for TickClock {
        fn now_s(&mut self) -> f64 {
            let t = self.t;
            self.t += self.step;
            t
        }
    }

    #[test]
    fn ten_seconds_in_a_tenth_is_rtf_100() {
        let mut clock = TickClock { t: 0.0, step: 0.1 };
        let run = measure_rtf(&[10.0], 1, &mut clock, |_| {});
        assert_eq!(run.audio_s, 10.0);
        assert!((run.wall_s - 0.1).abs() < 1e-12);
        assert!((run.rtf() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn repeats_scale_audio_and_wall_together() {
        let mut clock = TickClock { t: 5.0, step: 0.01 };
        let mut calls = Vec::new();
        let run = measure_rtf(&[1.0, 2.0], 10, &mut clock, |i| calls.push(i));
        assert_eq!(calls.len(), 20);
        assert_eq!(calls[..2], [0, 1]);
        assert!((run.audio_s - 30.0).abs() < 1e-12);
        assert!((run.wall_s - 0.2).abs() < 1e-12);
        assert!((run.rtf() - 150.0).abs() < 1e-9);
    }

    #[test]
    fn mean_and_median_behave_on_small_samples() {
        assert!((mean(&[1.0, 2.0, 6.0]) - 3.0).abs() < 1e-12);
        assert!((median(&[6.0, 1.0, 2.0]) - 2.0).abs() < 1e-12);
        assert!((median(&[4.0, 1.0, 2.0, 3.0]) - 2.5).abs() < 1e-12);
    }
}
