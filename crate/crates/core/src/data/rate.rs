use thiserror::Error;

/// Slack on the firing threshold of the rate-code accumulator.
pub const RATE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RateError {
    #[error("tick count must be at least 1")]
    ZeroTicks,
}

/// Binary input frames, one per tick, stored tick-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeFrames {
    ticks: usize,
    width: usize,
    bits: Vec<bool>,
}

impl SpikeFrames {
    pub fn from_frames(frames: Vec<Vec<bool>>) -> Self {
        let width = frames.first().map_or(0, Vec::len);
        assert!(frames.iter().all(|f| f.len() == width), "frames differ in width");
        let ticks = frames.len();
        Self { ticks, width, bits: frames.concat() }
    }

    pub fn ticks(&self) -> usize {
        self.ticks
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame(&self, tick: usize) -> &[bool] {
        &self.bits[tick * self.width..(tick + 1) * self.width]
    }

    pub fn spike_count(&self, pixel: usize) -> usize {
        (0..self.ticks).filter(|&t| self.frame(t)[pixel]).count()
    }
}

/// Spike train of a single intensity `p` over `ticks` ticks.
///
/// Error diffusion with the accumulator starting at one half: each tick adds
/// `p`, and whenever the total reaches 1 a spike is emitted and 1 is
/// subtracted. The spike count is `round(p * ticks)` (halves round up).
pub fn rate_encode_pixel(p: f64, ticks: usize) -> Vec<bool> {
    let mut acc = 0.5;
    (0..ticks)
        .map(|_| {
            acc += p;
            if acc >= 1.0 - RATE_EPSILON {
                acc -= 1.0;
                true
            } else {
                false
            }
        })
        .collect()
}

/// Deterministic rate code of a whole image.
pub fn rate_encode(image: &[f32], ticks: usize) -> Result<SpikeFrames, RateError> {
    if ticks == 0 {
        return Err(RateError::ZeroTicks);
    }
    let width = image.len();
    let mut bits = vec![false; ticks * width];
    for (k, &p) in image.iter().enumerate() {
        for (t, spike) in rate_encode_pixel(f64::from(p), ticks).into_iter().enumerate() {
            bits[t * width + k] = spike;
        }
    }
    Ok(SpikeFrames { ticks, width, bits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(rate_encode_pixel(1.0, 4), vec![true; 4]);
        assert_eq!(rate_encode_pixel(0.5, 4), vec![true, false, true, false]);
        assert_eq!(rate_encode_pixel(0.0, 8), vec![false; 8]);
        assert_eq!(rate_encode_pixel(0.25, 4), vec![false, true, false, false]);
    }

    #[test]
    fn single_tick_thresholds_at_half() {
        assert_eq!(rate_encode_pixel(0.5, 1), vec![true]);
        assert_eq!(rate_encode_pixel(0.499, 1), vec![false]);
    }

    #[test]
    fn zero_ticks_rejected() {
        assert_eq!(rate_encode(&[0.3], 0), Err(RateError::ZeroTicks));
    }

    #[test]
    fn frames_layout() {
        let f = rate_encode(&[1.0, 0.0, 0.5], 2).unwrap();
        assert_eq!(f.ticks(), 2);
        assert_eq!(f.frame(0), &[true, false, true]);
        assert_eq!(f.frame(1), &[true, false, false]);
        assert_eq!(f.spike_count(0), 2);
        assert_eq!(f, rate_encode(&[1.0, 0.0, 0.5], 2).unwrap());
    }
}
