//! Domain types and dataset assembly: timestamped sky frames, PV records,
//! the 31-minute interim windows, the three task-specific sample layouts,
//! cloud filtering, masking, and day-based splits.

use crate::error::{Error, Result};
use chrono::NaiveDate;
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

/// Square frame edge in pixels.
pub const FRAME_SIZE: usize = 64;
/// Minutes of history/future around each anchor.
pub const WINDOW_HALF_MIN: i64 = 15;
/// Frames per interim window (anchor ± 15 minutes, 1-minute steps).
pub const INTERIM_LEN: usize = 31;
/// Context/target frames per video sample (2-minute stride).
pub const CLIP_HALF_LEN: usize = 8;
/// Frames (and PV values) per hybrid-CNN sample.
pub const SUNSET_LEN: usize = 16;

/// Calendar minute since the Unix epoch, UTC. Integer arithmetic keeps
/// window bookkeeping exact across DST and leap-day boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MinuteStamp(pub i64);

impl MinuteStamp {
    pub fn plus_minutes(self, m: i64) -> Self {
        MinuteStamp(self.0 + m)
    }

    pub fn to_utc(self) -> chrono::DateTime<chrono::Utc> {
        chrono::DateTime::from_timestamp(self.0 * 60, 0).expect("timestamp in range")
    }

    pub fn from_utc(dt: chrono::DateTime<chrono::Utc>) -> Self {
        MinuteStamp(dt.timestamp() / 60)
    }

    /// Calendar date at the site, given its fixed UTC offset.
    pub fn local_date(self, utc_offset_hours: f64) -> NaiveDate {
        let shifted = self.0 + (utc_offset_hours * 60.0).round() as i64;
        let days = shifted.div_euclid(24 * 60);
        NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Duration::days(days)
    }
}

/// One 64x64 RGB sky image at a calendar minute.
#[derive(Debug, Clone)]
pub struct SkyFrame {
    pub timestamp: MinuteStamp,
    /// (H, W, 3) 8-bit intensities.
    pub pixels: Array3<u8>,
    pub mask_applied: bool,
}

impl SkyFrame {
    pub fn new(timestamp: MinuteStamp, pixels: Array3<u8>) -> Result<Self> {
        let shape = pixels.shape();
        if shape != [FRAME_SIZE, FRAME_SIZE, 3] {
            return Err(Error::data(format!(
                "sky frame must be {FRAME_SIZE}x{FRAME_SIZE}x3, got {shape:?}"
            )));
        }
        Ok(Self {
            timestamp,
            pixels,
            mask_applied: false,
        })
    }
}

/// Binary field-of-view mask: 1 inside the camera circle, 0 outside.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundMask {
    pub bits: Array2<u8>,
}

impl ForegroundMask {
    /// Validates shape, binarity, and that the foreground is one
    /// 4-connected region.
    pub fn new(bits: Array2<u8>) -> Result<Self> {
        if bits.shape() != [FRAME_SIZE, FRAME_SIZE] {
            return Err(Error::data(format!(
                "mask must be {FRAME_SIZE}x{FRAME_SIZE}, got {:?}",
                bits.shape()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::data("mask must be binary"));
        }
        let foreground = bits.iter().filter(|&&b| b == 1).count();
        if foreground == 0 {
            return Err(Error::data("mask has no foreground pixels"));
        }
        if connected_foreground_size(&bits) != foreground {
            return Err(Error::data("mask foreground is not a single connected region"));
        }
        Ok(Self { bits })
    }

    /// Circle inscribed in the frame; the synthetic camera's field of view.
    pub fn inscribed_circle() -> Self {
        let c = (FRAME_SIZE as f64 - 1.0) / 2.0;
        let r = FRAME_SIZE as f64 / 2.0;
        let mut bits = Array2::<u8>::zeros((FRAME_SIZE, FRAME_SIZE));
        for y in 0..FRAME_SIZE {
            for x in 0..FRAME_SIZE {
                let (dy, dx) = (y as f64 - c, x as f64 - c);
                if (dy * dy + dx * dx).sqrt() <= r - 0.5 {
                    bits[(y, x)] = 1;
                }
            }
        }
        Self { bits }
    }

    /// Derive a mask from real frames: pixels whose brightness ever exceeds
    /// a percentile of the frame are foreground. Falls back on the largest
    /// connected component so stray hot pixels do not fragment the region.
    pub fn from_brightness(frames: &[SkyFrame], percentile: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::data("need at least one frame to derive a mask"));
        }
        let mut max_brightness = Array2::<f64>::zeros((FRAME_SIZE, FRAME_SIZE));
        for f in frames {
            for y in 0..FRAME_SIZE {
                for x in 0..FRAME_SIZE {
                    let b = f.pixels[(y, x, 0)] as f64
                        + f.pixels[(y, x, 1)] as f64
                        + f.pixels[(y, x, 2)] as f64;
                    if b > max_brightness[(y, x)] {
                        max_brightness[(y, x)] = b;
                    }
                }
            }
        }
        let mut values: Vec<f64> = max_brightness.iter().cloned().collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let idx = ((values.len() - 1) as f64 * percentile.clamp(0.0, 1.0)) as usize;
        let threshold = values[idx];
        let mut bits = max_brightness.mapv(|b| u8::from(b > threshold));
        keep_largest_component(&mut bits);
        Self::new(bits)
    }

    pub fn foreground_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

fn connected_foreground_size(bits: &Array2<u8>) -> usize {
    let mut seen = Array2::<u8>::zeros(bits.raw_dim());
    let start = bits
        .indexed_iter()
        .find(|(_, &b)| b == 1)
        .map(|(idx, _)| idx);
    let Some(start) = start else { return 0 };
    let mut stack = vec![start];
    seen[start] = 1;
    let mut count = 0;
    while let Some((y, x)) = stack.pop() {
        count += 1;
        let mut push = |yy: usize, xx: usize, stack: &mut Vec<(usize, usize)>| {
            if bits[(yy, xx)] == 1 && seen[(yy, xx)] == 0 {
                seen[(yy, xx)] = 1;
                stack.push((yy, xx));
            }
        };
        if y > 0 {
            push(y - 1, x, &mut stack);
        }
        if y + 1 < FRAME_SIZE {
            push(y + 1, x, &mut stack);
        }
        if x > 0 {
            push(y, x - 1, &mut stack);
        }
        if x + 1 < FRAME_SIZE {
            push(y, x + 1, &mut stack);
        }
    }
    count
}

fn keep_largest_component(bits: &mut Array2<u8>) {
    let mut labels = Array2::<u32>::zeros(bits.raw_dim());
    let mut sizes: Vec<usize> = vec![0]; // label 0 = background
    for y in 0..FRAME_SIZE {
        for x in 0..FRAME_SIZE {
            if bits[(y, x)] == 1 && labels[(y, x)] == 0 {
                let label = sizes.len() as u32;
                sizes.push(0);
                let mut stack = vec![(y, x)];
                labels[(y, x)] = label;
                while let Some((cy, cx)) = stack.pop() {
                    *sizes.last_mut().unwrap() += 1;
                    for (ny, nx) in [
                        (cy.wrapping_sub(1), cx),
                        (cy + 1, cx),
                        (cy, cx.wrapping_sub(1)),
                        (cy, cx + 1),
                    ] {
                        if ny < FRAME_SIZE
                            && nx < FRAME_SIZE
                            && bits[(ny, nx)] == 1
                            && labels[(ny, nx)] == 0
                        {
                            labels[(ny, nx)] = label;
                            stack.push((ny, nx));
                        }
                    }
                }
            }
        }
    }
    if sizes.len() <= 2 {
        return; // zero or one component
    }
    let best = (1..sizes.len()).max_by_key(|&l| sizes[l]).unwrap() as u32;
    for (b, &l) in bits.iter_mut().zip(labels.iter()) {
        *b = u8::from(l == best);
    }
}

/// Minutely-averaged PV power measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PVRecord {
    pub timestamp: MinuteStamp,
    pub power_kw: f64,
}

impl PVRecord {
    pub fn new(timestamp: MinuteStamp, power_kw: f64, capacity_kw: f64) -> Result<Self> {
        if !(0.0..=capacity_kw).contains(&power_kw) {
            return Err(Error::data(format!(
                "pv power {power_kw} kW outside [0, {capacity_kw}]"
            )));
        }
        Ok(Self {
            timestamp,
            power_kw,
        })
    }
}

/// An image/PV pair at one minute.
#[derive(Debug, Clone)]
pub struct AlignedRecord {
    pub frame: SkyFrame,
    pub pv: PVRecord,
}

impl AlignedRecord {
    pub fn new(frame: SkyFrame, pv: PVRecord) -> Result<Self> {
        if frame.timestamp != pv.timestamp {
            return Err(Error::data("frame/pv timestamps differ"));
        }
        Ok(Self { frame, pv })
    }
}

/// A complete ±15 minute window at 1-minute resolution.
#[derive(Debug, Clone)]
pub struct InterimSample {
    pub anchor: MinuteStamp,
    /// 31 frames at anchor-15 ... anchor+15.
    pub frames: Vec<SkyFrame>,
    /// 31 PV records at the same minutes.
    pub pv: Vec<PVRecord>,
}

/// 8 context frames (t-15..t-1) and 8 target frames (t+1..t+15), both at a
/// 2-minute stride. Frames stay unmasked; masking of generated frames
/// happens at evaluation.
#[derive(Debug, Clone)]
pub struct VideoSample {
    pub anchor: MinuteStamp,
    pub context: Vec<SkyFrame>,
    pub target: Vec<SkyFrame>,
}

/// One masked image with its concurrent PV output.
#[derive(Debug, Clone)]
pub struct UNetSample {
    pub anchor: MinuteStamp,
    pub image: SkyFrame,
    pub pv_kw: f64,
}

/// 16 masked frames and PV values (t-15..t) plus the t+15 target.
#[derive(Debug, Clone)]
pub struct SunsetSample {
    pub anchor: MinuteStamp,
    pub images: Vec<SkyFrame>,
    pub pv_history: Vec<f64>,
    pub pv_target: f64,
}

/// Day-disjoint train/validation/test partition.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_days: Vec<NaiveDate>,
    pub val_days: Vec<NaiveDate>,
    pub test_days: Vec<NaiveDate>,
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeMap::new();
        for (part, days) in [
            ("train", &self.train_days),
            ("val", &self.val_days),
            ("test", &self.test_days),
        ] {
            for d in days {
                if let Some(prev) = seen.insert(*d, part) {
                    return Err(Error::config(format!(
                        "day {d} assigned to both {prev} and {part}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Normalized red-blue ratio of one pixel: (r - b) / (r + b), 0 when r+b = 0.
/// High values indicate cloud; pure blue sky approaches -1.
pub fn nrbr(r: u8, g: u8, b: u8) -> f64 {
    let _ = g;
    let (r, b) = (r as f64, b as f64);
    if r + b == 0.0 {
        0.0
    } else {
        (r - b) / (r + b)
    }
}

/// A frame is cloudy when the fraction of foreground pixels with
/// `nrbr >= pixel_threshold` exceeds `fraction_threshold`.
pub fn is_cloudy(
    frame: &SkyFrame,
    mask: &ForegroundMask,
    pixel_threshold: f64,
    fraction_threshold: f64,
) -> Result<bool> {
    let total = mask.foreground_count();
    if total == 0 {
        return Err(Error::data("mask has empty foreground"));
    }
    let mut cloudy = 0usize;
    for y in 0..FRAME_SIZE {
        for x in 0..FRAME_SIZE {
            if mask.bits[(y, x)] == 1 {
                let value = nrbr(
                    frame.pixels[(y, x, 0)],
                    frame.pixels[(y, x, 1)],
                    frame.pixels[(y, x, 2)],
                );
                if value >= pixel_threshold {
                    cloudy += 1;
                }
            }
        }
    }
    Ok(cloudy as f64 / total as f64 > fraction_threshold)
}

/// Zero out background pixels. Idempotent; foreground untouched.
pub fn apply_mask(frame: &SkyFrame, mask: &ForegroundMask) -> SkyFrame {
    let mut pixels = frame.pixels.clone();
    for y in 0..FRAME_SIZE {
        for x in 0..FRAME_SIZE {
            if mask.bits[(y, x)] == 0 {
                pixels[(y, x, 0)] = 0;
                pixels[(y, x, 1)] = 0;
                pixels[(y, x, 2)] = 0;
            }
        }
    }
    SkyFrame {
        timestamp: frame.timestamp,
        pixels,
        mask_applied: true,
    }
}

/// Build interim samples from time-ordered aligned records.
///
/// Anchors start at the first timestamp with a complete ±15 minute window
/// and advance by `stride_min`; anchors whose window has any gap emit
/// nothing but do not shift the phase.
pub fn build_interim(records: &[AlignedRecord], stride_min: i64) -> Result<Vec<InterimSample>> {
    if stride_min <= 0 {
        return Err(Error::config("anchor stride must be positive"));
    }
    for pair in records.windows(2) {
        if pair[1].pv.timestamp.0 <= pair[0].pv.timestamp.0 {
            return Err(Error::data("records must be sorted with unique timestamps"));
        }
    }
    let index: std::collections::BTreeMap<i64, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.pv.timestamp.0, i))
        .collect();
    let window_complete = |anchor: i64| -> Option<Vec<usize>> {
        let mut ids = Vec::with_capacity(INTERIM_LEN);
        for offset in -WINDOW_HALF_MIN..=WINDOW_HALF_MIN {
            ids.push(*index.get(&(anchor + offset))?);
        }
        Some(ids)
    };
    let Some(first_ts) = records.first().map(|r| r.pv.timestamp.0) else {
        return Ok(Vec::new());
    };
    let last_ts = records.last().unwrap().pv.timestamp.0;
    // Phase anchor: earliest timestamp whose window is complete.
    let Some(first_anchor) = (first_ts..=last_ts).find(|&t| window_complete(t).is_some()) else {
        return Ok(Vec::new());
    };
    let mut samples = Vec::new();
    let mut anchor = first_anchor;
    while anchor <= last_ts {
        if let Some(ids) = window_complete(anchor) {
            samples.push(InterimSample {
                anchor: MinuteStamp(anchor),
                frames: ids.iter().map(|&i| records[i].frame.clone()).collect(),
                pv: ids.iter().map(|&i| records[i].pv).collect(),
            });
        }
        anchor += stride_min;
    }
    Ok(samples)
}

/// Slice one interim window into the three task-specific layouts.
/// U-Net and hybrid-CNN images come out masked; video frames do not.
pub fn derive_task_samples(
    interim: &InterimSample,
    mask: &ForegroundMask,
) -> (VideoSample, UNetSample, SunsetSample) {
    debug_assert_eq!(interim.frames.len(), INTERIM_LEN);
    debug_assert_eq!(interim.pv.len(), INTERIM_LEN);
    // frames[i] holds offset i - 15 relative to the anchor.
    let at = |offset: i64| -> &SkyFrame { &interim.frames[(offset + WINDOW_HALF_MIN) as usize] };
    let pv_at = |offset: i64| -> f64 { interim.pv[(offset + WINDOW_HALF_MIN) as usize].power_kw };

    let context: Vec<SkyFrame> = (0..CLIP_HALF_LEN)
        .map(|i| at(-15 + 2 * i as i64).clone())
        .collect();
    let target: Vec<SkyFrame> = (0..CLIP_HALF_LEN)
        .map(|i| at(1 + 2 * i as i64).clone())
        .collect();
    let video = VideoSample {
        anchor: interim.anchor,
        context,
        target,
    };

    let unet = UNetSample {
        anchor: interim.anchor,
        image: apply_mask(at(0), mask),
        pv_kw: pv_at(0),
    };

    let images: Vec<SkyFrame> = (-15..=0).map(|o| apply_mask(at(o), mask)).collect();
    let pv_history: Vec<f64> = (-15..=0).map(pv_at).collect();
    debug_assert_eq!(images.len(), SUNSET_LEN);
    let sunset = SunsetSample {
        anchor: interim.anchor,
        images,
        pv_history,
        pv_target: pv_at(15),
    };

    (video, unet, sunset)
}

/// Partition samples by the local calendar date of their anchor. Dates not
/// listed anywhere default to the training split.
pub fn split_by_days<T, F>(
    samples: Vec<T>,
    split: &DatasetSplit,
    utc_offset_hours: f64,
    anchor_of: F,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)>
where
    F: Fn(&T) -> MinuteStamp,
{
    split.validate()?;
    let val: std::collections::BTreeSet<_> = split.val_days.iter().cloned().collect();
    let test: std::collections::BTreeSet<_> = split.test_days.iter().cloned().collect();
    let mut parts = (Vec::new(), Vec::new(), Vec::new());
    for s in samples {
        let date = anchor_of(&s).local_date(utc_offset_hours);
        if val.contains(&date) {
            parts.1.push(s);
        } else if test.contains(&date) {
            parts.2.push(s);
        } else {
            parts.0.push(s);
        }
    }
    Ok(parts)
}

/// Deterministic day split by fractions (remainder goes to train).
pub fn auto_split(days: &[NaiveDate], val_fraction: f64, test_fraction: f64) -> DatasetSplit {
    let n = days.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut sorted: Vec<NaiveDate> = days.to_vec();
    sorted.sort();
    sorted.dedup();
    // Test takes the tail (mirrors held-out late-season days), val the slice
    // before it, train the rest.
    let n = sorted.len();
    let n_test = n_test.min(n);
    let n_val = n_val.min(n - n_test);
    let test_days = sorted.split_off(n - n_test);
    let val_days = sorted.split_off(sorted.len() - n_val);
    DatasetSplit {
        train_days: sorted,
        val_days,
        test_days,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn solid_frame(ts: i64, rgb: (u8, u8, u8)) -> SkyFrame {
        let mut pixels = Array3::<u8>::zeros((FRAME_SIZE, FRAME_SIZE, 3));
        for y in 0..FRAME_SIZE {
            for x in 0..FRAME_SIZE {
                pixels[(y, x, 0)] = rgb.0;
                pixels[(y, x, 1)] = rgb.1;
                pixels[(y, x, 2)] = rgb.2;
            }
        }
        SkyFrame::new(MinuteStamp(ts), pixels).unwrap()
    }

    fn records(range: std::ops::Range<i64>, skip: &[i64]) -> Vec<AlignedRecord> {
        range
            .filter(|t| !skip.contains(t))
            .map(|t| {
                AlignedRecord::new(
                    solid_frame(t, (10, 20, 30)),
                    PVRecord::new(MinuteStamp(t), 1.0, 30.0).unwrap(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn nrbr_reference_points() {
        assert_eq!(nrbr(0, 0, 255), -1.0);
        assert_eq!(nrbr(128, 128, 128), 0.0);
        let v = nrbr(200, 180, 100);
        assert!((v - 100.0 / 300.0).abs() < 1e-12);
        assert_eq!(nrbr(0, 0, 0), 0.0);
    }

    #[test]
    fn nrbr_antisymmetry() {
        for (r, b) in [(10u8, 200u8), (255, 0), (33, 44), (0, 0)] {
            assert_eq!(nrbr(r, 77, b), -nrbr(b, 77, r));
        }
    }

    #[test]
    fn cloudy_detection_defaults() {
        let mask = ForegroundMask::inscribed_circle();
        // Clear blue sky: strongly negative NRBR everywhere.
        let blue = solid_frame(0, (60, 120, 220));
        assert!(!is_cloudy(&blue, &mask, -0.05, 0.05).unwrap());
        // Overcast gray: NRBR 0 >= -0.05 everywhere.
        let gray = solid_frame(0, (128, 128, 128));
        assert!(is_cloudy(&gray, &mask, -0.05, 0.05).unwrap());
    }

    #[test]
    fn cloudy_fraction_counted_against_threshold() {
        let mask = ForegroundMask::inscribed_circle();
        let mut frame = solid_frame(0, (60, 120, 220));
        // Paint ~10% of foreground pixels gray, counting by brute force.
        let fg: Vec<(usize, usize)> = mask
            .bits
            .indexed_iter()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect();
        let n_gray = fg.len() / 10;
        for &(y, x) in fg.iter().take(n_gray) {
            frame.pixels[(y, x, 0)] = 128;
            frame.pixels[(y, x, 1)] = 128;
            frame.pixels[(y, x, 2)] = 128;
        }
        let mut brute = 0;
        for &(y, x) in &fg {
            if nrbr(
                frame.pixels[(y, x, 0)],
                frame.pixels[(y, x, 1)],
                frame.pixels[(y, x, 2)],
            ) >= -0.05
            {
                brute += 1;
            }
        }
        assert_eq!(brute, n_gray);
        assert!(is_cloudy(&frame, &mask, -0.05, 0.05).unwrap());
        assert!(!is_cloudy(&frame, &mask, -0.05, 0.15).unwrap());
    }

    #[test]
    fn mask_apply_zeroes_background_and_is_idempotent() {
        let mask = ForegroundMask::inscribed_circle();
        let frame = solid_frame(0, (255, 255, 255));
        let masked = apply_mask(&frame, &mask);
        assert!(masked.mask_applied);
        let mut background_sum = 0u64;
        for y in 0..FRAME_SIZE {
            for x in 0..FRAME_SIZE {
                if mask.bits[(y, x)] == 0 {
                    for c in 0..3 {
                        background_sum += masked.pixels[(y, x, c)] as u64;
                    }
                } else {
                    assert_eq!(masked.pixels[(y, x, 0)], 255);
                }
            }
        }
        assert_eq!(background_sum, 0);
        let twice = apply_mask(&masked, &mask);
        assert_eq!(twice.pixels, masked.pixels);
    }

    #[test]
    fn mask_all_ones_is_identity_all_zeros_rejected() {
        let ones = ForegroundMask::new(Array2::<u8>::ones((FRAME_SIZE, FRAME_SIZE))).unwrap();
        let frame = solid_frame(0, (1, 2, 3));
        let masked = apply_mask(&frame, &ones);
        assert_eq!(masked.pixels, frame.pixels);
        assert!(ForegroundMask::new(Array2::<u8>::zeros((FRAME_SIZE, FRAME_SIZE))).is_err());
    }

    #[test]
    fn disconnected_mask_rejected() {
        let mut bits = Array2::<u8>::zeros((FRAME_SIZE, FRAME_SIZE));
        bits[(0, 0)] = 1;
        bits[(10, 10)] = 1;
        assert!(ForegroundMask::new(bits).is_err());
    }

    #[test]
    fn interim_window_counts() {
        // 31 consecutive minutes -> exactly one sample at the center.
        let samples = build_interim(&records(0..31, &[]), 2).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].anchor, MinuteStamp(15));
        // 32 minutes, stride 2: second anchor's window is incomplete at +15.
        let samples = build_interim(&records(0..32, &[]), 2).unwrap();
        assert_eq!(samples.len(), 1);
        // 33 minutes: anchor 17 completes again.
        let samples = build_interim(&records(0..33, &[]), 2).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].anchor, MinuteStamp(17));
    }

    #[test]
    fn interim_gap_suppression() {
        // A hole every 20 minutes leaves no complete 31-minute window.
        let skip: Vec<i64> = (0..120).step_by(20).map(|t| t as i64).collect();
        let samples = build_interim(&records(0..120, &skip), 2).unwrap();
        assert!(samples.is_empty());
    }

    #[test]
    fn interim_window_is_consecutive_and_deterministic() {
        let recs = records(100..200, &[150]);
        let a = build_interim(&recs, 2).unwrap();
        let b = build_interim(&recs, 2).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.anchor, y.anchor);
            for w in x.frames.windows(2) {
                assert_eq!(w[1].timestamp.0 - w[0].timestamp.0, 1);
            }
            assert_eq!(x.frames.len(), INTERIM_LEN);
            assert_eq!(x.pv.len(), INTERIM_LEN);
            // no window may span the missing minute
            assert!(x.frames.iter().all(|f| f.timestamp.0 != 150));
        }
    }

    #[test]
    fn task_sample_layout() {
        let recs = records(0..31, &[]);
        let interim = &build_interim(&recs, 2).unwrap()[0];
        let mask = ForegroundMask::inscribed_circle();
        let (video, unet, sunset) = derive_task_samples(interim, &mask);
        let ctx_offsets: Vec<i64> = video
            .context
            .iter()
            .map(|f| f.timestamp.0 - interim.anchor.0)
            .collect();
        assert_eq!(ctx_offsets, vec![-15, -13, -11, -9, -7, -5, -3, -1]);
        let tgt_offsets: Vec<i64> = video
            .target
            .iter()
            .map(|f| f.timestamp.0 - interim.anchor.0)
            .collect();
        assert_eq!(tgt_offsets, vec![1, 3, 5, 7, 9, 11, 13, 15]);
        assert!(!video.context[0].mask_applied);
        assert_eq!(unet.image.timestamp, interim.anchor);
        assert!(unet.image.mask_applied);
        assert_eq!(sunset.images.len(), SUNSET_LEN);
        assert_eq!(sunset.pv_history.len(), SUNSET_LEN);
        let sunset_offsets: Vec<i64> = sunset
            .images
            .iter()
            .map(|f| f.timestamp.0 - interim.anchor.0)
            .collect();
        assert_eq!(sunset_offsets, (-15..=0).collect::<Vec<_>>());
        assert!(sunset.images.iter().all(|f| f.mask_applied));
    }

    #[test]
    fn split_partition_and_default_to_train() {
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        let split = DatasetSplit {
            train_days: vec![],
            val_days: vec![d("2019-11-02")],
            test_days: vec![d("2019-11-03")],
        };
        // anchors on three local days (UTC offset 0 for clarity)
        let epoch = d("1970-01-01");
        let minute_of = |date: NaiveDate| MinuteStamp((date - epoch).num_days() * 24 * 60 + 100);
        let anchors = vec![
            minute_of(d("2019-11-01")), // unlisted -> train
            minute_of(d("2019-11-02")), // val
            minute_of(d("2019-11-03")), // test
        ];
        assert_eq!(anchors[0].local_date(0.0), d("2019-11-01"));
        let (train, val, test) = split_by_days(anchors.clone(), &split, 0.0, |a| *a).unwrap();
        assert_eq!(train.len(), 1);
        assert_eq!(val.len(), 1);
        assert_eq!(test.len(), 1);

        let bad = DatasetSplit {
            train_days: vec![d("2019-11-03")],
            val_days: vec![],
            test_days: vec![d("2019-11-03")],
        };
        assert!(split_by_days(anchors, &bad, 0.0, |a| *a).is_err());
    }

    #[test]
    fn local_date_respects_utc_offset() {
        // 2019-11-01 02:00 UTC is still 2019-10-31 at UTC-8.
        let ts = MinuteStamp::from_utc("2019-11-01T02:00:00Z".parse().unwrap());
        assert_eq!(ts.local_date(0.0), "2019-11-01".parse().unwrap());
        assert_eq!(ts.local_date(-8.0), "2019-10-31".parse().unwrap());
    }
}
