//! Raw accelerometer samples and the ways a stream is cut up: uniform
//! resampling, fixed-length frames on a stride grid, prefix truncation and
//! visualization bins.
//!
//! Frame and prefix arithmetic is done in integer sample counts. A window of
//! 1.5 s at 100 Hz is always exactly 150 samples, and the relative time of
//! sample `i` inside a window is `i / rate` regardless of absolute stream time.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Nominal watch sampling rate in Hz.
pub const DEFAULT_RATE: f64 = 100.0;
/// Frame length in seconds.
pub const DEFAULT_WINDOW_LEN: f64 = 1.5;
/// Frame stride in seconds (4 frames per second).
pub const DEFAULT_STRIDE: f64 = 0.25;
/// Intervals longer than this many sample periods are reported as gaps.
pub const GAP_PERIODS: f64 = 5.0;

// Tolerance, in grid steps, for treating an input timestamp as on-grid.
const GRID_EPS: f64 = 1e-6;

/// One timestamped 3-axis acceleration reading in g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl Sample {
    pub fn new(t: f64, ax: f64, ay: f64, az: f64) -> Self {
        Sample { t, ax, ay, az }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.ax.is_finite() && self.ay.is_finite() && self.az.is_finite()
    }

    pub fn axes(&self) -> [f64; 3] {
        [self.ax, self.ay, self.az]
    }
}

/// Converts a duration in seconds to a whole number of samples.
pub fn samples_for(secs: f64, rate: f64) -> usize {
    (secs * rate).round().max(0.0) as usize
}

/// A fixed-length run of uniformly spaced samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_t: f64,
    pub rate: f64,
    pub samples: Vec<Sample>,
}

impl Window {
    pub fn new(start_t: f64, rate: f64, samples: Vec<Sample>) -> Self {
        Window { start_t, rate, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Window duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    /// Time of sample `index` relative to the window start.
    pub fn relative_t(&self, index: usize) -> f64 {
        index as f64 / self.rate
    }
}

/// Sliding-frame geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSchedule {
    pub window_len: f64,
    pub stride: f64,
    pub rate: f64,
}

impl Default for FrameSchedule {
    fn default() -> Self {
        FrameSchedule {
            window_len: DEFAULT_WINDOW_LEN,
            stride: DEFAULT_STRIDE,
            rate: DEFAULT_RATE,
        }
    }
}

impl FrameSchedule {
    pub fn new(window_len: f64, stride: f64, rate: f64) -> Result<Self> {
        let schedule = FrameSchedule {
            window_len,
            stride,
            rate,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rate must be positive, got {}",
                self.rate
            )));
        }
        if !(self.stride > 0.0 && self.stride <= self.window_len) {
            return Err(Error::InvalidArgument(format!(
                "stride must satisfy 0 < stride <= window_len, got stride {} window {}",
                self.stride, self.window_len
            )));
        }
        if self.stride_samples() == 0 {
            return Err(Error::InvalidArgument(
                "stride is shorter than one sample period".into(),
            ));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        samples_for(self.window_len, self.rate)
    }

    pub fn stride_samples(&self) -> usize {
        samples_for(self.stride, self.rate)
    }

    /// Fraction of each frame shared with the next one.
    pub fn overlap(&self) -> f64 {
        (self.window_len - self.stride) / self.window_len
    }

    /// Number of complete frames in a stream of `n` samples.
    pub fn frame_count(&self, n: usize) -> usize {
        let w = self.window_samples();
        if n < w {
            0
        } else {
            (n - w) / self.stride_samples() + 1
        }
    }
}

/// An interval between consecutive input samples longer than the gap threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub start: f64,
    pub end: f64,
}

impl Gap {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// True when the gap overlaps `[start, end)`.
    pub fn overlaps(&self, start: f64, end: f64) -> bool {
        self.start < end && self.end > start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub samples: Vec<Sample>,
    pub gaps: Vec<Gap>,
}

/// Incremental linear resampler onto the grid `k / rate`.
///
/// Each pushed sample emits every grid point in `(previous t, t]`; a grid
/// point that coincides with an input timestamp copies that sample's values
/// unchanged.
#[derive(Debug, Clone)]
pub struct Resampler {
    rate: f64,
    prev: Option<Sample>,
    next_k: i64,
    pushed: usize,
    intervals: usize,
    gap_intervals: usize,
    gaps: Vec<Gap>,
}

impl Resampler {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidArgument(format!("rate must be positive, got {rate}")));
        }
        Ok(Resampler {
            rate,
            prev: None,
            next_k: 0,
            pushed: 0,
            intervals: 0,
            gap_intervals: 0,
            gaps: Vec::new(),
        })
    }

    pub fn gaps(&self) -> &[Gap] {
        &self.gaps
    }

    pub fn push(&mut self, sample: Sample, out: &mut Vec<Sample>) -> Result<()> {
        let index = self.pushed;
        if !sample.is_finite() {
            return Err(Error::NonFinite { index });
        }
        let rate = self.rate;
        match self.prev {
            None => {
                let k = (sample.t * rate - GRID_EPS).ceil() as i64;
                if ((k as f64) - sample.t * rate).abs() < GRID_EPS {
                    out.push(Sample {
                        t: k as f64 / rate,
                        ..sample
                    });
                    self.next_k = k + 1;
                } else {
                    self.next_k = k;
                }
            }
            Some(prev) => {
                if sample.t <= prev.t {
                    return Err(Error::NonMonotone { index, t: sample.t });
                }
                let dt = sample.t - prev.t;
                self.intervals += 1;
                if dt * rate > GAP_PERIODS + GRID_EPS {
                    self.gap_intervals += 1;
                    self.gaps.push(Gap {
                        start: prev.t,
                        end: sample.t,
                    });
                }
                loop {
                    let k = self.next_k;
                    let pos = k as f64 - sample.t * rate;
                    if pos > GRID_EPS {
                        break;
                    }
                    let t = k as f64 / rate;
                    if pos.abs() <= GRID_EPS {
                        out.push(Sample { t, ..sample });
                    } else {
                        let w = (t - prev.t) / dt;
                        out.push(Sample {
                            t,
                            ax: prev.ax + w * (sample.ax - prev.ax),
                            ay: prev.ay + w * (sample.ay - prev.ay),
                            az: prev.az + w * (sample.az - prev.az),
                        });
                    }
                    self.next_k += 1;
                }
            }
        }
        self.prev = Some(sample);
        self.pushed += 1;
        Ok(())
    }

    /// Validates the stream as a whole once input is exhausted.
    pub fn finish(&self, emitted: usize) -> Result<()> {
        if self.pushed == 0 {
            return Err(Error::Empty("stream"));
        }
        if self.intervals > 0 && self.gap_intervals == self.intervals {
            return Err(Error::AllGaps);
        }
        if emitted == 0 {
            return Err(Error::Empty("stream has no point on the resampling grid"));
        }
        Ok(())
    }
}

/// Linearly resamples a stream onto the uniform grid `k / rate`, covering
/// `[first t, last t]`, and reports gaps longer than five sample periods.
pub fn resample_uniform(stream: &[Sample], rate: f64) -> Result<Resampled> {
    if stream.is_empty() {
        return Err(Error::Empty("stream"));
    }
    let mut resampler = Resampler::new(rate)?;
    let mut samples = Vec::with_capacity(((stream[stream.len() - 1].t - stream[0].t) * rate).max(0.0) as usize + 2);
    for s in stream {
        resampler.push(*s, &mut samples)?;
    }
    resampler.finish(samples.len())?;
    Ok(Resampled {
        samples,
        gaps: resampler.gaps,
    })
}

/// The first `t` seconds of a window: samples with relative time in `[0, t)`.
pub fn prefix(window: &Window, t: f64) -> Result<&[Sample]> {
    let n = samples_for(t, window.rate);
    if t.is_nan() || t <= 0.0 || n == 0 || n > window.len() {
        return Err(Error::OutOfRange(format!(
            "prefix {t} s outside (0, {}] s",
            window.duration()
        )));
    }
    Ok(&window.samples[..n])
}

/// Start index (into the stream) of frame `k`.
pub fn frame_start_index(schedule: &FrameSchedule, k: usize) -> usize {
    k * schedule.stride_samples()
}

/// Cuts a uniform stream into complete frames at `0, stride, 2·stride, …`.
///
/// A stream shorter than one frame yields no frames.
pub fn slide(stream: &[Sample], schedule: &FrameSchedule) -> Result<Vec<Window>> {
    schedule.validate()?;
    let w = schedule.window_samples();
    Ok((0..schedule.frame_count(stream.len()))
        .map(|k| {
            let start = frame_start_index(schedule, k);
            Window::new(stream[start].t, schedule.rate, stream[start..start + w].to_vec())
        })
        .collect())
}

/// Samples of one visualization bin, split by axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub t_start: f64,
    pub t_end: f64,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub az: Vec<f64>,
}

impl Bin {
    pub fn axis(&self, axis: usize) -> &[f64] {
        match axis {
            0 => &self.ax,
            1 => &self.ay,
            _ => &self.az,
        }
    }

    pub fn len(&self) -> usize {
        self.ax.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ax.is_empty()
    }
}

/// Partitions a window into `n_bins` equal time intervals for plotting.
pub fn bin_for_viz(window: &Window, n_bins: usize) -> Result<Vec<Bin>> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be positive".into()));
    }
    let n = window.len();
    if !n.is_multiple_of(n_bins) {
        return Err(Error::InvalidArgument(format!(
            "{n} samples cannot be split into {n_bins} equal bins"
        )));
    }
    let per_bin = n / n_bins;
    Ok(window
        .samples
        .chunks(per_bin)
        .enumerate()
        .map(|(i, chunk)| Bin {
            t_start: window.relative_t(i * per_bin),
            t_end: window.relative_t((i + 1) * per_bin),
            ax: chunk.iter().map(|s| s.ax).collect(),
            ay: chunk.iter().map(|s| s.ay).collect(),
            az: chunk.iter().map(|s| s.az).collect(),
        })
        .collect())
}

pub const STREAM_CSV_HEADER: [&str; 4] = ["t", "ax", "ay", "az"];

/// Line-by-line reader for `t,ax,ay,az` stream CSV.
///
/// Yields samples as soon as their line is read, so it works on unbounded
/// input such as stdin. Errors carry 1-based line numbers.
pub struct StreamCsvReader<R> {
    inner: R,
    line: usize,
    buf: String,
    header_seen: bool,
}

impl<R: BufRead> StreamCsvReader<R> {
    pub fn new(inner: R) -> Self {
        StreamCsvReader {
            inner,
            line: 0,
            buf: String::new(),
            header_seen: false,
        }
    }

    fn parse_line(&self, text: &str) -> Result<Sample> {
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                self.line,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let mut values = [0.0; 4];
        for (slot, (field, name)) in values.iter_mut().zip(fields.iter().zip(STREAM_CSV_HEADER)) {
            *slot = field
                .parse::<f64>()
                .map_err(|_| Error::parse(self.line, format!("invalid {name} value {field:?}")))?;
            if !slot.is_finite() {
                return Err(Error::parse(self.line, format!("non-finite {name}")));
            }
        }
        Ok(Sample::new(values[0], values[1], values[2], values[3]))
    }
}

impl<R: BufRead> Iterator for StreamCsvReader<R> {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line += 1;
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            if !self.header_seen {
                self.header_seen = true;
                let header: Vec<&str> = text.split(',').map(str::trim).collect();
                if header != STREAM_CSV_HEADER {
                    return Some(Err(Error::parse(
                        self.line,
                        format!("expected header t,ax,ay,az, found {text:?}"),
                    )));
                }
                continue;
            }
            return Some(self.parse_line(text));
        }
    }
}

pub fn read_stream_csv<R: BufRead>(reader: R) -> Result<Vec<Sample>> {
    StreamCsvReader::new(reader).collect()
}

pub fn write_stream_csv<W: Write>(mut writer: W, samples: &[Sample]) -> Result<()> {
    writeln!(writer, "t,ax,ay,az")?;
    for s in samples {
        writeln!(writer, "{},{},{},{}", s.t, s.ax, s.ay, s.az)?;
    }
    writer.flush()?;
    Ok(())
}

/// A uniform stream `t = i / rate` built from per-sample axis values.
pub fn uniform_stream(rate: f64, values: impl IntoIterator<Item = [f64; 3]>) -> Vec<Sample> {
    values
        .into_iter()
        .enumerate()
        .map(|(i, [ax, ay, az])| Sample::new(i as f64 / rate, ax, ay, az))
        .collect()
}
