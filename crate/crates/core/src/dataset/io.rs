//! Trial files are JSON lines: a header object, then one record per trial
//! with its samples inline as `[t, ax, ay, az]` rows. Prompt files are CSV
//! with header `t,part`. A session directory holds `stream.csv`
//! (`t,ax,ay,az`) and `prompts.csv`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Behavior, FacialPart, Placement, Prompt, PromptLog, TrialRecord};
use crate::signal::{read_stream_csv, samples_for, write_stream_csv, Sample, Window};
use crate::{Error, Result};

pub const TRIALS_FORMAT: &str = "facetouch-trials";
const TRIALS_VERSION: u32 = 1;
pub const STREAM_FILE: &str = "stream.csv";
pub const PROMPTS_FILE: &str = "prompts.csv";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    rate: f64,
    window_len: f64,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    user_id: String,
    session: u8,
    placement: Placement,
    behavior: Behavior,
    samples: Vec<[f64; 4]>,
}

/// Writes trials sharing one rate and window length.
pub fn write_trials<W: Write>(mut writer: W, trials: &[TrialRecord]) -> Result<()> {
    let first = trials.first().ok_or(Error::Empty("trials"))?;
    let rate = first.window.rate;
    let n = first.window.len();
    if let Some(t) = trials.iter().find(|t| t.window.rate != rate || t.window.len() != n) {
        return Err(Error::InvalidArgument(format!(
            "trial of {} has a different rate or length",
            t.user_id
        )));
    }
    let header = Header {
        format: TRIALS_FORMAT.into(),
        version: TRIALS_VERSION,
        rate,
        window_len: n as f64 / rate,
        count: trials.len(),
    };
    serde_json::to_writer(&mut writer, &header)?;
    writer.write_all(b"\n")?;
    for trial in trials {
        let record = Record {
            user_id: trial.user_id.clone(),
            session: trial.session,
            placement: trial.placement,
            behavior: trial.behavior,
            samples: trial.window.samples.iter().map(|s| [s.t, s.ax, s.ay, s.az]).collect(),
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trials<R: BufRead>(reader: R) -> Result<Vec<TrialRecord>> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or(Error::Empty("trial file"))?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| Error::parse(1, format!("header: {e}")))?;
    if header.format != TRIALS_FORMAT || header.version != TRIALS_VERSION {
        return Err(Error::parse(
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    if !(header.rate.is_finite() && header.rate > 0.0) {
        return Err(Error::parse(1, format!("invalid rate {}", header.rate)));
    }
    let expected = samples_for(header.window_len, header.rate);

    let mut trials = Vec::with_capacity(header.count);
    for (line, text) in lines {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&text).map_err(|e| Error::parse(line, e.to_string()))?;
        let samples: Vec<Sample> = record
            .samples
            .iter()
            .map(|&[t, ax, ay, az]| Sample::new(t, ax, ay, az))
            .collect();
        let start_t = samples.first().map_or(0.0, |s| s.t);
        let trial = TrialRecord {
            user_id: record.user_id,
            session: record.session,
            placement: record.placement,
            behavior: record.behavior,
            window: Window::new(start_t, header.rate, samples),
        };
        trial
            .validate(expected)
            .map_err(|e| Error::parse(line, e.to_string()))?;
        if let Some(i) = trial.window.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::parse(line, format!("non-finite value in sample {i}")));
        }
        trials.push(trial);
    }
    if trials.len() != header.count {
        return Err(Error::parse(
            1,
            format!("header announces {} trials, found {}", header.count, trials.len()),
        ));
    }
    Ok(trials)
}

pub fn save_trials(trials: &[TrialRecord], path: &Path) -> Result<()> {
    write_trials(BufWriter::new(File::create(path)?), trials)
}

pub fn load_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    read_trials(BufReader::new(File::open(path)?))
}

pub fn write_prompts<W: Write>(mut writer: W, prompts: &[Prompt]) -> Result<()> {
    writeln!(writer, "t,part")?;
    for p in prompts {
        writeln!(writer, "{},{}", p.t, p.part)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_prompts<R: BufRead>(reader: R) -> Result<Vec<Prompt>> {
    let mut prompts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let (line_no, line) = (i + 1, line?);
        let line = line.trim();
        if i == 0 {
            if line != "t,part" {
                return Err(Error::parse(1, format!("expected header t,part, found {line:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (t, part) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(line_no, "expected 2 fields"))?;
        let t: f64 = t
            .trim()
            .parse()
            .map_err(|e| Error::parse(line_no, format!("time {t:?}: {e}")))?;
        let part: FacialPart = part
            .trim()
            .parse()
            .map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
        prompts.push(Prompt { t, part });
    }
    Ok(prompts)
}

pub fn save_session(log: &PromptLog, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_stream_csv(BufWriter::new(File::create(dir.join(STREAM_FILE))?), &log.stream)?;
    write_prompts(BufWriter::new(File::create(dir.join(PROMPTS_FILE))?), &log.prompts)
}

pub fn load_session(dir: &Path) -> Result<PromptLog> {
    let in_file = |name: &str, e: Error| Error::Format {
        path: dir.join(name),
        message: e.to_string(),
    };
    let open = |name: &str| {
        File::open(dir.join(name))
            .map(BufReader::new)
            .map_err(|e| in_file(name, e.into()))
    };
    let stream = read_stream_csv(open(STREAM_FILE)?).map_err(|e| in_file(STREAM_FILE, e))?;
    let prompts = read_prompts(open(PROMPTS_FILE)?).map_err(|e| in_file(PROMPTS_FILE, e))?;
    PromptLog::new(stream, prompts)
}
