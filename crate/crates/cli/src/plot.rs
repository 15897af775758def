use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};

use facetouch::dataset::load_trials;
use facetouch::signal::bin_for_viz;
use facetouch::{Label, TrialRecord};

const AXES: [&str; 3] = ["x", "y", "z"];

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn write_class(path: &Path, trials: &[&TrialRecord], n_bins: usize) -> Result<()> {
    // pooled[axis][bin] collects that bin's samples across all trials.
    let mut pooled = vec![vec![Vec::new(); n_bins]; 3];
    let mut spans = vec![(0.0, 0.0); n_bins];
    for trial in trials {
        for (b, bin) in bin_for_viz(&trial.window, n_bins)?.into_iter().enumerate() {
            spans[b] = (bin.t_start, bin.t_end);
            for (axis, values) in pooled.iter_mut().enumerate() {
                values[b].extend_from_slice(bin.axis(axis));
            }
        }
    }
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    writeln!(out, "axis,bin,t_start,t_end,count,min,q1,median,q3,max,mean")?;
    for (axis, bins) in pooled.iter_mut().enumerate() {
        for (b, values) in bins.iter_mut().enumerate() {
            values.sort_by(f64::total_cmp);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                AXES[axis],
                b,
                spans[b].0,
                spans[b].1,
                values.len(),
                values[0],
                quantile(values, 0.25),
                quantile(values, 0.5),
                quantile(values, 0.75),
                values[values.len() - 1],
                mean
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn plot_bins(trials_path: &Path, out: &Path, n_bins: usize) -> Result<()> {
    let trials = load_trials(trials_path).with_context(|| format!("reading {}", trials_path.display()))?;
    if trials.is_empty() {
        bail!("{} holds no trials", trials_path.display());
    }
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for (label, file) in [
        (Label::Positive, "bins_touch.csv"),
        (Label::Negative, "bins_no_touch.csv"),
    ] {
        let class: Vec<&TrialRecord> = trials.iter().filter(|t| t.label() == label).collect();
        if class.is_empty() {
            bail!("{} has no {file} trials", trials_path.display());
        }
        write_class(&out.join(file), &class, n_bins)?;
    }
    Ok(())
}
