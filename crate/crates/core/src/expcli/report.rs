//! Summary statistics and CSV emission.
//!
//! Every CSV has a fixed header and column order.

use std::path::Path;

use crate::drl::CurvePoint;
use crate::env::MetricsRecord;
use crate::error::Result;

/// Sample mean and standard deviation (n − 1 denominator, 0 for a single sample).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        if xs.is_empty() {
            return MeanStd::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }

    /// Standard error of the mean for `n` samples.
    pub fn sem(&self, n: usize) -> f64 {
        self.std / (n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub episodes: usize,
    pub sum_delay: MeanStd,
    pub collision_rb: MeanStd,
    pub collision_prach: MeanStd,
    pub collision: MeanStd,
    pub ho_success: MeanStd,
    pub episode_return: MeanStd,
}

impl Summary {
    pub fn of(metrics: &[MetricsRecord]) -> Self {
        Summary {
            episodes: metrics.len(),
            sum_delay: MeanStd::of(metrics.iter().map(|m| m.sum_delay)),
            collision_rb: MeanStd::of(metrics.iter().map(|m| m.sum_collision_rb)),
            collision_prach: MeanStd::of(metrics.iter().map(|m| m.sum_collision_prach)),
            collision: MeanStd::of(metrics.iter().map(|m| m.sum_collision())),
            ho_success: MeanStd::of(metrics.iter().map(|m| m.ho_success)),
            episode_return: MeanStd::of(metrics.iter().map(|m| m.episode_return)),
        }
    }
}

/// One row of a summary or sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub agent: String,
    pub parameter: Option<String>,
    pub value: Option<f64>,
    pub label: String,
    pub summary: Summary,
    pub episodes_to_threshold: Option<usize>,
}

pub const SUMMARY_HEADER: [&str; 18] = [
    "agent",
    "parameter",
    "value",
    "label",
    "episodes",
    "sum_delay_mean",
    "sum_delay_std",
    "collision_rb_mean",
    "collision_rb_std",
    "collision_prach_mean",
    "collision_prach_std",
    "collision_mean",
    "collision_std",
    "ho_success_mean",
    "ho_success_std",
    "return_mean",
    "return_std",
    "episodes_to_threshold",
];

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        let s = &r.summary;
        let mut rec = vec![
            r.agent.clone(),
            r.parameter.clone().unwrap_or_default(),
            r.value.map(|v| v.to_string()).unwrap_or_default(),
            r.label.clone(),
            s.episodes.to_string(),
        ];
        for ms in [s.sum_delay, s.collision_rb, s.collision_prach, s.collision, s.ho_success, s.episode_return] {
            rec.push(ms.mean.to_string());
            rec.push(ms.std.to_string());
        }
        rec.push(r.episodes_to_threshold.map(|e| e.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-slot values of one evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode: usize,
    /// 1-based slot index.
    pub slot: usize,
    pub delay: f64,
    pub collision_rb: Vec<f64>,
    pub collision_prach: f64,
    pub reward: f64,
    pub accessed_count: usize,
}

pub fn write_trace(path: &Path, num_targets: usize, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["episode".to_string(), "n".into(), "D".into()];
    header.extend((1..=num_targets).map(|k| format!("C_R_{k}")));
    header.extend(["C_P".to_string(), "reward".into(), "accessed_count".into()]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.episode.to_string(), r.slot.to_string(), r.delay.to_string()];
        rec.extend(r.collision_rb.iter().map(|c| c.to_string()));
        rec.extend([r.collision_prach.to_string(), r.reward.to_string(), r.accessed_count.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "mean_return", "sum_delay", "sum_collision"])?;
    for p in curve {
        w.write_record([
            p.episode.to_string(),
            p.mean_return.to_string(),
            p.sum_delay.to_string(),
            p.sum_collision.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Learning curves of several runs in long format, keyed by mask name.
pub fn write_curves_long(path: &Path, curves: &[(String, Vec<CurvePoint>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["mask", "episode", "mean_return", "sum_delay", "sum_collision"])?;
    for (name, curve) in curves {
        for p in curve {
            w.write_record([
                name.clone(),
                p.episode.to_string(),
                p.mean_return.to_string(),
                p.sum_delay.to_string(),
                p.sum_collision.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_std() {
        let m = MeanStd::of([2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m.mean, 5.0);
        assert_relative_eq!(m.std, (32.0f64 / 7.0).sqrt(), epsilon = 1e-12);
        assert_eq!(MeanStd::of([3.0]).std, 0.0);
        assert_eq!(MeanStd::of([]), MeanStd::default());
    }

    #[test]
    fn summary_csv_has_fixed_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let row = SummaryRow {
            agent: "random".into(),
            parameter: None,
            value: None,
            label: String::new(),
            summary: Summary::of(&[MetricsRecord::default(); 3]),
            episodes_to_threshold: None,
        };
        write_summary(&path, &[row]).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), SUMMARY_HEADER);
        let rec = r.records().next().unwrap().unwrap();
        assert_eq!(rec.len(), SUMMARY_HEADER.len());
        assert_eq!(&rec[4], "3");
    }
}
