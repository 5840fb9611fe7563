use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One evaluation point. Losses are averaged over the steps since the previous row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub iteration: usize,
    pub generator_loss: f64,
    pub critic_loss: f64,
    pub reconstruction_loss: f64,
    pub prior_loss: f64,
    pub gradient_penalty: f64,
    pub validation_iou: f64,
}

const HEADER: &str = "iteration,generator_loss,critic_loss,reconstruction_loss,prior_loss,gradient_penalty,validation_iou";

/// Learning curve of one run. Wall-clock times are kept apart from the
/// values so that reruns compare equal.
#[derive(Clone, Debug, Default)]
pub struct MetricLog {
    pub rows: Vec<MetricRow>,
    /// Seconds since training started, one per row.
    pub elapsed: Vec<f64>,
}

impl PartialEq for MetricLog {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
    }
}

impl MetricLog {
    pub fn push(&mut self, row: MetricRow, elapsed: f64) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.iteration <= last.iteration {
                return Err(Error::Evaluation(format!(
                    "metric row for iteration {} after iteration {}",
                    row.iteration, last.iteration
                )));
            }
        }
        self.rows.push(row);
        self.elapsed.push(elapsed);
        Ok(())
    }

    pub fn last_iou(&self) -> Option<f64> {
        self.rows.last().map(|r| r.validation_iou)
    }

    pub fn best(&self) -> Option<&MetricRow> {
        self.rows.iter().fold(None, |best: Option<&MetricRow>, r| match best {
            Some(b) if b.validation_iou >= r.validation_iou => Some(b),
            _ => Some(r),
        })
    }

    /// First iteration from which validation IOU stays at or above
    /// `threshold` for `sustain` consecutive evaluations.
    pub fn convergence_iteration(&self, threshold: f64, sustain: usize) -> Option<usize> {
        let sustain = sustain.max(1);
        let mut run = 0;
        for (i, r) in self.rows.iter().enumerate() {
            run = if r.validation_iou >= threshold { run + 1 } else { 0 };
            if run == sustain {
                return Some(self.rows[i + 1 - sustain].iteration);
            }
        }
        None
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.iteration,
                r.generator_loss,
                r.critic_loss,
                r.reconstruction_loss,
                r.prior_loss,
                r.gradient_penalty,
                r.validation_iou
            )
            .unwrap();
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("iteration,elapsed_seconds\n");
        for (r, t) in self.rows.iter().zip(&self.elapsed) {
            writeln!(s, "{},{t:.3}", r.iteration).unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::Format("metrics CSV has an unexpected header".into()));
        }
        let mut log = Self::default();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::Format(format!("metrics CSV line {}: '{line}'", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            log.push(
                MetricRow {
                    iteration: f[0].parse().map_err(|_| bad())?,
                    generator_loss: num(1)?,
                    critic_loss: num(2)?,
                    reconstruction_loss: num(3)?,
                    prior_loss: num(4)?,
                    gradient_penalty: num(5)?,
                    validation_iou: num(6)?,
                },
                0.0,
            )?;
        }
        Ok(log)
    }

    /// Writes `metrics.csv` and `timing.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("metrics.csv"), self.to_csv())?;
        std::fs::write(dir.join("timing.csv"), self.timing_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(iteration: usize, iou: f64) -> MetricRow {
        MetricRow {
            iteration,
            generator_loss: 0.5,
            critic_loss: -1.25,
            reconstruction_loss: 0.1,
            prior_loss: 3.0,
            gradient_penalty: 0.01,
            validation_iou: iou,
        }
    }

    #[test]
    fn rows_must_increase() {
        let mut log = MetricLog::default();
        log.push(row(10, 0.5), 1.0).unwrap();
        assert!(log.push(row(10, 0.6), 2.0).is_err());
        assert_eq!(log.rows.len(), 1);
    }

    #[test]
    fn convergence_needs_a_sustained_run() {
        let mut log = MetricLog::default();
        for (i, v) in [0.5, 0.9, 0.7, 0.9, 0.92, 0.95, 0.6].into_iter().enumerate() {
            log.push(row((i + 1) * 100, v), 0.0).unwrap();
        }
        assert_eq!(log.convergence_iteration(0.85, 3), Some(400));
        assert_eq!(log.convergence_iteration(0.85, 1), Some(200));
        assert_eq!(log.convergence_iteration(0.99, 3), None);
        assert_eq!(log.best().unwrap().iteration, 600);
    }

    proptest! {
        #[test]
        fn csv_round_trip(ious in proptest::collection::vec(0.0f64..1.0, 0..20), loss in -1e3f64..1e3) {
            let mut log = MetricLog::default();
            for (i, v) in ious.iter().enumerate() {
                let mut r = row(i * 7 + 1, *v);
                r.generator_loss = loss * i as f64;
                log.push(r, i as f64).unwrap();
            }
            prop_assert_eq!(MetricLog::from_csv(&log.to_csv()).unwrap(), log);
        }
    }
}
