//! MaxTER response curves and the area under them.
//!
//! For a technique `t` and an MDP budget `tau` (percent perplexity increase
//! over the baseline), MaxTER is the best TER reduction among checkpoints
//! whose MDP stays within the budget. Budgets that no checkpoint meets are
//! infeasible.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::CheckpointMetrics;

/// `100 * (ppl_t - ppl_b) / ppl_b`.
pub fn mdp_pct(ppl_t: f64, ppl_b: f64) -> Result<f64> {
    if ppl_b.is_nan() || ppl_b <= 0.0 {
        return Err(Error::NonPositiveBaseline(ppl_b));
    }
    Ok(100.0 * (ppl_t - ppl_b) / ppl_b)
}

/// TER reduction relative to the baseline, positive when TER went down:
/// `100 * (ter_b - ter_t) / ter_b`.
pub fn ter_drop_pct(ter_t: f64, ter_b: f64) -> Result<f64> {
    if ter_b.is_nan() || ter_b <= 0.0 {
        return Err(Error::NonPositiveBaseline(ter_b));
    }
    Ok(100.0 * (ter_b - ter_t) / ter_b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub checkpoint_index: usize,
    pub technique: String,
    pub mdp_pct: f64,
    pub ter_drop_pct: f64,
}

impl TradeoffPoint {
    /// `(ter_t - ter_b) / ter_b * 100`, negative when TER improved.
    pub fn signed_ter_change_pct(&self) -> f64 {
        -self.ter_drop_pct
    }
}

/// Pairs a technique's checkpoints with the baseline's by index.
///
/// Checkpoints where the baseline leaked nothing have no defined TER drop
/// and are skipped; the second return value counts them.
pub fn tradeoff_points(
    technique: &str,
    series: &[CheckpointMetrics],
    baseline: &[CheckpointMetrics],
) -> Result<(Vec<TradeoffPoint>, usize)> {
    let mut points = Vec::new();
    let mut skipped = 0;
    for m in series {
        let base = baseline
            .iter()
            .find(|b| b.checkpoint_index == m.checkpoint_index)
            .ok_or_else(|| {
                Error::CheckpointOrder(format!("baseline has no checkpoint {}", m.checkpoint_index))
            })?;
        if base.ter <= 0.0 {
            skipped += 1;
            continue;
        }
        points.push(TradeoffPoint {
            checkpoint_index: m.checkpoint_index,
            technique: technique.to_owned(),
            mdp_pct: mdp_pct(m.avg_ppl, base.avg_ppl)?,
            ter_drop_pct: ter_drop_pct(m.ter, base.ter)?,
        });
    }
    Ok((points, skipped))
}

/// `tau` from 0% to 100% in 0.5% steps.
pub fn default_grid() -> Vec<f64> {
    (0..=200).map(|i| f64::from(i) * 0.5).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxTerCurve {
    pub grid: Vec<f64>,
    /// `None` marks an infeasible budget.
    pub values: Vec<Option<f64>>,
}

impl MaxTerCurve {
    /// Writes `tau,value,feasible`; infeasible rows have an empty value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["tau", "value", "feasible"])?;
        for (tau, v) in self.grid.iter().zip(&self.values) {
            w.write_record([
                tau.to_string(),
                v.map(|x| x.to_string()).unwrap_or_default(),
                v.is_some().to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Evaluates MaxTER on every budget in `grid` (strictly ascending).
/// A point is admissible when `mdp_pct <= tau`.
pub fn maxter_curve(points: &[TradeoffPoint], grid: &[f64]) -> Result<MaxTerCurve> {
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidGrid("non-finite threshold".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidGrid("thresholds must be strictly ascending".into()));
    }
    let values = grid
        .iter()
        .map(|&tau| {
            points
                .iter()
                .filter(|p| p.mdp_pct <= tau)
                .map(|p| p.ter_drop_pct)
                .fold(None, |best: Option<f64>, v| Some(best.map_or(v, |b| b.max(v))))
        })
        .collect();
    Ok(MaxTerCurve {
        grid: grid.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AurcResult {
    /// Area in percent-times-percent units.
    pub area: f64,
    /// Share of grid points with a feasible value.
    pub feasible_fraction: f64,
}

/// Trapezoidal area under the curve. A grid segment contributes only when
/// both of its end points are feasible.
pub fn aurc(curve: &MaxTerCurve) -> AurcResult {
    let area = curve
        .grid
        .windows(2)
        .zip(curve.values.windows(2))
        .map(|(t, v)| match (v[0], v[1]) {
            (Some(a), Some(b)) => 0.5 * (a + b) * (t[1] - t[0]),
            _ => 0.0,
        })
        .sum();
    let feasible = curve.values.iter().filter(|v| v.is_some()).count();
    let feasible_fraction = if curve.values.is_empty() {
        0.0
    } else {
        feasible as f64 / curve.values.len() as f64
    };
    AurcResult {
        area,
        feasible_fraction,
    }
}

/// One row of the AURC comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurcRow {
    pub technique: String,
    pub dataset: String,
    pub avg_ppl: f64,
    /// `None` for the baseline, which has no curve of its own.
    pub aurc: Option<f64>,
}

/// `technique,dataset,avg_ppl,aurc`; the baseline's AURC is written as `-`.
pub fn write_aurc_csv<W: Write>(rows: &[AurcRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["technique", "dataset", "avg_ppl", "aurc"])?;
    for r in rows {
        w.write_record([
            r.technique.clone(),
            r.dataset.clone(),
            r.avg_ppl.to_string(),
            r.aurc.map_or_else(|| "-".to_owned(), |a| a.to_string()),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
