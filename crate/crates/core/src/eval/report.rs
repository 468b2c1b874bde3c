//! Per-grasp metric reports and batch aggregation (CSV + JSON), columns
//! mirroring the quality/stability + semantic-alignment layout.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraspReport {
    pub solid_intersection_volume_cm3: f64,
    pub penetration_depth_cm: f64,
    pub simulation_displacement_cm: f64,
    pub sim_escaped: bool,
    pub part_contact: bool,
    pub part_contact_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchReport {
    pub entries: Vec<(String, GraspReport)>,
}

impl BatchReport {
    pub fn mean_volume(&self) -> f64 {
        mean(self.entries.iter().map(|(_, r)| r.solid_intersection_volume_cm3))
    }
    pub fn mean_penetration(&self) -> f64 {
        mean(self.entries.iter().map(|(_, r)| r.penetration_depth_cm))
    }
    pub fn mean_displacement(&self) -> f64 {
        mean(self.entries.iter().map(|(_, r)| r.simulation_displacement_cm))
    }
    pub fn part_accuracy(&self) -> f64 {
        mean(
            self.entries
                .iter()
                .map(|(_, r)| if r.part_contact { 1.0 } else { 0.0 }),
        )
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn write_batch_csv(report: &BatchReport, path: &Path) -> Result<(), EvalError> {
    let mut out = String::new();
    writeln!(
        out,
        "id,solid_intersection_volume_cm3,penetration_depth_cm,simulation_displacement_cm,sim_escaped,part_contact,part_contact_fraction"
    )
    .unwrap();
    for (id, r) in &report.entries {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            id,
            r.solid_intersection_volume_cm3,
            r.penetration_depth_cm,
            r.simulation_displacement_cm,
            r.sim_escaped,
            r.part_contact,
            r.part_contact_fraction
        )
        .unwrap();
    }
    writeln!(
        out,
        "mean,{},{},{},,{},",
        report.mean_volume(),
        report.mean_penetration(),
        report.mean_displacement(),
        report.part_accuracy()
    )
    .unwrap();
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_batch_json(report: &BatchReport, path: &Path) -> Result<(), EvalError> {
    let agg = serde_json::json!({
        "per_grasp": report.entries.iter().map(|(id, r)| {
            serde_json::json!({"id": id, "report": r})
        }).collect::<Vec<_>>(),
        "aggregate": {
            "mean_solid_intersection_volume_cm3": report.mean_volume(),
            "mean_penetration_depth_cm": report.mean_penetration(),
            "mean_simulation_displacement_cm": report.mean_displacement(),
            "part_accuracy": report.part_accuracy(),
        }
    });
    std::fs::write(path, serde_json::to_string_pretty(&agg).unwrap())?;
    Ok(())
}
