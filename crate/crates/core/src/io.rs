//! CSV and JSON renderings of trajectories and field grids.
//!
//! Numbers use Rust's shortest round-trip formatting, `,` separators and
//! `\n` line endings, so identical runs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bloch::FieldGrid;
use crate::error::{Error, Result};
use crate::integrator::{Trajectory, TrajectoryStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::InvalidConfig(format!(
                "unknown format '{s}' (expected csv or json)"
            ))),
        }
    }
}

fn status_line(status: &TrajectoryStatus) -> String {
    match status {
        TrajectoryStatus::Completed => "completed".to_string(),
        TrajectoryStatus::Truncated { reason, at } => format!("truncated at t={at}: {reason}"),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| x.to_string())
}

/// Column names `t, q1.., p1.., H, phi_1..phi_N`.
pub fn trajectory_header(levels: usize, constraints: usize) -> Vec<String> {
    let m = levels - 1;
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=m).map(|i| format!("q{i}")));
    cols.extend((1..=m).map(|i| format!("p{i}")));
    cols.push("H".into());
    cols.extend((1..=constraints).map(|a| format!("phi_{a}")));
    cols
}

/// Trajectory as CSV, preceded by `# config:` and `# status:` comment lines.
pub fn trajectory_csv(traj: &Trajectory, config: &Value) -> String {
    let levels = traj.points[0].levels();
    let n_constraints = traj.constraint_values.first().map_or(0, Vec::len);
    let mut out = String::new();
    let _ = writeln!(out, "# config: {config}");
    let _ = writeln!(out, "# status: {}", status_line(&traj.status));
    out.push_str(&trajectory_header(levels, n_constraints).join(","));
    out.push('\n');
    for k in 0..traj.len() {
        let x = &traj.points[k];
        let mut row: Vec<String> = Vec::with_capacity(2 * levels + n_constraints);
        row.push(traj.times[k].to_string());
        row.extend(x.q().iter().chain(x.p()).map(f64::to_string));
        row.push(traj.energies[k].to_string());
        row.extend(traj.constraint_values[k].iter().map(f64::to_string));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn trajectory_json(traj: &Trajectory, config: &Value) -> Result<String> {
    let doc = json!({
        "config": config,
        "columns": trajectory_header(traj.points[0].levels(), traj.constraint_values.first().map_or(0, Vec::len)),
        "trajectory": traj,
    });
    serde_json::to_string_pretty(&doc)
        .map(|s| s + "\n")
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize trajectory: {e}")))
}

/// Field grid as CSV `theta1,phi1,theta1_dot,phi1_dot,flag`; missing values
/// are written as `NaN`.
pub fn field_csv(grid: &FieldGrid, config: &Value) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config: {config}");
    out.push_str("theta1,phi1,theta1_dot,phi1_dot,flag\n");
    for s in &grid.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.theta1,
            s.phi1,
            opt(s.theta1_dot),
            opt(s.phi1_dot),
            s.flag.as_str()
        );
    }
    out
}

pub fn field_json(grid: &FieldGrid, config: &Value) -> Result<String> {
    serde_json::to_string_pretty(&json!({ "config": config, "grid": grid }))
        .map(|s| s + "\n")
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize field grid: {e}")))
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{field_grid, FixedAngles};
    use crate::integrator::{integrate, IntegratorConfig};
    use crate::models::{two_spin_product_constraints, ModelId};
    use crate::phase_space::{EnergySpectrum, PhasePoint};

    fn short_run() -> Trajectory {
        let spec = EnergySpectrum::from_frequencies(vec![0.0, 0.5, -2.5]).unwrap();
        let x0 = PhasePoint::new(vec![0.3, 0.1, 0.2], vec![0.25; 3]).unwrap();
        let cfg = IntegratorConfig {
            t_end: 0.02,
            dt: 0.01,
            ..Default::default()
        };
        integrate(&two_spin_product_constraints(), &spec, &x0, &cfg).unwrap()
    }

    #[test]
    fn trajectory_csv_layout() {
        let csv = trajectory_csv(&short_run(), &json!({"model": "two-spin-product"}));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], r#"# config: {"model":"two-spin-product"}"#);
        assert_eq!(lines[1], "# status: completed");
        assert_eq!(lines[2], "t,q1,q2,q3,p1,p2,p3,H,phi_1,phi_2");
        assert_eq!(lines.len(), 6);
        assert!(lines[3].starts_with("0,0.3,0.1,0.2,0.25,0.25,0.25,"));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn trajectory_json_round_trips() {
        let traj = short_run();
        let text = trajectory_json(&traj, &json!({})).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        let back: Trajectory = serde_json::from_value(v["trajectory"].clone()).unwrap();
        assert_eq!(back, traj);
        assert_eq!(v["columns"][0], "t");
    }

    #[test]
    fn field_csv_marks_poles() {
        let spec = EnergySpectrum::from_frequencies(vec![0.0, 0.5, -2.5]).unwrap();
        let fixed = FixedAngles {
            theta2: 1.0,
            phi2: Some(0.5),
        };
        let grid = field_grid(ModelId::TwoSpinDisentangled, &spec, fixed, (3, 2)).unwrap();
        let csv = field_csv(&grid, &json!(null));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "theta1,phi1,theta1_dot,phi1_dot,flag");
        assert!(lines[2].ends_with(",NaN,pole"));
        assert!(lines[4].ends_with(",ok"));
        assert_eq!(lines.len(), 8);
        let js: Value = serde_json::from_str(&field_json(&grid, &json!(null)).unwrap()).unwrap();
        assert_eq!(js["grid"]["samples"][0]["flag"], "pole");
    }

    #[test]
    fn format_parsing() {
        assert_eq!("CSV".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
        assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
