//! Run configuration: JSON file values overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use qdirac::bloch::FixedAngles;
use qdirac::integrator::{IntegratorConfig, Projection, Scheme};
use qdirac::io::OutputFormat;
use qdirac::models::ModelId;
use qdirac::{EnergySpectrum, PhasePoint};
use serde::{Deserialize, Serialize};

/// Everything a run can be configured with. Every field is optional so a
/// config file and the flags can each supply part of it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<String>,
    pub energies: Option<Vec<f64>>,
    pub omega: Option<Vec<f64>>,
    pub q0: Option<Vec<f64>>,
    pub p0: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub tol: Option<f64>,
    pub scheme: Option<Scheme>,
    pub projection: Option<Projection>,
    pub projection_tol: Option<f64>,
    pub drift_tol: Option<f64>,
    pub singularity_floor: Option<f64>,
    pub theta2: Option<f64>,
    pub phi2: Option<f64>,
    pub resolution: Option<[usize; 2]>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: RunConfig) -> Self {
        overlay!(
            self,
            top,
            model,
            energies,
            omega,
            q0,
            p0,
            t_end,
            dt,
            tol,
            scheme,
            projection,
            projection_tol,
            drift_tol,
            singularity_floor,
            theta2,
            phi2,
            resolution,
            out,
            format
        );
        self
    }

    pub fn model(&self) -> Result<ModelId, String> {
        let name = self.model.as_deref().ok_or("no model given (use --model)")?;
        name.parse().map_err(|e: qdirac::Error| e.to_string())
    }

    pub fn spectrum(&self) -> Result<EnergySpectrum, String> {
        let spec = match (&self.energies, &self.omega) {
            (Some(e), None) => EnergySpectrum::from_levels(e.clone()),
            (None, Some(w)) => EnergySpectrum::from_frequencies(w.clone()),
            (Some(_), Some(_)) => return Err("give either --energies or --omega, not both".into()),
            (None, None) => return Err("no spectrum given (use --energies or --omega)".into()),
        };
        spec.map_err(|e| e.to_string())
    }

    pub fn start_point(&self) -> Result<PhasePoint, String> {
        let q = self.q0.clone().ok_or("no initial angles given (use --q0)")?;
        let p = self.p0.clone().ok_or("no initial actions given (use --p0)")?;
        PhasePoint::new(q, p).map_err(|e| format!("bad initial point: {e}"))
    }

    pub fn integrator(&self) -> Result<IntegratorConfig, String> {
        let d = IntegratorConfig::default();
        let cfg = IntegratorConfig {
            scheme: self.scheme.unwrap_or(d.scheme),
            dt: self.dt.unwrap_or(d.dt),
            tol: self.tol.unwrap_or(d.tol),
            t_end: self.t_end.unwrap_or(d.t_end),
            projection: self.projection.unwrap_or(d.projection),
            projection_tol: self.projection_tol.unwrap_or(d.projection_tol),
            drift_tol: self.drift_tol.unwrap_or(d.drift_tol),
            singularity_floor: self.singularity_floor.unwrap_or(d.singularity_floor),
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn fixed_angles(&self) -> Result<FixedAngles, String> {
        let theta2 = self.theta2.ok_or("no fixed theta2 given (use --fix theta2=...)")?;
        Ok(FixedAngles {
            theta2,
            phi2: self.phi2,
        })
    }

    pub fn resolution(&self) -> (usize, usize) {
        let [r, c] = self.resolution.unwrap_or([32, 64]);
        (r, c)
    }

    pub fn format(&self) -> OutputFormat {
        self.format.unwrap_or_default()
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect()
}

/// `theta2=<rad>[,phi2=<rad>]`.
pub fn parse_fix(s: &str) -> Result<(Option<f64>, Option<f64>), String> {
    let mut theta2 = None;
    let mut phi2 = None;
    for part in s.split(',') {
        let (key, val) = part
            .split_once('=')
            .ok_or_else(|| format!("'{part}' is not of the form name=value"))?;
        let v: f64 = val.trim().parse().map_err(|_| format!("'{val}' is not a number"))?;
        match key.trim() {
            "theta2" => theta2 = Some(v),
            "phi2" => phi2 = Some(v),
            other => return Err(format!("unknown fixed angle '{other}' (expected theta2 or phi2)")),
        }
    }
    Ok((theta2, phi2))
}

/// `<rows>x<cols>`.
pub fn parse_resolution(s: &str) -> Result<[usize; 2], String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("resolution '{s}' is not of the form RxC"))?;
    let r = r.trim().parse().map_err(|_| format!("bad row count '{r}'"))?;
    let c = c.trim().parse().map_err(|_| format!("bad column count '{c}'"))?;
    Ok([r, c])
}
