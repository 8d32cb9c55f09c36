//! JSON documents for models and profiles, and the CSV tables written by the
//! command-line tool.
//!
//! Units are fixed: rad/s, mm, s. Model files may carry frequencies in Hz,
//! converted on ingestion when the caller asks for it.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::{LociPoint, SweepPoint, TransitionPoint};
use crate::closed_form::ZoneRow;
use crate::designer::DesignResult;
use crate::error::{Error, Result};
use crate::plant::{ModeSpec, PlantSpec, Trajectory};
use crate::profile::BangOffBangProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeJson {
    pub omega_n_rad_s: f64,
    #[serde(default)]
    pub zeta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantJson {
    pub modes: Vec<ModeJson>,
    pub v_max_mm_s: f64,
    pub x_f_mm: f64,
}

impl PlantJson {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Domain(format!("model JSON: {e}")))
    }

    /// Validated plant; with `hz` the frequency fields are read as Hz.
    pub fn to_plant(&self, hz: bool) -> Result<PlantSpec<f64>> {
        let modes = self
            .modes
            .iter()
            .map(|m| {
                if hz {
                    ModeSpec::from_hz(m.omega_n_rad_s, m.zeta)
                } else {
                    ModeSpec::new(m.omega_n_rad_s, m.zeta)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        PlantSpec::new(modes, self.v_max_mm_s, self.x_f_mm)
    }

    pub fn from_plant(plant: &PlantSpec<f64>) -> Self {
        Self {
            modes: plant
                .modes()
                .iter()
                .map(|m| ModeJson {
                    omega_n_rad_s: m.omega_n(),
                    zeta: m.zeta(),
                })
                .collect(),
            v_max_mm_s: plant.v_max(),
            x_f_mm: plant.x_f(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileJson {
    pub switch_times_s: Vec<f64>,
    pub t_f_s: f64,
    pub v_max_mm_s: f64,
}

impl ProfileJson {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Domain(format!("profile JSON: {e}")))
    }

    pub fn to_profile(&self) -> Result<BangOffBangProfile<f64>> {
        BangOffBangProfile::new(self.switch_times_s.clone(), self.t_f_s, self.v_max_mm_s)
    }

    pub fn from_profile(p: &BangOffBangProfile<f64>) -> Self {
        Self {
            switch_times_s: p.switch_times().to_vec(),
            t_f_s: p.t_f(),
            v_max_mm_s: p.v_max(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Contract(format!("csv output: {e}"))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().flexible(false).from_writer(w)
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Columns `t_s, x_mode1_mm, v_mode1_mm_s, ..., xi_mm` and, for augmented
/// runs, `dx_mode1_domega, dv_mode1_domega, ...`.
pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory<f64>) -> Result<()> {
    let first = traj
        .samples
        .first()
        .ok_or_else(|| Error::Contract("empty trajectory".into()))?;
    let m = first.modes.len();
    let augmented = first.sensitivity.is_some();
    let mut header = vec!["t_s".to_string()];
    for k in 1..=m {
        header.push(format!("x_mode{k}_mm"));
        header.push(format!("v_mode{k}_mm_s"));
    }
    header.push("xi_mm".into());
    if augmented {
        for k in 1..=m {
            header.push(format!("dx_mode{k}_domega"));
            header.push(format!("dv_mode{k}_domega"));
        }
    }
    let mut out = writer(w);
    out.write_record(&header).map_err(csv_err)?;
    for s in &traj.samples {
        let mut row = vec![fmt(s.t)];
        row.extend(s.to_vec().into_iter().map(fmt));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Contract(e.to_string()))
}

/// Columns `x_f_mm, re_rad_s, im_rad_s, multiplicity_flag` (1 simple, 2
/// double or higher).
pub fn write_loci<W: Write>(w: W, points: &[LociPoint]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["x_f_mm", "re_rad_s", "im_rad_s", "multiplicity_flag"])
        .map_err(csv_err)?;
    for p in points {
        for z in &p.zeros {
            out.write_record([
                fmt(p.x_f),
                fmt(z.s.re),
                fmt(z.s.im),
                z.multiplicity().to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| Error::Contract(e.to_string()))
}

/// Columns `x_f_mm, n, T1_s, T2_s, t_f_s, switch_1_s, ...`, padded to the
/// longest row.
pub fn write_zones<W: Write>(w: W, rows: &[ZoneRow]) -> Result<()> {
    let width = rows
        .iter()
        .map(|r| r.profile.n_switches())
        .max()
        .unwrap_or(0);
    let mut header: Vec<String> = ["x_f_mm", "n", "T1_s", "T2_s", "t_f_s"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=width).map(|i| format!("switch_{i}_s")));
    let mut out = writer(w);
    out.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut row = vec![
            fmt(r.x_f),
            r.solution.n.to_string(),
            fmt(r.solution.t1),
            fmt(r.solution.t2),
            fmt(r.solution.t_f()),
        ];
        row.extend(r.profile.switch_times().iter().map(|&t| fmt(t)));
        row.resize(header.len(), String::new());
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Contract(e.to_string()))
}

/// Columns `x_f_mm, robust_flag, N, T1_s, ..., TK_s, tf_s` with `K` the
/// largest switch count in the table.
pub fn write_designs<W: Write>(w: W, rows: &[(f64, DesignResult)]) -> Result<()> {
    let width = rows.iter().map(|r| r.1.n_switches).max().unwrap_or(0);
    let mut header: Vec<String> = vec!["x_f_mm".into(), "robust_flag".into(), "N".into()];
    header.extend((1..=width).map(|i| format!("T{i}_s")));
    header.push("tf_s".into());
    let mut out = writer(w);
    out.write_record(&header).map_err(csv_err)?;
    for (x, r) in rows {
        let mut row = vec![
            fmt(*x),
            u8::from(r.robust).to_string(),
            r.n_switches.to_string(),
        ];
        row.extend(r.profile.switch_times().iter().map(|&t| fmt(t)));
        row.resize(header.len() - 1, String::new());
        row.push(fmt(r.t_f()));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Contract(e.to_string()))
}

/// Columns `omega_ratio, V_mm2_s2` and, for several modes, one
/// `V_mode{k}_mm2_s2` column per mode.
pub fn write_sweep<W: Write>(w: W, points: &[SweepPoint]) -> Result<()> {
    let m = points.first().map_or(0, |p| p.per_mode.len());
    let mut header = vec!["omega_ratio".to_string(), "V_mm2_s2".to_string()];
    if m > 1 {
        header.extend((1..=m).map(|k| format!("V_mode{k}_mm2_s2")));
    }
    let mut out = writer(w);
    out.write_record(&header).map_err(csv_err)?;
    for p in points {
        let mut row = vec![fmt(p.omega_ratio), fmt(p.v_tf)];
        if m > 1 {
            row.extend(p.per_mode.iter().map(|&v| fmt(v)));
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Contract(e.to_string()))
}

/// Columns `x_f_mm, t_cr_s, kind`.
pub fn write_transitions<W: Write>(w: W, points: &[TransitionPoint]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["x_f_mm", "t_cr_s", "kind"])
        .map_err(csv_err)?;
    for p in points {
        out.write_record([fmt(p.x_f), fmt(p.t_cr), p.kind.as_str().to_string()])
            .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Contract(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form;
    use std::f64::consts::PI;

    #[test]
    fn plant_json_round_trip() {
        let text =
            r#"{"modes":[{"omega_n_rad_s":6.25,"zeta":0.0}],"v_max_mm_s":240.0,"x_f_mm":100.0}"#;
        let doc = PlantJson::parse(text).unwrap();
        let plant = doc.to_plant(false).unwrap();
        assert_eq!(plant.modes()[0].omega_n(), 6.25);
        assert_eq!(PlantJson::from_plant(&plant), doc);
        let hz = doc.to_plant(true).unwrap();
        assert!((hz.modes()[0].omega_n() - 2.0 * PI * 6.25).abs() < 1e-12);
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(PlantJson::parse(r#"{"modes":[],"v_max_mm_s":1.0}"#).is_err());
        assert!(
            PlantJson::parse(r#"{"modes":[],"v_max_mm_s":1.0,"x_f_mm":1.0,"extra":1}"#).is_err()
        );
        let doc =
            PlantJson::parse(r#"{"modes":[{"omega_n_rad_s":-1.0}],"v_max_mm_s":1.0,"x_f_mm":1.0}"#)
                .unwrap();
        assert!(doc.to_plant(false).is_err());
    }

    #[test]
    fn profile_json_round_trip() {
        let p = BangOffBangProfile::new(vec![0.2, 0.5], 0.7, 240.0).unwrap();
        let doc = ProfileJson::from_profile(&p);
        let back = ProfileJson::parse(&doc.to_json())
            .unwrap()
            .to_profile()
            .unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn zone_table_pads_switch_columns() {
        let rows = closed_form::zone_sweep(&[100.0, 240.0, 400.0], 2.0 * PI, 240.0).unwrap();
        let mut buf = Vec::new();
        write_zones(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "x_f_mm,n,T1_s,T2_s,t_f_s,switch_1_s,switch_2_s,switch_3_s,switch_4_s"
        );
        assert!(lines[2].starts_with("240,1,0,0.5,1,,"));
        assert_eq!(
            lines
                .iter()
                .map(|l| l.split(',').count())
                .collect::<Vec<_>>(),
            vec![9; 4]
        );
    }
}
