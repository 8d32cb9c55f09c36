//! Canned data sets at the reference parameters: one undamped mode at
//! `2 pi` rad/s and a 240 mm/s velocity limit.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use clap::ValueEnum;
use swayopt::analysis;
use swayopt::closed_form;
use swayopt::designer::{self, DesignRequest, DesignResult};
use swayopt::io as sio;
use swayopt::plant::{ModeSpec, PlantSpec};
use swayopt::tdfilter::{ComplexWindow, TimeDelayFilter};
use swayopt::{Error, Plant};

use crate::{emit, grid_points, CliResult, Failure};

const OMEGA: f64 = 2.0 * PI;
const V_MAX: f64 = 240.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Zone solutions and structure transitions, undamped.
    Fig4,
    /// Robust designs, undamped.
    Fig5,
    /// Frequency sweeps of both designs over +-30 %.
    Fig6,
    /// Maneuver times and curvatures of both designs.
    Fig7,
    /// Filter zero loci of both designs.
    Fig8,
    /// Filter zeros of both designs at one displacement.
    Fig9,
    /// Switch structure of the damped designs and their transitions.
    Fig10,
}

fn plant(zeta: f64, x_f: f64) -> CliResult<Plant> {
    Ok(PlantSpec::single(ModeSpec::new(OMEGA, zeta)?, V_MAX, x_f)?)
}

fn designs(zeta: f64, robust: bool, xs: &[f64]) -> CliResult<Vec<(f64, DesignResult)>> {
    let req = DesignRequest::new(plant(zeta, xs[0])?, robust);
    let out = designer::design_sweep(&req, xs)
        .into_iter()
        .collect::<swayopt::Result<Vec<_>>>()?;
    Ok(xs.iter().copied().zip(out).collect())
}

fn file(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut dyn std::io::Write) -> swayopt::Result<()>,
) -> CliResult<()> {
    let path = dir.join(name);
    emit(Some(&path), f)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn window() -> CliResult<ComplexWindow<f64>> {
    Ok(ComplexWindow::new(
        -0.5 * OMEGA,
        0.5 * OMEGA,
        0.1 * OMEGA,
        2.0 * OMEGA,
    )?)
}

pub fn run(fig: Figure, xf: Option<f64>, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Output(format!("{}: {e}", dir.display())))?;
    let displacements = grid_points(0.0, 700.0, 200);
    match fig {
        Figure::Fig4 => {
            let xs = grid_points(0.0, 700.0, 700);
            let rows = closed_form::zone_sweep(&xs, OMEGA, V_MAX)?;
            file(dir, "fig4_zones.csv", |w| sio::write_zones(w, &rows))?;
            let tr = analysis::find_transitions(&plant(0.0, 100.0)?, (0.0, 700.0))?;
            file(dir, "fig4_transitions.csv", |w| {
                sio::write_transitions(w, &tr)
            })
        }
        Figure::Fig5 => {
            let rows = designs(0.0, true, &displacements)?;
            file(dir, "fig5_designs.csv", |w| sio::write_designs(w, &rows))
        }
        Figure::Fig6 => {
            let x_f = xf.unwrap_or(50.0);
            let p = plant(0.0, x_f)?;
            for robust in [false, true] {
                let d = designer::design(&DesignRequest::new(p.clone(), robust))?;
                let points = analysis::robustness_sweep(&d.profile, &p, (0.7, 1.3), 121)?;
                let name = if robust {
                    "fig6_sweep_robust.csv"
                } else {
                    "fig6_sweep_nonrobust.csv"
                };
                file(dir, name, |w| sio::write_sweep(w, &points))?;
            }
            Ok(())
        }
        Figure::Fig7 => {
            let mut curv = Vec::new();
            for robust in [false, true] {
                let rows = designs(0.0, robust, &displacements)?;
                for (x, r) in &rows {
                    let k = analysis::curvature_at_nominal(&r.profile, &plant(0.0, *x)?)?;
                    curv.push((*x, robust, r.t_f(), k[0]));
                }
                let name = if robust {
                    "fig7_designs_robust.csv"
                } else {
                    "fig7_designs_nonrobust.csv"
                };
                file(dir, name, |w| sio::write_designs(w, &rows))?;
            }
            file(dir, "fig7_curvature.csv", |w| {
                writeln!(w, "x_f_mm,robust_flag,t_f_s,d2V_domega2").map_err(io_err)?;
                for (x, robust, t_f, k) in &curv {
                    writeln!(w, "{x},{},{t_f},{k}", u8::from(*robust)).map_err(io_err)?;
                }
                Ok(())
            })
        }
        Figure::Fig8 => {
            let points =
                analysis::loci_sweep(&plant(0.0, 100.0)?, (0.0, 600.0), &window()?, 121, (12, 32))?;
            for robust in [false, true] {
                let chosen: Vec<_> = points
                    .iter()
                    .filter(|p| p.robust == robust)
                    .cloned()
                    .collect();
                let name = if robust {
                    "fig8_loci_robust.csv"
                } else {
                    "fig8_loci_nonrobust.csv"
                };
                file(dir, name, |w| sio::write_loci(w, &chosen))?;
            }
            Ok(())
        }
        Figure::Fig9 => {
            let x_f = xf.unwrap_or(500.0);
            for robust in [false, true] {
                let d = designer::design(&DesignRequest::new(plant(0.0, x_f)?, robust))?;
                let zeros =
                    TimeDelayFilter::from_profile(&d.profile)?.find_zeros(&window()?, (12, 32))?;
                let point = analysis::LociPoint {
                    x_f,
                    robust,
                    n_switches: d.n_switches,
                    zeros,
                };
                let name = if robust {
                    "fig9_zeros_robust.csv"
                } else {
                    "fig9_zeros_nonrobust.csv"
                };
                file(dir, name, |w| {
                    sio::write_loci(w, std::slice::from_ref(&point))
                })?;
            }
            Ok(())
        }
        Figure::Fig10 => {
            let rows = designs(0.01, false, &displacements)?;
            file(dir, "fig10_designs.csv", |w| sio::write_designs(w, &rows))?;
            let tr = analysis::find_transitions(&plant(0.01, 100.0)?, (0.0, 700.0))?;
            file(dir, "fig10_transitions.csv", |w| {
                sio::write_transitions(w, &tr)
            })
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Contract(e.to_string())
}
