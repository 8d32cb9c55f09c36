use std::f64::consts::PI;

use swayopt::analysis::{self, TransitionKind};
use swayopt::designer::{self, DesignRequest};
use swayopt::tdfilter::ComplexWindow;
use swayopt::{Mode, Plant};

const W: f64 = 2.0 * PI;

fn plant(zeta: f64, x_f: f64) -> Plant {
    Plant::single(Mode::new(W, zeta).unwrap(), 240.0, x_f).unwrap()
}

#[test]
fn costate_closed_form_matches_the_certificate() {
    let two = Plant::new(vec![Mode::from_hz(0.6832, 0.0026).unwrap(), Mode::from_hz(6.159, 0.026065).unwrap()], 240.0, 120.0)
        .unwrap();
    for p in [plant(0.0, 300.0), plant(0.01, 450.0), plant(0.05, 120.0), two] {
        let r = designer::design(&DesignRequest::new(p.clone(), false)).unwrap();
        let cert = designer::verify_pmp(&r, &p);
        assert!(cert.passed);
        for i in 0..=50 {
            let t = r.t_f() * i as f64 / 50.0;
            let (value, rate) = analysis::switching_function(&cert.lambda0, &p, t).unwrap();
            let (l3, dl3) = cert.switching.lambda3_with_rate(t);
            assert!((value - l3).abs() <= 1e-9 * l3.abs().max(1.0 / 240.0), "t = {t}: {value} vs {l3}");
            assert!((rate - dl3).abs() <= 1e-9 * dl3.abs().max(1.0), "t = {t}: {rate} vs {dl3}");
        }
    }
}

#[test]
fn costate_dimension_is_checked() {
    assert!(analysis::switching_function(&[1.0, 2.0], &plant(0.0, 1.0), 0.1).is_err());
}

#[test]
fn curvature_matches_the_stencil() {
    for (zeta, x) in [(0.0, 50.0), (0.0, 400.0), (0.01, 200.0), (0.026, 600.0)] {
        let p = plant(zeta, x);
        let r = designer::design(&DesignRequest::new(p.clone(), false)).unwrap();
        let k = analysis::curvature_at_nominal(&r.profile, &p).unwrap()[0];
        let fd = analysis::curvature_stencil(&r.profile, &p, 0, 1e-3).unwrap();
        assert!((k - fd).abs() <= 1e-3 * k.abs(), "x_f = {x}: {k} vs {fd}");
    }
}

#[test]
fn curvature_needs_a_nulled_design() {
    let p = plant(0.0, 100.0);
    let r = designer::design(&DesignRequest::new(p.with_x_f(120.0).unwrap(), false)).unwrap();
    let off = swayopt::Profile::new(r.profile.switch_times().to_vec(), r.t_f() + 0.1, 240.0).unwrap();
    assert!(analysis::curvature_at_nominal(&off, &p).is_err());
}

#[test]
fn robust_sweep_is_flat_near_nominal() {
    let p = plant(0.0, 150.0);
    let plain = designer::design(&DesignRequest::new(p.clone(), false)).unwrap();
    let robust = designer::design(&DesignRequest::new(p.clone(), true)).unwrap();
    let a = analysis::robustness_sweep(&plain.profile, &p, (0.9, 1.1), 41).unwrap();
    let b = analysis::robustness_sweep(&robust.profile, &p, (0.9, 1.1), 41).unwrap();
    assert_eq!(a.len(), 41);
    assert!((a[20].omega_ratio - 1.0).abs() < 1e-12);
    assert!(a[20].v_tf < 1e-20 && b[20].v_tf < 1e-20);
    // Quadratic against quartic growth away from the nominal frequency.
    let (a1, a2) = (a[25].v_tf, a[30].v_tf);
    let (b1, b2) = (b[25].v_tf, b[30].v_tf);
    assert!((a2 / a1 - 4.0).abs() < 0.5, "{}", a2 / a1);
    assert!((b2 / b1 - 16.0).abs() < 3.0, "{}", b2 / b1);
}

#[test]
fn damped_transitions_alternate_with_the_structure() {
    let p = plant(0.01, 100.0);
    let found = analysis::find_transitions(&p, (0.0, 700.0)).unwrap();
    assert!(found.len() >= 6);
    for t in &found {
        let r = designer::design(&DesignRequest::new(p.with_x_f(t.x_f).unwrap(), false)).unwrap();
        assert!(t.t_cr > 0.0 && t.t_cr < r.t_f());
        let below = designer::design(&DesignRequest::new(p.with_x_f(t.x_f - 0.5).unwrap(), false)).unwrap();
        let above = designer::design(&DesignRequest::new(p.with_x_f(t.x_f + 0.5).unwrap(), false)).unwrap();
        match t.kind {
            TransitionKind::Birth => assert!(above.n_switches > below.n_switches, "{t:?}"),
            TransitionKind::Collapse => assert!(above.n_switches < below.n_switches, "{t:?}"),
        }
    }
}

#[test]
fn coincidences_are_double_zeros() {
    let p = plant(0.0, 100.0);
    let xs = analysis::find_coincidence_displacements(&p, (0.0, 600.0)).unwrap();
    let win = ComplexWindow::new(-0.5 * W, 0.5 * W, 0.1 * W, 2.0 * W).unwrap();
    for x in xs {
        let r = designer::design(&DesignRequest::new(p.with_x_f(x).unwrap(), false)).unwrap();
        let zeros = swayopt::Filter::from_profile(&r.profile).unwrap().find_zeros(&win, (12, 32)).unwrap();
        let at_mode = zeros.iter().find(|z| (z.s.im - W).abs() < 1e-6 && z.s.re.abs() < 1e-6).unwrap();
        assert_eq!(at_mode.multiplicity(), 2, "x_f = {x}");
    }
}

#[test]
fn loci_are_continuous_within_structures() {
    let win = ComplexWindow::new(-0.5 * W, 0.5 * W, 0.1 * W, 2.0 * W).unwrap();
    let points = analysis::loci_sweep(&plant(0.0, 100.0), (0.0, 600.0), &win, 121, (12, 32)).unwrap();
    assert_eq!(points.len(), 242);
    assert!(points[..121].iter().all(|p| !p.robust) && points[121..].iter().all(|p| p.robust));
    // Steps are 5 mm. Zeros move fastest right after a new gap opens, where
    // they still stay within a quarter of the window height per step.
    let jump = analysis::locus_continuity(&points);
    assert!(jump < 0.25 * (2.0 - 0.1) * W, "{jump}");
}

#[test]
fn damped_maneuver_time_is_non_decreasing() {
    let p = plant(0.01, 100.0);
    let xs: Vec<f64> = (1..=140).map(|i| 5.0 * i as f64).collect();
    let tf: Vec<f64> = designer::design_sweep(&DesignRequest::new(p, false), &xs)
        .into_iter()
        .map(|r| r.unwrap().t_f())
        .collect();
    for (i, w) in tf.windows(2).enumerate() {
        assert!(w[1] >= w[0] - 1e-9, "x_f = {}: {} then {}", xs[i + 1], w[0], w[1]);
    }
}

#[test]
fn range_checks() {
    let p = plant(0.0, 100.0);
    assert!(analysis::find_transitions(&p, (10.0, 5.0)).is_err());
    assert!(analysis::find_coincidence_displacements(&plant(0.01, 100.0), (0.0, 600.0)).is_err());
    let r = designer::design(&DesignRequest::new(p.clone(), false)).unwrap();
    assert!(analysis::robustness_sweep(&r.profile, &p, (0.9, 1.1), 1).is_err());
}
