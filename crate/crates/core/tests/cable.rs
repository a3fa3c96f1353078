use std::f64::consts::PI;

use myelin_core::cable::{front_speed, run, CableConfig, CableError};
use myelin_core::expr::Expr;
use myelin_core::membrane::{Gate, MembraneModel};

fn heat(nx: usize, dt: f64, lambda_bar: f64) -> CableConfig {
    let mut c = CableConfig::new(1.0, nx, 0.1, dt, 1.0, lambda_bar, MembraneModel::passive(0.0, 1.0));
    c.initial_v = Some(Expr::parse("sin(pi*x)").unwrap());
    c
}

fn error(cfg: &CableConfig) -> f64 {
    let last = run(cfg).unwrap().pop().unwrap();
    let rate = PI * PI + cfg.lambda_bar;
    (0..=cfg.nx)
        .map(|i| (last.v[i] - (-rate * last.t).exp() * (PI * cfg.x(i)).sin()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn heat_mode_decays_at_the_right_rate() {
    assert!(error(&heat(200, 1e-4, 0.0)) < 1e-4);
    assert!(error(&heat(200, 1e-4, 5.4)) < 1e-4);
}

#[test]
fn second_order_in_space() {
    let e: Vec<f64> = [10, 20, 40].iter().map(|&n| error(&heat(n, 1e-5, 1.0))).collect();
    for w in e.windows(2) {
        let p = (w[0] / w[1]).log2();
        assert!((p - 2.0).abs() < 0.2, "{e:?}");
    }
}

#[test]
fn rest_is_an_equilibrium() {
    // gated, but with zero reversal potential so that I(0, g*) = 0
    let gate = Gate { h0: 0.5, h1: 2.0, h_min: 0.1, v_r: 0.0, f_lo: 0.0, f_hi: 1.0, v_half: 0.3, slope: 0.05, alpha: 2.0 };
    let c = CableConfig::new(2.0, 50, 1.0, 1e-2, 0.2, 5.4, MembraneModel::linear_gate(gate, 1.0));
    let last = run(&c).unwrap().pop().unwrap();
    let m = last.v.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(m < 1e-12, "{m}");
}

#[test]
fn excitable_front_travels() {
    let mut c = CableConfig::new(20.0, 400, 20.0, 0.01, 1.0, 0.0, MembraneModel::excitable());
    c.initial_v = Some(Expr::parse("1 - clamp(x - 1, 0, 1)").unwrap());
    c.snapshot_every = 10;
    let snaps = run(&c).unwrap();
    let s = front_speed(&snaps, c.dx(), 0.5, 5.0, 15.0).expect("front reaches the window");
    assert!(s > 0.0);
}

#[test]
fn invalid_configs_are_rejected() {
    for c in [heat(200, -1.0, 0.0), heat(0, 1e-4, 0.0), heat(10, 1e-4, -1.0)] {
        assert!(matches!(run(&c), Err(CableError::InvalidConfig(_))));
    }
}
