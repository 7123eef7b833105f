#![allow(dead_code)]

use evstab::eos::EquationOfState;
use evstab::equilibria::{GridPolicy, ShellParameters, SteadyState};

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
    }
    s * h / 3.0
}

pub fn reference_shell(delta: f64) -> SteadyState {
    let p = ShellParameters::new(1.0, 15.0, 0.98, None).unwrap();
    let eos = EquationOfState::polytrope(1.0, 0.0, 15.0, delta).unwrap();
    SteadyState::build_shell(&p, &eos, delta, &GridPolicy::default()).unwrap()
}

pub fn polytrope_cluster() -> SteadyState {
    let eos = EquationOfState::polytrope(1.0, 0.0, 0.0, 1.0).unwrap();
    SteadyState::solve_singularity_free(&eos, 0.1, &GridPolicy::default()).unwrap()
}

pub fn king_cluster() -> SteadyState {
    let eos = EquationOfState::king(0.0, 0.0, 1.0).unwrap();
    SteadyState::solve_singularity_free(&eos, 0.1, &GridPolicy::default()).unwrap()
}
