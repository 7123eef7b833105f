//! Kernel matrix dumps and basis diagnostics.

use evstab::equilibria::SteadyState;
use evstab::mathur::{KernelOptions, MathurKernel};
use evstab::operators::{check_kernel_b_with, KernelBasis};
use evstab::phase_space::PhaseGrid;
use evstab::Result;
use serde::{Deserialize, Serialize};

/// Long-format CSV `r_i,s_j,K_ij` of the sampled kernel.
pub fn kernel_csv(k: &MathurKernel) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r_i", "s_j", "K_ij"]).expect("in-memory write");
    for (i, &r) in k.nodes.iter().enumerate() {
        for (j, &s) in k.nodes.iter().enumerate() {
            w.serialize((r, s, k.k[(i, j)])).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Gram conditioning of the lifted generators and their kernel-of-B residuals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisReport {
    pub n_e: usize,
    pub n_l: usize,
    pub n_theta: usize,
    pub dim: usize,
    pub rank: usize,
    pub dropped: usize,
    pub gram_condition: f64,
    /// Relative residual of `B k_i = 0` for each lifted generator, in generator order.
    pub b_residuals: Vec<f64>,
}

pub fn basis_report(ss: &SteadyState, opts: &KernelOptions) -> Result<BasisReport> {
    let grid = PhaseGrid::new(ss, opts.grid)?;
    let basis = KernelBasis::build(ss, &grid, &opts.basis_options())?;
    let lifted = basis.lift_on_grid(ss, &grid)?;
    let b_residuals = lifted.elements.iter().zip(&basis.pk).map(|(k, p)| check_kernel_b_with(ss, k, p)).collect::<Result<Vec<_>>>()?;
    Ok(BasisReport {
        n_e: opts.n_e,
        n_l: opts.n_l,
        n_theta: opts.grid.n_theta,
        dim: basis.dim(),
        rank: basis.factor.rank,
        dropped: basis.factor.dropped(),
        gram_condition: basis.factor.condition_estimate(),
        b_residuals,
    })
}
