//! Benchmark problem builders, analytical references, error norms and the
//! convergence driver.

pub mod bar;
pub mod convergence;
pub mod micro;
pub mod norms;
pub mod output;
pub mod plate;

use crate::assembly::{
    assemble, recover_fields, solve, FieldEvaluator, HeterogeneousProblem, RecoveredFields, Solution,
};
use crate::discretize::{
    add_volume_recovery_cells, embed, share_interface_nodes, Background, EmbeddedDiscretization, Foreground,
    SubdivisionParams,
};
use crate::error::Result;
use crate::integration::{build_tables, IntegrationOptions, IntegrationTables};
use crate::rk::{KernelSpec, RkEvaluator};

/// Discretization choices shared by all builders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretizationOptions {
    pub kernel: KernelSpec,
    pub subdivision: SubdivisionParams,
    pub recovery: bool,
}

impl Default for DiscretizationOptions {
    fn default() -> Self {
        DiscretizationOptions {
            kernel: KernelSpec::default(),
            subdivision: SubdivisionParams::default(),
            recovery: true,
        }
    }
}

/// Embedding, interface-node sharing and optional volume recovery.
pub fn build_embedded(bg: &Background, fgs: &[Foreground], opts: &DiscretizationOptions) -> Result<EmbeddedDiscretization> {
    let d = share_interface_nodes(embed(bg, fgs, &opts.subdivision, &opts.kernel)?);
    if opts.recovery {
        add_volume_recovery_cells(d)
    } else {
        Ok(d)
    }
}

/// Everything produced by one solve.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub tables: IntegrationTables,
    pub solution: Solution,
    pub fields: RecoveredFields,
    pub dofs: usize,
    pub nnz: usize,
}

impl RunResult {
    pub fn evaluator<'a>(&'a self, d: &'a EmbeddedDiscretization) -> FieldEvaluator<'a> {
        FieldEvaluator::new(d, &self.solution, &self.fields)
    }
}

/// Integration tables, assembly, solve and field recovery.
pub fn run_pipeline(p: &HeterogeneousProblem, d: &EmbeddedDiscretization, opts: &IntegrationOptions) -> Result<RunResult> {
    let ev = RkEvaluator::new(&d.cloud, &d.domain);
    let tables = build_tables(d, &ev, opts)?;
    let sys = assemble(p, d, &tables)?;
    log::debug!("system: {} dofs, {} nonzeros", sys.ndof(), sys.k.nnz());
    let solution = solve(&sys)?;
    let fields = recover_fields(&solution, d, &tables, &p.materials)?;
    Ok(RunResult {
        tables,
        dofs: sys.ndof(),
        nnz: sys.k.nnz(),
        solution,
        fields,
    })
}
