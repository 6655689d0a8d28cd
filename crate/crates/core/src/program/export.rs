//! Plain-text sparse dump of a [`ConeProgram`].
//!
//! ```text
//! # hytrain conic program
//! schema_version 1
//! variables <n>
//! <index> <name> <scale>
//! cost <nnz> <constant>
//! <index> <coefficient>
//! tie_break <nnz>
//! <index> <coefficient>
//! blocks <count>
//! block <family> <interval|-> <zero|nonneg|soc> <rows>
//! <constant> <nnz> <index>:<coefficient> ...
//! ```
//! Each block row is an affine expression in physical units; a block
//! requires its rows to be zero, non-negative, or `row0 >= ||row1..||`.

use std::io::Write;

use super::builder::{ConeKind, ConeProgram};

pub const SPARSE_SCHEMA_VERSION: u32 = 1;

pub fn write_sparse_text(prog: &ConeProgram, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "# hytrain conic program")?;
    writeln!(out, "schema_version {SPARSE_SCHEMA_VERSION}")?;
    writeln!(out, "variables {}", prog.n_vars)?;
    for j in 0..prog.n_vars {
        writeln!(out, "{j} {} {:e}", prog.var_name(j), prog.var_scale[j])?;
    }
    let nz: Vec<(usize, f64)> = prog.cost.iter().copied().enumerate().filter(|c| c.1 != 0.0).collect();
    writeln!(out, "cost {} {:e}", nz.len(), prog.cost_constant)?;
    for (j, c) in nz {
        writeln!(out, "{j} {c:e}")?;
    }
    writeln!(out, "tie_break {}", prog.tie_break.len())?;
    for (j, c) in &prog.tie_break {
        writeln!(out, "{j} {c:e}")?;
    }
    writeln!(out, "blocks {}", prog.blocks.len())?;
    for b in &prog.blocks {
        let kind = match b.kind {
            ConeKind::Zero => "zero",
            ConeKind::NonNeg => "nonneg",
            ConeKind::SecondOrder => "soc",
        };
        let interval = b.interval.map_or("-".to_string(), |i| i.to_string());
        writeln!(out, "block {} {interval} {kind} {}", b.family.label(), b.rows.len())?;
        for r in &b.rows {
            write!(out, "{:e} {}", r.constant, r.terms.len())?;
            for (j, c) in &r.terms {
                write!(out, " {j}:{c:e}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
