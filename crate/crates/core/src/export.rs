//! SDPA sparse (`.dat-s`) serialization of an assembled relaxation, so
//! third-party semidefinite solvers can cross-check the native backend.
//!
//! The interchange form is `X = sum_i F_i x_i - F_0 >= 0` over the moment
//! decision vector `x` with objective `min c^T x`. Every positive
//! semidefinite block of the relaxation maps directly onto one block of
//! `X`; the adjoint equalities become a trailing diagonal block holding a
//! pair of opposing one-dimensional inequalities per equality.

use std::io::{self, Write};

use crate::relaxation::RelaxationSdp;

/// Serialize the relaxation in SDPA sparse format.
///
/// The constant part of the objective (terminal cost of an eliminated point
/// target) cannot be expressed in the format; it is recorded in a comment
/// line and must be added to the recovered optimum.
pub fn write_sdpa_sparse<W: Write>(sdp: &RelaxationSdp, out: &mut W) -> io::Result<()> {
    let neq = sdp.equalities.len();
    let offset = sdp.objective.constant + sdp.objective_constant;
    writeln!(
        out,
        "\"moment relaxation of order {}; add {} to the recovered objective value",
        sdp.r, offset
    )?;
    writeln!(out, "{}", sdp.decision_len)?;

    let nblock = sdp.psd_blocks.len() + usize::from(neq > 0);
    writeln!(out, "{nblock}")?;
    let mut structure: Vec<String> = sdp
        .psd_blocks
        .iter()
        .map(|b| b.matrix.side.to_string())
        .collect();
    if neq > 0 {
        structure.push(format!("-{}", 2 * neq));
    }
    writeln!(out, "{}", structure.join(" "))?;

    let mut c = vec![0.0; sdp.decision_len];
    for &(pos, coeff) in &sdp.objective.terms {
        c[pos] = coeff;
    }
    writeln!(
        out,
        "{}",
        c.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
    )?;

    let mut entry = |matno: usize, blkno: usize, i: usize, j: usize, value: f64| {
        if value == 0.0 {
            Ok(())
        } else {
            writeln!(out, "{matno} {blkno} {i} {j} {value}")
        }
    };

    for (b, block) in sdp.psd_blocks.iter().enumerate() {
        let blkno = b + 1;
        for (row, col, form) in block.matrix.upper_triangle() {
            entry(0, blkno, row + 1, col + 1, -form.constant)?;
            for &(pos, coeff) in &form.terms {
                entry(pos + 1, blkno, row + 1, col + 1, coeff)?;
            }
        }
    }

    let eq_block = sdp.psd_blocks.len() + 1;
    for (j, (form, &rhs)) in sdp.equalities.iter().zip(&sdp.rhs).enumerate() {
        let level = rhs - form.constant;
        let (lo, hi) = (2 * j + 1, 2 * j + 2);
        entry(0, eq_block, lo, lo, level)?;
        entry(0, eq_block, hi, hi, -level)?;
        for &(pos, coeff) in &form.terms {
            entry(pos + 1, eq_block, lo, lo, coeff)?;
            entry(pos + 1, eq_block, hi, hi, -coeff)?;
        }
    }
    Ok(())
}

/// [`write_sdpa_sparse`] into a `String`.
pub fn sdpa_sparse_string(sdp: &RelaxationSdp) -> String {
    let mut buf = Vec::new();
    write_sdpa_sparse(sdp, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("SDPA output is ASCII")
}
