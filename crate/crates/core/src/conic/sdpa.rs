//! Plain-text dump in the SDPA sparse format (`.dat-s`) for cross-checking
//! against external SDP solvers.
//!
//! The problem is written as the SDPA dual `max <F0, Y>  s.t. <Fi, Y> = ci,
//! Y PSD`. PSD blocks keep their order. A trailing diagonal block holds one
//! slack per inequality followed by a `(+, -)` pair per free scalar. For a
//! minimization `F0` is the negated objective, so the optimal value of the
//! dump is the negated optimum.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::problem::{ConicProblem, Relation, Sense};

pub fn to_sdpa_string(p: &ConicProblem) -> String {
    let n_psd = p.psd_blocks.len();
    let slack_rows: Vec<usize> = p
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.relation != Relation::Eq)
        .map(|(i, _)| i)
        .collect();
    let lp_size = slack_rows.len() + 2 * p.free_scalars;

    // (matrix, block, i, j) -> value, 1-based as in the file
    let mut entries: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
    let mut add_functional = |mat: usize, f: &super::problem::LinearFunctional, sign: f64| {
        for (b, coef) in &f.blocks {
            let d = coef.to_dense(p.psd_blocks[*b]);
            for j in 0..d.ncols() {
                for i in 0..=j {
                    let v = d[(i, j)];
                    if v != 0.0 {
                        *entries.entry((mat, b + 1, i + 1, j + 1)).or_default() += sign * v;
                    }
                }
            }
        }
        for &(k, c) in &f.free {
            let base = slack_rows.len() + 2 * k;
            *entries.entry((mat, n_psd + 1, base + 1, base + 1)).or_default() += sign * c;
            *entries.entry((mat, n_psd + 1, base + 2, base + 2)).or_default() -= sign * c;
        }
    };
    let obj_sign = match p.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    add_functional(0, &p.objective, obj_sign);
    for (i, c) in p.constraints.iter().enumerate() {
        add_functional(i + 1, &c.functional, 1.0);
    }
    for (k, &row) in slack_rows.iter().enumerate() {
        let s = if p.constraints[row].relation == Relation::Le { 1.0 } else { -1.0 };
        entries.insert((row + 1, n_psd + 1, k + 1, k + 1), s);
    }

    let mut out = String::new();
    let _ = writeln!(out, "\"conic problem dump");
    let _ = writeln!(out, "{}", p.constraints.len());
    let _ = writeln!(out, "{}", n_psd + usize::from(lp_size > 0));
    let mut sizes: Vec<String> = p.psd_blocks.iter().map(|n| n.to_string()).collect();
    if lp_size > 0 {
        sizes.push(format!("-{lp_size}"));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let rhs: Vec<String> = p.constraints.iter().map(|c| format!("{:e}", c.bound)).collect();
    let _ = writeln!(out, "{}", rhs.join(" "));
    for ((m, b, i, j), v) in entries {
        if v != 0.0 {
            let _ = writeln!(out, "{m} {b} {i} {j} {v:e}");
        }
    }
    out
}

pub fn write_sdpa(p: &ConicProblem, path: &std::path::Path) -> crate::error::Result<()> {
    std::fs::write(path, to_sdpa_string(p))?;
    Ok(())
}
