//! Exhaustive path enumeration, for cross-checking the dynamic program on
//! tiny lattices.

use crate::data::TokenSequence;
use crate::numerics::log_add;

use super::decode::collapse;
use super::lattice::EmissionLattice;
use super::CtcError;

pub const ORACLE_MAX_FRAMES: usize = 8;
pub const ORACLE_MAX_VOCAB: usize = 4;

fn guard(lattice: &EmissionLattice) -> Result<(), CtcError> {
    if lattice.frames() > ORACLE_MAX_FRAMES || lattice.vocab_size() > ORACLE_MAX_VOCAB {
        return Err(CtcError::OracleGuard {
            frames: lattice.frames(),
            vocab: lattice.vocab_size(),
        });
    }
    Ok(())
}

/// Calls `visit(path, log_prob)` for every path in `(V+1)^T′`.
fn for_each_path(lattice: &EmissionLattice, mut visit: impl FnMut(&[usize], f64)) {
    let t_len = lattice.frames();
    let classes = lattice.classes();
    let mut path = vec![0usize; t_len];
    loop {
        let lp: f64 = path.iter().enumerate().map(|(t, &k)| lattice.row(t)[k]).sum();
        visit(&path, lp);
        // odometer increment
        let mut t = 0;
        loop {
            if t == t_len {
                return;
            }
            path[t] += 1;
            if path[t] < classes {
                break;
            }
            path[t] = 0;
            t += 1;
        }
    }
}

/// `−log P(target)` by summing every alignment path that collapses to it.
/// Returns `+∞` when no path does.
pub fn ctc_oracle(lattice: &EmissionLattice, target: &TokenSequence) -> Result<f64, CtcError> {
    guard(lattice)?;
    let mut total = f64::NEG_INFINITY;
    for_each_path(lattice, |path, lp| {
        if collapse(path).ids() == target.ids() {
            total = log_add(total, lp);
        }
    });
    Ok(-total)
}

/// Total log-mass of every distinct collapsed label sequence.
pub fn label_sequence_masses(lattice: &EmissionLattice) -> Result<Vec<(TokenSequence, f64)>, CtcError> {
    guard(lattice)?;
    let mut masses: std::collections::BTreeMap<TokenSequence, f64> = Default::default();
    for_each_path(lattice, |path, lp| {
        let e = masses.entry(collapse(path)).or_insert(f64::NEG_INFINITY);
        *e = log_add(*e, lp);
    });
    Ok(masses.into_iter().collect())
}
