//! Search for non-conjugate Gassmann pairs.

use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;

use super::{is_gassmann, FiniteGroup, GroupError, Subgroup};
use crate::defaults::{ELEMENT_CAP, EXHAUSTIVE_SEARCH_ORDER};

/// Whether some `g` satisfies `g H₁ g⁻¹ = H₂`.
pub fn is_conjugate(h1: &Subgroup, h2: &Subgroup) -> bool {
    if !h1.same_parent(h2) || h1.order() != h2.order() {
        return false;
    }
    let g = h1.parent();
    let gens = h1.generators();
    (0..g.order()).any(|x| gens.iter().all(|&s| h2.contains(g.conjugate(x, s))))
}

/// Non-conjugate Gassmann pairs among subgroups of index at most `index_bound`,
/// one pair per pair of conjugacy classes, sorted by member lists.
///
/// Groups of order up to [`EXHAUSTIVE_SEARCH_ORDER`] get the full subgroup
/// lattice; larger groups only consider stabilizers of points, pairs and triples.
pub fn gassmann_search(group: &Arc<FiniteGroup>, index_bound: usize) -> Result<Vec<(Subgroup, Subgroup)>, GroupError> {
    if group.order() > ELEMENT_CAP {
        return Err(GroupError::ElementCap { cap: ELEMENT_CAP });
    }
    if group.is_abelian() {
        return Ok(Vec::new());
    }
    let candidates = if group.order() <= EXHAUSTIVE_SEARCH_ORDER {
        all_subgroups(group)
    } else {
        stabilizer_subgroups(group)?
    };
    let mut candidates: Vec<Subgroup> = candidates
        .into_iter()
        .filter(|h| h.index() <= index_bound && h.order() > 1 && h.order() < group.order())
        .collect();
    candidates.sort_by(|a, b| (a.order(), a.members()).cmp(&(b.order(), b.members())));

    let reps = class_representatives(candidates);
    let pairs: Vec<(usize, usize)> = (0..reps.len())
        .flat_map(|i| (i + 1..reps.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| reps[i].order() == reps[j].order())
        .collect();
    let mut found: Vec<(Subgroup, Subgroup)> = pairs
        .par_iter()
        .filter(|&&(i, j)| is_gassmann(&reps[i], &reps[j]).map(|c| c.verdict).unwrap_or(false))
        .map(|&(i, j)| (reps[i].clone(), reps[j].clone()))
        .collect();
    found.sort_by(|a, b| (a.0.members(), a.1.members()).cmp(&(b.0.members(), b.1.members())));
    Ok(found)
}

fn all_subgroups(group: &Arc<FiniteGroup>) -> Vec<Subgroup> {
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut cyclic_gens = Vec::new();
    let mut out = Vec::new();
    for x in 0..group.order() {
        let c = Subgroup::generated_by(group.clone(), &[x]);
        if seen.insert(c.members().to_vec()) {
            cyclic_gens.push(x);
            out.push(c);
        }
    }
    let mut frontier: Vec<usize> = (0..out.len()).collect();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for k in frontier {
            let h = out[k].clone();
            let base = h.generators();
            for &c in &cyclic_gens {
                if h.contains(c) {
                    continue;
                }
                let mut gens = base.clone();
                gens.push(c);
                let j = Subgroup::generated_by(group.clone(), &gens);
                if seen.insert(j.members().to_vec()) {
                    next.push(out.len());
                    out.push(j);
                }
            }
        }
        frontier = next;
    }
    out
}

fn stabilizer_subgroups(group: &Arc<FiniteGroup>) -> Result<Vec<Subgroup>, GroupError> {
    let n = group.degree();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut out = Vec::new();
    let mut push = |h: Subgroup| {
        if seen.insert(h.members().to_vec()) {
            out.push(h);
        }
    };
    for a in 0..n {
        push(Subgroup::point_stabilizer(group.clone(), a)?);
        for b in a + 1..n {
            push(Subgroup::set_stabilizer(group.clone(), &[a, b])?);
            for c in b + 1..n {
                push(Subgroup::set_stabilizer(group.clone(), &[a, b, c])?);
            }
        }
    }
    Ok(out)
}

/// First member of each conjugacy class, preserving input order.
fn class_representatives(candidates: Vec<Subgroup>) -> Vec<Subgroup> {
    let mut reps: Vec<Subgroup> = Vec::new();
    for h in candidates {
        if !reps.iter().any(|r| is_conjugate(r, &h)) {
            reps.push(h);
        }
    }
    reps
}
