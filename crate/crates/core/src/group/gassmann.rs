use serde::{Deserialize, Serialize};

use super::{left_coset_table, GroupError, Subgroup};

/// Per-class intersection counts for a pair of subgroups.
///
/// `classes` holds the smallest element index of every conjugacy class of
/// the parent group; `counts_h1[i] = |Cᵢ ∩ H₁|` and likewise for `H₂`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GassmannCertificate {
    pub classes: Vec<usize>,
    pub counts_h1: Vec<usize>,
    pub counts_h2: Vec<usize>,
    pub verdict: bool,
}

impl GassmannCertificate {
    pub fn order_mismatch(&self) -> bool {
        self.counts_h1.iter().sum::<usize>() != self.counts_h2.iter().sum::<usize>()
    }
}

/// Checks `|C ∩ H₁| = |C ∩ H₂|` for every conjugacy class `C`.
pub fn is_gassmann(h1: &Subgroup, h2: &Subgroup) -> Result<GassmannCertificate, GroupError> {
    if !h1.same_parent(h2) {
        return Err(GroupError::ParentMismatch);
    }
    let cc = h1.parent().conjugacy_classes();
    let mut counts_h1 = vec![0usize; cc.len()];
    let mut counts_h2 = vec![0usize; cc.len()];
    for &m in h1.members() {
        counts_h1[cc.class_of(m)] += 1;
    }
    for &m in h2.members() {
        counts_h2[cc.class_of(m)] += 1;
    }
    let verdict = h1.order() == h2.order() && counts_h1 == counts_h2;
    Ok(GassmannCertificate { classes: cc.representatives(), counts_h1, counts_h2, verdict })
}

/// Number of left cosets `xH` fixed by each class representative, in class order.
pub fn permutation_character(h: &Subgroup) -> Vec<usize> {
    let g = h.parent();
    let (coset_of, reps) = left_coset_table(h);
    g.conjugacy_classes()
        .representatives()
        .into_iter()
        .map(|c| {
            reps.iter()
                .enumerate()
                .filter(|&(k, &x)| coset_of[g.mul(c, x)] == k)
                .count()
        })
        .collect()
}
