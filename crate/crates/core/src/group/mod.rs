//! Finite permutation groups: closure, conjugacy classes, cosets and
//! double cosets, Gassmann certification and unitary intertwiners.
//!
//! All combinatorics here is exact integer arithmetic. Floating point only
//! appears in [`intertwiner`].

mod gassmann;
mod intertwiner;
mod perm;
mod search;

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, OnceLock};

use thiserror::Error;

pub use gassmann::{is_gassmann, permutation_character, GassmannCertificate};
pub use intertwiner::{intertwiner_solve, verify_intertwiner, IntertwinerKernel, IntertwinerReport};
pub use perm::Perm;
pub use search::{gassmann_search, is_conjugate};

use crate::defaults::ELEMENT_CAP;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("malformed cycle notation: {0}")]
    MalformedCycle(String),
    #[error("point {point} out of range for degree {degree}")]
    PointOutOfRange { point: usize, degree: usize },
    #[error("group closure exceeds the element cap of {cap}")]
    ElementCap { cap: usize },
    #[error("not a subgroup: {0}")]
    NotSubgroup(String),
    #[error("subgroups belong to different parent groups")]
    ParentMismatch,
    #[error("Gassmann condition fails for the given subgroups")]
    NotGassmann,
    #[error("group average stayed singular after {attempts} seeds")]
    SingularAverage { attempts: usize },
    #[error("malformed group file: {0}")]
    MalformedFile(String),
}

/// A finite group of permutations, enumerated breadth-first from the identity.
pub struct FiniteGroup {
    degree: usize,
    elements: Vec<Perm>,
    index: HashMap<Perm, usize>,
    generators: Vec<usize>,
    inverses: Vec<usize>,
    table: OnceLock<Option<Vec<u32>>>,
    classes: OnceLock<ConjugacyClasses>,
}

impl std::fmt::Debug for FiniteGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FiniteGroup")
            .field("degree", &self.degree)
            .field("order", &self.elements.len())
            .field("generators", &self.generators)
            .finish()
    }
}

/// Dense multiplication tables are kept only for groups up to this order.
const DENSE_TABLE_ORDER: usize = 2048;

/// Parses generators in cycle notation and closes them under composition.
pub fn parse_group<S: AsRef<str>>(generators: &[S], degree: usize) -> Result<FiniteGroup, GroupError> {
    let perms = generators
        .iter()
        .map(|g| Perm::parse_cycles(g.as_ref(), degree))
        .collect::<Result<Vec<_>, _>>()?;
    FiniteGroup::generate(degree, perms, ELEMENT_CAP)
}

/// Parses a group file: a `degree: N` line followed by one generator per line.
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_group_file(text: &str) -> Result<FiniteGroup, GroupError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| GroupError::MalformedFile("empty file".into()))?;
    let degree = header
        .strip_prefix("degree:")
        .and_then(|d| d.trim().parse::<usize>().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| GroupError::MalformedFile(format!("expected `degree: N`, found `{header}`")))?;
    let gens: Vec<&str> = lines.collect();
    if gens.is_empty() {
        return Err(GroupError::MalformedFile("no generators".into()));
    }
    parse_group(&gens, degree)
}

impl FiniteGroup {
    /// Closure of `generators`. Element 0 is the identity; the rest follow in
    /// breadth-first order, multiplying on the left by generators in the order given.
    pub fn generate(degree: usize, generators: Vec<Perm>, cap: usize) -> Result<Self, GroupError> {
        for g in &generators {
            if g.degree() != degree {
                return Err(GroupError::PointOutOfRange { point: g.degree(), degree });
            }
        }
        let id = Perm::identity(degree);
        let mut elements = vec![id.clone()];
        let mut index = HashMap::new();
        index.insert(id, 0usize);
        let mut queue = VecDeque::from([0usize]);
        while let Some(e) = queue.pop_front() {
            for g in &generators {
                let p = g.compose(&elements[e]);
                if !index.contains_key(&p) {
                    if elements.len() >= cap {
                        return Err(GroupError::ElementCap { cap });
                    }
                    index.insert(p.clone(), elements.len());
                    queue.push_back(elements.len());
                    elements.push(p);
                }
            }
        }
        let gen_idx = generators.iter().map(|g| index[g]).collect();
        let inverses = elements.iter().map(|p| index[&p.inverse()]).collect();
        Ok(FiniteGroup {
            degree,
            elements,
            index,
            generators: gen_idx,
            inverses,
            table: OnceLock::new(),
            classes: OnceLock::new(),
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn identity(&self) -> usize {
        0
    }

    pub fn elements(&self) -> &[Perm] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &Perm {
        &self.elements[i]
    }

    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn index_of(&self, p: &Perm) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn inv(&self, i: usize) -> usize {
        self.inverses[i]
    }

    fn dense_table(&self) -> Option<&Vec<u32>> {
        self.table
            .get_or_init(|| {
                let n = self.order();
                if n > DENSE_TABLE_ORDER {
                    return None;
                }
                let mut t = vec![0u32; n * n];
                for i in 0..n {
                    for j in 0..n {
                        t[i * n + j] = self.index[&self.elements[i].compose(&self.elements[j])] as u32;
                    }
                }
                Some(t)
            })
            .as_ref()
    }

    /// Index of `elements[i] ∘ elements[j]`.
    #[inline]
    pub fn mul(&self, i: usize, j: usize) -> usize {
        match self.dense_table() {
            Some(t) => t[i * self.order() + j] as usize,
            None => self.index[&self.elements[i].compose(&self.elements[j])],
        }
    }

    /// `g x g⁻¹`
    pub fn conjugate(&self, g: usize, x: usize) -> usize {
        self.mul(self.mul(g, x), self.inv(g))
    }

    pub fn is_abelian(&self) -> bool {
        let gens = &self.generators;
        gens.iter()
            .all(|&a| gens.iter().all(|&b| self.mul(a, b) == self.mul(b, a)))
    }

    pub fn conjugacy_classes(&self) -> &ConjugacyClasses {
        self.classes.get_or_init(|| ConjugacyClasses::compute(self))
    }
}

/// Partition of the group into conjugacy classes, ordered by smallest member.
#[derive(Debug, Clone)]
pub struct ConjugacyClasses {
    classes: Vec<Vec<usize>>,
    class_of: Vec<usize>,
}

impl ConjugacyClasses {
    fn compute(group: &FiniteGroup) -> Self {
        let n = group.order();
        let mut class_of = vec![usize::MAX; n];
        let mut classes = Vec::new();
        let gens: Vec<usize> = group.generators().to_vec();
        for start in 0..n {
            if class_of[start] != usize::MAX {
                continue;
            }
            let id = classes.len();
            let mut members = vec![start];
            class_of[start] = id;
            let mut k = 0;
            while k < members.len() {
                let x = members[k];
                k += 1;
                for &g in &gens {
                    let y = group.conjugate(g, x);
                    if class_of[y] == usize::MAX {
                        class_of[y] = id;
                        members.push(y);
                    }
                }
            }
            members.sort_unstable();
            classes.push(members);
        }
        ConjugacyClasses { classes, class_of }
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_of(&self, element: usize) -> usize {
        self.class_of[element]
    }

    pub fn representatives(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c[0]).collect()
    }
}

/// Conjugacy classes as index partitions (identity first, as a singleton).
pub fn conjugacy_classes(group: &FiniteGroup) -> Vec<Vec<usize>> {
    group.conjugacy_classes().classes().to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `gH`
    Left,
    /// `Hg`
    Right,
}

/// A subgroup, stored as a sorted set of element indices of its parent.
#[derive(Clone)]
pub struct Subgroup {
    parent: Arc<FiniteGroup>,
    members: Vec<usize>,
    mask: Vec<bool>,
}

impl std::fmt::Debug for Subgroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Subgroup")
            .field("order", &self.members.len())
            .field("members", &self.members)
            .finish()
    }
}

impl PartialEq for Subgroup {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.parent, &other.parent) && self.members == other.members
    }
}

impl Subgroup {
    /// Validates that `members` is closed under products and inverses.
    pub fn from_members(parent: Arc<FiniteGroup>, mut members: Vec<usize>) -> Result<Self, GroupError> {
        members.sort_unstable();
        members.dedup();
        let n = parent.order();
        if let Some(&bad) = members.iter().find(|&&m| m >= n) {
            return Err(GroupError::NotSubgroup(format!("element index {bad} out of range")));
        }
        let mut mask = vec![false; n];
        for &m in &members {
            mask[m] = true;
        }
        if !mask[parent.identity()] {
            return Err(GroupError::NotSubgroup("identity missing".into()));
        }
        for &a in &members {
            if !mask[parent.inv(a)] {
                return Err(GroupError::NotSubgroup(format!("inverse of {} missing", parent.element(a))));
            }
            for &b in &members {
                if !mask[parent.mul(a, b)] {
                    return Err(GroupError::NotSubgroup(format!(
                        "{} * {} not a member",
                        parent.element(a),
                        parent.element(b)
                    )));
                }
            }
        }
        Ok(Subgroup { parent, members, mask })
    }

    /// Subgroup generated by the given element indices.
    pub fn generated_by(parent: Arc<FiniteGroup>, gens: &[usize]) -> Self {
        let mask = closure_mask(&parent, gens);
        let members = (0..parent.order()).filter(|&i| mask[i]).collect();
        Subgroup { parent, members, mask }
    }

    /// Subgroup generated by permutations in cycle notation.
    pub fn parse_generators<S: AsRef<str>>(parent: Arc<FiniteGroup>, gens: &[S]) -> Result<Self, GroupError> {
        let mut idx = Vec::with_capacity(gens.len());
        for g in gens {
            let p = Perm::parse_cycles(g.as_ref(), parent.degree())?;
            let i = parent
                .index_of(&p)
                .ok_or_else(|| GroupError::NotSubgroup(format!("{p} is not an element of the group")))?;
            idx.push(i);
        }
        Ok(Self::generated_by(parent, &idx))
    }

    pub fn trivial(parent: Arc<FiniteGroup>) -> Self {
        Self::generated_by(parent, &[])
    }

    pub fn whole(parent: Arc<FiniteGroup>) -> Self {
        let n = parent.order();
        Subgroup { parent, members: (0..n).collect(), mask: vec![true; n] }
    }

    /// Elements fixing `point`.
    pub fn point_stabilizer(parent: Arc<FiniteGroup>, point: usize) -> Result<Self, GroupError> {
        Self::set_stabilizer(parent, &[point])
    }

    /// Elements mapping the set `points` onto itself.
    pub fn set_stabilizer(parent: Arc<FiniteGroup>, points: &[usize]) -> Result<Self, GroupError> {
        let degree = parent.degree();
        let mut inside = vec![false; degree];
        for &p in points {
            if p >= degree {
                return Err(GroupError::PointOutOfRange { point: p, degree });
            }
            inside[p] = true;
        }
        let members: Vec<usize> = (0..parent.order())
            .filter(|&i| points.iter().all(|&p| inside[parent.element(i).apply(p)]))
            .collect();
        let mut mask = vec![false; parent.order()];
        for &m in &members {
            mask[m] = true;
        }
        Ok(Subgroup { parent, members, mask })
    }

    pub fn parent(&self) -> &Arc<FiniteGroup> {
        &self.parent
    }

    pub fn order(&self) -> usize {
        self.members.len()
    }

    pub fn index(&self) -> usize {
        self.parent.order() / self.members.len()
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    #[inline]
    pub fn contains(&self, element: usize) -> bool {
        self.mask[element]
    }

    pub fn same_parent(&self, other: &Subgroup) -> bool {
        Arc::ptr_eq(&self.parent, &other.parent)
    }

    /// `g H g⁻¹`
    pub fn conjugated_by(&self, g: usize) -> Subgroup {
        let members: Vec<usize> = self.members.iter().map(|&h| self.parent.conjugate(g, h)).collect();
        let mut mask = vec![false; self.parent.order()];
        for &m in &members {
            mask[m] = true;
        }
        let mut members = members;
        members.sort_unstable();
        Subgroup { parent: self.parent.clone(), members, mask }
    }

    /// A small generating set, chosen greedily in index order.
    pub fn generators(&self) -> Vec<usize> {
        let mut gens = Vec::new();
        let mut mask = closure_mask(&self.parent, &gens);
        for &m in &self.members {
            if !mask[m] {
                gens.push(m);
                mask = closure_mask(&self.parent, &gens);
            }
        }
        gens
    }
}

fn closure_mask(group: &FiniteGroup, gens: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; group.order()];
    let id = group.identity();
    mask[id] = true;
    let mut stack = vec![id];
    while let Some(x) = stack.pop() {
        for &g in gens {
            let y = group.mul(g, x);
            if !mask[y] {
                mask[y] = true;
                stack.push(y);
            }
        }
    }
    mask
}

/// Cosets of `h` in its parent. Each block is sorted and blocks are ordered
/// by their canonical (smallest) representative.
pub fn cosets(h: &Subgroup, side: Side) -> Vec<Vec<usize>> {
    let g = h.parent();
    let mut assigned = vec![false; g.order()];
    let mut out = Vec::with_capacity(h.index());
    for x in 0..g.order() {
        if assigned[x] {
            continue;
        }
        let mut block: Vec<usize> = h
            .members()
            .iter()
            .map(|&m| match side {
                Side::Left => g.mul(x, m),
                Side::Right => g.mul(m, x),
            })
            .collect();
        block.sort_unstable();
        for &y in &block {
            assigned[y] = true;
        }
        out.push(block);
    }
    out
}

/// Index of the left coset `xH` containing each element, and one
/// representative per coset, in the canonical order of [`cosets`].
pub(crate) fn left_coset_table(h: &Subgroup) -> (Vec<usize>, Vec<usize>) {
    let blocks = cosets(h, Side::Left);
    let mut coset_of = vec![0usize; h.parent().order()];
    for (c, block) in blocks.iter().enumerate() {
        for &x in block {
            coset_of[x] = c;
        }
    }
    let reps = blocks.iter().map(|b| b[0]).collect();
    (coset_of, reps)
}

/// Double cosets `H₂ a H₁`, ordered by smallest member.
pub fn double_cosets(h2: &Subgroup, h1: &Subgroup) -> Result<Vec<Vec<usize>>, GroupError> {
    if !h1.same_parent(h2) {
        return Err(GroupError::ParentMismatch);
    }
    let g = h1.parent();
    let mut assigned = vec![false; g.order()];
    let mut out = Vec::new();
    for a in 0..g.order() {
        if assigned[a] {
            continue;
        }
        let mut block = Vec::new();
        for &b2 in h2.members() {
            let left = g.mul(b2, a);
            for &b1 in h1.members() {
                let y = g.mul(left, b1);
                if !assigned[y] {
                    assigned[y] = true;
                    block.push(y);
                }
            }
        }
        block.sort_unstable();
        out.push(block);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn s3() -> Arc<FiniteGroup> {
        Arc::new(parse_group(&["(0 1 2)", "(0 1)"], 3).unwrap())
    }

    pub fn g168() -> Arc<FiniteGroup> {
        Arc::new(parse_group(&["(0 1 2 3 4 5 6)", "(1 2 4)(3 6 5)", "(0 1)(2 5)"], 7).unwrap())
    }

    pub fn cyclic(n: usize) -> Arc<FiniteGroup> {
        let cycle: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        Arc::new(parse_group(&[format!("({})", cycle.join(" "))], n).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;

    #[test]
    fn group_file_format() {
        let g = parse_group_file("# S3\ndegree: 3\n(0 1 2)\n\n(0 1)\n").unwrap();
        assert_eq!(g.order(), 6);
        assert!(matches!(parse_group_file("(0 1)"), Err(GroupError::MalformedFile(_))));
        assert!(matches!(parse_group_file("degree: 3\n"), Err(GroupError::MalformedFile(_))));
        assert!(matches!(parse_group_file("degree: 2\n(0 5)"), Err(GroupError::PointOutOfRange { .. })));
    }
    use super::*;

    fn sorted_sizes(parts: &[Vec<usize>]) -> Vec<usize> {
        let mut s: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        s.sort_unstable();
        s
    }

    /// Conjugacy classes by brute force over all pairs, independent of the
    /// generator-orbit computation.
    fn brute_force_class_sizes(g: &FiniteGroup) -> Vec<usize> {
        let n = g.order();
        let mut seen = vec![false; n];
        let mut sizes = Vec::new();
        for x in 0..n {
            if seen[x] {
                continue;
            }
            let mut class: Vec<usize> = (0..n)
                .map(|y| {
                    let p = g.element(y).compose(g.element(x)).compose(&g.element(y).inverse());
                    g.index_of(&p).unwrap()
                })
                .collect();
            class.sort_unstable();
            class.dedup();
            for &c in &class {
                seen[c] = true;
            }
            sizes.push(class.len());
        }
        sizes.sort_unstable();
        sizes
    }

    #[test]
    fn closure_orders() {
        assert_eq!(s3().order(), 6);
        assert_eq!(g168().order(), 168);
        // the 7-cycle and the squaring map alone only reach the affine group of order 21
        assert_eq!(parse_group(&["(0 1 2 3 4 5 6)", "(1 2 4)(3 6 5)"], 7).unwrap().order(), 21);
        let trivial = parse_group(&["()"], 1).unwrap();
        assert_eq!(trivial.order(), 1);
        assert!(trivial.element(0).is_identity());
    }

    #[test]
    fn closure_is_deterministic_bfs() {
        let g = s3();
        assert!(g.element(0).is_identity());
        assert_eq!(g.element(1).to_string(), "(0 1 2)");
        assert_eq!(g.element(2).to_string(), "(0 1)");
        assert_eq!(g.generators(), &[1, 2]);
    }

    #[test]
    fn element_cap_enforced() {
        let err = FiniteGroup::generate(
            7,
            vec![
                Perm::parse_cycles("(0 1 2 3 4 5 6)", 7).unwrap(),
                Perm::parse_cycles("(0 1)", 7).unwrap(),
            ],
            1000,
        )
        .unwrap_err();
        assert_eq!(err, GroupError::ElementCap { cap: 1000 });
    }

    #[test]
    fn class_sizes_match_brute_force() {
        for g in [s3(), g168(), cyclic(5)] {
            let classes = conjugacy_classes(&g);
            assert_eq!(sorted_sizes(&classes), brute_force_class_sizes(&g));
            assert_eq!(classes[0], vec![0]);
            let total: usize = classes.iter().map(Vec::len).sum();
            assert_eq!(total, g.order());
        }
        assert_eq!(sorted_sizes(&conjugacy_classes(&s3())), vec![1, 2, 3]);
        assert_eq!(sorted_sizes(&conjugacy_classes(&g168())), vec![1, 21, 24, 24, 42, 56]);
        let trivial = parse_group(&["()"], 1).unwrap();
        assert_eq!(conjugacy_classes(&trivial).len(), 1);
    }

    #[test]
    fn cosets_partition_group() {
        let g = s3();
        let h = Subgroup::parse_generators(g.clone(), &["(0 1)"]).unwrap();
        for side in [Side::Left, Side::Right] {
            let cs = cosets(&h, side);
            assert_eq!(cs.len(), 3);
            assert!(cs.iter().all(|c| c.len() == 2));
        }
        let g7 = g168();
        let stab = Subgroup::point_stabilizer(g7.clone(), 0).unwrap();
        assert_eq!(stab.order(), 24);
        assert_eq!(cosets(&stab, Side::Left).len(), 7);
        assert_eq!(cosets(&Subgroup::whole(g7), Side::Left).len(), 1);
    }

    #[test]
    fn double_coset_examples() {
        let g = s3();
        let h = Subgroup::parse_generators(g.clone(), &["(0 1)"]).unwrap();
        let dc = double_cosets(&h, &h).unwrap();
        assert_eq!(sorted_sizes(&dc), vec![2, 4]);
        // brute force: H a H as a set for every a
        for a in 0..g.order() {
            let mut set: Vec<usize> = h
                .members()
                .iter()
                .flat_map(|&x| h.members().iter().map(move |&y| (x, y)))
                .map(|(x, y)| g.mul(g.mul(x, a), y))
                .collect();
            set.sort_unstable();
            set.dedup();
            assert!(dc.contains(&set));
        }
        let e = Subgroup::trivial(g.clone());
        assert_eq!(double_cosets(&e, &e).unwrap().len(), 6);
        let whole = Subgroup::whole(g.clone());
        assert_eq!(double_cosets(&whole, &h).unwrap().len(), 1);
    }

    #[test]
    fn subgroup_validation() {
        let g = s3();
        assert!(Subgroup::from_members(g.clone(), vec![0, 2]).is_ok());
        assert!(matches!(
            Subgroup::from_members(g.clone(), vec![0, 1]),
            Err(GroupError::NotSubgroup(_))
        ));
        assert!(matches!(
            Subgroup::from_members(g.clone(), vec![2]),
            Err(GroupError::NotSubgroup(_))
        ));
        assert!(Subgroup::parse_generators(g, &["(0 1 2 3)"]).is_err());
    }

    #[test]
    fn generators_regenerate_subgroup() {
        let g = g168();
        let h = Subgroup::set_stabilizer(g.clone(), &[0, 1, 3]).unwrap();
        assert_eq!(h.order(), 24);
        let again = Subgroup::generated_by(g, &h.generators());
        assert_eq!(again.members(), h.members());
    }
}
