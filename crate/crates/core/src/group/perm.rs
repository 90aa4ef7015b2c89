//! Permutations of `{0, .., degree-1}` and cycle-notation parsing.

use std::fmt;

use super::GroupError;

/// A permutation stored as its image vector: `p.apply(x) == p.images()[x]`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm(Vec<u32>);

impl Perm {
    pub fn identity(degree: usize) -> Self {
        Perm((0..degree as u32).collect())
    }

    /// Builds a permutation from its image vector, checking bijectivity.
    pub fn from_images(images: Vec<u32>) -> Result<Self, GroupError> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &y in &images {
            let y = y as usize;
            if y >= n {
                return Err(GroupError::PointOutOfRange { point: y, degree: n });
            }
            if seen[y] {
                return Err(GroupError::MalformedCycle(format!(
                    "image vector is not a bijection (repeated {y})"
                )));
            }
            seen[y] = true;
        }
        Ok(Perm(images))
    }

    /// Parses cycle notation such as `(0 1 2)(3 4)`. `()` and the empty
    /// string are the identity. Points may be separated by spaces or commas.
    pub fn parse_cycles(text: &str, degree: usize) -> Result<Self, GroupError> {
        let mut images: Vec<u32> = (0..degree as u32).collect();
        let mut touched = vec![false; degree];
        let mut rest = text.trim();
        while !rest.is_empty() {
            let Some(body) = rest.strip_prefix('(') else {
                return Err(GroupError::MalformedCycle(text.to_string()));
            };
            let Some(close) = body.find(')') else {
                return Err(GroupError::MalformedCycle(text.to_string()));
            };
            let inner = &body[..close];
            rest = body[close + 1..].trim_start();
            let mut cycle = Vec::new();
            for tok in inner.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() {
                    continue;
                }
                let point: usize = tok
                    .parse()
                    .map_err(|_| GroupError::MalformedCycle(text.to_string()))?;
                if point >= degree {
                    return Err(GroupError::PointOutOfRange { point, degree });
                }
                if touched[point] {
                    return Err(GroupError::MalformedCycle(format!(
                        "point {point} appears twice in `{text}`"
                    )));
                }
                touched[point] = true;
                cycle.push(point);
            }
            for (k, &a) in cycle.iter().enumerate() {
                let b = cycle[(k + 1) % cycle.len()];
                images[a] = b as u32;
            }
        }
        Ok(Perm(images))
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn images(&self) -> &[u32] {
        &self.0
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.0[x] as usize
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Perm) -> Perm {
        Perm(other.0.iter().map(|&x| self.0[x as usize]).collect())
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0u32; self.0.len()];
        for (x, &y) in self.0.iter().enumerate() {
            inv[y as usize] = x as u32;
        }
        Perm(inv)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(x, &y)| x as u32 == y)
    }

    /// Disjoint cycles of length at least two, each starting at its smallest point.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.0.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut cycle = vec![start];
            seen[start] = true;
            let mut x = self.apply(start);
            while x != start {
                seen[x] = true;
                cycle.push(x);
                x = self.apply(x);
            }
            if cycle.len() > 1 {
                out.push(cycle);
            }
        }
        out
    }

    /// Sorted multiset of cycle lengths, fixed points included.
    pub fn cycle_type(&self) -> Vec<usize> {
        let n = self.0.len();
        let mut seen = vec![false; n];
        let mut lens = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut x = start;
            while !seen[x] {
                seen[x] = true;
                len += 1;
                x = self.apply(x);
            }
            lens.push(len);
        }
        lens.sort_unstable();
        lens
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cycles = self.cycles();
        if cycles.is_empty() {
            return write!(f, "()");
        }
        for c in cycles {
            write!(f, "(")?;
            for (k, p) in c.iter().enumerate() {
                if k > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{p}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let p = Perm::parse_cycles("(0 1 2)(3 4)", 6).unwrap();
        assert_eq!(p.images(), &[1, 2, 0, 4, 3, 5]);
        assert_eq!(p.to_string(), "(0 1 2)(3 4)");
        assert_eq!(p.cycle_type(), vec![1, 2, 3]);
        assert!(Perm::parse_cycles("()", 1).unwrap().is_identity());
        assert!(Perm::parse_cycles("", 3).unwrap().is_identity());
        assert_eq!(Perm::parse_cycles("(0,2)", 3).unwrap().images(), &[2, 1, 0]);
    }

    #[test]
    fn malformed_cycles_rejected() {
        assert!(matches!(
            Perm::parse_cycles("(0 1", 3),
            Err(GroupError::MalformedCycle(_))
        ));
        assert!(matches!(
            Perm::parse_cycles("0 1", 3),
            Err(GroupError::MalformedCycle(_))
        ));
        assert!(matches!(
            Perm::parse_cycles("(0 x)", 3),
            Err(GroupError::MalformedCycle(_))
        ));
        assert!(matches!(
            Perm::parse_cycles("(0 1)(1 2)", 3),
            Err(GroupError::MalformedCycle(_))
        ));
        assert!(matches!(
            Perm::parse_cycles("(0 5)", 3),
            Err(GroupError::PointOutOfRange { point: 5, degree: 3 })
        ));
    }

    #[test]
    fn compose_applies_right_factor_first() {
        let a = Perm::parse_cycles("(0 1)", 3).unwrap();
        let b = Perm::parse_cycles("(1 2)", 3).unwrap();
        // (a ∘ b)(1) = a(2) = 2
        assert_eq!(a.compose(&b).apply(1), 2);
        assert!(a.compose(&a.inverse()).is_identity());
    }
}
