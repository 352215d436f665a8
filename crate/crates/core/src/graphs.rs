//! Edge sets, union graphs and recovery metrics.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jgl::JglSolution;

/// Undirected graph on nodes `0..p` stored as pairs `(j, k)` with `j < k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeSet {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            edges: BTreeSet::new(),
        }
    }

    /// Builds from unordered pairs; each pair is normalized to `j < k`.
    pub fn from_pairs(p: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = Self::empty(p);
        for (a, b) in pairs {
            set.insert(a, b)?;
        }
        Ok(set)
    }

    /// Returns whether the edge was new.
    pub fn insert(&mut self, a: usize, b: usize) -> Result<bool> {
        if a == b {
            return Err(Error::InvalidInput(format!("self-loop at node {a}")));
        }
        let (j, k) = if a < b { (a, b) } else { (b, a) };
        if k >= self.p {
            return Err(Error::IndexOutOfRange { index: k, len: self.p });
        }
        Ok(self.edges.insert((j, k)))
    }

    pub fn remove(&mut self, a: usize, b: usize) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.remove(&key)
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.contains(&key)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.p];
        for (j, k) in self.iter() {
            deg[j] += 1;
            deg[k] += 1;
        }
        deg
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.edges.is_subset(&other.edges)
    }

    pub fn intersection_len(&self, other: &EdgeSet) -> usize {
        self.edges.intersection(&other.edges).count()
    }

    /// Number of unordered node pairs, `p(p−1)/2`.
    pub fn max_edges(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }
}

/// Edges `(j, k)` where a symmetric matrix has a nonzero off-diagonal entry.
pub fn edges_from_matrix(m: &DMatrix<f64>) -> EdgeSet {
    let p = m.nrows();
    let mut set = EdgeSet::empty(p);
    for j in 0..p {
        for k in j + 1..p {
            if m[(j, k)] != 0.0 || m[(k, j)] != 0.0 {
                set.edges.insert((j, k));
            }
        }
    }
    set
}

/// Per-basis edge sets read from the exact zero pattern of `Z`.
pub fn extract_edges(solution: &JglSolution) -> Vec<EdgeSet> {
    solution.z.iter().map(edges_from_matrix).collect()
}

pub fn union_edges(sets: &[EdgeSet]) -> Result<EdgeSet> {
    let Some(first) = sets.first() else {
        return Err(Error::InvalidInput("union of zero edge sets".into()));
    };
    let mut out = EdgeSet::empty(first.p);
    for s in sets {
        if s.p != first.p {
            return Err(Error::DimensionMismatch {
                expected: first.p,
                found: s.p,
            });
        }
        out.edges.extend(s.edges.iter().copied());
    }
    Ok(out)
}

/// True and false positive rates of an estimated graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub tpr: f64,
    pub fpr: f64,
}

pub fn confusion(estimated: &EdgeSet, truth: &EdgeSet) -> Result<Rates> {
    if estimated.p != truth.p {
        return Err(Error::DimensionMismatch {
            expected: truth.p,
            found: estimated.p,
        });
    }
    if truth.is_empty() {
        return Err(Error::DegenerateTruth);
    }
    let true_pos = estimated.intersection_len(truth);
    let false_pos = estimated.len() - true_pos;
    let negatives = truth.max_edges() - truth.len();
    let fpr = if negatives == 0 {
        0.0
    } else {
        false_pos as f64 / negatives as f64
    };
    Ok(Rates {
        tpr: true_pos as f64 / truth.len() as f64,
        fpr,
    })
}

/// ROC points sorted by false positive rate, including both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// `(fpr, tpr)` pairs.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Sorts `(fpr, tpr)` points, adds `(0, 0)` and `(1, 1)`, and keeps the
/// largest `tpr` for each distinct `fpr`.
pub fn roc_curve(points: &[(f64, f64)]) -> Result<RocCurve> {
    for &(fpr, tpr) in points {
        if !(0.0..=1.0).contains(&fpr) || !(0.0..=1.0).contains(&tpr) {
            return Err(Error::Range(format!("ROC point ({fpr}, {tpr}) outside [0, 1]²")));
        }
    }
    let mut all: Vec<(f64, f64)> = points.to_vec();
    all.push((0.0, 0.0));
    all.push((1.0, 1.0));
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut collapsed: Vec<(f64, f64)> = Vec::with_capacity(all.len());
    for (fpr, tpr) in all {
        match collapsed.last_mut() {
            Some(last) if last.0 == fpr => last.1 = last.1.max(tpr),
            _ => collapsed.push((fpr, tpr)),
        }
    }
    Ok(RocCurve { points: collapsed })
}

/// Trapezoidal area under the curve for `fpr ∈ [0, upper]`.
fn partial_area(curve: &RocCurve, upper: f64) -> f64 {
    let mut area = 0.0;
    for w in curve.points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 >= upper {
            break;
        }
        if x1 <= upper {
            area += 0.5 * (x1 - x0) * (y0 + y1);
        } else {
            let y_cut = y0 + (y1 - y0) * (upper - x0) / (x1 - x0);
            area += 0.5 * (upper - x0) * (y0 + y_cut);
        }
    }
    area
}

pub fn auc(curve: &RocCurve) -> f64 {
    partial_area(curve, 1.0)
}

/// Area for `fpr ∈ [0, 0.15]`, divided by 0.15 so a perfect curve scores 1.
pub fn auc15(curve: &RocCurve) -> f64 {
    partial_area(curve, 0.15) / 0.15
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(p: usize, pairs: &[(usize, usize)]) -> EdgeSet {
        EdgeSet::from_pairs(p, pairs.iter().copied()).unwrap()
    }

    fn solution_with(z: Vec<DMatrix<f64>>) -> JglSolution {
        JglSolution {
            xi: z.clone(),
            dual: z.clone(),
            z,
            rho: 1.0,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
            objective: 0.0,
            objective_increases: 0,
        }
    }

    #[test]
    fn extract_examples() {
        let diag = DMatrix::from_diagonal_element(3, 3, 2.0);
        let mut one = DMatrix::identity(3, 3);
        one[(0, 1)] = 0.3;
        one[(1, 0)] = 0.3;
        let dense = DMatrix::from_element(3, 3, 0.1);
        let sets = extract_edges(&solution_with(vec![diag, one, dense]));
        assert!(sets[0].is_empty());
        assert_eq!(sets[1], set(3, &[(0, 1)]));
        assert_eq!(sets[2], set(3, &[(0, 1), (0, 2), (1, 2)]));
    }

    #[test]
    fn union_examples() {
        let a = set(3, &[(0, 1)]);
        let b = set(3, &[(1, 2)]);
        assert_eq!(union_edges(&[a.clone(), b]).unwrap(), set(3, &[(0, 1), (1, 2)]));
        assert_eq!(union_edges(&[a.clone(), EdgeSet::empty(3)]).unwrap(), a);
        assert_eq!(union_edges(&[a.clone(), a.clone(), a.clone()]).unwrap(), a);
        assert!(matches!(
            union_edges(&[a, EdgeSet::empty(4)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn edge_set_rejects_self_loops_and_range() {
        assert!(EdgeSet::from_pairs(3, [(1, 1)]).is_err());
        assert!(EdgeSet::from_pairs(3, [(0, 3)]).is_err());
        assert_eq!(set(3, &[(2, 0)]).iter().next(), Some((0, 2)));
    }

    #[test]
    fn confusion_examples() {
        let truth = set(3, &[(0, 1)]);
        let r = confusion(&set(3, &[(0, 1), (0, 2)]), &truth).unwrap();
        assert_eq!((r.tpr, r.fpr), (1.0, 0.5));
        let r = confusion(&truth, &truth).unwrap();
        assert_eq!((r.tpr, r.fpr), (1.0, 0.0));
        let r = confusion(&EdgeSet::empty(3), &truth).unwrap();
        assert_eq!((r.tpr, r.fpr), (0.0, 0.0));
        assert!(matches!(
            confusion(&truth, &EdgeSet::empty(3)),
            Err(Error::DegenerateTruth)
        ));
    }

    #[test]
    fn roc_examples() {
        let c = roc_curve(&[(0.5, 1.0)]).unwrap();
        assert!((auc(&c) - 0.75).abs() < 1e-12);
        let c = roc_curve(&[(0.0, 1.0)]).unwrap();
        assert_eq!(c.points(), &[(0.0, 1.0), (1.0, 1.0)]);
        assert!((auc(&c) - 1.0).abs() < 1e-12);
        assert!((auc15(&c) - 1.0).abs() < 1e-12);
        let c = roc_curve(&[(0.25, 0.25), (0.75, 0.75)]).unwrap();
        assert!((auc(&c) - 0.5).abs() < 1e-12);
        // chance line over [0, 0.15]: 0.15²/2 / 0.15
        assert!((auc15(&c) - 0.075).abs() < 1e-12);
        assert!(matches!(roc_curve(&[(1.2, 0.5)]), Err(Error::Range(_))));
    }

    #[test]
    fn roc_ties_keep_max() {
        let c = roc_curve(&[(0.1, 0.2), (0.1, 0.6), (0.1, 0.4)]).unwrap();
        assert_eq!(c.points(), &[(0.0, 0.0), (0.1, 0.6), (1.0, 1.0)]);
        // interpolation at 0.15 between (0.1, 0.6) and (1, 1)
        let y = 0.6 + 0.4 * 0.05 / 0.9;
        let expected = (0.5 * 0.1 * 0.6 + 0.5 * 0.05 * (0.6 + y)) / 0.15;
        assert!((auc15(&c) - expected).abs() < 1e-12);
    }
}
