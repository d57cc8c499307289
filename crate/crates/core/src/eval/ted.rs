//! Zhang–Shasha tree edit distance over ordered labeled trees.

use serde::{Deserialize, Serialize};

use super::tree::FlowTree;

/// Costs of the three edit operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCostModel {
    pub insert: u32,
    pub delete: u32,
    /// Charged only when the labels differ.
    pub relabel: u32,
}

impl Default for EditCostModel {
    fn default() -> Self {
        Self {
            insert: 1,
            delete: 1,
            relabel: 1,
        }
    }
}

impl EditCostModel {
    pub fn unit() -> Self {
        Self::default()
    }
}

/// A tree in postorder with leftmost-leaf indices and keyroots, reusable
/// across many distance computations.
#[derive(Debug, Clone)]
pub struct Postorder<'t> {
    labels: Vec<&'t str>,
    /// `leftmost[i]`: postorder index of the leftmost leaf under node `i`.
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'t> Postorder<'t> {
    pub fn new(tree: &'t FlowTree) -> Self {
        let n = tree.len();
        let mut labels = Vec::with_capacity(n);
        let mut leftmost = Vec::with_capacity(n);
        // Iterative postorder: (node, next child index, leftmost leaf so far).
        let mut stack: Vec<(usize, usize, Option<usize>)> = vec![(tree.root(), 0, None)];
        while let Some(top) = stack.last_mut() {
            let (node, next, _) = *top;
            let kids = tree.children(node);
            if next < kids.len() {
                top.1 += 1;
                stack.push((kids[next], 0, None));
                continue;
            }
            let (_, _, lm) = stack.pop().expect("non-empty");
            let idx = labels.len();
            let lm = lm.unwrap_or(idx);
            labels.push(tree.label(node));
            leftmost.push(lm);
            if let Some(parent) = stack.last_mut() {
                parent.2.get_or_insert(lm);
            }
        }
        // The highest node for each distinct leftmost leaf.
        let mut seen = vec![false; n];
        let mut keyroots: Vec<usize> = (0..n)
            .rev()
            .filter(|&i| !std::mem::replace(&mut seen[leftmost[i]], true))
            .collect();
        keyroots.reverse();
        Self {
            labels,
            leftmost,
            keyroots,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn tree_edit_distance(a: &FlowTree, b: &FlowTree, costs: &EditCostModel) -> u64 {
    distance(&Postorder::new(a), &Postorder::new(b), costs)
}

/// Edit distance between two prepared trees.
pub fn distance(a: &Postorder<'_>, b: &Postorder<'_>, costs: &EditCostModel) -> u64 {
    let (n, m) = (a.len(), b.len());
    let (del, ins, rel) = (costs.delete as u64, costs.insert as u64, costs.relabel as u64);
    let mut td = vec![0u64; n * m];
    // Forest distances, 1-based with row/column 0 for the empty forest.
    let mut fd = vec![0u64; (n + 1) * (m + 1)];
    let w = m + 1;

    for &i in &a.keyroots {
        for &j in &b.keyroots {
            let (li, lj) = (a.leftmost[i], b.leftmost[j]);
            // fd indices are offset so that li-1 maps to 0.
            let rows = i - li + 2;
            let cols = j - lj + 2;
            fd[0] = 0;
            for x in 1..rows {
                fd[x * w] = fd[(x - 1) * w] + del;
            }
            for y in 1..cols {
                fd[y] = fd[y - 1] + ins;
            }
            for x in 1..rows {
                let ni = li + x - 1;
                for y in 1..cols {
                    let nj = lj + y - 1;
                    let delete = fd[(x - 1) * w + y] + del;
                    let insert = fd[x * w + y - 1] + ins;
                    let v = if a.leftmost[ni] == li && b.leftmost[nj] == lj {
                        let cost = if a.labels[ni] == b.labels[nj] { 0 } else { rel };
                        let v = delete.min(insert).min(fd[(x - 1) * w + y - 1] + cost);
                        td[ni * m + nj] = v;
                        v
                    } else {
                        let px = a.leftmost[ni] - li;
                        let py = b.leftmost[nj] - lj;
                        delete.min(insert).min(fd[px * w + py] + td[ni * m + nj])
                    };
                    fd[x * w + y] = v;
                }
            }
        }
    }
    td[(n - 1) * m + (m - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(s: &str) -> FlowTree {
        FlowTree::leaf(s)
    }

    #[test]
    fn identical_is_zero() {
        let t = FlowTree::node("a", [FlowTree::node("b", [l("c")]), l("d")]);
        assert_eq!(tree_edit_distance(&t, &t, &EditCostModel::unit()), 0);
    }

    #[test]
    fn single_relabel() {
        assert_eq!(tree_edit_distance(&l("a"), &l("b"), &EditCostModel::unit()), 1);
    }

    #[test]
    fn textbook_pair() {
        // f(d(a c(b)) e) vs f(c(d(a b)) e): distance 2 under unit costs.
        let t1 = FlowTree::node(
            "f",
            [FlowTree::node("d", [l("a"), FlowTree::node("c", [l("b")])]), l("e")],
        );
        let t2 = FlowTree::node(
            "f",
            [FlowTree::node("c", [FlowTree::node("d", [l("a"), l("b")])]), l("e")],
        );
        assert_eq!(tree_edit_distance(&t1, &t2, &EditCostModel::unit()), 2);
    }

    #[test]
    fn postorder_leftmost_and_keyroots() {
        let t = FlowTree::node(
            "f",
            [FlowTree::node("d", [l("a"), FlowTree::node("c", [l("b")])]), l("e")],
        );
        let p = Postorder::new(&t);
        assert_eq!(p.labels, ["a", "b", "c", "d", "e", "f"]);
        assert_eq!(p.leftmost, [0, 1, 1, 0, 4, 0]);
        assert_eq!(p.keyroots, [2, 4, 5]);
    }

    #[test]
    fn deleting_a_subtree_costs_its_size() {
        let t = FlowTree::node("r", [l("x"), FlowTree::node("s", [l("y"), l("z")]), l("w")]);
        let u = t.without_subtree(t.find("s").unwrap());
        assert_eq!(tree_edit_distance(&t, &u, &EditCostModel::unit()), 3);
    }
}
