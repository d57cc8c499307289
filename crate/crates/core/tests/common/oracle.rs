//! Tree edit distance by memoized recursion over forests.
//!
//! For forests F and G with rightmost trees v and w:
//!   d(F, G) = min(d(F - v, G) + 1, d(F, G - w) + 1,
//!                 d(children(v), children(w)) + d(F - tree(v), G - tree(w)) + [label(v) != label(w)])
//! where `F - v` removes only the root of v, promoting its children.

use std::collections::HashMap;

use flowforge::eval::FlowTree;

type TreeId = u32;
type ForestId = u32;

#[derive(Default)]
pub struct Oracle {
    trees: Vec<(String, ForestId, u32)>,
    tree_ids: HashMap<(String, ForestId), TreeId>,
    forests: Vec<Vec<TreeId>>,
    forest_sizes: Vec<u32>,
    forest_ids: HashMap<Vec<TreeId>, ForestId>,
    memo: HashMap<(ForestId, ForestId), u32>,
    dense: Vec<u8>,
    dense_n: usize,
}

impl Oracle {
    pub fn new() -> Self {
        let mut o = Self::default();
        o.forest(Vec::new());
        o
    }

    fn forest(&mut self, trees: Vec<TreeId>) -> ForestId {
        if let Some(&id) = self.forest_ids.get(&trees) {
            return id;
        }
        let id = self.forests.len() as ForestId;
        let size = trees.iter().map(|&t| self.trees[t as usize].2).sum();
        self.forests.push(trees.clone());
        self.forest_sizes.push(size);
        self.forest_ids.insert(trees, id);
        id
    }

    pub fn intern(&mut self, t: &FlowTree) -> ForestId {
        let root = self.intern_node(t, t.root());
        self.forest(vec![root])
    }

    fn intern_node(&mut self, t: &FlowTree, node: usize) -> TreeId {
        let kids: Vec<TreeId> = t.children(node).iter().map(|&c| self.intern_node(t, c)).collect();
        let kid_forest = self.forest(kids);
        let key = (t.label(node).to_owned(), kid_forest);
        if let Some(&id) = self.tree_ids.get(&key) {
            return id;
        }
        let id = self.trees.len() as TreeId;
        let size = 1 + self.forest_sizes[kid_forest as usize];
        self.trees.push((key.0.clone(), kid_forest, size));
        self.tree_ids.insert(key, id);
        id
    }

    /// Switches to a dense memo table over every forest the recursion can
    /// reach from the trees interned so far. Call once, after interning.
    pub fn freeze(&mut self) {
        let mut stack: Vec<ForestId> = (0..self.forests.len() as ForestId).collect();
        let mut seen = vec![false; self.forests.len()];
        while let Some(f) = stack.pop() {
            if seen.len() <= f as usize {
                seen.resize(f as usize + 1, false);
            }
            if std::mem::replace(&mut seen[f as usize], true) {
                continue;
            }
            let trees = self.forests[f as usize].clone();
            let Some((&last, init)) = trees.split_last() else {
                continue;
            };
            let kids = self.trees[last as usize].1;
            let mut promoted = init.to_vec();
            promoted.extend(self.forests[kids as usize].clone());
            let a = self.forest(promoted);
            let b = self.forest(init.to_vec());
            stack.extend([a, b, kids]);
        }
        self.dense_n = self.forests.len();
        self.dense = vec![u8::MAX; self.dense_n * self.dense_n];
    }

    fn get(&self, a: ForestId, b: ForestId) -> Option<u32> {
        let (a, b) = (a as usize, b as usize);
        if a < self.dense_n && b < self.dense_n {
            let v = self.dense[a * self.dense_n + b];
            return (v != u8::MAX).then_some(v as u32);
        }
        self.memo.get(&(a as ForestId, b as ForestId)).copied()
    }

    fn set(&mut self, a: ForestId, b: ForestId, v: u32) {
        let (ai, bi) = (a as usize, b as usize);
        if ai < self.dense_n && bi < self.dense_n && v < u8::MAX as u32 {
            self.dense[ai * self.dense_n + bi] = v as u8;
        } else {
            self.memo.insert((a, b), v);
        }
    }

    pub fn forest_distance(&mut self, f: ForestId, g: ForestId) -> u32 {
        if let Some(v) = self.get(f, g) {
            return v;
        }
        let ft = self.forests[f as usize].clone();
        let gt = self.forests[g as usize].clone();
        let v = match (ft.split_last(), gt.split_last()) {
            (None, _) => self.forest_sizes[g as usize],
            (_, None) => self.forest_sizes[f as usize],
            (Some((&v, f_init)), Some((&w, g_init))) => {
                let (vl, vk, _) = self.trees[v as usize].clone();
                let (wl, wk, _) = self.trees[w as usize].clone();
                let mut f_del = f_init.to_vec();
                f_del.extend(self.forests[vk as usize].clone());
                let mut g_del = g_init.to_vec();
                g_del.extend(self.forests[wk as usize].clone());
                let f_del = self.forest(f_del);
                let g_del = self.forest(g_del);
                let f_rest = self.forest(f_init.to_vec());
                let g_rest = self.forest(g_init.to_vec());
                let delete = self.forest_distance(f_del, g) + 1;
                let insert = self.forest_distance(f, g_del) + 1;
                let relabel = u32::from(vl != wl);
                let matched = self.forest_distance(vk, wk) + self.forest_distance(f_rest, g_rest) + relabel;
                delete.min(insert).min(matched)
            }
        };
        self.set(f, g, v);
        v
    }

    pub fn distance(&mut self, a: &FlowTree, b: &FlowTree) -> u32 {
        let f = self.intern(a);
        let g = self.intern(b);
        self.forest_distance(f, g)
    }
}
