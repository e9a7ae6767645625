//! Binary regression tree with axis-aligned splits and scalar leaf values.
//!
//! Nodes live in an arena; pruned children go on a free list so the arena
//! stays small across long chains.

use serde::Serialize;

use crate::data::CutpointGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitRule {
    pub column: usize,
    pub cut: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    free: Vec<usize>,
}

/// A leaf together with its depth and the per-column availability of
/// candidate splits given the ancestor constraints.
#[derive(Debug, Clone)]
pub struct LeafSite {
    pub id: usize,
    pub depth: usize,
    /// (column, first available cut index, one-past-last cut index) for
    /// every column with at least one available cut.
    pub avail: Vec<(usize, usize, usize)>,
}

impl LeafSite {
    pub fn n_avail_cols(&self) -> usize {
        self.avail.len()
    }
}

impl Default for Tree {
    fn default() -> Self {
        Self::new()
    }
}

impl Tree {
    /// A single root leaf with value 0.
    pub fn new() -> Tree {
        Tree {
            nodes: vec![Node::Leaf { value: 0.0 }],
            free: Vec::new(),
        }
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn is_root_leaf(&self) -> bool {
        matches!(self.nodes[0], Node::Leaf { .. })
    }

    pub fn set_leaf_value(&mut self, id: usize, value: f64) {
        match &mut self.nodes[id] {
            Node::Leaf { value: v } => *v = value,
            _ => panic!("node {id} is not a leaf"),
        }
    }

    pub fn leaf_value(&self, id: usize) -> f64 {
        match &self.nodes[id] {
            Node::Leaf { value } => *value,
            _ => panic!("node {id} is not a leaf"),
        }
    }

    fn alloc(&mut self, node: Node) -> usize {
        if let Some(id) = self.free.pop() {
            self.nodes[id] = node;
            id
        } else {
            self.nodes.push(node);
            self.nodes.len() - 1
        }
    }

    /// Replaces leaf `id` by an internal node with the given rule and two
    /// fresh zero-valued leaves. Returns (left, right) ids.
    pub fn apply_grow(&mut self, id: usize, rule: SplitRule) -> (usize, usize) {
        debug_assert!(matches!(self.nodes[id], Node::Leaf { .. }));
        let left = self.alloc(Node::Leaf { value: 0.0 });
        let right = self.alloc(Node::Leaf { value: 0.0 });
        self.nodes[id] = Node::Internal { rule, left, right };
        (left, right)
    }

    /// Collapses internal node `id` (whose children must both be leaves)
    /// back to a zero-valued leaf.
    pub fn apply_prune(&mut self, id: usize) {
        let (left, right) = match &self.nodes[id] {
            Node::Internal { left, right, .. } => (*left, *right),
            _ => panic!("node {id} is not internal"),
        };
        debug_assert!(matches!(self.nodes[left], Node::Leaf { .. }));
        debug_assert!(matches!(self.nodes[right], Node::Leaf { .. }));
        self.free.push(left);
        self.free.push(right);
        self.nodes[id] = Node::Leaf { value: 0.0 };
    }

    /// Routes a row (given as a column-value accessor) to its leaf id.
    pub fn route<F: Fn(usize) -> f64>(&self, value: F) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Internal { rule, left, right } => {
                    id = if value(rule.column) <= rule.cut {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Piecewise-constant prediction for one row.
    pub fn predict<F: Fn(usize) -> f64>(&self, value: F) -> f64 {
        self.leaf_value(self.route(value))
    }

    /// True if any internal node splits on `column`.
    pub fn uses_column(&self, column: usize) -> bool {
        self.live_ids().any(|id| {
            matches!(&self.nodes[id], Node::Internal { rule, .. } if rule.column == column)
        })
    }

    fn live_ids(&self) -> impl Iterator<Item = usize> + '_ {
        // DFS from the root; orphaned free-list entries are skipped.
        let mut stack = vec![0usize];
        std::iter::from_fn(move || {
            let id = stack.pop()?;
            if let Node::Internal { left, right, .. } = &self.nodes[id] {
                stack.push(*right);
                stack.push(*left);
            }
            Some(id)
        })
    }

    /// Internal nodes whose both children are leaves, in DFS order.
    pub fn prunable_nodes(&self) -> Vec<usize> {
        self.live_ids()
            .filter(|&id| match &self.nodes[id] {
                Node::Internal { left, right, .. } => {
                    matches!(self.nodes[*left], Node::Leaf { .. })
                        && matches!(self.nodes[*right], Node::Leaf { .. })
                }
                Node::Leaf { .. } => false,
            })
            .collect()
    }

    /// All leaves with their depth and split availability, in DFS order.
    pub fn leaf_sites(&self, grid: &CutpointGrid) -> Vec<LeafSite> {
        let mut out = Vec::new();
        let bounds: Vec<(usize, usize)> = grid.cuts.iter().map(|c| (0, c.len())).collect();
        self.collect_sites(0, 0, bounds, grid, &mut out);
        out
    }

    fn collect_sites(
        &self,
        id: usize,
        depth: usize,
        bounds: Vec<(usize, usize)>,
        grid: &CutpointGrid,
        out: &mut Vec<LeafSite>,
    ) {
        match &self.nodes[id] {
            Node::Leaf { .. } => {
                let avail = bounds
                    .iter()
                    .enumerate()
                    .filter(|(_, (lo, hi))| hi > lo)
                    .map(|(c, (lo, hi))| (c, *lo, *hi))
                    .collect();
                out.push(LeafSite { id, depth, avail });
            }
            Node::Internal { rule, left, right } => {
                // cut index within this node's available range
                let cuts = &grid.cuts[rule.column];
                let cut_idx = cuts
                    .iter()
                    .position(|&c| c == rule.cut)
                    .expect("split cut must be a member of the grid");
                let (lo, hi) = bounds[rule.column];
                debug_assert!(lo <= cut_idx && cut_idx < hi);
                let mut lb = bounds.clone();
                lb[rule.column] = (lo, cut_idx);
                self.collect_sites(*left, depth + 1, lb, grid, out);
                let mut rb = bounds;
                rb[rule.column] = (cut_idx + 1, hi);
                self.collect_sites(*right, depth + 1, rb, grid, out);
            }
        }
    }

    /// Like `leaf_sites` but for a single node id (leaf or internal).
    pub fn site_of(&self, target: usize, grid: &CutpointGrid) -> Option<(usize, Vec<(usize, usize, usize)>)> {
        let bounds: Vec<(usize, usize)> = grid.cuts.iter().map(|c| (0, c.len())).collect();
        self.find_site(0, target, 0, bounds, grid)
    }

    fn find_site(
        &self,
        id: usize,
        target: usize,
        depth: usize,
        bounds: Vec<(usize, usize)>,
        grid: &CutpointGrid,
    ) -> Option<(usize, Vec<(usize, usize, usize)>)> {
        if id == target {
            let avail = bounds
                .iter()
                .enumerate()
                .filter(|(_, (lo, hi))| hi > lo)
                .map(|(c, (lo, hi))| (c, *lo, *hi))
                .collect();
            return Some((depth, avail));
        }
        match &self.nodes[id] {
            Node::Leaf { .. } => None,
            Node::Internal { rule, left, right } => {
                let cuts = &grid.cuts[rule.column];
                let cut_idx = cuts.iter().position(|&c| c == rule.cut)?;
                let (lo, hi) = bounds[rule.column];
                let mut lb = bounds.clone();
                lb[rule.column] = (lo, cut_idx);
                if let Some(hit) = self.find_site(*left, target, depth + 1, lb, grid) {
                    return Some(hit);
                }
                let mut rb = bounds;
                rb[rule.column] = (cut_idx + 1, hi);
                self.find_site(*right, target, depth + 1, rb, grid)
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    /// Leaf ids in DFS preorder.
    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.live_ids()
            .filter(|&id| matches!(self.nodes[id], Node::Leaf { .. }))
    }

    /// Arena capacity (upper bound on any live node id).
    pub fn arena_len(&self) -> usize {
        self.nodes.len()
    }

    pub fn max_depth(&self) -> usize {
        fn depth_of(tree: &Tree, id: usize) -> usize {
            match tree.node(id) {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => {
                    1 + depth_of(tree, *left).max(depth_of(tree, *right))
                }
            }
        }
        depth_of(self, 0)
    }

    /// Canonical structure encoding: identical strings iff the trees have
    /// the same topology and split rules (leaf values ignored).
    pub fn topology_key(&self) -> String {
        fn enc(tree: &Tree, id: usize, out: &mut String) {
            match tree.node(id) {
                Node::Leaf { .. } => out.push('L'),
                Node::Internal { rule, left, right } => {
                    out.push_str(&format!("S{}:{:x}(", rule.column, rule.cut.to_bits()));
                    enc(tree, *left, out);
                    out.push_str(")(");
                    enc(tree, *right, out);
                    out.push(')');
                }
            }
        }
        let mut s = String::new();
        enc(self, 0, &mut s);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_col_grid(cuts: Vec<f64>) -> CutpointGrid {
        CutpointGrid { cuts: vec![cuts] }
    }

    #[test]
    fn routing_partitions_rows() {
        let mut t = Tree::new();
        t.apply_grow(0, SplitRule { column: 0, cut: 0.5 });
        let leaf_a = t.route(|_| 0.2);
        let leaf_b = t.route(|_| 0.8);
        assert_ne!(leaf_a, leaf_b);
        assert_eq!(t.n_leaves(), 2);
    }

    #[test]
    fn availability_respects_ancestors() {
        let grid = one_col_grid(vec![1.5, 2.5, 3.5]);
        let mut t = Tree::new();
        t.apply_grow(0, SplitRule { column: 0, cut: 2.5 });
        let sites = t.leaf_sites(&grid);
        assert_eq!(sites.len(), 2);
        // left child can only use 1.5, right only 3.5
        assert_eq!(sites[0].avail, vec![(0, 0, 1)]);
        assert_eq!(sites[1].avail, vec![(0, 2, 3)]);
    }

    #[test]
    fn grow_then_prune_restores_topology() {
        let grid = one_col_grid(vec![1.5, 2.5, 3.5]);
        let mut t = Tree::new();
        t.apply_grow(0, SplitRule { column: 0, cut: 2.5 });
        let key = t.topology_key();
        let (l, _) = match t.node(0) {
            Node::Internal { left, right, .. } => (*left, *right),
            _ => unreachable!(),
        };
        t.apply_grow(l, SplitRule { column: 0, cut: 1.5 });
        t.apply_prune(l);
        assert_eq!(t.topology_key(), key);
        assert_eq!(t.leaf_sites(&grid).len(), 2);
    }

    #[test]
    fn prunable_nodes_counted() {
        let mut t = Tree::new();
        assert!(t.prunable_nodes().is_empty());
        t.apply_grow(0, SplitRule { column: 0, cut: 2.5 });
        assert_eq!(t.prunable_nodes(), vec![0]);
    }
}
