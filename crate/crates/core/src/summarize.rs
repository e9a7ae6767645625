//! Posterior exploration: a greedy "fit-the-fit" regression tree over the
//! per-unit effect point estimates, and posterior contrasts between
//! covariate-defined subgroups.

use serde::Serialize;

use crate::data::{build_cutpoints, DesignMatrix};
use crate::error::{Error, Result};
use crate::stats;

/// Node of the summary tree. `share` is the fraction of all rows routed
/// through this node.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryNode {
    pub mean: f64,
    pub n: usize,
    pub share: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SummarySplit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummarySplit {
    pub column: String,
    pub column_index: usize,
    pub cut: f64,
    pub left: Box<SummaryNode>,
    pub right: Box<SummaryNode>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryTree {
    pub root: SummaryNode,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl SummaryTree {
    /// Column index of the root split, if any.
    pub fn first_split_column(&self) -> Option<usize> {
        self.root.split.as_ref().map(|s| s.column_index)
    }

    /// Sum of squared deviations of tau_hat from its leaf means.
    pub fn training_loss(&self, design: &DesignMatrix, tau_hat: &[f64]) -> f64 {
        (0..tau_hat.len())
            .map(|i| {
                let mut node = &self.root;
                while let Some(s) = &node.split {
                    node = if design.value(i, s.column_index) <= s.cut {
                        &s.left
                    } else {
                        &s.right
                    };
                }
                (tau_hat[i] - node.mean).powi(2)
            })
            .sum()
    }

    /// Indented text rendering: one line per node with mean effect, row
    /// count and share.
    pub fn to_text(&self) -> String {
        fn walk(node: &SummaryNode, label: &str, indent: usize, out: &mut String) {
            out.push_str(&" ".repeat(indent * 2));
            out.push_str(&format!(
                "{label}: mean={:.3} n={} share={:.1}%\n",
                node.mean,
                node.n,
                node.share * 100.0
            ));
            if let Some(s) = &node.split {
                walk(
                    &s.left,
                    &format!("{} <= {:.4}", s.column, s.cut),
                    indent + 1,
                    out,
                );
                walk(
                    &s.right,
                    &format!("{} > {:.4}", s.column, s.cut),
                    indent + 1,
                    out,
                );
            }
        }
        let mut out = String::new();
        walk(&self.root, "root", 0, &mut out);
        out
    }
}

pub fn default_min_leaf(n: usize) -> usize {
    25.max(n / 40)
}

/// Greedy variance-reduction tree over the point estimates: at each node the
/// split minimizing the summed within-child squared deviation is chosen
/// exhaustively over the cutpoint grid; recursion stops at max_depth,
/// min_leaf, or zero gain.
pub fn fit_summary_tree(
    design: &DesignMatrix,
    tau_hat: &[f64],
    max_depth: usize,
    min_leaf: usize,
) -> Result<SummaryTree> {
    if design.n_rows() != tau_hat.len() {
        return Err(Error::validation("tau_hat length does not match design"));
    }
    if max_depth == 0 || min_leaf == 0 {
        return Err(Error::validation("max_depth and min_leaf must be positive"));
    }
    let n = tau_hat.len();
    if n == 0 {
        return Err(Error::validation("empty design"));
    }
    let grid = build_cutpoints(design, 100);

    fn build(
        rows: Vec<usize>,
        depth: usize,
        total: usize,
        design: &DesignMatrix,
        grid: &crate::data::CutpointGrid,
        tau_hat: &[f64],
        max_depth: usize,
        min_leaf: usize,
    ) -> SummaryNode {
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&i| tau_hat[i]).sum();
        let mean = sum / n as f64;
        let sse: f64 = rows.iter().map(|&i| (tau_hat[i] - mean).powi(2)).sum();
        let mut node = SummaryNode {
            mean,
            n,
            share: n as f64 / total as f64,
            split: None,
        };
        if depth >= max_depth || n < 2 * min_leaf || sse <= 0.0 {
            return node;
        }

        let mut best: Option<(usize, f64, f64)> = None; // (col, cut, gain)
        for col in 0..design.n_cols() {
            for &cut in &grid.cuts[col] {
                let mut nl = 0usize;
                let mut sl = 0.0;
                for &i in &rows {
                    if design.value(i, col) <= cut {
                        nl += 1;
                        sl += tau_hat[i];
                    }
                }
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let sr = sum - sl;
                // gain = parent SSE - child SSEs = sum of (sum v)^2/n terms
                let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - sum * sum / n as f64;
                let better = match best {
                    None => gain > 1e-12,
                    Some((_, _, g)) => gain > g,
                };
                if better {
                    best = Some((col, cut, gain));
                }
            }
        }

        if let Some((col, cut, _)) = best {
            let (lrows, rrows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| design.value(i, col) <= cut);
            let left = build(
                lrows, depth + 1, total, design, grid, tau_hat, max_depth, min_leaf,
            );
            let right = build(
                rrows, depth + 1, total, design, grid, tau_hat, max_depth, min_leaf,
            );
            node.split = Some(SummarySplit {
                column: design.origin[col].name.clone(),
                column_index: col,
                cut,
                left: Box::new(left),
                right: Box::new(right),
            });
        }
        node
    }

    let root = build(
        (0..n).collect(),
        0,
        n,
        design,
        &grid,
        tau_hat,
        max_depth,
        min_leaf,
    );
    Ok(SummaryTree {
        root,
        max_depth,
        min_leaf,
    })
}

/// Posterior of the difference in subgroup mean effects.
#[derive(Debug, Clone, Serialize)]
pub struct ContrastReport {
    pub draws: Vec<f64>,
    pub mean: f64,
    pub lower95: f64,
    pub upper95: f64,
    /// P(diff > 0) under strict inequality; exact zeros count as not-greater.
    pub prob_positive: f64,
}

/// Per-draw difference between the mean effect over rows `s1` and over
/// rows `s2`.
pub fn subgroup_contrast(
    tau_draws: &[Vec<f64>],
    s1: &[usize],
    s2: &[usize],
) -> Result<ContrastReport> {
    if tau_draws.is_empty() {
        return Err(Error::validation("no posterior draws"));
    }
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::validation("subgroups must be nonempty"));
    }
    let n = tau_draws[0].len();
    if s1.iter().chain(s2).any(|&i| i >= n) {
        return Err(Error::validation("subgroup index out of range"));
    }
    let draws: Vec<f64> = tau_draws
        .iter()
        .map(|t| {
            let m1: f64 = s1.iter().map(|&i| t[i]).sum::<f64>() / s1.len() as f64;
            let m2: f64 = s2.iter().map(|&i| t[i]).sum::<f64>() / s2.len() as f64;
            m1 - m2
        })
        .collect();
    let mean = stats::mean(&draws);
    let lower95 = stats::percentile(&draws, 0.025);
    let upper95 = stats::percentile(&draws, 0.975);
    let prob_positive = draws.iter().filter(|&&d| d > 0.0).count() as f64 / draws.len() as f64;
    Ok(ContrastReport {
        draws,
        mean,
        lower95,
        upper95,
        prob_positive,
    })
}
