//! Cell assignment functions built from a histogram transform (data
//! independent grid) or from a rotation plus recursive median splitting
//! (data adaptive tree).

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};

use crate::error::{check_dim, HteError, Result};
use crate::transform::HistogramTransform;

pub type CellId = usize;

/// Partition induced by the unit grid of a histogram transform.
///
/// Only bins that received a training point get a cell id; ids are dense and
/// follow first occurrence over the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    transform: HistogramTransform,
    keys: Vec<Vec<i64>>,
    key_to_cell: HashMap<Vec<i64>, CellId>,
}

/// Build a grid partition and return it with the cell of every training row.
pub fn build_grid(
    h: &HistogramTransform,
    x: ArrayView2<f64>,
) -> Result<(GridPartition, Vec<CellId>)> {
    check_dim(h.dim(), x.ncols())?;
    let d = h.dim();
    let mut keys = Vec::new();
    let mut key_to_cell = HashMap::new();
    let mut assignment = Vec::with_capacity(x.nrows());
    let mut buf = vec![0.0; d];
    let mut key = vec![0i64; d];
    let mut row_buf = vec![0.0; d];
    for row in x.rows() {
        for (b, v) in row_buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        h.bin_key_into(&row_buf, &mut buf, &mut key);
        let id = match key_to_cell.get(&key) {
            Some(&id) => id,
            None => {
                let id = keys.len();
                keys.push(key.clone());
                key_to_cell.insert(key.clone(), id);
                id
            }
        };
        assignment.push(id);
    }
    Ok((
        GridPartition {
            transform: h.clone(),
            keys,
            key_to_cell,
        },
        assignment,
    ))
}

impl GridPartition {
    /// Rebuilds a partition from its transform and bin keys listed in cell order.
    pub fn from_parts(transform: HistogramTransform, keys: Vec<Vec<i64>>) -> Result<Self> {
        let mut key_to_cell = HashMap::with_capacity(keys.len());
        for (id, key) in keys.iter().enumerate() {
            check_dim(transform.dim(), key.len())?;
            if key_to_cell.insert(key.clone(), id).is_some() {
                return Err(HteError::Format(format!("duplicate bin key for cell {id}")));
            }
        }
        Ok(GridPartition {
            transform,
            keys,
            key_to_cell,
        })
    }

    pub fn transform(&self) -> &HistogramTransform {
        &self.transform
    }

    pub fn n_cells(&self) -> usize {
        self.keys.len()
    }

    /// Bin keys indexed by cell id.
    pub fn keys(&self) -> &[Vec<i64>] {
        &self.keys
    }

    pub fn dim(&self) -> usize {
        self.transform.dim()
    }

    /// Cell of `x`, or `None` when its bin held no training point.
    pub fn assign(&self, x: &[f64]) -> Result<Option<CellId>> {
        let key = self.transform.bin_key(x)?;
        Ok(self.key_to_cell.get(&key).copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Split {
        dim: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        cell: CellId,
    },
}

/// Adaptive partition of the rotated space.
///
/// Internal nodes split on one rotated coordinate: values `< threshold` go
/// left, values `≥ threshold` go right. Nodes are stored in preorder with the
/// root at index 0, and leaf cell ids follow the same preorder.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveTree {
    rotation: Array2<f64>,
    nodes: Vec<TreeNode>,
    min_leaf: usize,
    n_cells: usize,
}

/// Rotates the rows of `x` by `rotation` and splits recursively until every
/// cell holds at most `m` points.
///
/// A cell is split on the rotated coordinate of largest sample variance
/// (lowest index on ties) at the median of that coordinate. A cell whose
/// points coincide in every coordinate is kept as a leaf whatever its size.
pub fn build_adaptive(
    rotation: &Array2<f64>,
    x: ArrayView2<f64>,
    m: usize,
) -> Result<(AdaptiveTree, Vec<CellId>)> {
    if m == 0 {
        return Err(HteError::config("min_leaf", "must be ≥ 1"));
    }
    let d = rotation.nrows();
    check_dim(d, x.ncols())?;
    let mut rotated = Array2::<f64>::zeros(x.dim());
    let mut row_buf = vec![0.0; d];
    for (row, mut out) in x.rows().into_iter().zip(rotated.rows_mut()) {
        for (b, v) in row_buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        rotate_into(
            rotation,
            &row_buf,
            out.as_slice_mut().expect("standard layout"),
        );
    }

    let mut builder = TreeBuilder {
        points: rotated.view(),
        m,
        nodes: Vec::new(),
        assignment: vec![usize::MAX; x.nrows()],
        n_cells: 0,
    };
    let all: Vec<usize> = (0..x.nrows()).collect();
    builder.grow(all);
    let TreeBuilder {
        nodes,
        assignment,
        n_cells,
        ..
    } = builder;
    Ok((
        AdaptiveTree {
            rotation: rotation.clone(),
            nodes,
            min_leaf: m,
            n_cells,
        },
        assignment,
    ))
}

struct TreeBuilder<'a> {
    points: ArrayView2<'a, f64>,
    m: usize,
    nodes: Vec<TreeNode>,
    assignment: Vec<CellId>,
    n_cells: usize,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, idx: Vec<usize>) -> usize {
        let at = self.nodes.len();
        let split = if idx.len() > self.m {
            self.choose_split(&idx)
        } else {
            None
        };
        match split {
            None => {
                let cell = self.n_cells;
                self.n_cells += 1;
                for &i in &idx {
                    self.assignment[i] = cell;
                }
                self.nodes.push(TreeNode::Leaf { cell });
            }
            Some((dim, threshold)) => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
                    .into_iter()
                    .partition(|&i| self.points[[i, dim]] < threshold);
                self.nodes.push(TreeNode::Split {
                    dim,
                    threshold,
                    left: 0,
                    right: 0,
                });
                let left = self.grow(left_idx);
                let right = self.grow(right_idx);
                self.nodes[at] = TreeNode::Split {
                    dim,
                    threshold,
                    left,
                    right,
                };
            }
        }
        at
    }

    fn choose_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len() as f64;
        let d = self.points.ncols();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..d {
            let mean = idx.iter().map(|&i| self.points[[i, j]]).sum::<f64>() / n;
            let var = idx
                .iter()
                .map(|&i| (self.points[[i, j]] - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            if var > 0.0 && best.is_none_or(|(_, v)| var > v) {
                best = Some((j, var));
            }
        }
        let (dim, _) = best?;

        let mut values: Vec<f64> = idx.iter().map(|&i| self.points[[i, dim]]).collect();
        values.sort_by(f64::total_cmp);
        let k = values.len();
        let median = if k.is_multiple_of(2) {
            let (a, b) = (values[k / 2 - 1], values[k / 2]);
            a + (b - a) / 2.0
        } else {
            values[k / 2]
        };
        // Heavy ties at the minimum can leave the left side empty; move the
        // threshold up to the next distinct value.
        let threshold = if median <= values[0] {
            *values.iter().find(|&&v| v > values[0])?
        } else {
            median
        };
        Some((dim, threshold))
    }
}

impl AdaptiveTree {
    pub fn from_parts(
        rotation: Array2<f64>,
        nodes: Vec<TreeNode>,
        min_leaf: usize,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(HteError::Format("tree has no nodes".into()));
        }
        let d = rotation.nrows();
        let mut n_cells = 0;
        for (at, node) in nodes.iter().enumerate() {
            match *node {
                TreeNode::Leaf { cell } => {
                    if cell != n_cells {
                        return Err(HteError::Format("leaf ids are not in preorder".into()));
                    }
                    n_cells += 1;
                }
                TreeNode::Split {
                    dim, left, right, ..
                } => {
                    if dim >= d
                        || left <= at
                        || right <= at
                        || left >= nodes.len()
                        || right >= nodes.len()
                    {
                        return Err(HteError::Format(format!("malformed split node {at}")));
                    }
                }
            }
        }
        Ok(AdaptiveTree {
            rotation,
            nodes,
            min_leaf,
            n_cells,
        })
    }

    pub fn rotation(&self) -> &Array2<f64> {
        &self.rotation
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn min_leaf(&self) -> usize {
        self.min_leaf
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dim(&self) -> usize {
        self.rotation.nrows()
    }

    /// Leaf reached by `x`. Trees cover the whole rotated space.
    pub fn assign(&self, x: &[f64]) -> Result<CellId> {
        check_dim(self.dim(), x.len())?;
        let mut rotated = vec![0.0; self.dim()];
        Ok(self.assign_with(x, &mut rotated))
    }

    fn assign_with(&self, x: &[f64], rotated: &mut [f64]) -> CellId {
        rotate_into(&self.rotation, x, rotated);
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { cell } => return cell,
                TreeNode::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    at = if rotated[dim] < threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }
}

/// `out = R·x`. Training and lookup share this so thresholds see identical values.
fn rotate_into(rotation: &Array2<f64>, x: &[f64], out: &mut [f64]) {
    for (i, r) in out.iter_mut().enumerate() {
        *r = rotation.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// Either kind of partition held by an ensemble member.
#[derive(Debug, Clone, PartialEq)]
pub enum Partition {
    Grid(GridPartition),
    Adaptive(AdaptiveTree),
}

impl Partition {
    pub fn dim(&self) -> usize {
        match self {
            Partition::Grid(g) => g.dim(),
            Partition::Adaptive(t) => t.dim(),
        }
    }

    pub fn n_cells(&self) -> usize {
        match self {
            Partition::Grid(g) => g.n_cells(),
            Partition::Adaptive(t) => t.n_cells(),
        }
    }

    pub fn assign(&self, x: &[f64]) -> Result<Option<CellId>> {
        match self {
            Partition::Grid(g) => g.assign(x),
            Partition::Adaptive(t) => t.assign(x).map(Some),
        }
    }

    /// Cells for every row of `x`.
    pub fn assign_rows(&self, x: ArrayView2<f64>) -> Result<Vec<Option<CellId>>> {
        check_dim(self.dim(), x.ncols())?;
        let d = self.dim();
        let mut buf = vec![0.0; d];
        let mut row_buf = vec![0.0; d];
        let mut key = vec![0i64; d];
        Ok(x.rows()
            .into_iter()
            .map(|row| {
                for (b, v) in row_buf.iter_mut().zip(row.iter()) {
                    *b = *v;
                }
                match self {
                    Partition::Grid(g) => {
                        g.transform.bin_key_into(&row_buf, &mut buf, &mut key);
                        g.key_to_cell.get(&key).copied()
                    }
                    Partition::Adaptive(t) => Some(t.assign_with(&row_buf, &mut buf)),
                }
            })
            .collect())
    }
}

/// Training rows grouped by cell id.
pub fn group_by_cell(assignment: &[CellId], n_cells: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); n_cells];
    for (row, &cell) in assignment.iter().enumerate() {
        groups[cell].push(row);
    }
    groups
}
