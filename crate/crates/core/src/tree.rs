//! Binomial scenario tree for the driving Wiener path.
//!
//! Every node at level `k` has `2^d` children, one per sign pattern of the
//! increment vector `(±sqrt(dt), ..., ±sqrt(dt))`, each with conditional
//! probability `2^-d`. Nodes of a level are numbered `0..(2^d)^k` so that the
//! children of node `i` are `i * 2^d + c`; the node a leaf passes through at
//! level `k` is therefore `leaf / (2^d)^(N - k)`.
//!
//! Leaf-indexed and node-indexed quantities may carry a row of `width`
//! values per entry, stored contiguously. This lets the same routines act
//! on scalars and on grid functions.

use crate::error::{Error, Result};

/// Largest number of steps allowed for `d = 1` and `d = 2`.
pub const MAX_STEPS: [usize; 2] = [16, 8];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    d: usize,
    n_steps: usize,
    horizon: f64,
    dt: f64,
    branching: usize,
    level_sizes: Vec<usize>,
    /// Increment vector of child slot `c`, flattened `c * d + j`.
    child_increments: Vec<f64>,
    /// Path value `omega` at each node, flattened per level as `node * d + j`.
    omega: Vec<Vec<f64>>,
}

/// A single node, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub level: usize,
    pub index: usize,
    pub parent: Option<usize>,
    /// Increment from the parent; empty at the root.
    pub increment: Vec<f64>,
}

impl ScenarioTree {
    pub fn new(d: usize, n_steps: usize, horizon: f64) -> Result<Self> {
        if d == 0 || d > MAX_STEPS.len() {
            return Err(Error::InvalidTree(format!("driving dimension must be 1 or 2, got {d}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidTree("at least one time step is required".into()));
        }
        if n_steps > MAX_STEPS[d - 1] {
            return Err(Error::TreeTooLarge {
                d,
                n_steps,
                max: MAX_STEPS[d - 1],
            });
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidTree(format!("horizon must be positive, got {horizon}")));
        }
        let branching = 1usize << d;
        let dt = horizon / n_steps as f64;
        let sq = dt.sqrt();
        let mut child_increments = vec![0.0; branching * d];
        for c in 0..branching {
            for j in 0..d {
                child_increments[c * d + j] = if (c >> j) & 1 == 0 { sq } else { -sq };
            }
        }
        let level_sizes: Vec<usize> = (0..=n_steps).map(|k| branching.pow(k as u32)).collect();
        let mut omega = vec![vec![0.0; d]];
        for k in 1..=n_steps {
            let prev = &omega[k - 1];
            let mut cur = vec![0.0; level_sizes[k] * d];
            for i in 0..level_sizes[k] {
                let (p, c) = (i / branching, i % branching);
                for j in 0..d {
                    cur[i * d + j] = prev[p * d + j] + child_increments[c * d + j];
                }
            }
            omega.push(cur);
        }
        Ok(Self {
            d,
            n_steps,
            horizon,
            dt,
            branching,
            level_sizes,
            child_increments,
            omega,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.n_steps {
            self.horizon
        } else {
            level as f64 * self.dt
        }
    }

    pub fn level_size(&self, level: usize) -> usize {
        self.level_sizes[level]
    }

    pub fn n_leaves(&self) -> usize {
        self.level_sizes[self.n_steps]
    }

    pub fn total_nodes(&self) -> usize {
        self.level_sizes.iter().sum()
    }

    /// Probability of each node at `level`.
    pub fn prob(&self, level: usize) -> f64 {
        1.0 / self.level_sizes[level] as f64
    }

    /// Driving path value at a node.
    pub fn omega(&self, level: usize, index: usize) -> &[f64] {
        &self.omega[level][index * self.d..(index + 1) * self.d]
    }

    /// Increment vector of child slot `c`.
    pub fn child_increment(&self, c: usize) -> &[f64] {
        &self.child_increments[c * self.d..(c + 1) * self.d]
    }

    /// Increment into a node from its parent (level >= 1).
    pub fn increment(&self, level: usize, index: usize) -> &[f64] {
        debug_assert!(level >= 1);
        self.child_increment(index % self.branching)
    }

    pub fn node(&self, level: usize, index: usize) -> Result<TreeNode> {
        self.check_level(level)?;
        if index >= self.level_sizes[level] {
            return Err(Error::InvalidTree(format!(
                "node {index} does not exist at level {level}"
            )));
        }
        Ok(TreeNode {
            level,
            index,
            parent: (level > 0).then(|| index / self.branching),
            increment: if level > 0 {
                self.increment(level, index).to_vec()
            } else {
                Vec::new()
            },
        })
    }

    /// Node index at `level` on the path to `leaf`.
    pub fn ancestor(&self, leaf: usize, level: usize) -> usize {
        leaf / self.branching.pow((self.n_steps - level) as u32)
    }

    /// Node indices at levels `0..=N` along the path to `leaf`.
    pub fn leaf_path(&self, leaf: usize) -> Vec<usize> {
        (0..=self.n_steps).map(|k| self.ancestor(leaf, k)).collect()
    }

    pub fn check_level(&self, level: usize) -> Result<()> {
        if level > self.n_steps {
            return Err(Error::LevelOutOfRange {
                level,
                n_steps: self.n_steps,
            });
        }
        Ok(())
    }

    /// Validates a node sequence as a root-to-leaf path and returns its leaf.
    pub fn path_leaf(&self, path: &[usize]) -> Result<usize> {
        if path.len() != self.n_steps + 1 || path[0] != 0 {
            return Err(Error::InvalidTree("a leaf path must start at the root and visit every level".into()));
        }
        for k in 1..path.len() {
            if path[k] >= self.level_sizes[k] || path[k] / self.branching != path[k - 1] {
                return Err(Error::InvalidTree(format!("node {} at level {k} is not a child of its predecessor", path[k])));
            }
        }
        Ok(path[self.n_steps])
    }

    /// `E[X | node at level]` for leaf-indexed rows of `width` values.
    pub fn cond_expect_rows(&self, x: &[f64], width: usize, level: usize) -> Result<Vec<f64>> {
        self.check_level(level)?;
        if x.len() != self.n_leaves() * width {
            return Err(Error::ShapeMismatch(format!(
                "expected {} leaf values, got {}",
                self.n_leaves() * width,
                x.len()
            )));
        }
        let group = self.n_leaves() / self.level_sizes[level];
        let scale = 1.0 / group as f64;
        let mut out = vec![0.0; self.level_sizes[level] * width];
        for (node, chunk) in x.chunks(group * width).enumerate() {
            let row = &mut out[node * width..(node + 1) * width];
            for leaf in chunk.chunks(width) {
                for (o, v) in row.iter_mut().zip(leaf) {
                    *o += v;
                }
            }
            for o in row.iter_mut() {
                *o *= scale;
            }
        }
        Ok(out)
    }

    /// `E[X | F_t]` at the nodes of `level` for a leaf-indexed scalar.
    pub fn cond_expect(&self, x: &[f64], level: usize) -> Result<Vec<f64>> {
        self.cond_expect_rows(x, 1, level)
    }

    /// One backward step of conditional expectation: values at the nodes of
    /// `level + 1` averaged into their parents.
    pub fn average_children(&self, next: &[f64], width: usize, out: &mut [f64]) {
        let b = self.branching;
        let scale = 1.0 / b as f64;
        for (node, row) in out.chunks_mut(width).enumerate() {
            row.fill(0.0);
            for c in 0..b {
                let child = &next[(node * b + c) * width..(node * b + c + 1) * width];
                for (o, v) in row.iter_mut().zip(child) {
                    *o += v;
                }
            }
            for o in row.iter_mut() {
                *o *= scale;
            }
        }
    }

    /// `E[X dw_j | node] / dt` for rows given at the children of each node;
    /// `out` holds `d` rows per node, row `node * d + j`.
    pub fn kernel_children(&self, next: &[f64], width: usize, out: &mut [f64]) {
        let b = self.branching;
        let d = self.d;
        let scale = 1.0 / (b as f64 * self.dt);
        for node in 0..out.len() / (d * width) {
            for j in 0..d {
                let row = &mut out[(node * d + j) * width..(node * d + j + 1) * width];
                row.fill(0.0);
                for c in 0..b {
                    let w = self.child_increments[c * d + j] * scale;
                    let child = &next[(node * b + c) * width..(node * b + c + 1) * width];
                    for (o, v) in row.iter_mut().zip(child) {
                        *o += w * v;
                    }
                }
            }
        }
    }

    /// `sum over path edges of gamma_j(node) dw_j` per leaf.
    pub fn ito_integral(&self, gamma: &Adapted) -> Result<Vec<f64>> {
        self.check_adapted(gamma, self.d)?;
        let width = gamma.width;
        let d = self.d;
        let mut out = vec![0.0; self.n_leaves() * width];
        for leaf in 0..self.n_leaves() {
            let row = &mut out[leaf * width..(leaf + 1) * width];
            for k in 0..self.n_steps {
                let node = self.ancestor(leaf, k);
                let inc = self.increment(k + 1, self.ancestor(leaf, k + 1));
                for (j, dw) in inc.iter().enumerate() {
                    let g = gamma.row(k, node * d + j);
                    for (o, v) in row.iter_mut().zip(g) {
                        *o += v * dw;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Mean plus Clark kernels of a leaf-indexed variable with rows of `width`.
    ///
    /// For `d = 1` the reconstruction is exact. For `d = 2` the four
    /// children span one more direction than the two increments; the
    /// kernels are then the least-squares projection and the product
    /// component `dw_1 dw_2` is not represented.
    pub fn clark_decompose_rows(&self, x: &[f64], width: usize) -> Result<MartingaleDecomposition> {
        if x.len() != self.n_leaves() * width {
            return Err(Error::ShapeMismatch(format!(
                "expected {} leaf values, got {}",
                self.n_leaves() * width,
                x.len()
            )));
        }
        let n = self.n_steps;
        let mut kernels = Adapted {
            width,
            levels: vec![Vec::new(); n],
        };
        let mut next = x.to_vec();
        for k in (0..n).rev() {
            let size = self.level_sizes[k];
            let mut gamma = vec![0.0; size * self.d * width];
            self.kernel_children(&next, width, &mut gamma);
            let mut cur = vec![0.0; size * width];
            self.average_children(&next, width, &mut cur);
            kernels.levels[k] = gamma;
            next = cur;
        }
        Ok(MartingaleDecomposition {
            mean: next,
            kernels,
        })
    }

    pub fn clark_decompose(&self, x: &[f64]) -> Result<MartingaleDecomposition> {
        self.clark_decompose_rows(x, 1)
    }

    fn check_adapted(&self, a: &Adapted, rows_per_node: usize) -> Result<()> {
        let ok = a.levels.len() == self.n_steps
            && a.levels
                .iter()
                .enumerate()
                .all(|(k, v)| v.len() == self.level_sizes[k] * rows_per_node * a.width);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(
                "integrand is not indexed by the nodes of levels 0..N-1".into(),
            ))
        }
    }
}

/// Node-indexed process on levels `0..N-1`, `d` rows of `width` values per
/// node, row `node * d + j` at each level.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapted {
    pub width: usize,
    pub levels: Vec<Vec<f64>>,
}

impl Adapted {
    pub fn zeros(tree: &ScenarioTree, width: usize) -> Self {
        Self {
            width,
            levels: (0..tree.n_steps())
                .map(|k| vec![0.0; tree.level_size(k) * tree.d() * width])
                .collect(),
        }
    }

    pub fn row(&self, level: usize, row: usize) -> &[f64] {
        &self.levels[level][row * self.width..(row + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleDecomposition {
    /// `E X`, one row.
    pub mean: Vec<f64>,
    /// `gamma_j` at every node of levels `0..N-1`.
    pub kernels: Adapted,
}

impl MartingaleDecomposition {
    /// `gamma_j` at a node.
    pub fn kernel(&self, level: usize, node: usize, j: usize, d: usize) -> &[f64] {
        self.kernels.row(level, node * d + j)
    }

    /// `mean + sum gamma dw` on every leaf.
    pub fn reconstruct(&self, tree: &ScenarioTree) -> Result<Vec<f64>> {
        let mut out = tree.ito_integral(&self.kernels)?;
        let w = self.kernels.width;
        for row in out.chunks_mut(w) {
            for (o, m) in row.iter_mut().zip(&self.mean) {
                *o += m;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_leaves(tree: &ScenarioTree, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..tree.n_leaves()).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn random_adapted(tree: &ScenarioTree, seed: u64) -> Adapted {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Adapted::zeros(tree, 1);
        for level in &mut a.levels {
            for v in level.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        a
    }

    #[test]
    fn counting_and_probabilities() {
        let t = ScenarioTree::new(1, 2, 1.0).unwrap();
        assert_eq!(t.total_nodes(), 7);
        assert_eq!(t.prob(2), 0.25);
        let t2 = ScenarioTree::new(2, 3, 1.0).unwrap();
        assert_eq!(t2.level_size(3), 64);
        for k in 0..=3 {
            assert!((t2.prob(k) * t2.level_size(k) as f64 - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn size_guards() {
        assert!(ScenarioTree::new(1, 16, 1.0).is_ok());
        assert_eq!(
            ScenarioTree::new(1, 17, 1.0),
            Err(Error::TreeTooLarge { d: 1, n_steps: 17, max: 16 })
        );
        assert!(ScenarioTree::new(2, 9, 1.0).is_err());
        assert!(ScenarioTree::new(3, 2, 1.0).is_err());
    }

    #[test]
    fn increment_moments_by_enumeration() {
        for d in [1, 2] {
            let t = ScenarioTree::new(d, 4, 2.0).unwrap();
            for k in 1..=4 {
                for j in 0..d {
                    let (mut m1, mut m2) = (0.0, 0.0);
                    for i in 0..t.level_size(k) {
                        let dw = t.increment(k, i)[j];
                        m1 += t.prob(k) * dw;
                        m2 += t.prob(k) * dw * dw;
                    }
                    assert_eq!(m1, 0.0);
                    assert!((m2 - t.dt()).abs() < 1e-15);
                }
                if d == 2 {
                    let cross: f64 = (0..t.level_size(k))
                        .map(|i| t.increment(k, i)[0] * t.increment(k, i)[1])
                        .sum();
                    assert_eq!(cross, 0.0);
                }
            }
        }
    }

    #[test]
    fn nodes_and_paths() {
        let t = ScenarioTree::new(1, 3, 1.0).unwrap();
        let n = t.node(2, 3).unwrap();
        assert_eq!(n.parent, Some(1));
        assert!(t.node(4, 0).is_err());
        let path = t.leaf_path(5);
        assert_eq!(path, vec![0, 1, 2, 5]);
        assert_eq!(t.path_leaf(&path).unwrap(), 5);
        assert!(t.path_leaf(&[0, 1, 3, 5]).is_err());
        let w: f64 = (1..=3).map(|k| t.increment(k, path[k])[0]).sum();
        assert!((t.omega(3, 5)[0] - w).abs() < 1e-15);
    }

    #[test]
    fn cond_expect_edges() {
        let t = ScenarioTree::new(1, 5, 1.0).unwrap();
        let c = vec![2.5; t.n_leaves()];
        assert!(t.cond_expect(&c, 2).unwrap().iter().all(|v| *v == 2.5));
        let x = random_leaves(&t, 1);
        assert_eq!(t.cond_expect(&x, 5).unwrap(), x);
        assert_eq!(
            t.cond_expect(&x, 6),
            Err(Error::LevelOutOfRange { level: 6, n_steps: 5 })
        );
    }

    #[test]
    fn tower_property_matches_subtree_averages() {
        let t = ScenarioTree::new(1, 10, 1.0).unwrap();
        let x = random_leaves(&t, 2);
        for s in 0..=10 {
            let direct = t.cond_expect(&x, s).unwrap();
            // Brute-force subtree average.
            for (node, v) in direct.iter().enumerate() {
                let leaves: Vec<f64> = (0..t.n_leaves())
                    .filter(|&l| t.ancestor(l, s) == node)
                    .map(|l| x[l])
                    .collect();
                let avg = leaves.iter().sum::<f64>() / leaves.len() as f64;
                assert!((v - avg).abs() < 1e-13);
            }
            for u in s..=10 {
                let inner = t.cond_expect(&x, u).unwrap();
                let group = t.n_leaves() / t.level_size(u);
                let lifted: Vec<f64> = (0..t.n_leaves()).map(|l| inner[l / group]).collect();
                let outer = t.cond_expect(&lifted, s).unwrap();
                for (a, b) in outer.iter().zip(&direct) {
                    assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn ito_integral_of_one_is_terminal_path() {
        let t = ScenarioTree::new(1, 6, 1.0).unwrap();
        let mut ones = Adapted::zeros(&t, 1);
        for l in &mut ones.levels {
            l.fill(1.0);
        }
        let w = t.ito_integral(&ones).unwrap();
        for leaf in 0..t.n_leaves() {
            assert!((w[leaf] - t.omega(6, leaf)[0]).abs() < 1e-14);
        }
        let zero = t.ito_integral(&Adapted::zeros(&t, 1)).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ito_isometry_by_enumeration() {
        for d in [1, 2] {
            let n = if d == 1 { 10 } else { 5 };
            let t = ScenarioTree::new(d, n, 1.0).unwrap();
            let g = random_adapted(&t, 3);
            let i = t.ito_integral(&g).unwrap();
            let lhs: f64 = i.iter().map(|v| v * v).sum::<f64>() * t.prob(n);
            let rhs: f64 = (0..n)
                .map(|k| t.prob(k) * t.dt() * g.levels[k].iter().map(|v| v * v).sum::<f64>())
                .sum();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs, "{lhs} vs {rhs}");
            assert!(i.iter().sum::<f64>().abs() * t.prob(n) < 1e-12);
        }
    }

    #[test]
    fn ito_integral_is_a_martingale() {
        let t = ScenarioTree::new(1, 8, 1.0).unwrap();
        let g = random_adapted(&t, 4);
        let i = t.ito_integral(&g).unwrap();
        for s in 0..=8 {
            let ce = t.cond_expect(&i, s).unwrap();
            for (node, v) in ce.iter().enumerate() {
                let partial: f64 = (0..s)
                    .map(|k| {
                        let at_k = node / t.branching().pow((s - k) as u32);
                        let child = node / t.branching().pow((s - k - 1) as u32);
                        g.levels[k][at_k] * t.increment(k + 1, child)[0]
                    })
                    .sum();
                assert!((v - partial).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clark_of_terminal_path_and_constants() {
        let t = ScenarioTree::new(1, 5, 1.0).unwrap();
        let w: Vec<f64> = (0..t.n_leaves()).map(|l| t.omega(5, l)[0]).collect();
        let dec = t.clark_decompose(&w).unwrap();
        assert!(dec.mean[0].abs() < 1e-15);
        for level in &dec.kernels.levels {
            assert!(level.iter().all(|g| (g - 1.0).abs() < 1e-12));
        }
        let dec = t.clark_decompose(&vec![3.0; t.n_leaves()]).unwrap();
        assert_eq!(dec.mean, vec![3.0]);
        assert!(dec.kernels.levels.iter().flatten().all(|g| g.abs() < 1e-15));

        let t2 = ScenarioTree::new(2, 3, 1.0).unwrap();
        let w1: Vec<f64> = (0..t2.n_leaves()).map(|l| t2.omega(3, l)[0]).collect();
        let dec = t2.clark_decompose(&w1).unwrap();
        for level in &dec.kernels.levels {
            for pair in level.chunks(2) {
                assert!((pair[0] - 1.0).abs() < 1e-12 && pair[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clark_reconstruction_is_exact_for_one_component() {
        let t = ScenarioTree::new(1, 10, 1.0).unwrap();
        let x = random_leaves(&t, 5);
        let back = t.clark_decompose(&x).unwrap().reconstruct(&t).unwrap();
        let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn clark_for_rows_matches_scalar_per_column() {
        let t = ScenarioTree::new(1, 6, 1.0).unwrap();
        let a = random_leaves(&t, 6);
        let b = random_leaves(&t, 7);
        let rows: Vec<f64> = a.iter().zip(&b).flat_map(|(p, q)| [*p, *q]).collect();
        let dec = t.clark_decompose_rows(&rows, 2).unwrap();
        let da = t.clark_decompose(&a).unwrap();
        assert!((dec.mean[0] - da.mean[0]).abs() < 1e-15);
        assert_eq!(dec.kernel(3, 5, 0, 1)[0], da.kernel(3, 5, 0, 1)[0]);
    }

    #[test]
    fn rejects_non_adapted_integrand() {
        let t = ScenarioTree::new(1, 4, 1.0).unwrap();
        let bad = Adapted {
            width: 1,
            levels: vec![vec![0.0; 16]; 4],
        };
        assert!(matches!(t.ito_integral(&bad), Err(Error::ShapeMismatch(_))));
    }

    proptest! {
        #[test]
        fn clark_reconstructs_any_leaf_variable(
            values in proptest::collection::vec(-10.0f64..10.0, 64)
        ) {
            let t = ScenarioTree::new(1, 6, 0.7).unwrap();
            let back = t.clark_decompose(&values).unwrap().reconstruct(&t).unwrap();
            for (a, b) in back.iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-12 * 10.0);
            }
        }

        #[test]
        fn cond_expect_preserves_mean(
            values in proptest::collection::vec(-5.0f64..5.0, 256),
            level in 0usize..=4
        ) {
            let t = ScenarioTree::new(2, 4, 1.0).unwrap();
            let ce = t.cond_expect(&values, level).unwrap();
            let lhs = ce.iter().sum::<f64>() * t.prob(level);
            let rhs = values.iter().sum::<f64>() * t.prob(4);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
