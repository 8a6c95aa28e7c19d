use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64, count: usize },
}

/// A CART regression tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl RegressionTree {
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x[feature] <= threshold { left } else { right },
                Node::Leaf { .. } => return k,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_of(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_of stops at leaves"),
        }
    }

    /// `(value, count)` of every leaf.
    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, count } => Some((value, count)),
            Node::Split { .. } => None,
        })
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams {
    pub min_leaf: usize,
    /// Share of features drawn (without replacement) at every node.
    pub feature_fraction: f64,
}

impl TreeParams {
    pub fn features_per_node(&self, n_features: usize) -> usize {
        ((self.feature_fraction * n_features as f64).ceil() as usize).clamp(1, n_features.max(1))
    }
}

pub fn fit_tree<R: Rng + ?Sized>(x: &DMatrix<f64>, y: &[f64], params: TreeParams, rng: &mut R) -> RegressionTree {
    fit_weighted(x, &SortedColumns::new(x), y, &vec![1; y.len()], params, rng)
}

/// Row indices of every column sorted by `(value, row)`, computed once and
/// shared by all trees grown on the same matrix.
pub(crate) struct SortedColumns {
    order: Vec<u32>,
    n_rows: usize,
}

impl SortedColumns {
    pub(crate) fn new(x: &DMatrix<f64>) -> Self {
        let (n, p) = x.shape();
        let mut order = Vec::with_capacity(n * p);
        for f in 0..p {
            let column = x.column(f);
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_unstable_by(|&a, &b| {
                column[a as usize].total_cmp(&column[b as usize]).then(a.cmp(&b))
            });
            order.extend(idx);
        }
        Self { order, n_rows: n }
    }

    fn column(&self, f: usize) -> &[u32] {
        &self.order[f * self.n_rows..(f + 1) * self.n_rows]
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Fits a tree on rows repeated `counts[i]` times, as produced by a
/// bootstrap. Leaf sizes and means account for the repetitions.
pub(crate) fn fit_weighted<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    sorted: &SortedColumns,
    y: &[f64],
    counts: &[u32],
    params: TreeParams,
    rng: &mut R,
) -> RegressionTree {
    let n_features = x.ncols();
    let n = x.nrows();
    let xs = x.as_slice();
    let mtry = params.features_per_node(n_features);
    let min_leaf = params.min_leaf.max(1) as f64;

    // per-feature orderings restricted to the drawn rows; a node owns the
    // same index range in every feature's segment
    let m = counts.iter().filter(|&&c| c > 0).count();
    let mut order: Vec<u32> = vec![0; m * n_features + 1];
    for f in 0..n_features {
        let mut k = f * m;
        for &i in sorted.column(f) {
            order[k] = i;
            k += usize::from(counts[i as usize] > 0);
        }
    }
    order.truncate(m * n_features);
    let cw: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let cy: Vec<f64> = counts.iter().zip(y).map(|(&c, v)| c as f64 * v).collect();
    let mut goes_left = vec![false; n];
    let mut scratch: Vec<u32> = Vec::with_capacity(m);

    let mut nodes = vec![Node::Leaf { value: 0.0, count: 0 }];
    let mut stack = vec![(0usize, 0usize, m)];
    while let Some((slot, lo, hi)) = stack.pop() {
        let members: Vec<u32> = if n_features > 0 {
            order[lo..hi].to_vec()
        } else {
            (0..n as u32).filter(|&i| counts[i as usize] > 0).collect()
        };
        let (mut w, mut s) = (0.0, 0.0);
        for &i in &members {
            let c = counts[i as usize] as f64;
            w += c;
            s += c * y[i as usize];
        }
        let leaf = Node::Leaf {
            value: s / w,
            count: w as usize,
        };
        let first = y[members[0] as usize];
        let pure = members.iter().all(|&i| y[i as usize] == first);
        if pure || w < 2.0 * min_leaf || n_features == 0 {
            nodes[slot] = leaf;
            continue;
        }

        let mut best: Option<Best> = None;
        for f in sample(rng, n_features, mtry).into_iter() {
            let seg = &order[f * m + lo..f * m + hi];
            let col = &xs[f * n..(f + 1) * n];
            let (mut wl, mut sl) = (0.0, 0.0);
            let mut next = col[seg[0] as usize];
            for k in 0..seg.len() - 1 {
                let i = seg[k] as usize;
                wl += cw[i];
                sl += cy[i];
                let v = next;
                next = col[seg[k + 1] as usize];
                if v == next {
                    continue;
                }
                let wr = w - wl;
                if wl < min_leaf || wr < min_leaf {
                    continue;
                }
                let sr = s - sl;
                // total child SSE up to a node constant
                let score = -(sl * sl / wl + sr * sr / wr);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(Best {
                        feature: f,
                        threshold: v + (next - v) / 2.0,
                        score,
                    });
                }
            }
        }
        let Some(best) = best else {
            nodes[slot] = leaf;
            continue;
        };
        let col = &xs[best.feature * n..(best.feature + 1) * n];
        let mut n_left = 0;
        let mut sums = [(0.0, 0.0); 2];
        for &i in &members {
            let i = i as usize;
            let left = col[i] <= best.threshold;
            goes_left[i] = left;
            n_left += usize::from(left);
            let side = &mut sums[usize::from(!left)];
            side.0 += cw[i];
            side.1 += cy[i];
        }
        let left = nodes.len();
        let right = left + 1;
        nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        for (cw, cs) in sums {
            nodes.push(Node::Leaf {
                value: cs / cw,
                count: cw as usize,
            });
        }
        let grows = sums.map(|(cw, _)| cw >= 2.0 * min_leaf);
        if !grows[0] && !grows[1] {
            continue;
        }
        scratch.resize(hi - lo, 0);
        for f in 0..n_features {
            let seg = &mut order[f * m + lo..f * m + hi];
            let (mut k, mut r) = (0, 0);
            for idx in 0..seg.len() {
                let i = seg[idx];
                let left = usize::from(goes_left[i as usize]);
                seg[k] = i;
                scratch[r] = i;
                k += left;
                r += 1 - left;
            }
            seg[k..].copy_from_slice(&scratch[..r]);
        }
        if grows[1] {
            stack.push((right, lo + n_left, hi));
        }
        if grows[0] {
            stack.push((left, lo, lo + n_left));
        }
    }
    RegressionTree { nodes, n_features }
}
