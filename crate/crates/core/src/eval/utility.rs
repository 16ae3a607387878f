use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{ColumnData, Dataset, TableSchema};
use crate::error::{Error, Result};

/// ROC-AUC via the rank statistic, ties given mid-ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Eval("ROC-AUC undefined: only one class present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum_pos += mid_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Binary scorer trained on dense features.
pub trait Classifier {
    fn name(&self) -> &'static str;
    fn fit(&mut self, x: &[Vec<f64>], y: &[bool]);
    /// Higher means more likely positive.
    fn score(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone)]
pub struct LogisticRegression {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    weights: Vec<f64>,
    bias: f64,
}

impl Default for LogisticRegression {
    fn default() -> Self {
        Self { iterations: 500, learning_rate: 0.5, l2: 1e-4, weights: Vec::new(), bias: 0.0 }
    }
}

impl Classifier for LogisticRegression {
    fn name(&self) -> &'static str {
        "logistic_regression"
    }

    fn fit(&mut self, x: &[Vec<f64>], y: &[bool]) {
        let p = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        self.weights = vec![0.0; p];
        self.bias = 0.0;
        let mut gw = vec![0.0; p];
        for _ in 0..self.iterations {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for (row, &label) in x.iter().zip(y) {
                let z = self.bias + row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
                let err = 1.0 / (1.0 + (-z).exp()) - if label { 1.0 } else { 0.0 };
                gb += err;
                for (g, v) in gw.iter_mut().zip(row) {
                    *g += err * v;
                }
            }
            for (w, g) in self.weights.iter_mut().zip(&gw) {
                *w -= self.learning_rate * (g / n + self.l2 * *w);
            }
            self.bias -= self.learning_rate * gb / n;
        }
    }

    fn score(&self, x: &[f64]) -> f64 {
        self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

/// CART tree with Gini impurity; leaves predict the positive fraction.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    pub max_depth: usize,
    pub min_samples_split: usize,
    root: Option<Node>,
}

impl Default for DecisionTree {
    fn default() -> Self {
        Self { max_depth: 3, min_samples_split: 2, root: None }
    }
}

fn gini(pos: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

impl DecisionTree {
    fn build(&self, x: &[Vec<f64>], y: &[bool], idx: &[usize], depth: usize) -> Node {
        let n = idx.len() as f64;
        let pos = idx.iter().filter(|&&i| y[i]).count() as f64;
        let leaf = Node::Leaf(pos / n);
        if depth >= self.max_depth || idx.len() < self.min_samples_split || pos == 0.0 || pos == n {
            return leaf;
        }
        let parent = gini(pos, n);
        let p = x[idx[0]].len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.to_vec();
        for f in 0..p {
            sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            let mut left_pos = 0.0;
            for k in 0..sorted.len() - 1 {
                if y[sorted[k]] {
                    left_pos += 1.0;
                }
                let (v, next) = (x[sorted[k]][f], x[sorted[k + 1]][f]);
                if v == next {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = n - nl;
                let impurity = (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
                if impurity < parent - 1e-12 && best.is_none_or(|(b, _, _)| impurity < b) {
                    best = Some((impurity, f, 0.5 * (v + next)));
                }
            }
        }
        match best {
            None => leaf,
            Some((_, feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
                Node::Split {
                    feature,
                    threshold,
                    left: Box::new(self.build(x, y, &l, depth + 1)),
                    right: Box::new(self.build(x, y, &r, depth + 1)),
                }
            }
        }
    }
}

impl Classifier for DecisionTree {
    fn name(&self) -> &'static str {
        "decision_tree"
    }

    fn fit(&mut self, x: &[Vec<f64>], y: &[bool]) {
        let idx: Vec<usize> = (0..x.len()).collect();
        self.root = Some(self.build(x, y, &idx, 0));
    }

    fn score(&self, x: &[f64]) -> f64 {
        let mut node = self.root.as_ref().expect("fit before score");
        loop {
            match node {
                Node::Leaf(p) => return *p,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

/// Brute-force k-nearest-neighbour vote.
#[derive(Debug, Clone)]
pub struct KNearest {
    pub k: usize,
    x: Vec<Vec<f64>>,
    y: Vec<bool>,
}

impl Default for KNearest {
    fn default() -> Self {
        Self { k: 5, x: Vec::new(), y: Vec::new() }
    }
}

impl Classifier for KNearest {
    fn name(&self) -> &'static str {
        "knn"
    }

    fn fit(&mut self, x: &[Vec<f64>], y: &[bool]) {
        self.x = x.to_vec();
        self.y = y.to_vec();
    }

    fn score(&self, q: &[f64]) -> f64 {
        let k = self.k.min(self.x.len());
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, row) in self.x.iter().enumerate() {
            let d: f64 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.len() < k || d < best[best.len() - 1].0 {
                let pos = best.partition_point(|&(bd, _)| bd <= d);
                best.insert(pos, (d, i));
                best.truncate(k);
            }
        }
        best.iter().filter(|&&(_, i)| self.y[i]).count() as f64 / k as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticRegression,
    DecisionTree,
    Knn,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] =
        [ClassifierKind::LogisticRegression, ClassifierKind::DecisionTree, ClassifierKind::Knn];

    fn build(self) -> Box<dyn Classifier> {
        match self {
            ClassifierKind::LogisticRegression => Box::new(LogisticRegression::default()),
            ClassifierKind::DecisionTree => Box::new(DecisionTree::default()),
            ClassifierKind::Knn => Box::new(KNearest::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig {
    pub classifiers: Vec<ClassifierKind>,
    pub seed: u64,
    /// Training rows above this are subsampled (seeded) before fitting.
    pub max_train_rows: usize,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self { classifiers: ClassifierKind::ALL.to_vec(), seed: 0, max_train_rows: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierScore {
    pub classifier: String,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub classifiers: Vec<ClassifierScore>,
    pub phi: f64,
}

/// One-hot categorical features and standardized numerics, fitted on the
/// training table. The label column is excluded.
struct FeatureEncoder {
    numeric: Vec<(usize, f64, f64)>,
    categorical: Vec<(usize, usize)>,
}

impl FeatureEncoder {
    fn fit(train: &Dataset, schema: &TableSchema) -> Self {
        let label = schema.label_index();
        let mut numeric = Vec::new();
        let mut categorical = Vec::new();
        for (i, col) in train.columns.iter().enumerate() {
            if Some(i) == label {
                continue;
            }
            match col {
                ColumnData::Numeric(v) => {
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                    numeric.push((i, mean, if sd > 0.0 { sd } else { 1.0 }));
                }
                ColumnData::Categorical(_) => categorical.push((i, schema.columns[i].vocab.len())),
            }
        }
        Self { numeric, categorical }
    }

    fn transform(&self, data: &Dataset, rows: &[usize]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&r| {
                let mut out = Vec::new();
                for &(i, mean, sd) in &self.numeric {
                    out.push((data.columns[i].as_numeric().expect("numeric")[r] - mean) / sd);
                }
                for &(i, k) in &self.categorical {
                    let c = data.columns[i].as_categorical().expect("categorical")[r];
                    out.extend((0..k).map(|j| if j == c { 1.0 } else { 0.0 }));
                }
                out
            })
            .collect()
    }
}

fn binary_labels(data: &Dataset, schema: &TableSchema) -> Result<Vec<bool>> {
    let li = schema.label_index().ok_or_else(|| Error::Eval("utility needs a label column".into()))?;
    if schema.columns[li].vocab.len() != 2 {
        return Err(Error::Eval(format!(
            "utility needs a binary label, `{}` has {} classes",
            schema.columns[li].name,
            schema.columns[li].vocab.len()
        )));
    }
    Ok(data.columns[li].as_categorical().expect("label is categorical").iter().map(|&c| c == 1).collect())
}

/// Train each classifier on `synth_train`, score ROC-AUC on `real_test`,
/// and average. The positive class is the label's second vocabulary entry.
pub fn utility_phi(
    synth_train: &Dataset,
    real_test: &Dataset,
    schema: &TableSchema,
    config: &UtilityConfig,
) -> Result<UtilityReport> {
    if config.classifiers.is_empty() {
        return Err(Error::Eval("no classifiers selected".into()));
    }
    let y_train_all = binary_labels(synth_train, schema)?;
    let y_test = binary_labels(real_test, schema)?;
    let n = synth_train.n_rows();
    let rows: Vec<usize> = if n > config.max_train_rows {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut r = sample(&mut rng, n, config.max_train_rows).into_vec();
        r.sort_unstable();
        r
    } else {
        (0..n).collect()
    };
    let y_train: Vec<bool> = rows.iter().map(|&r| y_train_all[r]).collect();
    if y_train.iter().all(|&v| v) || y_train.iter().all(|&v| !v) {
        return Err(Error::Eval("training labels contain a single class".into()));
    }
    let enc = FeatureEncoder::fit(&synth_train.select_rows(&rows), schema);
    let x_train = enc.transform(synth_train, &rows);
    let test_rows: Vec<usize> = (0..real_test.n_rows()).collect();
    let x_test = enc.transform(real_test, &test_rows);

    let mut classifiers = Vec::new();
    for kind in &config.classifiers {
        let mut clf = kind.build();
        clf.fit(&x_train, &y_train);
        let scores: Vec<f64> = x_test.iter().map(|x| clf.score(x)).collect();
        classifiers.push(ClassifierScore { classifier: clf.name().to_string(), auc: roc_auc(&scores, &y_test)? });
    }
    let phi = classifiers.iter().map(|c| c.auc).sum::<f64>() / classifiers.len() as f64;
    Ok(UtilityReport { classifiers, phi })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_cases() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5; 4], &[false, true, false, true]).unwrap(), 0.5);
        // one inversion out of four pairs
        assert_eq!(roc_auc(&[0.1, 0.6, 0.5, 0.9], &[false, false, true, true]).unwrap(), 0.75);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn tree_learns_threshold() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 12).collect();
        let mut t = DecisionTree::default();
        t.fit(&x, &y);
        assert_eq!(t.score(&[3.0]), 0.0);
        assert_eq!(t.score(&[15.0]), 1.0);
    }

    #[test]
    fn knn_votes() {
        let x = vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0], vec![5.1], vec![5.2]];
        let y = vec![false, false, false, true, true, true];
        let mut k = KNearest { k: 3, ..KNearest::default() };
        k.fit(&x, &y);
        assert_eq!(k.score(&[0.05]), 0.0);
        assert_eq!(k.score(&[5.05]), 1.0);
    }
}
