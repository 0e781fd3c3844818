//! Nearest-neighbour few-shot inference.
//!
//! The pipeline, in order:
//!
//! 1. centre support and query features on the source mean `m_s` and
//!    L2-normalise them (or only L2-normalise when centring is off);
//! 2. add `η = mean(support) − mean(query)` to every query row;
//! 3. build per-class prototypes from the support set;
//! 4. pseudo-label each query with its nearest prototype under cosine
//!    distance;
//! 5. rectify the prototypes from the pooled support and pseudo-labelled
//!    query samples, weighting each by its softmax affinity to its class;
//! 6. emit `softmax(−d(x_q, m_c))` over the final prototypes.
//!
//! Steps 1 (centring), 2 and 5 are switchable through [`NnfsConfig`].
//! There is no randomness anywhere in this module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{argmax, cosine_with_norms, l2_norm, softmax_into, FeatureMatrix};
use crate::scalar::Scalar;
use crate::store::MeanVector;

/// Per-class mean vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes<T> {
    means: FeatureMatrix<T>,
    rectified: bool,
}

impl<T: Scalar> Prototypes<T> {
    pub fn new(means: FeatureMatrix<T>, rectified: bool) -> Self {
        Self { means, rectified }
    }

    pub fn num_classes(&self) -> usize {
        self.means.rows()
    }

    pub fn dim(&self) -> usize {
        self.means.dim()
    }

    pub fn mean(&self, class: usize) -> &[T] {
        self.means.row(class)
    }

    pub fn means(&self) -> &FeatureMatrix<T> {
        &self.means
    }

    pub fn is_rectified(&self) -> bool {
        self.rectified
    }

    fn norms(&self) -> Result<Vec<T>> {
        self.means
            .iter_rows()
            .enumerate()
            .map(|(c, row)| nonzero_norm(row, "prototypes", c))
            .collect()
    }
}

/// Per-query class distances, label distributions and hard labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult<T> {
    pub num_queries: usize,
    pub num_classes: usize,
    /// Row-major `num_queries × num_classes`; empty when the producing
    /// method has no notion of distance.
    pub distances: Vec<T>,
    /// Row-major `num_queries × num_classes`.
    pub distribution: Vec<T>,
    pub hard_labels: Vec<usize>,
}

impl<T: Scalar> PredictionResult<T> {
    /// Builds a result whose distribution is the row-wise softmax of `scores`.
    pub(crate) fn from_scores(
        num_queries: usize,
        num_classes: usize,
        scores: &[T],
        distances: Vec<T>,
    ) -> Self {
        let mut distribution = vec![T::zero(); scores.len()];
        let mut hard_labels = Vec::with_capacity(num_queries);
        for (s, d) in scores
            .chunks_exact(num_classes)
            .zip(distribution.chunks_exact_mut(num_classes))
        {
            softmax_into(s, d);
            hard_labels.push(argmax(d));
        }
        Self {
            num_queries,
            num_classes,
            distances,
            distribution,
            hard_labels,
        }
    }

    pub fn distribution_row(&self, q: usize) -> &[T] {
        &self.distribution[q * self.num_classes..(q + 1) * self.num_classes]
    }

    pub fn distance_row(&self, q: usize) -> Option<&[T]> {
        (!self.distances.is_empty())
            .then(|| &self.distances[q * self.num_classes..(q + 1) * self.num_classes])
    }
}

/// Switches for the optional stages of the pipeline. Distance is always
/// cosine distance `1 − cos(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NnfsConfig {
    /// Centre on the source mean before L2 normalisation.
    pub use_norm: bool,
    /// Shift query features by `η = mean(support) − mean(query)`.
    pub use_shift: bool,
    /// Rectify prototypes with pseudo-labelled queries.
    pub use_proto_rect: bool,
}

impl NnfsConfig {
    /// Plain nearest-centroid over L2-normalised features.
    pub const NN: Self = Self {
        use_norm: false,
        use_shift: false,
        use_proto_rect: false,
    };
    pub const PROTO_RECT: Self = Self {
        use_norm: false,
        use_shift: false,
        use_proto_rect: true,
    };
    /// Centring and η shift.
    pub const NORM: Self = Self {
        use_norm: true,
        use_shift: true,
        use_proto_rect: false,
    };
    pub const NORM_PROTO_RECT: Self = Self {
        use_norm: true,
        use_shift: true,
        use_proto_rect: true,
    };
}

fn nonzero_norm<T: Scalar>(row: &[T], what: &'static str, index: usize) -> Result<T> {
    let n = l2_norm(row);
    if n <= T::min_positive_value() || !n.is_finite() {
        return Err(Error::ZeroVector { what, row: index });
    }
    Ok(n)
}

/// Rows of `x − m_s`, each scaled to unit L2 norm.
pub fn center_and_normalize<T: Scalar>(
    x: &FeatureMatrix<T>,
    mean: &MeanVector<T>,
) -> Result<FeatureMatrix<T>> {
    x.check_dim(mean.dim())?;
    let mut out = Vec::with_capacity(x.as_slice().len());
    for (i, row) in x.iter_rows().enumerate() {
        let start = out.len();
        out.extend(row.iter().zip(mean.values()).map(|(&v, &m)| v - m));
        let norm = nonzero_norm(&out[start..], "centred features", i)?;
        out[start..].iter_mut().for_each(|v| *v /= norm);
    }
    Ok(FeatureMatrix::from_parts_unchecked(x.rows(), x.dim(), out))
}

/// Rows scaled to unit L2 norm.
pub fn l2_normalize<T: Scalar>(x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let norm = nonzero_norm(x.row(i), "features", i)?;
        out.row_mut(i).iter_mut().for_each(|v| *v /= norm);
    }
    Ok(out)
}

/// Adds `mean(support) − mean(query)` to every query row.
pub fn transductive_shift<T: Scalar>(
    support: &FeatureMatrix<T>,
    query: &FeatureMatrix<T>,
) -> Result<FeatureMatrix<T>> {
    query.check_dim(support.dim())?;
    let mean_s = support.column_mean()?;
    let mean_q = query.column_mean()?;
    let eta: Vec<T> = mean_s.iter().zip(&mean_q).map(|(&s, &q)| s - q).collect();
    let mut out = query.clone();
    for i in 0..out.rows() {
        for (v, &e) in out.row_mut(i).iter_mut().zip(&eta) {
            *v += e;
        }
    }
    Ok(out)
}

fn check_labels(labels: &[usize], rows: usize, num_classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::invariant(
            "labels",
            format!("{} labels for {} rows", labels.len(), rows),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_classes,
        });
    }
    Ok(())
}

/// Mean of the support rows of each class.
pub fn class_prototypes<T: Scalar>(
    support: &FeatureMatrix<T>,
    labels: &[usize],
    num_classes: usize,
) -> Result<Prototypes<T>> {
    if num_classes == 0 {
        return Err(Error::Config("num_classes must be positive".into()));
    }
    check_labels(labels, support.rows(), num_classes)?;
    let dim = support.dim();
    let mut sums = vec![T::zero(); num_classes * dim];
    let mut counts = vec![0usize; num_classes];
    for (row, &c) in support.iter_rows().zip(labels) {
        counts[c] += 1;
        for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (c, &k) in counts.iter().enumerate() {
        if k == 0 {
            return Err(Error::EmptyClass { class: c });
        }
        let k = T::from_usize(k).expect("count representable");
        sums[c * dim..(c + 1) * dim]
            .iter_mut()
            .for_each(|s| *s /= k);
    }
    Ok(Prototypes::new(
        FeatureMatrix::new(num_classes, dim, sums)?,
        false,
    ))
}

/// Cosine similarities of each row to every prototype, row-major.
fn cosine_table<T: Scalar>(x: &FeatureMatrix<T>, protos: &Prototypes<T>) -> Result<Vec<T>> {
    x.check_dim(protos.dim())?;
    let proto_norms = protos.norms()?;
    let c = protos.num_classes();
    let mut table = Vec::with_capacity(x.rows() * c);
    for (i, row) in x.iter_rows().enumerate() {
        let n = nonzero_norm(row, "queries", i)?;
        for (k, &pn) in proto_norms.iter().enumerate() {
            table.push(cosine_with_norms(row, protos.mean(k), n, pn));
        }
    }
    Ok(table)
}

/// Index of the prototype at minimum cosine distance, lowest index on ties.
pub fn nearest_centroid_assign<T: Scalar>(
    query: &FeatureMatrix<T>,
    protos: &Prototypes<T>,
) -> Result<Vec<usize>> {
    let c = protos.num_classes();
    let sims = cosine_table(query, protos)?;
    Ok(sims
        .chunks_exact(c)
        .map(|row| {
            let dists: Vec<T> = row.iter().map(|&s| T::one() - s).collect();
            let mut best = 0;
            for (k, &d) in dists.iter().enumerate().skip(1) {
                if d < dists[best] {
                    best = k;
                }
            }
            best
        })
        .collect())
}

/// Rectifies prototypes from support samples and pseudo-labelled queries.
///
/// For class `c`, each pooled sample `x` (support rows labelled `c` and
/// query rows pseudo-labelled `c`) contributes `w_c(x) · x`, where `w(x)` is
/// the softmax over `cos(x, m̂_k)` for all initial prototypes `k`. The sum
/// is divided by the pooled count, not by the total weight.
pub fn proto_rect<T: Scalar>(
    support: &FeatureMatrix<T>,
    support_labels: &[usize],
    query: &FeatureMatrix<T>,
    pseudo_labels: &[usize],
    initial: &Prototypes<T>,
) -> Result<Prototypes<T>> {
    if initial.is_rectified() {
        return Err(Error::Config("prototypes are already rectified".into()));
    }
    let c = initial.num_classes();
    let dim = initial.dim();
    support.check_dim(dim)?;
    if !query.is_empty() {
        query.check_dim(dim)?;
    }
    check_labels(support_labels, support.rows(), c)?;
    check_labels(pseudo_labels, query.rows(), c)?;

    let mut sums = vec![T::zero(); c * dim];
    let mut counts = vec![0usize; c];
    let mut weights = vec![T::zero(); c];
    let mut accumulate = |x: &FeatureMatrix<T>, labels: &[usize]| -> Result<()> {
        if x.is_empty() {
            return Ok(());
        }
        let sims = cosine_table(x, initial)?;
        for ((row, &label), s) in x.iter_rows().zip(labels).zip(sims.chunks_exact(c)) {
            softmax_into(s, &mut weights);
            let w = weights[label];
            counts[label] += 1;
            for (acc, &v) in sums[label * dim..(label + 1) * dim].iter_mut().zip(row) {
                *acc += w * v;
            }
        }
        Ok(())
    };
    accumulate(support, support_labels)?;
    accumulate(query, pseudo_labels)?;

    for (k, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::EmptyClass { class: k });
        }
        let n = T::from_usize(n).expect("count representable");
        sums[k * dim..(k + 1) * dim]
            .iter_mut()
            .for_each(|s| *s /= n);
    }
    Ok(Prototypes::new(FeatureMatrix::new(c, dim, sums)?, true))
}

/// Cosine distances to each prototype and `softmax(−distance)` per query.
pub fn soft_predictions<T: Scalar>(
    query: &FeatureMatrix<T>,
    protos: &Prototypes<T>,
) -> Result<PredictionResult<T>> {
    let c = protos.num_classes();
    let distances: Vec<T> = cosine_table(query, protos)?
        .into_iter()
        .map(|s| T::one() - s)
        .collect();
    let neg: Vec<T> = distances.iter().map(|&d| -d).collect();
    Ok(PredictionResult::from_scores(
        query.rows(),
        c,
        &neg,
        distances,
    ))
}

/// Runs the full pipeline on one support/query problem.
///
/// `support_labels` must cover every class in `0..num_classes`. `mean` is
/// required only when `config.use_norm` is set.
pub fn nnfs_infer<T: Scalar>(
    support: &FeatureMatrix<T>,
    support_labels: &[usize],
    query: &FeatureMatrix<T>,
    num_classes: usize,
    mean: Option<&MeanVector<T>>,
    config: NnfsConfig,
) -> Result<PredictionResult<T>> {
    query.check_dim(support.dim())?;
    let (support, query) = if config.use_norm {
        let mean = mean
            .ok_or_else(|| Error::Config("the norm stage needs the source mean vector".into()))?;
        (
            center_and_normalize(support, mean)?,
            center_and_normalize(query, mean)?,
        )
    } else {
        (l2_normalize(support)?, l2_normalize(query)?)
    };
    let query = if config.use_shift {
        transductive_shift(&support, &query)?
    } else {
        query
    };
    let initial = class_prototypes(&support, support_labels, num_classes)?;
    let protos = if config.use_proto_rect {
        let pseudo = nearest_centroid_assign(&query, &initial)?;
        proto_rect(&support, support_labels, &query, &pseudo, &initial)?
    } else {
        initial
    };
    soft_predictions(&query, &protos)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> FeatureMatrix<f64> {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn center_and_normalize_examples() {
        let mean = MeanVector::new(vec![1.0, 1.0], "t").unwrap();
        let out = center_and_normalize(&m(&[&[4.0, 5.0]]), &mean).unwrap();
        assert!(close(out.row(0), &[0.6, 0.8], 1e-12));

        let zero = MeanVector::new(vec![0.0, 0.0], "t").unwrap();
        let out = center_and_normalize(&m(&[&[0.0, 3.0]]), &zero).unwrap();
        assert!(close(out.row(0), &[0.0, 1.0], 1e-12));

        let err = center_and_normalize(&m(&[&[2.0, 2.0], &[1.0, 1.0]]), &mean).unwrap_err();
        assert!(matches!(err, Error::ZeroVector { row: 1, .. }));
    }

    #[test]
    fn l2_normalize_examples() {
        let out = l2_normalize(&m(&[&[3.0, 4.0]])).unwrap();
        assert!(close(out.row(0), &[0.6, 0.8], 1e-12));
        let unit = m(&[&[0.6, 0.8]]);
        assert!(close(
            l2_normalize(&unit).unwrap().row(0),
            unit.row(0),
            1e-7
        ));
        assert!(matches!(
            l2_normalize(&m(&[&[0.0, 0.0]])),
            Err(Error::ZeroVector { row: 0, .. })
        ));
    }

    #[test]
    fn shift_examples() {
        let s = m(&[&[1.0, 1.0]]);
        let q = m(&[&[0.0, 0.0], &[2.0, 0.0]]);
        let out = transductive_shift(&s, &q).unwrap();
        assert!(close(out.as_slice(), &[0.0, 1.0, 2.0, 1.0], 1e-12));

        let q2 = m(&[&[0.0, 1.0], &[2.0, 1.0]]);
        assert!(close(
            transductive_shift(&s, &q2).unwrap().as_slice(),
            q2.as_slice(),
            1e-12
        ));

        assert!(matches!(
            transductive_shift(&s, &m(&[&[1.0, 2.0, 3.0]])),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(
            transductive_shift(&s, &FeatureMatrix::empty(2)),
            Err(Error::Empty { .. })
        ));
    }

    #[test]
    fn prototype_examples() {
        let p = class_prototypes(&m(&[&[1.0, 0.0], &[0.0, 1.0]]), &[0, 0], 1).unwrap();
        assert_eq!(p.mean(0), &[0.5, 0.5]);
        assert!(!p.is_rectified());

        let s = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let p = class_prototypes(&s, &[1, 0], 2).unwrap();
        assert_eq!(p.mean(0), &[3.0, 4.0]);
        assert_eq!(p.mean(1), &[1.0, 2.0]);

        assert!(matches!(
            class_prototypes(&s, &[0, 1], 3),
            Err(Error::EmptyClass { class: 2 })
        ));
    }

    #[test]
    fn assignment_examples() {
        let p = class_prototypes(&m(&[&[1.0, 0.0], &[0.0, 1.0]]), &[0, 1], 2).unwrap();
        assert_eq!(
            nearest_centroid_assign(&m(&[&[1.0, 0.0]]), &p).unwrap(),
            vec![0]
        );
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(
            nearest_centroid_assign(&m(&[&[h, h]]), &p).unwrap(),
            vec![0]
        );
        assert_eq!(
            nearest_centroid_assign(&m(&[&[0.2, 0.9], &[2.0, 9.0]]), &p).unwrap(),
            vec![1, 1]
        );
        assert!(matches!(
            nearest_centroid_assign(&m(&[&[0.0, 0.0]]), &p),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn soft_prediction_examples() {
        let p = class_prototypes(&m(&[&[1.0, 0.0], &[1.0, 0.0]]), &[0, 1], 2).unwrap();
        let r = soft_predictions(&m(&[&[1.0, 0.0]]), &p).unwrap();
        assert!(close(r.distribution_row(0), &[0.5, 0.5], 1e-12));
        assert_eq!(r.hard_labels, vec![0]);

        // a_q = [0, ln 3] needs cos = 1 − ln 3 to prototype 1
        let cos = 1.0 - 3.0f64.ln();
        let sin = (1.0 - cos * cos).sqrt();
        let p = class_prototypes(&m(&[&[1.0, 0.0], &[cos, sin]]), &[0, 1], 2).unwrap();
        let r = soft_predictions(&m(&[&[1.0, 0.0]]), &p).unwrap();
        assert!(close(r.distribution_row(0), &[0.75, 0.25], 1e-12));
        assert!(close(
            r.distance_row(0).unwrap(),
            &[0.0, 3.0f64.ln()],
            1e-12
        ));
    }

    #[test]
    fn norm_requires_mean() {
        let s = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            nnfs_infer(&s, &[0, 1], &s, 2, None, NnfsConfig::NORM),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn all_off_query_on_support_vector() {
        let s = m(&[&[1.0, 0.2], &[-0.3, 1.0], &[0.0, -1.0]]);
        let q = m(&[&[-0.3, 1.0]]);
        let r = nnfs_infer(&s, &[0, 1, 2], &q, 3, None, NnfsConfig::NN).unwrap();
        assert_eq!(r.hard_labels, vec![1]);
        assert!(r.distance_row(0).unwrap()[1].abs() < 1e-12);
    }

    #[test]
    fn rectify_twice_is_rejected() {
        let s = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let p = class_prototypes(&s, &[0, 1], 2).unwrap();
        let r = proto_rect(&s, &[0, 1], &FeatureMatrix::empty(2), &[], &p).unwrap();
        assert!(r.is_rectified());
        assert!(proto_rect(&s, &[0, 1], &FeatureMatrix::empty(2), &[], &r).is_err());
    }

    #[test]
    fn f32_and_f64_pipelines_agree() {
        let s = m(&[
            &[1.0, 0.2, 0.1],
            &[0.9, 0.1, 0.0],
            &[-0.2, 1.0, 0.3],
            &[0.0, 0.8, 0.5],
        ]);
        let q = m(&[&[0.7, 0.3, 0.0], &[0.1, 0.9, 0.2], &[0.5, 0.5, 0.5]]);
        let mean = MeanVector::new(vec![0.1, 0.1, -0.1], "t").unwrap();
        let r64 = nnfs_infer(
            &s,
            &[0, 0, 1, 1],
            &q,
            2,
            Some(&mean),
            NnfsConfig::NORM_PROTO_RECT,
        )
        .unwrap();
        let r32 = nnfs_infer(
            &s.cast::<f32>(),
            &[0, 0, 1, 1],
            &q.cast::<f32>(),
            2,
            Some(&mean.cast::<f32>()),
            NnfsConfig::NORM_PROTO_RECT,
        )
        .unwrap();
        assert_eq!(r64.hard_labels, r32.hard_labels);
        for (a, b) in r64.distribution.iter().zip(&r32.distribution) {
            assert!((a - *b as f64).abs() < 1e-5);
        }
    }
}
