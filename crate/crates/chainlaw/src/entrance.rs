//! Existence and uniqueness of entrance laws on a backward window.
//!
//! A chain indexed by negative time has no initial distribution; the
//! distributions that can occur at time `t` are exactly those in the image of
//! the simplex at time `s` under the product `P_{st}`, intersected over all
//! `s < t`. The image is the convex hull of the product's rows, the images
//! nest as `s` decreases, and the hull diameter (in total variation) both
//! bounds the spread of candidate laws and certifies uniqueness when it
//! collapses.
//!
//! Nothing here materializes the infinite intersection: every report is an
//! approximation at the deepest available `s`, carried together with the
//! diameter trace that makes the approximation honest.

use ndarray::{Array1, Array2, ArrayView1};

use crate::algebra::product;
use crate::error::{Error, Result};
use crate::model::{push_forward, total_variation, ChainModel, Distribution, TimeIndex};

/// Default total-variation tolerance below which two product rows are merged
/// into one vertex.
pub const DEFAULT_DEDUP_TOL: f64 = 1e-9;

/// Vertex approximation of the simplex image `Delta(s, t)`.
#[derive(Clone, Debug)]
pub struct DeltaApprox {
    s: TimeIndex,
    t: TimeIndex,
    vertices: Vec<Distribution>,
    diameter: f64,
}

impl DeltaApprox {
    pub fn s(&self) -> TimeIndex {
        self.s
    }

    pub fn t(&self) -> TimeIndex {
        self.t
    }

    /// Deduplicated images of the point masses at time `s`, as distributions
    /// at time `t`.
    pub fn vertices(&self) -> &[Distribution] {
        &self.vertices
    }

    /// Maximum pairwise total-variation distance of the merged vertex set.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }
}

fn dedup_rows(rows: Vec<Array1<f64>>, dedup_tol: f64) -> Vec<Array1<f64>> {
    let mut kept: Vec<Array1<f64>> = Vec::new();
    for row in rows {
        let dup = kept
            .iter()
            .any(|k| total_variation(k.view(), row.view()) <= dedup_tol);
        if !dup {
            kept.push(row);
        }
    }
    kept
}

fn max_pairwise_tv(rows: &[Array1<f64>]) -> f64 {
    let mut d = 0.0_f64;
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            d = d.max(total_variation(rows[i].view(), rows[j].view()));
        }
    }
    d
}

fn approx_from_matrix(
    s: TimeIndex,
    t: TimeIndex,
    matrix: &Array2<f64>,
    dedup_tol: f64,
) -> DeltaApprox {
    let rows: Vec<Array1<f64>> = matrix.rows().into_iter().map(|r| r.to_owned()).collect();
    let kept = dedup_rows(rows, dedup_tol);
    let diameter = max_pairwise_tv(&kept);
    let vertices = kept
        .into_iter()
        .map(|r| Distribution::from_parts(t, r))
        .collect();
    DeltaApprox {
        s,
        t,
        vertices,
        diameter,
    }
}

/// Rows of `P_{st}` merged at tolerance `dedup_tol`, with hull diameter.
pub fn delta_vertices(
    model: &ChainModel,
    s: TimeIndex,
    t: TimeIndex,
    dedup_tol: f64,
) -> Result<DeltaApprox> {
    let p = product(model, s, t)?;
    Ok(approx_from_matrix(s, t, p.matrix(), dedup_tol))
}

// ---------------------------------------------------------------------------
// Hull membership
// ---------------------------------------------------------------------------

/// Solves a dense linear system by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot collapses (singular system).
fn solve_dense(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if a[[r, col]].abs() > a[[pivot, col]].abs() {
                pivot = r;
            }
        }
        if a[[pivot, col]].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                let tmp = a[[col, c]];
                a[[col, c]] = a[[pivot, c]];
                a[[pivot, c]] = tmp;
            }
            b.swap(col, pivot);
        }
        for r in (col + 1)..n {
            let factor = a[[r, col]] / a[[col, col]];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[[r, c]] -= factor * a[[col, c]];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in (row + 1)..n {
            acc -= a[[row, c]] * x[c];
        }
        x[row] = acc / a[[row, row]];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Minimizes `||x - sum_k u_k v_k||^2` subject to `sum u = 1` (sign-free)
/// over the vertices selected by `support`. Returns the weights in support
/// order.
fn affine_ls(x: ArrayView1<'_, f64>, verts: &[Array1<f64>], support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    if k == 1 {
        return Some(vec![1.0]);
    }
    let mut kkt = Array2::zeros((k + 1, k + 1));
    let mut rhs = Array1::zeros(k + 1);
    for (a, &ka) in support.iter().enumerate() {
        for (b, &kb) in support.iter().enumerate() {
            kkt[[a, b]] = 2.0 * verts[ka].dot(&verts[kb]);
        }
        kkt[[a, k]] = 1.0;
        kkt[[k, a]] = 1.0;
        rhs[a] = 2.0 * verts[ka].dot(&x);
    }
    rhs[k] = 1.0;
    let sol = solve_dense(kkt, rhs)?;
    Some(sol.iter().take(k).copied().collect())
}

fn combine(verts: &[Array1<f64>], support: &[usize], weights: &[f64]) -> Array1<f64> {
    let mut y = Array1::zeros(verts[0].len());
    for (&k, &w) in support.iter().zip(weights.iter()) {
        y.scaled_add(w, &verts[k]);
    }
    y
}

/// Euclidean projection of `x` onto the convex hull of `verts` by exact
/// subset enumeration. Only used for small vertex counts.
fn project_enumerate(x: ArrayView1<'_, f64>, verts: &[Array1<f64>]) -> Array1<f64> {
    let k = verts.len();
    let mut best: Option<(f64, Array1<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let Some(weights) = affine_ls(x, verts, &support) else {
            continue;
        };
        if weights.iter().any(|&w| w < -1e-12) {
            continue;
        }
        let y = combine(verts, &support, &weights);
        let d2 = (&y - &x).mapv(|v| v * v).sum();
        if best.as_ref().is_none_or(|(b, _)| d2 < *b) {
            best = Some((d2, y));
        }
    }
    best.expect("singleton subsets always solve").1
}

/// Euclidean projection of `x` onto the convex hull of `verts` by an
/// active-set iteration (simplex-constrained least squares).
fn project_active_set(x: ArrayView1<'_, f64>, verts: &[Array1<f64>]) -> Array1<f64> {
    let k = verts.len();
    let start = (0..k)
        .min_by(|&a, &b| {
            let da = (&verts[a] - &x).mapv(|v| v * v).sum();
            let db = (&verts[b] - &x).mapv(|v| v * v).sum();
            da.partial_cmp(&db).expect("finite distances")
        })
        .expect("nonempty vertex set");
    let mut support = vec![start];
    let mut weights = vec![1.0_f64];
    let max_outer = 16 + 4 * k;

    for _ in 0..max_outer {
        let y = combine(verts, &support, &weights);
        let gap = &x - &y;
        // Optimality over the hull: no vertex improves the descent direction.
        let base = y.dot(&gap);
        let mut best_k = None;
        let mut best_score = 1e-13 * (1.0 + gap.dot(&gap).sqrt());
        for (idx, v) in verts.iter().enumerate() {
            let score = v.dot(&gap) - base;
            if score > best_score {
                best_score = score;
                best_k = Some(idx);
            }
        }
        let Some(entering) = best_k else {
            return y;
        };
        if support.contains(&entering) {
            return y;
        }
        support.push(entering);
        weights.push(0.0);

        // Minor cycle: restore feasibility on the active support.
        loop {
            match affine_ls(x, verts, &support) {
                None => {
                    // Degenerate support; drop the newest vertex and give up
                    // on this direction.
                    support.pop();
                    weights.pop();
                    break;
                }
                Some(u) => {
                    if u.iter().all(|&w| w >= -1e-14) {
                        weights = u.iter().map(|&w| w.max(0.0)).collect();
                        break;
                    }
                    let mut alpha = 1.0_f64;
                    for (i, &ui) in u.iter().enumerate() {
                        if ui < 0.0 && weights[i] > ui {
                            alpha = alpha.min(weights[i] / (weights[i] - ui));
                        }
                    }
                    for (w, &ui) in weights.iter_mut().zip(u.iter()) {
                        *w += alpha * (ui - *w);
                    }
                    let mut i = 0;
                    while i < support.len() {
                        if weights[i] <= 1e-15 && support.len() > 1 {
                            support.remove(i);
                            weights.remove(i);
                        } else {
                            i += 1;
                        }
                    }
                }
            }
        }
    }
    combine(verts, &support, &weights)
}

/// Total-variation distance from `point` to the convex hull of `vertices`,
/// evaluated at the Euclidean projection of the point onto the hull.
///
/// The value is an upper bound on the exact TV distance to the hull (any
/// hull point gives one), and it vanishes exactly when the point lies in the
/// hull, which is the case the nesting checks certify. Hulls of at most
/// three vertices are solved by exact face enumeration, larger ones by
/// active-set projection.
pub fn hull_distance(point: ArrayView1<'_, f64>, vertices: &[Distribution]) -> f64 {
    assert!(!vertices.is_empty(), "hull needs at least one vertex");
    let verts: Vec<Array1<f64>> = vertices.iter().map(|v| v.probs().to_owned()).collect();
    let y = if verts.len() <= 3 {
        project_enumerate(point, &verts)
    } else {
        project_active_set(point, &verts)
    };
    total_variation(point, y.view())
}

/// Largest affine dimension spanned by the given probability vectors,
/// computed as the numeric rank of the centered vertex matrix.
pub fn affine_dimension(vertices: &[Distribution], tol: f64) -> usize {
    if vertices.len() <= 1 {
        return 0;
    }
    let d = vertices[0].len();
    let base = vertices[0].probs();
    let mut rows: Vec<Array1<f64>> = vertices[1..].iter().map(|v| &v.probs() - &base).collect();
    // Row-reduce with partial pivoting and count surviving rows.
    let mut rank = 0;
    for col in 0..d {
        let Some(pivot_row) = (rank..rows.len()).max_by(|&a, &b| {
            rows[a][col]
                .abs()
                .partial_cmp(&rows[b][col].abs())
                .expect("finite entries")
        }) else {
            break;
        };
        if rows[pivot_row][col].abs() <= tol {
            continue;
        }
        rows.swap(rank, pivot_row);
        for r in (rank + 1)..rows.len() {
            let factor = rows[r][col] / rows[rank][col];
            if factor != 0.0 {
                let pivot = rows[rank].clone();
                rows[r].scaled_add(-factor, &pivot);
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

// ---------------------------------------------------------------------------
// Nesting, limits, uniqueness
// ---------------------------------------------------------------------------

/// Hull-containment residuals along a schedule of probe times.
#[derive(Clone, Debug)]
pub struct NestingReport {
    pub t: TimeIndex,
    /// Consecutive `(deeper s, shallower s)` pairs actually compared.
    pub pairs: Vec<(TimeIndex, TimeIndex)>,
    /// Per pair: the largest TV distance from a deep vertex to the shallow
    /// hull.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Checks that each deeper simplex image sits inside the shallower one:
/// every vertex of `Delta(s', t)` must be within hull distance of
/// `conv(Delta(s, t))` for consecutive schedule entries `s' < s`.
pub fn delta_nesting_check(
    model: &ChainModel,
    t: TimeIndex,
    schedule: &[TimeIndex],
) -> Result<NestingReport> {
    if schedule.len() < 2 {
        return Err(Error::InvalidSchedule {
            reason: "nesting check needs at least two probe times",
        });
    }
    if schedule.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidSchedule {
            reason: "schedule must be strictly decreasing",
        });
    }
    if schedule[0] >= t {
        return Err(Error::InvalidSchedule {
            reason: "all probe times must precede t",
        });
    }
    let mut pairs = Vec::new();
    let mut residuals = Vec::new();
    for w in schedule.windows(2) {
        let (shallow, deep) = (w[0], w[1]);
        let outer = delta_vertices(model, shallow, t, DEFAULT_DEDUP_TOL)?;
        let inner = delta_vertices(model, deep, t, DEFAULT_DEDUP_TOL)?;
        let mut worst = 0.0_f64;
        for v in inner.vertices() {
            worst = worst.max(hull_distance(v.probs(), outer.vertices()));
        }
        pairs.push((deep, shallow));
        residuals.push(worst);
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok(NestingReport {
        t,
        pairs,
        residuals,
        max_residual,
    })
}

/// Convergence report for backward products along a probe schedule.
#[derive(Clone, Debug)]
pub struct LimitMatrixReport {
    pub t: TimeIndex,
    pub schedule: Vec<TimeIndex>,
    /// Product at the deepest probed time.
    pub limit: Array2<f64>,
    /// Max-abs change between consecutive same-shape products.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// All rows of the limit agree within tolerance.
    pub unique: bool,
    /// Mean row of the limit when `unique`.
    pub unique_law: Option<Distribution>,
    /// The schedule produced products with differing row counts; convergence
    /// cannot be assessed on it.
    pub mixed_dimensions: bool,
}

fn mean_row(matrix: &Array2<f64>, t: TimeIndex) -> Distribution {
    let n = matrix.nrows() as f64;
    let mean = matrix.sum_axis(ndarray::Axis(0)) / n;
    Distribution::from_parts(t, mean)
}

/// Probes `P_{st}` along a decreasing schedule of start times and reports
/// convergence and row collapse. A schedule mixing row dimensions is
/// reported (`mixed_dimensions`), not treated as a hard error, mirroring the
/// restriction of limits to constant-dimension subsequences.
pub fn limit_matrix(
    model: &ChainModel,
    t: TimeIndex,
    schedule: &[TimeIndex],
    tol: f64,
) -> Result<LimitMatrixReport> {
    if schedule.is_empty() {
        return Err(Error::InvalidSchedule {
            reason: "empty schedule",
        });
    }
    if schedule.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidSchedule {
            reason: "schedule must be strictly decreasing",
        });
    }
    if schedule[0] >= t {
        return Err(Error::InvalidSchedule {
            reason: "all probe times must precede t",
        });
    }
    let products: Vec<Array2<f64>> = schedule
        .iter()
        .map(|&s| product(model, s, t).map(|p| p.matrix().clone()))
        .collect::<Result<_>>()?;
    let mixed_dimensions = products.windows(2).any(|w| w[0].shape() != w[1].shape());
    let mut residuals = Vec::new();
    for w in products.windows(2) {
        if w[0].shape() == w[1].shape() {
            let d = w[0]
                .iter()
                .zip(w[1].iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            residuals.push(d);
        }
    }
    let limit = products.last().expect("nonempty schedule").clone();
    let converged = !mixed_dimensions && residuals.last().is_some_and(|&r| r <= tol);
    let rows_close = {
        let mut worst = 0.0_f64;
        for i in 0..limit.nrows() {
            for j in (i + 1)..limit.nrows() {
                let d = limit
                    .row(i)
                    .iter()
                    .zip(limit.row(j).iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(d);
            }
        }
        worst <= tol
    };
    let unique = converged && rows_close;
    let unique_law = unique.then(|| mean_row(&limit, t));
    Ok(LimitMatrixReport {
        t,
        schedule: schedule.to_vec(),
        limit,
        residuals,
        converged,
        unique,
        unique_law,
        mixed_dimensions,
    })
}

/// Uniqueness certificate for the law at time `t`.
#[derive(Clone, Debug)]
pub struct UniquenessReport {
    pub t: TimeIndex,
    pub depth: i64,
    pub tol: f64,
    /// Hull diameter at each probed depth `d = 1..=depth`.
    pub diameter_trace: Vec<(i64, f64)>,
    /// Diameter at the deepest probe fell at or below `tol`.
    pub unique: bool,
    /// Mean row of the deepest product when `unique`.
    pub law: Option<Distribution>,
}

/// Certifies uniqueness of the entrance law at `t` by hull-diameter decay:
/// the law is reported unique at depth `d` and tolerance `tol` when the
/// diameter of `Delta(t - d, t)` has fallen to `tol`. The claim is always
/// relative to the probed depth; a constant trace (as for a permutation
/// step) is a genuine non-uniqueness witness.
pub fn detect_uniqueness(
    model: &ChainModel,
    t: TimeIndex,
    tol: f64,
    s_depth: i64,
) -> Result<UniquenessReport> {
    if s_depth < 1 {
        return Err(Error::InvalidSchedule {
            reason: "probe depth must be at least 1",
        });
    }
    let (start, end) = model.window();
    if t > end || t - s_depth < start {
        return Err(Error::InsufficientWindow {
            needed: s_depth,
            available: t - start,
        });
    }
    let mut diameter_trace = Vec::with_capacity(s_depth as usize);
    let mut acc = model.matrix_at(t - 1)?.entries().clone();
    diameter_trace.push((
        1,
        approx_from_matrix(t - 1, t, &acc, DEFAULT_DEDUP_TOL).diameter,
    ));
    for d in 2..=s_depth {
        let s = t - d;
        let step = model.matrix_at(s)?;
        if step.cols() != acc.nrows() {
            return Err(Error::DimensionMismatch {
                what: "product chaining",
                expected: acc.nrows(),
                got: step.cols(),
            });
        }
        acc = step.entries().dot(&acc);
        diameter_trace.push((
            d,
            approx_from_matrix(s, t, &acc, DEFAULT_DEDUP_TOL).diameter,
        ));
    }
    let deepest = diameter_trace.last().expect("depth >= 1").1;
    let unique = deepest <= tol;
    let law = unique.then(|| mean_row(&acc, t));
    Ok(UniquenessReport {
        t,
        depth: s_depth,
        tol,
        diameter_trace,
        unique,
        law,
    })
}

/// Anchored entrance-law approximation.
#[derive(Clone, Debug)]
pub struct EntranceLaw {
    /// One law per requested report time, in the order given.
    pub laws: Vec<Distribution>,
    /// Diameter of the simplex image at the earliest reported time: an upper
    /// bound on the TV distance between the laws produced by any two anchors.
    pub anchor_sensitivity: f64,
}

/// Runs the forward recursion `m_{n+1} = m_n P_n` from an anchor at the left
/// edge of the window and reports the law at the requested times.
///
/// On a finite window the recursion is exact; what is approximate is the
/// claim that it represents an entrance law, and `anchor_sensitivity` bounds
/// that gap: any two anchors give laws within it in total variation.
pub fn entrance_law(
    model: &ChainModel,
    anchor: &Distribution,
    t_report: &[TimeIndex],
) -> Result<EntranceLaw> {
    let (start, end) = model.window();
    if anchor.time() != start {
        return Err(Error::TimeMismatch {
            expected: start,
            got: anchor.time(),
        });
    }
    if anchor.len() != model.dim_at(start)? {
        return Err(Error::DimensionMismatch {
            what: "anchor distribution",
            expected: model.dim_at(start)?,
            got: anchor.len(),
        });
    }
    if t_report.is_empty() {
        return Err(Error::InvalidSchedule {
            reason: "no report times requested",
        });
    }
    for &n in t_report {
        if n < start || n > end {
            return Err(Error::OutOfWindow {
                time: n,
                start,
                end,
            });
        }
    }
    let min_report = *t_report.iter().min().expect("nonempty");
    let max_report = *t_report.iter().max().expect("nonempty");
    let mut current = anchor.clone();
    let mut at_time = vec![(start, current.clone())];
    for n in start..max_report {
        current = push_forward(&current, model.matrix_at(n)?)?;
        at_time.push((n + 1, current.clone()));
    }
    let laws = t_report
        .iter()
        .map(|&n| {
            at_time
                .iter()
                .find(|(time, _)| *time == n)
                .expect("computed up to max_report")
                .1
                .clone()
        })
        .collect();
    let anchor_sensitivity = if min_report == start {
        if anchor.len() > 1 {
            1.0
        } else {
            0.0
        }
    } else {
        delta_vertices(model, start, min_report, DEFAULT_DEDUP_TOL)?.diameter()
    };
    Ok(EntranceLaw {
        laws,
        anchor_sensitivity,
    })
}
