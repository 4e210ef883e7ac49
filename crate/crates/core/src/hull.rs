//! Facet enumeration of the convex hull of a finite point set.
//!
//! The hull is computed by the double description method applied to the
//! homogenized polar cone `{(t, g) : g·w_i ≤ t}` in the intrinsic coordinates of
//! the point set's affine hull; its extreme rays are exactly the facets. Lower
//! dimensional point sets are handled by reporting the affine-hull equations
//! separately.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Supporting half-space `normal · x ≤ offset` with unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet<T> {
    pub normal: Vec<T>,
    pub offset: T,
    /// Indices of the input points lying on the facet.
    pub vertices: Vec<usize>,
}

/// H-representation of a polytope given by vertices.
#[derive(Debug, Clone)]
pub struct Polytope<T> {
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub facets: Vec<Facet<T>>,
    /// Affine-hull equations `a · x = b` (empty when full dimensional).
    pub equalities: Vec<(Vec<T>, T)>,
}

impl<T: Real> Polytope<T> {
    /// Largest violation `max_k (f_k·x − b_k)` together with equality residuals.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::min_value().unwrap_or_else(|| -T::one());
        for f in &self.facets {
            worst = worst.max(dot(&f.normal, x) - f.offset);
        }
        for (a, b) in &self.equalities {
            worst = worst.max((dot(a, x) - *b).abs());
        }
        worst
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[derive(Clone)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn and(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }
    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            (0..64).filter(move |b| word & (1 << b) != 0).map(move |b| w * 64 + b)
        })
    }
}

#[derive(Clone)]
struct Ray<T> {
    coords: Vec<T>,
    zero: Bits,
}

/// Numerical rank of a set of rows.
fn rank<T: Real>(rows: &[&[T]], eps: T) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let cols = rows[0].len();
    let mut m: Vec<Vec<T>> = rows.iter().map(|r| r.to_vec()).collect();
    let mut rank = 0;
    for col in 0..cols {
        if rank == m.len() {
            break;
        }
        let (piv, best) = (rank..m.len())
            .map(|r| (r, m[r][col].abs()))
            .fold((rank, T::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= eps {
            continue;
        }
        m.swap(rank, piv);
        let pivot = m[rank][col];
        for r in (rank + 1)..m.len() {
            let f = m[r][col] / pivot;
            if f != T::zero() {
                for k in col..cols {
                    let v = m[rank][k];
                    m[r][k] -= f * v;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Enumerate the facets of `conv(points)`.
///
/// `max_dim` caps the intrinsic dimension; facet counts grow exponentially with it.
pub fn convex_hull<T: Real>(points: &[Vec<T>], max_dim: Option<usize>) -> Result<Polytope<T>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Degenerate("empty point set".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension("points of differing dimension".into()));
    }
    let eps = T::geom_eps();
    let inv_n = T::one() / T::from_usize(n).expect("count");
    let centroid: Vec<T> = (0..dim)
        .map(|j| points.iter().fold(T::zero(), |acc, p| acc + p[j]) * inv_n)
        .collect();
    let centered = DMatrix::from_fn(n, dim, |i, j| points[i][j] - centroid[j]);
    let scale = centered.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if scale <= eps {
        return Err(Error::Degenerate("all points coincide".into()));
    }

    // Orthonormal basis of the affine hull from the right singular vectors.
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).expect("finite"));
    let rank_tol = eps * T::from_usize(n.max(dim)).expect("count") * sv[order[0]];
    let basis: Vec<Vec<T>> = order
        .iter()
        .filter(|&&k| sv[k] > rank_tol)
        .map(|&k| v_t.row(k).iter().copied().collect())
        .collect();
    let r = basis.len();
    if r == 0 {
        return Err(Error::Degenerate("point set has no extent".into()));
    }
    if let Some(cap) = max_dim {
        if r > cap {
            return Err(Error::FacetCap { dim: r, cap });
        }
    }
    let mut equalities = Vec::new();
    if r < dim {
        let full = centered.transpose() * &centered;
        let eig = nalgebra::SymmetricEigen::new(full);
        let mut idx: Vec<usize> = (0..dim).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite"));
        for &k in idx.iter().take(dim - r) {
            let a: Vec<T> = eig.eigenvectors.column(k).iter().copied().collect();
            let b = dot(&a, &centroid);
            equalities.push((a, b));
        }
    }

    // Constraint rows (1, -w_i) / ‖·‖ in the intrinsic coordinates.
    let rows: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(r + 1);
            row.push(T::one());
            for b in &basis {
                let w = (0..dim).fold(T::zero(), |acc, j| acc + b[j] * centered[(i, j)]);
                row.push(-w);
            }
            let nr = norm(&row);
            row.into_iter().map(|x| x / nr).collect()
        })
        .collect();

    let rays = double_description(&rows, r + 1, eps)?;

    let mut facets = Vec::with_capacity(rays.len());
    for ray in rays {
        let t = ray.coords[0];
        if t <= eps {
            return Err(Error::Degenerate("unbounded polar ray".into()));
        }
        // g·w ≤ t with w = B(x − c)  ⇒  (Bᵀg)·x ≤ t + (Bᵀg)·c
        let mut normal = vec![T::zero(); dim];
        for (gk, b) in ray.coords[1..].iter().zip(&basis) {
            for j in 0..dim {
                normal[j] += *gk * b[j];
            }
        }
        let mut offset = t + dot(&normal, &centroid);
        let nn = norm(&normal);
        normal.iter_mut().for_each(|x| *x /= nn);
        offset /= nn;
        let tol = eps.sqrt() * (T::one() + offset.abs());
        let vertices: Vec<usize> = (0..n)
            .filter(|&i| (dot(&normal, &points[i]) - offset).abs() <= tol)
            .collect();
        facets.push(Facet { normal, offset, vertices });
    }
    facets.sort_by(|a, b| lex_cmp(&a.normal, &b.normal));
    Ok(Polytope { ambient_dim: dim, intrinsic_dim: r, facets, equalities })
}

pub(crate) fn lex_cmp<T: Real>(a: &[T], b: &[T]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Extreme rays of the pointed cone `{y : row_i · y ≥ 0 ∀ i}` in `R^d`.
fn double_description<T: Real>(rows: &[Vec<T>], d: usize, eps: T) -> Result<Vec<Ray<T>>> {
    let n = rows.len();
    // Greedy choice of d independent rows for the initial simplicial cone.
    let mut initial: Vec<usize> = Vec::with_capacity(d);
    for i in 0..n {
        let mut trial: Vec<&[T]> = initial.iter().map(|&k| rows[k].as_slice()).collect();
        trial.push(&rows[i]);
        if rank(&trial, eps) == trial.len() {
            initial.push(i);
            if initial.len() == d {
                break;
            }
        }
    }
    if initial.len() < d {
        return Err(Error::Degenerate("constraint system is not of full rank".into()));
    }
    let a_s = DMatrix::from_fn(d, d, |i, j| rows[initial[i]][j]);
    let inv = a_s
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular initial simplex".into()))?;
    let mut rays: Vec<Ray<T>> = (0..d)
        .map(|j| {
            let mut coords: Vec<T> = inv.column(j).iter().copied().collect();
            let nr = norm(&coords);
            coords.iter_mut().for_each(|x| *x /= nr);
            let mut zero = Bits::new(n);
            for (k, &row) in initial.iter().enumerate() {
                if k != j {
                    zero.set(row);
                }
            }
            Ray { coords, zero }
        })
        .collect();

    let mut processed = vec![false; n];
    for &i in &initial {
        processed[i] = true;
    }
    let remaining: Vec<usize> = (0..n).filter(|&i| !processed[i]).collect();
    for &i in &remaining {
        let row = &rows[i];
        let vals: Vec<T> = rays.iter().map(|r| dot(row, &r.coords)).collect();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut next: Vec<Ray<T>> = Vec::with_capacity(rays.len());
        for (k, v) in vals.iter().enumerate() {
            if *v > eps {
                pos.push(k);
            } else if *v < -eps {
                neg.push(k);
            } else {
                let mut ray = rays[k].clone();
                ray.zero.set(i);
                next.push(ray);
            }
        }
        if neg.is_empty() {
            // Redundant (interior) point: no ray cut off.
            for &k in &pos {
                next.push(rays[k].clone());
            }
            rays = next;
            continue;
        }
        let need = d - 2;
        let fresh: Vec<Ray<T>> = pos
            .par_iter()
            .flat_map_iter(|&p| {
                let rays = &rays;
                let vals = &vals;
                neg.iter().filter_map(move |&q| {
                    let common = rays[p].zero.and(&rays[q].zero);
                    if common.count() < need {
                        return None;
                    }
                    let tight: Vec<&[T]> = common.ones().map(|k| rows[k].as_slice()).collect();
                    if rank(&tight, eps.sqrt()) != need {
                        return None;
                    }
                    let (sp, sq) = (vals[p], vals[q]);
                    let mut coords: Vec<T> = rays[q]
                        .coords
                        .iter()
                        .zip(&rays[p].coords)
                        .map(|(yq, yp)| sp * *yq - sq * *yp)
                        .collect();
                    let nr = norm(&coords);
                    coords.iter_mut().for_each(|x| *x /= nr);
                    let mut zero = common;
                    zero.set(i);
                    Some(Ray { coords, zero })
                })
            })
            .collect();
        for &k in &pos {
            next.push(rays[k].clone());
        }
        next.extend(fresh);
        rays = next;
    }
    Ok(rays)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        for x in [-1.0, 1.0] {
            for y in [-1.0, 1.0] {
                for z in [-1.0, 1.0] {
                    pts.push(vec![x, y, z]);
                }
            }
        }
        pts
    }

    /// Brute force: every affinely independent d-subset spanning a supporting
    /// hyperplane, merged by normal.
    fn brute_force_3d(points: &[Vec<f64>]) -> Vec<(Vec<f64>, f64)> {
        let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
        let n = points.len();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let u: Vec<f64> = (0..3).map(|t| points[j][t] - points[i][t]).collect();
                    let v: Vec<f64> = (0..3).map(|t| points[k][t] - points[i][t]).collect();
                    let mut nrm = vec![
                        u[1] * v[2] - u[2] * v[1],
                        u[2] * v[0] - u[0] * v[2],
                        u[0] * v[1] - u[1] * v[0],
                    ];
                    let l = norm(&nrm);
                    if l < 1e-9 {
                        continue;
                    }
                    nrm.iter_mut().for_each(|x| *x /= l);
                    let mut off = dot(&nrm, &points[i]);
                    let side: Vec<f64> = points.iter().map(|p| dot(&nrm, p) - off).collect();
                    if side.iter().all(|&s| s <= 1e-9) {
                    } else if side.iter().all(|&s| s >= -1e-9) {
                        nrm.iter_mut().for_each(|x| *x = -*x);
                        off = -off;
                    } else {
                        continue;
                    }
                    if !out.iter().any(|(m, _)| norm(&m.iter().zip(&nrm).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-9) {
                        out.push((nrm, off));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn cube_has_six_square_facets() {
        let p = convex_hull(&cube(), None).unwrap();
        assert_eq!(p.facets.len(), 6);
        assert!(p.equalities.is_empty());
        for f in &p.facets {
            assert_eq!(f.vertices.len(), 4);
            assert!((f.offset - 1.0).abs() < 1e-12);
        }
        // lexicographic order of normals
        assert!(p.facets[0].normal[0] < -0.5);
    }

    #[test]
    fn matches_brute_force_on_random_sphere_points() {
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..5 {
            let pts: Vec<Vec<f64>> = (0..14)
                .map(|_| {
                    let v = vec![next(), next(), next()];
                    let l = norm(&v);
                    v.into_iter().map(|x| x / l).collect()
                })
                .collect();
            let dd = convex_hull(&pts, None).unwrap();
            let bf = brute_force_3d(&pts);
            assert_eq!(dd.facets.len(), bf.len());
            for f in &dd.facets {
                assert!(bf.iter().any(|(m, o)| {
                    (o - f.offset).abs() < 1e-8
                        && m.iter().zip(&f.normal).all(|(a, b)| (a - b).abs() < 1e-8)
                }));
            }
        }
    }

    #[test]
    fn lower_dimensional_sets_report_equalities() {
        // Square in the plane z = 2 inside R^3.
        let pts: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0, 2.0],
            vec![1.0, 0.0, 2.0],
            vec![1.0, 1.0, 2.0],
            vec![0.0, 1.0, 2.0],
        ];
        let p = convex_hull(&pts, None).unwrap();
        assert_eq!(p.intrinsic_dim, 2);
        assert_eq!(p.facets.len(), 4);
        assert_eq!(p.equalities.len(), 1);
        let (a, b) = &p.equalities[0];
        assert!((a[2].abs() - 1.0).abs() < 1e-12);
        assert!((dot(a, &pts[0]) - b).abs() < 1e-12);
        assert!(p.max_violation(&[0.5, 0.5, 2.0]) < 1e-12);
        assert!(p.max_violation(&[0.5, 0.5, 2.1]) > 0.05);
    }

    #[test]
    fn cross_polytope_in_four_dimensions() {
        let mut pts: Vec<Vec<f64>> = Vec::new();
        for k in 0..4 {
            for s in [-1.0, 1.0] {
                let mut v = vec![0.0; 4];
                v[k] = s;
                pts.push(v);
            }
        }
        let p = convex_hull::<f64>(&pts, None).unwrap();
        assert_eq!(p.facets.len(), 16);
        for f in &p.facets {
            assert!((f.offset - 0.5).abs() < 1e-12);
            assert_eq!(f.vertices.len(), 4);
        }
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let pts: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..5).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        assert!(matches!(convex_hull(&pts, Some(4)), Err(Error::FacetCap { dim: 5, cap: 4 })));
        assert!(matches!(convex_hull(&vec![vec![1.0f64, 2.0]; 3], None), Err(Error::Degenerate(_))));
    }
}
