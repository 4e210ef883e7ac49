//! POVMs, Bloch-sphere projective measurements and the polyhedral measurement
//! hierarchy (icosahedron refined by successive duals).

use serde::{Deserialize, Serialize};

use crate::doc::{matrix_from_doc, matrix_to_doc, MatrixDoc};
use crate::error::{Error, Result};
use crate::hull::convex_hull;
use crate::qops::{self, identity, max_abs, min_eigenvalue, paulis, trace_product, ComplexMatrix, DensityOperator};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> BlochVector<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn from_f64(v: [f64; 3]) -> Self {
        Self::new(T::lit(v[0]), T::lit(v[1]), T::lit(v[2]))
    }

    pub fn to_f64(self) -> [f64; 3] {
        [self.x.as_f64(), self.y.as_f64(), self.z.as_f64()]
    }

    pub fn as_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn neg(self) -> Self {
        self.scale(-T::one())
    }

    pub fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if n <= T::geom_eps() {
            return Err(Error::Parameter("cannot normalize a zero Bloch vector".into()));
        }
        Ok(self.scale(T::one() / n))
    }

    /// Canonical hemisphere used to pick the `+` outcome of an antipodal pair:
    /// `z > 0`, ties broken by `y > 0`, then `x > 0`.
    pub fn is_upper(self) -> bool {
        let eps = T::geom_eps();
        if self.z.abs() > eps {
            return self.z > T::zero();
        }
        if self.y.abs() > eps {
            return self.y > T::zero();
        }
        self.x > T::zero()
    }

    /// `v·σ`.
    pub fn operator(self) -> ComplexMatrix<T> {
        let [sx, sy, sz] = paulis::<T>();
        sx.scale(self.x) + sy.scale(self.y) + sz.scale(self.z)
    }

    /// Bloch vector `Tr[m σ_i]` of a qubit operator.
    pub fn of_operator(m: &ComplexMatrix<T>) -> Self {
        let [sx, sy, sz] = paulis::<T>();
        Self::new(trace_product(m, &sx).re, trace_product(m, &sy).re, trace_product(m, &sz).re)
    }

    pub fn rotate(self, r: &Rotation) -> Self {
        let m = r.matrix();
        let v = [self.x, self.y, self.z];
        let row = |i: usize| {
            (0..3).fold(T::zero(), |acc, j| acc + T::lit(m[i][j]) * v[j])
        };
        Self::new(row(0), row(1), row(2))
    }

    fn distance(self, other: Self) -> T {
        Self::new(self.x - other.x, self.y - other.y, self.z - other.z).norm()
    }
}

/// Deepest refinement level built on request (812 vertices).
pub const MAX_LEVEL: usize = 5;

/// Global orientation of a polyhedral set: z-y-z Euler angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rotation {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation { alpha: 0.0, beta: 0.0, gamma: 0.0 };

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let rz = |t: f64| [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]];
        let ry = |t: f64| [[t.cos(), 0.0, t.sin()], [0.0, 1.0, 0.0], [-t.sin(), 0.0, t.cos()]];
        let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
            let mut out = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
                }
            }
            out
        };
        mul(mul(rz(self.alpha), ry(self.beta)), rz(self.gamma))
    }
}

/// Finite-outcome POVM on `C^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm<T: Real> {
    elements: Vec<ComplexMatrix<T>>,
}

impl<T: Real> Povm<T> {
    pub fn new(elements: Vec<ComplexMatrix<T>>) -> Result<Self> {
        let first = elements.first().ok_or_else(|| Error::Parameter("POVM without outcomes".into()))?;
        let d = first.nrows();
        let mut sum = qops::zeros::<T>(d);
        for e in &elements {
            if !e.is_square() || e.nrows() != d {
                return Err(Error::Dimension("POVM elements of differing dimension".into()));
            }
            let lo = min_eigenvalue(e)?;
            if lo < -T::psd_tol() {
                return Err(Error::NotPositive(lo.as_f64()));
            }
            sum += e;
        }
        let dev = max_abs(&(sum - identity::<T>(d)));
        if dev > T::herm_tol() {
            return Err(Error::Parameter(format!("POVM elements do not sum to identity (deviation {})", dev.as_f64())));
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[ComplexMatrix<T>] {
        &self.elements
    }

    pub fn element(&self, a: usize) -> &ComplexMatrix<T> {
        &self.elements[a]
    }

    pub fn outcomes(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    /// Same POVM with the outcomes listed in `order`.
    pub fn relabel(&self, order: &[usize]) -> Self {
        Self { elements: order.iter().map(|&a| self.elements[a].clone()).collect() }
    }
}

/// `{(1 + v·σ)/2, (1 − v·σ)/2}` for a unit Bloch vector `v`.
pub fn projective_from_bloch<T: Real>(v: BlochVector<T>) -> Result<Povm<T>> {
    let n = v.norm();
    if (n - T::one()).abs() > T::lit(1e-9).max(T::geom_eps()) {
        return Err(Error::Parameter(format!("Bloch vector of norm {} is not a unit direction", n.as_f64())));
    }
    let half = T::lit(0.5);
    let id = identity::<T>(2);
    let vs = v.operator();
    Povm::new(vec![(&id + &vs).scale(half), (&id - &vs).scale(half)])
}

/// `M_a^η = η M_a + (1 − η) Tr[ξ M_a] 1`.
pub fn shrunk_povm<T: Real>(m: &Povm<T>, eta: T, xi: &DensityOperator<T>) -> Result<Povm<T>> {
    if !(eta >= T::zero() && eta <= T::one()) {
        return Err(Error::Parameter(format!("shrinking factor {} outside [0, 1]", eta.as_f64())));
    }
    if xi.dim() != m.dim() {
        return Err(Error::Dimension("ξ does not act on the measured system".into()));
    }
    let id = identity::<T>(m.dim());
    let elements = m
        .elements
        .iter()
        .map(|e| e.scale(eta) + id.scale((T::one() - eta) * trace_product(xi.matrix(), e).re))
        .collect();
    Povm::new(elements)
}

/// Finite family of POVMs sharing dimension and outcome count.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet<T: Real> {
    povms: Vec<Povm<T>>,
    bloch_vertices: Option<Vec<BlochVector<T>>>,
    label: String,
    level: Option<usize>,
    generators: Option<Vec<usize>>,
}

impl<T: Real> MeasurementSet<T> {
    pub fn new(povms: Vec<Povm<T>>, label: impl Into<String>) -> Result<Self> {
        let first = povms.first().ok_or_else(|| Error::Parameter("empty measurement set".into()))?;
        let (d, k) = (first.dim(), first.outcomes());
        if povms.iter().any(|p| p.dim() != d || p.outcomes() != k) {
            return Err(Error::Dimension("measurement set mixes dimensions or outcome counts".into()));
        }
        Ok(Self { povms, bloch_vertices: None, label: label.into(), level: None, generators: None })
    }

    /// Projective qubit set: POVM `x` owns the vertex pair `(v_x, −v_x)` with
    /// outcome 0 along `+v_x`. Directions are flipped into the canonical upper
    /// hemisphere first.
    pub fn from_directions(dirs: &[BlochVector<T>], label: impl Into<String>, level: Option<usize>) -> Result<Self> {
        let mut povms = Vec::with_capacity(dirs.len());
        let mut vertices = Vec::with_capacity(2 * dirs.len());
        for &d in dirs {
            let d = d.normalized()?;
            let d = if d.is_upper() { d } else { d.neg() };
            povms.push(projective_from_bloch(d)?);
            vertices.push(d);
            vertices.push(d.neg());
        }
        let mut set = Self::new(povms, label)?;
        set.bloch_vertices = Some(vertices);
        set.level = level;
        Ok(set)
    }

    /// Icosahedron in the canonical orientation: cyclic permutations of `(0, ±1, ±φ)`.
    pub fn icosahedron(rotation: &Rotation) -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts = Vec::new();
        for s1 in [1.0, -1.0] {
            for s2 in [1.0, -1.0] {
                verts.push([0.0, s1, s2 * phi]);
                verts.push([s1, s2 * phi, 0.0]);
                verts.push([s2 * phi, 0.0, s1]);
            }
        }
        Self::from_vertex_list(&verts, rotation, "icosahedron", Some(1))
    }

    pub fn cube(rotation: &Rotation) -> Self {
        let mut verts = Vec::new();
        for x in [1.0, -1.0] {
            for y in [1.0, -1.0] {
                for z in [1.0, -1.0] {
                    verts.push([x, y, z]);
                }
            }
        }
        Self::from_vertex_list(&verts, rotation, "cube", None)
    }

    fn from_vertex_list(verts: &[[f64; 3]], rotation: &Rotation, label: &str, level: Option<usize>) -> Self {
        let dirs: Vec<BlochVector<T>> = verts
            .iter()
            .map(|v| BlochVector::<T>::from_f64(*v).normalized().expect("nonzero vertex").rotate(rotation))
            .filter(|v| v.is_upper())
            .collect();
        Self::from_directions(&dirs, label, level).expect("valid polyhedron")
    }

    /// Level `k` of the refinement hierarchy: the icosahedron refined `k − 1` times.
    pub fn polyhedron_level(level: usize, rotation: &Rotation) -> Result<Self> {
        if level == 0 || level > MAX_LEVEL {
            return Err(Error::Parameter(format!("level {level} outside 1..={MAX_LEVEL}")));
        }
        let mut set = Self::icosahedron(rotation);
        for _ in 1..level {
            set = set.refine_by_dual()?;
        }
        Ok(set)
    }

    /// Add the unit outward facet normals of the current vertex polytope as new
    /// vertices.
    pub fn refine_by_dual(&self) -> Result<Self> {
        let vertices = self
            .bloch_vertices
            .as_ref()
            .ok_or_else(|| Error::Parameter("refinement needs a Bloch-vertex set".into()))?;
        let pts: Vec<Vec<T>> = vertices.iter().map(|v| v.as_array().to_vec()).collect();
        let hull = convex_hull(&pts, None)?;
        if hull.intrinsic_dim < 3 {
            return Err(Error::Degenerate("coplanar Bloch vertices".into()));
        }
        let mut dirs = self.directions();
        let tol = T::lit(1e-7).max(T::geom_eps());
        for f in &hull.facets {
            let n = BlochVector::new(f.normal[0], f.normal[1], f.normal[2]);
            if !n.is_upper() {
                continue;
            }
            if dirs.iter().any(|d| d.distance(n) < tol || d.distance(n.neg()) < tol) {
                continue;
            }
            dirs.push(n);
        }
        let label = match self.level {
            Some(l) => format!("{}-refined-{}", base_label(&self.label), l + 1),
            None => format!("{}-refined", self.label),
        };
        Self::from_directions(&dirs, label, self.level.map(|l| l + 1))
    }

    /// `+` directions, one per POVM (projective qubit sets only).
    pub fn directions(&self) -> Vec<BlochVector<T>> {
        self.bloch_vertices
            .as_ref()
            .map(|v| v.iter().step_by(2).copied().collect())
            .unwrap_or_default()
    }

    pub fn povms(&self) -> &[Povm<T>] {
        &self.povms
    }

    pub fn bloch_vertices(&self) -> Option<&[BlochVector<T>]> {
        self.bloch_vertices.as_deref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn level(&self) -> Option<usize> {
        self.level
    }

    pub fn generators(&self) -> Option<&[usize]> {
        self.generators.as_deref()
    }

    pub fn len(&self) -> usize {
        self.povms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.povms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.povms[0].dim()
    }

    pub fn outcomes(&self) -> usize {
        self.povms[0].outcomes()
    }

    /// The measurements that have to enter a local-model program: generator POVMs
    /// only (when relabelling generators are recorded), zero outcomes removed,
    /// and trivial single-outcome measurements dropped. Projective qubit results
    /// get their Bloch vertices restored.
    pub fn essential(&self) -> Result<Self> {
        let idx: Vec<usize> = match &self.generators {
            Some(g) => g.clone(),
            None => (0..self.povms.len()).collect(),
        };
        let tol = T::psd_tol();
        let mut povms = Vec::new();
        let mut changed = self.generators.is_some();
        for &i in &idx {
            let kept: Vec<ComplexMatrix<T>> =
                self.povms[i].elements.iter().filter(|e| max_abs(e) > tol).cloned().collect();
            changed |= kept.len() != self.povms[i].outcomes();
            if kept.len() > 1 {
                povms.push(Povm::new(kept)?);
            }
        }
        if !changed {
            return Ok(self.clone());
        }
        let projective_qubit = povms.iter().all(|p| {
            p.dim() == 2
                && p.outcomes() == 2
                && (qops::trace(p.element(0)).re - T::one()).abs() < T::herm_tol()
                && (BlochVector::of_operator(p.element(0)).norm() - T::one()).abs() < T::lit(1e-9).max(T::geom_eps())
        });
        let label = format!("{}-essential", self.label);
        if projective_qubit && !povms.is_empty() {
            let dirs: Vec<BlochVector<T>> = povms.iter().map(|p| BlochVector::of_operator(p.element(0))).collect();
            let mut set = Self::from_directions(&dirs, label, self.level)?;
            // keep the original outcome orientation
            set.povms = povms;
            set.bloch_vertices = Some(dirs.iter().flat_map(|&d| [d, d.neg()]).collect());
            return Ok(set);
        }
        let mut set = Self::new(povms, label)?;
        set.level = self.level;
        Ok(set)
    }

    pub fn to_doc(&self) -> MeasurementSetDoc {
        MeasurementSetDoc {
            label: self.label.clone(),
            level: self.level,
            dimension: self.dim(),
            outcomes: self.outcomes(),
            povms: self.povms.iter().map(|p| p.elements.iter().map(matrix_to_doc).collect()).collect(),
            bloch_vertices: self.bloch_vertices.as_ref().map(|v| v.iter().map(|b| b.to_f64()).collect()),
            generators: self.generators.clone(),
        }
    }

    pub fn from_doc(doc: &MeasurementSetDoc) -> Result<Self> {
        let povms = doc
            .povms
            .iter()
            .map(|p| Povm::new(p.iter().map(matrix_from_doc).collect::<Result<Vec<_>>>()?))
            .collect::<Result<Vec<_>>>()?;
        let mut set = Self::new(povms, doc.label.clone())?;
        if set.dim() != doc.dimension || set.outcomes() != doc.outcomes {
            return Err(Error::Dimension("measurement set header disagrees with its POVMs".into()));
        }
        set.level = doc.level;
        set.generators = doc.generators.clone();
        if let Some(v) = &doc.bloch_vertices {
            if v.len() != 2 * set.len() {
                return Err(Error::Dimension("Bloch vertex count must be twice the POVM count".into()));
            }
            set.bloch_vertices = Some(v.iter().map(|b| BlochVector::from_f64(*b)).collect());
        }
        Ok(set)
    }
}

fn base_label(label: &str) -> &str {
    label.split("-refined").next().unwrap_or(label)
}

/// Four-outcome qubit set built from a projective set: every placement of
/// `(P₊, P₋)` in two of the four outcome slots, plus the four relabellings of
/// the trivial measurement `{1, 0, 0, 0}`. The `{P₊, P₋, 0, 0}` members are
/// recorded as generators.
pub fn relabelled_povm_set<T: Real>(base: &MeasurementSet<T>, outcomes: usize) -> Result<MeasurementSet<T>> {
    if base.outcomes() != 2 || base.dim() != 2 || outcomes < 2 {
        return Err(Error::Parameter("relabelled set needs a two-outcome qubit base and ≥ 2 slots".into()));
    }
    let zero = qops::zeros::<T>(2);
    let mut povms = Vec::new();
    let mut generators = Vec::new();
    for p in base.povms() {
        for i in 0..outcomes {
            for j in 0..outcomes {
                if i == j {
                    continue;
                }
                if (i, j) == (0, 1) {
                    generators.push(povms.len());
                }
                let mut el = vec![zero.clone(); outcomes];
                el[i] = p.element(0).clone();
                el[j] = p.element(1).clone();
                povms.push(Povm::new(el)?);
            }
        }
    }
    for i in 0..outcomes {
        let mut el = vec![zero.clone(); outcomes];
        el[i] = identity::<T>(2);
        povms.push(Povm::new(el)?);
    }
    let mut set = MeasurementSet::new(povms, format!("{}-povm{}", base.label(), outcomes))?;
    set.level = base.level();
    set.generators = Some(generators);
    Ok(set)
}

/// The 76-element four-outcome qubit set generated by the icosahedron.
pub fn icosahedron_povm4<T: Real>(rotation: &Rotation) -> MeasurementSet<T> {
    relabelled_povm_set(&MeasurementSet::icosahedron(rotation), 4).expect("icosahedron is a qubit projective set")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetDoc {
    pub label: String,
    pub level: Option<usize>,
    pub dimension: usize,
    pub outcomes: usize,
    pub povms: Vec<Vec<MatrixDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bloch_vertices: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<usize>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::{basis, projector};
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> BlochVector<f64> {
        BlochVector::new(x, y, z)
    }

    #[test]
    fn projective_examples() {
        let z = projective_from_bloch(v(0.0, 0.0, 1.0)).unwrap();
        assert!(max_abs(&(z.element(0) - projector(&basis(2, 0)))) < 1e-15);
        assert!(max_abs(&(z.element(1) - projector(&basis(2, 1)))) < 1e-15);
        let x = projective_from_bloch(v(1.0, 0.0, 0.0)).unwrap();
        let plus = (basis::<f64>(2, 0) + basis(2, 1)).unscale(2f64.sqrt());
        assert!(max_abs(&(x.element(0) - projector(&plus))) < 1e-15);
        let down = projective_from_bloch(v(0.0, 0.0, -1.0)).unwrap();
        assert_eq!(down.element(0), z.element(1));
        assert_eq!(down.element(1), z.element(0));
        assert!(projective_from_bloch(v(0.0, 0.5, 0.0)).is_err());
    }

    #[test]
    fn polyhedra_counts() {
        let ico = MeasurementSet::<f64>::icosahedron(&Rotation::IDENTITY);
        assert_eq!(ico.len(), 6);
        assert_eq!(ico.bloch_vertices().unwrap().len(), 12);
        let cube = MeasurementSet::<f64>::cube(&Rotation::IDENTITY);
        assert_eq!(cube.len(), 4);
        assert_eq!(cube.bloch_vertices().unwrap().len(), 8);
        for set in [&ico, &cube] {
            let verts = set.bloch_vertices().unwrap();
            for pair in verts.chunks(2) {
                assert!((pair[0].norm() - 1.0).abs() < 1e-12);
                assert!(pair[0].distance(pair[1].neg()) < 1e-15);
            }
        }
    }

    #[test]
    fn refinement_vertex_counts() {
        let mut set = MeasurementSet::<f64>::icosahedron(&Rotation::IDENTITY);
        let mut counts = vec![set.bloch_vertices().unwrap().len()];
        for _ in 0..3 {
            let next = set.refine_by_dual().unwrap();
            let old = set.bloch_vertices().unwrap();
            let new = next.bloch_vertices().unwrap();
            assert!(old.iter().all(|o| new.iter().any(|n| n.distance(*o) < 1e-12)));
            for pair in new.chunks(2) {
                assert!(pair[0].distance(pair[1].neg()) < 1e-15);
            }
            assert_eq!(next.level(), Some(set.level().unwrap() + 1));
            counts.push(new.len());
            set = next;
        }
        assert_eq!(counts, vec![12, 32, 92, 272]);
        assert_eq!(set.len(), 136);
        assert_eq!(set.label(), "icosahedron-refined-4");
    }

    #[test]
    fn rotation_preserves_counts() {
        let r = Rotation { alpha: 0.3, beta: 1.1, gamma: -0.7 };
        let ico = MeasurementSet::<f64>::icosahedron(&r);
        assert_eq!(ico.len(), 6);
        let lvl2 = ico.refine_by_dual().unwrap();
        assert_eq!(lvl2.bloch_vertices().unwrap().len(), 32);
    }

    #[test]
    fn shrunk_examples() {
        let z = projective_from_bloch(v(0.0, 0.0, 1.0)).unwrap();
        let xi = DensityOperator::<f64>::maximally_mixed(2, 1);
        assert_eq!(shrunk_povm(&z, 1.0, &xi).unwrap(), z);
        let half = shrunk_povm(&z, 0.5, &xi).unwrap();
        let b0 = BlochVector::of_operator(half.element(0));
        let b1 = BlochVector::of_operator(half.element(1));
        assert!(b0.distance(v(0.0, 0.0, 0.5)) < 1e-15);
        assert!(b1.distance(v(0.0, 0.0, -0.5)) < 1e-15);
        let x = projective_from_bloch(v(0.6, 0.0, 0.8)).unwrap();
        let flat = shrunk_povm(&x, 0.0, &xi).unwrap();
        for e in flat.elements() {
            assert!(max_abs(&(e - identity::<f64>(2).scale(0.5))) < 1e-15);
        }
        assert!(shrunk_povm(&x, 1.5, &xi).is_err());
        assert!(shrunk_povm(&x, 0.5, &DensityOperator::maximally_mixed(3, 1)).is_err());
    }

    #[test]
    fn four_outcome_icosahedron_set() {
        let set = icosahedron_povm4::<f64>(&Rotation::IDENTITY);
        assert_eq!(set.len(), 76);
        assert_eq!(set.outcomes(), 4);
        assert_eq!(set.generators().unwrap().len(), 6);
        for p in set.povms() {
            let sum = p.elements().iter().fold(qops::zeros::<f64>(2), |acc, e| acc + e);
            assert!(max_abs(&(sum - identity::<f64>(2))) < 1e-12);
        }
        let ess = set.essential().unwrap();
        assert_eq!(ess.len(), 6);
        assert_eq!(ess.outcomes(), 2);
        let ico = MeasurementSet::<f64>::icosahedron(&Rotation::IDENTITY);
        assert_eq!(ess.povms(), ico.povms());
        for (a, b) in ess.bloch_vertices().unwrap().iter().zip(ico.bloch_vertices().unwrap()) {
            assert!(a.distance(*b) < 1e-14);
        }
    }

    #[test]
    fn doc_roundtrip_keeps_structure() {
        let set = icosahedron_povm4::<f64>(&Rotation::IDENTITY);
        let json = serde_json::to_string(&set.to_doc()).unwrap();
        let back = MeasurementSet::<f64>::from_doc(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.generators(), set.generators());
        assert_eq!(back.len(), 76);
        let ico = MeasurementSet::<f64>::icosahedron(&Rotation::IDENTITY);
        let doc = ico.to_doc();
        assert_eq!(doc.bloch_vertices.as_ref().unwrap().len(), 12);
        let back = MeasurementSet::<f64>::from_doc(&doc).unwrap();
        assert_eq!(back.bloch_vertices().unwrap().len(), 12);
    }

    proptest! {
        #[test]
        fn generated_povms_are_valid(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, eta in 0.0f64..=1.0) {
            let d = v(x, y, z);
            prop_assume!(d.norm() > 1e-3);
            let d = d.normalized().unwrap();
            let p = projective_from_bloch(d).unwrap();
            let q = projective_from_bloch(d.neg()).unwrap();
            prop_assert_eq!(p.element(0), q.element(1));
            prop_assert_eq!(p.element(1), q.element(0));
            let s = shrunk_povm(&p, eta, &DensityOperator::maximally_mixed(2, 1)).unwrap();
            let sum = s.element(0) + s.element(1);
            prop_assert!(max_abs(&(sum - identity::<f64>(2))) < 1e-10);
            for e in s.elements() {
                prop_assert!(min_eigenvalue(e).unwrap() >= -1e-10);
            }
        }
    }
}
