//! State families and analytic entanglement / CHSH criteria.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qops::{
    basis, c, hermitian_eigenvalues, identity, paulis, projector, tensor, tensor_vec, trace_product, ComplexMatrix,
    DensityOperator,
};
use crate::scalar::Real;

fn check_unit<T: Real>(name: &str, v: T) -> Result<()> {
    if !(v >= T::zero() && v <= T::one()) {
        return Err(Error::Parameter(format!("{name} = {} outside [0, 1]", v.as_f64())));
    }
    Ok(())
}

fn ket2<T: Real>(da: usize, db: usize, i: usize, j: usize) -> DVector<nalgebra::Complex<T>> {
    tensor_vec(&basis(da, i), &basis(db, j))
}

/// `|ψ⁻⟩ = (|01⟩ − |10⟩)/√2` in `C² ⊗ C^db`.
fn singlet<T: Real>(db: usize) -> DVector<nalgebra::Complex<T>> {
    (ket2::<T>(2, db, 0, 1) - ket2::<T>(2, db, 1, 0)).unscale(T::lit(2.0).sqrt())
}

/// `α |ψ⟩⟨ψ| + (1 − α) 1/(da·db)`.
fn noisy_pure<T: Real>(alpha: T, psi: &DVector<nalgebra::Complex<T>>, da: usize, db: usize) -> Result<DensityOperator<T>> {
    check_unit("alpha", alpha)?;
    let n = da * db;
    let noise = identity::<T>(n).unscale(T::from_usize(n).expect("dimension"));
    DensityOperator::new(projector(psi).scale(alpha) + noise.scale(T::one() - alpha), da, db)
}

/// `ρ_W(α) = α |ψ⁻⟩⟨ψ⁻| + (1 − α) 1/4`.
pub fn werner<T: Real>(alpha: T) -> Result<DensityOperator<T>> {
    noisy_pure(alpha, &singlet(2), 2, 2)
}

/// `α |ψ_θ⟩⟨ψ_θ| + (1 − α) 1/4` with `|ψ_θ⟩ = cos θ |00⟩ + sin θ |11⟩`.
pub fn rho_alpha_theta<T: Real>(alpha: T, theta: T) -> Result<DensityOperator<T>> {
    if !theta.is_finite() {
        return Err(Error::NonFinite);
    }
    let psi = ket2::<T>(2, 2, 0, 0) * c(theta.cos(), T::zero()) + ket2::<T>(2, 2, 1, 1) * c(theta.sin(), T::zero());
    noisy_pure(alpha, &psi, 2, 2)
}

/// `α |ψ⁻⟩⟨ψ⁻| + (1 − α) 1₂/2 ⊗ 1_d/d`, Bob's qubit in the first two levels.
pub fn qubit_qudit<T: Real>(alpha: T, d: usize) -> Result<DensityOperator<T>> {
    if d < 2 {
        return Err(Error::Parameter("qudit dimension must be at least 2".into()));
    }
    noisy_pure(alpha, &singlet(d), 2, d)
}

/// The 2×4 bound entangled family `σ_b = 7b/(7b+1) σ_insep + 1/(7b+1) |φ_b⟩⟨φ_b|`.
///
/// `σ_insep = (2/7) Σ_{i<3} |ψ_i⟩⟨ψ_i| + (1/7) |0,3⟩⟨0,3|` with
/// `|ψ_i⟩ = (|0,i⟩ + |1,i+1⟩)/√2` and `|φ_b⟩ = |1⟩ ⊗ (√((1+b)/2)|0⟩ + √((1−b)/2)|3⟩)`.
pub fn horodecki_bound_entangled<T: Real>(b: T) -> Result<DensityOperator<T>> {
    check_unit("b", b)?;
    let s2 = T::lit(2.0).sqrt();
    let mut insep = ComplexMatrix::<T>::zeros(8, 8);
    for i in 0..3 {
        let psi = (ket2::<T>(2, 4, 0, i) + ket2::<T>(2, 4, 1, i + 1)).unscale(s2);
        insep += projector(&psi).scale(T::lit(2.0 / 7.0));
    }
    insep += projector(&ket2::<T>(2, 4, 0, 3)).scale(T::lit(1.0 / 7.0));
    let half = T::lit(0.5);
    let local = basis::<T>(4, 0) * c(((T::one() + b) * half).sqrt(), T::zero())
        + basis::<T>(4, 3) * c(((T::one() - b) * half).sqrt(), T::zero());
    let phi = tensor_vec(&basis(2, 1), &local);
    let seven_b = T::lit(7.0) * b;
    let norm = seven_b + T::one();
    DensityOperator::new(insep.scale(seven_b / norm) + projector(&phi).scale(T::one() / norm), 2, 4)
}

/// Rank-three two-qubit state `Σ_k p_k |ψ_k⟩⟨ψ_k|` with `p = (0.4, 0.05, 0.55)`,
/// `|ψ₁⟩ = cos θ|00⟩ + sin θ|11⟩`, `|ψ₂⟩ = sin θ|00⟩ − cos θ|11⟩`, `|ψ₃⟩ = |10⟩`
/// and `θ = 10⁻⁴ π`.
pub fn non_full_rank_example<T: Real>() -> Result<DensityOperator<T>> {
    let theta = T::lit(1e-4 * std::f64::consts::PI);
    let (s, co) = (theta.sin(), theta.cos());
    let k00 = ket2::<T>(2, 2, 0, 0);
    let k11 = ket2::<T>(2, 2, 1, 1);
    let psi1 = &k00 * c(co, T::zero()) + &k11 * c(s, T::zero());
    let psi2 = &k00 * c(s, T::zero()) - &k11 * c(co, T::zero());
    let psi3 = ket2::<T>(2, 2, 1, 0);
    let m = projector(&psi1).scale(T::lit(0.4)) + projector(&psi2).scale(T::lit(0.05)) + projector(&psi3).scale(T::lit(0.55));
    DensityOperator::new(m, 2, 2)
}

/// `M(ρ)`: sum of the two largest eigenvalues of `TᵀT`, `T_ij = Tr[ρ σ_i ⊗ σ_j]`.
/// The state violates CHSH iff `M(ρ) > 1`.
pub fn horodecki_chsh_parameter<T: Real>(rho: &DensityOperator<T>) -> Result<T> {
    if rho.dim_a() != 2 || rho.dim_b() != 2 {
        return Err(Error::Dimension("the Horodecki criterion needs a two-qubit state".into()));
    }
    let s = paulis::<T>();
    let t = nalgebra::DMatrix::<T>::from_fn(3, 3, |i, j| trace_product(rho.matrix(), &tensor(&s[i], &s[j])).re);
    let ttt = t.transpose() * &t;
    let mut ev: Vec<T> = nalgebra::SymmetricEigen::new(ttt).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    Ok(ev[0] + ev[1])
}

/// White-noise state families `α |ψ⟩⟨ψ| + (1 − α) 1/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum StateFamily {
    Werner,
    RhoAlphaTheta { theta: f64 },
    QubitQudit { d: usize },
}

impl StateFamily {
    pub fn state<T: Real>(&self, alpha: T) -> Result<DensityOperator<T>> {
        match *self {
            StateFamily::Werner => werner(alpha),
            StateFamily::RhoAlphaTheta { theta } => rho_alpha_theta(alpha, T::lit(theta)),
            StateFamily::QubitQudit { d } => qubit_qudit(alpha, d),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StateFamily::Werner => "werner",
            StateFamily::RhoAlphaTheta { .. } => "rho-alpha-theta",
            StateFamily::QubitQudit { .. } => "qubit-qudit",
        }
    }

    /// Family parameter other than `α`, when there is one.
    pub fn theta(&self) -> Option<f64> {
        match self {
            StateFamily::RhoAlphaTheta { theta } => Some(*theta),
            _ => None,
        }
    }

    /// Printable form of `ρ(α)`.
    pub fn label(&self, alpha: f64) -> String {
        match self {
            StateFamily::Werner => format!("ρ_W({})", fmt_short(alpha)),
            StateFamily::RhoAlphaTheta { theta } => format!("ρ({}, θ={})", fmt_short(alpha), fmt_short(*theta)),
            StateFamily::QubitQudit { d } => format!("ρ({}, d={d})", fmt_short(alpha)),
        }
    }

    /// Closed-form PPT entanglement threshold.
    pub fn entanglement_threshold(&self) -> Option<f64> {
        match *self {
            StateFamily::Werner => Some(1.0 / 3.0),
            StateFamily::RhoAlphaTheta { theta } => {
                let s = (2.0 * theta).sin().abs();
                (s > 0.0).then(|| 1.0 / (1.0 + 2.0 * s))
            }
            StateFamily::QubitQudit { d } => Some(1.0 / (1.0 + d as f64)),
        }
    }
}

pub(crate) fn fmt_short(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.into()
    }
}

/// Smallest `α` whose partial transpose has a negative eigenvalue, by bisection
/// to `tol`. `None` if the family stays PPT on `[0, 1]`.
pub fn ppt_entanglement_threshold(family: &StateFamily, tol: f64) -> Result<Option<f64>> {
    let f = |a: f64| -> Result<f64> { Ok(family.state::<f64>(a)?.ppt_min_eigenvalue()) };
    if f(1.0)? >= -1e-12 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyInfo {
    pub name: &'static str,
    pub parameters: Vec<&'static str>,
    pub description: &'static str,
}

pub fn registry() -> Vec<FamilyInfo> {
    vec![
        FamilyInfo { name: "werner", parameters: vec!["alpha"], description: "α|ψ⁻⟩⟨ψ⁻| + (1−α)1/4" },
        FamilyInfo {
            name: "rho-alpha-theta",
            parameters: vec!["alpha", "theta"],
            description: "α|ψ_θ⟩⟨ψ_θ| + (1−α)1/4, |ψ_θ⟩ = cosθ|00⟩ + sinθ|11⟩",
        },
        FamilyInfo { name: "qubit-qudit", parameters: vec!["alpha", "d"], description: "α|ψ⁻⟩⟨ψ⁻| + (1−α)1₂/2 ⊗ 1_d/d" },
        FamilyInfo { name: "horodecki-bound-entangled", parameters: vec!["b"], description: "2×4 bound entangled σ_b" },
        FamilyInfo { name: "non-full-rank", parameters: vec![], description: "rank-3 entangled two-qubit state" },
    ]
}

/// White-noise family by registry name.
pub fn family_by_name(name: &str, params: &BTreeMap<String, f64>) -> Result<StateFamily> {
    let get = |k: &str| params.get(k).copied().ok_or_else(|| Error::Parameter(format!("family {name} needs --{k}")));
    match name {
        "werner" => Ok(StateFamily::Werner),
        "rho-alpha-theta" => Ok(StateFamily::RhoAlphaTheta { theta: get("theta")? }),
        "qubit-qudit" => {
            let d = get("d")?;
            if d.fract() != 0.0 || d < 2.0 {
                return Err(Error::Parameter("d must be an integer ≥ 2".into()));
            }
            Ok(StateFamily::QubitQudit { d: d as usize })
        }
        other => Err(Error::Parameter(format!("{other} is not a white-noise family"))),
    }
}

/// Any registered state by name, with its printable label.
pub fn named_state(name: &str, params: &BTreeMap<String, f64>) -> Result<(DensityOperator<f64>, String)> {
    match name {
        "horodecki-bound-entangled" => {
            let b = params.get("b").copied().ok_or_else(|| Error::Parameter("family needs --b".into()))?;
            Ok((horodecki_bound_entangled(b)?, format!("σ_b(b={})", fmt_short(b))))
        }
        "non-full-rank" => Ok((non_full_rank_example()?, "ρ_nfr".into())),
        _ => {
            let fam = family_by_name(name, params)?;
            let alpha = params.get("alpha").copied().ok_or_else(|| Error::Parameter(format!("family {name} needs --alpha")))?;
            Ok((fam.state(alpha)?, fam.label(alpha)))
        }
    }
}

/// Spectrum helper for tests and reports.
pub fn spectrum<T: Real>(rho: &DensityOperator<T>) -> Result<Vec<T>> {
    hermitian_eigenvalues(rho.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::{max_abs, partial_trace, Subsystem};
    use std::f64::consts::PI;

    #[test]
    fn werner_endpoints() {
        let w0 = werner(0.0f64).unwrap();
        assert!(max_abs(&(w0.matrix() - identity::<f64>(4).scale(0.25))) < 1e-15);
        let w1 = werner(1.0f64).unwrap();
        assert!(max_abs(&(w1.matrix() - projector(&singlet::<f64>(2)))) < 1e-15);
        assert!(werner(1.1f64).is_err());
        let w = werner(0.7f64).unwrap();
        for keep in [Subsystem::A, Subsystem::B] {
            assert!(max_abs(&(w.reduced(keep) - identity::<f64>(2).scale(0.5))) < 1e-15);
        }
    }

    #[test]
    fn alpha_theta_family() {
        let a = rho_alpha_theta(0.6f64, PI / 4.0).unwrap();
        let w = werner(0.6f64).unwrap();
        let (sa, sw) = (spectrum(&a).unwrap(), spectrum(&w).unwrap());
        for (x, y) in sa.iter().zip(&sw) {
            assert!((x - y).abs() < 1e-12);
        }
        for alpha in [0.2, 0.9, 1.0] {
            let s = rho_alpha_theta(alpha, 0.0f64).unwrap();
            assert!(s.ppt_min_eigenvalue() >= -1e-12);
            let off = s.matrix().iter().enumerate().filter(|(k, _)| k % 5 != 0).map(|(_, z)| z.norm()).fold(0.0, f64::max);
            assert!(off < 1e-15);
        }
    }

    #[test]
    fn qubit_qudit_reduces_to_werner() {
        let a = qubit_qudit(0.45f64, 2).unwrap();
        assert_eq!(a.matrix(), werner(0.45f64).unwrap().matrix());
        let b = qubit_qudit(0.45f64, 4).unwrap();
        assert_eq!((b.dim_a(), b.dim_b()), (2, 4));
        let rb = partial_trace(b.matrix(), 2, 4, Subsystem::A).unwrap();
        assert!((rb[(3, 3)].re - 0.55 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn bound_entangled_is_ppt() {
        for b in [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0f64] {
            let s = horodecki_bound_entangled(b).unwrap();
            assert!(s.ppt_min_eigenvalue() > -1e-12, "b = {b}");
            assert!((crate::qops::trace(s.matrix()).re - 1.0).abs() < 1e-14);
        }
        let s = horodecki_bound_entangled(0.5f64).unwrap();
        assert_eq!((s.dim_a(), s.dim_b()), (2, 4));
    }

    #[test]
    fn bound_entangled_rank() {
        let s = horodecki_bound_entangled(0.5f64).unwrap();
        assert_eq!(s.rank(1e-10), 5);
    }

    #[test]
    fn non_full_rank_state() {
        let r = non_full_rank_example::<f64>().unwrap();
        assert_eq!(r.rank(1e-10), 3);
        assert!(r.ppt_min_eigenvalue() < -1e-9);
    }

    #[test]
    fn chsh_parameter() {
        for alpha in [0.0, 0.3, 0.71, 1.0f64] {
            let m = horodecki_chsh_parameter(&werner(alpha).unwrap()).unwrap();
            assert!((m - 2.0 * alpha * alpha).abs() < 1e-12);
        }
        assert!(horodecki_chsh_parameter(&werner(0.70f64).unwrap()).unwrap() < 1.0);
        assert!(horodecki_chsh_parameter(&werner(0.71f64).unwrap()).unwrap() > 1.0);
        assert!(horodecki_chsh_parameter(&qubit_qudit(0.5f64, 3).unwrap()).is_err());
    }

    #[test]
    fn ppt_thresholds() {
        let w = ppt_entanglement_threshold(&StateFamily::Werner, 1e-9).unwrap().unwrap();
        assert!((w - 1.0 / 3.0).abs() < 1e-6);
        let fam = StateFamily::RhoAlphaTheta { theta: PI / 8.0 };
        let t = ppt_entanglement_threshold(&fam, 1e-9).unwrap().unwrap();
        assert!((t - 1.0 / (1.0 + 2.0 * (PI / 4.0).sin())).abs() < 1e-6);
        for d in 2..=5 {
            let fam = StateFamily::QubitQudit { d };
            let t = ppt_entanglement_threshold(&fam, 1e-9).unwrap().unwrap();
            assert!((t - fam.entanglement_threshold().unwrap()).abs() < 1e-6);
        }
        assert_eq!(ppt_entanglement_threshold(&StateFamily::RhoAlphaTheta { theta: 0.0 }, 1e-9).unwrap(), None);
    }

    #[test]
    fn sweep_of_constructors() {
        for k in 0..20 {
            let a = k as f64 / 19.0;
            werner(a).unwrap();
            rho_alpha_theta(a, a * PI).unwrap();
            qubit_qudit(a, 2 + k % 4).unwrap();
            horodecki_bound_entangled(a).unwrap();
        }
    }

    #[test]
    fn registry_lookup() {
        let mut p = BTreeMap::new();
        p.insert("alpha".to_string(), 0.4);
        let (w, label) = named_state("werner", &p).unwrap();
        assert_eq!(label, "ρ_W(0.4)");
        assert_eq!(w.dim(), 4);
        assert!(named_state("qubit-qudit", &p).is_err());
        p.insert("d".to_string(), 3.0);
        assert_eq!(named_state("qubit-qudit", &p).unwrap().0.dim_b(), 3);
        assert!(named_state("nope", &p).is_err());
        assert_eq!(registry().len(), 5);
    }
}
