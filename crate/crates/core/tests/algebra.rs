use ldg_core::tensor::{
    eigen_sym3, minimal_rotation, potential_w, project_sigma, Linear, Rotation3, SymTensor3,
};
use proptest::prelude::*;

fn diag(l: [f64; 3]) -> SymTensor3 {
    SymTensor3::from_array([l[0], 0.0, 0.0, l[1], 0.0, l[2]])
}

prop_compose! {
    fn unit_trace()(a in -1.0..2.0f64, b in -1.0..2.0f64,
                    al in 0.0..6.3f64, be in 0.0..3.2f64, ga in 0.0..6.3f64) -> SymTensor3 {
        let r = Rotation3::from_euler_zyz(al, be, ga);
        diag([a, b, 1.0 - a - b]).conjugate(r.matrix())
    }
}

prop_compose! {
    fn unit_vector()(z in -1.0..1.0f64, phi in 0.0..6.3f64) -> [f64; 3] {
        let s = (1.0 - z * z).sqrt();
        [s * phi.cos(), s * phi.sin(), z]
    }
}

proptest! {
    #[test]
    fn projection_lands_in_hull(u in unit_trace()) {
        let p = project_sigma(&u);
        prop_assert!((p.trace() - 1.0).abs() < 1e-12);
        let e = eigen_sym3(&p);
        prop_assert!(e.values.iter().all(|l| *l >= -1e-12));
        prop_assert!(potential_w(&p) <= potential_w(&u) + 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive(u in unit_trace(), w in unit_trace()) {
        let (pu, pw) = (project_sigma(&u), project_sigma(&w));
        prop_assert!((project_sigma(&pu) - pu).max_abs() < 1e-12);
        prop_assert!((pu - pw).norm() <= (u - w).norm() + 1e-12);
    }

    #[test]
    fn eigen_decomposition_reconstructs(u in unit_trace()) {
        prop_assert!((eigen_sym3(&u).reconstruct() - u).max_abs() < 1e-12);
    }

    #[test]
    fn minimal_rotation_carries_a_to_b(n in unit_vector(), m in unit_vector()) {
        let dot: f64 = (0..3).map(|i| n[i] * m[i]).sum();
        prop_assume!(dot.abs() > 0.05);
        let m = if dot < 0.0 { m.map(|x| -x) } else { m };
        let (a, b) = (SymTensor3::outer(n), SymTensor3::outer(m));
        let r = minimal_rotation(&a, &b).unwrap();
        prop_assert!(r.orthogonality_defect() < 1e-12);
        prop_assert!((a.conjugate(r.matrix()) - b).max_abs() < 1e-10);
    }
}
