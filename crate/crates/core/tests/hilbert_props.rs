use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rydgate::hilbert::*;
use rydgate::linalg::ComplexMatrix;

fn mat(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
        .prop_map(move |v| ComplexMatrix::from_row_major(n, n, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap())
}

fn local(atom: usize, m: ComplexMatrix) -> LocalOperator {
    LocalOperator::new(atom, m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn embed_distributes_over_local_products(a in mat(3), b in mat(3), c in mat(4), d in mat(4), atom in 0usize..2) {
        let l = SystemLayout::toffoli();
        let lhs = embed(&l, &[local(atom, a.matmul(&b).unwrap())]).unwrap();
        let rhs = embed(&l, &[local(atom, a)]).unwrap().matmul(&embed(&l, &[local(atom, b)]).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        let lhs = embed(&l, &[local(2, c.matmul(&d).unwrap())]).unwrap();
        let rhs = embed(&l, &[local(2, c)]).unwrap().matmul(&embed(&l, &[local(2, d)]).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn operators_on_different_atoms_commute(a in mat(3), c in mat(4)) {
        let l = SystemLayout::toffoli();
        let x = embed(&l, &[local(0, a)]).unwrap();
        let y = embed(&l, &[local(2, c)]).unwrap();
        prop_assert!(x.commutator(&y).unwrap().max_abs() < 1e-12);
    }
}

#[test]
fn projector_commutes_with_embedded_paulis() {
    for n in [2, 3] {
        let l = SystemLayout::with_controls(n).unwrap();
        let p = computational_projector(&l);
        for o in embedded_pauli_basis(&l) {
            assert_eq!(p.commutator(&o).unwrap().max_abs(), 0.0);
        }
    }
}

#[test]
fn pauli_basis_order_is_stable() {
    let a: Vec<String> = (0..64).map(|j| pauli_label(3, j)).collect();
    let b: Vec<String> = (0..64).map(|j| pauli_label(3, j)).collect();
    assert_eq!(a, b);
    assert_eq!(a[0], "III");
    assert_eq!(a[1], "IIX");
    assert_eq!(a[63], "ZZZ");
    let basis = qubit_pauli_basis(3);
    assert_eq!(serde_json::to_string(&basis).unwrap(), serde_json::to_string(&qubit_pauli_basis(3)).unwrap());
}
