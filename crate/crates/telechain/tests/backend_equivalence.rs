//! Statevector and tableau engines must agree branch by branch on random
//! Clifford programs.

mod common;

#[test]
fn hundred_random_clifford_programs() {
    let branches = common::clifford_equivalence(100).unwrap();
    assert!(branches > 100);
}
