//! Measuring a two-outcome Hermitian observable and its involutory part are
//! the same operation.

mod common;

#[test]
fn thousand_random_hermitians() {
    common::involutory_suite(1000).unwrap();
}
