use nmk_core::train::{grad_check, grad_check_encoder_block, GradTarget};
use nmk_core::RngState;

#[test]
fn every_backward_pass_matches_finite_differences() {
    let mut state = RngState::new(2024);
    for target in GradTarget::ALL {
        let (r, s) = grad_check(target, 12, 1e-4, state).unwrap();
        state = s;
        println!("{target:?}: {} entries, max rel err {:.3e}", r.checked, r.max_rel_err);
        assert!(r.passed(), "{r:?}");
    }
}

#[test]
fn wide_encoder_block_sampled() {
    let r = grad_check_encoder_block(32, 2, 64, 5, 300, 1e-4, RngState::new(4)).unwrap();
    assert!(r.passed(), "{r:?}");
}
