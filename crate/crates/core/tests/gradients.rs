//! Reverse-mode gradients against central finite differences.

mod common;

use common::suites::gradient_table;

#[test]
fn every_op_and_composite_path_matches_finite_differences() {
    let table = gradient_table(20_240);
    assert!(table.len() >= 25, "{} paths", table.len());
    for (name, worst, tol) in &table {
        assert!(worst <= tol, "{name}: relative error {worst:e} > {tol:e}");
    }
}

#[test]
fn gradients_accumulate_across_backward_calls() {
    use d2ue::tensor::{Tape, Tensor};
    let tape = Tape::new();
    let x = tape.var(Tensor::new(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap());
    let y = x.mul(x).unwrap().sum();
    tape.backward(y).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(x.grad().unwrap().data(), &[4.0, -8.0, 2.0]);
    tape.zero_grad();
    tape.backward(y).unwrap();
    assert_eq!(x.grad().unwrap().data(), &[2.0, -4.0, 1.0]);
}

#[test]
fn input_gradient_sign_predicts_first_order_change() {
    use d2ue::data::generate_normal;
    use d2ue::dsu::input_gradient;
    use d2ue::model::{reconstruction_error, AutoencoderConfig, Learner};
    use d2ue::tensor::Tensor;

    let mut learner = Learner::init(AutoencoderConfig {
        input_dim: 64,
        hidden_dims: vec![16],
        bottleneck_dim: 4,
        init_seed: 9,
        ..AutoencoderConfig::default()
    })
    .unwrap();
    learner.freeze();
    let img = generate_normal(1, 1, 8, 8).unwrap().remove(0);
    let grad = input_gradient(&learner, &img).unwrap();
    let loss = |px: &[f64]| {
        let x = Tensor::new(&[1, 64], px.to_vec()).unwrap();
        reconstruction_error(&learner.reconstruct(&x).unwrap(), &x).unwrap()
    };
    let base = loss(&img.pixels);
    for p in 0..64 {
        let g = grad.data()[p];
        if g.abs() < 1e-9 {
            continue;
        }
        let mut moved = img.pixels.clone();
        moved[p] += 1e-5 * g.signum();
        assert!(loss(&moved) > base, "pixel {p}");
    }
}
