mod support;

use gwhp_core::nn::{ModelConfig, UNet};
use support::{gradient_check, pseudo_random, tiny_net};

fn assert_gradients(skip: bool) {
    let g = gradient_check(skip);
    assert!(
        g.significant > g.params / 2,
        "gradient mostly vanishing: {} of {}",
        g.significant,
        g.params
    );
    assert!(
        g.checked > 9 * g.params / 10,
        "only {} of {} checked",
        g.checked,
        g.params
    );
    assert!(
        g.worst_relative <= 1e-3,
        "worst relative error {:e}",
        g.worst_relative
    );
}

#[test]
fn gradients_match_finite_differences() {
    assert_gradients(true);
}

#[test]
fn gradients_match_finite_differences_without_skips() {
    assert_gradients(false);
}

#[test]
fn zero_head_gives_zero_output() {
    let net = tiny_net(true);
    let mut p: Vec<f32> = net.init_params(1);
    for name in ["dec1.weight", "dec1.bias"] {
        let t = net.layout.get(name).unwrap();
        p[t.offset..t.offset + t.len()].fill(0.0);
    }
    let x: Vec<f32> = pseudo_random(2 * 64, 2)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    assert!(net.forward(&p, &x, 1).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn default_parameter_count_near_budget() {
    let n = UNet::new(ModelConfig::default()).unwrap().param_count() as f64;
    assert!((n - 480_000.0).abs() <= 0.1 * 480_000.0);
}
