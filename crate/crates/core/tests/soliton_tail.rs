use rarepath::model::builtin_model;
use rarepath::path::MamOptions;
use rarepath::sampling::{soliton_position_tail, SampleConfig};

// (A, Ω, Ξ) → (A, -Ω, -Ξ) leaves the law invariant, so the two tails match
#[test]
fn tail_is_monotone_and_symmetric() {
    let m = builtin_model("filter3d", &Default::default()).unwrap().into_diffusion().unwrap();
    let targets = [-5.0, -3.0, -1.0, 1.0, 3.0, 5.0];
    let tail = soliton_position_tail(&m, &targets, &SampleConfig::new(10.0, 1e-2, 2000, 12), &MamOptions { grid_n: 200, ..Default::default() }).unwrap();
    for w in tail[..3].windows(2) {
        assert!(w[0].p_hat < w[1].p_hat, "{tail:?}");
    }
    for w in tail[3..].windows(2) {
        assert!(w[0].p_hat > w[1].p_hat, "{tail:?}");
    }
    for k in 0..3 {
        let (a, b) = (&tail[k], &tail[5 - k]);
        assert!((a.action - b.action).abs() < 1e-8 * a.action, "bias paths mirror each other");
        let z = (a.p_hat - b.p_hat).abs() / (a.se * a.se + b.se * b.se).sqrt();
        assert!(z < 4.0, "ξ = ±{}: {} vs {} ({z:.2} SE)", b.xi_f, a.p_hat, b.p_hat);
    }
    // the tail decays like exp(-S/D) up to a slowly varying prefactor
    let lhs = (tail[4].p_hat / tail[5].p_hat).ln();
    let rhs = (tail[5].action - tail[4].action) / m.noise_intensity;
    assert!((lhs / rhs - 1.0).abs() < 0.3, "{lhs} vs {rhs}");
}
