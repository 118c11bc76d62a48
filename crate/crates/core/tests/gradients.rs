use dlstm_core::lstm::{backward_bptt, empirical_loss, predict, Dims, Gate, LstmParams, SequenceSample};
use dlstm_core::numerics::{finite_difference_gradient, max_relative_error, FlatVector, FD_EPS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, d: usize, e: usize, t: usize, n: usize) -> Vec<SequenceSample> {
    (0..n)
        .map(|_| SequenceSample {
            steps: (0..t).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            readout_context: (0..e).map(|_| rng.random_range(0.0..1.0)).collect(),
            target: rng.random_range(-1.0..1.0),
        })
        .collect()
}

fn fd_check(dims: Dims, batch: &[SequenceSample], seed: u64) -> f64 {
    let params = LstmParams::init(dims, seed);
    let analytic = backward_bptt(&params, batch).unwrap();
    let numeric = finite_difference_gradient(
        |theta: &FlatVector| empirical_loss(&LstmParams::unpack(dims, theta).unwrap(), batch).unwrap(),
        &params.pack(),
        FD_EPS,
    )
    .unwrap();
    max_relative_error(&analytic, &numeric)
}

#[test]
fn bptt_matches_central_differences_small_net() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let dims = Dims::new(3, 4, 2);
    let batch = random_batch(&mut rng, 3, 2, 5, 2);
    let err = fd_check(dims, &batch, 17);
    assert!(err <= 1e-4, "max relative error {err}");
}

#[test]
fn bptt_matches_central_differences_across_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let d = rng.random_range(1..=4);
        let h = rng.random_range(1..=6);
        let t = rng.random_range(1..=8);
        let e = rng.random_range(0..=2);
        let n = rng.random_range(1..=4);
        let batch = random_batch(&mut rng, d, e, t, n);
        let err = fd_check(Dims::new(d, h, e), &batch, 1000 + case);
        assert!(err <= 1e-4, "case {case} (D={d} H={h} T={t} E={e} B={n}): {err}");
        worst = worst.max(err);
    }
    eprintln!("worst relative error over 20 shapes: {worst:.3e}");
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar recomputation for H = D = 1 with the gate weights read out by name.
fn scalar_predict(p: &LstmParams, xs: &[f64]) -> f64 {
    let w = |g: Gate| {
        let gp = p.gate(g);
        (gp.weights.get(0, 0), gp.weights.get(0, 1), gp.bias[0])
    };
    let (fh, fx, fb) = w(Gate::Forget);
    let (jh, jx, jb) = w(Gate::Input);
    let (ch, cx, cb) = w(Gate::Candidate);
    let (oh, ox, ob) = w(Gate::Output);
    let (mut h, mut c) = (0.0f64, 0.0f64);
    for &x in xs {
        let f = sigmoid(fh * h + fx * x + fb);
        let j = sigmoid(jh * h + jx * x + jb);
        let cand = (ch * h + cx * x + cb).tanh();
        let o = sigmoid(oh * h + ox * x + ob);
        c = f * c + j * cand;
        h = o * c.tanh();
    }
    p.readout_weights[0] * h + p.readout_bias
}

#[test]
fn predict_matches_scalar_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..10 {
        let dims = Dims::new(1, 1, 0);
        let flat: Vec<f64> = (0..dims.flat_len()).map(|_| rng.random_range(-0.8..0.8)).collect();
        let p = LstmParams::unpack(dims, &flat).unwrap();
        let xs = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let s = SequenceSample { steps: xs.iter().map(|&x| vec![x]).collect(), readout_context: vec![], target: 0.0 };
        let got = predict(&p, &s).unwrap();
        let want = scalar_predict(&p, &xs);
        assert!((got - want).abs() <= 1e-12, "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn predict_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = random_batch(&mut rng, 3, 2, 9, 3);
    let p = LstmParams::init(Dims::new(3, 16, 2), 7);
    for s in &batch {
        assert_eq!(predict(&p, s).unwrap().to_bits(), predict(&p, s).unwrap().to_bits());
    }
}
