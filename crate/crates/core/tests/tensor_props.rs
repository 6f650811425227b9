use bundlelab::rng::SplitMix64;
use bundlelab::tensor_net::*;
use proptest::prelude::*;

mod common;
use common::{layer_stacks, losses, network, random};

#[test]
fn gradients_match_finite_differences_everywhere() {
    for (layer, stack) in layer_stacks() {
        for seed in 0..10 {
            let net = network(stack.clone(), seed);
            let x = random(6, 4, seed + 100);
            for (name, loss) in losses(seed) {
                let err = grad_check(&net, &x, &loss, 1e-5).unwrap();
                assert!(err < 1e-4, "{layer} x {name} seed {seed}: {err}");
            }
        }
    }
}

#[test]
fn softmax_rows_are_distributions() {
    // identical experts: the mixture equals one expert iff gate rows sum to 1
    let spec = LayerSpec::SoftmaxGateMixture {
        input: 3,
        output: 4,
        experts: 4,
        hidden: vec![],
    };
    let init = Network::new(vec![spec.clone()], 5).unwrap();
    let mut group = init.params()[0].clone();
    group[1] = random(1, 4, 6);
    for e in 1..4 {
        group[2 + 2 * e] = group[2].clone();
        group[3 + 2 * e] = group[3].clone();
    }
    let expert = Network::from_params(
        vec![LayerSpec::Dense { input: 3, output: 4 }, LayerSpec::Relu { width: 4 }],
        vec![vec![group[2].clone(), group[3].clone()], vec![]],
        0,
    )
    .unwrap();
    let mixed = Network::from_params(vec![spec], vec![group], 0).unwrap();
    let x = random(8, 3, 1);
    let (a, b) = (mixed.infer(&x).unwrap(), expert.infer(&x).unwrap());
    for (u, v) in a.values().iter().zip(b.values()) {
        assert!((u - v).abs() < 1e-9 * v.abs().max(1.0));
    }

    // classification gradient rows are (p - onehot) / B: p sums to one
    let logits = random(5, 4, 3);
    let (_, g) = classification_grad(&logits, &[0, 1, 2, 3, 0]).unwrap();
    for r in 0..g.rows() {
        assert!(g.row(r).iter().sum::<f64>().abs() < 1e-9);
        let p_true = g.row(r)[[0, 1, 2, 3, 0][r]] * 5.0 + 1.0;
        assert!(p_true > 0.0 && g.row(r).iter().all(|&v| v * 5.0 > -1.0));
    }
}

#[test]
fn training_is_bit_deterministic() {
    let run = || {
        let mut net = Network::new(layer_stacks()[2].1.clone(), 42).unwrap();
        let x = random(6, 4, 8);
        let loss = LossKind::Classification {
            labels: vec![0, 1, 2, 0, 1, 2],
        };
        let mut trace = Vec::new();
        for _ in 0..25 {
            let (out, tape) = forward(&net, &x).unwrap();
            let (v, d) = loss.evaluate(&out).unwrap();
            net = sgd_step(&net, &backward(&tape, &d).unwrap(), 0.3).unwrap();
            trace.push(v.to_bits());
        }
        (network_to_bytes(&net), trace)
    };
    assert_eq!(run(), run());
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    bundlelab::rng::shuffle(&mut p, &mut SplitMix64::new(seed));
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn outputs_permute_with_rows(seed in 0u64..1000) {
        let net = Network::new(layer_stacks()[2].1.clone(), seed).unwrap();
        let x = random(7, 4, seed + 1);
        let perm = permutation(7, seed);
        let out = net.infer(&x).unwrap();
        let out_p = net.infer(&x.select_rows(&perm)).unwrap();
        prop_assert_eq!(out_p, out.select_rows(&perm));
    }

    #[test]
    fn scalar_losses_ignore_row_order(seed in 0u64..1000) {
        let a = random(6, 3, seed);
        let p = random(6, 3, seed + 1);
        let labels: Vec<usize> = (0..6).map(|i| (i * 5 + seed as usize) % 3).collect();
        let table = random(3, 3, seed + 2);
        let perm = permutation(6, seed + 3);
        let pl: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let (ap, pp) = (a.select_rows(&perm), p.select_rows(&perm));

        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(1.0);
        prop_assert!(close(loss_reconstruction(&a, &p).unwrap(), loss_reconstruction(&ap, &pp).unwrap()));
        prop_assert!(close(loss_contrastive(&a, &p, 0.2).unwrap(), loss_contrastive(&ap, &pp, 0.2).unwrap()));
        prop_assert!(close(loss_classification(&a, &labels).unwrap(), loss_classification(&ap, &pl).unwrap()));
        prop_assert!(close(
            loss_alignment(&a, &table, &labels, 0.2).unwrap(),
            loss_alignment(&ap, &table, &pl, 0.2).unwrap()
        ));
    }

    #[test]
    fn losses_vanish_only_at_optimum(seed in 0u64..1000) {
        let a = random(4, 3, seed);
        prop_assert_eq!(loss_reconstruction(&a, &a).unwrap(), 0.0);
        let b = random(4, 3, seed + 1);
        prop_assert!(loss_reconstruction(&a, &b).unwrap() > 0.0);
        prop_assert!(loss_classification(&a, &[0, 1, 2, 0]).unwrap() > 0.0);
    }
}
