use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdt_core::data::{gen_synthetic, SynthConfig};
use sdt_core::distill::{total_loss, DistillConfig};
use sdt_core::model::{Mode, ModelConfig, Network};
use sdt_core::neuron::{lif_backward, mlif_forward, LifParams};
use sdt_core::numerics::gradcheck::{check_op, GradCheck};
use sdt_core::numerics::{BnMode, Graph, SiL2Options, Tensor};
use sdt_core::train::make_batch;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn assert_ok(name: &str, c: GradCheck) {
    assert!(c.coords > 0, "{name}: nothing compared");
    assert!(c.fraction_within() >= 0.95 && c.worst <= 1e-3, "{name}: {c:?}");
}

#[test]
fn sum_and_square_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap(), true);
    let s = g.sum(x).unwrap();
    assert_eq!(g.backward(s).unwrap().get(x).unwrap().data(), &[1.0, 1.0]);
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap(), true);
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    assert_eq!(g.backward(s).unwrap().get(x).unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn conv_bn_sigmoid_composite() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ins = [
        rand_t(&mut rng, &[2, 3, 5, 5], -1.0, 1.0),
        rand_t(&mut rng, &[4, 3, 3, 3], -0.5, 0.5),
        rand_t(&mut rng, &[4], -0.2, 0.2),
        rand_t(&mut rng, &[4], 0.5, 1.5),
        rand_t(&mut rng, &[4], -0.5, 0.5),
    ];
    let c = check_op(&ins, H, TOL, |g, v| {
        let y = g.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
        let y = g.batch_norm(y, v[3], v[4], BnMode::Batch)?;
        let y = g.sigmoid(y)?;
        g.sum(y)
    })
    .unwrap();
    assert_ok("conv-bn-sigmoid", c);
}

#[test]
fn each_differentiable_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = rand_t(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
    let b = rand_t(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
    let checks: Vec<(&str, GradCheck)> = vec![
        ("conv stride 2", check_op(&[a.clone(), rand_t(&mut rng, &[2, 3, 3, 3], -1.0, 1.0)], H, TOL, |g, v| g.conv2d(v[0], v[1], None, 2, 1)).unwrap()),
        ("batchnorm", check_op(&[a.clone(), rand_t(&mut rng, &[3], 0.5, 2.0), rand_t(&mut rng, &[3], -1.0, 1.0)], H, TOL, |g, v| g.batch_norm(v[0], v[1], v[2], BnMode::Batch)).unwrap()),
        ("maxpool", check_op(std::slice::from_ref(&a), H, TOL, |g, v| g.max_pool2d(v[0], 2)).unwrap()),
        ("upsample x2", check_op(std::slice::from_ref(&a), H, TOL, |g, v| g.upsample_bilinear(v[0], 2)).unwrap()),
        ("upsample x8", check_op(&[rand_t(&mut rng, &[1, 2, 2, 3], -1.0, 1.0)], H, TOL, |g, v| g.upsample_bilinear(v[0], 8)).unwrap()),
        ("add", check_op(&[a.clone(), b.clone()], H, TOL, |g, v| g.add(v[0], v[1])).unwrap()),
        ("sub", check_op(&[a.clone(), b.clone()], H, TOL, |g, v| g.sub(v[0], v[1])).unwrap()),
        ("mul", check_op(&[a.clone(), b.clone()], H, TOL, |g, v| g.mul(v[0], v[1])).unwrap()),
        ("scale", check_op(std::slice::from_ref(&a), H, TOL, |g, v| g.scale(v[0], -0.7)).unwrap()),
        ("sigmoid", check_op(std::slice::from_ref(&a), H, TOL, |g, v| g.sigmoid(v[0])).unwrap()),
        ("mean", check_op(std::slice::from_ref(&a), H, TOL, |g, v| g.mean(v[0])).unwrap()),
        ("reshape", check_op(std::slice::from_ref(&a), H, TOL, |g, v| g.reshape(v[0], &[6, 16])).unwrap()),
        ("matmul", check_op(&[rand_t(&mut rng, &[3, 4], -1.0, 1.0), rand_t(&mut rng, &[4, 5], -1.0, 1.0)], H, TOL, |g, v| g.matmul(v[0], v[1])).unwrap()),
        ("attention", check_op(&[rand_t(&mut rng, &[2, 3, 2, 2], 0.0, 1.0), rand_t(&mut rng, &[2, 3, 2, 2], 0.0, 1.0), rand_t(&mut rng, &[2, 3, 2, 2], 0.0, 1.0)], H, TOL, |g, v| g.attention_product(v[0], v[1], v[2], 0.25)).unwrap()),
        ("rate mean", check_op(std::slice::from_ref(&a), H, TOL, |g, v| g.rate_encode(v[0], 2, false)).unwrap()),
        ("rate sum", check_op(std::slice::from_ref(&a), H, TOL, |g, v| g.rate_encode(v[0], 2, true)).unwrap()),
        ("mse", check_op(&[a.clone(), b.clone()], H, TOL, |g, v| g.mse(v[0], v[1])).unwrap()),
    ];
    for (name, c) in checks {
        assert_ok(name, c);
    }
    let gt = rand_t(&mut rng, &[2, 1, 4, 4], 0.1, 1.0);
    let mask: Vec<bool> = (0..32).map(|i| i % 7 != 3).collect();
    let pred = rand_t(&mut rng, &[2, 1, 4, 4], 0.1, 1.0);
    for opts in [
        SiL2Options::default(),
        SiL2Options { mean_weight: 0.5, ..Default::default() },
        SiL2Options { log_domain: true, ..Default::default() },
    ] {
        let c = check_op(std::slice::from_ref(&pred), H, TOL, |g, v| g.si_l2(v[0], &gt, &mask, opts)).unwrap();
        assert_ok("si_l2", c);
    }
}

/// Reference backward through a multistep LIF, one scalar neuron at a time.
fn lif_chain_oracle(x: &[f64], steps: usize, p: &LifParams, up: &[f64]) -> Vec<f64> {
    let n = x.len() / steps;
    let mut dx = vec![0.0; x.len()];
    for j in 0..n {
        let mut v = p.v_reset;
        let (mut hs, mut ss) = (vec![], vec![]);
        for t in 0..steps {
            let h = v + (x[t * n + j] - v) / p.tau;
            let s = if h >= p.v_threshold { 1.0 } else { 0.0 };
            v = if s == 1.0 { p.v_reset } else { h };
            hs.push(h);
            ss.push(s);
        }
        let mut dv = 0.0;
        for t in (0..steps).rev() {
            let sg = p.surrogate(hs[t] - p.v_threshold);
            let dh = up[t * n + j] * sg + dv * (1.0 - ss[t]);
            dx[t * n + j] = dh / p.tau;
            dv = dh * (1.0 - 1.0 / p.tau);
        }
    }
    dx
}

#[test]
fn mlif_backward_matches_chain_rule_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = LifParams::default();
    for steps in [1, 3, 5] {
        let x: Vec<f64> = (0..steps * 7).map(|_| rng.gen_range(-1.0..3.0)).collect();
        let up: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (s, h) = mlif_forward(&x, steps, &p).unwrap();
        let got = lif_backward(&h, &s, &up, steps, &p).unwrap();
        let want = lif_chain_oracle(&x, steps, &p, &up);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn total_loss_head_gradients_on_tiny_model() {
    let mut cfg = ModelConfig::desk(2, 16, 16, 8);
    cfg.embed_channels = [2, 4, 8];
    cfg.mlp_ratio = 2;
    let d = DistillConfig { teacher_dim: 4, matched_blocks: vec![2, 4], ..Default::default() };
    let mut net = Network::<f64>::with_adapters(&cfg, 3, &d.matched_blocks, d.teacher_dim).unwrap();
    assert!(net.param_count() <= 5000, "{}", net.param_count());
    let data = gen_synthetic(&SynthConfig { seed: 2, samples: 2, timesteps: 2, height: 16, width: 16, teacher_dim: 4, ..Default::default() }).unwrap();
    let refs: Vec<_> = data.iter().collect();
    let batch = make_batch::<f64>(&refs, true).unwrap();

    let loss = |net: &mut Network<f64>| -> (f64, Option<Vec<(sdt_core::model::ParamId, Tensor<f64>)>>) {
        let mut g = Graph::new();
        let x = g.constant(batch.spikes.clone());
        let out = net.forward(&mut g, x, Mode::Batch).unwrap();
        let parts = total_loss(&mut g, &out, &batch.gt, &batch.mask, batch.teacher.as_ref(), &d).unwrap();
        let v = g.value(parts.total).item();
        let mut grads = g.backward(parts.total).unwrap();
        (v, Some(out.bindings.iter().filter_map(|&(id, var)| grads.take(var).map(|t| (id, t))).collect()))
    };
    let (_, grads) = loss(&mut net);
    let grads = grads.unwrap();
    let mut check = GradCheck::default();
    for (id, analytic) in grads {
        let name = net.params().name(id).to_string();
        if !(name.starts_with("head.") || name.starts_with("kd.")) {
            continue;
        }
        for i in 0..analytic.len() {
            let x0 = net.params().get(id).data()[i];
            net.params_mut().get_mut(id).data_mut()[i] = x0 + H;
            let lp = loss(&mut net).0;
            net.params_mut().get_mut(id).data_mut()[i] = x0 - H;
            let lm = loss(&mut net).0;
            net.params_mut().get_mut(id).data_mut()[i] = x0;
            check.record(analytic.data()[i], (lp - lm) / (2.0 * H), TOL);
        }
    }
    assert!(check.coords > 100);
    assert_ok("total_loss", check);
}
