use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use moment_closure::harness::{config_to_text, field, mse, parse_config, relative_l2, ExperimentConfig, TestId};
use moment_closure::kinetic::particles::advance;
use moment_closure::kinetic::{Integrator, ParticleEnsemble, Potential, ShapeKernel};
use moment_closure::nn::{backward, forward, init_xavier, input_jacobian, MlpParameters, MlpSpec};
use moment_closure::persist::{read_bundle, write_bundle, Bundle};

fn random_net(widths: Vec<usize>, seed: u64) -> MlpParameters {
    let spec = MlpSpec::new(widths, seed).unwrap();
    init_xavier(&spec)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn widths() -> impl Strategy<Value = Vec<usize>> {
    (1usize..5, prop::collection::vec(1usize..24, 0..5), 1usize..4).prop_map(|(i, h, o)| {
        let mut w = vec![i];
        w.extend(h);
        w.push(o);
        w
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parameter_gradient_matches_central_differences(w in widths(), seed in 0u64..1000) {
        let p = random_net(w.clone(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let x = random_vec(&mut rng, w[0]);
        let up = random_vec(&mut rng, *w.last().unwrap());
        let g = backward(&p, &x, &up).unwrap().params;
        let h = 1e-6;
        let mut fd = vec![0.0; p.len()];
        for i in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a.values[i] += h;
            b.values[i] -= h;
            let fa: f64 = forward(&a, &x).unwrap().iter().zip(&up).map(|(y, u)| y * u).sum();
            let fb: f64 = forward(&b, &x).unwrap().iter().zip(&up).map(|(y, u)| y * u).sum();
            fd[i] = (fa - fb) / (2.0 * h);
        }
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&diff) <= 1e-6 * norm(&g).max(1e-3), "{} vs {}", norm(&diff), norm(&g));
    }

    #[test]
    fn input_jacobian_matches_central_differences(w in widths(), seed in 0u64..1000) {
        let p = random_net(w.clone(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdef);
        let x = random_vec(&mut rng, w[0]);
        let jac = input_jacobian(&p, &x).unwrap();
        let (n_in, n_out) = (w[0], *w.last().unwrap());
        let h = 1e-6;
        let mut fd = vec![0.0; n_in * n_out];
        for j in 0..n_in {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += h;
            b[j] -= h;
            let (ya, yb) = (forward(&p, &a).unwrap(), forward(&p, &b).unwrap());
            for i in 0..n_out {
                fd[i * n_in + j] = (ya[i] - yb[i]) / (2.0 * h);
            }
        }
        let diff: Vec<f64> = jac.iter().zip(&fd).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&diff) <= 1e-6 * norm(&jac).max(1e-3));
    }

    /// Gauss-Legendre quadrature of `J(x0 + s d) d` over `s in [0, 1]`
    /// recovers `f(x0 + d) - f(x0)`.
    #[test]
    fn jacobian_integrates_to_output_difference(w in widths(), seed in 0u64..1000) {
        let p = random_net(w.clone(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x123);
        let x0 = random_vec(&mut rng, w[0]);
        let d: Vec<f64> = random_vec(&mut rng, w[0]).iter().map(|v| 0.2 * v).collect();
        let (n_in, n_out) = (w[0], *w.last().unwrap());
        // 5-point rule on [0, 1] applied on 8 panels
        let nodes = [
            (0.0, 128.0 / 225.0),
            (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let panels = 8;
        let mut integral = vec![0.0; n_out];
        for k in 0..panels {
            for (z, wq) in nodes {
                let s = (k as f64 + 0.5 * (z + 1.0)) / panels as f64;
                let xs: Vec<f64> = x0.iter().zip(&d).map(|(a, b)| a + s * b).collect();
                let jac = input_jacobian(&p, &xs).unwrap();
                for i in 0..n_out {
                    let jd: f64 = (0..n_in).map(|j| jac[i * n_in + j] * d[j]).sum();
                    integral[i] += 0.5 * wq * jd / panels as f64;
                }
            }
        }
        let x1: Vec<f64> = x0.iter().zip(&d).map(|(a, b)| a + b).collect();
        let (y0, y1) = (forward(&p, &x0).unwrap(), forward(&p, &x1).unwrap());
        for i in 0..n_out {
            prop_assert!((integral[i] - (y1[i] - y0[i])).abs() <= 1e-8, "{} vs {}", integral[i], y1[i] - y0[i]);
        }
    }

    #[test]
    fn harmonic_push_preserves_energy_and_weights(
        n in 1usize..200,
        seed in 0u64..1000,
        dt in 1e-4f64..0.05,
        steps in 0usize..200,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(&mut rng, n);
        let v = random_vec(&mut rng, n);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut ens = ParticleEnsemble::new(1, x.clone(), v.clone(), w.clone(), 0.0).unwrap();
        let mass = ens.total_mass();
        advance(&mut ens, &Potential::harmonic(1.0), dt, steps, Integrator::ExactHarmonic).unwrap();
        prop_assert_eq!(ens.total_mass().to_bits(), mass.to_bits());
        prop_assert_eq!(&ens.weights, &w);
        for k in 0..n {
            let e0 = x[k] * x[k] + v[k] * v[k];
            let e1 = ens.positions[k].powi(2) + ens.velocities[k].powi(2);
            prop_assert!((e1 - e0).abs() <= 1e-12, "{e0} -> {e1}");
        }
    }

    #[test]
    fn gaussian_kernel_sums_to_one_on_the_grid(cells in 1.0f64..4.0, shift in 0.0f64..1.0) {
        let dx = 0.01;
        let k = ShapeKernel::gaussian(cells * dx, 6.0).unwrap();
        let r = (k.radius() / dx).ceil() as i64 + 2;
        let sum: f64 = (-r..=r).map(|j| k.eval((j as f64 - shift) * dx) * dx).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-6, "{sum}");
    }

    #[test]
    fn bspline_kernel_sums_to_one_on_the_grid(cells in 1u32..4, degree in 1u32..5, shift in 0.0f64..1.0) {
        let dx = 0.01;
        let k = ShapeKernel::b_spline(cells as f64 * dx, degree).unwrap();
        let r = (k.radius() / dx).ceil() as i64 + 2;
        let sum: f64 = (-r..=r).map(|j| k.eval((j as f64 - shift) * dx) * dx).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-6, "{sum}");
    }

    #[test]
    fn relative_l2_of_a_scaled_reference(c in -3.0f64..3.0, r in prop::collection::vec(-5.0f64..5.0, 1..50)) {
        prop_assume!(r.iter().any(|v| v.abs() > 1e-3));
        let p: Vec<f64> = r.iter().map(|v| c * v).collect();
        prop_assert!((relative_l2(&p, &r).unwrap() - (c - 1.0).abs()).abs() <= 1e-12);
    }

    #[test]
    fn mse_of_a_uniform_offset(d in -3.0f64..3.0, r in prop::collection::vec(-5.0f64..5.0, 1..50)) {
        let p: Vec<f64> = r.iter().map(|v| v + d).collect();
        prop_assert!((mse(&p, &r).unwrap() - d * d).abs() <= 1e-10 * (1.0 + d * d));
    }

    #[test]
    fn config_text_round_trips(
        test in prop::sample::select(vec![TestId::I, TestId::II, TestId::III]),
        seed in any::<u64>(),
        epochs in 0usize..100_000,
        lr in 1e-6f64..1.0,
        decay in 0.01f64..1.0,
        particles in 1usize..1_000_000,
        width in 1usize..256,
    ) {
        let mut c = ExperimentConfig::preset(test);
        c.experiment.seed = seed;
        c.stage1.epochs = epochs;
        c.stage1.lr = lr;
        c.stage2.lr_decay = decay;
        c.reference.particles = particles;
        c.stage2.width = width;
        let back = parse_config(&config_to_text(&c)).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.hash(), c.hash());
        for path in ["stage1.lr", "stage2.lr_decay", "experiment.seed"] {
            let f = field(path).unwrap();
            prop_assert_eq!(f.get(&back), f.get(&c));
        }
    }

    #[test]
    fn bundle_round_trip_is_bitwise(
        arrays in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..40), 1..5),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut b = Bundle::new("test_kind", "0123456789abcdef");
        for (k, a) in arrays.iter().enumerate() {
            b.push_vec(format!("a{k}"), a.clone()).unwrap();
        }
        write_bundle(dir.path(), "b", &b).unwrap();
        let back = read_bundle(dir.path(), "b", Some("test_kind")).unwrap();
        for (k, a) in arrays.iter().enumerate() {
            let got = back.array(&format!("a{k}")).unwrap();
            prop_assert_eq!(got.len(), a.len());
            prop_assert!(got.iter().zip(a).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

/// Deep and wide nets are too costly for coordinate-wise differences over
/// every parameter, so the gradient is checked along random directions.
#[test]
fn directional_derivatives_of_large_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for (layers, width) in [(10, 128), (10, 16), (3, 128)] {
        let mut w = vec![3];
        w.extend(std::iter::repeat(width).take(layers));
        w.push(2);
        let p = random_net(w, layers as u64 * 1000 + width as u64);
        let x = random_vec(&mut rng, 3);
        let up = random_vec(&mut rng, 2);
        let g = backward(&p, &x, &up).unwrap().params;
        for _ in 0..3 {
            let d = random_vec(&mut rng, p.len());
            let h = 1e-6;
            let f = |s: f64| {
                let mut q = p.clone();
                q.values.iter_mut().zip(&d).for_each(|(v, dv)| *v += s * dv);
                forward(&q, &x).unwrap().iter().zip(&up).map(|(y, u)| y * u).sum::<f64>()
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let exact: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-3), "{layers}x{width}: {fd} vs {exact}");
        }
    }
}
