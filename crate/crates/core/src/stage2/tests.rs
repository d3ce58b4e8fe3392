use super::loss::LossEvaluator;
use super::*;
use crate::kinetic::{Grid1D, Grid2D, MomentField1D, MomentField2D, Potential};
use crate::nn::{AdamConfig, MlpSpec};
use crate::stage1::{ClosureField1D, ClosureField2D};

fn field_1d(g: Grid1D, t: f64, m0: impl Fn(f64) -> f64, m1: impl Fn(f64) -> f64) -> MomentField1D {
    let c = g.centers();
    MomentField1D::from_moments(
        g,
        t,
        vec![
            c.iter().map(|x| m0(*x)).collect(),
            c.iter().map(|x| m1(*x)).collect(),
            c.iter().map(|x| 0.3 * x * x).collect(),
        ],
    )
    .unwrap()
}

fn problem_1d(boundary: BoundarySpec, weights: LossWeights) -> Stage2Problem {
    let g = Grid1D::new(-0.5, 0.5, 20).unwrap();
    let times = vec![0.0, 0.1, 0.2];
    let c = g.centers();
    let values = times.iter().flat_map(|t| c.iter().map(move |x| x * (1.0 + t))).collect();
    let closure = ClosureField1D::new(g, times, values).unwrap();
    let init = field_1d(g, 0.0, |x| 1.0 + 0.2 * x, |x| -x.signum() * 0.8);
    Stage2Problem::new_1d(
        &closure,
        &init,
        Potential::harmonic(1.0),
        0.2,
        CollocationCounts { n_t: 5, n_x: [7, 0] },
        boundary,
        weights,
    )
    .unwrap()
}

fn problem_2d(boundary: BoundarySpec, form: ForceForm) -> (Stage2Problem, Vec<MomentField2D>) {
    let g = Grid2D::square(-0.5, 0.5, 6).unwrap();
    let n = g.len();
    let mk = |t: f64, s: f64| -> Vec<f64> {
        (0..n).map(|i| 1.0 + s * (i as f64 * 0.37).sin() + t).collect()
    };
    let fields: Vec<MomentField2D> = [0.0, 0.05, 0.1]
        .iter()
        .map(|&t| {
            MomentField2D::from_parts(g, t, mk(t, 0.1), mk(t, 0.2), mk(t, -0.1), mk(t, 0.3), mk(t, 0.05), mk(t, 0.4))
                .unwrap()
        })
        .collect();
    let closure = ClosureField2D::from_data(&fields).unwrap();
    let p = Stage2Problem::new_2d(
        &closure,
        &fields,
        Potential::harmonic(1.0),
        0.1,
        CollocationCounts { n_t: 3, n_x: [4, 5] },
        boundary,
        LossWeights::new(vec![1.0, 0.5, 2.0, 1.5, 0.7, 1.1]).unwrap(),
        form,
    )
    .unwrap();
    (p, fields)
}

fn spec(dim: usize) -> MlpSpec {
    MlpSpec::uniform(1 + dim, 2, 6, 1, 11).unwrap()
}

/// Central-difference check of the batched gradient on a handful of
/// parameters of every network.
fn check_gradient(problem: &Stage2Problem) {
    let mut nets = Stage2Nets::init(problem.domain.clone(), &spec(problem.dim()), problem.n_moments()).unwrap();
    let mut ev = LossEvaluator::new(problem);
    let mut grads: Vec<Vec<f64>> = nets.nets.iter().map(|n| vec![0.0; n.len()]).collect();
    ev.evaluate(problem, &nets, Some(&mut grads)).unwrap();
    let h = 1e-6;
    for k in 0..nets.nets.len() {
        let n = nets.nets[k].len();
        for i in (0..n).step_by(7).chain([n - 1]) {
            let v = nets.nets[k].values[i];
            nets.nets[k].values[i] = v + h;
            let up = total_loss(&nets, problem).unwrap().total;
            nets.nets[k].values[i] = v - h;
            let dn = total_loss(&nets, problem).unwrap().total;
            nets.nets[k].values[i] = v;
            let fd = (up - dn) / (2.0 * h);
            let err = (fd - grads[k][i]).abs() / (1e-6 + fd.abs().max(grads[k][i].abs()));
            assert!(err < 1e-5, "net {k} param {i}: fd {fd} vs {}", grads[k][i]);
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    check_gradient(&problem_1d(BoundarySpec::periodic(), LossWeights::new(vec![1.0, 2.0, 0.5, 3.0]).unwrap()));
    check_gradient(&problem_1d(BoundarySpec::neumann(2), LossWeights::ones(2)));
    check_gradient(&problem_2d(BoundarySpec::neumann(3), ForceForm::Derived).0);
    check_gradient(&problem_2d(BoundarySpec::periodic(), ForceForm::Printed).0);
}

#[test]
fn batched_residual_matches_pointwise() {
    let p = problem_1d(BoundarySpec::periodic(), LossWeights::ones(2));
    let nets = Stage2Nets::init(p.domain.clone(), &spec(1), 2).unwrap();
    let g = Grid1D::new(-0.5, 0.5, 20).unwrap();
    let closure = |t: f64, x: f64| {
        let times = vec![0.0, 0.1, 0.2];
        let c = g.centers();
        let values = times.iter().flat_map(|t| c.iter().map(move |x| x * (1.0 + t))).collect();
        ClosureField1D::new(g, times, values).unwrap().at(t, x)
    };
    let mut ge = [0.0; 2];
    for pt in p.collocation.interior.chunks_exact(2) {
        let r = residual_1d(&nets, closure, pt[0], pt[1], &p.potential).unwrap();
        ge[0] += r[0] * r[0];
        ge[1] += r[1] * r[1];
    }
    let n = p.collocation.n_interior() as f64;
    let b = total_loss(&nets, &p).unwrap();
    assert!((b.ge[0] - ge[0] / n).abs() < 1e-12 * (1.0 + b.ge[0]));
    assert!((b.ge[1] - ge[1] / n).abs() < 1e-12 * (1.0 + b.ge[1]));
}

#[test]
fn network_derivatives_match_finite_differences() {
    let d = SpaceTimeBox::new(0.2, vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap();
    let nets = Stage2Nets::init(d, &MlpSpec::uniform(3, 4, 16, 1, 2).unwrap(), 3).unwrap();
    let (t, x) = (0.07, [0.13, -0.31]);
    let h = 1e-5;
    for k in 0..3 {
        let j = nets.jet(k, t, &x).unwrap();
        let f = |t: f64, x: [f64; 2]| nets.jet(k, t, &x).unwrap()[0];
        let fd = [
            (f(t + h, x) - f(t - h, x)) / (2.0 * h),
            (f(t, [x[0] + h, x[1]]) - f(t, [x[0] - h, x[1]])) / (2.0 * h),
            (f(t, [x[0], x[1] + h]) - f(t, [x[0], x[1] - h])) / (2.0 * h),
        ];
        for a in 0..3 {
            let rel = (fd[a] - j[1 + a]).abs() / j[1 + a].abs().max(1e-3);
            assert!(rel < 1e-6, "moment {k} axis {a}: {} vs {}", j[1 + a], fd[a]);
        }
    }
}

#[test]
fn breakdown_bookkeeping() {
    let w = LossWeights::new(vec![0.3, 1.7, 2.5, 0.9]).unwrap();
    let p = problem_1d(BoundarySpec::neumann(2), w.clone());
    let nets = Stage2Nets::init(p.domain.clone(), &spec(1), 2).unwrap();
    let b = total_loss(&nets, &p).unwrap();
    let manual = b.ge.iter().sum::<f64>() + 0.3 * b.bc[0] + 1.7 * b.bc[1] + 2.5 * b.ic[0] + 0.9 * b.ic[1];
    assert!((manual - b.total).abs() <= 1e-14 * b.total.max(1.0));

    let only_ge = problem_1d(BoundarySpec::neumann(2), LossWeights::new(vec![0.0; 4]).unwrap());
    let g = total_loss(&nets, &only_ge).unwrap();
    assert_eq!(g.total, g.ge.iter().sum::<f64>());

    let bc = boundary_loss(&nets, &p.boundary, &p.collocation).unwrap();
    assert!((bc - b.bc.iter().sum::<f64>()).abs() < 1e-13 * (1.0 + bc));
    let ic = initial_loss(&nets, &p.collocation).unwrap();
    assert!((ic - b.ic.iter().sum::<f64>()).abs() < 1e-13 * (1.0 + ic));
}

#[test]
fn weight_monotonicity() {
    let nets = {
        let p = problem_1d(BoundarySpec::periodic(), LossWeights::ones(2));
        Stage2Nets::init(p.domain.clone(), &spec(1), 2).unwrap()
    };
    let base = total_loss(&nets, &problem_1d(BoundarySpec::periodic(), LossWeights::ones(2))).unwrap().total;
    for i in 0..4 {
        let mut l = vec![1.0; 4];
        l[i] = 3.0;
        let p = problem_1d(BoundarySpec::periodic(), LossWeights::new(l).unwrap());
        assert!(total_loss(&nets, &p).unwrap().total >= base);
    }
}

/// Network `a x + c` in physical units, or `c` when `a = 0`.
fn affine_nets(domain: SpaceTimeBox, coefs: &[(f64, f64)]) -> Stage2Nets {
    let spec = MlpSpec::new(vec![2, 1], 0).unwrap();
    let mut nets = Stage2Nets::init(domain.clone(), &spec, coefs.len()).unwrap();
    let (lo, hi) = (domain.lower[0], domain.upper[0]);
    for (net, &(a, c)) in nets.nets.iter_mut().zip(coefs) {
        // x = lo + (hi - lo)(z + 1) / 2
        net.values = vec![0.0, a * (hi - lo) / 2.0, c + a * (lo + (hi - lo) / 2.0)];
    }
    nets
}

#[test]
fn boundary_examples() {
    let d = SpaceTimeBox::new(1.0, vec![0.0], vec![2.0]).unwrap();
    let col = CollocationSet::tensor(&d, &[0.1], &[1.9], CollocationCounts { n_t: 4, n_x: [5, 0] }, vec![], vec![vec![], vec![]])
        .unwrap();
    let flat = affine_nets(d.clone(), &[(0.0, 1.3), (0.0, -0.2)]);
    assert_eq!(boundary_loss(&flat, &BoundarySpec::periodic(), &col).unwrap(), 0.0);
    assert_eq!(boundary_loss(&flat, &BoundarySpec::neumann(2), &col).unwrap(), 0.0);
    let ramp = affine_nets(d, &[(1.0, 0.0), (0.0, 0.0)]);
    let v = boundary_loss(&ramp, &BoundarySpec::periodic(), &col).unwrap();
    assert!((v - 4.0).abs() < 1e-13);
}

#[test]
fn initial_examples() {
    let d = SpaceTimeBox::new(1.0, vec![0.0], vec![2.0]).unwrap();
    let pts: Vec<f64> = (0..6).flat_map(|i| [0.0, 0.1 + 0.3 * i as f64]).collect();
    let m0 = vec![1.0; 6];
    let m1: Vec<f64> = (0..6).map(|i| 0.5 * i as f64).collect();
    let counts = CollocationCounts { n_t: 2, n_x: [3, 0] };
    let col = CollocationSet::tensor(&d, &[0.1], &[1.9], counts, pts.clone(), vec![m0.clone(), vec![0.0; 6]]).unwrap();
    let zero = affine_nets(d.clone(), &[(0.0, 0.0), (0.0, 0.0)]);
    assert_eq!(initial_loss(&zero, &col).unwrap(), 1.0);

    // m1 = 0.5 i at x = 0.1 + 0.3 i, i.e. m1 = (5 x - 0.5) / 3
    let exact = affine_nets(d.clone(), &[(0.0, 1.0), (5.0 / 3.0, -0.5 / 3.0)]);
    let col = CollocationSet::tensor(&d, &[0.1], &[1.9], counts, pts.clone(), vec![m0.clone(), m1.clone()]).unwrap();
    assert!(initial_loss(&exact, &col).unwrap() < 1e-28);

    let perm = [3usize, 0, 5, 1, 4, 2];
    let p_pts: Vec<f64> = perm.iter().flat_map(|&i| [0.0, pts[2 * i + 1]]).collect();
    let p_m1: Vec<f64> = perm.iter().map(|&i| m1[i]).collect();
    let near = affine_nets(d.clone(), &[(0.3, 0.9), (1.0, 0.1)]);
    let a = initial_loss(&near, &CollocationSet::tensor(&d, &[0.1], &[1.9], counts, pts, vec![m0.clone(), m1]).unwrap()).unwrap();
    let b = initial_loss(&near, &CollocationSet::tensor(&d, &[0.1], &[1.9], counts, p_pts, vec![m0, p_m1]).unwrap()).unwrap();
    assert!((a - b).abs() < 1e-15);
}

#[test]
fn zero_and_short_training() {
    let p = problem_1d(BoundarySpec::neumann(2), LossWeights::ones(2));
    let s = spec(1);
    let sol = train_stage2(&p, &s, Stage2Optimizer::default(), &[], 0).unwrap();
    assert_eq!(sol.nets, Stage2Nets::init(p.domain.clone(), &s, 2).unwrap());
    assert!(sol.history.is_empty());
    let opt = Stage2Optimizer {
        adam: AdamConfig::with_lr(1e-2),
        checkpoint_every: 10,
    };
    let snap = MomentSnapshot::from_1d(&field_1d(Grid1D::new(-0.5, 0.5, 20).unwrap(), 0.0, |_| 1.0, |_| 0.0)).unwrap();
    let refs = [snap];
    let sol = train_stage2(&p, &s, opt, &refs, 200).unwrap();
    let h = sol.total_history();
    assert!(h[h.len() - 1] < h[0]);
    assert_eq!(sol.checkpoints.len(), 20);
    assert!(sol.history.iter().all(|b| b.total.is_finite() && b.ge.len() == 2));
}

#[test]
fn resume_is_bitwise() {
    let p = problem_2d(BoundarySpec::neumann(3), ForceForm::Derived).0;
    let s = spec(2);
    let opt = Stage2Optimizer {
        adam: AdamConfig::with_lr(5e-3),
        checkpoint_every: 0,
    };
    let straight = train_stage2(&p, &s, opt, &[], 30).unwrap();
    let mut a = Stage2Trainer::new(&p, &s, opt, &[]).unwrap();
    a.run(12).unwrap();
    let (sol, adam) = a.into_parts();
    let mut b = Stage2Trainer::resume(&p, sol, adam, opt, &[]).unwrap();
    b.run(18).unwrap();
    assert_eq!(b.solution(), &straight);
}

#[test]
fn mismatched_nets_rejected() {
    let p = problem_1d(BoundarySpec::periodic(), LossWeights::ones(2));
    let (p2, _) = problem_2d(BoundarySpec::periodic(), ForceForm::Derived);
    let nets = Stage2Nets::init(p2.domain.clone(), &spec(2), 3).unwrap();
    assert!(matches!(total_loss(&nets, &p), Err(crate::Error::SpecMismatch(_))));
}
