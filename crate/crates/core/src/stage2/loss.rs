//! The Stage-2 empirical risk and its parameter gradient.

use serde::{Deserialize, Serialize};

use super::collocation::{BoundaryKind, BoundarySpec, CollocationCounts, CollocationSet, LossWeights};
use super::model::{SpaceTimeBox, Stage2Nets};
use super::residual::{coef_value, system_terms, ForceForm, Term};
use crate::error::{Error, Result};
use crate::kinetic::{Moment2D, MomentField1D, MomentField2D, Potential};
use crate::nn::Tape;
use crate::stage1::{ClosureField1D, ClosureField2D};

/// Loss components; `total = sum ge + sum_k lambda_k bc_k + sum_k lambda_{n+k} ic_k`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean squared residual per equation.
    pub ge: Vec<f64>,
    /// Unweighted boundary term per moment.
    pub bc: Vec<f64>,
    /// Unweighted initial term per moment.
    pub ic: Vec<f64>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn weighted_sum(&self, w: &LossWeights) -> f64 {
        let n = self.bc.len();
        self.ge.iter().sum::<f64>()
            + (0..n).map(|k| w.bc(k) * self.bc[k]).sum::<f64>()
            + (0..n).map(|k| w.ic(k) * self.ic[k]).sum::<f64>()
    }
}

/// Everything the residual training needs besides the networks: points,
/// frozen closure values at the interior points, potential gradients,
/// boundary conditions and penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Problem {
    pub domain: SpaceTimeBox,
    pub collocation: CollocationSet,
    pub weights: LossWeights,
    pub boundary: BoundarySpec,
    pub potential: Potential,
    pub force_form: ForceForm,
    /// `n_interior x n_equations`, zero in the continuity column.
    pub forcing: Vec<f64>,
    /// `n_interior x dim`.
    pub grad_phi: Vec<f64>,
}

impl Stage2Problem {
    /// Closed 1D system on the grid of `initial`, with the frozen closure
    /// field supplying `dx m2`.
    pub fn new_1d(
        closure: &ClosureField1D,
        initial: &MomentField1D,
        potential: Potential,
        t_final: f64,
        counts: CollocationCounts,
        boundary: BoundarySpec,
        weights: LossWeights,
    ) -> Result<Self> {
        let g = initial.grid;
        let domain = SpaceTimeBox::new(t_final, vec![g.x_min()], vec![g.x_max()])?;
        let c = g.centers();
        let init_pts: Vec<f64> = c.iter().flat_map(|&x| [0.0, x]).collect();
        let targets = vec![initial.m(0)?.to_vec(), initial.m(1)?.to_vec()];
        let col = CollocationSet::tensor(&domain, &[c[0]], &[c[c.len() - 1]], counts, init_pts, targets)?;
        let mut forcing = Vec::with_capacity(col.n_interior() * 2);
        let mut grad_phi = Vec::with_capacity(col.n_interior());
        for p in col.interior.chunks_exact(2) {
            forcing.extend_from_slice(&[0.0, closure.at(p[0], p[1])?]);
            grad_phi.push(potential.partial(&p[1..], 0));
        }
        Self::assemble(domain, col, weights, boundary, potential, ForceForm::Derived, forcing, grad_phi)
    }

    /// Closed 2D system. `fields` supply the initial data (first snapshot)
    /// and the frozen cross-moment derivatives.
    #[allow(clippy::too_many_arguments)]
    pub fn new_2d(
        closure: &ClosureField2D,
        fields: &[MomentField2D],
        potential: Potential,
        t_final: f64,
        counts: CollocationCounts,
        boundary: BoundarySpec,
        weights: LossWeights,
        force_form: ForceForm,
    ) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::InvalidArgument("no snapshots".into()))?;
        let g = first.grid;
        let domain = SpaceTimeBox::new(
            t_final,
            vec![g.x1.x_min(), g.x2.x_min()],
            vec![g.x1.x_max(), g.x2.x_max()],
        )?;
        let (c1, c2) = (g.x1.centers(), g.x2.centers());
        let mut init_pts = Vec::with_capacity(3 * g.len());
        for &a in &c1 {
            for &b in &c2 {
                init_pts.extend_from_slice(&[0.0, a, b]);
            }
        }
        let targets = [Moment2D::M0, Moment2D::M11, Moment2D::M12]
            .iter()
            .map(|q| first.value(*q).to_vec())
            .collect();
        let col = CollocationSet::tensor(
            &domain,
            &[c1[0], c2[0]],
            &[c1[c1.len() - 1], c2[c2.len() - 1]],
            counts,
            init_pts,
            targets,
        )?;
        let mut cross_values = Vec::new();
        for f in fields {
            if f.grid != g {
                return Err(Error::InvalidGrid("snapshots live on different grids".into()));
            }
            for (a, b) in f.partial(Moment2D::MCross, 0).iter().zip(f.partial(Moment2D::MCross, 1)) {
                cross_values.push(*a);
                cross_values.push(*b);
            }
        }
        let cross = ClosureField2D::new(g, fields.iter().map(|f| f.time).collect(), cross_values)?;
        let mut forcing = Vec::with_capacity(col.n_interior() * 3);
        let mut grad_phi = Vec::with_capacity(col.n_interior() * 2);
        for p in col.interior.chunks_exact(3) {
            let c = closure.at(p[0], p[1], p[2])?;
            let k = cross.at(p[0], p[1], p[2])?;
            forcing.extend_from_slice(&[0.0, c[0] + k[1], c[1] + k[0]]);
            grad_phi.push(potential.partial(&p[1..], 0));
            grad_phi.push(potential.partial(&p[1..], 1));
        }
        Self::assemble(domain, col, weights, boundary, potential, force_form, forcing, grad_phi)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        domain: SpaceTimeBox,
        collocation: CollocationSet,
        weights: LossWeights,
        boundary: BoundarySpec,
        potential: Potential,
        force_form: ForceForm,
        forcing: Vec<f64>,
        grad_phi: Vec<f64>,
    ) -> Result<Self> {
        let n = domain.dim() + 1;
        if weights.n_moments() != n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: weights.lambdas.len(),
                context: "penalty weights vs moments",
            });
        }
        boundary.validate(n)?;
        Ok(Self {
            domain,
            collocation,
            weights,
            boundary,
            potential,
            force_form,
            forcing,
            grad_phi,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Moment networks (and residual equations) of this problem.
    pub fn n_moments(&self) -> usize {
        self.dim() + 1
    }

    pub(crate) fn terms(&self) -> Vec<Term> {
        system_terms(self.dim(), self.force_form)
    }
}

/// Reusable buffers for evaluating the risk and its gradient.
#[derive(Debug, Default)]
pub(crate) struct LossEvaluator {
    inputs: Vec<f64>,
    tapes: Vec<Tape>,
    outputs: Vec<Vec<f64>>,
    bars: Vec<Vec<f64>>,
}

impl LossEvaluator {
    pub fn new(problem: &Stage2Problem) -> Self {
        Self {
            inputs: problem.domain.to_unit(&problem.collocation.stacked()),
            ..Default::default()
        }
    }

    /// Loss breakdown; when `grads` is given it is overwritten with the
    /// gradient of the total per network.
    pub fn evaluate(
        &mut self,
        problem: &Stage2Problem,
        nets: &Stage2Nets,
        grads: Option<&mut [Vec<f64>]>,
    ) -> Result<LossBreakdown> {
        let col = &problem.collocation;
        let n_in = col.n_inputs();
        let nm = problem.n_moments();
        if nets.nets.len() != nm || nets.domain != problem.domain {
            return Err(Error::SpecMismatch("networks do not match the stage-2 problem".into()));
        }
        let b = self.inputs.len() / n_in;
        let (ni, nb, n0) = (col.n_interior(), col.n_boundary_pairs(), col.n_initial());
        let (off_l, off_r, off_0) = (ni, ni + nb, ni + 2 * nb);
        let streams = 1 + n_in;
        let scales = problem.domain.scales();
        let dirs: Vec<usize> = (0..n_in).collect();

        // physical streams of every network: outputs[k][s * b + p]
        self.outputs.resize_with(nm, Vec::new);
        self.tapes.resize_with(nm, Tape::new);
        for (k, net) in nets.nets.iter().enumerate() {
            let tape = &mut self.tapes[k];
            tape.forward(net, &self.inputs, &dirs)?;
            let o = &mut self.outputs[k];
            o.clear();
            o.extend_from_slice(tape.value());
            for (a, s) in scales.iter().enumerate() {
                o.extend(tape.tangent(a).iter().map(|d| d * s));
            }
        }
        let want_grad = grads.is_some();
        self.bars.resize_with(nm, Vec::new);
        for bar in &mut self.bars {
            bar.clear();
            bar.resize(streams * b, 0.0);
        }

        // governing equations
        let terms = problem.terms();
        let dim = problem.dim();
        let mut ge = vec![0.0; nm];
        let mut r = vec![0.0; nm];
        for p in 0..ni {
            r.copy_from_slice(&problem.forcing[p * nm..(p + 1) * nm]);
            let g = &problem.grad_phi[p * dim..(p + 1) * dim];
            for t in &terms {
                r[t.eq] += coef_value(t.coef, g) * self.outputs[t.net][t.stream * b + p];
            }
            for e in 0..nm {
                ge[e] += r[e] * r[e];
            }
            if want_grad {
                for t in &terms {
                    self.bars[t.net][t.stream * b + p] += 2.0 * r[t.eq] * coef_value(t.coef, g) / ni as f64;
                }
            }
        }
        ge.iter_mut().for_each(|v| *v /= ni as f64);

        // boundary
        let mut bc = vec![0.0; nm];
        for k in 0..nm {
            let (o, bar) = (&self.outputs[k], &mut self.bars[k]);
            let lam = problem.weights.bc(k);
            match problem.boundary.kind {
                BoundaryKind::Periodic => {
                    for i in 0..nb {
                        let d = o[off_l + i] - o[off_r + i];
                        bc[k] += d * d;
                        bar[off_l + i] += lam * 2.0 * d / nb as f64;
                        bar[off_r + i] -= lam * 2.0 * d / nb as f64;
                    }
                    bc[k] /= nb as f64;
                }
                BoundaryKind::Neumann => {
                    let target = problem.boundary.target(k);
                    for i in 0..nb {
                        let s = 2 + col.axis[i];
                        for p in [off_l + i, off_r + i] {
                            let d = o[s * b + p] - target;
                            bc[k] += d * d;
                            bar[s * b + p] += lam * 2.0 * d / (2 * nb) as f64;
                        }
                    }
                    bc[k] /= (2 * nb) as f64;
                }
            }
        }

        // initial
        let mut ic = vec![0.0; nm];
        for k in 0..nm {
            let lam = problem.weights.ic(k);
            for p in 0..n0 {
                let d = self.outputs[k][off_0 + p] - col.initial_targets[k][p];
                ic[k] += d * d;
                self.bars[k][off_0 + p] += lam * 2.0 * d / n0 as f64;
            }
            ic[k] /= n0 as f64;
        }

        let mut out = LossBreakdown { ge, bc, ic, total: 0.0 };
        out.total = out.weighted_sum(&problem.weights);

        if let Some(grads) = grads {
            for (k, net) in nets.nets.iter().enumerate() {
                let bar = &mut self.bars[k];
                for (a, s) in scales.iter().enumerate() {
                    bar[(1 + a) * b..(2 + a) * b].iter_mut().for_each(|v| *v *= s);
                }
                grads[k].iter_mut().for_each(|g| *g = 0.0);
                self.tapes[k].backward(net, bar, &mut grads[k])?;
            }
        }
        Ok(out)
    }
}

/// Weighted risk with its per-component breakdown.
pub fn total_loss(nets: &Stage2Nets, problem: &Stage2Problem) -> Result<LossBreakdown> {
    LossEvaluator::new(problem).evaluate(problem, nets, None)
}

/// Unweighted boundary term summed over moments.
pub fn boundary_loss(nets: &Stage2Nets, spec: &BoundarySpec, col: &CollocationSet) -> Result<f64> {
    let left = nets.evaluate(&col.left)?;
    let right = nets.evaluate(&col.right)?;
    let nb = col.n_boundary_pairs();
    if nb == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for k in 0..nets.nets.len() {
        match spec.kind {
            BoundaryKind::Periodic => {
                let s: f64 = (0..nb).map(|i| (left.values[k][i] - right.values[k][i]).powi(2)).sum();
                total += s / nb as f64;
            }
            BoundaryKind::Neumann => {
                let t = spec.target(k);
                let s: f64 = (0..nb)
                    .map(|i| {
                        let a = 1 + col.axis[i];
                        (left.derivs[k][a][i] - t).powi(2) + (right.derivs[k][a][i] - t).powi(2)
                    })
                    .sum();
                total += s / (2 * nb) as f64;
            }
        }
    }
    Ok(total)
}

/// Unweighted initial term summed over moments.
pub fn initial_loss(nets: &Stage2Nets, col: &CollocationSet) -> Result<f64> {
    let n0 = col.n_initial();
    if n0 == 0 {
        return Ok(0.0);
    }
    let v = nets.predict(&col.initial)?;
    let nm = nets.nets.len();
    Ok((0..nm)
        .map(|k| (0..n0).map(|p| (v[p * nm + k] - col.initial_targets[k][p]).powi(2)).sum::<f64>() / n0 as f64)
        .sum())
}
