//! Finite-difference validation of reverse-mode gradients.

use crate::diffcore::{NodeId, ParamId, ParamSet, Tape};
use crate::error::{Error, Result};

/// Relative error floor. Errors are measured as
/// |analytic - numeric| / max(|analytic|, |numeric|, floor), so entries with
/// near-zero true gradient are judged on an absolute scale of tol * floor,
/// which sits well above central-difference roundoff for the losses used
/// here.
const REL_FLOOR: f64 = 1e-3;

/// Per-parameter outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub id: ParamId,
    pub name: String,
    /// Largest relative error over the parameter's entries.
    pub max_rel_err: f64,
    /// Flat index of the worst entry.
    pub worst_entry: usize,
    /// False if any probe produced a non-finite value.
    pub all_finite: bool,
}

/// Report over all checked parameters.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checks: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_rel_err)
            .fold(0.0, f64::max)
    }

    /// True when every entry of every checked parameter is finite and
    /// within tolerance.
    pub fn passed(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.all_finite && c.max_rel_err <= self.tol)
    }
}

/// Compares reverse-mode gradients against central finite differences
/// (f(x+h) - f(x-h)) / 2h for every entry of the given parameters.
///
/// `build` must deterministically construct the scalar loss from the
/// current parameter values; it is re-run 2 per entry plus once for the
/// analytic pass. `h` must lie in [1e-7, 1e-3]. Parameter gradients are
/// zeroed before and after; trainability flags are restored on exit.
pub fn grad_check<F>(
    build: F,
    params: &mut ParamSet,
    check: &[ParamId],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<NodeId>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!(
            "grad_check step {h} outside [1e-7, 1e-3]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grad_check tolerance must be positive, got {tol}"
        )));
    }
    let saved_flags: Vec<bool> = params.ids().map(|id| params.get(id).trainable).collect();
    for &id in check {
        params.set_trainable(id, true);
    }
    let result = run_check(&build, params, check, h, tol);
    for (id, flag) in params.ids().zip(saved_flags) {
        params.set_trainable(id, flag);
    }
    params.zero_grads();
    result
}

fn run_check<F>(
    build: &F,
    params: &mut ParamSet,
    check: &[ParamId],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<NodeId>,
{
    params.zero_grads();
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    tape.backward(loss, params)?;
    let analytic: Vec<Vec<f64>> = check.iter().map(|&id| params.get(id).grad.clone()).collect();

    let mut checks = Vec::with_capacity(check.len());
    for (ci, &id) in check.iter().enumerate() {
        let numel = params.get(id).value.numel();
        let mut worst = (0.0f64, 0usize);
        let mut all_finite = true;
        for e in 0..numel {
            let orig = params.get(id).value.data()[e];
            params.get_mut(id).value.data_mut()[e] = orig + h;
            let f_plus = eval(build, params)?;
            params.get_mut(id).value.data_mut()[e] = orig - h;
            let f_minus = eval(build, params)?;
            params.get_mut(id).value.data_mut()[e] = orig;
            if !f_plus.is_finite() || !f_minus.is_finite() {
                all_finite = false;
                continue;
            }
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic[ci][e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if rel > worst.0 {
                worst = (rel, e);
            }
        }
        checks.push(ParamCheck {
            id,
            name: params.get(id).name.clone(),
            max_rel_err: worst.0,
            worst_entry: worst.1,
            all_finite,
        });
    }
    Ok(GradCheckReport { checks, tol })
}

fn eval<F>(build: &F, params: &ParamSet) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    let v = tape.value(loss);
    if v.numel() != 1 {
        return Err(Error::InvalidArgument(format!(
            "grad_check loss must be scalar, got shape {:?}",
            v.shape()
        )));
    }
    Ok(v.item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;
    use crate::geom::Point;
    use crate::rng::SplitMix64;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn rejects_out_of_range_step() {
        let mut ps = ParamSet::new();
        let w = ps.insert("w", Tensor::scalar(1.0), true).unwrap();
        for h in [1e-8, 1e-2, 0.0] {
            let err = grad_check(
                |tape, ps| {
                    let wn = tape.param(ps, w);
                    Ok(tape.sum(wn))
                },
                &mut ps,
                &[w],
                h,
                1e-6,
            )
            .unwrap_err();
            assert!(err.to_string().contains("step"));
        }
    }

    #[test]
    fn linear_regression_matches_closed_form() {
        // loss = sum((X w^T - y)^2); d loss/d w = 2 (X w^T - y)^T X.
        let x_data = [0.5, -1.0, 2.0, 0.25, -0.75, 1.5];
        let y_data = [1.0, -2.0, 0.5];
        let w_data = [0.3, -0.6];
        let mut ps = ParamSet::new();
        let w = ps.insert("w", t(vec![1, 2], w_data.to_vec()), true).unwrap();
        let build = |tape: &mut Tape, ps: &ParamSet| {
            let wn = tape.param(ps, w);
            let xn = tape.constant(t(vec![3, 2], x_data.to_vec()));
            let yn = tape.constant(t(vec![3, 1], y_data.to_vec()));
            let pred = tape.linear(wn, None, xn)?;
            let neg_y = tape.scale(yn, -1.0);
            let diff = tape.add(pred, neg_y)?;
            let sq = tape.mul(diff, diff)?;
            Ok(tape.sum(sq))
        };
        let report = grad_check(build, &mut ps, &[w], 1e-5, 1e-6).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err());

        // Also compare the analytic gradient to the closed form directly.
        params_closed_form(&mut ps, w, &x_data, &y_data, &w_data, build);
    }

    fn params_closed_form<F>(
        ps: &mut ParamSet,
        w: ParamId,
        x: &[f64],
        y: &[f64],
        wv: &[f64],
        build: F,
    ) where
        F: Fn(&mut Tape, &ParamSet) -> Result<NodeId>,
    {
        ps.zero_grads();
        let mut tape = Tape::new();
        let loss = build(&mut tape, ps).unwrap();
        tape.backward(loss, ps).unwrap();
        let grad = &ps.get(w).grad;
        for k in 0..2 {
            let mut expect = 0.0;
            for i in 0..3 {
                let pred: f64 = (0..2).map(|j| x[i * 2 + j] * wv[j]).sum();
                expect += 2.0 * (pred - y[i]) * x[i * 2 + k];
            }
            assert!((grad[k] - expect).abs() < 1e-12, "{} vs {}", grad[k], expect);
        }
    }

    #[test]
    fn layer_norm_and_softmax_pass_gradcheck() {
        let mut rng = SplitMix64::new(17);
        let mut ps = ParamSet::new();
        let x = ps
            .insert("x", t(vec![2, 4], (0..8).map(|_| rng.gaussian(0.0, 1.0)).collect()), true)
            .unwrap();
        let gamma = ps
            .insert("gamma", t(vec![4], vec![1.1, 0.9, 1.3, 0.7]), true)
            .unwrap();
        let beta = ps
            .insert("beta", t(vec![4], vec![0.1, -0.2, 0.0, 0.3]), true)
            .unwrap();
        let weights: Vec<f64> = (0..8).map(|_| rng.gaussian(0.0, 1.0)).collect();
        let report = grad_check(
            move |tape, ps| {
                let xn = tape.param(ps, x);
                let gn = tape.param(ps, gamma);
                let bn = tape.param(ps, beta);
                let ln = tape.layer_norm(xn, gn, bn, 1e-5)?;
                let sm = tape.softmax_rows(ln)?;
                let wn = tape.constant(t(vec![2, 4], weights.clone()));
                let prod = tape.mul(sm, wn)?;
                Ok(tape.sum(prod))
            },
            &mut ps,
            &[x, gamma, beta],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err());
    }

    #[test]
    fn matmul_relu_composition_passes_gradcheck() {
        let mut rng = SplitMix64::new(23);
        let mut ps = ParamSet::new();
        let a = ps
            .insert("a", t(vec![3, 4], (0..12).map(|_| rng.gaussian(0.0, 1.0)).collect()), true)
            .unwrap();
        let b = ps
            .insert("b", t(vec![4, 2], (0..8).map(|_| rng.gaussian(0.0, 1.0)).collect()), true)
            .unwrap();
        let c = ps
            .insert("c", t(vec![3, 2], (0..6).map(|_| rng.gaussian(0.0, 1.0)).collect()), true)
            .unwrap();
        let report = grad_check(
            |tape, ps| {
                let an = tape.param(ps, a);
                let bn = tape.param(ps, b);
                let cn = tape.param(ps, c);
                let prod = tape.matmul(an, bn)?;
                let act = tape.relu(prod);
                let more = tape.matmul_nt(act, cn)?;
                let scaled = tape.scale(more, 0.5);
                Ok(tape.sum(scaled))
            },
            &mut ps,
            &[a, b, c],
            1e-5,
            1e-5,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err());
    }

    #[test]
    fn cumsum_variety_composition_passes_gradcheck() {
        let mut rng = SplitMix64::new(31);
        let mut ps = ParamSet::new();
        let offsets = ps
            .insert(
                "offsets",
                t(vec![1, 12], (0..12).map(|_| rng.gaussian(0.0, 0.5)).collect()),
                true,
            )
            .unwrap();
        let target = vec![
            Point::new(0.5, 0.5),
            Point::new(1.0, 1.0),
            Point::new(1.5, 1.5),
        ];
        let report = grad_check(
            move |tape, ps| {
                let on = tape.param(ps, offsets);
                let paths = tape.cumsum_paths(on, 2, 3, Point::new(0.0, 0.0))?;
                tape.variety_loss(paths, &target)
            },
            &mut ps,
            &[offsets],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err());
    }

    #[test]
    fn param_reuse_gradient_is_summed() {
        // f = sum(w * w): gradient 2w exactly.
        let mut ps = ParamSet::new();
        let w = ps
            .insert("w", t(vec![3], vec![1.0, -2.0, 0.5]), true)
            .unwrap();
        let report = grad_check(
            |tape, ps| {
                let w1 = tape.param(ps, w);
                let w2 = tape.param(ps, w);
                let sq = tape.mul(w1, w2)?;
                Ok(tape.sum(sq))
            },
            &mut ps,
            &[w],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err());
    }
}
