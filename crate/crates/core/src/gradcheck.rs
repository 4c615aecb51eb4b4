//! Central finite-difference gradient checking.
//!
//! The checker only ever evaluates the forward pass, so it is independent
//! of the backward rules it validates. Coordinates whose perturbation flips
//! a ReLU mask, an argmax or a clamp are skipped and counted: a finite
//! difference straddling a kink does not estimate any derivative.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Coordinates sampled per input tensor; all when the tensor is smaller.
    pub max_coords: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tolerance: 1e-4,
            floor: 1e-3,
            max_coords: 24,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub failures: usize,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        self.failures += other.failures;
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn evaluate<F>(inputs: &[Tensor], f: &F, grad: bool) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), grad)).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).is_scalar() {
        return Err(Error::contract("gradient check needs a scalar function"));
    }
    Ok((tape, vars, out))
}

/// Compares the tape's gradient of the scalar function `f` against central
/// differences, for every input tensor.
pub fn check_gradients<F>(
    inputs: &[Tensor],
    f: F,
    config: &GradCheckConfig,
    rng: &mut Rng,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (mut tape, vars, out) = evaluate(inputs, &f, true)?;
    let base_signature = tape.kink_signature();
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport::default();
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads
            .wrt(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape()));
        let coords: Vec<usize> = if input.len() <= config.max_coords {
            (0..input.len()).collect()
        } else {
            sample(rng, input.len(), config.max_coords).into_vec()
        };
        for j in coords {
            let x = input.data()[j];
            let mut side = |delta: f64| -> Result<(f64, u64)> {
                probe[k].data_mut()[j] = x + delta;
                let (t, _, o) = evaluate(&probe, &f, false)?;
                Ok((t.value(o).item()?, t.kink_signature()))
            };
            let (plus, sig_plus) = side(config.step)?;
            let (minus, sig_minus) = side(-config.step)?;
            probe[k].data_mut()[j] = x;
            if sig_plus != base_signature || sig_minus != base_signature {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * config.step);
            let err = relative_error(analytic.data()[j], numeric, config.floor);
            report.checked += 1;
            report.max_rel_err = report.max_rel_err.max(err);
            if err > config.tolerance {
                report.failures += 1;
            }
        }
    }
    Ok(report)
}

/// Checks gradients of a scalar function with respect to stored parameters.
/// `f` must lift parameters with [`Tape::param`]; parameters not listed in
/// `ids` are left as they are.
pub fn check_param_gradients<F>(
    store: &ParamStore,
    ids: &[ParamId],
    f: F,
    config: &GradCheckConfig,
    rng: &mut Rng,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let run = |s: &ParamStore| -> Result<(Tape, Var)> {
        let mut tape = Tape::new();
        let out = f(&mut tape, s)?;
        if !tape.value(out).is_scalar() {
            return Err(Error::contract("gradient check needs a scalar function"));
        }
        Ok((tape, out))
    };
    let (mut tape, out) = run(store)?;
    let base_signature = tape.kink_signature();
    let grads = tape.backward(out)?;
    let mut analytic: BTreeMap<ParamId, Tensor> = BTreeMap::new();
    for (id, g) in grads.params() {
        match analytic.get_mut(&id) {
            Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
            None => {
                analytic.insert(id, g.clone());
            }
        }
    }

    let mut report = GradCheckReport::default();
    let mut probe = store.clone();
    for &id in ids {
        let value = store.value(id);
        let zeros = Tensor::zeros(value.shape());
        let grad = analytic.get(&id).unwrap_or(&zeros);
        let coords: Vec<usize> = if value.len() <= config.max_coords {
            (0..value.len()).collect()
        } else {
            sample(rng, value.len(), config.max_coords).into_vec()
        };
        for j in coords {
            let x = value.data()[j];
            let mut side = |delta: f64| -> Result<(f64, u64)> {
                probe.value_mut(id).data_mut()[j] = x + delta;
                let (t, o) = run(&probe)?;
                Ok((t.value(o).item()?, t.kink_signature()))
            };
            let (plus, sig_plus) = side(config.step)?;
            let (minus, sig_minus) = side(-config.step)?;
            probe.value_mut(id).data_mut()[j] = x;
            if sig_plus != base_signature || sig_minus != base_signature {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * config.step);
            let err = relative_error(grad.data()[j], numeric, config.floor);
            report.checked += 1;
            report.max_rel_err = report.max_rel_err.max(err);
            if err > config.tolerance {
                report.failures += 1;
            }
        }
    }
    Ok(report)
}

/// Reduces a tensor output to a scalar by a dot product with fixed weights,
/// so vector-valued functions can be checked.
pub fn project(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use alloc::vec;
    use rand::Rng as _;

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    fn assert_ok(report: GradCheckReport) {
        assert!(report.passed(), "{report:?}");
    }

    type Build = fn(&mut Tape, &[Var]) -> Result<Var>;

    fn run(shapes: &[&[usize]], f: Build) {
        let mut rng = stream(7, shapes.len() as u64);
        for _ in 0..5 {
            let inputs: Vec<Tensor> = shapes.iter().map(|s| random(s, &mut rng)).collect();
            let report = check_gradients(&inputs, f, &GradCheckConfig::default(), &mut rng).unwrap();
            assert_ok(report);
        }
    }

    #[test]
    fn matmul_bias_relu_sigmoid() {
        run(&[&[3, 4], &[4, 2], &[1, 2]], |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.add_bias(h, v[2])?;
            let h = t.relu(h)?;
            let h = t.sigmoid(h)?;
            t.sum(h)
        });
    }

    #[test]
    fn elementwise_family() {
        run(&[&[2, 3], &[2, 3]], |t, v| {
            let a = t.mul(v[0], v[1])?;
            let b = t.sub(a, v[1])?;
            let c = t.cos(b)?;
            let d = t.sin(v[0])?;
            let e = t.add(c, d)?;
            let sq = t.mul(e, e)?;
            let f = t.add_scalar(sq, 1.0)?;
            let g = t.log(f)?;
            let h = t.sqrt(f)?;
            let i = t.scale(h, 0.3)?;
            let j = t.add(g, i)?;
            t.mean(j)
        });
    }

    #[test]
    fn softmax_both_axes() {
        run(&[&[3, 4]], |t, v| {
            let a = t.softmax(v[0], 1)?;
            let b = t.softmax(v[0], 0)?;
            let w = t.constant(Tensor::new(vec![3, 4], (0..12).map(|i| i as f64 * 0.1).collect())?);
            let c = t.mul(a, w)?;
            let d = t.mul(b, c)?;
            t.sum(d)
        });
    }

    #[test]
    fn structural_ops() {
        run(&[&[3, 2], &[3, 3], &[3, 1]], |t, v| {
            let c = t.concat(&[v[0], v[1]], 1)?;
            let r = t.concat(&[c, c], 0)?;
            let s = t.slice_cols(r, 1, 3)?;
            let m = t.mul_column(v[1], v[2])?;
            let n = t.l2_norm(m)?;
            let rs = t.reshape(s, &[3, 6])?;
            let sr = t.sum_rows(rs)?;
            let prod = t.mul(sr, n)?;
            let mx = t.max_over_rows(s)?;
            let a = t.sum(prod)?;
            let b = t.sum(mx)?;
            t.add(a, b)
        });
    }

    #[test]
    fn row_normalization() {
        run(&[&[4, 3]], |t, v| {
            let u = t.normalize_rows(v[0], 1e-9)?;
            let w = t.constant(Tensor::new(vec![4, 3], (0..12).map(|i| libm::sin(i as f64)).collect())?);
            let p = t.mul(u, w)?;
            let f = t.add_scalar(p, 2.0)?;
            let r = t.recip(f)?;
            t.sum(r)
        });
    }

    #[test]
    fn gather_segment_conv_pool() {
        run(&[&[5, 3], &[3, 3, 2]], |t, v| {
            let g = t.embedding_lookup(v[0], vec![4, 0, 0, 2, 1, 3, 3])?;
            let s = t.segment_sum(g, vec![0, 1, 1, 2, 0, 2, 1], 3)?;
            let mx = t.segment_max(g, vec![0, 0, 1, 1, 2, 2, 2], 3)?;
            let both = t.concat(&[s, mx], 0)?;
            let c = t.conv1d(both, v[1], 1)?;
            let c2 = t.conv1d(g, v[1], 2)?;
            let p = t.adaptive_max_pool(c, 4)?;
            let a = t.sum(p)?;
            let b = t.sum(c2)?;
            t.add(a, b)
        });
    }

    #[test]
    fn losses() {
        run(&[&[6, 1]], |t, v| {
            let y = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
            let w = [3.0, 1.0, 1.0, 2.0, 1.0, 0.5];
            let a = t.bce_with_logits(v[0], &y, &w)?;
            let p = t.sigmoid(v[0])?;
            let b = t.bce_prob(p, &y, &w)?;
            t.add(a, b)
        });
    }
}
