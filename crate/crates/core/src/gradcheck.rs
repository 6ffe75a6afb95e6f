//! Central-difference certification of the analytic backward passes.
//!
//! The numeric side evaluates the scalar probe through the 64-bit reference
//! implementations, never through the `f32` path under test. Relative errors
//! use `max(|analytic|, |numeric|, 1e-8)` in the denominator so near-zero
//! gradients do not produce false failures.

use alloc::string::String;
use alloc::vec::Vec;

use crate::attention::{trace_sa, SaConfig, SaParamIds, SaParams};
use crate::error::{Error, Result};
use crate::reference::{sa_forward_ref, Ref4, RefSaParams};
use crate::rng::Rng;
use crate::tape::Tape;
use crate::tensor::{Shape, Tensor4};

/// Default central-difference step, balanced between truncation and rounding
/// error for parameters at unit scale re-evaluated in 64-bit arithmetic.
pub const DEFAULT_FD_STEP: f64 = 1e-3;
/// Default acceptance tolerance on the relative error.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Floor of the relative-error denominator.
pub const REL_DENOM_FLOOR: f64 = 1e-8;

/// Central differences `(f(t + h e_i) - f(t - h e_i)) / 2h` per coordinate.
/// `f` must be deterministic; a non-finite probe aborts the check.
pub fn finite_difference<F>(mut f: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    debug_assert!(h > 0.0);
    let mut grad = Vec::with_capacity(theta.len());
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let fp = f(&probe);
        probe[i] = theta[i] - h;
        let fm = f(&probe);
        probe[i] = theta[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteSample {
                context: "finite difference probe",
                index: i,
            });
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Comparison of one gradient vector against its numeric counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
}

impl GradCheckEntry {
    fn new(name: &str, analytic: Vec<f64>, numeric: Vec<f64>) -> Self {
        let mut max_abs = 0.0f64;
        let mut max_rel = 0.0f64;
        for (&a, &n) in analytic.iter().zip(&numeric) {
            let abs = (a - n).abs();
            let rel = abs / a.abs().max(n.abs()).max(REL_DENOM_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        GradCheckEntry {
            name: String::from(name),
            analytic,
            numeric,
            max_abs_diff: max_abs,
            max_rel_diff: max_rel,
        }
    }
}

/// Per-quantity comparison of analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
    pub step: f64,
    pub pass: bool,
}

impl GradCheckReport {
    fn from_entries(entries: Vec<GradCheckEntry>, tolerance: f64, step: f64) -> Self {
        let pass = entries.iter().all(|e| e.max_rel_diff <= tolerance);
        GradCheckReport {
            entries,
            tolerance,
            step,
            pass,
        }
    }
}

fn narrow(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Certifies every parameter and input gradient of the module forward pass
/// on a random `(n, c, h, w)` fixture: the analytic side runs the `f32` tape,
/// the numeric side runs central differences through the 64-bit reference
/// forward, both probing `f = sum(output)`.
pub fn gradcheck_sa(
    shape: Shape,
    cfg: &SaConfig,
    seed: u64,
    tolerance: f64,
    step: f64,
) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let x = Tensor4::uniform(shape, -1.0, 1.0, &mut rng)?;
    let conv_gate = cfg.enable_fc && cfg.fc_variant == crate::attention::FcVariant::OneByOneConv;
    let params = SaParams::random(shape.c, cfg.groups, conv_gate, &mut rng)?;

    // Analytic gradients off the tape.
    let mut tape = Tape::new();
    let xid = tape.leaf(x.clone());
    let ids = SaParamIds::push(&mut tape, &params, cfg, shape.c)?;
    let out = trace_sa(&mut tape, xid, &ids, cfg)?;
    let total = tape.sum_all(out);
    let seed_one = Tensor4::from_dims(1, 1, 1, 1, alloc::vec![1.0])?;
    let grads = tape.backward(total, &seed_one)?;
    let analytic_of = |id| -> Vec<f64> {
        grads
            .get(id)
            .map(|t| t.data().iter().map(|&v| v as f64).collect())
            .unwrap_or_else(|| alloc::vec![0.0; tape.value(id).numel()])
    };

    // Numeric gradients through the 64-bit reference forward.
    let x_ref = Ref4::from_tensor(&x);
    let p_ref = RefSaParams::from(&params);
    let mut entries = Vec::new();

    {
        let f = |theta: &[f64]| {
            let probe = Ref4::new(shape.n, shape.c, shape.h, shape.w, theta.to_vec());
            sa_forward_ref(&probe, &p_ref, cfg).sum()
        };
        let numeric = finite_difference(f, &x_ref.data, step)?;
        entries.push(GradCheckEntry::new("x", analytic_of(xid), numeric));
    }

    let vector_cases: [(&str, &Vec<f64>, crate::tape::ValueId); 6] = [
        ("w1", &p_ref.w1, ids.w1),
        ("b1", &p_ref.b1, ids.b1),
        ("w2", &p_ref.w2, ids.w2),
        ("b2", &p_ref.b2, ids.b2),
        ("gn_gamma", &p_ref.gn_gamma, ids.gn_gamma),
        ("gn_beta", &p_ref.gn_beta, ids.gn_beta),
    ];
    for (name, vec_ref, id) in vector_cases {
        let f = |theta: &[f64]| {
            let mut p = p_ref.clone();
            match name {
                "w1" => p.w1 = theta.to_vec(),
                "b1" => p.b1 = theta.to_vec(),
                "w2" => p.w2 = theta.to_vec(),
                "b2" => p.b2 = theta.to_vec(),
                "gn_gamma" => p.gn_gamma = theta.to_vec(),
                _ => p.gn_beta = theta.to_vec(),
            }
            sa_forward_ref(&x_ref, &p, cfg).sum()
        };
        let numeric = finite_difference(f, vec_ref, step)?;
        entries.push(GradCheckEntry::new(name, analytic_of(id), numeric));
    }

    if conv_gate {
        let mix_cases = [
            ("mix1", p_ref.mix1.as_ref().expect("mix1"), ids.mix1),
            ("mix2", p_ref.mix2.as_ref().expect("mix2"), ids.mix2),
        ];
        for (name, vec_ref, id) in mix_cases {
            let f = |theta: &[f64]| {
                let mut p = p_ref.clone();
                if name == "mix1" {
                    p.mix1 = Some(theta.to_vec());
                } else {
                    p.mix2 = Some(theta.to_vec());
                }
                sa_forward_ref(&x_ref, &p, cfg).sum()
            };
            let numeric = finite_difference(f, vec_ref, step)?;
            let id = id.expect("mix leaf exists for conv gate");
            entries.push(GradCheckEntry::new(name, analytic_of(id), numeric));
        }
    }

    let _ = narrow(&x_ref.data); // keep helper linked for doc builds
    Ok(GradCheckReport::from_entries(entries, tolerance, step))
}
