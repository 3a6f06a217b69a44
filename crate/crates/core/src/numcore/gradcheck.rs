//! Central finite-difference verification of taped gradients.

use alloc::vec::Vec;

use rand::seq::index;

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;

use super::{Ops, Tape, Tensor, Var};
use crate::attention::AttentionMask;
use crate::error::{bail, Result};
use crate::rng::{self, streams};

/// Which parameter coordinates to perturb.
#[derive(Debug, Clone, Copy)]
pub enum Coords {
    All,
    /// `count` coordinates drawn uniformly over all parameters.
    Sample { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|fd − analytic| / max(|fd|, |analytic|, 1)`.
    pub max_rel_error: f64,
    /// `(parameter, coordinate)` of the worst case.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Compares the taped gradient of `f` against central differences
/// `(f(p+ε) − f(p−ε)) / 2ε` at the selected coordinates.
///
/// The error is relative with a unit floor on the denominator: losses are
/// evaluated in `f32`, so differences below `~1e-4` absolute are rounding
/// noise rather than signal.
///
/// `f` receives a fresh tape without a dropout generator, so a model that
/// leaves dropout enabled fails with a protocol error, as does any `f` whose
/// value is not reproducible.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], eps: f32, coords: Coords) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    finite_diff_check_with(Tape::new, f, params, eps, coords)
}

/// [`finite_diff_check`] with every evaluation on a tape from `make_tape`,
/// e.g. one carrying a dropout generator reseeded identically each time.
pub fn finite_diff_check_with<F, M>(
    mut make_tape: M,
    mut f: F,
    params: &[Tensor],
    eps: f32,
    coords: Coords,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
    M: FnMut() -> Tape,
{
    if !(eps > 0.0) {
        bail!(Parameter, "finite-difference step must be positive, got {eps}");
    }
    let mut params: Vec<Tensor> = params.to_vec();

    let mut eval = |params: &[Tensor]| -> Result<(f32, Tape, Vec<Var>)> {
        let mut tape = make_tape();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        let value = tape.value_of(loss).item()?;
        tape.backward(loss)?;
        Ok((value, tape, vars))
    };

    let (base, mut tape, vars) = eval(&params)?;
    let analytic: Vec<Option<Tensor>> = vars.iter().map(|&v| tape.take_grad(v)).collect();
    drop(tape);
    let (again, _, _) = eval(&params)?;
    if base.to_bits() != again.to_bits() {
        bail!(Protocol, "loss is not deterministic ({base} vs {again})");
    }

    let mut targets: Vec<(usize, usize)> = Vec::new();
    let total: usize = params.iter().map(|p| p.len()).sum();
    let flat_to_pair = |mut flat: usize, params: &[Tensor]| {
        for (pi, p) in params.iter().enumerate() {
            if flat < p.len() {
                return (pi, flat);
            }
            flat -= p.len();
        }
        unreachable!("coordinate within total")
    };
    match coords {
        Coords::All => targets.extend((0..total).map(|c| flat_to_pair(c, &params))),
        Coords::Sample { count, seed } => {
            let mut r = rng::stream(seed, 0);
            let count = count.min(total);
            let mut picks: Vec<usize> = index::sample(&mut r, total, count).into_vec();
            picks.sort_unstable();
            targets.extend(picks.into_iter().map(|c| flat_to_pair(c, &params)));
        }
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (pi, ci) in targets {
        let orig = params[pi].data()[ci];
        let hi = orig + eps;
        let lo = orig - eps;
        params[pi].data_mut()[ci] = hi;
        let f_hi = eval(&params)?.0;
        params[pi].data_mut()[ci] = lo;
        let f_lo = eval(&params)?.0;
        params[pi].data_mut()[ci] = orig;
        let fd = (f_hi as f64 - f_lo as f64) / (hi as f64 - lo as f64);
        let an = analytic[pi].as_ref().map_or(0.0, |g| g.data()[ci] as f64);
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1.0);
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((pi, ci));
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Step used by [`op_suite`].
pub const SUITE_EPS: f32 = 1e-2;

/// `Σ x ⊙ c` for a fixed random `c`, so every output element carries a
/// distinct weight into the scalar.
fn probe(tape: &mut Tape, x: &Var, seed: u64) -> Result<Var> {
    let shape = tape.value_of(*x).shape().to_vec();
    let mut r = rng::stream(seed, 0x9E);
    let c = tape.constant(Tensor::randn(&shape, 1.0, &mut r));
    let y = tape.mul(x, &c)?;
    Ok(tape.sum(&y))
}

/// Finite-difference checks of every differentiable tape operation and
/// loss on small random inputs, one report per operation.
pub fn op_suite(seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut r = rng::stream(seed, 0x6C);
    let mut m = |rows: usize, cols: usize| Tensor::randn(&[rows, cols], 1.0, &mut r);
    let a34 = m(3, 4);
    let b45 = m(4, 5);
    let c54 = m(5, 4);
    let d34 = m(3, 4);
    let e14 = m(1, 4);
    let s44 = m(4, 4);
    let big = m(6, 5);
    let tbl = m(7, 4);
    let q = m(6, 4);
    let k = m(6, 4);
    let v = m(6, 4);
    let logits = m(5, 6);
    let soft_src = m(3, 6);
    let one = Tensor::scalar(0.7);
    let a = |s: &[Tensor]| s.to_vec();
    let mask = Arc::new(AttentionMask::from_rows(
        (0..6usize).map(|i| (i.saturating_sub(2)..(i + 3).min(6)).chain([0]).collect::<Vec<_>>()).map(|mut row| {
            row.sort_unstable();
            row.dedup();
            row
        }).collect(),
    )?);
    let soft = super::func::softmax_t(&soft_src, 2.0)?;

    type Case<'a> = (&'static str, Vec<Tensor>, Box<dyn FnMut(&mut Tape, &[Var]) -> Result<Var> + 'a>);
    let cases: Vec<Case> = vec![
        ("matmul", a(&[a34.clone(), b45.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.matmul(&p[0], &p[1])?;
            probe(t, &y, 1)
        })),
        ("matmul_nt", a(&[a34.clone(), c54.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.matmul_nt(&p[0], &p[1])?;
            probe(t, &y, 2)
        })),
        ("transpose", a(&[a34.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.transpose(&p[0])?;
            probe(t, &y, 3)
        })),
        ("add", a(&[a34.clone(), d34.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.add(&p[0], &p[1])?;
            probe(t, &y, 4)
        })),
        ("mul", a(&[a34.clone(), d34.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.mul(&p[0], &p[1])?;
            probe(t, &y, 5)
        })),
        ("add_row", a(&[a34.clone(), Tensor::vector(e14.data().to_vec())]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.add_row(&p[0], &p[1])?;
            probe(t, &y, 6)
        })),
        ("scale", a(&[a34.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.scale(&p[0], -1.7);
            probe(t, &y, 7)
        })),
        ("identity_minus", a(&[s44.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.identity_minus(&p[0], 3.0)?;
            probe(t, &y, 8)
        })),
        ("gelu", a(&[a34.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.gelu(&p[0]);
            probe(t, &y, 9)
        })),
        ("layer_norm", a(&[big.clone(), Tensor::vector(vec![1.1, 0.9, 1.3, 0.7, 1.0]), Tensor::vector(vec![0.1, -0.2, 0.0, 0.3, -0.1])]),
            Box::new(|t: &mut Tape, p: &[Var]| {
                let y = t.layer_norm(&p[0], &p[1], &p[2])?;
                probe(t, &y, 10)
            })),
        ("softmax", a(&[a34.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.softmax(&p[0], 0.8);
            probe(t, &y, 11)
        })),
        ("embedding", a(&[tbl.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.embedding(&p[0], &[3, 0, 3, 6, 1])?;
            probe(t, &y, 12)
        })),
        ("slice_block", a(&[big.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.slice_block(&p[0], 1, 3, 2, 2)?;
            probe(t, &y, 13)
        })),
        ("assemble", a(&[a34.clone(), e14.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.assemble([5, 6], &[(&p[0], 0, 0), (&p[1], 4, 2)])?;
            probe(t, &y, 14)
        })),
        ("attention", a(&[q.clone(), k.clone(), v.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.attention(&p[0], &p[1], &p[2], &mask, 0.5)?;
            probe(t, &y, 15)
        })),
        ("segment_means", a(&[big.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.segment_means(&p[0], 4)?;
            probe(t, &y, 16)
        })),
        ("pinv_init_scale", a(&[s44.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.pinv_init_scale(&p[0])?;
            let y = t.scale(&y, 10.0);
            Ok(t.sum(&y))
        })),
        ("scale_by", a(&[a34.clone(), one.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.scale_by(&p[0], &p[1])?;
            probe(t, &y, 18)
        })),
        ("sum", a(&[a34.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let y = t.sum(&p[0]);
            let y = t.mul(&y, &y)?;
            Ok(t.sum(&y))
        })),
        ("cross_entropy_soft", a(&[logits.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            t.cross_entropy_soft(p[0], &[0, 2, 4], soft.clone(), 2.0)
        })),
        ("mlm_cross_entropy", a(&[logits.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            t.mlm_cross_entropy(p[0], &[(0, 1), (3, 5), (4, 0)])
        })),
        ("cosine_embedding_loss", a(&[a34.clone(), d34.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            t.cosine_embedding_loss(p[0], p[1])
        })),
        ("weighted_sum", a(&[a34.clone(), d34.clone()]), Box::new(|t: &mut Tape, p: &[Var]| {
            let x = probe(t, &p[0], 19)?;
            let y = t.cosine_embedding_loss(p[0], p[1])?;
            t.weighted_sum(&[(2.0, x), (5.0, y)])
        })),
    ];

    let mut out = Vec::with_capacity(cases.len() + 1);
    for (name, params, f) in cases {
        out.push((name, finite_diff_check(f, &params, SUITE_EPS, Coords::All)?));
    }
    let dropout = finite_diff_check_with(
        || Tape::with_dropout(rng::stream(seed, streams::DROPOUT)),
        |t, p| {
            let y = t.dropout(&p[0], 0.3)?;
            probe(t, &y, 20)
        },
        &[big],
        SUITE_EPS,
        Coords::All,
    )?;
    out.push(("dropout", dropout));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_operation_passes() {
        for (name, report) in op_suite(0).unwrap() {
            assert!(report.max_rel_error < 1e-3, "{name}: {report:?}");
            assert!(report.checked > 0, "{name}");
        }
    }

    #[test]
    fn linear_form_is_exact() {
        let w = Tensor::vector(vec![0.5, -1.5, 2.0]);
        let x = Tensor::vector(vec![1.0, 2.0, -0.25]);
        let report = finite_diff_check(
            |t, p| {
                let c = t.constant(Tensor::vector(vec![3.0, -1.0, 0.5]));
                let y = t.mul(&p[0], &c)?;
                let z = t.mul(&p[1], &c)?;
                let s = t.add(&y, &z)?;
                Ok(t.sum(&s))
            },
            &[w, x],
            1e-3,
            Coords::All,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-3, "{report:?}");
        assert_eq!(report.checked, 6);
    }

    #[test]
    fn nonpositive_step_rejected() {
        let w = Tensor::vector(vec![1.0]);
        let r = finite_diff_check(|t, p| Ok(t.sum(&p[0])), &[w], 0.0, Coords::All);
        assert!(matches!(r, Err(crate::Error::Parameter(_))));
    }

    #[test]
    fn nondeterministic_loss_is_rejected() {
        let w = Tensor::vector(vec![1.0]);
        let mut calls = 0u32;
        let r = finite_diff_check(
            |t, p| {
                calls += 1;
                let y = t.scale(&p[0], calls as f32);
                Ok(t.sum(&y))
            },
            &[w],
            1e-3,
            Coords::All,
        );
        assert!(matches!(r, Err(crate::Error::Protocol(_))));
    }

    #[test]
    fn unseeded_dropout_is_rejected() {
        let w = Tensor::vector(vec![1.0, 2.0]);
        let r = finite_diff_check(
            |t, p| {
                let y = t.dropout(&p[0], 0.5)?;
                Ok(t.sum(&y))
            },
            &[w],
            1e-3,
            Coords::All,
        );
        assert!(matches!(r, Err(crate::Error::Protocol(_))));
    }
}
