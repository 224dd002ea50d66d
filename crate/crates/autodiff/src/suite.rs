//! Named gradient-check cases, one per primitive. Used by the test suite
//! and by the `gradcheck` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{grad_check_inputs, GradCheckOptions, GradCheckReport};
use crate::kernels::ConvGeom;
use crate::tape::{lstm_cell, LstmWeights, PrimitiveKind, Tape, Var};
use crate::tensor::Tensor;

type CheckFn = Box<dyn Fn(&GradCheckOptions) -> Result<GradCheckReport> + Send + Sync>;

/// One gradient check: a name, the primitive it targets, and the check.
pub struct GradCase {
    pub name: String,
    pub kind: Option<PrimitiveKind>,
    check: CheckFn,
}

impl GradCase {
    pub fn new(
        name: impl Into<String>,
        kind: Option<PrimitiveKind>,
        check: impl Fn(&GradCheckOptions) -> Result<GradCheckReport> + Send + Sync + 'static,
    ) -> Self {
        GradCase {
            name: name.into(),
            kind,
            check: Box::new(check),
        }
    }

    pub fn run(&self, opts: &GradCheckOptions) -> Result<GradCheckReport> {
        (self.check)(opts)
    }
}

/// Uniform random tensor in `[lo, hi)`.
pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Random tensor whose entries avoid `(−margin, margin)`, for kinked ops.
pub fn random_away_from_zero(shape: &[usize], margin: f64, seed: u64) -> Tensor<f64> {
    random_tensor(shape, -1.0, 1.0, seed).map(|v| if v >= 0.0 { v + margin } else { v - margin })
}

/// Reduces `y` to a scalar with fixed random weights so every output
/// element carries a distinct upstream gradient.
pub fn probe<'t>(tape: &'t Tape<f64>, y: Var<'t, f64>) -> Result<Var<'t, f64>> {
    let shape = y.shape();
    let w = tape.constant(random_tensor(&shape, -1.0, 1.0, 0xC0FFEE ^ shape.iter().product::<usize>() as u64));
    Ok(y.mul(w)?.sum())
}

fn case<F>(name: &str, kind: PrimitiveKind, inputs: Vec<Tensor<f64>>, f: F) -> GradCase
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>> + Send + Sync + 'static,
{
    let f = std::sync::Arc::new(f);
    GradCase::new(name, Some(kind), move |opts| {
        let f = f.clone();
        grad_check_inputs(move |t, xs| f(t, xs), &inputs, opts)
    })
}

/// One case per primitive (several for conv2d geometries).
pub fn primitive_cases() -> Vec<GradCase> {
    use PrimitiveKind as K;
    let r = random_tensor;
    vec![
        case("matmul", K::MatMul, vec![r(&[3, 4], -1.0, 1.0, 1), r(&[4, 2], -1.0, 1.0, 2)], |t, x| {
            probe(t, x[0].matmul(x[1])?)
        }),
        case(
            "conv2d 3x3 pad1 + bias",
            K::Conv2d,
            vec![r(&[2, 4, 4], -1.0, 1.0, 3), r(&[3, 2, 3, 3], -0.5, 0.5, 4), r(&[3], -0.5, 0.5, 5)],
            |t, x| probe(t, x[0].conv2d(x[1], Some(x[2]), ConvGeom::same(3, 1))?),
        ),
        case(
            "conv2d stride2",
            K::Conv2d,
            vec![r(&[2, 6, 5], -1.0, 1.0, 6), r(&[2, 2, 3, 3], -0.5, 0.5, 7)],
            |t, x| probe(t, x[0].conv2d(x[1], None, ConvGeom::new(2, 1, 1))?),
        ),
        case(
            "conv2d dilation2",
            K::Conv2d,
            vec![r(&[2, 6, 6], -1.0, 1.0, 8), r(&[2, 2, 3, 3], -0.5, 0.5, 9)],
            |t, x| probe(t, x[0].conv2d(x[1], None, ConvGeom::same(3, 2))?),
        ),
        case(
            "conv2d 1x1",
            K::Conv2d,
            vec![r(&[3, 3, 4], -1.0, 1.0, 10), r(&[2, 3, 1, 1], -0.5, 0.5, 11), r(&[2], -0.5, 0.5, 12)],
            |t, x| probe(t, x[0].conv2d(x[1], Some(x[2]), ConvGeom::new(1, 0, 1))?),
        ),
        case("add", K::Add, vec![r(&[2, 3], -1.0, 1.0, 13), r(&[2, 3], -1.0, 1.0, 14)], |t, x| {
            probe(t, x[0].add(x[1])?)
        }),
        case(
            "add broadcast",
            K::Add,
            vec![r(&[2, 3, 4], -1.0, 1.0, 15), r(&[3, 4], -1.0, 1.0, 16)],
            |t, x| probe(t, x[0].add(x[1])?),
        ),
        case(
            "mul broadcast",
            K::Mul,
            vec![r(&[2, 3], -1.0, 1.0, 17), r(&[3], -1.0, 1.0, 18)],
            |t, x| probe(t, x[0].mul(x[1])?),
        ),
        case("sub", K::Sub, vec![r(&[4], -1.0, 1.0, 19), r(&[4], -1.0, 1.0, 20)], |t, x| {
            probe(t, x[0].sub(x[1])?)
        }),
        case("relu", K::Relu, vec![random_away_from_zero(&[3, 4], 0.05, 21)], |t, x| {
            probe(t, x[0].relu())
        }),
        case("sigmoid", K::Sigmoid, vec![r(&[6], -3.0, 3.0, 22)], |t, x| probe(t, x[0].sigmoid())),
        case("tanh", K::Tanh, vec![r(&[6], -2.0, 2.0, 23)], |t, x| probe(t, x[0].tanh())),
        case("softmax_lastdim", K::SoftmaxLastDim, vec![r(&[3, 5], -2.0, 2.0, 24)], |t, x| {
            probe(t, x[0].softmax_lastdim())
        }),
        case(
            "concat axis0",
            K::Concat,
            vec![r(&[2, 3], -1.0, 1.0, 25), r(&[1, 3], -1.0, 1.0, 26)],
            |t, x| probe(t, Var::concat(&[x[0], x[1]], 0)?),
        ),
        case(
            "concat axis2",
            K::Concat,
            vec![r(&[2, 2, 3], -1.0, 1.0, 27), r(&[2, 2, 2], -1.0, 1.0, 28)],
            |t, x| probe(t, Var::concat(&[x[0], x[1], x[0]], 2)?),
        ),
        case("slice", K::Slice, vec![r(&[2, 3, 5], -1.0, 1.0, 29)], |t, x| {
            probe(t, x[0].slice(2, 1..4)?)
        }),
        case("sum", K::Sum, vec![r(&[7], -1.0, 1.0, 30)], |_, x| Ok(x[0].sum().scale(1.3))),
        case("mean", K::Mean, vec![r(&[2, 4], -1.0, 1.0, 31)], |_, x| Ok(x[0].mean().scale(-0.7))),
        case("global_avg_pool_2d", K::GlobalAvgPool2d, vec![r(&[3, 2, 4], -1.0, 1.0, 32)], |t, x| {
            probe(t, x[0].global_avg_pool_2d()?)
        }),
        case("adaptive_avg_pool_1d", K::AdaptiveAvgPool1d, vec![r(&[10], -1.0, 1.0, 33)], |t, x| {
            probe(t, x[0].adaptive_avg_pool_1d(4)?)
        }),
        case("upsample_nearest_2x", K::UpsampleNearest2x, vec![r(&[2, 2, 3], -1.0, 1.0, 34)], |t, x| {
            probe(t, x[0].upsample_nearest_2x()?)
        }),
        case(
            "lstm_cell",
            K::LstmCell,
            vec![
                r(&[5], -1.0, 1.0, 35),
                r(&[3], -1.0, 1.0, 36),
                r(&[3], -1.0, 1.0, 37),
                r(&[12, 5], -0.5, 0.5, 38),
                r(&[12, 3], -0.5, 0.5, 39),
                r(&[12], -0.5, 0.5, 40),
            ],
            |t, x| {
                let w = LstmWeights {
                    w_ih: x[3],
                    w_hh: x[4],
                    bias: x[5],
                };
                let (h, c) = lstm_cell(x[0], x[1], x[2], w)?;
                let a = probe(t, h)?;
                let b = probe(t, c.scale(0.5))?;
                a.add(b)
            },
        ),
        {
            let base = r(&[3, 4], -1.0, 1.0, 41);
            // targets sit at least 0.3 away from every prediction
            let target: Vec<f64> = base
                .data()
                .iter()
                .enumerate()
                .map(|(i, v)| v + if i % 2 == 0 { 0.5 } else { -0.3 })
                .collect();
            let mask: Vec<bool> = (0..12).map(|i| i % 3 != 1).collect();
            case("l1_loss_masked", K::L1LossMasked, vec![base], move |_, x| {
                x[0].l1_loss_masked(&target, &mask)
            })
        },
        case("cross_entropy_logits", K::CrossEntropyLogits, vec![r(&[3], -2.0, 2.0, 42)], |_, x| {
            x[0].cross_entropy_logits(1)
        }),
        case("scalar_mul", K::ScalarMul, vec![r(&[4], -1.0, 1.0, 43)], |t, x| probe(t, x[0].scale(-2.5))),
        case("broadcast_spatial", K::BroadcastSpatial, vec![r(&[3], -1.0, 1.0, 44)], |t, x| {
            probe(t, x[0].broadcast_spatial(2, 3)?)
        }),
        case("reshape", K::Reshape, vec![r(&[2, 6], -1.0, 1.0, 45)], |t, x| {
            probe(t, x[0].reshape(vec![3, 4])?)
        }),
        case("transpose", K::Transpose, vec![r(&[2, 5], -1.0, 1.0, 46)], |t, x| {
            probe(t, x[0].transpose()?)
        }),
        case("gather_rows", K::GatherRows, vec![r(&[4, 3], -1.0, 1.0, 47)], |t, x| {
            probe(t, x[0].gather_rows(&[2, 0, 2])?)
        }),
    ]
}
