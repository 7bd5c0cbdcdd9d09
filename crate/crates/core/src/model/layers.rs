//! Building blocks shared by both networks.

use rand::Rng;

use super::{kaiming, Bound, Params, Result};
use crate::tensor::{Resample, Tape, Tensor, Var};

/// 3³ convolution with stride 1, padding 1 and a per-channel bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub weight: usize,
    pub bias: usize,
}

impl Conv {
    pub fn new<R: Rng + ?Sized>(p: &mut Params, name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        let weight = p.push(format!("{name}.w"), kaiming(&[cout, cin, 3, 3, 3], cin * 27, rng));
        let bias = p.push(format!("{name}.b"), Tensor::zeros(&[cout]));
        Self { weight, bias }
    }

    pub fn apply(&self, tape: &mut Tape, b: &Bound, x: Var) -> Result<Var> {
        let y = tape.conv3d(x, b[self.weight], 1)?;
        Ok(tape.channel_bias(y, b[self.bias])?)
    }
}

/// Row-wise affine map `n×in → n×out`. The bias is the last weight row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(p: &mut Params, name: &str, fan_in: usize, out: usize, rng: &mut R) -> Self {
        let mut w = kaiming(&[fan_in + 1, out], fan_in, rng);
        w.data_mut()[fan_in * out..].iter_mut().for_each(|v| *v = 0.0);
        Self {
            weight: p.push(format!("{name}.w"), w),
        }
    }

    pub fn apply(&self, tape: &mut Tape, b: &Bound, x: Var) -> Result<Var> {
        let n = tape.shape(x)[0];
        let ones = tape.constant(Tensor::full(&[n, 1], 1.0));
        let xa = tape.concat(&[x, ones], 1)?;
        Ok(tape.matmul(xa, b[self.weight])?)
    }
}

fn stack<R: Rng + ?Sized>(p: &mut Params, name: &str, cin: usize, cout: usize, k: usize, rng: &mut R) -> Vec<Conv> {
    (0..k)
        .map(|i| Conv::new(p, &format!("{name}.{i}"), if i == 0 { cin } else { cout }, cout, rng))
        .collect()
}

fn relu_stack(convs: &[Conv], tape: &mut Tape, b: &Bound, mut x: Var) -> Result<Var> {
    for c in convs {
        let y = c.apply(tape, b, x)?;
        x = tape.relu(y);
    }
    Ok(x)
}

/// Two stages: full resolution, then half resolution after 2×2 pooling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoder {
    pub stage1: Vec<Conv>,
    pub stage2: Vec<Conv>,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(p: &mut Params, name: &str, cin: usize, ch: [usize; 2], k: usize, rng: &mut R) -> Self {
        Self {
            stage1: stack(p, &format!("{name}.s1"), cin, ch[0], k, rng),
            stage2: stack(p, &format!("{name}.s2"), ch[0], ch[1], k, rng),
        }
    }

    pub fn convs(&self) -> impl Iterator<Item = &Conv> {
        self.stage1.iter().chain(&self.stage2)
    }

    /// Returns `(skip, bottleneck)`.
    pub fn forward(&self, tape: &mut Tape, b: &Bound, x: Var) -> Result<(Var, Var)> {
        let skip = relu_stack(&self.stage1, tape, b, x)?;
        let down = tape.resample_spatial(skip, Resample::DownAvg2)?;
        let bottleneck = relu_stack(&self.stage2, tape, b, down)?;
        Ok((skip, bottleneck))
    }
}

/// Mirror of [`Encoder`] with a skip connection and a linear output conv.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoder {
    pub stage2: Vec<Conv>,
    pub stage1: Vec<Conv>,
    pub out: Conv,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(
        p: &mut Params,
        name: &str,
        bottom_in: usize,
        ch: [usize; 2],
        cout: usize,
        k: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            stage2: stack(p, &format!("{name}.s2"), bottom_in, ch[1], k, rng),
            stage1: stack(p, &format!("{name}.s1"), ch[1] + ch[0], ch[0], k, rng),
            out: Conv::new(p, &format!("{name}.out"), ch[0], cout, rng),
        }
    }

    /// `after_stage` runs on each stage output (dropout in the segmentation net).
    pub fn forward(
        &self,
        tape: &mut Tape,
        b: &Bound,
        bottom: Var,
        skip: Var,
        after_stage: &mut dyn FnMut(&mut Tape, Var) -> Result<Var>,
    ) -> Result<Var> {
        let h = relu_stack(&self.stage2, tape, b, bottom)?;
        let h = after_stage(tape, h)?;
        let up = tape.resample_spatial(h, Resample::UpNearest2)?;
        let cat = tape.concat(&[up, skip], 0)?;
        let h = relu_stack(&self.stage1, tape, b, cat)?;
        let h = after_stage(tape, h)?;
        self.out.apply(tape, b, h)
    }
}
