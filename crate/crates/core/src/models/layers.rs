//! Building blocks shared by the sequence models. Activations are
//! `[rows, features]` matrices; convolutions use `[channels, time]`.

use rand::Rng;

use crate::error::Result;
use crate::numcore::{Bound, ConvGeom, ParamId, ParamStore, Tape, Var};

/// Creates parameters under a common name prefix.
pub(crate) struct Init<'a, R: Rng> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut R,
}

impl<R: Rng> Init<'_, R> {
    fn uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> ParamId {
        self.store.init_uniform(name, shape, fan_in, self.rng)
    }

    pub fn linear(&mut self, name: &str, input: usize, output: usize) -> Linear {
        Linear {
            w: self.uniform(&format!("{name}.w"), &[input, output], input),
            b: self.uniform(&format!("{name}.b"), &[1, output], input),
        }
    }

    pub fn mlp(&mut self, name: &str, input: usize, hidden: usize, output: usize) -> Mlp {
        Mlp {
            l1: self.linear(&format!("{name}.l1"), input, hidden),
            l2: self.linear(&format!("{name}.l2"), hidden, output),
        }
    }

    pub fn gru(&mut self, name: &str, input: usize, hidden: usize) -> Gru {
        Gru {
            x: self.linear(&format!("{name}.x"), input, 3 * hidden),
            h: self.linear(&format!("{name}.h"), hidden, 3 * hidden),
            hidden,
        }
    }

    pub fn lstm(&mut self, name: &str, input: usize, hidden: usize) -> Lstm {
        let x = self.linear(&format!("{name}.x"), input, 4 * hidden);
        let h = self.linear(&format!("{name}.h"), hidden, 4 * hidden);
        // gate order i, f, g, o; forget bias starts at 1
        let bx = self.store.get_mut(x.b).data_mut();
        bx[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        self.store.get_mut(h.b).data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = 0.0);
        Lstm { x, h, hidden }
    }

    pub fn conv(&mut self, name: &str, input: usize, output: usize, kernel: usize) -> Conv {
        Conv {
            w: self.uniform(&format!("{name}.w"), &[output, input, kernel], input * kernel),
            b: self.uniform(&format!("{name}.b"), &[output], input * kernel),
        }
    }

    pub fn conv_transpose(&mut self, name: &str, input: usize, output: usize, kernel: usize) -> Conv {
        Conv {
            w: self.uniform(&format!("{name}.w"), &[input, output, kernel], input),
            b: self.uniform(&format!("{name}.b"), &[output], input),
        }
    }

    /// `skip` is the skip-path width, `None` for a stack used only for its
    /// residual stream.
    pub fn residual_stack(&mut self, name: &str, channels: usize, skip: Option<usize>, dilations: &[usize]) -> ResidualStack {
        let layers = dilations
            .iter()
            .enumerate()
            .map(|(i, &d)| GatedLayer {
                dilated: self.conv(&format!("{name}.{i}.dil"), channels, 2 * channels, 2),
                res: self.conv(&format!("{name}.{i}.res"), channels, channels, 1),
                skip: skip.map(|k| self.conv(&format!("{name}.{i}.skip"), channels, k, 1)),
                dilation: d,
            })
            .collect();
        ResidualStack { layers }
    }
}

fn add_bias(tape: &mut Tape, y: Var, b: Var) -> Result<Var> {
    let rows = tape.shape(y)[0];
    let b = if rows == 1 { b } else { tape.expand_rows(b, rows)? };
    tape.add(y, b)
}

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p.var(self.w))?;
        add_bias(tape, y, p.var(self.b))
    }
}

/// Two dense layers with a tanh between them.
#[derive(Clone, Debug)]
pub(crate) struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp {
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let h = self.l1.forward(tape, p, x)?;
        let h = tape.tanh(h)?;
        self.l2.forward(tape, p, h)
    }
}

/// Gated recurrent unit (reset, update, candidate).
#[derive(Clone, Debug)]
pub(crate) struct Gru {
    pub x: Linear,
    pub h: Linear,
    pub hidden: usize,
}

impl Gru {
    /// Input projection; can be applied to all timesteps at once when the
    /// inputs do not depend on the recurrence.
    pub fn project(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        self.x.forward(tape, p, x)
    }

    /// One step from a projected `[1, 3H]` input row.
    pub fn step(&self, tape: &mut Tape, p: &Bound, gx: Var, h: Var) -> Result<Var> {
        let n = self.hidden;
        let gh = self.h.forward(tape, p, h)?;
        let rz_x = tape.slice(gx, 1, 0, 2 * n)?;
        let rz_h = tape.slice(gh, 1, 0, 2 * n)?;
        let rz = tape.add(rz_x, rz_h)?;
        let rz = tape.sigmoid(rz)?;
        let r = tape.slice(rz, 1, 0, n)?;
        let z = tape.slice(rz, 1, n, n)?;
        let cx = tape.slice(gx, 1, 2 * n, n)?;
        let ch = tape.slice(gh, 1, 2 * n, n)?;
        let ch = tape.mul(r, ch)?;
        let cand = tape.add(cx, ch)?;
        let cand = tape.tanh(cand)?;
        // h' = cand + z * (h - cand)
        let diff = tape.sub(h, cand)?;
        let keep = tape.mul(z, diff)?;
        tape.add(cand, keep)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Lstm {
    pub x: Linear,
    pub h: Linear,
    pub hidden: usize,
}

impl Lstm {
    pub fn project(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        self.x.forward(tape, p, x)
    }

    /// One step from a projected `[1, 4H]` input row; returns `(h, c)`.
    pub fn step(&self, tape: &mut Tape, p: &Bound, gx: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let n = self.hidden;
        let gh = self.h.forward(tape, p, h)?;
        let g = tape.add(gx, gh)?;
        let ifs = tape.slice(g, 1, 0, 2 * n)?;
        let ifs = tape.sigmoid(ifs)?;
        let i = tape.slice(ifs, 1, 0, n)?;
        let f = tape.slice(ifs, 1, n, n)?;
        let cand = tape.slice(g, 1, 2 * n, n)?;
        let cand = tape.tanh(cand)?;
        let o = tape.slice(g, 1, 3 * n, n)?;
        let o = tape.sigmoid(o)?;
        let fc = tape.mul(f, c)?;
        let ic = tape.mul(i, cand)?;
        let c = tape.add(fc, ic)?;
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Conv {
    pub w: ParamId,
    pub b: ParamId,
}

impl Conv {
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, geom: ConvGeom) -> Result<Var> {
        tape.conv1d(x, p.var(self.w), Some(p.var(self.b)), geom)
    }

    pub fn pointwise(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        self.forward(tape, p, x, ConvGeom::causal(1, 1))
    }

    pub fn transpose(&self, tape: &mut Tape, p: &Bound, x: Var, stride: usize) -> Result<Var> {
        tape.conv_transpose1d(x, p.var(self.w), Some(p.var(self.b)), stride)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct GatedLayer {
    pub dilated: Conv,
    pub res: Conv,
    pub skip: Option<Conv>,
    pub dilation: usize,
}

/// Dilated causal convolutions with gated tanh/sigmoid units, residual and
/// skip connections.
#[derive(Clone, Debug)]
pub(crate) struct ResidualStack {
    pub layers: Vec<GatedLayer>,
}

impl ResidualStack {
    /// Frames of left context seen by the last layer, including the current one.
    pub fn receptive_field(&self) -> usize {
        1 + self.layers.iter().map(|l| l.dilation).sum::<usize>()
    }

    /// Returns the residual stream after every layer and the summed skips.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, channels: usize) -> Result<(Vec<Var>, Option<Var>)> {
        let mut h = x;
        let mut skip_sum: Option<Var> = None;
        let mut taps = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let pre = layer.dilated.forward(tape, p, h, ConvGeom::causal(2, layer.dilation))?;
            let f = tape.slice(pre, 0, 0, channels)?;
            let g = tape.slice(pre, 0, channels, channels)?;
            let f = tape.tanh(f)?;
            let g = tape.sigmoid(g)?;
            let u = tape.mul(f, g)?;
            let r = layer.res.pointwise(tape, p, u)?;
            h = tape.add(h, r)?;
            if let Some(conv) = &layer.skip {
                let s = conv.pointwise(tape, p, u)?;
                skip_sum = Some(match skip_sum {
                    Some(acc) => tape.add(acc, s)?,
                    None => s,
                });
            }
            taps.push(h);
        }
        Ok((taps, skip_sum))
    }
}

/// Dilations `1, 2, ..., 2^(layers-1)` repeated `blocks` times.
pub(crate) fn dilation_schedule(blocks: usize, layers: usize) -> Vec<usize> {
    (0..blocks).flat_map(|_| (0..layers).map(|i| 1usize << i)).collect()
}
