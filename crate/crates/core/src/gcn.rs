//! Two-layer graph convolutional encoder.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

const CHECKPOINT_VERSION: u32 = 1;

/// Weights of `Â · relu(Â · X · W1) · W2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub w1: Tensor,
    pub w2: Tensor,
    pub dropout: f64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    params: GcnParams,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

impl GcnParams {
    /// Glorot-uniform initialization for feature dim `d`, hidden `h` and
    /// embedding dim `p`.
    pub fn init(d: usize, h: usize, p: usize, dropout: f64, seed: u64) -> Result<Self> {
        if d == 0 || h == 0 || p == 0 {
            return Err(Error::invalid(format!("gcn dims must be positive, got ({d}, {h}, {p})")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::invalid(format!("dropout must be in [0, 1), got {dropout}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = glorot(d, h, &mut rng);
        let w2 = glorot(h, p, &mut rng);
        Ok(GcnParams { w1, w2, dropout })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        vec![self.w1.clone(), self.w2.clone()]
    }

    pub fn set_tensors(&mut self, mut ts: Vec<Tensor>) -> Result<()> {
        if ts.len() != 2 || ts[0].shape() != self.w1.shape() || ts[1].shape() != self.w2.shape() {
            return Err(Error::invalid("gcn parameter shapes changed"));
        }
        self.w2 = ts.pop().expect("len 2");
        self.w1 = ts.pop().expect("len 2");
        Ok(())
    }

    /// Places the weights on a tape as differentiable leaves.
    pub fn leaves<'t>(&self, tape: &'t Tape) -> GcnVars<'t> {
        GcnVars {
            w1: tape.leaf(self.w1.clone()),
            w2: tape.leaf(self.w2.clone()),
            dropout: self.dropout,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            params: self.clone(),
        };
        fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", ck.version)));
        }
        let p = ck.params;
        if p.w1.cols() != p.w2.rows() {
            return Err(Error::shape("checkpoint", p.w1.shape(), p.w2.shape()));
        }
        Ok(p)
    }
}

/// Tape handles for the GCN weights.
#[derive(Clone, Copy, Debug)]
pub struct GcnVars<'t> {
    pub w1: Var<'t>,
    pub w2: Var<'t>,
    pub dropout: f64,
}

impl<'t> GcnVars<'t> {
    pub fn as_vec(&self) -> Vec<Var<'t>> {
        vec![self.w1, self.w2]
    }
}

/// Dropout only runs in training mode, with a per-call seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train { seed: u64 },
    Eval,
}

/// `Â · dropout(relu(Â · dropout(X) · W1)) · W2`.
pub fn gcn_forward<'t>(adj: Var<'t>, x: Var<'t>, w: &GcnVars<'t>, mode: Mode) -> Result<Var<'t>> {
    let (n, n2) = adj.shape();
    if n != n2 || x.shape().0 != n {
        return Err(Error::shape("gcn_forward", adj.shape(), x.shape()));
    }
    let drop = |v: Var<'t>, salt: u64| match mode {
        Mode::Train { seed } if w.dropout > 0.0 => v.dropout(w.dropout, seed.wrapping_mul(0x9e37_79b9).wrapping_add(salt)),
        _ => v,
    };
    let h = adj.matmul(drop(x, 1).matmul(w.w1)?)?.relu();
    adj.matmul(drop(h, 2).matmul(w.w2)?)
}
