use alloc::format;
use rand::Rng;

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::{Error, Result};

/// Affine map over the last axis: `y = x W^T + b`, `W: [out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: ParamId,
    bias: ParamId,
    input: usize,
    output: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let w = super::xavier_uniform(rng, input * output, input, output);
        Self {
            weight: store.add(format!("{name}.weight"), &[output, input], w, true),
            bias: store.add(
                format!("{name}.bias"),
                &[output],
                alloc::vec![0.0; output],
                true,
            ),
            input,
            output,
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    fn rows(&self, x: &Tensor) -> Result<usize> {
        if x.shape().last() != Some(&self.input) {
            return Err(Error::Shape(format!(
                "linear expects last extent {}, got {:?}",
                self.input,
                x.shape()
            )));
        }
        Ok(x.len() / self.input)
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let rows = self.rows(x)?;
        let mut y = alloc::vec![0.0; rows * self.output];
        gemm_nt(
            rows,
            self.input,
            self.output,
            x.data(),
            store.get(self.weight),
            0.0,
            &mut y,
        );
        let b = store.get(self.bias);
        for row in y.chunks_exact_mut(self.output) {
            for (v, bb) in row.iter_mut().zip(b) {
                *v += bb;
            }
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = self.output;
        Ok(Tensor::from_parts(shape, y))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        dy: &Tensor,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        let rows = self.rows(x)?;
        if dy.len() != rows * self.output {
            return Err(Error::Shape(format!(
                "linear upstream gradient has shape {:?}",
                dy.shape()
            )));
        }
        gemm_tn(
            self.output,
            rows,
            self.input,
            dy.data(),
            x.data(),
            1.0,
            grads.get_mut(self.weight),
        );
        let db = grads.get_mut(self.bias);
        for row in dy.data().chunks_exact(self.output) {
            for (acc, v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut dx = alloc::vec![0.0; rows * self.input];
        gemm_nn(
            rows,
            self.output,
            self.input,
            dy.data(),
            store.get(self.weight),
            0.0,
            &mut dx,
        );
        Ok(Tensor::from_parts(x.shape().to_vec(), dx))
    }
}
