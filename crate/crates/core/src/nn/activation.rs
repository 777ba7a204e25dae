use serde::{Deserialize, Serialize};

use super::{Mat, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn forward(self, x: &Mat) -> Mat {
        match self {
            Activation::Identity => x.clone(),
            Activation::Relu => x.mapv(|v| v.max(0.0)),
            Activation::Tanh => x.mapv(f64::tanh),
        }
    }

    /// Gradient with respect to the input, given the forward *output* `y`.
    pub fn backward(self, y: &Mat, dy: &Mat) -> Result<Mat, NnError> {
        if y.dim() != dy.dim() {
            return Err(NnError::Shape {
                op: "act_backward",
                left: y.dim(),
                right: dy.dim(),
            });
        }
        let mut dx = dy.clone();
        match self {
            Activation::Identity => {}
            Activation::Relu => dx.zip_mut_with(y, |d, &y| {
                if y <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Tanh => dx.zip_mut_with(y, |d, &y| *d *= 1.0 - y * y),
        }
        Ok(dx)
    }
}
