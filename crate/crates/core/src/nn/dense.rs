use rand_chacha::ChaCha8Rng;

use super::{check_shape, col_sums, init_xavier, Mat, NnError, Params};

/// Fully connected layer `y = x W^T + b` on row-major batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out x in]`
    pub w: Mat,
    /// `[1 x out]`
    pub b: Mat,
}

impl Dense {
    /// Xavier weights, zero bias.
    pub fn new(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: init_xavier(output, input, rng),
            b: Mat::zeros((1, output)),
        }
    }

    pub fn from_parts(w: Mat, b: Mat) -> Result<Self, NnError> {
        check_shape("dense bias", &b, (1, w.nrows()))?;
        Ok(Self { w, b })
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat, NnError> {
        check_shape("dense_forward", x, (x.nrows(), self.input_dim()))
            .map_err(|_| NnError::Shape {
                op: "dense_forward",
                left: x.dim(),
                right: self.w.dim(),
            })?;
        Ok(x.dot(&self.w.t()) + &self.b)
    }

    /// Accumulates parameter gradients into `grads` and returns `dx`.
    pub fn backward_into(&self, x: &Mat, dy: &Mat, grads: &mut Dense) -> Result<Mat, NnError> {
        if x.ncols() != self.input_dim() || dy.ncols() != self.output_dim() || x.nrows() != dy.nrows() {
            return Err(NnError::Shape {
                op: "dense_backward",
                left: x.dim(),
                right: dy.dim(),
            });
        }
        grads.w += &dy.t().dot(x);
        grads.b += &col_sums(dy);
        Ok(dy.dot(&self.w))
    }

    /// Returns `(dx, grads)`.
    pub fn backward(&self, x: &Mat, dy: &Mat) -> Result<(Mat, Dense), NnError> {
        let mut g = Dense {
            w: Mat::zeros(self.w.dim()),
            b: Mat::zeros(self.b.dim()),
        };
        let dx = self.backward_into(x, dy, &mut g)?;
        Ok((dx, g))
    }
}

impl Params for Dense {
    fn tensors(&self) -> Vec<&Mat> {
        vec![&self.w, &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Dense::from_parts(Mat::eye(3), Mat::zeros((1, 3))).unwrap();
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Dense::new(4, 3, &mut rng);
        let x = crate::nn::init_uniform(2, 4, 1.0, &mut rng);
        let (dx, g) = layer.backward(&x, &Mat::zeros((2, 3))).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Dense::new(4, 3, &mut rng);
        let err = layer.forward(&Mat::zeros((2, 5))).unwrap_err();
        assert_eq!(
            err,
            NnError::Shape {
                op: "dense_forward",
                left: (2, 5),
                right: (3, 4)
            }
        );
        assert!(err.to_string().contains("(2, 5)") && err.to_string().contains("(3, 4)"));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let (i, o, b) = (rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=4));
            let mut layer = Dense::new(i, o, &mut rng);
            layer.b = crate::nn::init_uniform(1, o, 0.5, &mut rng);
            let x = crate::nn::init_uniform(b, i, 1.0, &mut rng);
            let proj = crate::nn::init_uniform(b, o, 1.0, &mut rng);
            let loss = |l: &Dense| (l.forward(&x).unwrap() * &proj).sum();
            let (dx, grads) = layer.backward(&x, &proj).unwrap();
            let report = grad_check(&layer, &grads, loss);
            assert!(report.max_rel_err < 1e-7, "{report:?}");

            // Input gradient as well.
            let h = 1e-5;
            for r in 0..b {
                for c in 0..i {
                    let mut xp = x.clone();
                    xp[[r, c]] += h;
                    let mut xm = x.clone();
                    xm[[r, c]] -= h;
                    let fd = ((layer.forward(&xp).unwrap() * &proj).sum()
                        - (layer.forward(&xm).unwrap() * &proj).sum())
                        / (2.0 * h);
                    assert!((fd - dx[[r, c]]).abs() < 1e-8);
                }
            }
        }
    }
}
