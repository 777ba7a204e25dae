use rand_chacha::ChaCha8Rng;

use super::{init_uniform, Activation, Dense, Mat, NnError, Params};

/// Stack of dense layers, each followed by its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activations: Vec<Activation>,
}

/// Layer inputs and activation outputs from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Mat>,
    outputs: Vec<Mat>,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`; hidden layers use `hidden_act`. The last
    /// layer's weights are drawn from `U(-final_init, final_init)`.
    pub fn new(
        sizes: &[usize],
        hidden_act: Activation,
        output_act: Activation,
        final_init: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = sizes.len() - 1;
        let mut layers = Vec::with_capacity(n);
        let mut activations = Vec::with_capacity(n);
        for (k, pair) in sizes.windows(2).enumerate() {
            let mut layer = Dense::new(pair[0], pair[1], rng);
            if k + 1 == n {
                layer.w = init_uniform(pair[1], pair[0], final_init, rng);
                layer.b = init_uniform(1, pair[1], final_init, rng);
                activations.push(output_act);
            } else {
                activations.push(hidden_act);
            }
            layers.push(layer);
        }
        Self { layers, activations }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").output_dim()
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat, NnError> {
        let mut a = x.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            a = act.forward(&layer.forward(&a)?);
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &Mat) -> Result<(Mat, MlpCache), NnError> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let y = act.forward(&layer.forward(&a)?);
            cache.inputs.push(a);
            cache.outputs.push(y.clone());
            a = y;
        }
        Ok((a, cache))
    }

    /// Accumulates parameter gradients into `grads` and returns `dx`.
    pub fn backward_into(&self, cache: &MlpCache, dy: &Mat, grads: &mut Mlp) -> Result<Mat, NnError> {
        let mut d = dy.clone();
        for k in (0..self.layers.len()).rev() {
            let dz = self.activations[k].backward(&cache.outputs[k], &d)?;
            d = self.layers[k].backward_into(&cache.inputs[k], &dz, &mut grads.layers[k])?;
        }
        Ok(d)
    }
}

impl Params for Mlp {
    fn tensors(&self) -> Vec<&Mat> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}
