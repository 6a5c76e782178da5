use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::{Layer, ModelArch};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::tensor::Tensor;

/// Weight and bias of one trainable layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub name: String,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bit_eq(&self, other: &LayerParams) -> bool {
        self.name == other.name
            && self.weight.bit_eq(&other.weight)
            && self.bias.bit_eq(&other.bias)
    }
}

/// Parameters of every trainable layer, in architecture order. The last
/// entry is the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    layers: Vec<LayerParams>,
}

impl ParamSet {
    pub fn zeros(arch: &ModelArch) -> Self {
        let layers = arch
            .trainable_indices()
            .iter()
            .map(|&i| {
                let (w, b) = arch.layers()[i].param_shapes().expect("trainable layer");
                LayerParams {
                    name: arch.layer_name(i).to_string(),
                    weight: Tensor::zeros(w),
                    bias: Tensor::zeros(b),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn layer(&self, i: usize) -> &LayerParams {
        &self.layers[i]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut LayerParams {
        &mut self.layers[i]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn head(&self) -> &LayerParams {
        self.layers.last().expect("non-empty param set")
    }

    pub fn total_len(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    pub fn bit_eq(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.bit_eq(b))
    }

    /// Scalar view: index `n` walks weights then bias of each layer in turn.
    pub fn get_flat(&self, n: usize) -> f64 {
        let (l, is_bias, j) = self.locate(n);
        let p = &self.layers[l];
        if is_bias {
            p.bias.values()[j]
        } else {
            p.weight.values()[j]
        }
    }

    pub fn set_flat(&mut self, n: usize, value: f64) {
        let (l, is_bias, j) = self.locate(n);
        let p = &mut self.layers[l];
        if is_bias {
            p.bias.values_mut()[j] = value;
        } else {
            p.weight.values_mut()[j] = value;
        }
    }

    /// `(layer, is_bias, offset)` for a flat index.
    pub fn locate(&self, mut n: usize) -> (usize, bool, usize) {
        for (l, p) in self.layers.iter().enumerate() {
            if n < p.weight.len() {
                return (l, false, n);
            }
            n -= p.weight.len();
            if n < p.bias.len() {
                return (l, true, n);
            }
            n -= p.bias.len();
        }
        panic!("flat parameter index out of range");
    }

    pub(crate) fn check_matches(&self, arch: &ModelArch) -> Result<()> {
        if self.layers.len() != arch.num_trainable() {
            return Err(Error::Shape {
                layer: "params".into(),
                detail: format!(
                    "{} parameter layers for an architecture with {} trainable layers",
                    self.layers.len(),
                    arch.num_trainable()
                ),
            });
        }
        for (p, &i) in self.layers.iter().zip(arch.trainable_indices()) {
            let (w, b) = arch.layers()[i].param_shapes().expect("trainable layer");
            if p.weight.shape() != w.as_slice() || p.bias.shape() != b.as_slice() {
                return Err(Error::Shape {
                    layer: arch.layer_name(i).to_string(),
                    detail: format!(
                        "parameters have shapes {:?}/{:?}, architecture needs {w:?}/{b:?}",
                        p.weight.shape(),
                        p.bias.shape()
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Per trainable layer: `true` when the layer is trainable this round.
/// Weight and bias share one flag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FreezeMask(Vec<bool>);

impl FreezeMask {
    pub fn new(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    pub fn all_trainable(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn all_frozen(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_trainable(&self, layer: usize) -> bool {
        self.0[layer]
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn any_trainable(&self) -> bool {
        self.0.iter().any(|&f| f)
    }

    /// Flag of the head (last entry).
    pub fn head(&self) -> bool {
        *self.0.last().expect("non-empty mask")
    }

    /// Flags of the base layers (all but the last entry).
    pub fn base(&self) -> &[bool] {
        &self.0[..self.0.len() - 1]
    }

    pub fn with_head(mut self, trainable: bool) -> Self {
        if let Some(h) = self.0.last_mut() {
            *h = trainable;
        }
        self
    }

    pub(crate) fn check_len(&self, expected: usize) -> Result<()> {
        if self.0.len() != expected {
            return Err(Error::MaskLength {
                expected,
                got: self.0.len(),
            });
        }
        Ok(())
    }
}

/// Parameter counts of one trainable layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCount {
    pub name: String,
    pub weight: u64,
    pub bias: u64,
}

impl LayerCount {
    pub fn total(&self) -> u64 {
        self.weight + self.bias
    }
}

/// Per-layer parameter census.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub layers: Vec<LayerCount>,
}

impl ParamCounts {
    /// Census of any layer list; non-trainable layers contribute nothing.
    pub fn of_layers(layers: &[Layer]) -> Self {
        let (mut n_conv, mut n_fc) = (0, 0);
        let layers = layers
            .iter()
            .filter_map(|l| {
                let (w, b) = l.param_shapes()?;
                let name = match l {
                    Layer::Conv2d { .. } => {
                        n_conv += 1;
                        format!("conv{n_conv}")
                    }
                    _ => {
                        n_fc += 1;
                        format!("fc{n_fc}")
                    }
                };
                Some(LayerCount {
                    name,
                    weight: w.iter().product::<usize>() as u64,
                    bias: b.iter().product::<usize>() as u64,
                })
            })
            .collect();
        Self { layers }
    }

    pub fn total(&self) -> u64 {
        self.layers.iter().map(LayerCount::total).sum()
    }

    /// Everything except the head (last trainable layer).
    pub fn base_total(&self) -> u64 {
        self.layers[..self.layers.len().saturating_sub(1)]
            .iter()
            .map(LayerCount::total)
            .sum()
    }

    /// Sum of `weight + bias` over the layers flagged in `mask`.
    pub fn masked_total(&self, mask: &FreezeMask) -> u64 {
        self.layers
            .iter()
            .zip(mask.flags())
            .filter(|(_, &f)| f)
            .map(|(c, _)| c.total())
            .sum()
    }
}

pub fn count_params(arch: &ModelArch) -> ParamCounts {
    ParamCounts::of_layers(arch.layers())
}

/// Fan-in scaled uniform weights in `[-sqrt(1/fan_in), sqrt(1/fan_in)]`,
/// zero biases. Deterministic in `(arch, seed)`.
pub fn init_params(arch: &ModelArch, seed: u64) -> ParamSet {
    let mut params = ParamSet::zeros(arch);
    for (slot, &i) in arch.trainable_indices().iter().enumerate() {
        let bound = (1.0 / arch.fan_in(i) as f64).sqrt();
        let mut rng = rng::stream(seed, Purpose::Init, slot as u64, 0);
        for w in params.layers[slot].weight.values_mut() {
            *w = rng.random_range(-bound..bound);
        }
    }
    params
}

/// `params - lr * grads` on trainable layers; frozen layers are copied
/// unchanged.
pub fn sgd_step(params: &ParamSet, grads: &ParamSet, lr: f64, mask: &FreezeMask) -> ParamSet {
    let mut out = params.clone();
    sgd_step_in_place(&mut out, grads, lr, mask);
    out
}

pub fn sgd_step_in_place(params: &mut ParamSet, grads: &ParamSet, lr: f64, mask: &FreezeMask) {
    assert_eq!(
        params.num_layers(),
        grads.num_layers(),
        "gradient layer count"
    );
    assert_eq!(params.num_layers(), mask.len(), "mask length");
    if lr == 0.0 {
        return;
    }
    for (l, (p, g)) in params.layers.iter_mut().zip(&grads.layers).enumerate() {
        if !mask.is_trainable(l) {
            continue;
        }
        for (w, dw) in p.weight.values_mut().iter_mut().zip(g.weight.values()) {
            *w -= lr * dw;
        }
        for (b, db) in p.bias.values_mut().iter_mut().zip(g.bias.values()) {
            *b -= lr * db;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::arch::Shape;

    fn tiny_arch() -> ModelArch {
        ModelArch::new(
            Shape::Flat(1),
            vec![
                Layer::Dense {
                    inputs: 1,
                    outputs: 1,
                },
                Layer::Dense {
                    inputs: 1,
                    outputs: 2,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn reference_census_matches_table() {
        let counts = count_params(&ModelArch::reference(10));
        let rows: Vec<(&str, u64, u64)> = counts
            .layers
            .iter()
            .map(|c| (c.name.as_str(), c.weight, c.bias))
            .collect();
        assert_eq!(
            rows,
            [
                ("conv1", 800, 32),
                ("conv2", 51_200, 64),
                ("fc1", 524_288, 512),
                ("fc2", 5_120, 10)
            ]
        );
        assert_eq!(counts.total(), 582_026);
        assert_eq!(counts.base_total(), 582_026 - (5_120 + 10));
        assert_eq!(counts.base_total(), 576_896);
    }

    #[test]
    fn single_dense_census() {
        let counts = ParamCounts::of_layers(&[Layer::Dense {
            inputs: 2,
            outputs: 3,
        }]);
        assert_eq!(counts.layers[0].weight, 6);
        assert_eq!(counts.layers[0].bias, 3);
        assert_eq!(counts.total(), 9);
    }

    #[test]
    fn init_is_seeded() {
        let arch = ModelArch::reference(10);
        assert!(init_params(&arch, 1).bit_eq(&init_params(&arch, 1)));
        assert_ne!(
            init_params(&arch, 1).layer(0).weight,
            init_params(&arch, 2).layer(0).weight
        );
        let p = init_params(&arch, 7);
        for l in p.layers() {
            assert!(l
                .bias
                .values()
                .iter()
                .all(|&b| b.to_bits() == 0.0f64.to_bits()));
        }
        let bound = (1.0f64 / 25.0).sqrt();
        assert!(p.layer(0).weight.values().iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn sgd_arithmetic() {
        let arch = tiny_arch();
        let mut p = ParamSet::zeros(&arch);
        p.set_flat(0, 1.0);
        let mut g = ParamSet::zeros(&arch);
        g.set_flat(0, 0.5);
        let out = sgd_step(&p, &g, 0.005, &FreezeMask::all_trainable(2));
        assert_eq!(out.get_flat(0), 0.9975);
    }

    #[test]
    fn sgd_zero_lr_and_frozen_are_identity() {
        let arch = ModelArch::reference(10);
        let p = init_params(&arch, 3);
        let g = init_params(&arch, 4);
        assert!(sgd_step(&p, &g, 0.0, &FreezeMask::all_trainable(4)).bit_eq(&p));
        assert!(sgd_step(&p, &g, 0.3, &FreezeMask::all_frozen(4)).bit_eq(&p));
        let partial = sgd_step(
            &p,
            &g,
            0.3,
            &FreezeMask::new(vec![false, true, false, true]),
        );
        assert!(partial.layer(0).bit_eq(p.layer(0)));
        assert!(partial.layer(2).bit_eq(p.layer(2)));
        assert!(!partial.layer(1).bit_eq(p.layer(1)));
    }

    #[test]
    fn flat_indexing_walks_weight_then_bias() {
        let arch = tiny_arch();
        let mut p = ParamSet::zeros(&arch);
        assert_eq!(p.total_len(), 2 + 4);
        assert_eq!(p.locate(0), (0, false, 0));
        assert_eq!(p.locate(1), (0, true, 0));
        assert_eq!(p.locate(2), (1, false, 0));
        assert_eq!(p.locate(5), (1, true, 1));
        p.set_flat(5, 2.5);
        assert_eq!(p.layer(1).bias.values()[1], 2.5);
    }
}
