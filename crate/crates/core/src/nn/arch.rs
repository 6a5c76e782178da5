use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stage of a sequential model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    /// Cross-correlation, stride 1, no padding, square kernel.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Relu,
    /// 2x2 max pooling with stride 2.
    MaxPool2,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl Layer {
    pub fn is_trainable(&self) -> bool {
        matches!(self, Layer::Conv2d { .. } | Layer::Dense { .. })
    }

    /// `(weight shape, bias shape)` for trainable layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => Some((
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            )),
            Layer::Dense { inputs, outputs } => Some((vec![outputs, inputs], vec![outputs])),
            _ => None,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            Layer::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            Layer::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }
}

/// Activation shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Image { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn size(&self) -> usize {
        match *self {
            Shape::Image { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Image { c, h, w } => write!(f, "({c}, {h}, {w})"),
            Shape::Flat(n) => write!(f, "({n})"),
        }
    }
}

/// A validated sequential architecture ending in a dense classifier head.
///
/// Trainable layers are conv and dense layers. The last trainable layer is
/// the head; every trainable layer before it is a base layer, numbered
/// `1..=K` from the input side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArch {
    input: Shape,
    layers: Vec<Layer>,
    /// `shapes[i]` is the input of `layers[i]`; `shapes[layers.len()]` is the output.
    shapes: Vec<Shape>,
    names: Vec<String>,
    trainable: Vec<usize>,
}

impl ModelArch {
    pub fn new(input: Shape, layers: Vec<Layer>) -> Result<Self> {
        let mut shapes = vec![input];
        let mut names = Vec::new();
        let (mut n_conv, mut n_fc) = (0, 0);
        let mut cur = input;
        for (i, layer) in layers.iter().enumerate() {
            let name = match layer {
                Layer::Conv2d { .. } => {
                    n_conv += 1;
                    format!("conv{n_conv}")
                }
                Layer::Dense { .. } => {
                    n_fc += 1;
                    format!("fc{n_fc}")
                }
                Layer::Relu => format!("relu@{i}"),
                Layer::MaxPool2 => format!("pool@{i}"),
                Layer::Flatten => format!("flatten@{i}"),
            };
            let mismatch = |detail: String| Error::Shape {
                layer: name.clone(),
                detail,
            };
            cur = match (*layer, cur) {
                (
                    Layer::Conv2d {
                        in_channels,
                        out_channels,
                        kernel,
                    },
                    Shape::Image { c, h, w },
                ) => {
                    if in_channels != c {
                        return Err(mismatch(format!(
                            "expects {in_channels} input channels, receives {cur}"
                        )));
                    }
                    if kernel == 0 || out_channels == 0 || kernel > h || kernel > w {
                        return Err(mismatch(format!(
                            "kernel {kernel} does not fit input {cur}"
                        )));
                    }
                    Shape::Image {
                        c: out_channels,
                        h: h - kernel + 1,
                        w: w - kernel + 1,
                    }
                }
                (Layer::Relu, s) => s,
                (Layer::MaxPool2, Shape::Image { c, h, w }) => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(mismatch(format!(
                            "2x2 pooling needs even spatial dims, receives {cur}"
                        )));
                    }
                    Shape::Image {
                        c,
                        h: h / 2,
                        w: w / 2,
                    }
                }
                (Layer::Flatten, s) => Shape::Flat(s.size()),
                (Layer::Dense { inputs, outputs }, Shape::Flat(n)) => {
                    if inputs != n || outputs == 0 {
                        return Err(mismatch(format!("expects {inputs} inputs, receives {cur}")));
                    }
                    Shape::Flat(outputs)
                }
                (_, s) => {
                    return Err(mismatch(format!("cannot accept input of shape {s}")));
                }
            };
            shapes.push(cur);
            names.push(name);
        }
        let trainable: Vec<usize> = layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_trainable())
            .map(|(i, _)| i)
            .collect();
        if trainable.len() < 2 {
            return Err(Error::Arch(
                "need at least one base layer and one head layer".into(),
            ));
        }
        match layers.last() {
            Some(Layer::Dense { .. }) => {}
            _ => {
                return Err(Error::Arch(
                    "the final layer must be a dense classifier head".into(),
                ))
            }
        }
        Ok(Self {
            input,
            layers,
            shapes,
            names,
            trainable,
        })
    }

    /// conv(1→32, 5×5) → relu → pool → conv(32→64, 5×5) → relu → pool →
    /// flatten → dense(1024→512) → relu → dense(512→classes), on 1×28×28 input.
    pub fn reference(num_classes: usize) -> Self {
        Self::new(
            Shape::Image { c: 1, h: 28, w: 28 },
            vec![
                Layer::Conv2d {
                    in_channels: 1,
                    out_channels: 32,
                    kernel: 5,
                },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Conv2d {
                    in_channels: 32,
                    out_channels: 64,
                    kernel: 5,
                },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Flatten,
                Layer::Dense {
                    inputs: 1024,
                    outputs: 512,
                },
                Layer::Relu,
                Layer::Dense {
                    inputs: 512,
                    outputs: num_classes,
                },
            ],
        )
        .expect("reference architecture is valid")
    }

    /// Same topology as [`ModelArch::reference`] with far fewer channels; used
    /// where the full model would make a test or example slow.
    pub fn compact(num_classes: usize) -> Self {
        Self::new(
            Shape::Image { c: 1, h: 28, w: 28 },
            vec![
                Layer::Conv2d {
                    in_channels: 1,
                    out_channels: 4,
                    kernel: 5,
                },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Conv2d {
                    in_channels: 4,
                    out_channels: 8,
                    kernel: 5,
                },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Flatten,
                Layer::Dense {
                    inputs: 128,
                    outputs: 32,
                },
                Layer::Relu,
                Layer::Dense {
                    inputs: 32,
                    outputs: num_classes,
                },
            ],
        )
        .expect("compact architecture is valid")
    }

    pub fn input(&self) -> Shape {
        self.input
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Input shape of layer `i` (or the output shape when `i == layers.len()`).
    pub fn shape_at(&self, i: usize) -> Shape {
        self.shapes[i]
    }

    pub fn layer_name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn num_classes(&self) -> usize {
        self.shapes[self.layers.len()].size()
    }

    /// Indices into [`ModelArch::layers`] of the trainable layers, in order.
    pub fn trainable_indices(&self) -> &[usize] {
        &self.trainable
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable.len()
    }

    /// Number of base layers `K`.
    pub fn base_layer_count(&self) -> usize {
        self.trainable.len() - 1
    }

    /// Position of the head among the trainable layers (always `K`).
    pub fn head_index(&self) -> usize {
        self.trainable.len() - 1
    }

    pub fn trainable_names(&self) -> Vec<&str> {
        self.trainable
            .iter()
            .map(|&i| self.names[i].as_str())
            .collect()
    }

    pub(crate) fn fan_in(&self, layer: usize) -> usize {
        self.layers[layer].fan_in()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_shapes() {
        let arch = ModelArch::reference(10);
        assert_eq!(arch.base_layer_count(), 3);
        assert_eq!(arch.head_index(), 3);
        assert_eq!(arch.trainable_names(), ["conv1", "conv2", "fc1", "fc2"]);
        assert_eq!(arch.shape_at(6), Shape::Image { c: 64, h: 4, w: 4 });
        assert_eq!(arch.shape_at(7), Shape::Flat(1024));
        assert_eq!(arch.num_classes(), 10);
    }

    #[test]
    fn mismatched_dense_names_layer() {
        let err = ModelArch::new(
            Shape::Flat(4),
            vec![
                Layer::Dense {
                    inputs: 4,
                    outputs: 3,
                },
                Layer::Dense {
                    inputs: 5,
                    outputs: 2,
                },
            ],
        )
        .unwrap_err();
        assert!(err.to_string().contains("fc2"), "{err}");
    }

    #[test]
    fn single_trainable_layer_rejected() {
        assert!(ModelArch::new(
            Shape::Flat(2),
            vec![Layer::Dense {
                inputs: 2,
                outputs: 3
            }]
        )
        .is_err());
    }

    #[test]
    fn odd_pool_rejected() {
        let err = ModelArch::new(
            Shape::Image { c: 1, h: 5, w: 5 },
            vec![
                Layer::MaxPool2,
                Layer::Flatten,
                Layer::Dense {
                    inputs: 4,
                    outputs: 2,
                },
            ],
        )
        .unwrap_err();
        assert!(err.to_string().contains("pool@0"), "{err}");
    }
}
