use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::MapDims;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Same-padded 3x3 convolution.
    Conv3x3 { out_channels: usize },
    Relu,
    Dropout,
    MaxPool2,
    Flatten,
    Dense { units: usize },
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActShape {
    Map(MapDims),
    Flat(usize),
}

impl ActShape {
    pub fn len(&self) -> usize {
        match self {
            ActShape::Map(d) => d.len(),
            ActShape::Flat(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Layer sequence plus the dropout probability shared by every dropout site.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    dropout_rate: f64,
}

impl Architecture {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, dropout_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout rate must be in [0, 1), got {dropout_rate}"
            )));
        }
        let arch = Self {
            input_shape,
            layers,
            dropout_rate,
        };
        arch.activation_shapes()?;
        if !matches!(arch.layers.last(), Some(Layer::Dense { .. })) {
            return Err(Error::invalid("architecture must end in a dense layer"));
        }
        Ok(arch)
    }

    /// Conv(32)·Conv(32)·Pool·Conv(64)·Conv(64)·Pool·Dense(512)·Dense(10) on
    /// 3x32x32 inputs, rectifier and dropout after every conv/hidden dense.
    pub fn paper(dropout_rate: f64) -> Self {
        Self::conv_net([3, 32, 32], [32, 32, 64, 64], 512, 10, dropout_rate)
            .expect("paper architecture is well formed")
    }

    /// The paper layer sequence with custom widths, for desk-scale runs.
    pub fn conv_net(
        input: [usize; 3],
        conv_widths: [usize; 4],
        dense_units: usize,
        classes: usize,
        dropout_rate: f64,
    ) -> Result<Self> {
        use Layer::*;
        let [c1, c2, c3, c4] = conv_widths;
        let layers = vec![
            Conv3x3 { out_channels: c1 },
            Relu,
            Dropout,
            Conv3x3 { out_channels: c2 },
            Relu,
            Dropout,
            MaxPool2,
            Conv3x3 { out_channels: c3 },
            Relu,
            Dropout,
            Conv3x3 { out_channels: c4 },
            Relu,
            Dropout,
            MaxPool2,
            Flatten,
            Dense { units: dense_units },
            Relu,
            Dropout,
            Dense { units: classes },
        ];
        Self::new(input.to_vec(), layers, dropout_rate)
    }

    /// Dense-only network over flat inputs.
    pub fn mlp(inputs: usize, hidden: &[usize], classes: usize, dropout_rate: f64) -> Result<Self> {
        let mut layers = Vec::new();
        for &units in hidden {
            layers.extend([Layer::Dense { units }, Layer::Relu, Layer::Dropout]);
        }
        layers.push(Layer::Dense { units: classes });
        Self::new(vec![inputs], layers, dropout_rate)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn with_dropout_rate(&self, dropout_rate: f64) -> Result<Self> {
        Self::new(self.input_shape.clone(), self.layers.clone(), dropout_rate)
    }

    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense { units }) => *units,
            _ => unreachable!("validated on construction"),
        }
    }

    /// Shapes of the activations: entry 0 is the input, entry `i + 1` the
    /// output of layer `i`.
    pub fn activation_shapes(&self) -> Result<Vec<ActShape>> {
        let mut cur = match *self.input_shape.as_slice() {
            [c, h, w] if c > 0 && h > 0 && w > 0 => ActShape::Map(MapDims::new(c, h, w)),
            [n] if n > 0 => ActShape::Flat(n),
            ref s => return Err(Error::shape(format!("unsupported input shape {s:?}"))),
        };
        let mut shapes = vec![cur];
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match (*layer, cur) {
                (Layer::Conv3x3 { out_channels }, ActShape::Map(d)) if out_channels > 0 => {
                    ActShape::Map(MapDims::new(out_channels, d.height, d.width))
                }
                (Layer::MaxPool2, ActShape::Map(d)) if d.height % 2 == 0 && d.width % 2 == 0 => {
                    ActShape::Map(MapDims::new(d.channels, d.height / 2, d.width / 2))
                }
                (Layer::Flatten, s) => ActShape::Flat(s.len()),
                (Layer::Dense { units }, ActShape::Flat(_)) if units > 0 => ActShape::Flat(units),
                (Layer::Relu | Layer::Dropout, s) => s,
                (layer, s) => {
                    return Err(Error::shape(format!(
                        "layer {i} ({layer:?}) cannot take activation {s:?}"
                    )))
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// Shapes of the trainable tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let shapes = self.activation_shapes().expect("validated on construction");
        let mut out = Vec::new();
        for (layer, input) in self.layers.iter().zip(&shapes) {
            match (*layer, *input) {
                (Layer::Conv3x3 { out_channels }, ActShape::Map(d)) => {
                    out.push(vec![out_channels, d.channels, 3, 3]);
                    out.push(vec![out_channels]);
                }
                (Layer::Dense { units }, ActShape::Flat(n)) => {
                    out.push(vec![units, n]);
                    out.push(vec![units]);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    /// Compact textual form, parseable by [`Architecture::parse`].
    pub fn descriptor(&self) -> String {
        self.to_string()
    }

    pub fn parse(descriptor: &str) -> Result<Self> {
        let bad = |msg: &str| Error::invalid(format!("architecture descriptor: {msg}: {descriptor:?}"));
        let mut parts = descriptor.split(';');
        let input = parts
            .next()
            .and_then(|s| s.strip_prefix("in="))
            .ok_or_else(|| bad("missing in="))?;
        let input_shape = input
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("bad input shape"))?;
        let dropout_rate = parts
            .next()
            .and_then(|s| s.strip_prefix("p="))
            .ok_or_else(|| bad("missing p="))?
            .parse::<f64>()
            .map_err(|_| bad("bad dropout rate"))?;
        let body = parts.next().ok_or_else(|| bad("missing layers"))?;
        if parts.next().is_some() {
            return Err(bad("trailing fields"));
        }
        let layers = body
            .split(',')
            .map(|tok| {
                Ok(match tok {
                    "relu" => Layer::Relu,
                    "drop" => Layer::Dropout,
                    "pool" => Layer::MaxPool2,
                    "flatten" => Layer::Flatten,
                    t => {
                        if let Some(n) = t.strip_prefix("conv") {
                            Layer::Conv3x3 {
                                out_channels: n.parse().map_err(|_| bad(t))?,
                            }
                        } else if let Some(n) = t.strip_prefix("dense") {
                            Layer::Dense {
                                units: n.parse().map_err(|_| bad(t))?,
                            }
                        } else {
                            return Err(bad(t));
                        }
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(input_shape, layers, dropout_rate)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.input_shape.iter().map(|d| d.to_string()).collect();
        write!(f, "in={};p={};", dims.join("x"), self.dropout_rate)?;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match layer {
                Layer::Conv3x3 { out_channels } => write!(f, "conv{out_channels}")?,
                Layer::Relu => f.write_str("relu")?,
                Layer::Dropout => f.write_str("drop")?,
                Layer::MaxPool2 => f.write_str("pool")?,
                Layer::Flatten => f.write_str("flatten")?,
                Layer::Dense { units } => write!(f, "dense{units}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_shapes() {
        let arch = Architecture::paper(0.5);
        let shapes = arch.param_shapes();
        assert_eq!(shapes[0], vec![32, 3, 3, 3]);
        assert_eq!(shapes[8], vec![512, 4096]);
        assert_eq!(shapes[9], vec![512]);
        assert_eq!(shapes[10], vec![10, 512]);
        assert_eq!(arch.num_classes(), 10);
        let acts = arch.activation_shapes().unwrap();
        assert_eq!(acts[15], ActShape::Flat(4096));
    }

    #[test]
    fn descriptor_round_trip() {
        let arch = Architecture::paper(0.5);
        let text = arch.descriptor();
        assert_eq!(
            text,
            "in=3x32x32;p=0.5;conv32,relu,drop,conv32,relu,drop,pool,conv64,relu,drop,\
             conv64,relu,drop,pool,flatten,dense512,relu,drop,dense10"
        );
        assert_eq!(Architecture::parse(&text).unwrap(), arch);
        let mlp = Architecture::mlp(2, &[8], 2, 0.0).unwrap();
        assert_eq!(Architecture::parse(&mlp.descriptor()).unwrap(), mlp);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(Architecture::new(vec![3, 5, 5], vec![Layer::MaxPool2, Layer::Flatten, Layer::Dense { units: 2 }], 0.0).is_err());
        assert!(Architecture::new(vec![4], vec![Layer::Conv3x3 { out_channels: 2 }], 0.0).is_err());
        assert!(Architecture::mlp(2, &[], 2, 1.0).is_err());
        assert!(Architecture::new(vec![4], vec![Layer::Dense { units: 2 }, Layer::Relu], 0.0).is_err());
        assert!(Architecture::parse("in=4;p=0.1;dense2,bogus").is_err());
    }
}
