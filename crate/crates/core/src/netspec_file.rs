//! Text format for [`NetworkSpec`] (TOML).
//!
//! ```toml
//! format = "convland-netspec/1"
//! input_width = 5
//!
//! [[layers]]
//! type = "conv"                 # conv | dense | max_pool | output
//! filters = 2
//! activation = "sigmoid"        # relu | sigmoid | identity | softplus:<alpha>
//! layout = { builder = "conv1d", len = 5, kernel = 3, stride = 1 }
//!
//! [[layers]]
//! type = "max_pool"
//! layout = { in_width = 6, patches = [[0, 1], [2, 3], [4, 5]] }
//!
//! [[layers]]
//! type = "output"
//! width = 1
//! ```
//!
//! Layouts are written either as a builder (`conv1d`, `grid2d`, `whole`) or as an
//! explicit `patches` list. A layout created by a builder is written back as that builder,
//! so parsing and writing round-trip exactly. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::layout::{LayoutDescriptor, PatchLayout};
use crate::network::{LayerSpec, NetworkSpec};

pub const FORMAT_TAG: &str = "convland-netspec/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    format: String,
    input_width: usize,
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum LayerEntry {
    Conv {
        filters: usize,
        activation: String,
        layout: LayoutEntry,
    },
    Dense {
        width: usize,
        activation: String,
    },
    MaxPool {
        layout: LayoutEntry,
    },
    Output {
        width: usize,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum LayoutEntry {
    Builder(LayoutDescriptor),
    Explicit(ExplicitLayout),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplicitLayout {
    in_width: usize,
    patches: Vec<Vec<usize>>,
}

impl LayoutEntry {
    fn from_layout(layout: &PatchLayout) -> Self {
        match layout.origin() {
            Some(desc) => LayoutEntry::Builder(desc.clone()),
            None => LayoutEntry::Explicit(ExplicitLayout {
                in_width: layout.in_width(),
                patches: layout.patches().to_vec(),
            }),
        }
    }

    fn into_layout(self) -> Result<PatchLayout> {
        match self {
            LayoutEntry::Builder(desc) => desc.build(),
            LayoutEntry::Explicit(e) => PatchLayout::new(e.patches, e.in_width),
        }
    }
}

pub fn to_toml(spec: &NetworkSpec) -> String {
    let layers = spec
        .layers()
        .iter()
        .map(|layer| match layer {
            LayerSpec::Convolutional {
                layout,
                filters,
                activation,
            } => LayerEntry::Conv {
                filters: *filters,
                activation: activation.to_string(),
                layout: LayoutEntry::from_layout(layout),
            },
            LayerSpec::FullyConnected {
                out_width,
                activation,
            } => LayerEntry::Dense {
                width: *out_width,
                activation: activation.to_string(),
            },
            LayerSpec::MaxPool { layout } => LayerEntry::MaxPool {
                layout: LayoutEntry::from_layout(layout),
            },
            LayerSpec::Output { out_width } => LayerEntry::Output { width: *out_width },
        })
        .collect();
    let file = SpecFile {
        format: FORMAT_TAG.to_string(),
        input_width: spec.input_width(),
        layers,
    };
    toml::to_string(&file).expect("netspec serialization cannot fail")
}

pub fn from_toml(text: &str) -> Result<NetworkSpec> {
    let file: SpecFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format != FORMAT_TAG {
        return Err(Error::Parse(format!(
            "unsupported format `{}`, expected `{FORMAT_TAG}`",
            file.format
        )));
    }
    let layers = file
        .layers
        .into_iter()
        .map(|entry| {
            Ok(match entry {
                LayerEntry::Conv {
                    filters,
                    activation,
                    layout,
                } => LayerSpec::Convolutional {
                    layout: layout.into_layout()?,
                    filters,
                    activation: activation.parse::<ActivationKind>()?,
                },
                LayerEntry::Dense { width, activation } => LayerSpec::FullyConnected {
                    out_width: width,
                    activation: activation.parse()?,
                },
                LayerEntry::MaxPool { layout } => LayerSpec::MaxPool {
                    layout: layout.into_layout()?,
                },
                LayerEntry::Output { width } => LayerSpec::Output { out_width: width },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkSpec::new(file.input_width, layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_mixed_layouts() {
        let spec = NetworkSpec::new(
            5,
            vec![
                LayerSpec::conv(
                    PatchLayout::conv1d(5, 3, 1).unwrap(),
                    2,
                    ActivationKind::softplus(10.0),
                ),
                LayerSpec::max_pool(PatchLayout::new(vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![1, 4]], 6).unwrap()),
                LayerSpec::dense(3, ActivationKind::Relu),
                LayerSpec::output(1),
            ],
        )
        .unwrap();
        let text = to_toml(&spec);
        let back = from_toml(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(to_toml(&back), text);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_format() {
        let good = "format = \"convland-netspec/1\"\ninput_width = 2\n[[layers]]\ntype = \"output\"\nwidth = 1\n";
        assert!(from_toml(good).is_ok());
        let extra = good.replace("width = 1", "width = 1\ncolour = 3");
        assert!(from_toml(&extra).is_err());
        let wrong = good.replace("netspec/1", "netspec/9");
        assert!(from_toml(&wrong).is_err());
    }

    #[test]
    fn invalid_layout_is_rejected() {
        let text = "format = \"convland-netspec/1\"\ninput_width = 3\n\
            [[layers]]\ntype = \"conv\"\nfilters = 1\nactivation = \"relu\"\n\
            layout = { in_width = 3, patches = [[0, 1]] }\n\
            [[layers]]\ntype = \"output\"\nwidth = 1\n";
        assert!(matches!(from_toml(text), Err(Error::Structure(_))));
    }
}
