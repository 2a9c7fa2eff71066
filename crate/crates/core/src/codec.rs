//! Mapping from 20-bit genotypes to network specifications.
//!
//! Each field occupies a fixed slice of the genotype. The slice is read as an
//! unsigned integer, most significant bit first, and used as an index into
//! the field's value list:
//!
//! | field              | offset | width | values                          |
//! |--------------------|--------|-------|---------------------------------|
//! | num_modules        | 0      | 2     | 1, 2, 4, 8                      |
//! | layers_per_module  | 2      | 2     | 1, 2, 4, 8                      |
//! | filters            | 4      | 2     | 8, 12, 16, 24                   |
//! | pool_size          | 6      | 2     | 1, 2, 3, 4                      |
//! | highway_activation | 8      | 2     | ELU, ReLU, PReLU, Softsign      |
//! | dense_activation   | 10     | 2     | ELU, ReLU, PReLU, Softsign      |
//! | dense1_units       | 12     | 2     | 32, 64, 128, 256                |
//! | dense2_units       | 14     | 2     | 32, 64, 128, 256                |
//! | learning_rate      | 16     | 4     | 10^(-4 + i/5), i = 0..15        |
//!
//! Every bit pattern decodes, so the search space has no lethal points.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::genotype::Genotype;
use crate::nn::Activation;

pub const GENOTYPE_BITS: usize = 20;

pub const MODULE_COUNTS: [usize; 4] = [1, 2, 4, 8];
pub const LAYER_COUNTS: [usize; 4] = [1, 2, 4, 8];
pub const FILTER_COUNTS: [usize; 4] = [8, 12, 16, 24];
pub const POOL_SIZES: [usize; 4] = [1, 2, 3, 4];
pub const ACTIVATIONS: [Activation; 4] = [
    Activation::Elu,
    Activation::Relu,
    Activation::Prelu,
    Activation::Softsign,
];
pub const DENSE_UNITS: [usize; 4] = [32, 64, 128, 256];
pub const LEARNING_RATES: [f64; 16] = [
    0.0001,
    0.00015848931924611142,
    0.00025118864315095795,
    0.00039810717055349735,
    0.000630957344480193,
    0.001,
    0.001584893192461114,
    0.0025118864315095794,
    0.003981071705534973,
    0.00630957344480193,
    0.01,
    0.01584893192461114,
    0.025118864315095794,
    0.039810717055349734,
    0.0630957344480193,
    0.1,
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("genotype has {found} bits, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("value {value} of field {field} is not in its value list")]
    NotEncodable { field: &'static str, value: String },
}

/// Decoded network architecture and learning rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub num_modules: usize,
    pub layers_per_module: usize,
    pub filters: usize,
    pub pool_size: usize,
    pub highway_activation: Activation,
    pub dense_activation: Activation,
    pub dense1_units: usize,
    pub dense2_units: usize,
    pub learning_rate: f64,
}

/// One field of the genotype layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldLayout {
    pub name: String,
    pub offset: usize,
    pub width: usize,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenotypeLayout {
    pub total_bits: usize,
    pub fields: Vec<FieldLayout>,
}

impl GenotypeLayout {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }
}

const FIELDS: [(&str, usize); 9] = [
    ("num_modules", 2),
    ("layers_per_module", 2),
    ("filters", 2),
    ("pool_size", 2),
    ("highway_activation", 2),
    ("dense_activation", 2),
    ("dense1_units", 2),
    ("dense2_units", 2),
    ("learning_rate", 4),
];

fn field_values(name: &str) -> Vec<Value> {
    match name {
        "num_modules" => MODULE_COUNTS.iter().map(|v| json!(v)).collect(),
        "layers_per_module" => LAYER_COUNTS.iter().map(|v| json!(v)).collect(),
        "filters" => FILTER_COUNTS.iter().map(|v| json!(v)).collect(),
        "pool_size" => POOL_SIZES.iter().map(|v| json!(v)).collect(),
        "highway_activation" | "dense_activation" => {
            ACTIVATIONS.iter().map(|a| json!(a.name())).collect()
        }
        "dense1_units" | "dense2_units" => DENSE_UNITS.iter().map(|v| json!(v)).collect(),
        "learning_rate" => LEARNING_RATES.iter().map(|v| json!(v)).collect(),
        _ => unreachable!("unknown field {name}"),
    }
}

pub fn describe_layout() -> GenotypeLayout {
    let mut offset = 0;
    let fields = FIELDS
        .iter()
        .map(|&(name, width)| {
            let field = FieldLayout {
                name: name.to_string(),
                offset,
                width,
                values: field_values(name),
            };
            offset += width;
            field
        })
        .collect();
    GenotypeLayout {
        total_bits: offset,
        fields,
    }
}

/// Number of distinct genotypes, `2^20`.
pub fn search_space_size() -> u64 {
    1u64 << GENOTYPE_BITS
}

pub fn decode(genotype: &Genotype) -> Result<NetworkSpec, CodecError> {
    if genotype.len() != GENOTYPE_BITS {
        return Err(CodecError::Length {
            expected: GENOTYPE_BITS,
            found: genotype.len(),
        });
    }
    let idx = |i: usize| genotype.read_uint(2 * i, 2);
    Ok(NetworkSpec {
        num_modules: MODULE_COUNTS[idx(0)],
        layers_per_module: LAYER_COUNTS[idx(1)],
        filters: FILTER_COUNTS[idx(2)],
        pool_size: POOL_SIZES[idx(3)],
        highway_activation: ACTIVATIONS[idx(4)],
        dense_activation: ACTIVATIONS[idx(5)],
        dense1_units: DENSE_UNITS[idx(6)],
        dense2_units: DENSE_UNITS[idx(7)],
        learning_rate: LEARNING_RATES[genotype.read_uint(16, 4)],
    })
}

fn position<T: PartialEq + std::fmt::Debug>(
    field: &'static str,
    list: &[T],
    value: &T,
) -> Result<usize, CodecError> {
    list.iter()
        .position(|v| v == value)
        .ok_or_else(|| CodecError::NotEncodable {
            field,
            value: format!("{value:?}"),
        })
}

/// Inverse of [`decode`] for specs whose every field lies in its list.
pub fn encode(spec: &NetworkSpec) -> Result<Genotype, CodecError> {
    let indices = [
        position("num_modules", &MODULE_COUNTS, &spec.num_modules)?,
        position("layers_per_module", &LAYER_COUNTS, &spec.layers_per_module)?,
        position("filters", &FILTER_COUNTS, &spec.filters)?,
        position("pool_size", &POOL_SIZES, &spec.pool_size)?,
        position("highway_activation", &ACTIVATIONS, &spec.highway_activation)?,
        position("dense_activation", &ACTIVATIONS, &spec.dense_activation)?,
        position("dense1_units", &DENSE_UNITS, &spec.dense1_units)?,
        position("dense2_units", &DENSE_UNITS, &spec.dense2_units)?,
    ];
    let lr = position("learning_rate", &LEARNING_RATES, &spec.learning_rate)?;
    let value = indices
        .iter()
        .fold(0u64, |acc, &i| (acc << 2) | i as u64);
    Ok(Genotype::from_u64((value << 4) | lr as u64, GENOTYPE_BITS))
}
