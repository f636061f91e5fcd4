//! Save a model, load it back and confirm the densities are bit-identical.

use sosflow::train;
use sosflow::{FlowModel, FlowShape, Standardizer};

fn main() -> sosflow::Result<()> {
    let shape = FlowShape {
        blocks: 3,
        k: 2,
        r: 2,
        hidden_sizes: vec![16],
        alternate_orderings: true,
    };
    let mut model = FlowModel::new(2, &shape, 11)?;
    model.perturb(0.05, 5);
    model.set_standardizer(Standardizer {
        mean: vec![1.0, -0.5],
        std: vec![2.0, 0.75],
    })?;

    let path = std::env::temp_dir().join("sosflow_example.sosf");
    train::save(&model, &path)?;
    let loaded = train::load(&path)?;
    println!("{} parameters written to {}", loaded.param_len(), path.display());

    for x in [[0.0, 0.0], [1.5, -2.0], [-1.0, 0.5]] {
        let (a, b) = (model.log_prob(&x)?, loaded.log_prob(&x)?);
        println!("log q({x:?}) = {a:.12} / reloaded {b:.12}, identical: {}", a.to_bits() == b.to_bits());
    }

    let mut bytes = std::fs::read(&path).map_err(|e| sosflow::Error::InvalidData(e.to_string()))?;
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    println!("flipping one payload bit: {}", train::load_bytes(&bytes).unwrap_err());
    Ok(())
}
