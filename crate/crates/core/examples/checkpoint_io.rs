//! Writes and reloads TLG1 tensors and TLGW checkpoints.

use tlg::grounding::{GroundingModel, Preset};
use tlg::tensor_io::{Checkpoint, Tensor};

fn main() -> tlg::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");

    let tensor = Tensor::new(vec![2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0])?;
    let path = dir.path().join("t.tlg1");
    tensor.write(&path)?;
    let bytes = std::fs::read(&path).expect("tensor file");
    println!("TLG1 [2, 3]: {} bytes, header {:02x?}", bytes.len(), &bytes[..16]);
    assert_eq!(Tensor::read(&path)?, tensor);

    let config = Preset::Desk.config();
    let model = GroundingModel::random(config, 42)?;
    let path = dir.path().join("desk.tlgw");
    model.save(&path)?;
    let ck = Checkpoint::read(&path)?;
    println!("TLGW desk checkpoint: {} tensors", ck.tensors.len());
    for (name, t) in ck.tensors.iter().take(4).chain(ck.tensors.iter().rev().take(2)) {
        println!("  {name:<14} {:?}", t.dims);
    }
    let reloaded = GroundingModel::load(&path, config.heads)?;
    assert_eq!(reloaded, model);
    println!("reloaded model is identical");

    let paper = Preset::Paper.config();
    println!(
        "paper preset: D={} layers={} heads={} FFN={}",
        paper.dim, paper.layers, paper.heads, paper.ffn_dim
    );
    Ok(())
}
