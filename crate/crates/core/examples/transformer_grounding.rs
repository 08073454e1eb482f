//! Grounds one synthetic scene with the similarity baseline and with the
//! attribute-matching Transformer, and prints the first layer's attention.

use tlg::grounding::{
    assemble_tokens, forward_with_attention, pooled_matrix, transformer_grounding, Grounder, GroundingModel,
    NaiveGrounder,
};
use tlg::synth::{attribute_features, generate_scene, Difficulty, SynthConfig};

fn main() -> tlg::Result<()> {
    let config = SynthConfig {
        difficulty: Difficulty::Hard,
        ..SynthConfig::default()
    };
    let scene = generate_scene(&config, 3, "demo")?;
    let (features, tokens) = attribute_features(&scene)?;
    println!(
        "expression: \"{}\"  (referent is object {})",
        scene.expression.text, scene.referent_index
    );

    let t = config.num_frames / 2;
    let masks: Vec<_> = (0..scene.objects.len())
        .map(|i| scene.objects[i].mask(config.width, config.height, t))
        .collect();
    let refs: Vec<_> = masks.iter().collect();
    let pooled = pooled_matrix(&features.frames[t], &refs)?;

    let model = GroundingModel::attribute_matcher(config.feature_dim, 2, 2, 32, config.attr_dims(), 10.0)?;
    let naive = NaiveGrounder.score_frame(&pooled, &tokens)?;
    let learned = transformer_grounding(&pooled, &tokens, &model)?;
    for (i, (n, l)) in naive.iter().zip(&learned).enumerate() {
        let obj = &scene.objects[i];
        println!(
            "object {i}: {:?} color {} motion {}  similarity {n:.3}  transformer {l:.3}",
            obj.shape,
            obj.color,
            obj.motion()
        );
    }

    let (_, maps) = forward_with_attention(&assemble_tokens(&pooled, &tokens, &model)?, &model)?;
    println!("layer 0, head 0 attention (rows: tracklets then words):");
    for row in maps[0][0].rows() {
        let cells: Vec<String> = row.iter().map(|a| format!("{a:.2}")).collect();
        println!("  {}", cells.join(" "));
    }
    Ok(())
}
