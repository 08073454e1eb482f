//! Key-frame sampling and mask propagation into candidate tracklets.

use tlg::propagation::{
    build_candidate_set, sample_key_frames, OracleNoise, OracleObject, Proposal, ProposalSet, StaticPropagator,
    SyntheticOraclePropagator,
};
use tlg::{BinaryMask, TrackletId};

fn main() -> tlg::Result<()> {
    let (w, h, frames) = (40, 20, 12);
    for k in [1, 3, 7] {
        println!("K={k}: key frames {:?}", sample_key_frames(frames, k)?.indices);
    }

    // one object moving right by two pixels per frame
    let velocity = (2, 0);
    let truth: Vec<BinaryMask> = (0..frames)
        .map(|t| BinaryMask::rect(w, h, 2 + 2 * t, 6, 5, 5))
        .collect::<tlg::Result<_>>()?;
    let plan = sample_key_frames(frames, 3)?;
    let proposals = ProposalSet {
        video_id: "demo".into(),
        width: w,
        height: h,
        num_frames: frames,
        proposals: plan
            .indices
            .iter()
            .enumerate()
            .map(|(i, &t)| Proposal {
                id: TrackletId(i as u64),
                key_frame: t,
                source_model: "demo".into(),
                confidence: 0.9,
                mask: truth[t].clone(),
            })
            .collect(),
    };

    let noisy = SyntheticOraclePropagator::per_object(
        vec![OracleObject {
            velocity,
            masks: truth.clone(),
        }],
        OracleNoise {
            flip_prob: 0.3,
            decay: 0.9,
        },
        7,
    );
    for (name, set) in [
        ("static", build_candidate_set(&plan, &proposals, &StaticPropagator)?),
        (
            "oracle",
            build_candidate_set(&plan, &proposals, &SyntheticOraclePropagator::uniform(velocity))?,
        ),
        ("noisy oracle", build_candidate_set(&plan, &proposals, &noisy)?),
    ] {
        println!("{name}:");
        for tr in &set.tracklets {
            let ious: Vec<String> = tr
                .masks
                .iter()
                .zip(&truth)
                .map(|(m, g)| format!("{:.2}", m.iou(g).unwrap()))
                .collect();
            println!(
                "  from frame {:>2}: score {:.3}, IoU per frame {}",
                tr.source_frame,
                tr.score(),
                ious.join(" ")
            );
        }
    }
    Ok(())
}
