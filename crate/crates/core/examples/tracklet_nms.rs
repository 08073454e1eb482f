//! Tracklet IoU and greedy tracklet NMS on a handful of hand-made tracklets.

use tlg::tracklet::{tracklet_iou, tracklet_nms};
use tlg::{BinaryMask, Tracklet, TrackletId, TrackletSet};

fn moving_box(id: u64, x0: usize, confidence: f64, frames: usize) -> tlg::Result<Tracklet> {
    let masks = (0..frames)
        .map(|t| BinaryMask::rect(32, 16, x0 + t, 4, 6, 6))
        .collect::<tlg::Result<Vec<_>>>()?;
    let mut prop_prob = vec![0.9; frames];
    prop_prob[0] = 1.0;
    Ok(Tracklet {
        id: TrackletId(id),
        source_frame: 0,
        source_model: "demo".into(),
        confidence,
        prop_prob,
        masks,
    })
}

fn main() -> tlg::Result<()> {
    let frames = 4;
    let tracklets = vec![
        moving_box(0, 2, 0.8, frames)?,
        moving_box(1, 3, 0.9, frames)?, // near duplicate of 0
        moving_box(2, 18, 0.6, frames)?,
        moving_box(3, 19, 0.5, frames)?, // near duplicate of 2
    ];
    for a in &tracklets {
        let ious: Vec<String> = tracklets
            .iter()
            .map(|b| format!("{:.3}", tracklet_iou(a, b).unwrap()))
            .collect();
        println!(
            "tracklet {} score {:.3}  IoU row [{}]",
            a.id,
            a.score(),
            ious.join(", ")
        );
    }
    let set = TrackletSet::new("demo", 32, 16, frames, tracklets)?;
    for threshold in [0.5, 0.9] {
        let kept = tracklet_nms(&set, threshold, 10)?;
        let ids: Vec<String> = kept.tracklets.iter().map(|t| t.id.to_string()).collect();
        println!("threshold {threshold}: kept [{}]", ids.join(", "));
    }
    Ok(())
}
