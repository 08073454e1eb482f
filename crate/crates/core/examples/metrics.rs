//! Region similarity J, contour accuracy F and J&F for a slightly shifted prediction.

use std::collections::BTreeMap;

use tlg::metrics::{contour_accuracy, evaluate, region_similarity, Tolerance};
use tlg::BinaryMask;

fn main() -> tlg::Result<()> {
    let frames = 5;
    let gt: Vec<BinaryMask> = (0..frames)
        .map(|t| BinaryMask::rect(64, 64, 10 + 3 * t, 20, 16, 16))
        .collect::<tlg::Result<_>>()?;
    let shifted: Vec<BinaryMask> = gt.iter().map(|m| m.translate(1, 1)).collect();

    println!("J = {:.4}", region_similarity(&shifted, &gt)?);
    for tol in [Tolerance::Pixels(0), Tolerance::Auto, Tolerance::Pixels(2)] {
        println!(
            "F (tolerance {} px) = {:.4}",
            tol.pixels(64, 64),
            contour_accuracy(&shifted, &gt, tol)?
        );
    }

    let mut preds = BTreeMap::new();
    preds.insert("shifted".to_string(), shifted);
    preds.insert("perfect".to_string(), gt.clone());
    let mut truth = BTreeMap::new();
    truth.insert("shifted".to_string(), gt.clone());
    truth.insert("perfect".to_string(), gt);
    print!("{}", evaluate(&preds, &truth, Tolerance::Auto)?.to_table());
    Ok(())
}
