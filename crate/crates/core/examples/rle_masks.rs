//! Run-length encoded masks: construction, set algebra, JSON form, boundaries.

use tlg::BinaryMask;

fn show(m: &BinaryMask) {
    for y in 0..m.height() {
        let row: String = (0..m.width()).map(|x| if m.get(x, y) { '#' } else { '.' }).collect();
        println!("  {row}");
    }
}

fn main() -> tlg::Result<()> {
    let a = BinaryMask::rect(12, 6, 1, 1, 6, 4)?;
    let b = BinaryMask::rect(12, 6, 4, 2, 6, 3)?;
    println!("a: area {}, runs {:?}", a.area(), a.runs());
    show(&a);
    println!("b: area {}", b.area());
    show(&b);

    let (inter, union) = a.overlap(&b)?;
    println!("intersection {inter}, union {union}, IoU {:.4}", a.iou(&b)?);
    println!("a \\ b:");
    show(&a.difference(&b)?);

    println!("boundary of a:");
    show(&a.boundary());
    println!("a dilated by 1:");
    show(&a.dilate(1));

    let json = serde_json::to_string(&a).expect("mask serializes");
    println!("json: {json}");
    let back: BinaryMask = serde_json::from_str(&json).expect("mask parses");
    assert_eq!(back, a);

    let grid = a.downsample_to_grid(3, 3)?;
    println!("coverage on a 3x3 grid:");
    for cy in 0..3 {
        let row: Vec<String> = (0..3).map(|cx| format!("{:.2}", grid.get(cx, cy))).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
