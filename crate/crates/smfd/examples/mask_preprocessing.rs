//! Label merging, one-hot encoding, and full pair preparation on a
//! synthetic 19-class face mask.

use smfd::maskops::{
    merge_labels, one_hot, prepare_pair_sized, raw_labels, LabelMask, LabelSpace, MergeTable,
};
use smfd::tensor::Tensor;

fn main() {
    // A crude face layout in raw CelebAMask-HQ labels.
    let size = 64usize;
    let labels: Vec<u8> = (0..size * size)
        .map(|p| {
            let (y, x) = (p / size, p % size);
            if y < 12 {
                raw_labels::HAIR
            } else if (16..24).contains(&y) && ((18..26).contains(&x) || (38..46).contains(&x)) {
                raw_labels::LEFT_EYE
            } else if (30..38).contains(&y) && (28..36).contains(&x) {
                raw_labels::NOSE
            } else if (44..50).contains(&y) && (24..40).contains(&x) {
                raw_labels::MOUTH
            } else if y >= 58 {
                raw_labels::CLOTH
            } else if (12..58).contains(&y) && (10..54).contains(&x) {
                raw_labels::SKIN
            } else {
                raw_labels::BACKGROUND
            }
        })
        .collect();
    let raw = LabelMask::new(size, size, labels, LabelSpace::Raw19).unwrap();

    let table = MergeTable::default();
    println!("merge table:\n{}", table.to_json());

    let merged = merge_labels(&raw, &table).unwrap();
    println!("raw labels used:    {:?}", raw.distinct_labels());
    println!("merged labels used: {:?}", merged.distinct_labels());

    let hot = one_hot(&merged, 5).unwrap();
    println!("one-hot shape: {:?}", hot.shape());

    // Full pair preparation at a reduced size.
    let image = Tensor::from_fn(&[size, size, 3], |i| ((i * 11) % 256) as f32);
    let pair = prepare_pair_sized(&image, &image, &raw, &table, 32).unwrap();
    println!(
        "pair: sharp {:?}, gray {:?}, one-hot {:?}",
        pair.sharp.shape(),
        pair.blurry_gray.shape(),
        pair.mask_onehot.shape()
    );
    let max = pair.sharp.data().iter().fold(0.0f32, |a, &b| a.max(b));
    println!("normalized range check: max value {max:.4} (must be <= 1)");
}
