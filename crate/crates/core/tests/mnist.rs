//! IDX loading against the real MNIST files, skipped when they are absent.

mod common;

use common::mnist_dir;
use sparse_ia::sim::{load_mnist_dir, Split};

#[test]
fn standard_files_have_the_expected_shape() {
    let Some(dir) = mnist_dir() else {
        eprintln!("MNIST files not found, skipping");
        return;
    };
    let train = load_mnist_dir(&dir, Split::Train).unwrap();
    let test = load_mnist_dir(&dir, Split::Test).unwrap();
    assert_eq!((train.len(), train.features(), train.classes()), (60000, 784, 10));
    assert_eq!(test.len(), 10000);
    let pixels = (0..100).flat_map(|i| train.row(i).iter().copied());
    assert!(pixels.clone().all(|x| (0.0..=1.0).contains(&x)));
    assert!(pixels.clone().any(|x| x == 1.0));
    let mut counts = [0usize; 10];
    for &l in train.labels() {
        counts[l as usize] += 1;
    }
    assert!(counts.iter().all(|&c| c > 5000));
}
