use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sat_core::data::{
    gen_three_moon, gen_three_moon_with_noise, load_csv, load_mnist_idx, load_mnist_pairs, read_csv, sample_training,
    write_csv, LabelColumn, LabeledDataset, SamplingPlan,
};
use sat_core::{Error, PointCloud};

#[test]
fn noise_free_arcs_satisfy_their_circle_equations() {
    let ds = gen_three_moon_with_noise(4, 0.0).unwrap();
    let arcs = [((0.0, 0.0), 1.0, true), ((3.0, 0.0), 1.0, true), ((1.5, 0.4), 1.5, false)];
    for (p, &l) in ds.cloud.points().zip(&ds.labels) {
        let ((cx, cy), r, upper) = arcs[l];
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        assert!((dx * dx + dy * dy - r * r).abs() <= 1e-12);
        if upper {
            assert!(p[1] >= cy - 1e-12);
        } else {
            assert!(p[1] <= cy + 1e-12);
        }
        assert!(p[2..].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn padding_dimensions_have_the_noise_variance() {
    let ds = gen_three_moon(8);
    let n = ds.len() as f64;
    for d in 2..100 {
        let mean = ds.cloud.points().map(|p| p[d]).sum::<f64>() / n;
        let var = ds.cloud.points().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.0196).abs() <= 0.15 * 0.0196, "dimension {d}: variance {var}");
    }
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let ds = gen_three_moon(2);
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().count(), 1500);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 101);
    let back = read_csv(&buf[..], LabelColumn::Last, "tm").unwrap();
    assert_eq!(back.dataset.cloud, ds.cloud);
    assert_eq!(back.dataset.labels, ds.labels);
}

#[test]
fn csv_round_trip_of_awkward_values() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<f64> = (0..60)
        .map(|i| match i % 4 {
            0 => r.random::<f64>() * 1e-300,
            1 => -r.random::<f64>() * 1e300,
            2 => 0.1 + r.random::<f64>(),
            _ => f64::from(r.random_range(-5..5)),
        })
        .collect();
    let labels = (0..20).map(|i| i % 3).collect();
    let ds = LabeledDataset::new(PointCloud::new(data, 3).unwrap(), labels, 3, "x").unwrap();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    write_csv(&ds, file.as_file_mut()).unwrap();
    let back = load_csv(file.path(), LabelColumn::Last).unwrap();
    assert_eq!(back.dataset.cloud.as_slice(), ds.cloud.as_slice());
}

#[test]
fn csv_errors_report_positions() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "a,b,c\n1,2,0\n3,4,1\n5,,1\n").unwrap();
    match load_csv(f.path(), LabelColumn::Last) {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (4, Some(2))),
        other => panic!("unexpected {other:?}"),
    }
}

fn idx_images(count: u32, rows: u32, cols: u32, fill: impl Fn(usize) -> u8) -> Vec<u8> {
    let mut v = Vec::new();
    for x in [0x0803u32, count, rows, cols] {
        v.extend(x.to_be_bytes());
    }
    v.extend((0..(count * rows * cols) as usize).map(fill));
    v
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut v = Vec::new();
    v.extend(0x0801u32.to_be_bytes());
    v.extend((labels.len() as u32).to_be_bytes());
    v.extend(labels);
    v
}

fn temp_with(bytes: &[u8]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(bytes).unwrap();
    f
}

#[test]
fn idx_pairs_concatenate_and_scale() {
    let img_a = temp_with(&idx_images(3, 28, 28, |i| (i % 256) as u8));
    let lab_a = temp_with(&idx_labels(&[0, 1, 2]));
    let img_b = temp_with(&idx_images(2, 28, 28, |_| 255));
    let lab_b = temp_with(&idx_labels(&[2, 0]));
    let ds = load_mnist_pairs(&[(img_a.path(), lab_a.path()), (img_b.path(), lab_b.path())]).unwrap();
    assert_eq!(ds.len(), 5);
    assert_eq!(ds.cloud.dim(), 784);
    assert_eq!(ds.labels, vec![0, 1, 2, 2, 0]);
    assert_eq!(ds.cloud.point(0)[255], 1.0);
    assert_eq!(ds.cloud.point(0)[1], 1.0 / 255.0);
    assert!(ds.cloud.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn idx_rejects_bad_files() {
    let img = temp_with(&idx_images(3, 2, 2, |_| 0));
    let short = temp_with(&idx_labels(&[0, 1]));
    assert!(matches!(load_mnist_idx(img.path(), short.path()), Err(Error::Format(_))));
    let swapped = load_mnist_idx(short.path(), img.path());
    assert!(matches!(swapped, Err(Error::Format(_))));
    let bytes = idx_images(3, 2, 2, |_| 0);
    let truncated = temp_with(&bytes[..bytes.len() - 1]);
    let labels = temp_with(&idx_labels(&[0, 1, 1]));
    assert!(matches!(load_mnist_idx(truncated.path(), labels.path()), Err(Error::Format(_))));
}

#[test]
fn sampling_plans_on_three_moon() {
    let ds = gen_three_moon(0);
    let uniform = SamplingPlan::Uniform { total: 75, seed: 3 };
    let split = sample_training(&ds, &uniform).unwrap();
    assert_eq!(split.num_train(), 75);
    for c in 0..3 {
        assert!(split.train_labels().contains(&c));
    }
    assert_eq!(split, sample_training(&ds, &uniform).unwrap());
    assert_ne!(split, sample_training(&ds, &uniform.with_seed(4)).unwrap());

    let skewed = SamplingPlan::PerClass { counts: vec![5, 65, 5], seed: 1 };
    let split = sample_training(&ds, &skewed).unwrap();
    let mut counts = [0; 3];
    for &l in split.train_labels() {
        counts[l] += 1;
    }
    assert_eq!(counts, [5, 65, 5]);

    let too_many = SamplingPlan::PerClass { counts: vec![501, 1, 1], seed: 1 };
    assert!(matches!(sample_training(&ds, &too_many), Err(Error::InvalidInput(_))));
}
