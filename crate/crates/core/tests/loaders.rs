use divnet::dataio::{parse_amat, parse_cifar10, parse_idx, to_amat, to_idx, Dataset, CIFAR10_RECORD};
use divnet::dpp::import_kernel;
use divnet::harness::config::ExperimentSpec;
use divnet::mlp::{decode_model, encode_model, NetworkParams, SavedModel};
use divnet::prune::PruneDecision;
use divnet::Matrix;
use proptest::prelude::*;

fn tiny() -> Dataset {
    Dataset::new(
        "tiny",
        Matrix::from_fn(3, 4, |i, j| ((i * 4 + j) % 5) as f64 / 4.0),
        vec![0, 2, 1],
        3,
    )
    .unwrap()
}

#[test]
fn idx_and_amat_round_trip() {
    let d = tiny();
    let (images, labels) = to_idx(&d);
    let back = parse_idx(&images, &labels, 3).unwrap();
    assert_eq!(back.labels, d.labels);
    assert!(back.inputs.sub(&d.inputs).max_abs() <= 0.5 / 255.0);
    let amat = parse_amat(&to_amat(&d), 4).unwrap();
    assert_eq!(amat.labels, d.labels);
    assert_eq!(amat.inputs, d.inputs);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn truncated_idx_is_rejected(cut_images in 0usize..28, cut_labels in 0usize..11) {
        let (images, labels) = to_idx(&tiny());
        let short_images = &images[..cut_images.min(images.len() - 1)];
        prop_assert!(parse_idx(short_images, &labels, 3).is_err());
        let short_labels = &labels[..cut_labels.min(labels.len() - 1)];
        prop_assert!(parse_idx(&images, short_labels, 3).is_err());
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = parse_idx(&bytes, &bytes, 10);
        let _ = parse_cifar10(&bytes);
        let _ = decode_model(&bytes);
        if let Ok(text) = std::str::from_utf8(&bytes) {
            let _ = parse_amat(text, 4);
            let _ = import_kernel(text);
            let _ = ExperimentSpec::from_toml(text);
            let _ = PruneDecision::from_json(text);
        }
    }

    #[test]
    fn truncated_model_is_rejected(cut in 0usize..200) {
        let net = NetworkParams::init(&[3, 4, 2], 1).unwrap();
        let bytes = encode_model(&SavedModel::bare(net));
        prop_assume!(cut < bytes.len());
        prop_assert!(decode_model(&bytes[..cut]).is_err());
    }

    #[test]
    fn partial_cifar_record_is_rejected(extra in 1usize..CIFAR10_RECORD) {
        let mut bytes = vec![0u8; CIFAR10_RECORD + extra];
        bytes[0] = 3;
        prop_assert!(parse_cifar10(&bytes).is_err());
    }
}

#[test]
fn cifar_labels_are_range_checked() {
    let mut bytes = vec![0u8; CIFAR10_RECORD];
    bytes[0] = 10;
    assert!(parse_cifar10(&bytes).is_err());
    bytes[0] = 9;
    bytes[1] = 255;
    let d = parse_cifar10(&bytes).unwrap();
    assert_eq!(d.labels, vec![9]);
    assert_eq!(d.inputs[(0, 0)], 1.0);
}

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn fuzz_seeds_are_valid_inputs() {
    for s in seeds("parse_idx") {
        let rest = &s[1..];
        let at = (s[0] as usize * rest.len()) / 255;
        let (images, labels) = rest.split_at(at);
        parse_idx(images, labels, 10).unwrap();
    }
    for s in seeds("parse_amat") {
        parse_amat(text(&s), 4).unwrap();
    }
    for s in seeds("parse_cifar10") {
        parse_cifar10(&s).unwrap();
    }
    for s in seeds("inflate_gzip") {
        divnet::dataio::inflate_if_gzip(s).unwrap();
    }
    for s in seeds("decode_model") {
        decode_model(&s).unwrap();
    }
    for s in seeds("import_kernel") {
        import_kernel(text(&s)).unwrap();
    }
    for s in seeds("parse_config") {
        ExperimentSpec::from_toml(text(&s)).unwrap();
    }
    for s in seeds("parse_decision") {
        PruneDecision::from_json(text(&s)).unwrap();
    }
}
