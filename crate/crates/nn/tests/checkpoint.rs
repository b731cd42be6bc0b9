//! Checkpoint files reload bit-exactly.

use gti_nn::{checkpoint, Tensor};
use proptest::prelude::*;

fn tensor_strategy() -> impl Strategy<Value = (String, Tensor)> {
    (proptest::collection::vec(1usize..5, 0..4), "[a-z.]{1,12}").prop_flat_map(|(shape, name)| {
        let count: usize = shape.iter().product();
        proptest::collection::vec(-1e300f64..1e300, count)
            .prop_map(move |data| (name.clone(), Tensor::new(shape.clone(), data).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn save_then_load_is_identity(tensors in proptest::collection::vec(tensor_strategy(), 0..6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        checkpoint::save(&path, &tensors).unwrap();
        let back = checkpoint::load(&path).unwrap();
        prop_assert_eq!(back.len(), tensors.len());
        for ((n1, t1), (n2, t2)) in tensors.iter().zip(&back) {
            prop_assert_eq!(n1, n2);
            prop_assert_eq!(t1.shape(), t2.shape());
            let bits1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let bits2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits1, bits2);
        }
    }
}

#[test]
fn truncated_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let t = vec![("w".to_string(), Tensor::full(&[3, 3], 0.5))];
    checkpoint::save(&path, &t).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    assert!(checkpoint::load(&path).is_err());
}
