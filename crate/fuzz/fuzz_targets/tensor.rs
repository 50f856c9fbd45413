#![no_main]

use libfuzzer_sys::fuzz_target;
use retinode::tensor::Tensor;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Tensor::from_bytes(data) {
        assert_eq!(t.to_bytes(), data);
    }
});
