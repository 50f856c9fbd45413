#![no_main]

use libfuzzer_sys::fuzz_target;
use retinode::train::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        let bytes = ckpt.to_bytes();
        let again = Checkpoint::from_bytes(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(again.to_bytes(), bytes);
        // a decoded checkpoint may still describe an inconsistent model; that must be an error, not a panic
        let _ = ckpt.model();
    }
});
