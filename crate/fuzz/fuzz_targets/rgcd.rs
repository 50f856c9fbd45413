#![no_main]

use libfuzzer_sys::fuzz_target;
use retinode::data::RecordingSet;

fuzz_target!(|data: &[u8]| {
    if let Ok(rec) = RecordingSet::from_bytes(data) {
        let bytes = rec.to_bytes();
        let again = RecordingSet::from_bytes(&bytes).expect("re-encoded recording decodes");
        assert_eq!(again.to_bytes(), bytes);
    }
});
