#![no_main]

use caram::trace::{decode_native, encode_native};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(trace) = decode_native(data) {
        let again = decode_native(&encode_native(&trace)).expect("re-encoded trace decodes");
        assert_eq!(trace, again);
    }
});
