#![no_main]

use caram::dedup::{decode_snapshot, encode_snapshot};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((engine, cursor)) = decode_snapshot(data) {
        engine.check_invariants().expect("decoder only accepts consistent tables");
        let (again, c2) = decode_snapshot(&encode_snapshot(&engine, cursor)).expect("round trip");
        assert_eq!(cursor, c2);
        assert_eq!(engine.amt_sorted(), again.amt_sorted());
        assert_eq!(engine.lfi_sorted(), again.lfi_sorted());
    }
});
