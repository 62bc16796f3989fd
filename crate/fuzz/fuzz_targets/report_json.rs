#![no_main]

use caram::metrics::SimReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(report) = serde_json::from_slice::<SimReport>(data) {
        let text = serde_json::to_vec(&report).expect("report serializes");
        let again: SimReport = serde_json::from_slice(&text).expect("own output parses");
        assert_eq!(report, again);
    }
});
