#![no_main]

use std::path::Path;

use caram::experiment::Experiment;
use libfuzzer_sys::fuzz_target;

// Parsing and validation must report problems, not panic.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(exp) = Experiment::from_toml_str(text, Path::new(".")) {
        let _ = exp.validate();
        let _ = exp.run_count();
    }
});
