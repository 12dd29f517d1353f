#![no_main]

use hgdomain::pipeline::{parse_config_text, PipelineConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_config_text(text, "fuzz");
    let mut cfg = PipelineConfig::default();
    if cfg.apply_text(text, "fuzz").is_ok() {
        let _ = cfg.validate();
    }
});
