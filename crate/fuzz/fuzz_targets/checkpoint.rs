#![no_main]

use hgdomain::neuralnet::ModelParams;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(params) = ModelParams::read_checkpoint(data, "fuzz") else {
        return;
    };
    let mut out = Vec::new();
    params.write_checkpoint(&mut out).unwrap();
    assert_eq!(ModelParams::read_checkpoint(out.as_slice(), "round trip").unwrap(), params);
});
