#![no_main]

use hgdomain::features::Image;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = Image::from_png_bytes(data);
});
