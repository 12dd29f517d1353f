#![no_main]

use hgdomain::dataio::SpatialCoords;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = SpatialCoords::from_reader(data, "fuzz") {
        assert_eq!(c.positions().nrows(), c.spot_ids().len());
    }
});
