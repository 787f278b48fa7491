#![no_main]

use libfuzzer_sys::fuzz_target;
use ncnum::harness::{network_to_toml, parse_network};
use ncnum::net::Network;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = parse_network(text) else {
        return;
    };
    // compare text, so NaN capacities still count as equal
    let text = network_to_toml(&spec);
    let again = parse_network(&text).expect("written network parses");
    assert_eq!(network_to_toml(&again), text);
    if let Ok(net) = Network::build(spec) {
        for f in 0..net.flow_count() {
            if net.path_count(f) <= 1024 {
                assert_eq!(net.paths(f).len() as u64, net.path_count(f));
            }
        }
    }
});
