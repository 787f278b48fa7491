#![no_main]

use libfuzzer_sys::fuzz_target;
use ncnum::harness::TraceFile;

fuzz_target!(|data: &[u8]| {
    if let Ok(trace) = TraceFile::read(data) {
        let text = trace.to_csv_string();
        let again = TraceFile::read(text.as_bytes()).expect("written trace reads back");
        assert_eq!(again, trace);
    }
});
