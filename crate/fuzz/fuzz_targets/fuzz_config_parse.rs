#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // parsing must never panic; a well-formed config must also survive
    // spec construction without panicking
    if let Ok(config) = mvpois::cli::parse_config(text) {
        let _ = config.to_spec();
    }
});
