#![no_main]

use hypch::config::{parse_config, parse_with_overrides};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        // the echo must parse back to the same configuration
        let echo = cfg.echo();
        let again = parse_config(&echo).expect("echo parses");
        assert_eq!(again.echo(), echo);
    }
    // first line as the file, the rest as command-line overrides
    let (file, rest) = text.split_once('\n').unwrap_or((text, ""));
    let overrides: Vec<&str> = rest.lines().collect();
    let _ = parse_with_overrides(file, &overrides);
});
