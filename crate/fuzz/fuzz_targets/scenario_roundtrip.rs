#![no_main]

use libfuzzer_sys::fuzz_target;
use siws::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(scenario) = Scenario::from_toml(text) else { return };
    let canonical = scenario.to_toml().expect("a parsed scenario serializes");
    let again = Scenario::from_toml(&canonical).expect("canonical form parses");
    assert_eq!(again.to_toml().unwrap(), canonical);
});
