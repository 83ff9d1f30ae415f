#![no_main]

use libfuzzer_sys::fuzz_target;
use siws::scenario::Scenario;

// Parsing and validation must fail cleanly; a valid scenario must build its system and start state.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(scenario) = Scenario::from_toml(text) else { return };
    if let Ok(sys) = scenario.system() {
        let _ = scenario.initial_state(&sys);
    }
});
