#![no_main]

use libfuzzer_sys::fuzz_target;

// The first byte routes to a subcommand schema, the rest is the JSON
// config body. Parsing must reject garbage with Error::Schema, never
// panic. Seeds in corpus/fuzz_config/ carry that routing byte followed
// by a valid config for the corresponding command.
const COMMANDS: [&str; 6] = [
    "spectrum",
    "validity-map",
    "steady",
    "g2",
    "floquet",
    "gauge-scan",
];

fuzz_target!(|data: &[u8]| {
    let Some((&sel, body)) = data.split_first() else {
        return;
    };
    let _ = usqed::cli::check_config(COMMANDS[sel as usize % COMMANDS.len()], body);
});
