//! Scenario files bundled with the crate.

use super::config::{ConfigInvalid, ScenarioConfig};

pub const BUNDLED: &[(&str, &str)] = &[
    (
        "tccpr-demo",
        include_str!("../../scenarios/tccpr-demo.json"),
    ),
    ("honest", include_str!("../../scenarios/honest.json")),
    (
        "fault-bypass",
        include_str!("../../scenarios/fault-bypass.json"),
    ),
    (
        "enforcement",
        include_str!("../../scenarios/enforcement.json"),
    ),
    (
        "worked-example",
        include_str!("../../scenarios/worked-example.json"),
    ),
];

pub fn bundled(name: &str) -> Option<Result<ScenarioConfig, ConfigInvalid>> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ScenarioConfig::from_json(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_validate() {
        for (name, _) in BUNDLED {
            bundled(name)
                .unwrap()
                .unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
