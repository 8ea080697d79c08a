fn main() {
    std::fs::create_dir_all("scenarios").unwrap();
    std::fs::write(
        "scenarios/dover.toml",
        corridor_sim::fixtures::default_dover_scenario().to_canonical_string(),
    )
    .unwrap();
    std::fs::write(
        "scenarios/validation.toml",
        corridor_sim::fixtures::validation_scenario().to_canonical_string(),
    )
    .unwrap();
    println!("wrote scenarios/");
}
