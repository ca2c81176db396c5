//! Shared fixtures for the benchmarks.

use dmpc_core::{benchmark_system, synthesize, DistributedSystem, OfflineOptions, TerminalIngredients};

/// The two-subsystem benchmark with its synthesized ingredients.
pub fn benchmark_fixture() -> (DistributedSystem, TerminalIngredients) {
    let system = benchmark_system();
    let ingredients = synthesize(&system, &OfflineOptions::default())
        .expect("benchmark synthesis succeeds")
        .ingredients;
    (system, ingredients)
}
