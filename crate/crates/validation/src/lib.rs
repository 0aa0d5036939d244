//! Acceptance suite for `envlang-core`; see `tests/acceptance.rs`.
