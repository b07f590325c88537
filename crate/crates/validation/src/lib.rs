//! Acceptance criteria for epmix live in `tests/acceptance.rs`.
