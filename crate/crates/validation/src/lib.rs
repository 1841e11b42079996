//! Acceptance checks for `fermi_echo`; see `tests/acceptance.rs`.
