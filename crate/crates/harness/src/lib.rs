//! Experiment harness library (CLI plumbing lives in the binary).
