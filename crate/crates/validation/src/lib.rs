//! Holds the `acceptance` test target, which prints one PASS/FAIL line per
//! acceptance criterion and exits non-zero if any fails.
