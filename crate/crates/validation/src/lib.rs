//! Holds the `acceptance` test target. It runs the full experiment grid, so
//! it lives in its own package and is tested after the others.
