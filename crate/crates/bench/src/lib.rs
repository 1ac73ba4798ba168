//! Benchmarks for the lattice, scheme and seminorm kernels; see `benches/`.
