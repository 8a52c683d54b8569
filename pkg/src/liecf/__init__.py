"""Low-storage commutator-free Lie group integrators."""
