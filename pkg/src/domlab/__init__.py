"""domlab: stochastic domination, lattice-gas dilution and bounding-chain
coupling-from-the-past on finite graphs, with exact-enumeration oracles."""

__version__ = "0.1.0"
