"""Desk-scale soft-finger perception stack on a synthetic kinematic simulator.

Everything is deterministic under an explicit seed: dataset generation,
weight initialization, augmentation, and training.
"""

SCHEMA_VERSION = 1
GENERATOR_VERSION = "0.1.0"

__version__ = "0.1.0"
