"""Coherent-state quantum computing toolkit.

Fock-space verification of linear-optics qubit circuits built on the
|alpha>, |-alpha> basis, plus a Pauli-frame Monte Carlo engine for
fault-tolerance thresholds under located/unlocated noise.
"""

__version__ = "0.1.0"
