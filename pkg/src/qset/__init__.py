"""Modeling and analysis toolkit for single-electron transistor noise studies.

Subpackages cover device electrostatics and sequential tunneling
(:mod:`qset.device`), two-level fluctuator statistics and thermometry
(:mod:`qset.tlf`), electron and substrate thermal balance
(:mod:`qset.thermal`, :mod:`qset.substrate`), synthetic current-trace
generation (:mod:`qset.synth`), and trace analysis from baseline removal
to spectral fits (:mod:`qset.analysis`).  The ``qset`` command line wraps
the common workflows.
"""

__version__ = "0.1.0"
