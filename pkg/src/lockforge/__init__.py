"""Synthesis toolchain for fine-grained locking over linked data structures.

Declarative knowledge about a sequential structure (shape rules, invariants,
operation preconditions and atomic steps) is analyzed for step ordering, lock
placement, adequacy under interference, and key movement; the verdict drives
C++ code emission into annotated templates and concurrent simulation.
"""

__version__ = "0.1.0"
