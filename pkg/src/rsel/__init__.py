"""rsel: ranking-and-selection procedures over pluggable sampling oracles.

Fixed-precision procedures (Bechhofer, Rinott, Paulson, KN, FHN) deliver a
probability-of-correct-selection guarantee; fixed-budget procedures (OCBA,
EVI, KG) spend a given sampling budget; the parallel module runs APS and
the knockout tournament KT+ on a master/worker pool.  The harness module
verifies the guarantees by Monte Carlo.
"""

from .backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
