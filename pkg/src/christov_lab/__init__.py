"""Numerical laboratory for the quasilinear Cattaneo-Christov system.

Submodules
----------
seqlib
    Fibonacci-contraction sequences, exact checks and summability bounds.
grid
    Periodic spectral grids, Sobolev norms and field snapshots.
model
    Symbols of the Cattaneo-Christov system and their eigenstructure.
linsolve
    Frozen-coefficient linear solver with energy diagnostics.
quasisolve
    Fixed-point iteration for the quasilinear problem.
cli
    Command-line front end.

Submodules are imported on demand so that ``christov_lab.cli`` can cap
thread pools before numpy loads.
"""

__version__ = "0.1.0"
