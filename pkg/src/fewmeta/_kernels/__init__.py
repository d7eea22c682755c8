"""Numerical kernels with a compiled backend and a pure numpy fallback.

The Cython extension is used when it is importable; set the environment
variable ``FEWMETA_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names
the active implementation.
"""

import os

from . import _pykernels as pure

compiled = None
if os.environ.get("FEWMETA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled  # type: ignore[no-redef]
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else pure
BACKEND = "cython" if compiled is not None else "python"

ML = pure.ML
REML = pure.REML
STATUS_OK = pure.STATUS_OK
STATUS_UPPER_BOUND = pure.STATUS_UPPER_BOUND
STATUS_MAXITER = pure.STATUS_MAXITER

q_stat = _impl.q_stat
objective = _impl.objective
maximize_tau = _impl.maximize_tau
boundary_slope = _impl.boundary_slope
solve_q = _impl.solve_q
marginal_grid = _impl.marginal_grid
mixture_cdf = _impl.mixture_cdf
mixture_pdf = _impl.mixture_pdf
mixture_quantile = _impl.mixture_quantile

__all__ = [
    "BACKEND", "ML", "REML", "q_stat", "objective", "maximize_tau", "boundary_slope", "solve_q",
    "marginal_grid", "mixture_cdf", "mixture_pdf", "mixture_quantile",
]
