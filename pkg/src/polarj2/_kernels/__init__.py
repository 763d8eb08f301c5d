"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise the
pure-Python twins take over.  Setting the environment variable
POLARJ2_PURE=1 forces the fallback, which is useful for benchmarking
and for verifying backend agreement.
"""

import os

USING_COMPILED = False

if os.environ.get("POLARJ2_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _speed as _impl
        USING_COMPILED = True
    except ImportError:
        from . import pure as _impl
else:
    from . import pure as _impl

BACKEND = _impl.BACKEND
integrate_l = _impl.integrate_l
integrate_elements = _impl.integrate_elements
# only the compiled backend carries a fused estimator loop; the fallback
# is the generic estimator in the averaging module
estimator_curve = getattr(_impl, "estimator_curve", None)

__all__ = ["USING_COMPILED", "BACKEND", "integrate_l", "integrate_elements",
           "estimator_curve"]
