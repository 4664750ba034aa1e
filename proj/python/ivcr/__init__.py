"""Two-stage instrumental-variable estimation for additive
subdistribution hazard models with competing risks.

The heavy lifting lives in the compiled extension ``_ivcr``; this package
re-exports its surface.
"""

try:  # installed layout: extension sits inside the package
    from ._ivcr import (  # type: ignore[attr-defined]
        DataError,
        Fit,
        NumericalError,
        UsageError,
        __version__,
        fit,
        km,
        load,
        simulate,
        write_synthetic,
    )
except ImportError:  # build-tree layout: extension on sys.path directly
    from _ivcr import (  # type: ignore[no-redef]
        DataError,
        Fit,
        NumericalError,
        UsageError,
        __version__,
        fit,
        km,
        load,
        simulate,
        write_synthetic,
    )

__all__ = [
    "DataError",
    "Fit",
    "NumericalError",
    "UsageError",
    "__version__",
    "fit",
    "km",
    "load",
    "simulate",
    "write_synthetic",
]
