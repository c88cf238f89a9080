"""Area-tilted line ensembles above a hard wall.

The compiled core lives in ``ensembles._core``; everything is re-exported here.
"""

from ._core import (
    EnsembleSpec,
    EnsemblesError,
    ExactEngine,
    Kernel,
    McmcParams,
    Potential,
    TiltSpec,
    __version__,
    canonical_config,
    content_hash,
    h_scale,
    mixing_curve,
    polymer_marginal,
    run_experiment,
    sample_paths,
    stationary_density,
)

__all__ = [
    "EnsembleSpec",
    "EnsemblesError",
    "ExactEngine",
    "Kernel",
    "McmcParams",
    "Potential",
    "TiltSpec",
    "__version__",
    "canonical_config",
    "content_hash",
    "h_scale",
    "mixing_curve",
    "polymer_marginal",
    "run_experiment",
    "sample_paths",
    "stationary_density",
]
