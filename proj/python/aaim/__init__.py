"""Weighted beamforming, covariance estimation and DAMAS deconvolution."""

import json as _json

from . import _core
from ._core import (  # noqa: F401
    AaimError,
    DataError,
    NumericalError,
    discrepancy_alpha,
    estimate_csm,
    estimate_pcsm,
    focus_grid,
    gaussian_covariance,
    green_function,
    map_metrics,
    nearest_psd,
    nnls,
    propagation_matrix,
    read_blocks,
    run_cli,
    spiral_array,
    stats,
    write_blocks,
)

__version__ = _core.__version__


def _choice(weighting):
    return _json.dumps(weighting)


def synthesize(scenario=None, base_dir=""):
    """Returns (blocks[J, M, F], frequencies, mic positions)."""
    return _core.synthesize(_json.dumps(scenario or {}), str(base_dir))


def beamform(csm, steering, weighting="conventional", sigma=None, mask="none"):
    return _core.beamform(csm, steering, _choice(weighting), sigma, mask)


def damas_system(csm, steering, weighting="conventional", sigma=None, mask="none"):
    return _core.damas_system(csm, steering, _choice(weighting), sigma, mask)


def rms_noise_level(csm, pcsm, blocks, steering, weighting="conventional",
                    sigma=None, mask="none"):
    return _core.rms_noise_level(csm, pcsm, blocks, steering, _choice(weighting),
                                 sigma, mask)


def main():
    """Console entry point: runs the command-line tool in-process."""
    import sys

    return run_cli(sys.argv[1:])
