"""Hot-loop kernels: compiled ``_core`` when importable, numpy fallback otherwise.

Set ``RAINSIM_PURE=1`` before import to force the fallback.
"""
import logging
import os

from . import _pure

log = logging.getLogger(__name__)

_NAMES = ("perlin3_many", "particle_intensity_many", "nn_mean_dist", "rect_intersection_area", "iou_bev_matrix")

if os.environ.get("RAINSIM_PURE", "") not in ("", "0"):
    _impl = _pure
else:
    try:
        from . import _core as _impl
    except ImportError:  # extension not built
        log.debug("rainsim._core unavailable, using numpy kernels")
        _impl = _pure

BACKEND = "compiled" if _impl is not _pure else "pure"

perlin3_many = _impl.perlin3_many
particle_intensity_many = _impl.particle_intensity_many
nn_mean_dist = _impl.nn_mean_dist
rect_intersection_area = _impl.rect_intersection_area
iou_bev_matrix = _impl.iou_bev_matrix


def backends() -> dict:
    """All importable kernel modules by name, for cross-checks and benchmarks."""
    out = {"pure": _pure}
    try:
        from . import _core

        out["compiled"] = _core
    except ImportError:
        pass
    return out
