"""Compactly supported Wendland radial basis function.

Only the C4-smooth member used throughout the solver is provided.  The
function is normalized so that the value at distance zero is exactly one,
and it vanishes identically for distances beyond ``1/sigma``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["WendlandKernel", "wendland_eval", "support_radius"]


def _check_sigma(sigma):
    if not np.isfinite(sigma) or sigma <= 0:
        raise ValueError(f"shape parameter must be a positive finite real, got {sigma!r}")


def wendland_eval(r, sigma):
    """Evaluate the normalized Wendland function at distance(s) ``r``.

    Accepts a scalar or array of nonnegative distances.  The kernel is
    ``(1 - sigma*r)^6 (35 (sigma*r)^2 + 18 sigma*r + 3) / 3`` inside the
    support ball of radius ``1/sigma`` and zero outside; the division by 3
    makes the peak value exactly 1.
    """
    _check_sigma(sigma)
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("distances must be finite and nonnegative")
    t = sigma * arr
    base = np.maximum(0.0, 1.0 - t)
    out = base**6 * (35.0 * t * t + 18.0 * t + 3.0) / 3.0
    if out.ndim == 0:
        return float(out)
    return out


def support_radius(sigma):
    """Radius of the kernel's support ball, ``1/sigma``."""
    _check_sigma(sigma)
    return 1.0 / sigma


@dataclass(frozen=True)
class WendlandKernel:
    """Wendland kernel with fixed shape parameter ``sigma`` (units 1/length)."""

    sigma: float

    def __post_init__(self):
        _check_sigma(self.sigma)

    @property
    def support(self):
        return 1.0 / self.sigma

    def eval(self, r):
        return wendland_eval(r, self.sigma)
