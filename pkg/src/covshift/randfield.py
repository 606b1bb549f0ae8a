"""Stationary Gaussian random fields with exponential covariance.

Simulation uses circulant embedding of the cell-centre covariance on the
grid doubled along each axis. One complex FFT yields two independent
realizations (real and imaginary parts), which :func:`simulate_grfs` uses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .raster import Grid, ScalarField

__all__ = ["GaussFieldSpec", "EmbeddingError", "embedding_spectrum", "simulate_grf", "simulate_grfs"]

log = logging.getLogger(__name__)

MAX_CLIPPED_FRACTION = 0.01


class EmbeddingError(RuntimeError):
    """Circulant embedding too far from positive semidefinite."""


@dataclass(frozen=True)
class GaussFieldSpec:
    grid: Grid
    scale: float = 0.1
    variance: float = 1.0
    mean: float = 0.0

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")
        if self.scale <= 0:
            raise ValueError("covariance scale must be positive")


@lru_cache(maxsize=32)
def _spectrum(nrows: int, ncols: int, cellsize: float, scale: float) -> tuple[np.ndarray, float]:
    mr, mc = 2 * nrows, 2 * ncols
    ir = np.minimum(np.arange(mr), mr - np.arange(mr)) * cellsize
    ic = np.minimum(np.arange(mc), mc - np.arange(mc)) * cellsize
    dist = np.hypot(ir[:, None], ic[None, :])
    eig = np.fft.fft2(np.exp(-dist / scale)).real
    neg = -eig[eig < 0].sum()
    clipped = neg / np.abs(eig).sum()
    eig = np.clip(eig, 0.0, None)
    root = np.sqrt(eig / (mr * mc))
    root.setflags(write=False)
    return root, float(clipped)


def embedding_spectrum(spec: GaussFieldSpec) -> tuple[np.ndarray, float]:
    """Square-root eigenvalues of the unit-variance embedding, and the clipped mass fraction."""
    g = spec.grid
    root, clipped = _spectrum(g.nrows, g.ncols, g.cellsize, spec.scale)
    if clipped > MAX_CLIPPED_FRACTION:
        raise EmbeddingError(
            f"circulant embedding clipped {clipped:.3%} of spectral mass (limit {MAX_CLIPPED_FRACTION:.0%})"
        )
    if clipped > 0:
        log.debug("circulant embedding clipped %.2e of spectral mass", clipped)
    return root, clipped


def simulate_grfs(spec: GaussFieldSpec, rng, count: int = 1) -> list[ScalarField]:
    """``count`` independent realizations of the field."""
    g = spec.grid
    if spec.variance == 0:
        return [ScalarField.constant(spec.mean, g) for _ in range(count)]
    root, _ = embedding_spectrum(spec)
    sd = np.sqrt(spec.variance)
    out = []
    while len(out) < count:
        noise = rng.standard_normal(root.shape) + 1j * rng.standard_normal(root.shape)
        z = np.fft.fft2(root * noise)[: g.nrows, : g.ncols]
        out.append(ScalarField(g, spec.mean + sd * z.real))
        if len(out) < count:
            out.append(ScalarField(g, spec.mean + sd * z.imag))
    return out


def simulate_grf(spec: GaussFieldSpec, rng) -> ScalarField:
    """One realization with covariance ``variance * exp(-r / scale)`` at cell centres."""
    return simulate_grfs(spec, rng, 1)[0]
