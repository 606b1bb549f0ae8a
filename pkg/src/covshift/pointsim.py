"""Point-process samplers: inhomogeneous Poisson, LGCP, (hardcore) Strauss.

Intensities are rasters, so the Poisson sampler works cell by cell: a
Poisson count with mean ``lambda(cell) * cell area`` is scattered uniformly
in each cell. This is the exact law of the Poisson process with the
piecewise-constant intensity and avoids the huge dominating constants that
thinning would need for LGCP surfaces.

Gibbs models use a birth-death-move Metropolis-Hastings chain (numba) with
Papangelou conditional intensity ``beta(u) * gamma ** t(u, x)``, which is 0
whenever a neighbour lies closer than the hard core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .geom import PointPattern, UnsupportedGeometryError
from .raster import Grid, ScalarField

__all__ = [
    "Interaction",
    "simulate_poisson",
    "simulate_gibbs",
    "DEFAULT_MH_STEPS",
]

DEFAULT_MH_STEPS = 100_000
PROPOSAL_MIX = (0.35, 0.35, 0.30)


@dataclass(frozen=True)
class Interaction:
    """Pairwise interaction of a Gibbs model.

    ``kind`` is ``"poisson"``, ``"strauss"`` or ``"hardcore_strauss"``.
    """

    kind: str = "poisson"
    gamma: float = 1.0
    radius: float = 0.0
    hardcore: float = 0.0

    def __post_init__(self):
        if self.kind == "poisson":
            return
        if self.kind == "strauss":
            if not (0 < self.gamma <= 1):
                raise ValueError("Strauss needs 0 < gamma <= 1 for local stability")
            if self.radius <= 0:
                raise ValueError("interaction radius must be positive")
            if self.hardcore != 0:
                raise ValueError("use kind='hardcore_strauss' for a hard core")
        elif self.kind == "hardcore_strauss":
            if self.gamma <= 0 or self.hardcore <= 0 or self.radius <= self.hardcore:
                raise ValueError("hardcore Strauss needs gamma > 0 and 0 < hc < R")
        else:
            raise ValueError(f"unknown interaction {self.kind!r}")


def _scatter_counts(counts: np.ndarray, grid: Grid, rng) -> np.ndarray:
    r, c = np.nonzero(counts)
    k = counts[r, c]
    rr = np.repeat(r, k)
    cc = np.repeat(c, k)
    u = rng.random((rr.size, 2))
    x = grid.x0 + (cc + u[:, 0]) * grid.cellsize
    y = grid.y0 + (rr + u[:, 1]) * grid.cellsize
    return np.column_stack([x, y])


def simulate_poisson(intensity: ScalarField, rng) -> PointPattern:
    """Poisson pattern with the given (piecewise-constant) intensity."""
    grid = intensity.grid
    lam = intensity.masked_values()
    if np.any(lam < 0):
        raise ValueError("intensity must be nonnegative")
    counts = rng.poisson(lam * grid.cell_area)
    xy = _scatter_counts(counts, grid, rng)
    window = grid.window
    if xy.size and not (window.is_rectangle and grid.tiles_window):
        xy = xy[window.contains(xy[:, 0], xy[:, 1])]
    return PointPattern(xy, window)


@numba.njit(cache=True)
def _beta_at(beta, x0, y0, h, ux, uy):
    nr, nc = beta.shape
    c = int(math.floor((ux - x0) / h))
    r = int(math.floor((uy - y0) / h))
    if c < 0:
        c = 0
    elif c >= nc:
        c = nc - 1
    if r < 0:
        r = 0
    elif r >= nr:
        r = nr - 1
    return beta[r, c]


@numba.njit(cache=True)
def _cell_of(ux, uy, bx0, by0, cs, nx, ny):
    cx = int((ux - bx0) / cs)
    cy = int((uy - by0) / cs)
    if cx >= nx:
        cx = nx - 1
    if cy >= ny:
        cy = ny - 1
    return cy * nx + cx


@numba.njit(cache=True)
def _count_near(px, py, members, counts, nx, ny, cell, skip, ux, uy, r2, hc2):
    """Neighbours within the interaction radius; -1 if the hard core is hit."""
    cx = cell % nx
    cy = cell // nx
    t = 0
    for oy in range(-1, 2):
        yy = cy + oy
        if yy < 0 or yy >= ny:
            continue
        for ox in range(-1, 2):
            xx = cx + ox
            if xx < 0 or xx >= nx:
                continue
            c = yy * nx + xx
            for k in range(counts[c]):
                j = members[c, k]
                if j == skip:
                    continue
                dx = px[j] - ux
                dy = py[j] - uy
                d2 = dx * dx + dy * dy
                if d2 < hc2:
                    return -1
                if d2 <= r2:
                    t += 1
    return t


@numba.njit(cache=True)
def _mh_chain(init, beta, x0, y0, h, bx0, by0, lx, ly, gamma, radius, hardcore, uniforms, pb, pd):
    n = init.shape[0]
    cap = max(2 * n + 64, 256)
    px = np.empty(cap)
    py = np.empty(cap)
    pcell = np.empty(cap, dtype=np.int64)
    pslot = np.empty(cap, dtype=np.int64)
    reach = max(radius, hardcore)
    if reach > 0:
        nx = max(1, min(int(lx / reach), 512))
        ny = max(1, min(int(ly / reach), 512))
    else:
        nx = 1
        ny = 1
    cs = max(lx / nx, ly / ny)
    ncell = nx * ny
    per = 16
    members = np.empty((ncell, per), dtype=np.int64)
    counts = np.zeros(ncell, dtype=np.int64)

    area = lx * ly
    r2 = radius * radius
    hc2 = hardcore * hardcore
    log_gamma = math.log(gamma) if gamma > 0 else 0.0
    interacting = reach > 0

    for i in range(n + 1):
        if i == n:
            break
        px[i] = init[i, 0]
        py[i] = init[i, 1]
        c = _cell_of(px[i], py[i], bx0, by0, cs, nx, ny)
        if counts[c] == per:
            grown = np.empty((ncell, 2 * per), dtype=np.int64)
            grown[:, :per] = members
            members = grown
            per *= 2
        members[c, counts[c]] = i
        pcell[i] = c
        pslot[i] = counts[c]
        counts[c] += 1

    for s in range(uniforms.shape[0]):
        u0 = uniforms[s, 0]
        u1 = uniforms[s, 1]
        u2 = uniforms[s, 2]
        u3 = uniforms[s, 3]
        u4 = uniforms[s, 4]
        if u0 < pb:
            ux = bx0 + u1 * lx
            uy = by0 + u2 * ly
            c = _cell_of(ux, uy, bx0, by0, cs, nx, ny)
            t = 0
            if interacting:
                t = _count_near(px, py, members, counts, nx, ny, c, -1, ux, uy, r2, hc2)
                if t < 0:
                    continue
            ratio = _beta_at(beta, x0, y0, h, ux, uy) * math.exp(t * log_gamma) * area / (n + 1) * (pd / pb)
            if u3 < ratio:
                if n == cap:
                    cap *= 2
                    nxa = np.empty(cap)
                    nya = np.empty(cap)
                    nca = np.empty(cap, dtype=np.int64)
                    nsa = np.empty(cap, dtype=np.int64)
                    nxa[:n] = px[:n]
                    nya[:n] = py[:n]
                    nca[:n] = pcell[:n]
                    nsa[:n] = pslot[:n]
                    px = nxa
                    py = nya
                    pcell = nca
                    pslot = nsa
                if counts[c] == per:
                    grown = np.empty((ncell, 2 * per), dtype=np.int64)
                    grown[:, :per] = members
                    members = grown
                    per *= 2
                px[n] = ux
                py[n] = uy
                members[c, counts[c]] = n
                pcell[n] = c
                pslot[n] = counts[c]
                counts[c] += 1
                n += 1
        elif u0 < pb + pd:
            if n == 0:
                continue
            i = min(int(u1 * n), n - 1)
            t = 0
            if interacting:
                t = _count_near(px, py, members, counts, nx, ny, pcell[i], i, px[i], py[i], r2, hc2)
                if t < 0:
                    t = 0
            lam = _beta_at(beta, x0, y0, h, px[i], py[i]) * math.exp(t * log_gamma)
            if u3 * lam * area * (pd / pb) < n:
                # drop i from its cell
                c = pcell[i]
                last = members[c, counts[c] - 1]
                members[c, pslot[i]] = last
                pslot[last] = pslot[i]
                counts[c] -= 1
                # move point n-1 into slot i
                j = n - 1
                if j != i:
                    px[i] = px[j]
                    py[i] = py[j]
                    pcell[i] = pcell[j]
                    pslot[i] = pslot[j]
                    members[pcell[i], pslot[i]] = i
                n -= 1
        else:
            if n == 0:
                continue
            i = min(int(u1 * n), n - 1)
            ux = bx0 + u2 * lx
            uy = by0 + u4 * ly
            cnew = _cell_of(ux, uy, bx0, by0, cs, nx, ny)
            t_new = 0
            t_old = 0
            if interacting:
                t_new = _count_near(px, py, members, counts, nx, ny, cnew, i, ux, uy, r2, hc2)
                if t_new < 0:
                    continue
                t_old = _count_near(px, py, members, counts, nx, ny, pcell[i], i, px[i], py[i], r2, hc2)
            num = _beta_at(beta, x0, y0, h, ux, uy) * math.exp(t_new * log_gamma)
            if t_old < 0:
                accept = True
            else:
                den = _beta_at(beta, x0, y0, h, px[i], py[i]) * math.exp(t_old * log_gamma)
                accept = u3 * den < num
            if accept:
                c = pcell[i]
                if c != cnew:
                    last = members[c, counts[c] - 1]
                    members[c, pslot[i]] = last
                    pslot[last] = pslot[i]
                    counts[c] -= 1
                    if counts[cnew] == per:
                        grown = np.empty((ncell, 2 * per), dtype=np.int64)
                        grown[:, :per] = members
                        members = grown
                        per *= 2
                    members[cnew, counts[cnew]] = i
                    pcell[i] = cnew
                    pslot[i] = counts[cnew]
                    counts[cnew] += 1
                px[i] = ux
                py[i] = uy
    out = np.empty((n, 2))
    out[:, 0] = px[:n]
    out[:, 1] = py[:n]
    return out


@numba.njit(cache=True)
def _remove_hardcore_violations(xy, hardcore):
    n = xy.shape[0]
    keep = np.ones(n, dtype=np.bool_)
    hc2 = hardcore * hardcore
    for i in range(n):
        for j in range(i):
            if keep[j]:
                dx = xy[i, 0] - xy[j, 0]
                dy = xy[i, 1] - xy[j, 1]
                if dx * dx + dy * dy < hc2:
                    keep[i] = False
                    break
    return keep


def simulate_gibbs(
    interaction: Interaction,
    trend: ScalarField,
    rng,
    steps: int = DEFAULT_MH_STEPS,
) -> PointPattern:
    """Approximate draw from a (hardcore) Strauss model with trend ``beta(u)``.

    The chain starts from a Poisson(beta) pattern (hard-core violators
    removed) and the final state after ``steps`` proposals is returned.
    """
    grid = trend.grid
    window = grid.window
    if not window.is_rectangle:
        raise UnsupportedGeometryError("Gibbs sampler needs a rectangular window")
    beta = trend.masked_values()
    if np.any(beta < 0):
        raise ValueError("trend must be nonnegative")
    init = simulate_poisson(trend, rng).xy.copy()
    if interaction.kind == "hardcore_strauss" and init.shape[0]:
        init = init[_remove_hardcore_violations(init, interaction.hardcore)]
    if interaction.kind == "poisson":
        gamma, radius, hc = 1.0, 0.0, 0.0
    else:
        gamma, radius, hc = interaction.gamma, interaction.radius, interaction.hardcore
    bx0, by0, bx1, by1 = window.bounds
    uniforms = rng.random((int(steps), 5))
    pb, pd, _ = PROPOSAL_MIX
    xy = _mh_chain(
        np.ascontiguousarray(init),
        np.ascontiguousarray(beta, dtype=np.float64),
        grid.x0,
        grid.y0,
        grid.cellsize,
        bx0,
        by0,
        bx1 - bx0,
        by1 - by0,
        float(gamma),
        float(radius),
        float(hc),
        uniforms,
        pb,
        pd,
    )
    return PointPattern(xy, window)
