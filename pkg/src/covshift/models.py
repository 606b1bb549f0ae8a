"""Declarative simulation models and the named model catalogue.

A :class:`ModelSpec` names its latent Gaussian fields (``Z1``, ``Z2``, ...),
an intensity/trend expression over them, the interaction type and the
expressions defining the observed covariates. Expressions are small
arithmetic strings parsed with :mod:`ast` into a whitelisted tree:

    exp(4.5 + Z1)          maxnorm(exp(Z1 / 5))          max0(1 - Z1**2 / 5)

``maxnorm(f)`` rescales ``f`` so its maximum over the window is 1 (done per
realization); ``max0(f)`` is ``max(f, 0)``; ``x`` and ``y`` are the cell
centre coordinates.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import rng as rngmod
from .geom import PointPattern, Window
from .pointsim import DEFAULT_MH_STEPS, Interaction, simulate_gibbs, simulate_poisson
from .randfield import GaussFieldSpec, simulate_grfs
from .raster import Grid, ScalarField

__all__ = [
    "Expression",
    "ModelSpec",
    "Realization",
    "CATALOG",
    "get_model",
    "simulate_model",
    "simulate_lgcp",
]

_FUNCS = {
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "square": np.square,
    "max0": lambda a: np.maximum(a, 0.0),
}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class Expression:
    """Parsed arithmetic expression over named fields."""

    def __init__(self, text: str):
        self.text = text
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"cannot parse expression {text!r}: {exc.msg}") from None
        self._tree = tree.body
        self.names = set()
        self._check(self._tree)

    def __repr__(self):
        return f"Expression({self.text!r})"

    def _check(self, node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name):
            self.names.add(node.id)
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._check(node.operand)
            return
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and (node.func.id in _FUNCS or node.func.id in ("maxnorm", "max"))
            and not node.keywords
        ):
            for a in node.args:
                self._check(a)
            return
        raise ValueError(f"unsupported construct in expression {self.text!r}: {ast.dump(node)}")

    def evaluate(self, env: Mapping[str, np.ndarray], mask: np.ndarray | None = None):
        return self._eval(self._tree, env, mask)

    def _eval(self, node, env, mask):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise KeyError(f"expression {self.text!r} references unknown field {node.id!r}")
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env, mask), self._eval(node.right, env, mask))
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, env, mask)
            return -val if isinstance(node.op, ast.USub) else val
        name = node.func.id
        args = [self._eval(a, env, mask) for a in node.args]
        if name == "maxnorm":
            (a,) = args
            top = np.max(a[mask]) if mask is not None else np.max(a)
            return a / top
        if name == "max":
            return np.maximum(*args)
        return _FUNCS[name](*args)


@dataclass(frozen=True)
class ModelSpec:
    """Simulation model: latent fields, intensity construction, covariates.

    ``intensity`` is the Poisson intensity, the LGCP driving intensity or the
    Gibbs trend depending on ``interaction.kind`` / ``lgcp``. ``covariates``
    maps observed covariate names to expressions; by convention ``C1`` is the
    nuisance covariate and ``C2`` the covariate of interest.
    """

    name: str
    intensity: str
    fields: tuple[str, ...] = ("Z1", "Z2", "Z3")
    covariates: tuple[tuple[str, str], ...] = (("C1", "Z1"), ("C2", "Z3"))
    lgcp: bool = False
    interaction: Interaction = field(default_factory=Interaction)
    field_scale: float = 0.1
    window: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    cells: int = 128
    mh_steps: int = DEFAULT_MH_STEPS
    target_mean: float = math.exp(5)
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        Expression(self.intensity)
        for _, text in self.covariates:
            Expression(text)
        if self.lgcp and self.interaction.kind != "poisson":
            raise ValueError("an LGCP has no pairwise interaction")

    def with_params(self, **params) -> "ModelSpec":
        merged = dict(self.params)
        merged.update(params)
        return replace(self, params=tuple(sorted(merged.items())))

    @property
    def grid(self) -> Grid:
        return Grid.for_window(Window.rectangle(*self.window), self.cells)


@dataclass(frozen=True, eq=False)
class Realization:
    pattern: PointPattern
    latent: dict
    covariates: dict
    intensity: ScalarField

    def covariate_list(self, names) -> list[ScalarField]:
        return [self.covariates[n] for n in names]


def _environment(spec: ModelSpec, grid: Grid, latent: Mapping[str, ScalarField]) -> dict:
    xx, yy = grid.meshgrid()
    env = {"x": xx, "y": yy, "pi": math.pi}
    env.update({k: v.values for k, v in latent.items()})
    env.update(dict(spec.params))
    return env


def simulate_lgcp(intensity_expr: str, latent: Mapping[str, ScalarField], rng, extra=None) -> PointPattern:
    """Cox process: Poisson given the driving intensity built from ``latent`` fields."""
    first = next(iter(latent.values()))
    grid = first.grid
    env = {k: v.values for k, v in latent.items()}
    if extra:
        env.update(extra)
    lam = np.broadcast_to(Expression(intensity_expr).evaluate(env, grid.mask), grid.shape)
    return simulate_poisson(ScalarField(grid, lam), rng)


def simulate_model(spec: ModelSpec, seed: int, replicate: int = 0) -> Realization:
    """One realization; randomness from named substreams of ``seed``."""
    grid = spec.grid
    gspec = GaussFieldSpec(grid, scale=spec.field_scale)
    fields = simulate_grfs(gspec, rngmod.stream(seed, "fields", replicate), len(spec.fields))
    latent = dict(zip(spec.fields, fields))
    env = _environment(spec, grid, latent)
    lam = np.broadcast_to(Expression(spec.intensity).evaluate(env, grid.mask), grid.shape).astype(float)
    if np.any(lam[grid.mask] < 0):
        raise ValueError(f"model {spec.name}: intensity expression is negative somewhere")
    intensity = ScalarField(grid, lam)
    prng = rngmod.stream(seed, "pattern", replicate)
    if spec.interaction.kind == "poisson":
        pattern = simulate_poisson(intensity, prng)
    else:
        pattern = simulate_gibbs(spec.interaction, intensity, prng, spec.mh_steps)
    covs = {}
    for name, text in spec.covariates:
        vals = np.broadcast_to(Expression(text).evaluate(env, grid.mask), grid.shape)
        covs[name] = ScalarField(grid, vals)
    return Realization(pattern, latent, covs, intensity)


def _strauss(gamma=0.5, radius=0.05):
    return Interaction("strauss", gamma, radius)


def _hardcore(gamma=4.0, radius=0.02, hc=0.01):
    return Interaction("hardcore_strauss", gamma, radius, hc)


_POWER_COVS = (("C1", "Z1"), ("C2", "Z1 + 2 * Z3"))
_A4 = (("a", 0.25),)
_A2 = (("a", 0.5),)

CATALOG: dict[str, ModelSpec] = {
    m.name: m
    for m in [
        ModelSpec("P1", "exp(4.5 + Z1)"),
        ModelSpec("P2", "exp(5) * Z1**2"),
        ModelSpec("L1", "exp(4.0 + Z1 + Z2)", lgcp=True),
        ModelSpec("L2", "exp(4.5 + Z2) * Z1**2", lgcp=True),
        ModelSpec("S1", "220 * exp(Z1)", interaction=_strauss()),
        ModelSpec("S2", "350 * Z1**2", interaction=_strauss()),
        ModelSpec("H1", "180 * maxnorm(exp(Z1 / 5))", interaction=_hardcore()),
        ModelSpec("H2", "120 * maxnorm(max0(1 - Z1**2 / 5))", interaction=_hardcore()),
        ModelSpec(
            "L1*",
            "exp(4.0 + Z1 + Z2)",
            lgcp=True,
            covariates=(("C1", "Z1"), ("C2", "Z1 + b * Z3")),
            params=(("b", 1.0),),
        ),
        ModelSpec("P1p", "exp(4.5 + Z1 + a * Z3 - a**2 / 2)", covariates=_POWER_COVS, params=_A4),
        ModelSpec("P2p", "exp(5.0 + a * Z3 - a**2 / 2) * Z1**2", covariates=_POWER_COVS, params=_A4),
        ModelSpec(
            "L1p", "exp(4.0 + Z1 + Z2 + a * Z3 - a**2 / 2)", lgcp=True, covariates=_POWER_COVS, params=_A2
        ),
        ModelSpec(
            "L2p", "exp(4.5 + Z2 + a * Z3 - a**2 / 2) * Z1**2", lgcp=True, covariates=_POWER_COVS, params=_A2
        ),
        ModelSpec("S1p", "210 * exp(Z1 + a * Z3)", interaction=_strauss(), covariates=_POWER_COVS, params=_A4),
        ModelSpec("S2p", "350 * exp(a * Z3) * Z1**2", interaction=_strauss(), covariates=_POWER_COVS, params=_A4),
        ModelSpec(
            "H1p",
            "190 * maxnorm(exp(Z1 / 5 + a * Z3 - a**2 / 2))",
            interaction=_hardcore(),
            covariates=_POWER_COVS,
            params=_A4,
        ),
        ModelSpec(
            "H2p",
            "170 * maxnorm(exp(a * Z3 - a**2 / 2) * max0(1 - Z1**2 / 5))",
            interaction=_hardcore(),
            covariates=_POWER_COVS,
            params=_A4,
        ),
    ]
}


def get_model(name: str, **params) -> ModelSpec:
    """Catalogue lookup; ``L1*`` accepts ``b``, power models accept ``a``."""
    key = name.replace("^p", "p").replace("_", "")
    if key not in CATALOG:
        raise KeyError(f"unknown model {name!r}; known: {', '.join(CATALOG)}")
    spec = CATALOG[key]
    return spec.with_params(**params) if params else spec
