"""Backward covariate selection driven by random-shift tests.

At every stage each active covariate is tested as the covariate of
interest with the remaining active covariates as nuisance. If every p-value
is below ``alpha`` the procedure stops; otherwise the covariate with the
largest p-value is dropped. Equal maximal p-values are broken by name order.
A lone covariate with ``p >= alpha`` is dropped as well, so the final set may
be empty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

from . import rng as rngmod
from .geom import PointPattern
from .raster import ScalarField
from .rhohat import MAX_COVARIATES
from .shifttest import ShiftTestConfig, backward_input_adapter, run_shift_test

__all__ = ["Stage", "SelectionTrace", "backward_select"]


@dataclass(frozen=True)
class Stage:
    active: tuple[str, ...]
    p_values: dict
    removed: str | None


@dataclass(frozen=True)
class SelectionTrace:
    stages: tuple[Stage, ...]
    final: tuple[str, ...]
    alpha: float
    config: ShiftTestConfig = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "final": list(self.final),
            "stages": [
                {"active": list(s.active), "p_values": dict(s.p_values), "removed": s.removed} for s in self.stages
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        """Covariates as rows, stages as columns; dropped covariates are starred."""
        names = list(self.stages[0].active) if self.stages else []
        width = max([9] + [len(n) for n in names])
        head = "covariate".ljust(width) + "".join(f"  stage {i + 1:<3d}" for i in range(len(self.stages)))
        lines = [head, "-" * len(head)]
        for name in names:
            row = name.ljust(width)
            for s in self.stages:
                if name in s.p_values:
                    mark = "*" if s.removed == name else " "
                    row += f"  {s.p_values[name]:8.3f}{mark}"
                else:
                    row += " " * 11
            lines.append(row)
        lines.append(f"(* removed; alpha = {self.alpha}; final set: {', '.join(self.final) or 'none'})")
        return "\n".join(lines)


def backward_select(
    pattern: PointPattern,
    covariates: Mapping[str, ScalarField],
    config: ShiftTestConfig | None = None,
    alpha: float = 0.05,
    *,
    seed: int | None = None,
) -> SelectionTrace:
    """Run backward selection; every test draws from its own seed substream."""
    if not covariates:
        raise ValueError("backward selection needs at least one covariate")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    config = config or ShiftTestConfig()
    seed = config.seed if seed is None else seed
    if config.residuals == "nonparametric" and len(covariates) - 1 > MAX_COVARIATES:
        raise ValueError(
            f"nonparametric residuals support at most {MAX_COVARIATES} nuisance covariates; "
            f"{len(covariates)} covariates given"
        )
    active = list(covariates)
    stages = []
    stage_no = 0
    while active:
        pvals = {}
        for name in active:
            nuisance = [covariates[o] for o in active if o != name]
            rng = rngmod.stream(seed, "select", stage_no, name)
            res = run_shift_test(pattern, nuisance, covariates[name], config, rng=rng)
            pvals[name] = backward_input_adapter(res)
        if all(p < alpha for p in pvals.values()):
            stages.append(Stage(tuple(active), pvals, None))
            break
        top = max(pvals.values())
        removed = sorted(n for n in active if pvals[n] == top)[0]
        stages.append(Stage(tuple(active), pvals, removed))
        active.remove(removed)
        stage_no += 1
    return SelectionTrace(tuple(stages), tuple(active), alpha, config)
