"""Exceptions and small input-validation helpers shared across the package."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np


class InputDomainError(ValueError):
    """An argument lies outside the domain an operation accepts."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values or failed to factorize."""


class ReachabilityError(ValueError):
    """The tool tip cannot be placed at the requested point."""


class ConfigError(ValueError):
    """A configuration value is inconsistent or malformed."""


N_CELLS = 18


def check_load(tl: float, name: str = "target load") -> float:
    tl = float(tl)
    if not (0.0 <= tl <= 100.0):
        raise InputDomainError(f"{name} must lie in [0, 100] %MVC, got {tl!r}")
    return tl


def check_dt(dt: float, upper: float = 0.1) -> float:
    dt = float(dt)
    if not (0.0 < dt <= upper):
        raise InputDomainError(f"dt must lie in (0, {upper}], got {dt!r}")
    return dt


def check_finite(*values: float, what: str = "state") -> None:
    for v in values:
        if not math.isfinite(v):
            raise NumericError(f"non-finite {what}: {values!r}")


def check_cells(cells: Iterable[int], n_cells: int = N_CELLS) -> tuple[int, ...]:
    """Coerce to a tuple of ints and make sure every index names a grid cell."""
    out = []
    for c in cells:
        if isinstance(c, (bool, np.bool_)) or int(c) != c:
            raise InputDomainError(f"cell index must be an integer, got {c!r}")
        c = int(c)
        if not 0 <= c < n_cells:
            raise InputDomainError(f"cell index {c} outside 0..{n_cells - 1}")
        out.append(c)
    if not out:
        raise InputDomainError("layout needs at least one button")
    return tuple(out)


def check_probabilities(p: Sequence[float], n: int, allow_zero: bool = False) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (n,):
        raise InputDomainError(f"expected {n} probabilities, got shape {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InputDomainError("probabilities must be finite and non-negative")
    total = p.sum()
    if allow_zero and total == 0:
        return p
    if abs(total - 1.0) > 1e-9:
        raise InputDomainError(f"probabilities must sum to 1, got {total!r}")
    return p
