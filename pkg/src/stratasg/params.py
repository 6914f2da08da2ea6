"""Model parameters and the drift polynomial."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path


class ParameterError(ValueError):
    """Raised for parameter combinations outside an operation's domain."""


@dataclass(frozen=True)
class ModelParams:
    """Rates of the two-type model.

    ``s`` selection, ``gamma`` pairwise interaction, ``u`` total mutation rate,
    ``nu0`` probability that a mutation produces the fit type.  ``nu1`` is
    always ``1 - nu0``.
    """

    s: float
    gamma: float
    u: float
    nu0: float = 0.0
    nu1: float = field(init=False)

    def __post_init__(self):
        for name in ("s", "gamma", "u", "nu0"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParameterError(f"{name} must be a finite number, got {v!r}")
            if v < 0:
                raise ParameterError(f"{name} must be non-negative, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.nu0 > 1:
            raise ParameterError(f"nu0 must lie in [0, 1], got {self.nu0!r}")
        object.__setattr__(self, "nu1", 1.0 - self.nu0)

    def with_(self, **kw) -> "ModelParams":
        d = {"s": self.s, "gamma": self.gamma, "u": self.u, "nu0": self.nu0}
        d.update(kw)
        return ModelParams(**d)

    def as_dict(self) -> dict:
        return {"s": self.s, "gamma": self.gamma, "u": self.u,
                "nu0": self.nu0, "nu1": self.nu1}


def drift(p: ModelParams, y: float) -> float:
    """F(y) = -y(1-y)[s + gamma(1-y)] + u nu1 (1-y) - u nu0 y."""
    if not math.isfinite(y):
        raise ValueError(f"drift needs a finite frequency, got {y!r}")
    return (-y * (1.0 - y) * (p.s + p.gamma * (1.0 - y))
            + p.u * p.nu1 * (1.0 - y) - p.u * p.nu0 * y)


def drift_prime(p: ModelParams, y: float) -> float:
    # derivative of the expanded cubic below
    a3, a2, a1, _ = drift_coefficients(p)
    return 3 * a3 * y * y + 2 * a2 * y + a1


def drift_coefficients(p: ModelParams) -> tuple[float, float, float, float]:
    """Coefficients (a3, a2, a1, a0) of F in powers of y, highest first."""
    s, g, u = p.s, p.gamma, p.u
    return (-g, 2 * g + s, -(g + s + u), u * p.nu1)


def critical_rates(p: ModelParams) -> tuple[float, float | None]:
    """(u_hat, u_check); u_check is None when gamma = 0."""
    if p.s <= 0:
        raise ParameterError("critical rates defined for s>0")
    u_hat = p.s
    if p.gamma == 0:
        return u_hat, None
    return u_hat, ((p.s + p.gamma) / 2.0) ** 2 / p.gamma


def sigma(p: ModelParams) -> float:
    """Discriminant (1 + s/gamma)^2 - 4u/gamma of the quadratic factor."""
    if p.gamma <= 0:
        raise ParameterError("sigma needs gamma > 0")
    return (1.0 + p.s / p.gamma) ** 2 - 4.0 * p.u / p.gamma


_CONFIG_KEYS = {"s": "s", "gamma": "gamma", "u": "u", "nu0": "nu0"}


def parse_config(text: str) -> dict:
    """Parse ``key=value`` lines.  Blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = float(val)
        except ValueError:
            raise ParameterError(f"line {lineno}: {key} is not a number: {val!r}") from None
    return out


def load_config(path: str | Path) -> dict:
    return parse_config(Path(path).read_text())
