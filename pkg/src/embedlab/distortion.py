"""Distortion of an embedding over a test set, and the bound formulas it is
compared against.

The empirical distortion is sup_{t in T} | ||At||^2 - ||t||^2 |, computed
exactly: by direct maximization over a finite cloud, or spectrally over the
unit sphere as max(lambda_max^2 - 1, 1 - lambda_min^2).

Bound values are explicit formulas in (d_T, mean width, critical dimension,
m, n) with caller-supplied constants; unspecified absolute constants are
inputs with defaults, never hard-coded claims.  Every logarithm argument is
floored at e so the log factors stay >= 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .embedding_core import EmbeddingMatrix, gram
from .errors import ConfigurationError, DimensionError, DomainError, NumericalError
from .set_geometry import FiniteCloud

_RESIDUAL_TOL = 1e-7


def floored_log(x: float) -> float:
    """Natural log with the argument floored at e, so the result is >= 1."""
    return 1.0 if x <= math.e else math.log(x)


def theta_m(m: int) -> float:
    """sqrt(log m * log log m), the thin-shell scale of log-concave vectors."""
    if m < 3:
        raise DomainError("theta_m requires m >= 3 so that log log m > 0")
    return math.sqrt(math.log(m) * math.log(math.log(m)))


@dataclass(frozen=True)
class SingularPair:
    lambda_min: float
    lambda_max: float

    def __post_init__(self) -> None:
        if self.lambda_min > self.lambda_max:
            raise NumericalError("lambda_min exceeds lambda_max")


@dataclass(frozen=True)
class BoundEvaluation:
    """A bound value together with everything needed to recompute it."""

    name: str
    value: float
    constants_used: dict
    inputs: dict

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "constants_used": dict(self.constants_used),
            "inputs": dict(self.inputs),
        }


@dataclass(frozen=True)
class DistortionReport:
    """Empirical distortion plus every bound evaluation it is compared to."""

    empirical: float
    argmax_point: np.ndarray | None
    bounds: dict[str, BoundEvaluation] = field(default_factory=dict)
    seed: int | None = None
    trial_index: int | None = None

    def with_bounds(self, *evaluations: BoundEvaluation) -> "DistortionReport":
        merged = dict(self.bounds)
        for ev in evaluations:
            merged[ev.name] = ev
        return replace(self, bounds=merged)

    def to_json_dict(self) -> dict:
        # fixed field order for byte-stable serialization
        return {
            "empirical": self.empirical,
            "argmax_point": None
            if self.argmax_point is None
            else [float(v) for v in np.asarray(self.argmax_point).ravel()],
            "bounds": {name: ev.to_json_dict() for name, ev in sorted(self.bounds.items())},
            "seed": self.seed,
            "trial_index": self.trial_index,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    def to_csv_fields(self) -> dict:
        fields = {
            "trial": self.trial_index,
            "seed": self.seed,
            "empirical": self.empirical,
        }
        for name, ev in sorted(self.bounds.items()):
            fields[f"bound_{name}"] = ev.value
        return fields


def distortion_finite(A: EmbeddingMatrix, T: FiniteCloud | np.ndarray) -> DistortionReport:
    """Exact maximization of | ||At||^2 - ||t||^2 | over the listed points."""
    pts = T.points if isinstance(T, FiniteCloud) else np.atleast_2d(np.asarray(T, dtype=np.float64))
    if pts.shape[0] == 0:
        raise DimensionError("distortion_finite needs a non-empty point set")
    if pts.shape[1] != A.n:
        raise DimensionError(f"points live in R^{pts.shape[1]} but the embedding has n={A.n}")
    images = A.entries @ pts.T  # (m, N)
    img_sq = np.sum(images * images, axis=0)
    t_sq = np.sum(pts * pts, axis=1)
    dev = np.abs(img_sq - t_sq)
    arg = int(np.argmax(dev))
    return DistortionReport(empirical=float(dev[arg]), argmax_point=pts[arg].copy())


def distortion_sphere(A: EmbeddingMatrix) -> tuple[DistortionReport, SingularPair]:
    """Spectral distortion over the unit sphere and the extremal singular values.

    Solved through the Gram matrix; each extreme eigenpair must pass the
    residual check ||G v - w v|| <= 1e-7 ||v||.  When m < n the smallest
    singular value is 0 by rank deficiency and the distortion is >= 1.
    """
    G = gram(A).entries
    w, V = np.linalg.eigh(G)
    for pos in (0, -1):
        residual = float(np.linalg.norm(G @ V[:, pos] - w[pos] * V[:, pos]))
        if residual > _RESIDUAL_TOL * float(np.linalg.norm(V[:, pos])):
            raise NumericalError(
                f"eigenpair residual {residual:.3e} exceeds {_RESIDUAL_TOL:.0e}"
            )
    lam_min_sq = max(float(w[0]), 0.0)
    lam_max_sq = max(float(w[-1]), 0.0)
    pair = SingularPair(lambda_min=math.sqrt(lam_min_sq), lambda_max=math.sqrt(lam_max_sq))
    upper = lam_max_sq - 1.0
    lower = 1.0 - lam_min_sq
    if upper >= lower:
        empirical, direction = upper, V[:, -1]
    else:
        empirical, direction = lower, V[:, 0]
    report = DistortionReport(empirical=float(max(empirical, 0.0)), argmax_point=direction.copy())
    return report, pair


def evaluate_main_bound(
    d_T: float,
    ell_star: float,
    k_star: float,
    m: int,
    n: int,
    delta: float,
    alpha: float,
    c: float = 1.0,
) -> BoundEvaluation:
    """2*delta*d_T^2 + c*(d_T*l*/sqrt(m) + l*^2/m) * log(e n / k*)^(2/alpha)."""
    if k_star <= 0:
        raise DomainError("k_star must be positive")
    if m < 1 or n < 1:
        raise DomainError("m and n must be >= 1")
    if not 0.0 < alpha <= 2.0:
        raise DomainError("alpha must lie in (0, 2]")
    log_factor = floored_log(math.e * n / k_star) ** (2.0 / alpha)
    value = 2.0 * delta * d_T**2 + c * (
        d_T * ell_star / math.sqrt(m) + ell_star**2 / m
    ) * log_factor
    return BoundEvaluation(
        name="main_theorem",
        value=float(value),
        constants_used={"c": c, "delta": delta, "alpha": alpha},
        inputs={"d_T": d_T, "ell_star": ell_star, "k_star": k_star, "m": m, "n": n},
    )


def evaluate_gaussian_bound(
    d_T: float,
    ell_star: float,
    k_star: float,
    m: int,
    u: float,
    c1: float = 1.0,
) -> BoundEvaluation:
    """c1 * (u * d_T * l* / sqrt(m) + u^2 * l*^2 / m), the benchmark error."""
    if u <= 0:
        raise DomainError("u must be positive")
    if m < 1:
        raise DomainError("m must be >= 1")
    value = c1 * (u * d_T * ell_star / math.sqrt(m) + u**2 * ell_star**2 / m)
    return BoundEvaluation(
        name="gaussian_benchmark",
        value=float(value),
        constants_used={"u": u, "c1": c1},
        inputs={"d_T": d_T, "ell_star": ell_star, "k_star": k_star, "m": m},
    )


def evaluate_logconcave_bound(
    d_T: float,
    ell_star: float,
    k_star: float,
    m: int,
    n: int,
    gamma: float,
    beta: float,
    c: float = 1.0,
    c_beta: float = 1.0,
) -> BoundEvaluation:
    """Thin-shell term c*d_T^2*(theta_m/sqrt(m))*log(e n/gamma) plus the
    squared-log variant of the main bound with constant c_beta."""
    if k_star <= 0:
        raise DomainError("k_star must be positive")
    if not 0.0 < gamma <= 1.0:
        raise DomainError("gamma must lie in (0, 1]")
    tm = theta_m(m)  # raises DomainError for m < 3
    first = c * d_T**2 * (tm / math.sqrt(m)) * floored_log(math.e * n / gamma)
    second = c_beta * (
        d_T * ell_star / math.sqrt(m) + ell_star**2 / m
    ) * floored_log(math.e * n / k_star) ** 2
    return BoundEvaluation(
        name="log_concave_corollary",
        value=float(first + second),
        constants_used={"c": c, "c_beta": c_beta, "beta": beta, "gamma": gamma},
        inputs={"d_T": d_T, "ell_star": ell_star, "k_star": k_star, "m": m, "n": n},
    )
