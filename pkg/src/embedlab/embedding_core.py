"""Column-ensemble embedding matrices and their Gram-matrix views.

The embedding A : R^n -> R^m stacks n independent draws of a vector model as
columns, each scaled by 1/sqrt(m) so that E ||A t||^2 = ||t||^2 for isotropic
models.  Sign and selector vectors randomize and split the columns; every
downstream statistic is a functional of the Gram matrix G = A^T A.

Matrices are dense and immutable after construction (desk scale is
n <= 2048, m <= 8192), so they are safe to share across parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError
from .rng import substream
from .vector_models import RandomVectorModel, sample_matrix


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EmbeddingMatrix:
    """m x n matrix whose column i is the i-th sampled vector over sqrt(m)."""

    entries: np.ndarray
    m: int
    n: int
    normalized: bool = True

    def __post_init__(self) -> None:
        if self.entries.shape != (self.m, self.n):
            raise DimensionError(
                f"entries shape {self.entries.shape} != (m, n) = ({self.m}, {self.n})"
            )

    def column_sq_norms(self) -> np.ndarray:
        """||A e_i||^2 for every column i."""
        return np.sum(self.entries * self.entries, axis=0)

    def apply(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if t.shape[-1] != self.n and t.shape[0] != self.n:
            raise DimensionError(f"vector length {t.shape} incompatible with n={self.n}")
        return self.entries @ t


@dataclass(frozen=True)
class SignVector:
    """Length-n vector of +-1 column signs."""

    values: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        vals = np.asarray(self.values)
        if not np.all(np.abs(vals) == 1):
            raise DimensionError("sign vector entries must be +-1")

    @property
    def n(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SelectorVector:
    """Length-n vector of {0,1} selectors; the induced set is I = {i : v_i = 1}."""

    values: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        vals = np.asarray(self.values)
        if not np.all((vals == 0) | (vals == 1)):
            raise DimensionError("selector entries must be 0 or 1")

    @property
    def index_set(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.values) == 1)


def random_signs(n: int, seed: int) -> SignVector:
    stream = substream(seed, "signs")
    values = 2 * stream.integers(0, 2, size=n).astype(np.int8) - 1
    return SignVector(values=_freeze(values), seed=seed)


def random_selector(n: int, seed: int) -> SelectorVector:
    # selector probability is fixed at 1/2
    stream = substream(seed, "selector")
    values = stream.integers(0, 2, size=n).astype(np.int8)
    return SelectorVector(values=_freeze(values), seed=seed)


@dataclass(frozen=True)
class GramMatrix:
    """n x n symmetric matrix G = A^T A; G_ij = <A e_i, A e_j>."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        g = self.entries
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise DimensionError(f"Gram matrix must be square, got {g.shape}")
        asym = float(np.max(np.abs(g - g.T))) if g.size else 0.0
        if asym > 1e-12:
            raise DimensionError(f"Gram matrix asymmetric by {asym:g} (> 1e-12)")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries)


def build_embedding(
    model: RandomVectorModel, n: int, stream: np.random.Generator
) -> EmbeddingMatrix:
    """Stack n iid draws of the model as columns, scaled by 1/sqrt(m)."""
    if n < 1:
        raise DimensionError("n must be >= 1")
    draws = sample_matrix(model, n, stream)  # (n, m)
    entries = draws.T / np.sqrt(model.dim)
    return EmbeddingMatrix(entries=_freeze(entries), m=model.dim, n=n)


def randomize_columns(A: EmbeddingMatrix, eps: SignVector | np.ndarray) -> EmbeddingMatrix:
    """Multiply column i of A by eps_i.  Involutive: applying eps twice gives A."""
    values = eps.values if isinstance(eps, SignVector) else np.asarray(eps)
    if len(values) != A.n:
        raise DimensionError(f"sign vector length {len(values)} != n = {A.n}")
    entries = A.entries * np.asarray(values, dtype=np.float64)[np.newaxis, :]
    return EmbeddingMatrix(entries=_freeze(entries), m=A.m, n=A.n, normalized=A.normalized)


def column_norm_deviation(A: EmbeddingMatrix) -> float:
    """max_i | ||A e_i||^2 - 1 |, the distortion of the standard basis."""
    return float(np.max(np.abs(A.column_sq_norms() - 1.0)))


def gram(A: EmbeddingMatrix) -> GramMatrix:
    g = A.entries.T @ A.entries
    # enforce exact symmetry; the diagonal is unchanged by the averaging
    g = (g + g.T) / 2.0
    return GramMatrix(entries=_freeze(g))


def save_matrix_csv(path: str | Path, matrix: np.ndarray) -> None:
    """One row per matrix row, comma separated, shortest round-trip decimals."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", encoding="ascii") as fh:
        for row in matrix:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def load_matrix_csv(path: str | Path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise DimensionError(f"{path}: empty matrix file")
    return np.array(rows, dtype=np.float64)
