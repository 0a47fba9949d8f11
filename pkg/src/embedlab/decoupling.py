"""Sign-chaos quantities of a Gram matrix and their selector decoupling.

For a sign vector eps and coefficient vectors u, v the module computes

* ``Z_u``      the off-diagonal quadratic chaos
               sum_{i != j} G_ij eps_i eps_j u_i u_j, which completes the
               expansion ||A_eps u||^2 = sum_i ||A e_i||^2 u_i^2 + Z_u,
* ``W_{I,u}``  the Gram image of the sign-masked restriction of u to I,
* ``V_{I,u,v}`` the bilinear split chaos sum_{i in I} eps_i u_i (W_{I^c,v})_i,

and verifies the exact relations between them: Z_u equals four times the
selector average of V (enumerated exactly for n <= 16, Monte Carlo with a
confidence band otherwise), V telescopes bilinearly along an admissible
sequence, and sign sums obey the block-partition moment bound.  The chain
diagnostics combine these into the two-sided distortion decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedding_core import EmbeddingMatrix, GramMatrix, SignVector
from .errors import BudgetError, ConfigurationError, DimensionError
from .set_geometry import AdmissibleSequence, FiniteCloud, diameter

_ENUM_LIMIT = 16


def _as_signs(eps, n: int) -> np.ndarray:
    values = eps.values if isinstance(eps, SignVector) else np.asarray(eps)
    if len(values) != n:
        raise DimensionError(f"sign vector length {len(values)} != n = {n}")
    return np.asarray(values, dtype=np.float64)


def _as_mask(I, n: int) -> np.ndarray:
    arr = np.asarray(I)
    if arr.dtype == bool:
        if arr.size != n:
            raise DimensionError(f"mask length {arr.size} != n = {n}")
        return arr
    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(arr, dtype=np.int64)] = True
    return mask


def compute_W(G: GramMatrix, eps, I, u: np.ndarray) -> np.ndarray:
    """G applied to the sign-masked restriction of u to I."""
    n = G.n
    signs = _as_signs(eps, n)
    mask = _as_mask(I, n)
    u = np.asarray(u, dtype=np.float64)
    if u.size != n:
        raise DimensionError(f"vector length {u.size} != n = {n}")
    return G.entries @ (signs * u * mask)


def compute_V(G: GramMatrix, eps, I, u: np.ndarray, v: np.ndarray) -> float:
    """Bilinear split chaos: sum over i in I of eps_i u_i (W_{I^c, v})_i."""
    n = G.n
    signs = _as_signs(eps, n)
    mask = _as_mask(I, n)
    w = compute_W(G, eps, ~mask, v)
    u = np.asarray(u, dtype=np.float64)
    return float(np.sum(signs[mask] * u[mask] * w[mask]))


def compute_Z(G: GramMatrix, eps, u: np.ndarray) -> float:
    """Off-diagonal chaos; ||A_eps u||^2 minus its diagonal part."""
    n = G.n
    signs = _as_signs(eps, n)
    u = np.asarray(u, dtype=np.float64)
    if u.size != n:
        raise DimensionError(f"vector length {u.size} != n = {n}")
    w = signs * u
    M = np.outer(w, w) * G.entries
    return float(M.sum() - np.trace(M))


def selector_patterns(n: int) -> np.ndarray:
    """All 2^n selector patterns as a (2^n, n) 0/1 array; row k holds the
    bits of k with coordinate i on bit i."""
    if n > _ENUM_LIMIT:
        raise BudgetError(f"exact selector enumeration is limited to n <= {_ENUM_LIMIT}")
    k = np.arange(2**n, dtype=np.uint32)
    return ((k[:, None] >> np.arange(n)[None, :]) & 1).astype(np.float64)


def _v_over_patterns(
    G: np.ndarray, signs: np.ndarray, patterns: np.ndarray, u: np.ndarray, v: np.ndarray,
    complement: bool = False,
) -> np.ndarray:
    """V_{I,u,v} (or V_{I^c,u,v}) for every selector pattern row."""
    a = signs * np.asarray(u, dtype=np.float64)
    b = signs * np.asarray(v, dtype=np.float64)
    P = 1.0 - patterns if complement else patterns
    return np.einsum("ki,ij,kj->k", P * a[None, :], G, (1.0 - P) * b[None, :])


@dataclass(frozen=True)
class DecouplingIdentityReport:
    z_value: float
    four_mean_v: float
    residual: float
    mode: str
    samples: int
    std_error: float

    @property
    def relative_residual(self) -> float:
        return self.residual / (1.0 + abs(self.z_value))


def verify_decoupling_identity(
    G: GramMatrix,
    eps,
    u: np.ndarray,
    mode: str = "exact",
    samples: int = 4096,
    stream: np.random.Generator | None = None,
) -> DecouplingIdentityReport:
    """Check Z_u = 4 E_I V_{I,u,u} over fair selector patterns.

    ``exact`` enumerates all 2^n patterns (n <= 16); ``monte_carlo`` samples
    patterns and reports the standard error of the scaled mean.
    """
    n = G.n
    signs = _as_signs(eps, n)
    z = compute_Z(G, eps, u)
    if mode == "exact":
        patterns = selector_patterns(n)
        v_vals = _v_over_patterns(G.entries, signs, patterns, u, u)
        four_mean = 4.0 * float(v_vals.mean())
        return DecouplingIdentityReport(
            z_value=z,
            four_mean_v=four_mean,
            residual=abs(z - four_mean),
            mode=mode,
            samples=patterns.shape[0],
            std_error=0.0,
        )
    if mode == "monte_carlo":
        if stream is None:
            raise ConfigurationError("monte_carlo mode needs a stream")
        patterns = stream.integers(0, 2, size=(samples, n)).astype(np.float64)
        v_vals = _v_over_patterns(G.entries, signs, patterns, u, u)
        four_mean = 4.0 * float(v_vals.mean())
        se = 4.0 * float(v_vals.std(ddof=1) / math.sqrt(samples))
        return DecouplingIdentityReport(
            z_value=z,
            four_mean_v=four_mean,
            residual=abs(z - four_mean),
            mode=mode,
            samples=samples,
            std_error=se,
        )
    raise ConfigurationError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class BilinearityReport:
    identity_residual: float
    telescope_residual: float
    lemma_lhs: float
    lemma_rhs: float
    lemma_holds: bool
    s0: int
    s1: int


def verify_bilinearity_telescope(
    G: GramMatrix,
    eps,
    sequence: AdmissibleSequence,
    t_index: int,
    s0: int,
    s1: int,
) -> BilinearityReport:
    """Exhaustively verify the bilinear telescoping of V along a chain.

    For every selector pattern and every scale s0 <= s < s1, the split

        V_{I, pi_{s+1}t, pi_{s+1}t} = V_{I, pi_{s+1}t, Delta_s t}
                                    + V_{I, Delta_s t, pi_s t}
                                    + V_{I, pi_s t, pi_s t}

    must hold to machine precision, and consequently

        |Z_{pi_{s1}t}| <= |Z_{pi_{s0}t}|
             + 4 sum_s E_I( |V_{I^c, Delta_s t, pi_{s+1}t}|
                          + |V_{I, Delta_s t, pi_s t}| ).
    """
    if s0 > s1:
        raise DimensionError("s0 must be <= s1")
    n = G.n
    g = G.entries
    signs = _as_signs(eps, n)
    patterns = selector_patterns(n)

    identity_residual = 0.0
    abs_v_sum = 0.0
    signed_v_sum = 0.0
    for s in range(s0, s1):
        pi_next = sequence.pi(s + 1, t_index)
        pi_cur = sequence.pi(s, t_index)
        delta = pi_next - pi_cur
        lhs = _v_over_patterns(g, signs, patterns, pi_next, pi_next)
        term1 = _v_over_patterns(g, signs, patterns, pi_next, delta)
        term2 = _v_over_patterns(g, signs, patterns, delta, pi_cur)
        term3 = _v_over_patterns(g, signs, patterns, pi_cur, pi_cur)
        identity_residual = max(
            identity_residual, float(np.max(np.abs(lhs - term1 - term2 - term3)))
        )
        comp = np.abs(_v_over_patterns(g, signs, patterns, delta, pi_next, complement=True))
        plain = np.abs(_v_over_patterns(g, signs, patterns, delta, pi_cur))
        abs_v_sum += float(comp.mean() + plain.mean())
        signed_v_sum += float(
            _v_over_patterns(g, signs, patterns, pi_next, delta).mean()
            + _v_over_patterns(g, signs, patterns, delta, pi_cur).mean()
        )

    z_end = compute_Z(G, eps, sequence.pi(s1, t_index))
    z_start = compute_Z(G, eps, sequence.pi(s0, t_index))
    telescope_residual = abs(z_end - z_start - 4.0 * signed_v_sum)
    lemma_lhs = abs(z_end)
    lemma_rhs = abs(z_start) + 4.0 * abs_v_sum
    return BilinearityReport(
        identity_residual=identity_residual,
        telescope_residual=telescope_residual,
        lemma_lhs=lemma_lhs,
        lemma_rhs=lemma_rhs,
        lemma_holds=lemma_lhs <= lemma_rhs + 1e-9 * (1.0 + lemma_rhs),
        s0=s0,
        s1=s1,
    )


@dataclass(frozen=True)
class BernoulliMomentReport:
    p: int
    lhs: float
    lhs_std_error: float
    rhs_shape: float
    ratio: float
    blocks: tuple[np.ndarray, ...]
    mc_samples: int
    exact_second_moment: float | None


def bernoulli_moment_check(
    a: np.ndarray,
    b: np.ndarray,
    I,
    p: int,
    mc_samples: int,
    stream: np.random.Generator,
) -> BernoulliMomentReport:
    """Estimate (E |sum_{i in I} eps_i a_i b_i|^p)^(1/p) and compare it to the
    block-partition shape ||a||_2 * max_l || b restricted to I_l ||_2, where
    the blocks I_l chunk I into groups of p coordinates by decreasing |a_i|.
    """
    if p not in (2, 4, 8, 16):
        raise ConfigurationError("p must be one of 2, 4, 8, 16")
    if mc_samples < 10**4:
        raise ConfigurationError("bernoulli moment checks need mc_samples >= 10^4")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError("a and b must have the same length")
    idx = np.asarray(I, dtype=np.int64)

    # blocks of p coordinates by decreasing |a|, ties toward the lower index
    order = idx[np.lexsort((idx, -np.abs(a[idx])))]
    blocks = tuple(order[k : k + p] for k in range(0, order.size, p))
    rhs_shape = float(
        np.linalg.norm(a) * max(np.linalg.norm(b[blk]) for blk in blocks)
    )

    prod = a[idx] * b[idx]
    signs = 2.0 * stream.integers(0, 2, size=(mc_samples, idx.size)) - 1.0
    sums = np.abs(signs @ prod)
    powered = sums**p
    mean_pow = float(powered.mean())
    lhs = mean_pow ** (1.0 / p)
    se_mean = float(powered.std(ddof=1) / math.sqrt(mc_samples))
    # delta method for the p-th root
    lhs_se = se_mean / (p * mean_pow ** (1.0 - 1.0 / p)) if mean_pow > 0 else 0.0

    exact_p2 = float(np.sqrt(np.sum(prod * prod))) if p == 2 else None
    ratio = lhs / rhs_shape if rhs_shape > 0 else 0.0
    return BernoulliMomentReport(
        p=p,
        lhs=lhs,
        lhs_std_error=lhs_se,
        rhs_shape=rhs_shape,
        ratio=ratio,
        blocks=blocks,
        mc_samples=mc_samples,
        exact_second_moment=exact_p2,
    )


@dataclass(frozen=True)
class ChainDiagnostics:
    """Chaining split of the distortion over a finite cloud.

    phi       sup_t sum_{s >= s1} ||A_eps Delta_s t||  (finite: the sequence
              stabilizes, after which increments vanish),
    psi_sq    sup_t | ||A_eps pi_{s1} t||^2 - ||pi_{s1} t||^2 |,
    tail_term sup_t | ||pi_{s1} t||^2 - ||t||^2 |.

    The two-sided decomposition
        sup_t | ||A_eps t||^2 - ||t||^2 |
            <= psi_sq + 2 phi sqrt(psi_sq + d_T^2) + phi^2 + tail_term
    is evaluated on both sides.
    """

    phi: float
    psi_sq: float
    tail_term: float
    s0: int
    s1: int
    sup_distortion: float
    decomposition_rhs: float
    holds: bool


def chain_diagnostics(
    A_eps: EmbeddingMatrix,
    T: FiniteCloud,
    sequence: AdmissibleSequence,
    s0: int,
    s1: int,
) -> ChainDiagnostics:
    """Compute the chaining diagnostics of a (sign-randomized) embedding."""
    pts = T.points
    if sequence.points.shape != pts.shape or not np.array_equal(sequence.points, pts):
        raise DimensionError("the admissible sequence was not built on this cloud")
    if pts.shape[1] != A_eps.n:
        raise DimensionError(f"cloud lives in R^{pts.shape[1]} but n = {A_eps.n}")
    d = diameter(T)

    phi_per_point = np.zeros(pts.shape[0])
    for s in range(s1, sequence.num_levels - 1):
        deltas = sequence.delta_all(s)
        phi_per_point += np.linalg.norm(A_eps.entries @ deltas.T, axis=0)
    phi = float(phi_per_point.max())

    proj = sequence.points[sequence.assignments[min(s1, sequence.num_levels - 1)]]
    proj_img_sq = np.sum((A_eps.entries @ proj.T) ** 2, axis=0)
    proj_sq = np.sum(proj * proj, axis=1)
    psi_sq = float(np.max(np.abs(proj_img_sq - proj_sq)))
    t_sq = np.sum(pts * pts, axis=1)
    tail = float(np.max(np.abs(proj_sq - t_sq)))

    img_sq = np.sum((A_eps.entries @ pts.T) ** 2, axis=0)
    lhs = float(np.max(np.abs(img_sq - t_sq)))
    rhs = psi_sq + 2.0 * phi * math.sqrt(psi_sq + d * d) + phi * phi + tail
    return ChainDiagnostics(
        phi=phi,
        psi_sq=psi_sq,
        tail_term=tail,
        s0=s0,
        s1=s1,
        sup_distortion=lhs,
        decomposition_rhs=rhs,
        holds=lhs <= rhs + 1e-9 * (1.0 + rhs),
    )
