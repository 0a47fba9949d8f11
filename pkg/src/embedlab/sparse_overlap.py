"""Sparse overlap statistics and sparse operator norms of an embedding.

The central quantity is the overlap of an index split (I, I^c) at sparsity
ell: the maximum of <Ax, Ay> over unit vectors x supported on at most ell
coordinates of I and y on at most ell coordinates of I^c.  Because the
spheres are signed, this equals the largest operator norm of a Gram block
G[S1, S2] over support pairs, which is what the searches below maximize.

Search strategies:

* ``exhaustive``      enumerate all support pairs (exact; budget-guarded),
* ``greedy``          deterministic support growth from the largest Gram entry,
* ``local_search``    greedy growth followed by 1-swap improvement,
* ``random_restart``  several greedy+swap runs from random seed coordinates
                      (run 0 is the deterministic greedy start), keep the best.

Heuristic values are certified lower bounds: every strategy returns the
support pair and attaining unit vectors as a certificate.

The module also hosts the selector average (expectation of the overlap over
uniformly random index splits, exact for n <= 16 or Monte Carlo), the fit of
the smallest constant making the dyadic overlap profile sit below
max(sqrt(2^s/m), 2^s/m) * log(en/2^s)^(2/alpha), and three diagnostic
checks: a scale-halving recursion for the overlap, an order-statistic tail
experiment, and the self-bounding inequality tying sparse operator norms to
overlaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .embedding_core import EmbeddingMatrix, GramMatrix, SelectorVector, gram
from .errors import BudgetError, ConfigurationError, DimensionError, DomainError
from .rng import fork, substream
from .vector_models import RandomVectorModel, sample_matrix

STRATEGIES = ("exhaustive", "greedy", "local_search", "random_restart")

_DEFAULT_EXHAUSTIVE_LIMIT = 10**6
_SVD_CHUNK_ELEMENTS = 1 << 24


# ---------------------------------------------------------------------------
# rearrangement identities
# ---------------------------------------------------------------------------

def rearrangement_slice_norm(values: np.ndarray, lo: int, hi: int) -> float:
    """l2 norm of ranks lo+1..hi of the nonincreasing rearrangement of |values|."""
    a = np.sort(np.abs(np.asarray(values, dtype=np.float64).ravel()))[::-1]
    if lo >= a.size:
        return 0.0
    return float(np.linalg.norm(a[lo:hi]))


def rearrangement_norm(values: np.ndarray, ell: int) -> float:
    """l2 norm of the ell largest |values|; equals the maximum of <x, values>
    over unit vectors x with at most ell nonzero coordinates."""
    if ell < 1:
        raise DimensionError("ell must be >= 1")
    return rearrangement_slice_norm(values, 0, ell)


# ---------------------------------------------------------------------------
# support handling and small-block linear algebra
# ---------------------------------------------------------------------------

def as_index_set(I, n: int) -> np.ndarray:
    """Normalize an index-set argument (selector, mask, or index iterable)."""
    if isinstance(I, SelectorVector):
        idx = I.index_set
    else:
        arr = np.asarray(I)
        if arr.dtype == bool:
            if arr.size != n:
                raise DimensionError(f"boolean mask length {arr.size} != n = {n}")
            idx = np.flatnonzero(arr)
        else:
            idx = np.unique(arr.astype(np.int64))
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise DimensionError(f"index set out of range for n = {n}")
    return idx.astype(np.int64)


def _pair_search_cost(n1: int, n2: int, ell: int) -> int:
    # supports of exact size min(ell, side) dominate by inclusion, so the
    # enumeration cost is one binomial per side (not a sum over sizes)
    return math.comb(n1, min(ell, n1)) * math.comb(n2, min(ell, n2))


def _combos(idx: np.ndarray, size: int) -> np.ndarray:
    return np.array(list(combinations(idx.tolist(), size)), dtype=np.int64).reshape(-1, size)


def _svd_top(block: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    u, s, vt = np.linalg.svd(block, full_matrices=False)
    return float(s[0]), u[:, 0], vt[0, :]


def _eigh_top(block: np.ndarray) -> tuple[float, np.ndarray]:
    w, v = np.linalg.eigh(block)
    return float(max(w[-1], 0.0)), v[:, -1]


def _batched_max_sigma(
    G: np.ndarray, combos1: np.ndarray, combos2: np.ndarray
) -> tuple[float, int, int]:
    """Largest top singular value over all Gram blocks G[S1, S2]."""
    c1, a = combos1.shape
    c2, b = combos2.shape
    if a == 1 and b == 1:
        block = np.abs(G[combos1[:, 0]][:, combos2[:, 0]])
        flat = int(np.argmax(block))
        return float(block.flat[flat]), flat // c2, flat % c2
    chunk = max(1, _SVD_CHUNK_ELEMENTS // max(1, c2 * a * b))
    best, best_i, best_j = -1.0, 0, 0
    for start in range(0, c1, chunk):
        rows = combos1[start : start + chunk]
        blocks = G[rows[:, None, :, None], combos2[None, :, None, :]]
        sig = np.linalg.svd(blocks, compute_uv=False)[..., 0]
        flat = int(np.argmax(sig))
        val = float(sig.flat[flat])
        if val > best:
            best = val
            best_i = start + flat // c2
            best_j = flat % c2
    return best, best_i, best_j


# ---------------------------------------------------------------------------
# overlap statistic O_{I, ell}
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OverlapCertificate:
    support_x: np.ndarray
    support_y: np.ndarray
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class SparseOverlapStat:
    value: float
    I: np.ndarray
    ell: int
    strategy: str
    certificate: OverlapCertificate | None
    is_exact: bool


def _embed(n: int, support: np.ndarray, local: np.ndarray) -> np.ndarray:
    full = np.zeros(n)
    full[support] = local
    return full


def _pair_certificate(
    G: np.ndarray, S1: np.ndarray, S2: np.ndarray
) -> tuple[float, OverlapCertificate]:
    sigma, xloc, yloc = _svd_top(G[np.ix_(S1, S2)])
    n = G.shape[0]
    return sigma, OverlapCertificate(
        support_x=np.sort(S1),
        support_y=np.sort(S2),
        x=_embed(n, S1, xloc),
        y=_embed(n, S2, yloc),
    )


def _exhaustive_pair_search(
    G: np.ndarray, idx1: np.ndarray, idx2: np.ndarray, a: int, b: int
) -> tuple[float, np.ndarray, np.ndarray]:
    combos1 = _combos(idx1, a)
    combos2 = _combos(idx2, b)
    value, i, j = _batched_max_sigma(G, combos1, combos2)
    return value, combos1[i], combos2[j]


def _grow_pair(
    G: np.ndarray,
    idx1: np.ndarray,
    idx2: np.ndarray,
    a: int,
    b: int,
    i0: int,
    j0: int,
) -> tuple[list[int], list[int], float, np.ndarray, np.ndarray]:
    S1, S2 = [i0], [j0]
    sigma = abs(float(G[i0, j0]))
    xloc = np.array([1.0])
    yloc = np.array([1.0 if G[i0, j0] >= 0 else -1.0])
    while len(S1) < a or len(S2) < b:
        grow_x = len(S1) < a and (len(S1) <= len(S2) or len(S2) >= b)
        if grow_x:
            cand = np.setdiff1d(idx1, S1)
            scores = np.abs(G[np.ix_(cand, S2)] @ yloc)
            S1.append(int(cand[int(np.argmax(scores))]))
        else:
            cand = np.setdiff1d(idx2, S2)
            scores = np.abs(G[np.ix_(S1, cand)].T @ xloc)
            S2.append(int(cand[int(np.argmax(scores))]))
        sigma, xloc, yloc = _svd_top(G[np.ix_(S1, S2)])
    return S1, S2, sigma, xloc, yloc


def _one_swap_pair(
    G: np.ndarray,
    idx1: np.ndarray,
    idx2: np.ndarray,
    S1: list[int],
    S2: list[int],
    sigma: float,
    xloc: np.ndarray,
    yloc: np.ndarray,
    max_passes: int,
) -> tuple[list[int], list[int], float]:
    for _ in range(max_passes):
        improved = False
        out1 = np.setdiff1d(idx1, S1)
        if out1.size:
            worst = int(np.argmin(np.abs(xloc)))
            scores = np.abs(G[np.ix_(out1, S2)] @ yloc)
            trial = list(S1)
            trial[worst] = int(out1[int(np.argmax(scores))])
            s_new, x_new, y_new = _svd_top(G[np.ix_(trial, S2)])
            if s_new > sigma + 1e-15:
                S1, sigma, xloc, yloc = trial, s_new, x_new, y_new
                improved = True
        out2 = np.setdiff1d(idx2, S2)
        if out2.size:
            worst = int(np.argmin(np.abs(yloc)))
            scores = np.abs(G[np.ix_(S1, out2)].T @ xloc)
            trial = list(S2)
            trial[worst] = int(out2[int(np.argmax(scores))])
            s_new, x_new, y_new = _svd_top(G[np.ix_(S1, trial)])
            if s_new > sigma + 1e-15:
                S2, sigma, xloc, yloc = trial, s_new, x_new, y_new
                improved = True
        if not improved:
            break
    return S1, S2, sigma


def overlap_stat(
    G: GramMatrix,
    I,
    ell: int,
    strategy: str = "exhaustive",
    stream: np.random.Generator | None = None,
    restarts: int = 50,
    swap_passes: int = 30,
    exhaustive_limit: int = _DEFAULT_EXHAUSTIVE_LIMIT,
) -> SparseOverlapStat:
    """Maximal <Ax, Ay> over ell-sparse unit x on I and y on I^c.

    ``exhaustive`` is exact; the other strategies return certified lower
    bounds (is_exact=False).  An empty I or I^c yields 0 with no certificate.
    """
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if ell < 1:
        raise DimensionError("ell must be >= 1")
    g = G.entries
    n = G.n
    idx1 = as_index_set(I, n)
    idx2 = np.setdiff1d(np.arange(n, dtype=np.int64), idx1)
    if idx1.size == 0 or idx2.size == 0:
        return SparseOverlapStat(0.0, idx1, ell, strategy, None, True)
    a = min(ell, idx1.size)
    b = min(ell, idx2.size)

    if strategy == "exhaustive":
        cost = _pair_search_cost(idx1.size, idx2.size, ell)
        if cost > exhaustive_limit:
            raise BudgetError(
                f"exhaustive overlap search needs {cost} support pairs "
                f"(> {exhaustive_limit}); use a heuristic strategy"
            )
        _, S1, S2 = _exhaustive_pair_search(g, idx1, idx2, a, b)
        value, cert = _pair_certificate(g, S1, S2)
        return SparseOverlapStat(value, idx1, ell, strategy, cert, True)

    # deterministic greedy start: the largest |G| entry across the split
    block = np.abs(g[np.ix_(idx1, idx2)])
    flat = int(np.argmax(block))
    start0 = (int(idx1[flat // idx2.size]), int(idx2[flat % idx2.size]))

    starts = [start0]
    if strategy == "random_restart":
        if stream is None:
            stream = substream(0, "overlap_restarts")
        for _ in range(max(0, restarts - 1)):
            starts.append(
                (
                    int(idx1[int(stream.integers(idx1.size))]),
                    int(idx2[int(stream.integers(idx2.size))]),
                )
            )

    best_val = -1.0
    best_pair: tuple[list[int], list[int]] | None = None
    for i0, j0 in starts:
        S1, S2, sigma, xloc, yloc = _grow_pair(g, idx1, idx2, a, b, i0, j0)
        if strategy in ("local_search", "random_restart"):
            S1, S2, sigma = _one_swap_pair(
                g, idx1, idx2, S1, S2, sigma, xloc, yloc, swap_passes
            )
        if sigma > best_val:
            best_val, best_pair = sigma, (S1, S2)
    assert best_pair is not None
    value, cert = _pair_certificate(g, np.array(best_pair[0]), np.array(best_pair[1]))
    return SparseOverlapStat(value, idx1, ell, strategy, cert, False)


# ---------------------------------------------------------------------------
# sparse operator norm M_{I, ell}
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormCertificate:
    support: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class SparseNormStat:
    value: float
    I: np.ndarray
    ell: int
    strategy: str
    certificate: NormCertificate | None
    is_exact: bool


def _support_certificate(
    G: np.ndarray, S: np.ndarray
) -> tuple[float, NormCertificate]:
    lam, xloc = _eigh_top(G[np.ix_(S, S)])
    return math.sqrt(lam), NormCertificate(
        support=np.sort(S), x=_embed(G.shape[0], S, xloc)
    )


def _grow_support(
    G: np.ndarray, idx: np.ndarray, a: int, i0: int
) -> tuple[list[int], float, np.ndarray]:
    S = [i0]
    lam = max(float(G[i0, i0]), 0.0)
    xloc = np.array([1.0])
    while len(S) < a:
        cand = np.setdiff1d(idx, S)
        scores = np.abs(G[np.ix_(cand, S)] @ xloc)
        S.append(int(cand[int(np.argmax(scores))]))
        lam, xloc = _eigh_top(G[np.ix_(S, S)])
    return S, lam, xloc


def _one_swap_support(
    G: np.ndarray,
    idx: np.ndarray,
    S: list[int],
    lam: float,
    xloc: np.ndarray,
    max_passes: int,
) -> tuple[list[int], float]:
    for _ in range(max_passes):
        out = np.setdiff1d(idx, S)
        if not out.size:
            break
        worst = int(np.argmin(np.abs(xloc)))
        scores = np.abs(G[np.ix_(out, S)] @ xloc)
        trial = list(S)
        trial[worst] = int(out[int(np.argmax(scores))])
        lam_new, x_new = _eigh_top(G[np.ix_(trial, trial)])
        if lam_new > lam + 1e-15:
            S, lam, xloc = trial, lam_new, x_new
        else:
            break
    return S, lam


def sparse_operator_norm(
    A: EmbeddingMatrix | GramMatrix,
    I,
    ell: int,
    strategy: str = "exhaustive",
    stream: np.random.Generator | None = None,
    restarts: int = 50,
    swap_passes: int = 30,
    exhaustive_limit: int = _DEFAULT_EXHAUSTIVE_LIMIT,
) -> SparseNormStat:
    """Largest singular value of a column submatrix A[:, S] over supports
    S inside I with |S| <= ell (computed through the Gram matrix)."""
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if ell < 1:
        raise DimensionError("ell must be >= 1")
    G = A if isinstance(A, GramMatrix) else gram(A)
    g = G.entries
    n = G.n
    idx = as_index_set(I, n)
    if idx.size == 0:
        return SparseNormStat(0.0, idx, ell, strategy, None, True)
    a = min(ell, idx.size)

    if strategy == "exhaustive":
        cost = math.comb(idx.size, min(ell, idx.size))
        if cost > exhaustive_limit:
            raise BudgetError(
                f"exhaustive sparse-norm search needs {cost} supports "
                f"(> {exhaustive_limit}); use a heuristic strategy"
            )
        cmb = _combos(idx, a)
        chunk = max(1, _SVD_CHUNK_ELEMENTS // max(1, a * a))
        best, best_i = -1.0, 0
        for start in range(0, cmb.shape[0], chunk):
            rows = cmb[start : start + chunk]
            blocks = g[rows[:, :, None], rows[:, None, :]]
            lam = np.linalg.eigvalsh(blocks)[..., -1]
            i = int(np.argmax(lam))
            if float(lam[i]) > best:
                best, best_i = float(lam[i]), start + i
        value, cert = _support_certificate(g, cmb[best_i])
        return SparseNormStat(value, idx, ell, strategy, cert, True)

    start0 = int(idx[int(np.argmax(np.diag(g)[idx]))])
    starts = [start0]
    if strategy == "random_restart":
        if stream is None:
            stream = substream(0, "norm_restarts")
        for _ in range(max(0, restarts - 1)):
            starts.append(int(idx[int(stream.integers(idx.size))]))

    best_val, best_S = -1.0, None
    for i0 in starts:
        S, lam, xloc = _grow_support(g, idx, a, i0)
        if strategy in ("local_search", "random_restart"):
            S, lam = _one_swap_support(g, idx, S, lam, xloc, swap_passes)
        if lam > best_val:
            best_val, best_S = lam, S
    assert best_S is not None
    value, cert = _support_certificate(g, np.array(best_S))
    return SparseNormStat(value, idx, ell, strategy, cert, False)


# ---------------------------------------------------------------------------
# selector average O_ell = E_I O_{I, ell}
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectorAverage:
    value: float
    mode: str  # "exact_enumeration" or "monte_carlo"
    std_error: float
    samples: int


def _pattern_overlap_value(
    G: GramMatrix,
    mask: np.ndarray,
    ell: int,
    stream: np.random.Generator | None,
    restarts: int,
    auto_exhaustive_limit: int,
) -> float:
    idx1 = np.flatnonzero(mask)
    idx2 = np.flatnonzero(~mask)
    if idx1.size == 0 or idx2.size == 0:
        return 0.0
    cost = _pair_search_cost(idx1.size, idx2.size, ell)
    if cost <= auto_exhaustive_limit:
        return overlap_stat(G, idx1, ell, "exhaustive").value
    return overlap_stat(
        G, idx1, ell, "random_restart", stream=stream, restarts=restarts
    ).value


def selector_average(
    G: GramMatrix,
    ell: int,
    mode: str = "exact_enumeration",
    stream: np.random.Generator | None = None,
    samples: int = 2048,
    restarts: int = 8,
    auto_exhaustive_limit: int = 20000,
) -> SelectorAverage:
    """Mean overlap over index splits drawn with iid fair selectors.

    ``exact_enumeration`` averages over all 2^n selector patterns (n <= 16
    only); ``monte_carlo`` averages over sampled patterns and reports a
    standard error.  Patterns whose overlap exceeds the exhaustive budget are
    evaluated with the restart heuristic.
    """
    n = G.n
    if mode == "exact_enumeration":
        if n > 16:
            raise BudgetError(
                f"exact selector enumeration is limited to n <= 16, got n = {n}"
            )
        total = 0.0
        for bits in range(2**n):
            mask = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
            total += _pattern_overlap_value(
                G, mask, ell, None, restarts, auto_exhaustive_limit
            )
        return SelectorAverage(total / 2**n, mode, 0.0, 2**n)
    if mode == "monte_carlo":
        if stream is None:
            raise ConfigurationError("monte_carlo selector averaging needs a stream")
        if samples < 2:
            raise ConfigurationError("monte_carlo selector averaging needs samples >= 2")
        vals = np.empty(samples)
        for k in range(samples):
            mask = stream.integers(0, 2, size=n).astype(bool)
            vals[k] = _pattern_overlap_value(
                G, mask, ell, fork(stream), restarts, auto_exhaustive_limit
            )
        return SelectorAverage(
            float(vals.mean()),
            mode,
            float(vals.std(ddof=1) / math.sqrt(samples)),
            samples,
        )
    raise ConfigurationError(f"unknown selector mode {mode!r}")


# ---------------------------------------------------------------------------
# fitted profile constant
# ---------------------------------------------------------------------------

def _floored_log(x: float) -> float:
    return 1.0 if x <= math.e else math.log(x)


@dataclass(frozen=True)
class ScaleFit:
    two_s: int
    value: float
    bound_shape: float
    ratio: float
    std_error: float


@dataclass(frozen=True)
class AssumptionFit:
    C_A: float
    alpha: float
    per_scale: dict[int, ScaleFit] = field(default_factory=dict)


def fit_assumption_constant(
    G: GramMatrix,
    alpha: float,
    m: int,
    n: int,
    selector_mode: str = "exact_enumeration",
    stream: np.random.Generator | None = None,
    samples: int = 64,
    restarts: int = 8,
    auto_exhaustive_limit: int = 20000,
) -> AssumptionFit:
    """Smallest constant making the dyadic overlap profile sit below
    max(sqrt(2^s/m), 2^s/m) * log(en/2^s)^(2/alpha) on this realization."""
    if n != G.n:
        raise DimensionError(f"n = {n} does not match Gram size {G.n}")
    if not 0.0 < alpha <= 2.0:
        raise DomainError("alpha must lie in (0, 2]")
    per_scale: dict[int, ScaleFit] = {}
    c_a = 0.0
    s = 0
    while 2**s <= n:
        two_s = 2**s
        avg = selector_average(
            G,
            two_s,
            mode=selector_mode,
            stream=None if stream is None else fork(stream),
            samples=samples,
            restarts=restarts,
            auto_exhaustive_limit=auto_exhaustive_limit,
        )
        shape = max(math.sqrt(two_s / m), two_s / m) * _floored_log(
            math.e * n / two_s
        ) ** (2.0 / alpha)
        ratio = avg.value / shape
        per_scale[s] = ScaleFit(two_s, avg.value, shape, ratio, avg.std_error)
        c_a = max(c_a, ratio)
        s += 1
    return AssumptionFit(C_A=c_a, alpha=alpha, per_scale=per_scale)


# ---------------------------------------------------------------------------
# scale-halving recursion check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleRecursionRecord:
    r: int
    two_r: int
    lhs: float
    o_prev: float
    e_term: float
    f_term: float
    e_sphere_est: float
    f_sphere_est: float
    rhs: float
    holds: bool


@dataclass(frozen=True)
class DimensionReductionReport:
    records: tuple[ScaleRecursionRecord, ...]
    all_hold: bool
    truncated_at: int | None


def _slice_of_image(
    G: np.ndarray, target: np.ndarray, z_full: np.ndarray, lo: int, hi: int
) -> float:
    return rearrangement_slice_norm((G @ z_full)[target], lo, hi)


def _slice_sphere_search(
    G: np.ndarray,
    target: np.ndarray,
    support_combos: np.ndarray,
    lo: int,
    hi: int,
    iters: int = 3,
) -> float:
    """Best found value of the rank-(lo, hi] slice of (G z)|target over unit z
    on each candidate support (alternating sparsify/solve ascent)."""
    best = 0.0
    for S in support_combos:
        M = G[np.ix_(target, S)]
        _, _, z = _svd_top(M)
        for _ in range(iters + 1):
            w = M @ z
            order = np.argsort(-np.abs(w))
            val = float(np.linalg.norm(w[order[lo:hi]]))
            best = max(best, val)
            sub = M[order[lo:hi], :]
            if not sub.size:
                break
            _, _, z = _svd_top(sub)
    return best


def dimension_reduction_check(
    G: GramMatrix,
    I,
    s: int,
    exhaustive_limit: int = _DEFAULT_EXHAUSTIVE_LIMIT,
    sphere_search: bool = True,
) -> DimensionReductionReport:
    """Verify, scale by scale, that halving the sparsity loses at most two
    order-statistic slice terms:

        O_{I, 2^r}  <=  O_{I, 2^(r-1)}  +  E_r  +  F_r      for 1 <= r <= s,

    where E_r is the rank-(2^(r-1), 2^r] slice of |(G y)|_I| at the attaining
    y, and F_r the matching slice over I^c at the attaining reduced-sparsity
    x.  All maximizations are exact sparse-sphere searches; the slice terms
    are evaluated at the extremal certificates (plus an optional ascent
    search, reported separately, which can only enlarge the right side).
    """
    g = G.entries
    n = G.n
    idx1 = as_index_set(I, n)
    idx2 = np.setdiff1d(np.arange(n, dtype=np.int64), idx1)
    if idx1.size == 0 or idx2.size == 0:
        return DimensionReductionReport((), True, None)

    records: list[ScaleRecursionRecord] = []
    truncated_at: int | None = None
    for r in range(1, s + 1):
        hi = 2**r
        lo = 2 ** (r - 1)
        a_hi, b_hi = min(hi, idx1.size), min(hi, idx2.size)
        a_lo, b_lo = min(lo, idx1.size), min(lo, idx2.size)
        cost = (
            math.comb(idx1.size, a_hi) * math.comb(idx2.size, b_hi)
            + math.comb(idx1.size, a_lo) * math.comb(idx2.size, b_lo)
            + math.comb(idx1.size, a_lo) * math.comb(idx2.size, b_hi)
        )
        if cost > exhaustive_limit:
            truncated_at = r
            break

        lhs, S1_hi, S2_hi = _exhaustive_pair_search(g, idx1, idx2, a_hi, b_hi)
        o_prev, _, _ = _exhaustive_pair_search(g, idx1, idx2, a_lo, b_lo)
        # two-scale stage: x at the halved sparsity, y still at full sparsity
        _, S1_mid, S2_mid = _exhaustive_pair_search(g, idx1, idx2, a_lo, b_hi)

        _, cert_hi = _pair_certificate(g, S1_hi, S2_hi)
        _, cert_mid = _pair_certificate(g, S1_mid, S2_mid)
        e_term = _slice_of_image(g, idx1, cert_hi.y, lo, hi)
        f_term = _slice_of_image(g, idx2, cert_mid.x, lo, hi)

        e_sphere = e_term
        f_sphere = f_term
        if sphere_search:
            e_sphere = max(
                e_sphere,
                _slice_sphere_search(g, idx1, _combos(idx2, b_hi), lo, hi),
            )
            f_sphere = max(
                f_sphere,
                _slice_sphere_search(g, idx2, _combos(idx1, a_lo), lo, hi),
            )

        rhs = o_prev + e_term + f_term
        holds = lhs <= rhs + 1e-9 * (1.0 + abs(lhs))
        records.append(
            ScaleRecursionRecord(
                r=r,
                two_r=hi,
                lhs=lhs,
                o_prev=o_prev,
                e_term=e_term,
                f_term=f_term,
                e_sphere_est=e_sphere,
                f_sphere_est=f_sphere,
                rhs=rhs,
                holds=holds,
            )
        )
    return DimensionReductionReport(
        records=tuple(records),
        all_hold=all(rec.holds for rec in records),
        truncated_at=truncated_at,
    )


# ---------------------------------------------------------------------------
# order-statistic tail experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrderStatTailReport:
    two_s: int
    n_copies: int
    collection_size: int
    u_grid: tuple[float, ...]
    thresholds: tuple[float, ...]
    exceed_rates: tuple[float, ...]
    rates_nonincreasing: bool
    order_stats: np.ndarray


def order_statistic_tail_check(
    model: RandomVectorModel,
    collection_size: int,
    s: int,
    u: float,
    alpha: float,
    L: float,
    mc_trials: int,
    n_copies: int,
    c3: float = 1.0,
    u_factors: tuple[float, ...] = (1.0, 2.0, 4.0),
    stream: np.random.Generator | None = None,
) -> OrderStatTailReport:
    """Monte Carlo exceedance rates for the 2^s-th largest marginal.

    The collection holds `collection_size` unit-direction marginals of the
    model; each trial draws `n_copies` fresh copies of the vector, takes the
    2^s-th largest |marginal| per direction, and maxes over the collection.
    The exceedance threshold at level u' is
    c3 * u' * log(e * n_copies / 2^s)^(1/alpha); since all model marginals
    have unit second moment, the max L2 norm in the threshold is exactly 1.
    Rates are reported on a u-grid and must not increase with u.
    """
    if u < math.e:
        raise DomainError("u must be >= e")
    two_s = 2**s
    if n_copies < two_s:
        raise DimensionError(f"n_copies = {n_copies} < 2^s = {two_s}")
    if stream is None:
        stream = substream(model.seed, "order_stat_tail")
    dirs = stream.standard_normal((model.dim, collection_size))
    dirs /= np.linalg.norm(dirs, axis=0, keepdims=True)

    stats = np.empty(mc_trials)
    for t in range(mc_trials):
        draws = sample_matrix(model, n_copies, fork(stream))
        z = np.abs(draws @ dirs)  # (n_copies, collection_size)
        kth = np.partition(z, n_copies - two_s, axis=0)[n_copies - two_s]
        stats[t] = kth.max()

    log_factor = _floored_log(math.e * n_copies / two_s) ** (1.0 / alpha)
    u_grid = tuple(u * f for f in u_factors)
    thresholds = tuple(c3 * uu * log_factor for uu in u_grid)
    rates = tuple(float(np.mean(stats > thr)) for thr in thresholds)
    nonincreasing = all(rates[i + 1] <= rates[i] + 1e-12 for i in range(len(rates) - 1))
    return OrderStatTailReport(
        two_s=two_s,
        n_copies=n_copies,
        collection_size=collection_size,
        u_grid=u_grid,
        thresholds=thresholds,
        exceed_rates=rates,
        rates_nonincreasing=nonincreasing,
        order_stats=stats,
    )


# ---------------------------------------------------------------------------
# self-bounding inequality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelfBoundingRecord:
    s: int
    two_s: int
    norm_sq: float
    max_col_sq: float
    overlap_avg: float
    rhs: float
    holds: bool


@dataclass(frozen=True)
class SelfBoundingReport:
    records: tuple[SelfBoundingRecord, ...]
    delta_observed: float
    col_sq_consistent: bool
    all_hold: bool


def self_bounding_check(
    A: EmbeddingMatrix,
    delta_observed: float,
    selector_mode: str = "exact_enumeration",
    stream: np.random.Generator | None = None,
    samples: int = 2048,
    norm_strategy: str = "exhaustive",
    exhaustive_limit: int = _DEFAULT_EXHAUSTIVE_LIMIT,
) -> SelfBoundingReport:
    """Check (M_{2^s})^2 <= max_i ||A e_i||^2 + 4 * O_{2^s} at every dyadic
    scale of the given realization."""
    G = gram(A)
    n = G.n
    max_col_sq = float(np.max(G.diagonal()))
    all_idx = np.arange(n, dtype=np.int64)
    records: list[SelfBoundingRecord] = []
    s = 0
    while 2**s <= n:
        two_s = 2**s
        norm_stat = sparse_operator_norm(
            G, all_idx, two_s, strategy=norm_strategy, stream=stream,
            exhaustive_limit=exhaustive_limit,
        )
        avg = selector_average(
            G,
            two_s,
            mode=selector_mode,
            stream=None if stream is None else fork(stream),
            samples=samples,
        )
        norm_sq = norm_stat.value**2
        rhs = max_col_sq + 4.0 * avg.value
        holds = norm_sq <= rhs + 1e-9 * (1.0 + abs(rhs))
        records.append(
            SelfBoundingRecord(
                s=s,
                two_s=two_s,
                norm_sq=norm_sq,
                max_col_sq=max_col_sq,
                overlap_avg=avg.value,
                rhs=rhs,
                holds=holds,
            )
        )
        s += 1
    return SelfBoundingReport(
        records=tuple(records),
        delta_observed=delta_observed,
        col_sq_consistent=max_col_sq <= 1.0 + delta_observed + 1e-12,
        all_hold=all(rec.holds for rec in records),
    )


# ---------------------------------------------------------------------------
# per-scale CSV emission
# ---------------------------------------------------------------------------

def scale_stats_csv_rows(
    stats: list[SparseOverlapStat | SparseNormStat], seed: int
) -> list[dict]:
    """Flatten per-scale statistics into the report row schema
    (s, two_s, strategy, value, is_exact, certificate_supports, seed)."""
    rows = []
    for s, stat in enumerate(stats):
        if isinstance(stat, SparseOverlapStat) and stat.certificate is not None:
            supports = "{}|{}".format(
                " ".join(map(str, stat.certificate.support_x)),
                " ".join(map(str, stat.certificate.support_y)),
            )
        elif isinstance(stat, SparseNormStat) and stat.certificate is not None:
            supports = " ".join(map(str, stat.certificate.support))
        else:
            supports = ""
        rows.append(
            {
                "s": s,
                "two_s": stat.ell,
                "strategy": stat.strategy,
                "value": stat.value,
                "is_exact": stat.is_exact,
                "certificate_supports": supports,
                "seed": seed,
            }
        )
    return rows
