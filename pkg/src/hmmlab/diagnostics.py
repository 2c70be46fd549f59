"""Measurements of the learnability conditions: conditioning, cycle structure,
degree and support mass, Kruskal's condition, and window-counting bounds."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from . import rng as _rng
from .errors import BudgetExceeded, DimensionMismatch
from .hmm import DEFAULT_ROW_CAP, Hmm, likelihood_matrix, time_reverse
from .indexing import IndexMap
from .tensor import numerical_rank

EXACT_L1_MAX_N = 16
RANK_TOL = 1e-8
KAPPA_FLOOR = 1e-13


# -- conditioning -----------------------------------------------------------


def sigma_min_l2(T) -> float:
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {T.shape}")
    return float(np.linalg.svd(T, compute_uv=False)[-1])


@dataclass
class L1Budget:
    restarts: int = 20
    iterations: int = 500
    seed: int = 0


def _l1_face_min(T: np.ndarray, signs: np.ndarray) -> float:
    """min ||T x||_1 over the face {sign(x) = signs, sum |x| = 1}, as an LP in (x, u)."""
    n = T.shape[0]
    c = np.concatenate([np.zeros(n), np.ones(n)])
    I = np.eye(n)
    A_ub = np.block([[T, -I], [-T, -I]])
    b_ub = np.zeros(2 * n)
    A_eq = np.concatenate([signs, np.zeros(n)])[None, :]
    bounds = [(0, None) if s > 0 else (None, 0) for s in signs] + [(0, None)] * n
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed on sign pattern {signs}: {res.message}")
    return float(res.fun)


def _l1_exact(T: np.ndarray) -> float:
    n = T.shape[0]
    best = math.inf
    # x and -x give the same ratio, so fix the first sign
    for tail in itertools.product((1.0, -1.0), repeat=n - 1):
        best = min(best, _l1_face_min(T, np.array((1.0,) + tail)))
    return best


def _l1_heuristic(T: np.ndarray, budget: L1Budget) -> float:
    n = T.shape[0]
    gen = _rng.generator(budget.seed, "sigma_l1", n)
    # coordinate vectors are cheap exact candidates
    best = float(np.abs(T).sum(axis=0).min())
    for _ in range(budget.restarts):
        x = gen.standard_normal(n)
        x /= np.abs(x).sum()
        step = 0.5
        for it in range(budget.iterations):
            val = np.abs(T @ x).sum()
            best = min(best, float(val))
            g = T.T @ np.sign(T @ x)
            # project the subgradient onto the tangent of the l1 sphere
            g = g - np.sign(x) * (np.sign(x) @ g) / max(np.count_nonzero(x), 1)
            x = x - step / math.sqrt(it + 1) * g
            norm = np.abs(x).sum()
            if norm == 0:
                break
            x /= norm
        best = min(best, float(np.abs(T @ x).sum()))
    return best


def sigma_min_l1(T, mode: str = "exact", budget: Optional[L1Budget] = None) -> tuple[float, str]:
    """Minimum l1-to-l1 gain ``min_x ||T x||_1 / ||x||_1``.

    ``mode="exact"`` solves one LP per sign orthant (``2**(n-1)`` of them) and
    is limited to ``n <= 16``. ``mode="heuristic"`` runs projected subgradient
    descent and returns the best value seen, which is an upper bound; the tag
    in the returned pair says which one you got.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {T.shape}")
    if mode == "exact":
        if T.shape[0] > EXACT_L1_MAX_N:
            raise BudgetExceeded(f"exact sigma_min_l1 limited to n <= {EXACT_L1_MAX_N}, got {T.shape[0]}")
        return _l1_exact(T), "exact"
    if mode == "heuristic":
        return _l1_heuristic(T, budget or L1Budget()), "heuristic-upper-bound"
    raise ValueError(f"unknown mode {mode!r}")


def condition_number_A(h: Hmm, tau: int, cap: int = DEFAULT_ROW_CAP) -> float:
    """``sigma_max / sigma_n`` of the likelihood matrix, ``inf`` if rank deficient."""
    return kappa(likelihood_matrix(h, tau, cap))


def kappa(A: np.ndarray) -> float:
    s = np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False)
    n = A.shape[1]
    if s.size < n or s[n - 1] < KAPPA_FLOOR * s[0]:
        return math.inf
    return float(s[0] / s[n - 1])


# -- walk structure ---------------------------------------------------------


@dataclass
class VisitStatistic:
    delta1: float  # failure fraction, start state uniform over states
    stderr: float
    worst_state: float  # max over start states of the per-state failure rate
    worst_state_index: int
    stationary: Optional[float] = None  # failure rate with start ~ pi

    def __iter__(self):
        # unpacks as (delta1_hat, stderr)
        return iter((self.delta1, self.stderr))


def visit_statistic(
    T,
    walk_len: int,
    distinct_target: int,
    trials: int = 100_000,
    seed: int = 0,
    pi: Optional[np.ndarray] = None,
) -> VisitStatistic:
    """Monte Carlo rate of walks that see fewer than ``distinct_target`` states.

    A walk of ``walk_len`` time steps is the state sequence ``h_0 .. h_{walk_len-1}``.
    Trials are stratified evenly over start states.
    """
    T = np.asarray(T, dtype=float)
    n = T.shape[0]
    per_state = max(1, math.ceil(trials / n))
    gen = _rng.generator(seed, "visit", n, walk_len, distinct_target)
    starts = np.repeat(np.arange(n), per_state)
    cdf = np.cumsum(T, axis=0)
    path = np.empty((starts.size, walk_len), dtype=np.int64)
    path[:, 0] = starts
    for t in range(1, walk_len):
        u = gen.random(starts.size)
        prev = path[:, t - 1]
        path[:, t] = np.minimum((u[:, None] >= cdf[:, prev].T).sum(axis=1), n - 1)
    srt = np.sort(path, axis=1)
    distinct = 1 + (np.diff(srt, axis=1) != 0).sum(axis=1)
    fail = (distinct < distinct_target).astype(float)
    by_state = fail.reshape(n, per_state).mean(axis=1)
    rate = float(fail.mean())
    stderr = float(np.sqrt(rate * (1 - rate) / fail.size))
    stat = None if pi is None else float(np.asarray(pi) @ by_state)
    return VisitStatistic(rate, stderr, float(by_state.max()), int(by_state.argmax()), stat)


def mass_profile(M, d: int):
    """Per-column mass outside the ``d`` largest entries, and its maximum."""
    M = np.asarray(M, dtype=float)
    if d < 1:
        raise ValueError("d must be >= 1")
    srt = -np.sort(-M, axis=0)
    resid = srt[d:].sum(axis=0)
    return resid, float(resid.max()) if resid.size else 0.0


# -- Kruskal ----------------------------------------------------------------


@dataclass
class KruskalReport:
    rankA: int
    rankB: int
    minC_pair_sep: float
    k: int
    verdict: str

    @property
    def satisfied(self) -> bool:
        return self.verdict == "satisfied"


def min_pair_separation(C) -> float:
    C = np.asarray(C, dtype=float)
    k = C.shape[1]
    if k < 2:
        return math.inf
    norms = np.linalg.norm(C, axis=0)
    U = C / np.where(norms > 0, norms, 1.0)[None, :]
    D = np.linalg.norm(U[:, :, None] - U[:, None, :], axis=0)
    return float(D[np.triu_indices(k, 1)].min())


def kruskal_check(A, B, C, tol: float = RANK_TOL) -> KruskalReport:
    A, B, C = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (A, B, C))
    if not A.shape[1] == B.shape[1] == C.shape[1]:
        raise DimensionMismatch("factor column counts differ")
    k = A.shape[1]
    rA, rB = numerical_rank(A, tol), numerical_rank(B, tol)
    sep = min_pair_separation(C)
    ok = rA == k and rB == k and sep > tol
    return KruskalReport(rA, rB, sep, k, "satisfied" if ok else "violated")


def hmm_kruskal_check(h: Hmm, tau: int, tol: float = RANK_TOL) -> KruskalReport:
    from .hmm import joint_factor, reverse_likelihood_matrix

    pi = h.stationary_or_compute()
    return kruskal_check(
        likelihood_matrix(h, tau), reverse_likelihood_matrix(h, tau, pi), joint_factor(h, pi), tol
    )


# -- counting ---------------------------------------------------------------

_SATURATED = (1 << 63) - 1


def counting_rank_bound(c: int, m: int, t: int) -> int:
    """``(2t/c) ** (m**c)`` measurement bound for unions of ``c``-cycles, saturating."""
    if c < 1 or t < c:
        raise ValueError("need c >= 1 and t >= c")
    exponent = m**c
    base = 2 * t / c
    if exponent * math.log2(max(base, 1.0)) >= 63:
        return _SATURATED
    return int(math.floor(base**exponent + 1e-9))


def count_vector_bound(c: int, m: int, t: int) -> int:
    """Number of distinct per-residue symbol-count tuples over all ``m**t`` strings.

    On a union of ``c``-cycles the probability of a length-``t`` string from a
    given start state depends only on, for each position residue mod ``c``,
    how many times each symbol occurs there. Counted by enumeration.
    """
    imap = IndexMap(m, t)
    strings = imap.all_strings()
    keys = np.zeros((strings.shape[0], c * m), dtype=np.int64)
    for pos in range(t):
        keys[np.arange(strings.shape[0]), (pos % c) * m + strings[:, pos]] += 1
    return int(np.unique(keys, axis=0).shape[0])


def count_vector_bound_closed_form(c: int, m: int, t: int) -> int:
    total = 1
    for r in range(c):
        slots = len(range(r, t, c))
        total *= math.comb(slots + m - 1, m - 1)
    return total


# -- profile ----------------------------------------------------------------

C1, C2, C3 = 20, 16, 10


@dataclass
class AssumptionProfile:
    n: int
    m: int
    sigma1_T: float
    sigma1_T_method: str
    sigma1_Trev: float
    sigma1_Trev_method: str
    sigma2_T: float
    sigma2_Trev: float
    walk_len: int
    distinct_target: int
    visit_T: dict
    visit_Trev: dict
    d: int
    delta2: float
    k: int
    delta3: float
    thresholds: dict = field(default_factory=dict)
    implied_c: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _c_from_delta(delta: float, n: int) -> float:
    # delta <= n**-c  <=>  c <= -log(delta) / log(n)
    return math.inf if delta <= 0 else -math.log(delta) / math.log(n)


def assumption_profile(
    h: Hmm,
    d: Optional[int] = None,
    k: Optional[int] = None,
    trials: int = 100_000,
    seed: int = 0,
    l1_mode: Optional[str] = None,
) -> AssumptionProfile:
    """Measure every quantity the learnability conditions refer to.

    No single verdict is returned; ``implied_c`` reports the constant range
    each measurement is consistent with.
    """
    n, m = h.n, h.m
    pi = h.stationary_or_compute()
    Trev = time_reverse(h, pi)
    mode = l1_mode or ("exact" if n <= 10 else "heuristic")
    s1, tag1 = sigma_min_l1(h.T, mode, L1Budget(seed=seed))
    s1r, tag1r = sigma_min_l1(Trev, mode, L1Budget(seed=seed + 1))
    logm = math.log(n) / math.log(m) if m > 1 else float(n)
    walk_len = max(2, math.ceil(15 * logm))
    target = max(1, math.ceil(10 * logm))
    vT = visit_statistic(h.T, walk_len, target, trials, seed, pi)
    vR = visit_statistic(Trev, walk_len, target, trials, seed + 1, pi)
    d = d if d is not None else max(1, int(math.floor(m ** (1 / C2))))
    k = k if k is not None else max(1, int(math.floor(m ** (1 / C3))))
    delta2 = max(mass_profile(h.T, d)[1], mass_profile(Trev, d)[1])
    delta3 = mass_profile(h.O, k)[1]
    thresholds = {"c1": C1, "c2": C2, "c3": C3, "d_max": m ** (1 / C2), "k_max": m ** (1 / C3)}
    s_min = min(s1, s1r)
    # sigma1 >= m**(-c/c1)  <=>  c >= c1 * log(1/sigma1) / log(m)
    c_low = 0.0 if s_min >= 1 else (math.inf if s_min <= 0 else C1 * math.log(1 / s_min) / math.log(m))
    uppers = {
        "delta1": _c_from_delta(max(vT.worst_state, vR.worst_state), n),
        "delta2": _c_from_delta(delta2, n),
        "delta3": _c_from_delta(delta3, n),
    }
    c_high = min(uppers.values())
    implied = {
        "c_min_sigma1": c_low,
        **{f"c_max_{name}": v for name, v in uppers.items()},
        "feasible": c_low <= c_high,
        "sigma1_is_upper_bound": tag1 != "exact",
    }
    return AssumptionProfile(
        n, m, s1, tag1, s1r, tag1r, sigma_min_l2(h.T), sigma_min_l2(Trev),
        walk_len, target, asdict(vT), asdict(vR), d, delta2, k, delta3, thresholds, implied,
    )
