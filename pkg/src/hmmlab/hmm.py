"""Hidden Markov model container and exact likelihood computations.

Conventions: ``T[i, j] = P[h_{t+1} = i | h_t = j]`` and
``O[l, j] = P[y_t = l | h_t = j]``, so both matrices are column-stochastic.
Output strings index rows through the big-endian map in :mod:`hmmlab.indexing`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as _rng
from .errors import NonConvergent, SizeCap, ZeroStationaryMass

STOCHASTIC_TOL = 1e-12
STATIONARY_TOL = 1e-10
DEFAULT_ROW_CAP = 2**20


@dataclass(frozen=True)
class Violation:
    matrix: str
    column: int
    kind: str
    residual: float

    def __str__(self):
        return f"{self.matrix}[:, {self.column}]: {self.kind} (residual {self.residual:.3g})"


@dataclass(frozen=True, eq=False)
class Hmm:
    T: np.ndarray
    O: np.ndarray
    pi: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        T = np.array(self.T, dtype=float)
        O = np.array(self.O, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ValueError(f"T must be square, got shape {T.shape}")
        if O.ndim != 2 or O.shape[1] != T.shape[0]:
            raise ValueError(f"O must be m x {T.shape[0]}, got shape {O.shape}")
        T.setflags(write=False)
        O.setflags(write=False)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "O", O)
        if self.pi is not None:
            pi = np.array(self.pi, dtype=float)
            if pi.shape != (T.shape[0],):
                raise ValueError(f"pi must have length {T.shape[0]}")
            pi.setflags(write=False)
            object.__setattr__(self, "pi", pi)

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def m(self) -> int:
        return self.O.shape[0]

    def with_stationary(self, **kwargs) -> "Hmm":
        if self.pi is not None:
            return self
        return Hmm(self.T, self.O, stationary(self, **kwargs))

    def stationary_or_compute(self) -> np.ndarray:
        return self.pi if self.pi is not None else stationary(self)

    def to_dict(self) -> dict:
        d = {"n": self.n, "m": self.m, "T": self.T.tolist(), "O": self.O.tolist()}
        if self.pi is not None:
            d["pi"] = self.pi.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Hmm":
        h = cls(np.asarray(d["T"]), np.asarray(d["O"]), d.get("pi"))
        if ("n" in d and d["n"] != h.n) or ("m" in d and d["m"] != h.m):
            raise ValueError("declared n/m disagree with matrix shapes")
        return h

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Hmm":
        return cls.from_dict(json.loads(text))


def _column_violations(name: str, M: np.ndarray, tol: float) -> list[Violation]:
    out = []
    for j in range(M.shape[1]):
        col = M[:, j]
        if not np.all(np.isfinite(col)):
            out.append(Violation(name, j, "non-finite entry", float("nan")))
            continue
        low = col.min()
        if low < 0:
            out.append(Violation(name, j, "negative entry", float(-low)))
        high = col.max()
        if high > 1:
            out.append(Violation(name, j, "entry above 1", float(high - 1)))
        resid = abs(col.sum() - 1.0)
        if resid > tol:
            out.append(Violation(name, j, "column sum != 1", float(resid)))
    return out


def validate(h: Hmm, tol: float = STOCHASTIC_TOL) -> list[Violation]:
    """Return every invariant violation of ``h``; an empty list means valid."""
    report = _column_violations("T", h.T, tol) + _column_violations("O", h.O, tol)
    if h.pi is not None:
        pi = h.pi
        if pi.min() < 0:
            report.append(Violation("pi", int(pi.argmin()), "negative entry", float(-pi.min())))
        if abs(pi.sum() - 1) > STATIONARY_TOL:
            report.append(Violation("pi", -1, "sum != 1", float(abs(pi.sum() - 1))))
        resid = np.abs(h.T @ pi - pi)
        if resid.max() > STATIONARY_TOL:
            report.append(Violation("pi", int(resid.argmax()), "not stationary", float(resid.max())))
    return report


def _power(P: np.ndarray, x: np.ndarray, tol: float, max_iter: int):
    for it in range(max_iter):
        y = P @ x
        y /= y.sum()
        if np.abs(y - x).sum() <= tol:
            return y, it + 1
        x = y
    return None, max_iter


def stationary(h, tol: float = STATIONARY_TOL, max_iter: int = 100_000) -> np.ndarray:
    """Stationary distribution of ``h.T`` (or of a bare transition matrix).

    Plain power iteration from the uniform vector first; periodic chains such
    as cycles do not converge that way, so the fallback iterates the averaged
    operator ``(I + T) / 2``, which has the same fixed points and is aperiodic.
    """
    T = h.T if isinstance(h, Hmm) else np.asarray(h, dtype=float)
    n = T.shape[0]
    x0 = np.full(n, 1.0 / n)
    pi, _ = _power(T, x0, tol / 4, max_iter)
    if pi is None:
        pi, _ = _power(0.5 * (np.eye(n) + T), x0, tol / 4, max_iter)
    if pi is None or np.abs(T @ pi - pi).sum() > tol:
        raise NonConvergent(
            f"stationary distribution not reached in {max_iter} iterations; chain may not be ergodic"
        )
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def time_reverse(h: Hmm, pi: Optional[np.ndarray] = None) -> np.ndarray:
    """``T'[i, j] = T[j, i] * pi[i] / pi[j]``."""
    pi = np.asarray(pi if pi is not None else h.stationary_or_compute(), dtype=float)
    if pi.min() < 1e-14:
        raise ZeroStationaryMass(f"state {int(pi.argmin())} has stationary mass {pi.min():.3g}")
    return h.T.T * pi[:, None] / pi[None, :]


def _check_cap(m: int, tau: int, cap: int) -> None:
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if m**tau > cap:
        raise SizeCap(f"m**tau = {m}**{tau} exceeds row cap {cap}")


def _khatri_rao(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return (P[:, None, :] * Q[None, :, :]).reshape(P.shape[0] * Q.shape[0], P.shape[1])


def likelihood_from(T: np.ndarray, O: np.ndarray, tau: int, cap: int = DEFAULT_ROW_CAP) -> np.ndarray:
    """Forward likelihood matrix for an arbitrary (T, O) pair.

    ``A1 = O T`` and ``A_t = (O kr A_{t-1}) T``; row ``index_of(l_1..l_t)``,
    column ``i`` holds ``P[y_1..y_t = l | h_0 = i]``.
    """
    _check_cap(O.shape[0], tau, cap)
    A = O @ T
    for _ in range(tau - 1):
        A = _khatri_rao(O, A) @ T
    return A


def likelihood_matrix(h: Hmm, tau: int, cap: int = DEFAULT_ROW_CAP) -> np.ndarray:
    return likelihood_from(h.T, h.O, tau, cap)


def reverse_likelihood_matrix(
    h: Hmm, tau: int, pi: Optional[np.ndarray] = None, cap: int = DEFAULT_ROW_CAP
) -> np.ndarray:
    """Likelihood of the past ``y_{-1}, ..., y_{-tau}`` (most recent first) given ``h_0``."""
    return likelihood_from(time_reverse(h, pi), h.O, tau, cap)


def joint_factor(h: Hmm, pi: Optional[np.ndarray] = None) -> np.ndarray:
    """``C[l, i] = P[y_0 = l, h_0 = i] = O[l, i] * pi[i]``."""
    pi = np.asarray(pi if pi is not None else h.stationary_or_compute(), dtype=float)
    return h.O * pi[None, :]


def _categorical(cdf: np.ndarray, cols: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Draw row indices from the column distributions ``cdf[:, cols]``."""
    out = np.empty(cols.shape[0], dtype=np.int64)
    for c in np.unique(cols):
        sel = cols == c
        col = cdf[:, c]
        out[sel] = np.minimum(np.searchsorted(col, u[sel], side="right"), col.shape[0] - 1)
    return out


def sample_windows(
    h: Hmm, tau: int, count: int, seed: int, return_states: bool = False, chunk: int = 1 << 18
):
    """Draw ``count`` i.i.d. stationary windows ``y_{-tau} .. y_{tau}``.

    Returns an integer array of shape ``(count, 2*tau + 1)``; column ``tau`` is
    the present symbol. With ``return_states`` also returns the hidden paths.
    """
    if tau < 1 or count < 1:
        raise ValueError("tau and count must be positive")
    pi = h.stationary_or_compute()
    N = 2 * tau + 1
    gen = _rng.generator(seed, "sample_windows")
    T_cdf = np.cumsum(h.T, axis=0)
    O_cdf = np.cumsum(h.O, axis=0)
    pi_cdf = np.cumsum(pi)
    ys = np.empty((count, N), dtype=np.int64)
    hs = np.empty((count, N), dtype=np.int64) if return_states else None
    for start in range(0, count, chunk):
        size = min(chunk, count - start)
        u = gen.random((size, 2 * N))
        state = np.minimum(np.searchsorted(pi_cdf, u[:, 0], side="right"), h.n - 1)
        for t in range(N):
            if t > 0:
                state = _categorical(T_cdf, state, u[:, 2 * t])
            ys[start : start + size, t] = _categorical(O_cdf, state, u[:, 2 * t + 1])
            if return_states:
                hs[start : start + size, t] = state
    return (ys, hs) if return_states else ys
