"""Recover (T, O) from a window moment tensor and score against a reference."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DecompositionError, DimensionMismatch, RankDeficient
from .hmm import Hmm, likelihood_matrix
from .moments import MomentTensor
from .tensor import (
    DecompositionOptions,
    DecompositionResult,
    khatri_rao,
    numerical_rank,
    pinv,
    simultaneous_diagonalize,
)


@dataclass
class RecoveryOptions:
    decomposition: DecompositionOptions = field(default_factory=DecompositionOptions)
    rank_tol: float = 1e-10

    @classmethod
    def for_empirical(cls) -> "RecoveryOptions":
        """Looser settings for plug-in moments: no pairing gate, more retries."""
        return cls(DecompositionOptions(pair_tol=None, rank_tol=1e-12, max_retries=20), rank_tol=1e-12)


@dataclass
class RecoveredHmm:
    That: np.ndarray
    Ohat: np.ndarray
    decomposition: DecompositionResult
    clamp_mass: dict
    column_permutation: Optional[np.ndarray] = None
    errors: Optional[dict] = None

    def as_hmm(self) -> Hmm:
        return Hmm(self.That, self.Ohat)

    def report(self) -> dict:
        d = self.decomposition
        return {
            "T": self.That.tolist(),
            "O": self.Ohat.tolist(),
            "column_permutation": None if self.column_permutation is None else self.column_permutation.tolist(),
            "errors": self.errors,
            "clamp_mass": self.clamp_mass,
            "decomposition": {
                "pairing_residuals": d.pairing_residuals.tolist(),
                "reconstruction_error": d.reconstruction_error,
                "retries": d.retries,
                "eigenvalues": d.eigenvalues.tolist(),
                "factor_clamp_residual": d.clamp_residual,
            },
        }


def marginalize_last(A: np.ndarray, m: int) -> np.ndarray:
    """Sum out the final symbol: ``m**t x n`` -> ``m**(t-1) x n``."""
    A = np.asarray(A, dtype=float)
    rows, n = A.shape
    if rows % m or rows < m:
        raise DimensionMismatch(f"{rows} rows is not a positive multiple of m={m}")
    return A.reshape(rows // m, m, n).sum(axis=1)


def align_columns(X: np.ndarray, Y: np.ndarray):
    """Optimal column matching of ``X`` onto ``Y`` under l1 distance.

    Returns ``(perm, dist)`` with ``X[:, perm[i]]`` matched to ``Y[:, i]`` and
    ``dist[i]`` their l1 distance.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape != Y.shape:
        raise DimensionMismatch(f"shapes differ: {X.shape} vs {Y.shape}")
    cost = np.abs(X[:, :, None] - Y[:, None, :]).sum(axis=0)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(X.shape[1], dtype=np.int64)
    perm[cols] = rows
    return perm, cost[perm, np.arange(X.shape[1])]


def _clamp_columns(M: np.ndarray):
    neg = float(-np.minimum(M, 0).sum())
    M = np.clip(M, 0, None)
    sums = M.sum(axis=0)
    sums[sums == 0] = 1.0
    return M / sums, neg


def _matrix_errors(est: np.ndarray, ref: np.ndarray) -> dict:
    col = np.abs(est - ref).sum(axis=0)
    return {"l1_total": float(col.sum()), "max_col_l1": float(col.max())}


def recover(
    M: MomentTensor,
    n: int,
    seed: int,
    opts: Optional[RecoveryOptions] = None,
    reference: Optional[Hmm] = None,
) -> RecoveredHmm:
    opts = opts or RecoveryOptions()
    m, tau = M.m, M.tau
    if n > m**tau:
        raise DimensionMismatch(f"n={n} exceeds m**tau={m**tau}")
    dec = simultaneous_diagonalize(M.tensor, n, seed, opts.decomposition)
    mass = dec.Chat.sum(axis=0)
    if np.any(mass <= 0) or not np.all(np.isfinite(dec.Chat)):
        raise DecompositionError(f"{int(np.sum(~(mass > 0)))} recovered component(s) carry no mass")
    Ohat = dec.Chat / mass[None, :]
    Aprev = marginalize_last(dec.Ahat, m) if tau > 1 else np.ones((1, n))
    design = khatri_rao(Ohat, Aprev)
    rank = numerical_rank(design, opts.rank_tol)
    if rank < n:
        raise RankDeficient(f"O kr A^(tau-1) has numerical rank {rank} < n={n}")
    That = pinv(design, opts.rank_tol) @ dec.Ahat
    That, t_clamp = _clamp_columns(That)
    Ohat, o_clamp = _clamp_columns(Ohat)
    out = RecoveredHmm(That, Ohat, dec, {"T": t_clamp, "O": o_clamp})
    if reference is not None:
        score_against(out, reference, tau)
    return out


def score_against(rec: RecoveredHmm, reference: Hmm, tau: int) -> RecoveredHmm:
    """Align recovered states to ``reference`` and fill in ``errors``.

    States are matched on the stacked columns ``[O; A]`` (emission plus future
    likelihood), which separate states even when emission columns coincide.
    """
    A_ref = likelihood_matrix(reference, tau)
    est = np.vstack([rec.Ohat, rec.decomposition.Ahat])
    ref = np.vstack([reference.O, A_ref])
    perm, _ = align_columns(est, ref)
    T_al = rec.That[np.ix_(perm, perm)]
    O_al = rec.Ohat[:, perm]
    errs = {"T": _matrix_errors(T_al, reference.T), "O": _matrix_errors(O_al, reference.O)}
    errs["max_col_l1"] = max(errs["T"]["max_col_l1"], errs["O"]["max_col_l1"])
    rec.column_permutation = perm
    rec.errors = errs
    return rec
