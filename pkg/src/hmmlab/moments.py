"""Window moment tensors.

``M[index_of(future), index_of(past), present]`` is the stationary probability
of the window ``y_{-tau} .. y_tau``, where ``future = y_1 .. y_tau`` and
``past = y_{-1}, y_{-2}, .., y_{-tau}`` (most recent first).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AlphabetMismatch, EmptyInput, SizeCap
from .hmm import DEFAULT_ROW_CAP, Hmm, joint_factor, likelihood_matrix, reverse_likelihood_matrix
from .indexing import IndexMap, index_of, string_of
from .tensor import Tensor3, outer3

__all__ = [
    "IndexMap",
    "MomentTensor",
    "empirical_moment_tensor",
    "exact_moment_tensor",
    "index_of",
    "string_of",
    "window_moment_by_paths",
]


@dataclass(frozen=True, eq=False)
class MomentTensor:
    tensor: Tensor3
    m: int
    tau: int
    provenance: str = "exact"
    sample_count: Optional[int] = None
    seed: Optional[int] = None

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    def to_csv(self) -> str:
        """Nonzero entries as ``future_idx,past_idx,present,value`` rows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["future_idx", "past_idx", "present", "value"])
        for f, p, l in zip(*np.nonzero(self.data)):
            w.writerow([int(f), int(p), int(l), repr(float(self.data[f, p, l]))])
        return buf.getvalue()


def exact_moment_tensor(h: Hmm, tau: int, cap: int = DEFAULT_ROW_CAP) -> MomentTensor:
    if h.m**tau > cap:
        raise SizeCap(f"m**tau = {h.m}**{tau} exceeds row cap {cap}")
    pi = h.stationary_or_compute()
    A = likelihood_matrix(h, tau, cap)
    B = reverse_likelihood_matrix(h, tau, pi, cap)
    C = joint_factor(h, pi)
    return MomentTensor(outer3(A, B, C), h.m, tau, "exact")


def window_moment_by_paths(h: Hmm, tau: int) -> np.ndarray:
    """Moment tensor by summing over every hidden path of the window.

    Independent of the factorisation; exponential cost, for small checks.
    """
    pi = h.stationary_or_compute()
    N = 2 * tau + 1
    m = h.m
    # joint over (h_{-tau}, y_{-tau}) then roll forward one step at a time
    P = (pi[:, None] * h.O.T)  # shape (n, m): state, first symbol
    P = P.T  # (m, n) with symbols axis first
    for _ in range(N - 1):
        # P[..., j] -> sum_j P[..., j] T[i, j] O[l, i]
        P = np.einsum("...j,ij,li->...li", P, h.T, h.O)
    win = P.sum(axis=-1)  # axes: y_{-tau}, ..., y_tau
    imap = IndexMap(m, tau)
    out = np.zeros((m**tau, m**tau, m))
    for w in np.ndindex(*win.shape):
        past = tuple(reversed(w[:tau]))
        fut = w[tau + 1 :]
        out[imap.index_of(fut), imap.index_of(past), w[tau]] = win[w]
    return out


def empirical_moment_tensor(windows, m: int, tau: int, seed: Optional[int] = None) -> MomentTensor:
    windows = np.asarray(windows, dtype=np.int64)
    if windows.size == 0:
        raise EmptyInput("no windows supplied")
    if windows.ndim != 2 or windows.shape[1] != 2 * tau + 1:
        raise AlphabetMismatch(f"windows must have length {2 * tau + 1}, got shape {windows.shape}")
    if windows.min() < 0 or windows.max() >= m:
        raise AlphabetMismatch(f"symbols outside [0, {m})")
    imap = IndexMap(m, tau)
    fut = imap.index_rows(windows[:, tau + 1 :])
    past = imap.index_rows(windows[:, tau - 1 :: -1] if tau > 0 else windows[:, :0])
    flat = (fut * imap.size + past) * m + windows[:, tau]
    counts = np.bincount(flat, minlength=imap.size * imap.size * m)
    data = counts.reshape(imap.size, imap.size, m) / windows.shape[0]
    return MomentTensor(Tensor3(data), m, tau, "empirical", windows.shape[0], seed)
