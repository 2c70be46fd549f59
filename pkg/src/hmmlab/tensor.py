"""Dense third-order tensors and Jennrich-style simultaneous diagonalization.

Matricization ordering is fixed so that for ``M = outer3(A, B, C)``::

    matricize(M, 1) == A @ khatri_rao(B, C).T
    matricize(M, 2) == B @ khatri_rao(A, C).T
    matricize(M, 3) == C @ khatri_rao(A, B).T

where ``khatri_rao(P, Q)[:, r] == np.kron(P[:, r], Q[:, r])``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import rng as _rng
from .errors import (
    ComplexEigenvalues,
    DecompositionError,
    DegenerateSpectrum,
    DimensionMismatch,
    PairingFailure,
    SingularProjection,
)

_MAGIC = b"HMT3"
_HEADER = struct.Struct("<4s3Q")


@dataclass(frozen=True, eq=False)
class Tensor3:
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 3:
            raise DimensionMismatch(f"expected a 3-way array, got ndim={data.ndim}")
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor entries must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def to_bytes(self) -> bytes:
        """``HMT3`` magic, three little-endian uint64 dims, then float64 LE data (C order)."""
        return _HEADER.pack(_MAGIC, *self.dims) + self.data.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Tensor3":
        magic, d1, d2, d3 = _HEADER.unpack_from(buf)
        if magic != _MAGIC:
            raise ValueError("not a Tensor3 buffer")
        body = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
        if body.size != d1 * d2 * d3:
            raise DimensionMismatch(f"payload has {body.size} entries, header says {d1 * d2 * d3}")
        return cls(body.reshape(d1, d2, d3))


def _as_array(M) -> np.ndarray:
    return M.data if isinstance(M, Tensor3) else np.asarray(M, dtype=float)


def _same_rank(*mats: np.ndarray) -> int:
    ks = {m.shape[1] for m in mats}
    if len(ks) != 1:
        raise DimensionMismatch(f"factor column counts differ: {[m.shape for m in mats]}")
    return ks.pop()


def outer3(A, B, C) -> Tensor3:
    A, B, C = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (A, B, C))
    _same_rank(A, B, C)
    return Tensor3(np.einsum("ir,jr,kr->ijk", A, B, C))


def matricize(M, mode: int) -> np.ndarray:
    X = _as_array(M)
    d1, d2, d3 = X.shape
    if mode == 1:
        return X.reshape(d1, d2 * d3)
    if mode == 2:
        return X.transpose(1, 0, 2).reshape(d2, d1 * d3)
    if mode == 3:
        return X.transpose(2, 0, 1).reshape(d3, d1 * d2)
    raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


def khatri_rao(A, B) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    k = _same_rank(A, B)
    return (A[:, None, :] * B[None, :, :]).reshape(A.shape[0] * B.shape[0], k)


def project3(M, w) -> np.ndarray:
    X = _as_array(M)
    w = np.asarray(w, dtype=float)
    if w.shape != (X.shape[2],):
        raise DimensionMismatch(f"projection vector length {w.shape} != d3={X.shape[2]}")
    return X @ w


def pinv(M, rank_tol: float = 1e-10) -> np.ndarray:
    """Moore-Penrose pseudoinverse, dropping singular values below ``rank_tol * s_max``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros(M.shape[::-1])
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > rank_tol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def numerical_rank(M, rel_tol: float = 1e-8) -> int:
    s = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


@dataclass
class DecompositionOptions:
    pair_tol: Optional[float] = 1e-6
    recon_tol: float = 1e-8
    rank_tol: float = 1e-10
    imag_tol: float = 1e-8
    # relative eigenvalue gap below which two components are indistinguishable
    gap_tol: float = 1e-9
    max_retries: int = 5
    compress: bool = True


@dataclass
class DecompositionResult:
    Ahat: np.ndarray
    Bhat: np.ndarray
    Chat: np.ndarray
    projections: tuple[np.ndarray, np.ndarray]
    pairing_residuals: np.ndarray
    reconstruction_error: float
    eigenvalues: np.ndarray
    retries: int = 0
    clamp_residual: dict = field(default_factory=dict)

    def components(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        return [(self.Ahat[:, r], self.Bhat[:, r], self.Chat[:, r]) for r in range(self.Ahat.shape[1])]


def _unit_vector(gen: np.random.Generator, d: int) -> np.ndarray:
    v = gen.standard_normal(d)
    return v / np.linalg.norm(v)


def _real_eig(S: np.ndarray, imag_tol: float):
    vals, vecs = np.linalg.eig(S)
    scale = max(1.0, np.abs(vals).max())
    if np.abs(vals.imag).max() > imag_tol * scale:
        raise ComplexEigenvalues(f"max imaginary part {np.abs(vals.imag).max():.3g}")
    return vals.real, vecs.real


def _stochastic_columns(V: np.ndarray, what: str) -> np.ndarray:
    sums = V.sum(axis=0)
    if np.any(np.abs(sums) < 1e-12):
        raise PairingFailure(f"{what} has a column with (near-)zero sum; cannot rescale to stochastic")
    return V / sums[None, :]


def _attempt(X3: np.ndarray, k: int, gen: np.random.Generator, opts: DecompositionOptions):
    d1, d2, d3 = X3.shape
    a = _unit_vector(gen, d3)
    b = _unit_vector(gen, d3)
    X = X3 @ a
    Y = X3 @ b
    if opts.compress and (d1 > k or d2 > k):
        U = np.linalg.svd(matricize(X3, 1), full_matrices=False)[0][:, :k]
        V = np.linalg.svd(matricize(X3, 2), full_matrices=False)[0][:, :k]
    else:
        U, V = np.eye(d1)[:, :k], np.eye(d2)[:, :k]
    Xs, Ys = U.T @ X @ V, U.T @ Y @ V
    for name, S in (("X", Xs), ("Y", Ys)):
        sv = np.linalg.svd(S, compute_uv=False)
        if sv[0] == 0 or sv[-1] < opts.rank_tol * sv[0]:
            raise SingularProjection(f"projection {name} is numerically singular on the rank-{k} subspace")
    # X = A Da B^T and Y = A Db B^T, so X Y^-1 = A (Da/Db) A^-1 and
    # Y^T X^-T = B (Db/Da) B^-1: reciprocal spectra on the two sides.
    lam_a, Va = _real_eig(Xs @ np.linalg.inv(Ys), opts.imag_tol)
    lam_b, Vb = _real_eig(Ys.T @ np.linalg.inv(Xs.T), opts.imag_tol)

    scale = np.abs(lam_a).max()
    srt = np.sort(lam_a)
    if k > 1 and np.min(np.diff(srt)) <= opts.gap_tol * max(scale, 1e-300):
        raise DegenerateSpectrum(
            "repeated eigenvalue in the projected pencil; two third-mode factor columns are parallel"
        )

    cost = np.abs(lam_a[:, None] * lam_b[None, :] - 1.0)
    rows, cols = linear_sum_assignment(cost)
    residuals = cost[rows, cols]
    if opts.pair_tol is not None and residuals.max() > opts.pair_tol:
        raise PairingFailure(f"reciprocal pairing residual {residuals.max():.3g} > {opts.pair_tol}")
    Ahat = _stochastic_columns(U @ Va[:, rows], "A")
    Bhat = _stochastic_columns(V @ Vb[:, cols], "B")
    return Ahat, Bhat, lam_a[rows], residuals, (a, b)


def simultaneous_diagonalize(
    M, k: int, seed: int, opts: Optional[DecompositionOptions] = None
) -> DecompositionResult:
    """Decompose ``M ~ sum_r Ahat_r (x) Bhat_r (x) Chat_r`` with ``k`` components.

    Requires two full-column-rank factors along modes 1 and 2 and no two
    parallel columns in the third factor. ``Ahat`` and ``Bhat`` are scaled to
    be column-stochastic, so all scale is carried by ``Chat``.
    """
    opts = opts or DecompositionOptions()
    X3 = _as_array(M)
    d1, d2, d3 = X3.shape
    if k < 1 or k > min(d1, d2):
        raise DimensionMismatch(f"rank k={k} must satisfy 1 <= k <= min(d1, d2)={min(d1, d2)}")
    last: Optional[DecompositionError] = None
    for attempt in range(opts.max_retries + 1):
        gen = _rng.generator(seed, "jennrich", attempt)
        try:
            Ahat, Bhat, lam, residuals, proj = _attempt(X3, k, gen, opts)
        except DegenerateSpectrum:
            raise
        except (SingularProjection, ComplexEigenvalues, PairingFailure) as exc:
            last = exc
            continue
        KR = khatri_rao(Ahat, Bhat)
        Chat = matricize(X3, 3) @ pinv(KR, opts.rank_tol).T
        recon = Chat @ KR.T
        err = float(np.linalg.norm(matricize(X3, 3) - recon))
        clamp = {
            name: float(-np.minimum(F, 0).sum()) for name, F in (("A", Ahat), ("B", Bhat), ("C", Chat))
        }
        # reported factors are clamped; err and clamp describe the unclamped ones
        Ahat = _stochastic_columns(np.clip(Ahat, 0, None), "A")
        Bhat = _stochastic_columns(np.clip(Bhat, 0, None), "B")
        return DecompositionResult(
            Ahat=Ahat,
            Bhat=Bhat,
            Chat=np.clip(Chat, 0, None),
            projections=proj,
            pairing_residuals=residuals,
            reconstruction_error=err,
            eigenvalues=lam,
            retries=attempt,
            clamp_residual=clamp,
        )
    assert last is not None
    raise type(last)(f"{last} (after {opts.max_retries} retries)")
