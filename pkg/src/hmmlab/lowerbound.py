"""The hidden chain conditioned on a fixed future output string.

For outputs ``o_1 .. o_tau`` emitted by ``h_1 .. h_tau``, step ``t`` of the
conditioned chain (``t = 0 .. tau-1``) is

    Tt[j, i] = P[h_{t+1} = j | h_t = i, o_{t+1} .. o_tau]
             = T[j, i] * O[o_{t+1}, j] * beta_{t+1}(j) / beta_t(i)

with ``beta_t(i) = P[o_{t+1} .. o_tau | h_t = i]``. Backward messages are kept
normalized, with the log normalizers tracked so the likelihood telescopes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import rng as _rng
from .errors import NotSymmetric, ZeroLikelihood
from .generators import regular_graph_walk
from .hmm import Hmm


@dataclass
class BackwardMessages:
    beta: np.ndarray  # (tau + 1, n); row t is beta_t scaled to max 1
    log_scale: np.ndarray  # (tau + 1,); log beta_t = log beta[t] + log_scale[t]


def backward_messages(h: Hmm, outputs: Sequence[int]) -> BackwardMessages:
    outputs = [int(o) for o in outputs]
    tau = len(outputs)
    if tau < 1:
        raise ValueError("need at least one output")
    beta = np.empty((tau + 1, h.n))
    log_scale = np.zeros(tau + 1)
    beta[tau] = 1.0
    for t in range(tau - 1, -1, -1):
        b = h.T.T @ (h.O[outputs[t]] * beta[t + 1])
        top = b.max()
        if top <= 0:
            raise ZeroLikelihood(f"output string impossible from every state at t={t}")
        beta[t] = b / top
        log_scale[t] = log_scale[t + 1] + math.log(top)
    return BackwardMessages(beta, log_scale)


def conditioned_chain(h: Hmm, outputs: Sequence[int]) -> list[np.ndarray]:
    """The ``tau`` conditioned transition matrices ``T^(0) .. T^(tau-1)``.

    Columns for states that cannot produce the remaining outputs are left as
    the unconditioned ``T`` column; they carry zero posterior mass anyway.
    """
    outputs = [int(o) for o in outputs]
    msgs = backward_messages(h, outputs)
    mats = []
    for t, o in enumerate(outputs):
        num = h.T * (h.O[o] * msgs.beta[t + 1])[:, None]
        den = num.sum(axis=0)
        Tt = np.where(den[None, :] > 0, num / np.where(den > 0, den, 1.0)[None, :], h.T)
        mats.append(Tt)
    return mats


def log_likelihood_backward(h: Hmm, outputs: Sequence[int], p0: Optional[np.ndarray] = None) -> float:
    """``log P[o_1..o_tau]`` with ``h_0 ~ p0`` from the backward telescoping."""
    msgs = backward_messages(h, outputs)
    p0 = h.stationary_or_compute() if p0 is None else np.asarray(p0, dtype=float)
    return math.log(p0 @ msgs.beta[0]) + msgs.log_scale[0]


def log_likelihood_forward(h: Hmm, outputs: Sequence[int], p0: Optional[np.ndarray] = None) -> float:
    """Scaled forward algorithm; outputs are emitted from ``h_1`` onwards."""
    alpha = h.stationary_or_compute() if p0 is None else np.asarray(p0, dtype=float)
    total = 0.0
    for o in outputs:
        alpha = h.O[int(o)] * (h.T @ alpha)
        s = alpha.sum()
        if s <= 0:
            return -math.inf
        total += math.log(s)
        alpha = alpha / s
    return total


def restricted_norm(Tt: np.ndarray) -> float:
    """Operator 2-norm of ``Tt`` on the mean-zero subspace."""
    n = Tt.shape[0]
    P = np.eye(n) - 1.0 / n
    return float(np.linalg.svd(Tt @ P, compute_uv=False)[0])


@dataclass
class ContractionProbe:
    monte_carlo: float
    certified: float


def contraction_probe(Tt, probes: int = 1000, seed: int = 0) -> ContractionProbe:
    Tt = np.asarray(Tt, dtype=float)
    n = Tt.shape[0]
    gen = _rng.generator(seed, "probe", n)
    X = gen.standard_normal((n, probes))
    X -= X.mean(axis=0, keepdims=True)
    X /= np.linalg.norm(X, axis=0, keepdims=True)
    mc = float(np.linalg.norm(Tt @ X, axis=0).max())
    return ContractionProbe(mc, restricted_norm(Tt))


def spectral_gap(T, magnitude: bool = False) -> float:
    """Second-largest eigenvalue of a symmetric stochastic matrix.

    With ``magnitude=True`` returns ``max |lambda_i|`` over all but the top
    eigenvalue instead, which is what governs contraction.
    """
    T = np.asarray(T, dtype=float)
    if not np.allclose(T, T.T, atol=1e-12):
        raise NotSymmetric("spectral_gap expects a symmetric matrix")
    vals = np.linalg.eigvalsh(T)
    if magnitude:
        return float(np.abs(vals[:-1]).max())
    return float(vals[-2])


def alpha_bound(n: int, d: int, m: int) -> float:
    return math.sqrt(100 * m**3 * math.log(n) ** 3 / (2 * d))


def emission_deviation(T: np.ndarray, O: np.ndarray) -> float:
    """``max_{i,j} |P[o_{t+1} = j | h_t = i] - 1/m|`` where that probability is ``(O T)[j, i]``."""
    m = O.shape[0]
    return float(np.abs(O @ T - 1.0 / m).max())


def emission_bound(n: int, d: int, m: int) -> float:
    return math.sqrt(6 * math.log(n) / (d * m))


@dataclass
class ConcentrationCheck:
    deviations: list
    bound: float
    passes: int
    trials: int

    @property
    def failure_fraction(self) -> float:
        return 1 - self.passes / self.trials


def random_observation(n: int, m: int, gen: np.random.Generator) -> np.ndarray:
    """Independent columns uniform on the simplex, so every entry has mean ``1/m``."""
    return gen.dirichlet(np.ones(m), size=n).T


def emission_concentration_check(n: int, d: int, m: int, trials: int, seed: int) -> ConcentrationCheck:
    bound = emission_bound(n, d, m)
    devs = []
    for s in range(trials):
        T = regular_graph_walk(n, d, _rng.child_seed(seed, "graph", s))
        O = random_observation(n, m, _rng.generator(seed, "obs", s))
        devs.append(emission_deviation(T, O))
    return ConcentrationCheck(devs, bound, sum(v <= bound for v in devs), trials)


@dataclass
class InfluenceDecay:
    l1_curve: np.ndarray  # (strings, tau + 1) of ||prod T^(t) x||_1
    step_ratios: np.ndarray  # flattened per-step l1 contraction ratios
    l2_ratios: np.ndarray  # per-step l2 contraction ratios
    certified: np.ndarray  # per-step restricted 2-norms of T^(t)
    rate: float  # median over strings of the geometric-mean per-step l1 rate
    skipped: int = 0
    notes: dict = field(default_factory=dict)


def sample_outputs(h: Hmm, tau: int, gen: np.random.Generator) -> np.ndarray:
    """One output string ``o_1 .. o_tau`` from the stationary model."""
    pi = h.stationary_or_compute()
    state = gen.choice(h.n, p=pi)
    out = np.empty(tau, dtype=np.int64)
    for t in range(tau):
        state = gen.choice(h.n, p=h.T[:, state])
        out[t] = gen.choice(h.m, p=h.O[:, state])
    return out


def influence_decay(
    h: Hmm,
    tau: int,
    trials: int,
    seed: int,
    floor: float = 1e-12,
    max_resample: int = 100,
    certify: bool = True,
) -> InfluenceDecay:
    """How fast two posteriors over ``h_0`` merge under the conditioned chain.

    For each sampled output string, ``x = p - q`` for two random initial
    distributions is pushed through ``T^(0), T^(1), ...``; per-step ratios
    stop once ``||x||_1`` falls below ``floor``.
    """
    gen = _rng.generator(seed, "influence", h.n, tau)
    curves, ratios, l2r, cert, rates = [], [], [], [], []
    skipped = 0
    for _ in range(trials):
        for _attempt in range(max_resample):
            outs = sample_outputs(h, tau, gen)
            try:
                mats = conditioned_chain(h, outs)
                break
            except ZeroLikelihood:
                skipped += 1
        else:
            raise ZeroLikelihood("could not sample a possible output string")
        p = gen.dirichlet(np.ones(h.n))
        q = gen.dirichlet(np.ones(h.n))
        x = p - q
        curve = [np.abs(x).sum()]
        step_logs = []
        for Tt in mats:
            y = Tt @ x
            n1, n2 = np.abs(x).sum(), np.linalg.norm(x)
            if n1 > floor:
                r = np.abs(y).sum() / n1
                ratios.append(r)
                step_logs.append(math.log(max(r, 1e-300)))
                l2r.append(np.linalg.norm(y) / n2)
                if certify:
                    cert.append(restricted_norm(Tt))
            x = y
            curve.append(np.abs(x).sum())
        curves.append(curve)
        if step_logs:
            rates.append(math.exp(np.mean(step_logs)))
    return InfluenceDecay(
        l1_curve=np.array(curves),
        step_ratios=np.array(ratios),
        l2_ratios=np.array(l2r),
        certified=np.array(cert),
        rate=float(np.median(rates)) if rates else 0.0,
        skipped=skipped,
    )
