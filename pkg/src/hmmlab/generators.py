"""Structured transition and observation matrices.

Specs are small frozen dataclasses that round-trip through JSON via
:func:`spec_to_dict` / :func:`spec_from_dict`; ``make_transition`` and
``make_observation`` turn them into column-stochastic matrices.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Union

import networkx as nx
import numpy as np

from . import rng as _rng
from .errors import InvalidSpec

MAX_GRAPH_RETRIES = 1000


# -- transition specs -------------------------------------------------------


@dataclass(frozen=True)
class CyclePermutation:
    n: int


@dataclass(frozen=True)
class UnionOfCycles:
    n: int
    c: int


@dataclass(frozen=True)
class CycleMixture:
    """``eps * P_c + (1 - eps) * P_n``."""

    n: int
    c: int
    eps: float


@dataclass(frozen=True)
class DegreeMixture:
    """``eps * G_d + (1 - eps * d) * P_n`` with ``G_d`` a 0/1 out-regular adjacency."""

    n: int
    d: int
    eps: float
    seed: int = 0


@dataclass(frozen=True)
class RegularDigraph:
    n: int
    d: int
    seed: int = 0


@dataclass(frozen=True)
class Identity:
    n: int


@dataclass(frozen=True)
class Factorial:
    first: "TransitionSpec"
    second: "TransitionSpec"


TransitionSpec = Union[
    CyclePermutation, UnionOfCycles, CycleMixture, DegreeMixture, RegularDigraph, Identity, Factorial
]


# -- observation specs ------------------------------------------------------


@dataclass(frozen=True)
class RandomSupport:
    """Each column is supported on ``k`` outputs chosen uniformly without replacement.

    ``weights="dirichlet"`` draws the mass on the support uniformly from the
    simplex; ``weights="equal"`` puts exactly ``1/k`` on each support output.
    """

    n: int
    m: int
    k: int
    seed: int = 0
    weights: str = "dirichlet"


@dataclass(frozen=True)
class DeterministicRandomLabels:
    n: int
    m: int
    seed: int = 0


@dataclass(frozen=True)
class DeBruijn:
    n: int
    m: int


@dataclass(frozen=True)
class DenseRandom:
    """Independent columns drawn uniformly from the simplex (mean ``1/m`` per entry)."""

    n: int
    m: int
    seed: int = 0


ObservationSpec = Union[RandomSupport, DeterministicRandomLabels, DeBruijn, DenseRandom]

_KINDS = {
    cls.__name__: cls
    for cls in (
        CyclePermutation,
        UnionOfCycles,
        CycleMixture,
        DegreeMixture,
        RegularDigraph,
        Identity,
        Factorial,
        RandomSupport,
        DeterministicRandomLabels,
        DeBruijn,
        DenseRandom,
    )
}


def spec_to_dict(spec) -> dict:
    out = {"kind": type(spec).__name__}
    for f in dataclasses.fields(spec):
        v = getattr(spec, f.name)
        out[f.name] = spec_to_dict(v) if dataclasses.is_dataclass(v) else v
    return out


def spec_from_dict(d: dict):
    d = dict(d)
    try:
        cls = _KINDS[d.pop("kind")]
    except KeyError as exc:
        raise InvalidSpec(f"unknown spec kind {exc}") from None
    kwargs = {k: spec_from_dict(v) if isinstance(v, dict) else v for k, v in d.items()}
    return cls(**kwargs)


# -- building blocks --------------------------------------------------------


def cycle_matrix(n: int) -> np.ndarray:
    """``P[i, j] = 1`` iff ``i == (j + 1) % n``."""
    return np.roll(np.eye(n), 1, axis=0)


def union_of_cycles_matrix(n: int, c: int) -> np.ndarray:
    if c < 1 or n % c:
        raise InvalidSpec(f"cycle length c={c} must divide n={n}")
    return np.kron(np.eye(n // c), cycle_matrix(c))


def out_regular_adjacency(n: int, d: int, seed: int) -> np.ndarray:
    """0/1 matrix whose column ``j`` marks ``d`` distinct out-neighbours of ``j`` (no self loops).

    Out-degree is exactly ``d``; in-degree is not balanced.
    """
    if not 1 <= d <= n - 1:
        raise InvalidSpec(f"degree d={d} must lie in [1, n-1] for n={n}")
    gen = _rng.generator(seed, "out_regular", n, d)
    G = np.zeros((n, n))
    for j in range(n):
        others = np.delete(np.arange(n), j)
        G[gen.choice(others, size=d, replace=False), j] = 1.0
    return G


def random_regular_graph(n: int, d: int, seed: int) -> nx.Graph:
    """Uniform-ish simple undirected ``d``-regular graph on ``n`` nodes."""
    if d >= n or (n * d) % 2:
        raise InvalidSpec(f"no simple {d}-regular graph on {n} nodes")
    for attempt in range(MAX_GRAPH_RETRIES):
        G = nx.random_regular_graph(d, n, seed=_rng.child_seed(seed, "regular", n, d, attempt))
        if nx.is_connected(G):
            return G
    raise InvalidSpec(f"could not draw a connected {d}-regular graph on {n} nodes")


def regular_graph_walk(n: int, d: int, seed: int) -> np.ndarray:
    """Normalized adjacency ``A / d`` of a random undirected ``d``-regular graph.

    Symmetric and doubly stochastic.
    """
    G = random_regular_graph(n, d, seed)
    return nx.to_numpy_array(G, nodelist=range(n)) / d


def de_bruijn_sequence(m: int, j: int) -> list[int]:
    """Cyclic sequence of length ``m**j`` containing every length-``j`` string once.

    Built as an Eulerian circuit (Hierholzer) on the order-``(j-1)`` De Bruijn
    graph, whose nodes are ``(j-1)``-strings and edges are ``j``-strings.
    """
    if m < 2 or j < 1:
        raise InvalidSpec(f"De Bruijn sequence needs m >= 2 and j >= 1, got m={m}, j={j}")
    if j == 1:
        return list(range(m))
    nodes = m ** (j - 1)
    next_edge = [0] * nodes  # outgoing edge symbol still unused at each node
    stack = [0]
    circuit: list[int] = []
    while stack:
        v = stack[-1]
        if next_edge[v] < m:
            sym = next_edge[v]
            next_edge[v] += 1
            stack.append((v * m + sym) % nodes)
        else:
            circuit.append(stack.pop())
    circuit.reverse()
    # each step appends the last symbol of the next node
    return [u % m for u in circuit[1:]]


# -- public constructors ----------------------------------------------------


def make_transition(spec: TransitionSpec) -> np.ndarray:
    if isinstance(spec, CyclePermutation):
        return cycle_matrix(spec.n)
    if isinstance(spec, Identity):
        return np.eye(spec.n)
    if isinstance(spec, UnionOfCycles):
        return union_of_cycles_matrix(spec.n, spec.c)
    if isinstance(spec, CycleMixture):
        if not 0 <= spec.eps <= 1:
            raise InvalidSpec(f"eps={spec.eps} outside [0, 1]")
        return spec.eps * union_of_cycles_matrix(spec.n, spec.c) + (1 - spec.eps) * cycle_matrix(spec.n)
    if isinstance(spec, DegreeMixture):
        if spec.eps < 0 or spec.eps * spec.d > 1 + 1e-12:
            raise InvalidSpec(f"eps*d = {spec.eps * spec.d} must lie in [0, 1]")
        G = out_regular_adjacency(spec.n, spec.d, spec.seed)
        return spec.eps * G + (1 - spec.eps * spec.d) * cycle_matrix(spec.n)
    if isinstance(spec, RegularDigraph):
        return out_regular_adjacency(spec.n, spec.d, spec.seed) / spec.d
    if isinstance(spec, Factorial):
        # state (i, j) -> index i * n2 + j, so T[(i2,j2),(i1,j1)] = T1[i2,i1] T2[j2,j1]
        return np.kron(make_transition(spec.first), make_transition(spec.second))
    raise InvalidSpec(f"unknown transition spec {spec!r}")


def make_observation(spec: ObservationSpec) -> np.ndarray:
    if isinstance(spec, RandomSupport):
        if not 1 <= spec.k <= spec.m:
            raise InvalidSpec(f"support size k={spec.k} must lie in [1, m={spec.m}]")
        if spec.weights not in ("dirichlet", "equal"):
            raise InvalidSpec(f"unknown weights mode {spec.weights!r}")
        gen = _rng.generator(spec.seed, "random_support", spec.n, spec.m, spec.k)
        O = np.zeros((spec.m, spec.n))
        for j in range(spec.n):
            support = gen.choice(spec.m, size=spec.k, replace=False)
            if spec.weights == "equal":
                O[support, j] = 1.0 / spec.k
            else:
                O[support, j] = gen.dirichlet(np.ones(spec.k))
        return O
    if isinstance(spec, DeterministicRandomLabels):
        gen = _rng.generator(spec.seed, "labels", spec.n, spec.m)
        O = np.zeros((spec.m, spec.n))
        O[gen.integers(0, spec.m, size=spec.n), np.arange(spec.n)] = 1.0
        return O
    if isinstance(spec, DeBruijn):
        j = _exact_log(spec.n, spec.m)
        seq = de_bruijn_sequence(spec.m, j)
        O = np.zeros((spec.m, spec.n))
        O[seq, np.arange(spec.n)] = 1.0
        return O
    if isinstance(spec, DenseRandom):
        gen = _rng.generator(spec.seed, "dense_random", spec.n, spec.m)
        return gen.dirichlet(np.ones(spec.m), size=spec.n).T
    raise InvalidSpec(f"unknown observation spec {spec!r}")


def _exact_log(n: int, m: int) -> int:
    if m < 2:
        raise InvalidSpec("De Bruijn labels need m >= 2")
    j, p = 0, 1
    while p < n:
        p *= m
        j += 1
    if p != n or j < 1:
        raise InvalidSpec(f"n={n} is not a positive power of m={m}")
    return j
