"""Exit criteria for the package, one test per criterion.

Run with ``pytest -m acceptance``; the terminal summary lists one PASS/FAIL
line per criterion.
"""
import json
import math
import time

import numpy as np
import pytest

from hmmlab import rng as _rng
from hmmlab.diagnostics import (
    condition_number_A,
    count_vector_bound,
    hmm_kruskal_check,
    sigma_min_l1,
    sigma_min_l2,
)
from hmmlab.errors import DecompositionError
from hmmlab.experiments import ExperimentConfig, run, smallest_tau, trend_test
from hmmlab.generators import (
    CycleMixture,
    CyclePermutation,
    DeBruijn,
    DegreeMixture,
    Factorial,
    Identity,
    RandomSupport,
    UnionOfCycles,
    make_observation,
    make_transition,
)
from hmmlab.hmm import Hmm, likelihood_matrix
from hmmlab.lowerbound import (
    conditioned_chain,
    influence_decay,
    log_likelihood_backward,
    log_likelihood_forward,
    random_observation,
    spectral_gap,
)
from hmmlab.generators import regular_graph_walk
from hmmlab.moments import exact_moment_tensor
from hmmlab.recovery import recover
from hmmlab.tensor import numerical_rank

pytestmark = pytest.mark.acceptance


def criterion(label, title):
    return pytest.mark.criterion(label, title)


def report(label, ok, detail):
    print(f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}")


def cycle_family_instance(seed):
    """n in {4, 6, 8}, m in {3, 4}, cycle or short-cycle mixture, two-output supports."""
    gen = np.random.default_rng(seed)
    n, m = int(gen.choice([4, 6, 8])), int(gen.choice([3, 4]))
    if seed % 2:
        T = make_transition(CyclePermutation(n))
    else:
        c = int(gen.choice([c for c in range(math.ceil(n / 2), n + 1) if n % c == 0]))
        T = make_transition(CycleMixture(n, c, float(gen.uniform(0, 0.1))))
    O = make_observation(RandomSupport(n, m, 2, seed=seed))
    return Hmm(T, O).with_stationary(), smallest_tau(n, m)


@criterion("1", "exact-moment recovery on 20 cycle-family instances, error <= 1e-6")
def test_criterion_1_exact_recovery():
    start = time.perf_counter()
    errors, seed = [], 0
    while len(errors) < 20:
        h, tau = cycle_family_instance(seed)
        if hmm_kruskal_check(h, tau).satisfied:
            rec = recover(exact_moment_tensor(h, tau), h.n, seed=seed, reference=h)
            errors.append(rec.errors["max_col_l1"])
        seed += 1
    elapsed = time.perf_counter() - start
    ok = max(errors) <= 1e-6 and elapsed <= 60
    report("1", ok, f"worst error {max(errors):.2e} over 20 instances ({seed} drawn) in {elapsed:.1f}s")
    assert max(errors) <= 1e-6
    assert elapsed <= 60


@criterion("2", "sampled-moment error slope -0.5 +/- 0.15 (5-seed median)")
def test_criterion_2_sample_slope(tmp_path):
    start = time.perf_counter()
    slopes = []
    for seed in range(1, 6):
        out = tmp_path / f"s{seed}"
        cfg = ExperimentConfig("recover-sampled", seed=seed, out=str(out), n=4, m=3, tau=2, trials=3)
        assert run(cfg) == 0
        slopes.append(json.loads((out / "manifest.json").read_text())["results"]["log_log_slope"])
    med = float(np.median(slopes))
    elapsed = time.perf_counter() - start
    report("2", abs(med + 0.5) <= 0.15, f"slopes {np.round(slopes, 3).tolist()} median {med:.3f} in {elapsed:.0f}s")
    assert abs(med + 0.5) <= 0.15
    assert elapsed <= 300


@criterion("3", "cycle-cond trend: kappa up in eps, down in cycle length")
def test_criterion_3_cycle_trend(tmp_path):
    start = time.perf_counter()
    assert run(ExperimentConfig("cycle-cond", seed=7, out=str(tmp_path), n=128, trials=10, workers=2)) == 0
    by_eps = trend_test(str(tmp_path / "results.csv"), "c", "eps", "increasing")
    by_c = trend_test(str(tmp_path / "results.csv"), "eps", "c", "decreasing")
    elapsed = time.perf_counter() - start
    ok = by_eps.passed and by_c.passed and all(r >= 0.8 for r in by_eps.per_group.values()) \
        and all(r <= -0.8 for r in by_c.per_group.values())
    report("3", ok, f"rho(eps | c) {by_eps.per_group}, rho(c | eps) {by_c.per_group}, {elapsed:.0f}s")
    assert by_eps.passed and by_c.passed
    assert all(r >= 0.8 for r in by_eps.per_group.values())
    assert all(r <= -0.8 for r in by_c.per_group.values())
    assert elapsed <= 600


@criterion("4", "degree-cond trend: kappa up in degree and in eps")
def test_criterion_4_degree_trend(tmp_path):
    start = time.perf_counter()
    assert run(ExperimentConfig("degree-cond", seed=7, out=str(tmp_path), n=128, trials=10, workers=2)) == 0
    by_d = trend_test(str(tmp_path / "results.csv"), "eps", "d", "increasing")
    by_eps = trend_test(str(tmp_path / "results.csv"), "d", "eps", "increasing")
    elapsed = time.perf_counter() - start
    report("4", by_d.passed and by_eps.passed,
           f"rho(d | eps) {by_d.per_group}, rho(eps | d) {by_eps.per_group}, {elapsed:.0f}s")
    assert by_d.passed and by_eps.passed
    assert elapsed <= 600


@criterion("5", "counting bound: identity rank t+1, union-of-cycles rank <= count")
def test_criterion_5_counting_bound():
    ranks = []
    for t in range(1, 6):
        O = make_observation(RandomSupport(8, 2, 2, seed=t))
        ranks.append(numerical_rank(likelihood_matrix(Hmm(make_transition(Identity(8)), O), t), rel_tol=1e-8))
    O = make_observation(RandomSupport(12, 2, 2, seed=0))
    union = numerical_rank(likelihood_matrix(Hmm(make_transition(UnionOfCycles(12, 2)), O), 4), rel_tol=1e-8)
    bound = count_vector_bound(2, 2, 4)
    ok = ranks == [2, 3, 4, 5, 6] and union <= bound
    report("5", ok, f"identity ranks {ranks}, union-of-cycles rank {union} <= {bound}")
    assert ranks == [t + 1 for t in range(1, 6)]
    assert union <= bound


def de_bruijn_witness():
    n, m = 16, 2
    return Hmm(make_transition(CyclePermutation(n)), make_observation(DeBruijn(n, m))).with_stationary()


@criterion("6a", "De Bruijn witness: rank 16 and kappa 1")
def test_criterion_6a_de_bruijn_conditioning():
    h = de_bruijn_witness()
    A = likelihood_matrix(h, 4)
    r, k = numerical_rank(A), condition_number_A(h, 4)
    report("6a", r == 16 and abs(k - 1) <= 1e-9, f"rank {r}, kappa {k:.12f}")
    assert r == 16
    assert k == pytest.approx(1.0, abs=1e-9)


@criterion("6b", "De Bruijn witness: recovery at window 9 with error <= 1e-8")
def test_criterion_6b_de_bruijn_recovery():
    # Deterministic De Bruijn emissions make every column of C a basis vector
    # shared by n/m states, so the third factor has repeated columns and the
    # decomposition is not unique. Expected to fail; see the companion test.
    h = de_bruijn_witness()
    kr = hmm_kruskal_check(h, 4)
    print(f"kruskal verdict {kr.verdict}, min C-column separation {kr.minC_pair_sep}")
    try:
        rec = recover(exact_moment_tensor(h, 4), 16, seed=0, reference=h)
        err = rec.errors["max_col_l1"]
    except DecompositionError as exc:
        report("6b", False, f"{type(exc).__name__}: {exc}")
        raise
    report("6b", err <= 1e-8, f"error {err:.2e}")
    assert err <= 1e-8


@criterion("6c", "companion: generic perturbation of the De Bruijn emissions recovers")
@pytest.mark.parametrize("delta", [0.05, 0.1, 0.2])
def test_criterion_6c_perturbed_de_bruijn(delta):
    base = de_bruijn_witness()
    noise = np.random.default_rng(0).dirichlet(np.ones(2), size=16).T
    h = Hmm(base.T, (1 - delta) * base.O + delta * noise).with_stationary()
    assert hmm_kruskal_check(h, 4).satisfied
    err = recover(exact_moment_tensor(h, 4), 16, seed=0, reference=h).errors["max_col_l1"]
    report("6c", err <= 1e-8, f"delta {delta}: error {err:.2e}")
    assert err <= 1e-8


def gate_instance(seed):
    """Mixed family for the Kruskal gate: recoverable cycles plus rank-deficient chains."""
    gen = np.random.default_rng(seed)
    n, m = int(gen.integers(3, 9)), int(gen.integers(2, 5))
    tau = smallest_tau(n, m)
    O = make_observation(RandomSupport(n, m, 2, seed=seed))
    kind = seed % 5
    if kind == 0:
        T = make_transition(CyclePermutation(n))
    elif kind == 1:
        c = int(gen.choice([c for c in range(math.ceil(n / 2), n + 1) if n % c == 0]))
        T = make_transition(CycleMixture(n, c, float(gen.uniform(0, 0.1))))
    elif kind == 2:
        d = 2
        T = make_transition(DegreeMixture(n, d, float(gen.uniform(0, 0.1)) / d, seed=seed))
    elif kind == 3:
        return Hmm(make_transition(Identity(n)), O, np.full(n, 1 / n)), tau, "identity"
    else:
        n2 = n + n % 2
        O = make_observation(RandomSupport(n2, m, 2, seed=seed))
        return Hmm(make_transition(UnionOfCycles(n2, 2)), O, np.full(n2, 1 / n2)), smallest_tau(n2, m), "union"
    return Hmm(T, O).with_stationary(), tau, "cycle-like"


@criterion("7", "Kruskal gate: satisfied implies recovery, rank-deficient implies flagged")
def test_criterion_7_kruskal_gate():
    recovered, flagged, worst = 0, 0, 0.0
    for seed in range(100):
        h, tau, family = gate_instance(seed)
        kr = hmm_kruskal_check(h, tau)
        if numerical_rank(likelihood_matrix(h, tau)) < h.n:
            assert not kr.satisfied, f"seed {seed} ({family}) rank-deficient but not flagged"
            flagged += 1
        if kr.satisfied:
            rec = recover(exact_moment_tensor(h, tau), h.n, seed=seed, reference=h)
            worst = max(worst, rec.errors["max_col_l1"])
            assert rec.errors["max_col_l1"] <= 1e-5, f"seed {seed} ({family})"
            recovered += 1
    report("7", worst <= 1e-5, f"{recovered} recovered (worst {worst:.1e}), {flagged} rank-deficient flagged")
    assert recovered >= 40 and flagged >= 20


@criterion("8", "factorial identity for the l2 gain over 50 pairs")
def test_criterion_8_factorial_identity():
    worst = 0.0
    for seed in range(50):
        gen = np.random.default_rng(seed)
        a, b = int(gen.integers(2, 7)), int(gen.integers(2, 7))
        T1 = gen.dirichlet(np.ones(a), size=a).T
        T2 = gen.dirichlet(np.ones(b), size=b).T
        worst = max(worst, abs(sigma_min_l2(np.kron(T1, T2)) - sigma_min_l2(T1) * sigma_min_l2(T2)))
    spec = Factorial(CycleMixture(6, 3, 0.2), DegreeMixture(5, 2, 0.1, seed=1))
    T = make_transition(spec)
    T1, T2 = make_transition(spec.first), make_transition(spec.second)
    worst = max(worst, abs(sigma_min_l2(T) - sigma_min_l2(T1) * sigma_min_l2(T2)))
    report("8", worst <= 1e-10, f"max deviation {worst:.1e}")
    assert worst <= 1e-10


@criterion("9", "l1/l2 gain sandwich on 100 matrices; permutations give exactly 1")
def test_criterion_9_norm_sandwich():
    for seed in range(100):
        gen = np.random.default_rng(seed)
        n = int(gen.integers(2, 11))
        T = gen.dirichlet(np.full(n, float(gen.uniform(0.2, 2))), size=n).T
        s1, _ = sigma_min_l1(T)
        s2 = sigma_min_l2(T)
        assert s2 / math.sqrt(n) * (1 - 1e-9) <= s1 <= s2 * math.sqrt(n) * (1 + 1e-9), f"seed {seed}"
    perms = [sigma_min_l1(np.eye(n)[np.random.default_rng(n).permutation(n)])[0] for n in range(1, 11)]
    report("9", all(p == 1.0 for p in perms), "100 sandwiches hold; permutations n=1..10 give 1")
    assert all(p == 1.0 for p in perms)


@criterion("10", "conditioned-chain contraction on random 16-regular graphs")
def test_criterion_10_lower_bound_contraction():
    start = time.perf_counter()
    d, m = 16, 8
    gaps, margins, max_step = [], [], 0.0
    for n in (100, 500):
        for seed in range(20):
            T = regular_graph_walk(n, d, _rng.child_seed(seed, "graph", n))
            lam = spectral_gap(T, magnitude=True)
            gaps.append(lam)
            O = random_observation(n, m, _rng.generator(seed, "obs", n))
            dec = influence_decay(Hmm(T, O, np.full(n, 1 / n)), tau=10, trials=5, seed=seed, certify=False)
            max_step = max(max_step, float(dec.step_ratios.max()))
            margins.append(dec.rate - (lam + 0.2))
    n = 64
    O = random_observation(n, m, np.random.default_rng(1))
    cycle_rate = influence_decay(Hmm(make_transition(CyclePermutation(n)), O), tau=10, trials=5, seed=0).rate
    elapsed = time.perf_counter() - start
    ok = max(gaps) <= 3 / math.sqrt(d) and max_step < 1 and max(margins) <= 0 and cycle_rate >= 1 - 1e-9
    report("10", ok, f"max lambda2 {max(gaps):.3f}, max step ratio {max_step:.3f}, "
                     f"worst rate - (lambda2 + 0.2) {max(margins):.3f}, cycle rate {cycle_rate}, {elapsed:.0f}s")
    assert max(gaps) <= 3 / math.sqrt(d)
    assert max_step < 1
    assert max(margins) <= 0
    assert cycle_rate >= 1 - 1e-9
    assert elapsed <= 600


@criterion("11", "conditioned-chain likelihood telescoping and uniform-emission inertness")
def test_criterion_11_conditioned_chain():
    worst = 0.0
    for seed in range(100):
        gen = np.random.default_rng(seed)
        n, m, tau = int(gen.integers(2, 10)), int(gen.integers(2, 5)), int(gen.integers(1, 60))
        h = Hmm(gen.dirichlet(np.ones(n), size=n).T, gen.dirichlet(np.ones(m), size=n).T)
        outs = gen.integers(0, m, size=tau)
        worst = max(worst, abs(log_likelihood_backward(h, outs) - log_likelihood_forward(h, outs)))
        flat = Hmm(h.T, np.full((m, n), 1 / m))
        for Tt in conditioned_chain(flat, outs):
            assert np.abs(Tt - h.T).max() <= 1e-12
    report("11", worst <= 1e-10, f"max log-likelihood gap {worst:.1e}")
    assert worst <= 1e-10
