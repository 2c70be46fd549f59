"""Batch experiments: parameter sweeps, recovery runs, and trend tests.

Every experiment writes ``<out>/results.csv`` plus ``<out>/manifest.json``.
Rows carry the master seed and an instance hash; together with the row's
parameters they regenerate that row alone.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import rng as _rng
from .diagnostics import (
    condition_number_A,
    count_vector_bound,
    counting_rank_bound,
    hmm_kruskal_check,
    kappa,
)
from .errors import HmmLabError, InsufficientData, InvalidSpec
from .generators import (
    CycleMixture,
    CyclePermutation,
    DeBruijn,
    DegreeMixture,
    RandomSupport,
    UnionOfCycles,
    de_bruijn_sequence,
    make_observation,
    make_transition,
    regular_graph_walk,
)
from .hmm import Hmm, likelihood_matrix, sample_windows
from .lowerbound import alpha_bound, influence_decay, random_observation, spectral_gap
from .moments import empirical_moment_tensor, exact_moment_tensor
from .recovery import RecoveryOptions, recover
from .tensor import numerical_rank

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "cycle-cond",
    "degree-cond",
    "recover-exact",
    "recover-sampled",
    "lowerbound-decay",
    "identifiability",
)

SWEEP_ROW_BUDGET = 2**14
# Binary outputs with a 10-symbol window: 1024 rows for n = 128 states. At
# m = 8, tau = 3 the cycle-length trend is swamped by observation noise.
SWEEP_M = 2
SWEEP_TAU = 10


def default_tau(m: int, budget: int = SWEEP_ROW_BUDGET) -> int:
    """Largest ``tau`` with ``m**tau <= budget``."""
    tau = 1
    while m ** (tau + 1) <= budget:
        tau += 1
    return tau


def smallest_tau(n: int, m: int) -> int:
    tau = 1
    while m**tau < n:
        tau += 1
    return tau


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    out: str = "results"
    trials: int = 10
    n: Optional[int] = None
    m: Optional[int] = None
    tau: Optional[int] = None
    k: int = 2
    cycles: tuple = (2, 4, 8, 16)
    eps: tuple = ()
    degrees: tuple = (2, 4, 8, 16)
    samples: tuple = (1_000, 10_000, 100_000, 1_000_000)
    ns: tuple = (100, 500)
    d: int = 16
    family: str = "cycle"
    workers: int = 1

    def resolved(self) -> "ExperimentConfig":
        """Fill experiment-specific defaults so the manifest records them."""
        c = dataclasses.replace(self)
        if c.experiment in ("cycle-cond", "degree-cond"):
            c.n = c.n or 128
            if c.m is None:
                c.m = SWEEP_M
                c.tau = c.tau or SWEEP_TAU
            c.tau = c.tau or default_tau(c.m)
            if not c.eps:
                c.eps = (0.1, 0.2, 0.4) if c.experiment == "cycle-cond" else (0.01, 0.02, 0.04)
        elif c.experiment in ("recover-exact", "recover-sampled"):
            c.n = c.n or 4
            c.m = c.m or 3
            c.tau = c.tau or smallest_tau(c.n, c.m)
        elif c.experiment == "lowerbound-decay":
            c.m = c.m or 8
            c.tau = c.tau or 10
        elif c.experiment == "identifiability":
            c.m = c.m or 2
            c.tau = c.tau or 4
        return c

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise InvalidSpec(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise InvalidSpec("trials must be >= 1")
        if self.experiment == "cycle-cond":
            for c in self.cycles:
                if self.n % c:
                    raise InvalidSpec(f"cycle length {c} does not divide n={self.n}")
            if any(not 0 <= e <= 1 for e in self.eps):
                raise InvalidSpec("eps must lie in [0, 1]")
        if self.experiment == "degree-cond":
            for d in self.degrees:
                if not 1 <= d < self.n:
                    raise InvalidSpec(f"degree {d} must lie in [1, n)")
                for e in self.eps:
                    if e * d > 1 + 1e-12:
                        raise InvalidSpec(f"eps*d = {e * d} exceeds 1")
        if self.experiment in ("cycle-cond", "degree-cond", "recover-exact", "recover-sampled"):
            if self.k > self.m:
                raise InvalidSpec(f"support size k={self.k} exceeds m={self.m}")
            if self.m**self.tau > 2**20:
                raise InvalidSpec(f"m**tau = {self.m**self.tau} exceeds the 2**20 row cap")
        if self.experiment in ("recover-exact", "recover-sampled") and self.n > self.m**self.tau:
            raise InvalidSpec(f"n={self.n} exceeds m**tau={self.m**self.tau}")
        if self.experiment == "lowerbound-decay":
            for n in self.ns:
                if (n * self.d) % 2 or self.d >= n:
                    raise InvalidSpec(f"no simple {self.d}-regular graph on {n} nodes")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def instance_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def rows_to_csv(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def _pool_map(fn: Callable, items: list, workers: int) -> list:
    # results come back in input order regardless of completion order
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- conditioning sweeps --------------------------------------------------


def _kappa_cycle_cell(args):
    n, m, tau, k, c, eps, trial, seed = args
    O = make_observation(RandomSupport(n, m, k, seed=_rng.child_seed(seed, "obs", trial)))
    T = make_transition(CycleMixture(n, c, eps))
    return condition_number_A(Hmm(T, O), tau)


def _kappa_degree_cell(args):
    n, m, tau, k, d, eps, trial, seed = args
    O = make_observation(RandomSupport(n, m, k, seed=_rng.child_seed(seed, "obs", trial)))
    T = make_transition(DegreeMixture(n, d, eps, seed=_rng.child_seed(seed, "graph", d, trial)))
    return condition_number_A(Hmm(T, O), tau)


def _sweep(cfg: ExperimentConfig, var_name: str, var_values, cell_fn):
    cells = [(v, e) for v in var_values for e in cfg.eps]
    jobs = [
        (cfg.n, cfg.m, cfg.tau, cfg.k, v, e, t, cfg.seed) for (v, e) in cells for t in range(cfg.trials)
    ]
    kappas = _pool_map(cell_fn, jobs, cfg.workers)
    rows = []
    for ci, (v, e) in enumerate(cells):
        ks = np.array(kappas[ci * cfg.trials : (ci + 1) * cfg.trials])
        finite = ks[np.isfinite(ks)]
        payload = {"experiment": cfg.experiment, "n": cfg.n, "m": cfg.m, "tau": cfg.tau, "k": cfg.k,
                   var_name: v, "eps": e, "trials": cfg.trials, "seed": cfg.seed}
        rows.append({
            var_name: v,
            "eps": e,
            "n": cfg.n,
            "m": cfg.m,
            "tau": cfg.tau,
            "k": cfg.k,
            "trials": cfg.trials,
            "mean_kappa": float(ks.mean()),
            "median_kappa": float(np.median(ks)),
            "mean_log10_kappa": float(np.log10(ks).mean()),
            "infinite_trials": int(ks.size - finite.size),
            "seed": cfg.seed,
            "instance_hash": instance_hash(payload),
        })
    columns = [var_name, "eps", "n", "m", "tau", "k", "trials", "mean_kappa", "median_kappa",
               "mean_log10_kappa", "infinite_trials", "seed", "instance_hash"]
    return columns, rows


def cycle_cond(cfg: ExperimentConfig):
    columns, rows = _sweep(cfg, "c", cfg.cycles, _kappa_cycle_cell)
    notes = {
        "transition": "eps * P_c + (1 - eps) * P_n",
        "observation": f"RandomSupport(k={cfg.k}, weights=dirichlet), one draw per trial shared across cells",
        "acceptance": "trend-based: kappa increasing in eps at fixed c, decreasing in c at fixed eps",
    }
    return columns, rows, notes


def degree_cond(cfg: ExperimentConfig):
    columns, rows = _sweep(cfg, "d", cfg.degrees, _kappa_degree_cell)
    notes = {
        "transition": "eps * G_d + (1 - eps * d) * P_n, G_d out-regular 0/1 adjacency",
        "observation": f"RandomSupport(k={cfg.k}, weights=dirichlet), one draw per trial shared across cells",
        "acceptance": "trend-based: kappa increasing in d at fixed eps and in eps at fixed d",
    }
    return columns, rows, notes


# -- recovery ---------------------------------------------------------------


def recovery_instance(family: str, n: int, m: int, k: int, seed: int, trial: int) -> Hmm:
    """Test instance used by the recovery experiments."""
    gen = _rng.generator(seed, "family", trial)
    if family == "cycle":
        T = make_transition(CyclePermutation(n))
    elif family == "cycle-mixture":
        divisors = [c for c in range(max(2, math.ceil(n / 2)), n + 1) if n % c == 0]
        c = int(gen.choice(divisors))
        eps = float(gen.uniform(0, 0.1))
        T = make_transition(CycleMixture(n, c, eps))
    else:
        raise InvalidSpec(f"unknown family {family!r}")
    O = make_observation(RandomSupport(n, m, k, seed=_rng.child_seed(seed, "obs", trial)))
    return Hmm(T, O).with_stationary()


def conditioning_score(h: Hmm, tau: int) -> float:
    """``min(sigma_min(A), min C-column separation)``; larger is easier to learn."""
    A = likelihood_matrix(h, tau)
    kr = hmm_kruskal_check(h, tau)
    return float(min(np.linalg.svd(A, compute_uv=False)[-1], kr.minC_pair_sep))


def well_conditioned_instance(family: str, n: int, m: int, k: int, tau: int, seed: int, candidates: int = 20):
    """Best of ``candidates`` seeded draws by :func:`conditioning_score`; returns ``(hmm, trial)``."""
    scored = [(conditioning_score(recovery_instance(family, n, m, k, seed, t), tau), t) for t in range(candidates)]
    best = max(scored)[1]
    return recovery_instance(family, n, m, k, seed, best), best


def recover_exact(cfg: ExperimentConfig):
    rows, reports = [], []
    for t in range(cfg.trials):
        h = recovery_instance(cfg.family, cfg.n, cfg.m, cfg.k, cfg.seed, t)
        kr = hmm_kruskal_check(h, cfg.tau)
        row = {"trial": t, "n": cfg.n, "m": cfg.m, "tau": cfg.tau, "family": cfg.family,
               "kruskal": kr.verdict, "seed": cfg.seed,
               "instance_hash": instance_hash({"n": cfg.n, "m": cfg.m, "k": cfg.k, "family": cfg.family,
                                               "seed": cfg.seed, "trial": t})}
        try:
            rec = recover(exact_moment_tensor(h, cfg.tau), cfg.n, _rng.child_seed(cfg.seed, "recover", t),
                          reference=h)
            row.update(status="ok", max_col_l1=rec.errors["max_col_l1"],
                       T_max_col_l1=rec.errors["T"]["max_col_l1"], O_max_col_l1=rec.errors["O"]["max_col_l1"],
                       retries=rec.decomposition.retries)
            reports.append({"trial": t, **rec.report()})
        except HmmLabError as exc:
            row.update(status=type(exc).__name__, max_col_l1=math.inf)
            reports.append({"trial": t, "error": f"{type(exc).__name__}: {exc}"})
        rows.append(row)
    columns = ["trial", "n", "m", "tau", "family", "kruskal", "status", "max_col_l1", "T_max_col_l1",
               "O_max_col_l1", "retries", "seed", "instance_hash"]
    worst = max(r["max_col_l1"] for r in rows)
    return columns, rows, {"max_col_l1": worst, "recovery": reports}


def log_log_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def recover_sampled(cfg: ExperimentConfig):
    h, chosen = well_conditioned_instance(cfg.family, cfg.n, cfg.m, cfg.k, cfg.tau, cfg.seed)
    rows = []
    opts = RecoveryOptions.for_empirical()
    for S in cfg.samples:
        for t in range(cfg.trials):
            wseed = _rng.child_seed(cfg.seed, "windows", S, t)
            W = sample_windows(h, cfg.tau, int(S), wseed)
            M = empirical_moment_tensor(W, h.m, cfg.tau, seed=wseed)
            row = {"samples": int(S), "trial": t, "seed": cfg.seed, "window_seed": wseed,
                   "instance_trial": chosen,
                   "instance_hash": instance_hash({"n": cfg.n, "m": cfg.m, "k": cfg.k, "family": cfg.family,
                                                   "seed": cfg.seed, "trial": chosen})}
            try:
                rec = recover(M, cfg.n, _rng.child_seed(cfg.seed, "recover", S, t), opts, reference=h)
                row.update(status="ok", max_col_l1=rec.errors["max_col_l1"])
            except HmmLabError as exc:
                row.update(status=type(exc).__name__, max_col_l1=math.inf)
            rows.append(row)
    med = []
    for S in cfg.samples:
        errs = [r["max_col_l1"] for r in rows if r["samples"] == S]
        med.append(float(np.median(errs)))
    slope = log_log_slope(cfg.samples, med) if all(np.isfinite(med)) and len(med) > 1 else math.nan
    columns = ["samples", "trial", "status", "max_col_l1", "seed", "window_seed", "instance_trial",
               "instance_hash"]
    return columns, rows, {"instance_trial": chosen, "median_error": dict(zip(map(str, cfg.samples), med)), "log_log_slope": slope}


# -- lower bound -------------------------------------------------------------


def lowerbound_decay(cfg: ExperimentConfig):
    rows = []
    for n in cfg.ns:
        for t in range(cfg.trials):
            T = regular_graph_walk(n, cfg.d, _rng.child_seed(cfg.seed, "graph", n, t))
            O = random_observation(n, cfg.m, _rng.generator(cfg.seed, "obs", n, t))
            h = Hmm(T, O, np.full(n, 1.0 / n))
            lam = spectral_gap(T, magnitude=True)
            dec = influence_decay(h, cfg.tau, trials=5, seed=_rng.child_seed(cfg.seed, "decay", n, t),
                                  certify=False)
            curves = dec.l1_curve
            for step in range(cfg.tau):
                prev, nxt = curves[:, step], curves[:, step + 1]
                ok = prev > 1e-12
                ratio = float(np.median(nxt[ok] / prev[ok])) if ok.any() else math.nan
                rows.append({"n": n, "d": cfg.d, "m": cfg.m, "t": step, "measured_contraction": ratio,
                             "alpha_bound": alpha_bound(n, cfg.d, cfg.m), "lambda2": lam, "trial": t,
                             "seed": cfg.seed})
    columns = ["n", "d", "m", "t", "measured_contraction", "alpha_bound", "lambda2", "trial", "seed"]
    return columns, rows, {"note": "alpha_bound constants are proof artefacts; reported, not asserted"}


# -- identifiability -----------------------------------------------------------


def identifiability(cfg: ExperimentConfig):
    rows = []
    m, j = cfg.m, cfg.tau
    n = m**j
    seq = de_bruijn_sequence(m, j)
    subs = {tuple(seq[(i + s) % n] for s in range(j)) for i in range(n)}
    rows.append({"check": "de_bruijn_distinct_substrings", "n": n, "m": m, "t": j,
                 "measured": len(subs), "bound": n, "passed": len(subs) == n})
    h = Hmm(make_transition(CyclePermutation(n)), make_observation(DeBruijn(n, m)))
    A = likelihood_matrix(h, j)
    rows.append({"check": "de_bruijn_rank_A", "n": n, "m": m, "t": j,
                 "measured": numerical_rank(A), "bound": n, "passed": numerical_rank(A) == n})
    rows.append({"check": "de_bruijn_kappa_A", "n": n, "m": m, "t": j,
                 "measured": kappa(A), "bound": 1.0, "passed": abs(kappa(A) - 1) < 1e-9})
    kr = hmm_kruskal_check(h, j)
    rows.append({"check": "de_bruijn_kruskal", "n": n, "m": m, "t": j,
                 "measured": kr.minC_pair_sep, "bound": 0.0, "passed": kr.satisfied})
    for t in range(1, 6):
        O = make_observation(RandomSupport(8, 2, 2, seed=_rng.child_seed(cfg.seed, "identity", t)))
        r = numerical_rank(likelihood_matrix(Hmm(np.eye(8), O), t))
        rows.append({"check": "identity_rank", "n": 8, "m": 2, "t": t, "measured": r,
                     "bound": count_vector_bound(1, 2, t), "passed": r == t + 1})
    O = make_observation(RandomSupport(12, 2, 2, seed=_rng.child_seed(cfg.seed, "union")))
    r = numerical_rank(likelihood_matrix(Hmm(make_transition(UnionOfCycles(12, 2)), O), 4))
    rows.append({"check": "union_of_cycles_rank", "n": 12, "m": 2, "t": 4, "measured": r,
                 "bound": count_vector_bound(2, 2, 4), "passed": r <= count_vector_bound(2, 2, 4)})
    rows.append({"check": "counting_rank_bound_formula", "n": 12, "m": 2, "t": 4,
                 "measured": r, "bound": counting_rank_bound(2, 2, 4), "passed": r <= counting_rank_bound(2, 2, 4)})
    for row in rows:
        row["seed"] = cfg.seed
    columns = ["check", "n", "m", "t", "measured", "bound", "passed", "seed"]
    return columns, rows, {}


RUNNERS = {
    "cycle-cond": cycle_cond,
    "degree-cond": degree_cond,
    "recover-exact": recover_exact,
    "recover-sampled": recover_sampled,
    "lowerbound-decay": lowerbound_decay,
    "identifiability": identifiability,
}


def config_hash(cfg: ExperimentConfig) -> str:
    d = cfg.to_dict()
    d.pop("out", None)
    d.pop("workers", None)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def run(config: ExperimentConfig) -> int:
    """Run one experiment and write its outputs; returns a process exit code."""
    out = Path(config.out)
    try:
        cfg = config.resolved()
        cfg.validate()
    except HmmLabError as exc:
        log.error("invalid configuration: %s", exc)
        return 2
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "input_hash": config_hash(cfg),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "status": "complete",
    }
    try:
        columns, rows, extra = RUNNERS[cfg.experiment](cfg)
    except Exception as exc:  # flush what we know, mark partial
        log.exception("experiment failed")
        manifest.update(status="partial", error=f"{type(exc).__name__}: {exc}")
        (out / "results.csv").write_text("")
        (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True))
        return 1
    (out / "results.csv").write_text(rows_to_csv(columns, rows))
    recovery = extra.pop("recovery", None)
    if recovery is not None:
        (out / "recovery.json").write_text(json.dumps(_jsonable(recovery), indent=2))
    manifest["results"] = extra
    manifest["columns"] = columns
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True))
    return 0


# -- trend test ---------------------------------------------------------------


@dataclass
class TrendResult:
    per_group: dict
    median_rho: float
    verdict: str
    expect: str

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return v


def trend_test(
    csv_or_rows,
    group_by: Optional[str],
    order_by: str,
    expect: str,
    value: str = "mean_kappa",
    threshold: float = 0.8,
) -> TrendResult:
    """Per-group Spearman correlation of ``value`` against ``order_by``.

    Passes iff the median rho over groups has the expected sign with
    magnitude at least ``threshold``. A constant column scores rho = 0.
    """
    if expect not in ("increasing", "decreasing"):
        raise ValueError("expect must be 'increasing' or 'decreasing'")
    rows = read_csv(csv_or_rows) if isinstance(csv_or_rows, (str, os.PathLike)) else list(csv_or_rows)
    groups: dict = {}
    for r in rows:
        key = _num(r[group_by]) if group_by else None
        groups.setdefault(key, []).append((_num(r[order_by]), _num(r[value])))
    per_group = {}
    for key, pts in sorted(groups.items(), key=lambda kv: (kv[0] is None, kv[0])):
        if len(pts) < 3:
            raise InsufficientData(f"group {key!r} has {len(pts)} points; need >= 3")
        x, y = zip(*sorted(pts))
        y = np.array(y, dtype=float)
        if np.all(y == y[0]):
            rho = 0.0
        else:
            rho = float(stats.spearmanr(x, y).statistic)
            rho = 0.0 if math.isnan(rho) else rho
        per_group[key] = rho
    med = float(np.median(list(per_group.values())))
    sign = 1 if expect == "increasing" else -1
    ok = sign * med >= threshold
    return TrendResult(per_group, med, "pass" if ok else "fail", expect)
