"""Experiment registry, JSON configuration, seeded multi-trial runner and
plot-data reshaping.

Results land in ``<out>/<experiment>/<algorithm>/seed_<s>.csv`` with a
column-wise mean over seeds in ``mean.csv`` next to them. Timings go to
``manifest.json`` only, so the CSVs are byte-identical across reruns.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .bandit import BanditConfig, bbga_run
from .geometry import BoxConstraint, CardinalityPolytope, PackingPolytope
from .minimax import (ConvexFacility, MatroidPolytope, MinimaxConfig, boosting_gda, minimax_eval,
                      shifted_ball_constraint)
from .objectives import (CoverageMonotone, CoverageNonMonotone, FacilityLocation,
                         MultilinearExtension, RegularizedSetFunction, make_monotone_quadratic,
                         make_nonmonotone_quadratic, synthetic_ratings)
from .offline import (OfflineConfig, boosting_gradient_ascent, continuous_greedy_fw, measured_fw,
                      sga_baseline)
from .online import (ONE_MINUS_INV_E, OnlineEnv, comparator_point, comparator_values, delay_constant,
                     delay_uniform, obga_run, oga_baseline, regret_series)

log = logging.getLogger(__name__)

DEFAULT_TRIALS = 10


class ConfigError(ValueError):
    pass


# --- instances ------------------------------------------------------------------------------


def _offline_coverage(p, monotone):
    k = int(p.get("k", 10))
    noise = float(p.get("noise", 0.01))
    if monotone:
        f = CoverageMonotone(k, noise=noise)
        return f, CardinalityPolytope(k, dim=2 * k + 1), f.local_max()
    f = CoverageNonMonotone(k, noise=noise)
    return f, BoxConstraint.unit(2 * k + 1), f.stationary_point()


def _offline_qp(p, monotone):
    n = int(p.get("n", 20))
    rng = np.random.default_rng(int(p.get("instance_seed", 0)))
    C = PackingPolytope.random(n, max(1, int(math.floor(0.2 * n))), rng)
    if monotone:
        f = make_monotone_quadratic(n, rng, noise=float(p.get("noise", 5.0)))
    else:
        f = make_nonmonotone_quadratic(n, rng, noise=float(p.get("noise", 1.0)))
    return f, C, "origin"


def _movie_setfn(p, rng, users):
    movies = int(p.get("movies", 20))
    R = synthetic_ratings(users, movies, rng, half_stars=bool(p.get("half_stars", False)))
    return R


def _offline_movie(p, monotone=True):
    rng = np.random.default_rng(int(p.get("instance_seed", 0)))
    R = _movie_setfn(p, rng, int(p.get("users", 200)))
    base = FacilityLocation(R)
    if not bool(p.get("monotone", True)):
        base = RegularizedSetFunction(base, float(p.get("lam", 0.1)), float(p.get("k", 5)))
    f = MultilinearExtension(base, noise=float(p.get("noise", 1.0)))
    C = PackingPolytope.random(base.n, max(1, int(math.floor(0.2 * base.n))), rng)
    return f, C, "origin"


OFFLINE_BUILDERS = {
    "coverage-monotone": lambda p: _offline_coverage(p, True),
    "coverage-nonmonotone": lambda p: _offline_coverage(p, False),
    "qp-offline-mono": lambda p: _offline_qp(p, True),
    "qp-offline-nonmono": lambda p: _offline_qp(p, False),
    "movie-synthetic-offline": _offline_movie,
}


def _online_qp(p, delayed):
    n = int(p.get("n", 10))
    T = int(p.get("T", 150))
    rng = np.random.default_rng(int(p.get("instance_seed", 0)))
    C = PackingPolytope.random(n, max(1, int(math.floor(0.2 * n))), rng)
    monotone = bool(p.get("monotone", True))
    mk = make_monotone_quadratic if monotone else make_nonmonotone_quadratic
    fs = [mk(n, rng, noise=float(p.get("noise", 1.0))) for _ in range(T)]
    return fs, C, _delays(p, T, delayed, rng)


def _delays(p, T, delayed, rng):
    if not delayed:
        return delay_constant(T, 1)
    d = p.get("delay", "uniform")
    if d == "uniform":
        return delay_uniform(T, int(p.get("delay_lo", 1)), int(p.get("delay_hi", 5)), rng)
    return delay_constant(T, int(d))


def _online_movie(p, delayed=True):
    T = int(p.get("T", 100))
    b = int(p.get("batch_users", 15))
    k = float(p.get("k", 5))
    rng = np.random.default_rng(int(p.get("instance_seed", 0)))
    R = _movie_setfn(p, rng, T * b)
    fs = []
    for t in range(T):
        base = FacilityLocation(R[t * b:(t + 1) * b])
        if not bool(p.get("monotone", True)):
            base = RegularizedSetFunction(base, float(p.get("lam", 0.1)), k)
        fs.append(MultilinearExtension(base, noise=float(p.get("noise", 0.01))))
    C = CardinalityPolytope(k, dim=R.shape[1])
    return fs, C, _delays(p, T, bool(p.get("delayed", delayed)), rng)


ONLINE_BUILDERS = {
    "qp-online-full": lambda p: _online_qp(p, False),
    "qp-online-delayed": lambda p: _online_qp(p, True),
    "movie-synthetic-online": _online_movie,
}


def _bandit_instance(p, monotone):
    n = int(p.get("n", 8))
    T = int(p.get("T", 2000))
    rng = np.random.default_rng(int(p.get("instance_seed", 0)))
    if monotone:
        fs = [make_monotone_quadratic(n, rng) for _ in range(T)]
    else:
        scale = float(p.get("linear_scale", 4.0))
        fs = [make_nonmonotone_quadratic(n, rng, linear_scale=scale, box_safe=True) for _ in range(T)]
    return fs, BoxConstraint.unit(n)


def _minimax_instance(p, monotone):
    n = int(p.get("n", 3))
    m = int(p.get("m", 2))
    k = int(p.get("k", 2))
    rng = np.random.default_rng(int(p.get("instance_seed", 0)))
    obj = ConvexFacility.random(n, m, rng, lam=float(p.get("lam", 0.1)),
                                penalty_k=None if monotone else float(k))
    return obj, shifted_ball_constraint(n, m), MatroidPolytope(n, k)


# --- algorithms ---------------------------------------------------------------------------------

Row = Tuple
Table = Tuple[List[str], List[Row]]


def _fmt(v) -> str:
    return repr(float(v))


def _offline_table(trace) -> Table:
    rows = [(t + 1, _fmt(trace.values[t]), _fmt(trace.step_sizes[t]), int(bool(trace.feasible[t])))
            for t in range(trace.T)]
    return ["t", "value", "step_size", "feasible"], rows


def _path_table(f, C, path) -> Table:
    rows = [(t + 1, _fmt(f.value(x)), _fmt(1.0 / len(path)), int(C.contains(x))) for t, x in enumerate(path)]
    return ["t", "value", "step_size", "feasible"], rows


def _run_offline(exp, alg, params, seed) -> Table:
    f, C, start = OFFLINE_BUILDERS[exp](params)
    monotone = f.monotone
    T = int(params.get("T", 200))
    batch = int(params.get("batch", 5))
    step = params.get("step", "guarantee")
    if alg in ("bga", "sga"):
        default_start = start if exp.startswith("coverage") else "origin"
        start_pt = params.get("start", default_start)
        if isinstance(start_pt, list):
            start_pt = np.asarray(start_pt, dtype=float)
        cfg = OfflineConfig(T=T, option="I" if monotone else "II", batch=batch, step=step, seed=seed,
                            start=start_pt)
        trace = boosting_gradient_ascent(f, C, cfg) if alg == "bga" else sga_baseline(f, C, cfg)
        return _offline_table(trace)
    K = int(params.get("K", T))
    path: list = []
    if alg == "cg":
        continuous_greedy_fw(f.with_noise(0.0), C, K, path)
    else:
        measured_fw(f.with_noise(0.0), C, K, path)
    return _path_table(f, C, path)


def _regret_table(trace, comp, alpha) -> Table:
    r = regret_series(trace.rewards, comp, alpha)
    rows = [(int(t), _fmt(a), _fmt(b), _fmt(c), _fmt(d))
            for t, a, b, c, d in zip(r.t, r.reward, r.cumulative_reward, r.regret, r.ratio)]
    return ["t", "reward", "cumulative_reward", "regret", "ratio"], rows


def _run_online(exp, alg, params, seed) -> Table:
    fs, C, delays = ONLINE_BUILDERS[exp](params)
    env = OnlineEnv(fs, delays)
    monotone = env.monotone
    comp = comparator_values(env, comparator_point(env, C, int(params.get("comparator_K", 500))))
    alpha = ONE_MINUS_INV_E if monotone else (1.0 - float(np.max(np.abs(C.min_inf_norm_point())))) / 4.0
    eta = params.get("eta", "guarantee")
    if alg == "obga":
        trace = obga_run(env, C, "I" if monotone else "II", eta, seed)
    else:
        trace = oga_baseline(env, C, eta, seed)
    return _regret_table(trace, comp, alpha)


def _run_bandit(exp, alg, params, seed) -> Table:
    monotone = exp == "bandit-mono"
    fs, C = _bandit_instance(params, monotone)
    T = len(fs)
    env = OnlineEnv.no_delay(fs)
    comp = comparator_values(env, comparator_point(env, C, int(params.get("comparator_K", 500))))
    alpha = ONE_MINUS_INV_E if monotone else 0.25
    base = BanditConfig(T=T, option="I" if monotone else "II").resolve(C)
    cfg = BanditConfig(T=T, option="I" if monotone else "II", seed=seed,
                       lam=params.get("lam"), delta=params.get("delta"),
                       eta=float(params["eta"]) if "eta" in params else base.eta * float(params.get("eta_scale", 1.0)),
                       diam_scaled=bool(params.get("diam_scaled", False)))
    trace = bbga_run(fs, C, cfg)
    regret = np.cumsum(alpha * comp - trace.rewards)
    header = ["t", "mode", "reward", "z", "feasible", "regret", "ratio"]
    rows = []
    for t in range(T):
        z = "" if np.isnan(trace.z[t]) else _fmt(trace.z[t])
        rows.append((t + 1, "explore" if trace.explore[t] else "exploit", _fmt(trace.rewards[t]), z,
                     int(bool(trace.feasible[t])), _fmt(regret[t]), _fmt(regret[t] / (t + 1))))
    return header, rows


def _run_minimax(exp, alg, params, seed) -> Table:
    monotone = exp == "minimax-facility-mono"
    obj, K, M = _minimax_instance(params, monotone)
    T = int(params.get("T", 2000))
    cfg = MinimaxConfig(T=T, option="I" if monotone else "II", seed=seed,
                        eta=params.get("eta", "guarantee"), batch=int(params.get("batch", 1)))
    res = boosting_gda(obj, K, M, cfg)
    every = int(params.get("every", max(1, T // 100)))
    run = np.cumsum(res.xs, axis=0) / np.arange(1, T + 1)[:, None]
    mode = "greedy" if monotone else "distorted"
    rows = []
    for t in list(range(every - 1, T, every)):
        rows.append((t + 1, _fmt(minimax_eval(obj, run[t], M, mode)),
                     _fmt(minimax_eval(obj, run[t], M, "enumerate"))))
    return ["t", "eval_greedy", "eval_enumerate"], rows


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    algorithms: Tuple[str, ...]
    runner: Callable
    figure_metric: str


REGISTRY: Dict[str, ExperimentSpec] = {
    "coverage-monotone": ExperimentSpec("offline", ("bga", "sga", "cg"), _run_offline, "value"),
    "coverage-nonmonotone": ExperimentSpec("offline", ("bga", "sga", "mfw"), _run_offline, "value"),
    "qp-offline-mono": ExperimentSpec("offline", ("bga", "sga", "cg"), _run_offline, "value"),
    "qp-offline-nonmono": ExperimentSpec("offline", ("bga", "sga", "mfw"), _run_offline, "value"),
    "movie-synthetic-offline": ExperimentSpec("offline", ("bga", "sga", "cg", "mfw"), _run_offline, "value"),
    "qp-online-full": ExperimentSpec("online", ("obga", "oga"), _run_online, "ratio"),
    "qp-online-delayed": ExperimentSpec("online", ("obga", "oga"), _run_online, "ratio"),
    "movie-synthetic-online": ExperimentSpec("online", ("obga", "oga"), _run_online, "ratio"),
    "bandit-mono": ExperimentSpec("bandit", ("bbga",), _run_bandit, "ratio"),
    "bandit-nonmono": ExperimentSpec("bandit", ("bbga",), _run_bandit, "ratio"),
    "minimax-facility-mono": ExperimentSpec("minimax", ("bgda",), _run_minimax, "eval_greedy"),
    "minimax-facility-nonmono": ExperimentSpec("minimax", ("bgda",), _run_minimax, "eval_greedy"),
}


# --- configuration -----------------------------------------------------------------------------


@dataclass
class AlgorithmSpec:
    id: str
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    experiment: str
    algorithms: List[AlgorithmSpec]
    seeds: List[int]
    out: str = "results"
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment,
                "algorithms": [{"id": a.id, "params": dict(a.params)} for a in self.algorithms],
                "seeds": list(self.seeds), "out": self.out, "params": dict(self.params)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {"experiment", "algorithms", "seeds", "out", "params"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        exp = d.get("experiment")
        if exp not in REGISTRY:
            raise ConfigError(f"unknown experiment {exp!r}; valid ids: {sorted(REGISTRY)}")
        valid_algs = REGISTRY[exp].algorithms
        raw_algs = d.get("algorithms", [{"id": a} for a in valid_algs])
        algs = []
        for a in raw_algs:
            if isinstance(a, str):
                a = {"id": a}
            if not isinstance(a, dict) or "id" not in a:
                raise ConfigError("each algorithm entry needs an `id`")
            if a["id"] not in valid_algs:
                raise ConfigError(f"unknown algorithm {a['id']!r} for {exp}; valid ids: {list(valid_algs)}")
            params = a.get("params", {})
            if not isinstance(params, dict):
                raise ConfigError("algorithm params must be an object")
            algs.append(AlgorithmSpec(a["id"], dict(params)))
        if not algs:
            raise ConfigError("no algorithms selected")
        seeds = d.get("seeds", list(range(DEFAULT_TRIALS)))
        if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
            raise ConfigError("seeds must be a list of integers")
        if not seeds:
            raise ConfigError("seed list is empty")
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params must be an object")
        return cls(exp, algs, list(seeds), str(d.get("out", "results")), dict(params))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e}") from e


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    return ExperimentConfig.from_json(text)


# --- running ---------------------------------------------------------------------------------------


def _write_table(path: Path, table: Table) -> None:
    header, rows = table
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_table(path: Path) -> Table:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [tuple(row) for row in r]


def aggregate_tables(tables: List[Table]) -> Table:
    """Column-wise mean of numeric columns at each row; seeds are summed in list order."""
    header = tables[0][0]
    n_rows = min(len(t[1]) for t in tables)
    out = []
    for i in range(n_rows):
        row = []
        for j, name in enumerate(header):
            cells = [t[1][i][j] for t in tables]
            if name == "t":
                row.append(int(cells[0]))
                continue
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                row.append("")
                continue
            acc = 0.0
            for v in vals:
                acc += v
            row.append(_fmt(acc / len(vals)))
        out.append(tuple(row))
    return list(header), out


def _run_one(args):
    exp, alg_id, params, seed = args
    t0 = time.perf_counter()
    table = REGISTRY[exp].runner(exp, alg_id, params, seed)
    return table, time.perf_counter() - t0


def run_experiment(cfg: ExperimentConfig, out: Optional[str] = None, workers: int = 1) -> Path:
    """Run every (algorithm, seed) pair and write per-seed CSVs, means and a manifest."""
    if not cfg.seeds:
        raise ConfigError("seed list is empty")
    root = Path(out or cfg.out) / cfg.experiment
    jobs = []
    for alg in cfg.algorithms:
        params = {**cfg.params, **alg.params}
        for seed in cfg.seeds:
            jobs.append((cfg.experiment, alg.id, params, int(seed)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.to_dict(), "timings": []}
    by_alg: Dict[str, List[Table]] = {}
    for (exp, alg_id, _, seed), (table, secs) in zip(jobs, results):
        d = root / alg_id
        d.mkdir(parents=True, exist_ok=True)
        _write_table(d / f"seed_{seed}.csv", table)
        by_alg.setdefault(alg_id, []).append(table)
        manifest["timings"].append({"algorithm": alg_id, "seed": seed, "seconds": secs})
    for alg_id, tables in by_alg.items():
        _write_table(root / alg_id / "mean.csv", aggregate_tables(tables))
    with open(root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return root


def emit_plot_data(result_dir) -> List[Path]:
    """One `x,series_name,y` CSV per experiment directory found under result_dir."""
    base = Path(result_dir)
    if not base.is_dir():
        raise FileNotFoundError(f"no results directory at {base}")
    exp_dirs = [base] if (base / "manifest.json").exists() else sorted(p for p in base.iterdir() if p.is_dir())
    written = []
    for exp_dir in exp_dirs:
        exp = exp_dir.name
        if exp not in REGISTRY:
            continue
        metric = REGISTRY[exp].figure_metric
        rows = []
        for alg_dir in sorted(p for p in exp_dir.iterdir() if p.is_dir()):
            mean = alg_dir / "mean.csv"
            if not mean.exists():
                continue
            header, data = _read_table(mean)
            ti, mi = header.index("t"), header.index(metric)
            rows.extend((r[ti], alg_dir.name, r[mi]) for r in data)
        if not rows:
            continue
        path = exp_dir / f"plot_{exp}.csv"
        _write_table(path, (["x", "series_name", "y"], rows))
        written.append(path)
    if not written:
        raise FileNotFoundError(f"no experiment results under {base}")
    return written


def example_config(experiment: str, seeds=None, out: str = "results", **params) -> ExperimentConfig:
    spec = REGISTRY[experiment]
    return ExperimentConfig(experiment, [AlgorithmSpec(a) for a in spec.algorithms],
                            list(range(DEFAULT_TRIALS)) if seeds is None else list(seeds), out, params)
