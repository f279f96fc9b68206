"""Monte Carlo experiments: replicate paths, estimate on a time grid, score.

Each path ``j`` is simulated from its own generator ``path_rng(seed, j)`` and
scored independently; per-path results are reduced in path order, so a
report does not depend on how many worker processes produced it.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .estimate import (
    CFEngine,
    EstimatorConfig,
    TruncatedKernelEngine,
    aggregation_grid,
    bipower_variation,
    threshold_v,
)
from .sim import ModelSpec, PathSample, path_rng, simulate_path

__all__ = [
    "ESTIMATOR_KINDS",
    "EstimatorSpec",
    "ExperimentConfig",
    "Metrics",
    "EstimatorResult",
    "ExperimentReport",
    "GridSearchResult",
    "tau_grid",
    "compute_metrics",
    "evaluate_path",
    "run_experiment",
    "grid_search",
    "default_grid",
]

log = logging.getLogger(__name__)

ESTIMATOR_KINDS = ("truncated", "practical", "theoretical", "cf", "cf_debiased")
TUNED_KINDS = ("practical", "theoretical", "cf_debiased")


@dataclass(frozen=True)
class EstimatorSpec:
    """A named estimator: its kind, debias stage and tuning."""

    name: str
    kind: str
    config: EstimatorConfig = field(default_factory=EstimatorConfig)
    stage: int = 0

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; choose from {ESTIMATOR_KINDS}")
        if self.kind in ("practical", "theoretical"):
            if self.stage not in (1, 2):
                raise ValueError(f"{self.name}: {self.kind} estimators need stage 1 or 2")
            if len(self.config.zeta) < self.stage:
                raise ValueError(f"{self.name}: stage {self.stage} needs {self.stage} zeta values")
            if self.kind == "practical" and len(self.config.p_scalers) < self.stage:
                raise ValueError(f"{self.name}: stage {self.stage} needs {self.stage} p values")
        elif self.stage != 0:
            raise ValueError(f"{self.name}: stage only applies to debiased estimators")

    def tuning(self) -> dict:
        if self.kind == "practical":
            return {"zeta": list(self.config.zeta[:self.stage]),
                    "p": list(self.config.p_scalers[:self.stage])}
        if self.kind == "theoretical":
            return {"zeta": list(self.config.zeta[:self.stage])}
        if self.kind == "cf_debiased":
            return {"lambda": self.config.cf.lam, "p": self.config.cf.p}
        return {}

    def tuning_label(self) -> str:
        t = self.tuning()
        if not t:
            return "-"
        parts = []
        for k, v in t.items():
            if isinstance(v, list):
                v = "(" + ",".join(f"{x:g}" for x in v) + ")" if len(v) > 1 else f"{v[0]:g}"
            else:
                v = f"{v:g}"
            parts.append(f"{k}={v}")
        return " ".join(parts)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's numbers (worker count does not)."""

    model: ModelSpec
    estimators: tuple[EstimatorSpec, ...]
    n_paths: int = 100
    seed: int = 0
    eps_truth: float = 1e-12
    tau_first: int = 10
    tau_last: int = 90

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        names = [e.name for e in self.estimators]
        if len(set(names)) != len(names):
            raise ValueError("estimator names must be unique")
        if not 0 < self.tau_first <= self.tau_last < 100:
            raise ValueError("tau grid needs 0 < tau_first <= tau_last < 100")
        tau_grid(self.model.n_steps, self.tau_first, self.tau_last)

    def estimator(self, name: str) -> EstimatorSpec:
        for e in self.estimators:
            if e.name == name:
                return e
        raise KeyError(name)


def tau_grid(n: int, first: int = 10, last: int = 90) -> np.ndarray:
    """Indices ``l_i = i * floor(n / 100)`` for ``i = first..last``."""
    if n < 100:
        raise ValueError(f"tau grid needs n >= 100, got {n}")
    return np.arange(first, last + 1) * (n // 100)


@dataclass
class Metrics:
    rmse: float
    are: float
    re: float
    mse_j: np.ndarray
    ae_j: np.ndarray
    e_j: np.ndarray
    excluded: int = 0


def compute_metrics(estimates, truths, eps_truth: float = 1e-12) -> Metrics:
    """Per-path squared, absolute-relative and relative errors over the tau grid.

    Rows are paths, columns grid points.  Points whose truth is below
    ``eps_truth`` enter the squared error but not the relative ones; a path
    with no usable point gets ``nan`` relative errors.
    """
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape or est.ndim != 2:
        raise ValueError(f"shape mismatch: estimates {est.shape} vs truths {tru.shape}")
    err = est - tru
    mse_j = np.mean(err * err, axis=1)
    ok = tru >= eps_truth
    cnt = ok.sum(axis=1)
    safe = np.where(ok, tru, 1.0)
    rel = np.where(ok, err / safe, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ae_j = np.where(cnt > 0, np.abs(rel).sum(axis=1) / cnt, np.nan)
        e_j = np.where(cnt > 0, rel.sum(axis=1) / cnt, np.nan)
    return Metrics(
        rmse=float(math.sqrt(np.mean(mse_j))),
        are=float(np.mean(ae_j)),
        re=float(np.mean(e_j)),
        mse_j=mse_j, ae_j=ae_j, e_j=e_j,
        excluded=int(ok.size - ok.sum()),
    )


# ----------------------------------------------------------------------------
# per-path evaluation

class _PathContext:
    """Engines shared by all estimators evaluated on one path."""

    def __init__(self, path: PathSample, taus: np.ndarray):
        self.path = path
        self.taus = taus
        self.bv = bipower_variation(path)
        self._trunc = {}
        self._cf = {}

    def truncated_engine(self, cfg: EstimatorConfig) -> TruncatedKernelEngine:
        m = cfg.m(self.path.dt)
        key = (id(cfg.kernel), m)
        eng = self._trunc.get(key)
        if eng is None:
            agg = self.path.times[aggregation_grid(self.path.n, m)]
            eng = TruncatedKernelEngine(self.path, cfg.kernel, m, {"tau": self.taus, "agg": agg})
            self._trunc[key] = eng
        return eng

    def cf_engine(self, cfg: EstimatorConfig) -> tuple[CFEngine, float]:
        dt = self.path.dt
        h = dt ** cfg.cf.h_power
        m = cfg.m(dt)
        key = (id(cfg.cf.kernel), h, m)
        eng = self._cf.get(key)
        if eng is None:
            agg = self.path.times[aggregation_grid(self.path.n, m, start=0)]
            eng = CFEngine(self.path, cfg.cf.kernel, h, {"tau": self.taus, "agg": agg})
            self._cf[key] = eng
        u = dt ** cfg.cf.u_power / math.sqrt(self.bv) if self.bv > 0 else 1.0
        return eng, u

    def threshold(self, cfg: EstimatorConfig) -> float:
        return threshold_v(self.bv, self.path.dt, cfg.v_rule)


def _estimate(ctx: _PathContext, spec: EstimatorSpec) -> tuple[np.ndarray, dict]:
    cfg = spec.config
    if spec.kind in ("cf", "cf_debiased"):
        eng, u = ctx.cf_engine(cfg)
        before = dict(eng.flags)
        if spec.kind == "cf":
            vals = eng.spot("tau", u).copy()
        else:
            vals = eng.debiased("tau", u, cfg.cf.lam, cfg.cf.p)[0]
        flags = {k: eng.flags[k] - before[k] for k in eng.flags}
    else:
        eng = ctx.truncated_engine(cfg)
        v = ctx.threshold(cfg)
        before = dict(eng.flags)
        if spec.kind == "truncated":
            vals = eng.base("tau", v).copy()
            flags = {}
        elif spec.kind == "theoretical":
            vals, _, _, guard = eng.theoretical("tau", v, cfg.zeta, spec.stage)
            flags = {"guard": int(np.count_nonzero(guard))}
        else:
            vals = eng.practical("tau", v, cfg.zeta, cfg.p_scalers, cfg.signs, spec.stage,
                                 sign_mode=cfg.sign_mode).copy()
            flags = {k: eng.flags[k] - before[k] for k in eng.flags}
        flags["degenerate"] = int(np.count_nonzero(eng.degenerate("tau")))
    if cfg.clamp_negative:
        vals = np.maximum(vals, 0.0)
    flags["negative"] = int(np.count_nonzero(vals < 0))
    return vals, flags


def evaluate_path(config: ExperimentConfig, index: int):
    """Simulate path ``index`` and evaluate every estimator on the tau grid.

    Returns ``(truth, {name: values}, {name: flag counts}, {name: error})``.
    An estimator that raises gets ``nan`` values and its error message.
    """
    path = simulate_path(config.model, path_rng(config.seed, index), seed=(config.seed, index))
    idx = tau_grid(path.n, config.tau_first, config.tau_last)
    taus = path.times[idx]
    truth = path.v[idx].copy()
    ctx = _PathContext(path, taus)
    values, flags, errors = {}, {}, {}
    for spec in config.estimators:
        try:
            values[spec.name], flags[spec.name] = _estimate(ctx, spec)
        except (ArithmeticError, ValueError) as exc:
            values[spec.name] = np.full(len(taus), np.nan)
            flags[spec.name] = {}
            errors[spec.name] = f"{type(exc).__name__}: {exc}"
    return truth, values, flags, errors


def _evaluate_chunk(config, indices):
    return [evaluate_path(config, j) for j in indices]


def _chunks(n, workers):
    size = max(1, math.ceil(n / (4 * workers)))
    return [list(range(a, min(n, a + size))) for a in range(0, n, size)]


def _map_paths(fn, config, n, workers):
    """Run ``fn(config, chunk)`` over path chunks and return results in path order."""
    chunks = _chunks(n, workers)
    if workers <= 1:
        out = [fn(config, c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(fn, itertools.repeat(config), chunks))
    return [r for part in out for r in part]


# ----------------------------------------------------------------------------
# reports

@dataclass
class EstimatorResult:
    name: str
    kind: str
    stage: int
    tuning: dict
    metrics: Metrics
    failures: int
    failure_examples: list
    flag_counts: dict


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    results: list
    n_truth_excluded: int
    wall_clock: float = 0.0
    notes: list = field(default_factory=list)

    def result(self, name: str) -> EstimatorResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def summary_rows(self):
        return [(r.name, r.metrics.rmse, r.metrics.are, r.metrics.re,
                 self.config.estimator(r.name).tuning_label()) for r in self.results]

    def to_dict(self, config_sections: dict | None = None) -> dict:
        """JSON-ready content; ``wall_clock`` is left out so reruns compare equal."""
        out = {
            "format": "spotvol-report/1",
            "seed": self.config.seed,
            "n_paths": self.config.n_paths,
            "n_truth_excluded": self.n_truth_excluded,
            "notes": list(self.notes),
            "estimators": [],
        }
        if config_sections is not None:
            out["config"] = config_sections
        for r in self.results:
            m = r.metrics
            out["estimators"].append({
                "name": r.name,
                "kind": r.kind,
                "stage": r.stage,
                "tuning": r.tuning,
                "rmse": m.rmse,
                "are": m.are,
                "re": m.re,
                "relative_points_excluded": m.excluded,
                "failures": r.failures,
                "failure_examples": r.failure_examples,
                "flags": r.flag_counts,
                "per_path": {"mse": m.mse_j.tolist(), "ae": m.ae_j.tolist(), "e": m.e_j.tolist()},
            })
        return out


def _regime_notes(config: ExperimentConfig) -> list[str]:
    y = config.model.jump_y
    notes = []
    if config.model.jump_scale > 0:
        if y >= 1.5:
            notes.append("Y >= 3/2: the stage-0 estimator is not rate-optimal without debiasing")
        if y >= 12 / 7:
            notes.append("Y >= 12/7: one debias step is not enough for the optimal rate")
        if y >= 20 / 11:
            notes.append("Y >= 20/11: no debiased estimator attains the optimal rate")
    return notes


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Simulate ``config.n_paths`` paths and score every estimator."""
    start = time.perf_counter()
    per_path = _map_paths(_evaluate_chunk, config, config.n_paths, workers)
    truths = np.array([p[0] for p in per_path])
    results = []
    for spec in config.estimators:
        est = np.array([p[1][spec.name] for p in per_path])
        errors = [(j, p[3][spec.name]) for j, p in enumerate(per_path) if spec.name in p[3]]
        ok = np.all(np.isfinite(est), axis=1)
        if ok.any():
            metrics = compute_metrics(est[ok], truths[ok], config.eps_truth)
        else:
            nan = np.full(0, np.nan)
            metrics = Metrics(math.nan, math.nan, math.nan, nan, nan, nan, 0)
        tally = {}
        for p in per_path:
            for k, c in p[2].get(spec.name, {}).items():
                tally[k] = tally.get(k, 0) + int(c)
        results.append(EstimatorResult(
            name=spec.name, kind=spec.kind, stage=spec.stage, tuning=spec.tuning(),
            metrics=metrics, failures=int((~ok).sum()),
            failure_examples=[f"path {j}: {msg}" for j, msg in errors[:5]],
            flag_counts=dict(sorted(tally.items())),
        ))
    excluded = int(np.count_nonzero(truths < config.eps_truth))
    notes = _regime_notes(config)
    for n in notes:
        log.info(n)
    return ExperimentReport(config, results, excluded, time.perf_counter() - start, notes)


# ----------------------------------------------------------------------------
# grid search

def default_grid(lo: float, hi: float, step: float = 0.05) -> tuple[float, ...]:
    """Inclusive grid ``lo, lo+step, ..., hi`` rounded to 10 decimals."""
    count = int(round((hi - lo) / step)) + 1
    return tuple(round(lo + i * step, 10) for i in range(count))


ZETA_GRID = default_grid(1.1, 1.9)
P_GRID = default_grid(0.1, 0.9)
LAMBDA_GRID = ZETA_GRID


def _candidates(spec: EstimatorSpec, zeta_grid, p_grid, lambda_grid):
    cfg = spec.config
    if spec.kind == "practical":
        k = spec.stage
        for zs in itertools.product(zeta_grid, repeat=k):
            for ps in itertools.product(p_grid, repeat=k):
                yield replace(spec, config=cfg.with_tuning(zeta=zs, p_scalers=ps))
    elif spec.kind == "theoretical":
        for zs in itertools.product(zeta_grid, repeat=spec.stage):
            yield replace(spec, config=cfg.with_tuning(zeta=zs))
    elif spec.kind == "cf_debiased":
        for lam in lambda_grid:
            for p in p_grid:
                yield replace(spec, config=replace(cfg, cf=replace(cfg.cf, lam=lam, p=p)))
    else:
        yield spec


@dataclass
class GridSearchResult:
    """Best tuning per estimator plus the full pilot RMSE surface."""

    best: dict
    surface: dict
    pilot_paths: int
    independent: bool

    def to_dict(self) -> dict:
        return {
            "pilot_paths": self.pilot_paths,
            "independent_pilot": self.independent,
            "best": {k: {"tuning": s.tuning(), "rmse": r} for k, (s, r) in self.best.items()},
            "surface": {k: [{"tuning": t, "rmse": r} for t, r in rows]
                        for k, rows in self.surface.items()},
        }


def _pilot_chunk(job, indices):
    """Per-path MSE of every candidate, one dict per path index."""
    config, cands, independent = job
    out = []
    for j in indices:
        if independent:
            # a fresh path for every candidate
            row = {}
            for name, specs in cands.items():
                mse = np.empty(len(specs))
                for g, spec in enumerate(specs):
                    path = simulate_path(config.model, path_rng(config.seed, j, stream=g + 1))
                    mse[g] = _pilot_mse(config, path, [spec])[0]
                row[name] = mse
            out.append(row)
            continue
        path = simulate_path(config.model, path_rng(config.seed, j))
        out.append({name: _pilot_mse(config, path, specs) for name, specs in cands.items()})
    return out


def _pilot_mse(config, path, specs) -> np.ndarray:
    idx = tau_grid(path.n, config.tau_first, config.tau_last)
    truth = path.v[idx]
    ctx = _PathContext(path, path.times[idx])
    out = np.empty(len(specs))
    for g, spec in enumerate(specs):
        try:
            vals, _ = _estimate(ctx, spec)
            out[g] = float(np.mean((vals - truth) ** 2))
        except (ArithmeticError, ValueError):
            out[g] = math.inf
        for eng in ctx._trunc.values():
            eng.forget(min_stage=2)
    return out


def grid_search(config: ExperimentConfig, names=None, zeta_grid=ZETA_GRID, p_grid=P_GRID,
                lambda_grid=LAMBDA_GRID, pilot_paths: int = 100, independent: bool = False,
                workers: int = 1) -> GridSearchResult:
    """Exhaustive pilot search minimising RMSE over the tuning grids.

    By default all candidates are scored on the same ``pilot_paths`` paths
    (common random numbers).  ``independent=True`` draws fresh paths for
    every candidate instead.  Non-finite pilot RMSEs never win.
    """
    if not (zeta_grid and p_grid and lambda_grid):
        raise ValueError("grids must be nonempty")
    pilot = replace(config, n_paths=pilot_paths)
    specs = [s for s in config.estimators if names is None or s.name in names]
    specs = [s for s in specs if s.kind in TUNED_KINDS]
    if not specs:
        raise ValueError("no tunable estimators selected")
    cands = {s.name: list(_candidates(s, zeta_grid, p_grid, lambda_grid)) for s in specs}
    job = (pilot, cands, independent)
    parts = _map_paths(_pilot_chunk, job, pilot_paths, workers)
    best, surface = {}, {}
    for s in specs:
        # summed in path order so the surface does not depend on the worker count
        total = np.zeros(len(cands[s.name]))
        for row in parts:
            total += row[s.name]
        rmse = np.sqrt(total / pilot_paths)
        rmse = np.where(np.isfinite(rmse), rmse, np.inf)
        g = int(np.argmin(rmse))
        best[s.name] = (cands[s.name][g], float(rmse[g]))
        surface[s.name] = [(c.tuning(), float(r)) for c, r in zip(cands[s.name], rmse)]
    return GridSearchResult(best, surface, pilot_paths, independent)
