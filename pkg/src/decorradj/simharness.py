"""Synthetic instances, Monte Carlo replications and metric tables.

Random streams are keyed, never shared: the instance of a (family, n) cell
and every replication inside it get their own Philox generator derived
from ``(master_seed, family, n, rep)``. Results therefore do not depend on
execution order or on the number of worker threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import estimators as est
from .decorrelation import DecorrelationProbs, draw_assignment, draw_quadruples
from .population import (
    FinitePopulation,
    FunctionClassSpec,
    ResidualSet,
    ate,
    observe,
    oracle_projection,
)
from .regressors import (
    BACKENDS,
    DegenerateSubsetError,
    FittedFunction,
    LassoConvergenceError,
    TrainingSubset,
    fit_backend,
    regressogram_bins,
    safe_ceil,
)

FAMILIES = ("linear_scaling", "holder")
_FAMILY_CODE = {"linear_scaling": 1, "holder": 2}
_INSTANCE_KEY = 2**32 - 1  # rep slot reserved for instance streams
MAX_REGENERATIONS = 10

METRICS_HEADER = ("family", "n", "d", "method", "mse", "coverage", "mean_ci_length", "reps_used", "reps_failed")

# Failures that mark a replication as failed instead of aborting the sweep.
REP_FAILURES = (
    est.DegenerateAssignmentError,
    DegenerateSubsetError,
    LassoConvergenceError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class InstanceError(RuntimeError):
    """An instance could not be generated."""


def fmt(v) -> str:
    """17 significant digits; round-trips any double."""
    v = float(v)
    return format(v, ".17g") if math.isfinite(v) else ("nan" if math.isnan(v) else format(v))


# ----------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    n_grid: tuple
    reps: int
    gamma_exponent: float | None = None
    alpha: float | None = None
    pi_T: float = 0.5
    pi_rule: str = "paper_default"
    pi_R_fixed: float | None = None
    estimator_set: tuple = ("dim", "adj", "dc", "adj_oracle", "dc_oracle")
    master_seed: int = 0
    alpha_level: float = 0.05
    backend: str | None = None
    threads: int = 1
    redraw_instance_per_rep: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}")
        grid = tuple(int(v) for v in self.n_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 2:
            raise ConfigError("n_grid must be a non-empty ascending list of counts >= 2")
        object.__setattr__(self, "n_grid", grid)
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.family == "linear_scaling":
            g = self.gamma_exponent
            if g is None or not (0.0 < g < 1.0):
                raise ConfigError("linear_scaling needs gamma_exponent in (0, 1)")
        else:
            a = self.alpha
            if a is None or not (0.0 < a <= 1.0):
                raise ConfigError("holder needs alpha in (0, 1]")
        if not (0.0 < self.pi_T < 1.0):
            raise ConfigError("pi_T must lie in (0, 1)")
        if self.pi_rule not in ("paper_default", "fixed"):
            raise ConfigError("pi_rule must be paper_default or fixed(<pi_R>)")
        if self.pi_rule == "fixed":
            p = self.pi_R_fixed
            if p is None or not (0.0 < p < min(self.pi_T, 1.0 - self.pi_T)):
                raise ConfigError("fixed pi_R must lie in (0, min(pi_T, 1 - pi_T))")
        methods = tuple(self.estimator_set)
        if not methods or any(m not in est.METHODS for m in methods) or len(set(methods)) != len(methods):
            raise ConfigError(f"estimator_set must list distinct tags from {est.METHODS}")
        object.__setattr__(self, "estimator_set", methods)
        if not (0.0 < self.alpha_level < 1.0):
            raise ConfigError("alpha_level must lie in (0, 1)")
        if self.backend is not None and self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if not (0 <= self.master_seed < 2**64):
            raise ConfigError("master_seed must be a 64-bit unsigned integer")

    @property
    def default_backend(self) -> str:
        if self.backend:
            return self.backend
        return "ols" if self.family == "linear_scaling" else "regressogram_interp"


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}
_FIXED = re.compile(r"^fixed\(\s*([^)]+)\s*\)$")


def _list(v):
    return [s.strip() for s in v.split(",") if s.strip()]


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Lists are comma separated. ``pi_rule`` is ``paper_default`` or
    ``fixed(<pi_R>)``.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k in raw:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        raw[k] = v
    kw = {}
    try:
        for k, v in raw.items():
            if k == "family":
                kw[k] = v
            elif k == "n_grid":
                kw[k] = tuple(int(s) for s in _list(v))
            elif k in ("reps", "threads"):
                kw[k] = int(v)
            elif k == "master_seed":
                kw[k] = int(v, 0)
            elif k in ("gamma_exponent", "alpha", "pi_T", "alpha_level"):
                kw[k] = float(v)
            elif k == "pi_rule":
                m = _FIXED.match(v)
                if m:
                    kw["pi_rule"] = "fixed"
                    kw["pi_R_fixed"] = float(m.group(1))
                else:
                    kw["pi_rule"] = v
            elif k == "estimator_set":
                kw[k] = tuple(_list(v))
            elif k == "backend":
                kw[k] = v
            elif k == "redraw_instance_per_rep":
                if v.lower() not in _BOOL:
                    raise ConfigError(f"{k}: expected a boolean")
                kw[k] = _BOOL[v.lower()]
            else:
                raise ConfigError(f"unknown key {k!r}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value: {exc}") from None
    for req in ("family", "n_grid", "reps"):
        if req not in kw:
            raise ConfigError(f"missing required key {req!r}")
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


# ------------------------------------------------------------------ streams


def stream(master_seed: int, family: str, n: int, rep: int) -> np.random.Generator:
    """Generator for replication ``rep`` of cell ``(family, n)``."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(_FAMILY_CODE[family], n, rep))
    return np.random.Generator(np.random.Philox(ss))


def instance_seed(master_seed: int, family: str, n: int, rep: int = 0) -> np.random.SeedSequence:
    """Seed of the frozen instance of a cell (``rep`` only matters when redrawing)."""
    return np.random.SeedSequence(master_seed, spawn_key=(_FAMILY_CODE[family], n, _INSTANCE_KEY, rep))


# --------------------------------------------------------------- instances


def t2_quantile(p):
    """Quantile function of Student's t with 2 degrees of freedom."""
    p = np.asarray(p, dtype=float)
    return (2 * p - 1) / np.sqrt(2 * p * (1 - p))


def bias_maximizing_epsilon(X, X_plus) -> np.ndarray:
    """Noise vector aligned with the leverage scores of ``X``.

    ``h`` is the diagonal of the hat matrix of ``X``; the result is the part
    of ``h`` orthogonal to the columns of ``X_plus``, rescaled to Euclidean
    norm ``sqrt(n)``.
    """
    X = np.asarray(X, dtype=float)
    X_plus = np.asarray(X_plus, dtype=float)
    n = X.shape[0]
    Q, Rx = np.linalg.qr(X)
    if _rank_deficient(Rx):
        raise np.linalg.LinAlgError("X has a singular Gram matrix")
    h = np.sum(Q * Q, axis=1)
    Qp, Rp = np.linalg.qr(X_plus)
    if _rank_deficient(Rp):
        raise np.linalg.LinAlgError("X_plus has a singular Gram matrix")
    e = h - Qp @ (Qp.T @ h)
    # one reorthogonalization pass keeps X_plus^T e at rounding level
    e = e - Qp @ (Qp.T @ e)
    nrm = np.linalg.norm(e)
    if nrm <= 1e-12 * max(1.0, np.linalg.norm(h)):
        raise np.linalg.LinAlgError("projected leverage vector vanishes")
    return math.sqrt(n) * e / nrm


def _rank_deficient(R) -> bool:
    d = np.abs(np.diag(R))
    return d.size == 0 or d.min() <= d.max() * max(R.shape) * np.finfo(float).eps * 10


def beta_star(d: int) -> np.ndarray:
    b = np.full(d + 1, 1.0 / math.sqrt(d))
    b[0] = 0.0
    return b


def _seed_seq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def _child(seq: np.random.SeedSequence, k: int) -> np.random.Generator:
    sub = np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + (k,))
    return np.random.Generator(np.random.Philox(sub))


def gen_linear_instance(n: int, d: int, instance_seed) -> FinitePopulation:
    """Heavy-tailed linear instance with ``d`` covariates plus an intercept.

    ``instance_seed`` is an integer or a ``SeedSequence``. If the design
    comes out singular, up to ten child streams are tried in turn.
    """
    if not (1 <= d < n):
        raise ValueError("need 1 <= d < n")
    seq = _seed_seq(instance_seed)
    last = None
    for attempt in range(MAX_REGENERATIONS):
        u = _child(seq, attempt).random((n, d))
        u = np.clip(u, 1e-300, None)  # an exact 0 would map to -inf
        Xt = t2_quantile(u)
        Xt = Xt - Xt.mean(axis=0)
        Xp = np.hstack([np.ones((n, 1)), Xt])
        try:
            eps = bias_maximizing_epsilon(Xt, Xp)
        except np.linalg.LinAlgError as exc:
            last = exc
            continue
        y1 = 4.0 * Xp @ beta_star(d) + eps
        return FinitePopulation(Xp, y1, np.zeros(n), has_intercept=True)
    raise InstanceError(f"linear instance generation failed after {MAX_REGENERATIONS} attempts: {last}")


def holder_target(x):
    return np.abs(2 * np.asarray(x, dtype=float) - 1)


def gen_holder_instance(n: int, noise_seed, noise_scale: float = 1.0 / 3.0) -> FinitePopulation:
    """Equispaced design on [0, 1) with a kinked mean and Gaussian noise."""
    rng = _child(_seed_seq(noise_seed), 0)
    x = np.arange(n) / n
    eps = rng.standard_normal(n)
    return FinitePopulation(x[:, None], holder_target(x) + noise_scale * eps, np.zeros(n))


# ------------------------------------------------------------ pi_R rules


def linear_dimension(n: int, gamma: float) -> int:
    return safe_ceil(n**gamma)


def paper_default_pi(family: str, n: int, d: int | None = None, alpha: float | None = None) -> float:
    """Fitting probability from the theoretical trade-off, capped at 1/4.

    Linear: ``sqrt(d / n)``. Holder: the rate for a class with entropy
    exponent ``a = 1 / alpha``.
    """
    if family == "linear_scaling":
        return min(math.sqrt(d / n), 0.25)
    a = 1.0 / alpha
    if a < 2:
        p = n ** (-2.0 / (a + 6.0))
    elif a == 2:
        p = n ** (-0.25) * math.sqrt(math.log(n))
    else:
        p = n ** (-1.0 / (a + 2.0))
    return min(p, 0.25)


# -------------------------------------------------------------------- cells


@dataclass(frozen=True)
class Cell:
    """Everything fixed within one (family, n) cell."""

    family: str
    n: int
    d: int
    pop: FinitePopulation
    probs: DecorrelationProbs
    f1star: np.ndarray
    f0star: np.ndarray
    tau_star: float
    fit_opts: dict = field(default_factory=dict)


def cell_dimension(config: ExperimentConfig, n: int) -> int:
    if config.family == "linear_scaling":
        return linear_dimension(n, config.gamma_exponent)
    return 1


def make_instance(config: ExperimentConfig, n: int, rep: int = 0) -> FinitePopulation:
    seed = instance_seed(config.master_seed, config.family, n, rep)
    if config.family == "linear_scaling":
        return gen_linear_instance(n, cell_dimension(config, n), seed)
    return gen_holder_instance(n, seed)


def make_cell(config: ExperimentConfig, pop: FinitePopulation) -> Cell:
    n = pop.n
    d = cell_dimension(config, n)
    if config.pi_rule == "fixed":
        pi_R = config.pi_R_fixed
    else:
        pi_R = paper_default_pi(config.family, n, d=d, alpha=config.alpha)
    probs = DecorrelationProbs.from_fit_probs(config.pi_T, pi_R)
    backend = config.default_backend
    if config.family == "linear_scaling":
        cls = FunctionClassSpec("linear")
        opts = {}
    else:
        cls = FunctionClassSpec("regressogram", bins=regressogram_bins(n, config.alpha))
        opts = {"alpha": config.alpha, "column": 0}
    if backend == "lasso":
        opts["y_inf"] = float(max(np.max(np.abs(pop.y1)), np.max(np.abs(pop.y0))))
    f1, f0 = oracle_projection(pop, cls)
    return Cell(config.family, n, d, pop, probs, f1, f0, ate(pop), opts)


# ------------------------------------------------------------- replications


@dataclass(frozen=True)
class RepFailure:
    method: str
    reason: str


ExternalBaseline = Callable[..., tuple]


class _Fits:
    """Lazily computed fitted functions for one replication."""

    def __init__(self, cell, backend, X, y, T, quad):
        self.cell, self.backend, self.X, self.y, self.T, self.quad = cell, backend, X, y, T, quad
        self._cache = {}

    def _fit(self, mask, prob):
        return fit_backend(self.backend, self.X, self.y, TrainingSubset(mask, prob), **self.cell.fit_opts)

    def get(self, key) -> FittedFunction:
        if key not in self._cache:
            p = self.cell.probs
            if key == "f1":
                self._cache[key] = self._fit(self.T == 1, p.pi_T)
            elif key == "f0":
                self._cache[key] = self._fit(self.T == 0, 1 - p.pi_T)
            elif key == "fR":
                self._cache[key] = self._fit(self.quad.R == 1, p.pi_R)
            elif key == "fRbar":
                self._cache[key] = self._fit(self.quad.Rbar == 1, p.pi_Rbar)
        return self._cache[key]


def _one_method(method, cell, config, y, T, quad, fits, rep, external):
    n, probs, a = cell.n, cell.probs, config.alpha_level
    pi_T = probs.pi_T
    if method == "dim":
        return est.EstimateReport.build(method, est.dim(y, T, pi_T), est.dim_variance_plugin(y, T, pi_T), n, a)
    if method == "adj":
        f1, f0 = fits.get("f1"), fits.get("f0")
        return est.EstimateReport.build(
            method, est.adj(y, T, f1, f0, pi_T), est.adj_variance_plugin(y, T, f1, f0, pi_T), n, a
        )
    if method == "dc":
        fR, fRb = fits.get("fR"), fits.get("fRbar")
        return est.EstimateReport.build(
            method, est.dc(y, quad, fR, fRb, probs), est.v_hat(y, quad, fR, fRb, probs), n, a
        )
    if method == "adj_oracle":
        f1, f0 = cell.f1star, cell.f0star
        return est.EstimateReport.build(
            method, est.adj(y, T, f1, f0, pi_T), est.adj_variance_plugin(y, T, f1, f0, pi_T), n, a
        )
    if method == "dc_oracle":
        f1, f0 = cell.f1star, cell.f0star
        return est.EstimateReport.build(
            method, est.dc(y, quad, f1, f0, probs), est.v_hat(y, quad, f1, f0, probs), n, a
        )
    if method == "hajek_dim":
        return est.EstimateReport.build(method, est.hajek_dim(y, T), est.dim_variance_plugin(y, T, pi_T), n, a)
    if method == "hajek_adj":
        f1, f0 = fits.get("f1"), fits.get("f0")
        return est.EstimateReport.build(
            method, est.hajek_adj(y, T, f1, f0), est.adj_variance_plugin(y, T, f1, f0, pi_T), n, a
        )
    if method == "hajek_dc":
        fR, fRb = fits.get("fR"), fits.get("fRbar")
        return est.EstimateReport.build(
            method, est.hajek_dc(y, quad, fR, fRb), est.v_hat(y, quad, fR, fRb, probs), n, a
        )
    if method == "hajek_adj_oracle":
        f1, f0 = cell.f1star, cell.f0star
        return est.EstimateReport.build(
            method, est.hajek_adj(y, T, f1, f0), est.adj_variance_plugin(y, T, f1, f0, pi_T), n, a
        )
    if method == "hajek_dc_oracle":
        f1, f0 = cell.f1star, cell.f0star
        return est.EstimateReport.build(
            method, est.hajek_dc(y, quad, f1, f0), est.v_hat(y, quad, f1, f0, probs), n, a
        )
    if method == "external_baseline":
        if external is None:
            raise ConfigError("external_baseline requested but no callable was supplied")
        point, var = external(cell.pop.X, y, T, cell.probs, rep)
        return est.EstimateReport.build(method, point, var, n, a)
    raise ConfigError(f"unknown method {method!r}")


def run_replication(
    pop: FinitePopulation, config: ExperimentConfig, rep_index: int,
    cell: Cell | None = None, external_baseline: ExternalBaseline | None = None,
) -> list:
    """One Monte Carlo trial.

    Returns one entry per requested method, in ``estimator_set`` order: an
    :class:`EstimateReport`, or a :class:`RepFailure` when the trial is
    degenerate for that method.
    """
    if cell is None:
        cell = make_cell(config, pop)
    rng = stream(config.master_seed, config.family, pop.n, rep_index)
    T = draw_assignment(pop.n, config.pi_T, rng)
    quad = draw_quadruples(T, cell.probs, rng)
    y = observe(pop, T)
    fits = _Fits(cell, config.default_backend, pop.X, y, T, quad)
    out = []
    for m in config.estimator_set:
        try:
            with np.errstate(divide="raise", invalid="raise", over="raise"):
                r = _one_method(m, cell, config, y, T, quad, fits, rep_index, external_baseline)
            if not math.isfinite(r.point):
                raise FloatingPointError("non-finite point estimate")
            out.append(r)
        except REP_FAILURES as exc:
            out.append(RepFailure(m, f"{type(exc).__name__}: {exc}"))
    return out


# -------------------------------------------------------------- aggregation


@dataclass(frozen=True)
class MetricsRow:
    family: str
    n: int
    d: int
    method: str
    mse: float
    coverage: float
    mean_ci_length: float
    reps_used: int
    reps_failed: int

    def csv_fields(self):
        return [
            self.family, str(self.n), str(self.d), self.method,
            fmt(self.mse), fmt(self.coverage), fmt(self.mean_ci_length),
            str(self.reps_used), str(self.reps_failed),
        ]


class NoSuccessfulRepsError(RuntimeError):
    pass


def aggregate(per_rep: list, tau_star: float, family: str = "", n: int = 0, d: int = 0) -> list:
    """Reduce per-replication results to one :class:`MetricsRow` per method.

    ``per_rep`` holds one list per replication, as returned by
    :func:`run_replication`. Sums run in replication order.
    """
    if not per_rep:
        raise NoSuccessfulRepsError("no replications")
    methods = [r.method for r in per_rep[0]]
    rows = []
    for j, m in enumerate(methods):
        sq, cov, length, used, failed = 0.0, 0, 0.0, 0, 0
        for rep in per_rep:
            r = rep[j]
            if isinstance(r, RepFailure):
                failed += 1
                continue
            used += 1
            sq += (r.point - tau_star) ** 2
            if r.ci_low is not None:
                cov += int(r.ci_low <= tau_star <= r.ci_high)
                length += r.ci_high - r.ci_low
        if used == 0:
            raise NoSuccessfulRepsError(f"method {m}: all {failed} replications failed")
        rows.append(MetricsRow(family, n, d, m, sq / used, cov / used, length / used, used, failed))
    return rows


@dataclass
class CellResult:
    rows: list
    raw: list  # (rep, entries) sorted by rep


def run_cell(config: ExperimentConfig, n: int, external_baseline=None, keep_raw=False) -> CellResult:
    d = cell_dimension(config, n)
    shared = None if config.redraw_instance_per_rep else make_cell(config, make_instance(config, n))

    def task(rep):
        cell = shared if shared is not None else make_cell(config, make_instance(config, n, rep))
        return rep, cell.tau_star, run_replication(cell.pop, config, rep, cell, external_baseline)

    reps = range(config.reps)
    if config.threads == 1:
        results = [task(r) for r in reps]
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(task, reps))
    results.sort(key=lambda t: t[0])
    if shared is not None:
        tau = shared.tau_star
        per_rep = [r[2] for r in results]
        try:
            rows = aggregate(per_rep, tau, config.family, n, d)
        except NoSuccessfulRepsError:
            rows = _failed_rows(config, n, d, per_rep)
    else:
        rows = _aggregate_redrawn(config, n, d, results)
    return CellResult(rows, [(r[0], r[2]) for r in results] if keep_raw else [])


def _failed_rows(config, n, d, per_rep):
    rows = []
    for j, m in enumerate(config.estimator_set):
        bad = sum(isinstance(rep[j], RepFailure) for rep in per_rep)
        if bad == len(per_rep):
            rows.append(MetricsRow(config.family, n, d, m, math.nan, math.nan, math.nan, 0, bad))
        else:
            part = [[rep[j]] for rep in per_rep]
            rows.append(aggregate(part, 0.0, config.family, n, d)[0])
    return rows


def _aggregate_redrawn(config, n, d, results):
    # each rep has its own tau*, so center every report before pooling
    centered = []
    for _, tau, entries in results:
        row = []
        for r in entries:
            if isinstance(r, RepFailure):
                row.append(r)
            else:
                shift = lambda v: None if v is None else v - tau  # noqa: E731
                row.append(replace(r, point=r.point - tau, ci_low=shift(r.ci_low), ci_high=shift(r.ci_high)))
        centered.append(row)
    try:
        return aggregate(centered, 0.0, config.family, n, d)
    except NoSuccessfulRepsError:
        return _failed_rows(config, n, d, centered)


def run_experiment(config: ExperimentConfig, external_baseline=None, raw_sink=None) -> list:
    """All cells of the sweep; returns the metrics rows in (n, method) order.

    ``raw_sink(family, n, rep, entries)`` receives every replication in a
    fixed order when given.
    """
    rows = []
    for n in config.n_grid:
        res = run_cell(config, n, external_baseline, keep_raw=raw_sink is not None)
        rows.extend(res.rows)
        if raw_sink is not None:
            for rep, entries in res.raw:
                raw_sink(config.family, n, rep, entries)
    return rows


# ------------------------------------------------------------------ writers


def metrics_csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_csv_text(rows))


def read_metrics_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        out = []
        for rec in reader:
            out.append(MetricsRow(
                rec["family"], int(rec["n"]), int(rec["d"]), rec["method"],
                float(rec["mse"]), float(rec["coverage"]), float(rec["mean_ci_length"]),
                int(rec["reps_used"]), int(rec["reps_failed"]),
            ))
    return out


def raw_line(family: str, n: int, rep: int, entry) -> str:
    head = f'"family": "{family}", "rep": {rep}, '
    if isinstance(entry, RepFailure):
        return "{" + head + f'"n": {n}, "method": "{entry.method}", "failed": {json.dumps(entry.reason)}' + "}"
    return "{" + head + entry.to_json()[1:]


def residual_set(cell: Cell) -> ResidualSet:
    return ResidualSet(cell.pop.y1 - cell.f1star, cell.pop.y0 - cell.f0star)
