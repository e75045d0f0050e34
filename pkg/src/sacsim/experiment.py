"""Coupled-path Monte Carlo estimation of strong convergence rates.

Every sample builds one noise path at the reference resolution (N_ref, M_ref)
and evaluates both the reference scheme and each coarse (N, M) cell on that
same path, so the per-path difference isolates discretization error.  The
per-path statistic is the weighted sup over evaluated grid times,

    sup_k  t_k^gamma || X^ref_{t_k} - X^{N,M}_{t_k} ||_{-alpha},

with the coarse field zero-padded to the reference cutoff (the comparison
keeps the full spatial tail).  The L^p Monte Carlo moment of these statistics
is fitted against log2 N or log2 M by ordinary least squares.

Everything downstream of the counter-based noise is deterministic: samples
are reduced in index order and the bootstrap uses a fixed-seed generator, so
artifacts are byte-identical no matter how many workers run.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from . import besov, noise, scheme, wick
from .spectral import SpectralField, project

METRIC_X = "X_err_neg_alpha_weighted"
METRIC_Y = "Y_err_beta"
METRIC_YW = "Y_err_beta_weighted"
METRIC_Z = "Z_wick_err"
METRICS = (METRIC_X, METRIC_Y, METRIC_YW, METRIC_Z)

_BOOTSTRAP_SEED = 0x5EED_B007
_N_BOOTSTRAP = 1000
_N_RATE_BOOTSTRAP = 200


@dataclass
class ExperimentConfig:
    template: scheme.SchemeParams
    N_list: list
    M_list: list
    N_ref: int
    M_ref: int
    samples: int
    p: float = 2.0
    metric: str = METRIC_X
    kappa: float = 0.01
    kappa1: float | None = None
    eval_steps: int = 256
    space_steps: int | None = None
    metric_oversample: int = 2
    metric_refine: bool = True
    workers: int | None = None

    def validate(self) -> list:
        errors = []
        if self.metric not in METRICS:
            errors.append(f"unknown metric {self.metric!r}; choose one of {METRICS}")
        for M in self.M_list:
            if self.M_ref % M != 0:
                errors.append(f"M = {M} does not divide M_ref = {self.M_ref}")
        if self.M_ref % self.space_M != 0:
            errors.append(f"space_steps = {self.space_M} does not divide M_ref")
        for N in self.N_list:
            if N > self.N_ref:
                errors.append(f"N = {N} exceeds N_ref = {self.N_ref}")
        if sorted(self.N_list) != list(self.N_list) or sorted(self.M_list) != list(self.M_list):
            errors.append("N_list and M_list must be sorted ascending")
        if self.p < 2:
            errors.append("moment order p must be at least 2")
        if self.samples < 1:
            errors.append("sample count must be positive")
        return errors

    @property
    def space_M(self) -> int:
        """Step count of the spatial-sweep cells.

        Coupling makes the temporal component of a cell's error common across
        N (and empirically ~1% of the spatial error already at M = 512), so
        the spatial sweep does not need to run its cells at M_ref.
        """
        return self.M_ref if self.space_steps is None else self.space_steps

    def kappa1_value(self) -> float:
        return self.template.alpha / 2.0 if self.kappa1 is None else self.kappa1

    def seed_for(self, sample_index: int) -> noise.SeedSpec:
        master = self.template.seed.master_seed if self.template.seed else 0
        return noise.SeedSpec(master, sample_index, base_steps=self.M_ref)


@dataclass
class ErrorSample:
    sample_index: int
    N: int
    M: int
    error: float


@dataclass
class RateFit:
    axis: str
    slope: float
    intercept: float
    residual: float
    points: list
    ci_low: float | None = None
    ci_high: float | None = None


def eval_indices(M: int, eval_steps: int) -> list:
    """Grid indices the weighted sup is taken over: k >= 1, at most ~eval_steps
    of them, uniformly strided, always including k = 1 and k = M."""
    stride = max(1, M // max(1, eval_steps))
    ks = set(range(stride, M + 1, stride))
    ks.update((1, M))
    return sorted(ks)


def _metric_norm_kwargs(config: ExperimentConfig) -> dict:
    return dict(part=config.template.partition, oversample=config.metric_oversample,
                refine=config.metric_refine)


def _field_for_metric(record: scheme.TrajectoryRecord, metric: str, k: int) -> SpectralField:
    return record.X[k] if metric == METRIC_X else record.Y[k]


def _metric_spec(metric: str, params: scheme.SchemeParams):
    """(regularity s, weight exponent) of a scheme-error metric."""
    if metric == METRIC_X:
        return -params.alpha, params.gamma
    if metric == METRIC_Y:
        return params.beta, 0.0
    if metric == METRIC_YW:
        return params.beta, params.gamma
    raise ValueError(f"{metric} is not a scheme-error metric")


def cell_error(config: ExperimentConfig, ref: scheme.TrajectoryRecord,
               cell: scheme.TrajectoryRecord, eval_ks: list) -> float:
    """Weighted sup over the cell's evaluated grid times, at the ref cutoff."""
    s, weight_exp = _metric_spec(config.metric, config.template)
    stride = config.M_ref // cell.params.steps
    kwargs = _metric_norm_kwargs(config)
    worst = 0.0
    for k in eval_ks:
        t = cell.times[k]
        a = _field_for_metric(ref, config.metric, k * stride)
        b = _field_for_metric(cell, config.metric, k)
        diff = a - project(b, config.N_ref)
        w = 1.0 if weight_exp == 0.0 else t**weight_exp
        worst = max(worst, w * besov.besov_norm(diff, s, **kwargs).value)
    if not math.isfinite(worst):
        raise scheme.SchemeAbort(-1, f"non-finite error in cell {(cell.params.cutoff, cell.params.steps)}")
    return worst


def _keep_for(metric: str) -> tuple:
    return ("X",) if metric == METRIC_X else ("Y",)


def sample_cell_errors(config: ExperimentConfig, cells: list, sample_index: int) -> list:
    """All cell errors for one sample, sharing the path and the reference run."""
    seed = config.seed_for(sample_index)
    path = noise.NoisePath.build(config.N_ref, config.M_ref, config.template.horizon, seed)
    keep = _keep_for(config.metric)

    eval_by_cell = {(N, M): eval_indices(M, config.eval_steps) for (N, M) in cells}
    ref_record = set()
    for (N, M), ks in eval_by_cell.items():
        stride = config.M_ref // M
        ref_record.update(k * stride for k in ks)
    params_ref = config.template.with_resolution(config.N_ref, config.M_ref)
    params_ref.seed = seed
    try:
        ref = scheme.run(params_ref, path, record_indices=sorted(ref_record), keep=keep)
        out = []
        for (N, M) in cells:
            params = config.template.with_resolution(N, M)
            params.seed = seed
            cell = scheme.run(params, path, record_indices=eval_by_cell[(N, M)], keep=keep)
            out.append(cell_error(config, ref, cell, eval_by_cell[(N, M)]))
        return out
    except scheme.SchemeAbort as err:
        raise scheme.SchemeAbort(err.step, f"in sample {sample_index}") from err


def coupled_error(config: ExperimentConfig, N: int, M: int, sample_index: int) -> ErrorSample:
    """One coupled reference-vs-cell error, per-path."""
    err = sample_cell_errors(config, [(N, M)], sample_index)[0]
    return ErrorSample(sample_index, N, M, err)


_WORK = {}


def _pool_init(config, cells):
    _WORK["config"] = config
    _WORK["cells"] = cells


def _pool_sample(sample_index: int):
    return sample_cell_errors(_WORK["config"], _WORK["cells"], sample_index)


def resolve_workers(config_workers=None, override=None) -> int:
    if override is not None:
        return max(1, int(override))
    env = os.environ.get("SACSIM_WORKERS")
    if env:
        return max(1, int(env))
    if config_workers is not None:
        return max(1, int(config_workers))
    return max(1, min(os.cpu_count() or 1, 8))


def collect_errors(config: ExperimentConfig, cells: list, workers=None,
                   progress=None) -> np.ndarray:
    """(samples, cells) error matrix, reduced in sample order."""
    n_workers = resolve_workers(config.workers, workers)
    indices = list(range(config.samples))
    if n_workers == 1 or config.samples == 1:
        rows = []
        for i in indices:
            rows.append(sample_cell_errors(config, cells, i))
            if progress:
                progress(i + 1, config.samples)
    else:
        ctx = get_context("fork")
        with ctx.Pool(n_workers, initializer=_pool_init, initargs=(config, cells)) as pool:
            rows = [None] * len(indices)
            for done, (i, row) in enumerate(
                    zip(indices, pool.imap(_pool_sample, indices, chunksize=1))):
                rows[i] = row
                if progress:
                    progress(done + 1, config.samples)
    return np.array(rows, dtype=np.float64)


def mc_moment(errors, p: float) -> tuple:
    """((E e^p)^{1/p}, bootstrap standard error over 1000 resamples)."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise ValueError("empty error list")
    moment = float(np.mean(e**p) ** (1.0 / p))
    if e.size == 1:
        return moment, 0.0
    rng = np.random.default_rng(_BOOTSTRAP_SEED)
    idx = rng.integers(0, e.size, size=(_N_BOOTSTRAP, e.size))
    boots = np.mean(e[idx] ** p, axis=1) ** (1.0 / p)
    return moment, float(np.std(boots, ddof=1))


def fit_rate(points, axis: str = "space") -> RateFit:
    """OLS of log2 error against log2 resolution; positive slope = decay order."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise ValueError("need at least two points to fit a rate")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    slope_ols, intercept = np.polyfit(x, y, 1)
    resid = y - (slope_ols * x + intercept)
    return RateFit(axis=axis, slope=float(-slope_ols), intercept=float(intercept),
                   residual=float(np.sqrt(np.mean(resid**2))), points=pts)


def _moment_points(res_values, errors_by_cell, p):
    pts = []
    for r, errs in zip(res_values, errors_by_cell):
        m, _ = mc_moment(errs, p)
        pts.append((math.log2(r), math.log2(max(m, 1e-300))))
    return pts


def bootstrap_rate_ci(res_values, errors_by_cell, p, axis: str) -> tuple:
    """Paired bootstrap over samples: (2.5%, 97.5%) percentile slopes."""
    rng = np.random.default_rng(_BOOTSTRAP_SEED + 1)
    n = len(errors_by_cell[0])
    slopes = []
    cols = [np.asarray(e, dtype=np.float64) for e in errors_by_cell]
    for _ in range(_N_RATE_BOOTSTRAP):
        idx = rng.integers(0, n, size=n)
        pts = []
        for r, errs in zip(res_values, cols):
            m = float(np.mean(errs[idx] ** p) ** (1.0 / p))
            pts.append((math.log2(r), math.log2(max(m, 1e-300))))
        slopes.append(fit_rate(pts, axis).slope)
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    return float(lo), float(hi)


@dataclass
class ConvReport:
    metric: str
    cells: list
    errors: np.ndarray
    moments: list
    ses: list
    rates: dict = field(default_factory=dict)


def run_convergence(config: ExperimentConfig, axes=("space",), workers=None,
                    progress=None) -> ConvReport:
    """Run the coupled sweep for the requested axes and fit rates per axis.

    'space' varies N at M = space_M; 'time' varies M at N = N_ref; both share
    the per-sample reference run when requested together.
    """
    errors = config.validate()
    if errors:
        raise ValueError("; ".join(errors))
    cells = []
    if "space" in axes:
        cells += [(N, config.space_M) for N in config.N_list]
    if "time" in axes:
        cells += [(config.N_ref, M) for M in config.M_list]
    mat = collect_errors(config, cells, workers=workers, progress=progress)
    moments, ses = [], []
    for c in range(len(cells)):
        m, se = mc_moment(mat[:, c], config.p)
        moments.append(m)
        ses.append(se)
    report = ConvReport(config.metric, cells, mat, moments, ses)
    if "space" in axes:
        cols = [mat[:, cells.index((N, config.space_M))] for N in config.N_list]
        rate = fit_rate(_moment_points(config.N_list, cols, config.p), "space")
        rate.ci_low, rate.ci_high = bootstrap_rate_ci(config.N_list, cols, config.p, "space")
        report.rates["space"] = rate
    if "time" in axes:
        cols = [mat[:, cells.index((config.N_ref, M))] for M in config.M_list]
        rate = fit_rate(_moment_points(config.M_list, cols, config.p), "time")
        rate.ci_low, rate.ci_high = bootstrap_rate_ci(config.M_list, cols, config.p, "time")
        report.rates["time"] = rate
    return report


# ---------------------------------------------------------------------------
# Galerkin error of the Wick powers (linear-part closed loop)

def z_wick_sample(config: ExperimentConfig, sample_index: int) -> dict:
    """{(N, n): weighted sup error} for the Wick-power Galerkin comparison."""
    tmpl = config.template
    seed = config.seed_for(sample_index)
    path = noise.NoisePath.build(config.N_ref, config.M_ref, tmpl.horizon, seed)
    x0 = tmpl.initial
    ks = eval_indices(config.M_ref, config.eval_steps)
    alpha, kap, kap1 = tmpl.alpha, config.kappa, config.kappa1_value()
    kwargs = _metric_norm_kwargs(config)
    r_ref = wick.renorm_constant(config.N_ref)
    paths = {N: noise.restrict_modes(path, N) for N in config.N_list}
    consts = {N: wick.renorm_constant(N) for N in config.N_list}
    out = {(N, n): 0.0 for N in config.N_list for n in (1, 2, 3)}
    for k in ks:
        t = path.time_of(k)
        ref = wick.wick_with_initial(path, t, r_ref, x0)
        ref_fields = (ref.z1, ref.z2, ref.z3)
        for N in config.N_list:
            tri = wick.wick_with_initial(paths[N], t, consts[N], x0)
            for n, f in zip((1, 2, 3), (tri.z1, tri.z2, tri.z3)):
                diff = ref_fields[n - 1] - project(f, config.N_ref)
                w = t ** ((n - 1) * (alpha + kap) + kap1)
                e = w * besov.besov_norm(diff, -alpha, **kwargs).value
                key = (N, n)
                if e > out[key]:
                    out[key] = e
    return out


def z_wick_error(config: ExperimentConfig, N: int, n: int, sample_index: int) -> float:
    """Per-path weighted sup_t t^{(n-1)(alpha+kappa)+kappa1} ||.||_{-alpha}."""
    if n not in (1, 2, 3):
        raise ValueError("Wick order must be 1, 2 or 3")
    return z_wick_sample(config, sample_index)[(N, n)]


def _pool_zwick(sample_index: int):
    return z_wick_sample(_WORK["config"], sample_index)


def run_z_wick(config: ExperimentConfig, workers=None, progress=None) -> dict:
    """Monte Carlo sweep of the Wick-power Galerkin errors; rates per order n."""
    n_workers = resolve_workers(config.workers, workers)
    indices = list(range(config.samples))
    if n_workers == 1 or config.samples == 1:
        rows = []
        for i in indices:
            rows.append(z_wick_sample(config, i))
            if progress:
                progress(i + 1, config.samples)
    else:
        ctx = get_context("fork")
        with ctx.Pool(n_workers, initializer=_pool_init, initargs=(config, None)) as pool:
            rows = [None] * len(indices)
            for done, (i, row) in enumerate(
                    zip(indices, pool.imap(_pool_zwick, indices, chunksize=1))):
                rows[i] = row
                if progress:
                    progress(done + 1, config.samples)
    result = {"errors": {}, "moments": {}, "ses": {}, "rates": {}}
    for n in (1, 2, 3):
        errs = {N: np.array([rows[i][(N, n)] for i in indices]) for N in config.N_list}
        result["errors"][n] = errs
        cols = [errs[N] for N in config.N_list]
        ms = []
        for N in config.N_list:
            m, se = mc_moment(errs[N], config.p)
            result["moments"][(N, n)] = m
            result["ses"][(N, n)] = se
            ms.append(m)
        rate = fit_rate(_moment_points(config.N_list, cols, config.p), "space")
        rate.ci_low, rate.ci_high = bootstrap_rate_ci(config.N_list, cols, config.p, "space")
        result["rates"][n] = rate
    return result


# ---------------------------------------------------------------------------
# Artifact writing (byte-stable: repr round-trip floats, fixed row order)

def _fmt(x) -> str:
    return repr(float(x))


def write_results_csv(path, metric, cells, errors: np.ndarray):
    lines = ["metric,N,M,sample,error"]
    for c, (N, M) in enumerate(cells):
        for i in range(errors.shape[0]):
            lines.append(f"{metric},{N},{M},{i},{_fmt(errors[i, c])}")
    _write_text(path, "\n".join(lines) + "\n")


def write_summary_csv(path, cells, moments, ses):
    lines = ["N,M,moment,bootstrap_se"]
    for (N, M), m, se in zip(cells, moments, ses):
        lines.append(f"{N},{M},{_fmt(m)},{_fmt(se)}")
    _write_text(path, "\n".join(lines) + "\n")


def rate_to_dict(rate: RateFit) -> dict:
    return {
        "axis": rate.axis,
        "slope": rate.slope,
        "intercept": rate.intercept,
        "residual": rate.residual,
        "ci_low": rate.ci_low,
        "ci_high": rate.ci_high,
        "points": [[x, y] for x, y in rate.points],
    }


def write_rates_json(path, rates: dict):
    payload = {k: rate_to_dict(r) for k, r in rates.items()}
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_plot_json(path, rates: dict):
    payload = {}
    for key, rate in rates.items():
        xs = [x for x, _ in rate.points]
        payload[key] = {
            "log2_resolution": xs,
            "log2_error": [y for _, y in rate.points],
            "fit_log2_error": [rate.intercept - rate.slope * x for x in xs],
            "slope": rate.slope,
        }
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_text(path, text: str):
    with open(path, "w", newline="") as fh:
        fh.write(text)
