"""Stability sweeps over perturbed marginals and Sinkhorn convergence traces.

Both experiment families produce a :class:`ConvergenceTrace`, a flat list
of ``(index, metric, value, converged)`` rows that :func:`emit_report`
writes as CSV or JSON. Reports are byte-identical for identical inputs.
"""

import csv
import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .diagnostics import condition_report, dual_value, normalize
from .measures import PerturbationSpec, load_cost_spec, load_measure_spec, perturb
from .metrics import (
    BL_DICTIONARY_VERSION,
    INAPPLICABLE,
    bounded_lipschitz,
    is_inapplicable,
    ky_fan,
    pushforward_kolmogorov,
    sup_distance,
    tv_distance,
    tv_distance_couplings,
)
from .sinkhorn import DEFAULT_MAX_ITER, DEFAULT_TOL, _cost_values, _kl, sinkhorn_states, solve

SWEEP_METRICS = (
    "tv_distance_couplings",
    "ky_fan_f",
    "ky_fan_g",
    "pushforward_kolmogorov_f",
    "pushforward_kolmogorov_g",
    "bounded_lipschitz",
    "dual_value_gap",
    "mean_gap_f",
    "mean_gap_g",
    "sup_norm_f",
    "sup_norm_g",
    "normalization_defect",
    "conditions",
)
TRACE_METRICS = ("x_marginal_tv", "y_marginal_tv", "entropy_sum", "tv_to_reference",
                 "dual_value", "exp_moment")
CSV_HEADER = ("index", "metric", "value", "converged")


class ReferenceSolveError(RuntimeError):
    """The high-accuracy reference solve did not converge."""


@dataclass(frozen=True)
class TraceRow:
    index: int
    metric: str
    value: float
    converged: bool = True


@dataclass
class ConvergenceTrace:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, metric):
        """``(indices, values)`` of one metric, in index order."""
        sel = sorted((r.index, r.value) for r in self.rows if r.metric == metric)
        return [i for i, _ in sel], [v for _, v in sel]

    def metrics(self):
        seen = []
        for r in self.rows:
            if r.metric not in seen:
                seen.append(r.metric)
        return seen

    def validate(self, selection=None):
        """Check per-metric index monotonicity and, optionally, metric membership."""
        last = {}
        for r in self.rows:
            if r.metric in last and r.index <= last[r.metric]:
                raise ValueError(f"indices of {r.metric!r} are not strictly increasing")
            last[r.metric] = r.index
            if selection is not None and _base_metric(r.metric) not in selection:
                raise ValueError(f"metric {r.metric!r} is not in the selection {selection}")
        return self


def _base_metric(name):
    name = name.split("@", 1)[0]
    return name.split(".", 1)[0]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a sweep.

    ``marginals`` holds the entries ``mu`` and ``nu``, each an inline
    measure ``{"atoms", "weights"}``, a sampler directive
    ``{"sample": {"n_atoms", "d", "family", "seed"}}`` or a JSON path.
    ``perturbation`` holds ``mode``, ``floor`` and either ``schedule`` or
    ``geometric: {"n", "ratio"}``. Perturbation noise for ``mu`` and ``nu``
    is drawn from the streams ``2 * seed`` and ``2 * seed + 1``.
    """

    marginals: dict
    cost: object = "sqeuclidean"
    epsilons: tuple = (1.0,)
    perturbation: dict = field(default_factory=lambda: {"mode": "weight-jitter",
                                                        "geometric": {"n": 10, "ratio": 0.5}})
    solver: dict = field(default_factory=dict)
    metrics: tuple = SWEEP_METRICS
    output: dict = field(default_factory=dict)
    seed: int = 0
    betas: tuple = (1.0,)
    tail_levels: tuple = (0.0, 1.0, 10.0)
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(not e > 0 for e in eps):
            raise ValueError(f"epsilons must be a nonempty list of positive numbers, got {eps}")
        object.__setattr__(self, "epsilons", eps)
        metrics = tuple(self.metrics)
        if not metrics:
            raise ValueError("at least one metric must be selected")
        unknown = [m for m in metrics if m not in SWEEP_METRICS]
        if unknown:
            raise ValueError(f"unknown metrics {unknown}; available: {SWEEP_METRICS}")
        object.__setattr__(self, "metrics", metrics)
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "tail_levels", tuple(float(c) for c in self.tail_levels))
        self.perturbation_spec(0)

    @property
    def tol(self):
        return float(self.solver.get("tol", DEFAULT_TOL))

    @property
    def max_iter(self):
        return int(self.solver.get("max_iter", DEFAULT_MAX_ITER))

    @property
    def workers(self):
        return int(self.solver.get("workers", 1))

    def perturbation_spec(self, stream):
        p = self.perturbation
        if "geometric" in p:
            g = p["geometric"]
            ratio = float(g.get("ratio", 0.5))
            schedule = tuple(ratio ** k for k in range(1, int(g["n"]) + 1))
        else:
            schedule = tuple(p["schedule"])
        return PerturbationSpec(p.get("mode", "weight-jitter"), schedule,
                                2 * int(self.seed) + stream, p.get("floor"))

    def measures(self):
        mu = load_measure_spec(self.marginals["mu"], self.base_dir)
        nu = load_measure_spec(self.marginals["nu"], self.base_dir)
        return mu, nu

    def to_dict(self):
        return {
            "marginals": self.marginals,
            "cost": self.cost,
            "epsilons": list(self.epsilons),
            "perturbation": self.perturbation,
            "solver": self.solver,
            "metrics": list(self.metrics),
            "output": self.output,
            "seed": self.seed,
            "betas": list(self.betas),
            "tail_levels": list(self.tail_levels),
        }

    @classmethod
    def from_dict(cls, d, base_dir="."):
        known = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        kw = dict(d)
        for key in ("epsilons", "metrics", "betas", "tail_levels"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(base_dir=base_dir, **kw)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), base_dir=os.path.dirname(os.path.abspath(path)))

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _eps_suffix(eps, n_eps):
    return "" if n_eps == 1 else f"@eps={eps:g}"


def _sweep_task(args):
    (cfg, eps, n, mu, nu, mu_n, nu_n, reference, ref_norm) = args
    metrics = cfg.metrics
    cost_spec = cfg.cost
    if mu_n == mu and nu_n == nu:
        report, p_n = reference, ref_norm
    else:
        C_n = load_cost_spec(cost_spec, mu_n, nu_n, cfg.base_dir)
        report = solve(mu_n, nu_n, C_n, eps, cfg.tol, cfg.max_iter)
        p_n = normalize(report.potentials, mu_n, 0.0)
    f, g = ref_norm.f, ref_norm.g
    values = {}
    if "tv_distance_couplings" in metrics:
        values["tv_distance_couplings"] = tv_distance_couplings(report.coupling, reference.coupling)
    if "ky_fan_f" in metrics:
        values["ky_fan_f"] = ky_fan(p_n.f, f, mu, support=mu_n)
    if "ky_fan_g" in metrics:
        values["ky_fan_g"] = ky_fan(p_n.g, g, nu, support=nu_n)
    if "pushforward_kolmogorov_f" in metrics:
        values["pushforward_kolmogorov_f"] = pushforward_kolmogorov(p_n.f, mu_n, f, mu)
    if "pushforward_kolmogorov_g" in metrics:
        values["pushforward_kolmogorov_g"] = pushforward_kolmogorov(p_n.g, nu_n, g, nu)
    if "bounded_lipschitz" in metrics:
        values["bounded_lipschitz"] = bounded_lipschitz(report.coupling, reference.coupling)
    if "dual_value_gap" in metrics:
        values["dual_value_gap"] = abs(dual_value(p_n, mu_n, nu_n) - dual_value(ref_norm, mu, nu))
    if "mean_gap_f" in metrics:
        values["mean_gap_f"] = abs(math.fsum(mu_n.weights * p_n.f) - math.fsum(mu.weights * f))
    if "mean_gap_g" in metrics:
        values["mean_gap_g"] = abs(math.fsum(nu_n.weights * p_n.g) - math.fsum(nu.weights * g))
    if "sup_norm_f" in metrics:
        values["sup_norm_f"] = sup_distance(p_n.f, f, mu, support=mu_n)
    if "sup_norm_g" in metrics:
        values["sup_norm_g"] = sup_distance(p_n.g, g, nu, support=nu_n)
    if "normalization_defect" in metrics:
        values["normalization_defect"] = abs(math.fsum(mu_n.weights * np.arctan(p_n.f)))
    if "conditions" in metrics:
        C_n = load_cost_spec(cost_spec, mu_n, nu_n, cfg.base_dir)
        rep = condition_report(p_n, mu_n, nu_n, mu, nu, C_n, cfg.betas, cfg.tail_levels)
        for name, value in rep.rows():
            values[f"conditions.{name}"] = value
        values["conditions.marginal_tv_mu"] = tv_distance(mu_n, mu)
        values["conditions.marginal_tv_nu"] = tv_distance(nu_n, nu)
    suffix = _eps_suffix(eps, len(cfg.epsilons))
    return [TraceRow(n, name + suffix, float(v), bool(report.converged))
            for name, v in values.items()]


def stability_sweep(cfg, workers=None):
    """Solve the perturbed problems ``(mu_n, nu_n)`` and compare with the limit.

    For every ``eps`` the unperturbed problem is solved at ``tol / 10`` and
    normalised at ``alpha = 0``; each perturbed problem is solved at
    ``tol``, normalised the same way and compared with it. Unconverged
    solves are kept and flagged in the ``converged`` column.
    """
    workers = cfg.workers if workers is None else workers
    mu, nu = cfg.measures()
    spec_mu, spec_nu = cfg.perturbation_spec(0), cfg.perturbation_spec(1)
    n_max = len(spec_mu.schedule)
    perturbed = [(perturb(mu, spec_mu, n), perturb(nu, spec_nu, n)) for n in range(1, n_max + 1)]
    tasks = []
    for eps in cfg.epsilons:
        C = load_cost_spec(cfg.cost, mu, nu, cfg.base_dir)
        reference = solve(mu, nu, C, eps, cfg.tol / 10, cfg.max_iter)
        if not reference.converged:
            raise ReferenceSolveError(f"reference solve at eps={eps:g} did not converge")
        ref_norm = normalize(reference.potentials, mu, 0.0)
        for n, (mu_n, nu_n) in enumerate(perturbed, start=1):
            tasks.append((cfg, eps, n, mu, nu, mu_n, nu_n, reference, ref_norm))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(_sweep_task, tasks))
    else:
        groups = [_sweep_task(t) for t in tasks]
    rows = [row for group in groups for row in group]
    order = {eps: k for k, eps in enumerate(cfg.epsilons)}
    rows.sort(key=lambda r: (_row_eps_rank(r.metric, order), r.index))
    meta = {
        "kind": "stability_sweep",
        "config_sha256": cfg.digest(),
        "bl_dictionary": BL_DICTIONARY_VERSION,
        "potential_units": "cost",
        "normalization_alpha": 0.0,
        "perturbation_mode": spec_mu.mode,
        "version": __version__,
    }
    return ConvergenceTrace(rows, meta)


def _row_eps_rank(metric, order):
    if "@eps=" not in metric:
        return 0
    tag = metric.rsplit("@eps=", 1)[1]
    for eps, k in order.items():
        if f"{eps:g}" == tag:
            return k
    return len(order)


def sinkhorn_trace(mu, nu, C, eps, max_iter=DEFAULT_MAX_ITER, tol=DEFAULT_TOL, betas=None):
    """Record every primal Sinkhorn iterate ``pi_n`` against the limit coupling.

    Rows are indexed by ``n = 0, 1, 2, ...``; odd ``n`` fit the first
    marginal and even ``n`` the second. The limit is a reference solve at
    ``tol / 100``. Exponential moments ``int e^{beta c} d(mu x nu)`` are
    reported once at index 0; the default ``beta`` is ``1 / max c``.
    """
    reference = solve(mu, nu, C, eps, tol / 100, max_iter)
    if not reference.converged:
        raise ReferenceSolveError(
            f"reference solve at tol={tol / 100:g} did not converge in {max_iter} iterations"
        )
    c = _cost_values(C)
    if betas is None:
        betas = (1.0 / c.max(),) if c.max() > 0 else (1.0,)
    rows = []
    ref_m = reference.coupling.matrix
    rep = condition_report(reference.potentials, mu, nu, mu, nu, C, betas, ())
    for beta, value in rep.exp_moment.items():
        rows.append(TraceRow(0, f"exp_moment[beta={beta:g}]", value))
    converged = False
    for state in sinkhorn_states(mu, nu, C, eps):
        for n in (2 * state.t, 2 * state.t + 1):
            M = state.coupling(n).matrix
            row, col = M.sum(axis=1), M.sum(axis=0)
            ex = 0.5 * float(np.abs(row - mu.weights).sum())
            ey = 0.5 * float(np.abs(col - nu.weights).sum())
            ent = _kl(row / row.sum(), mu.weights) + _kl(col / col.sum(), nu.weights)
            tv_ref = min(0.5 * math.fsum(np.abs(M - ref_m).ravel()), 1.0)
            p = state.potentials(n)
            rows += [
                TraceRow(n, "x_marginal_tv", ex),
                TraceRow(n, "y_marginal_tv", ey),
                TraceRow(n, "entropy_sum", ent),
                TraceRow(n, "tv_to_reference", tv_ref),
                TraceRow(n, "dual_value", dual_value(p, mu, nu)),
            ]
        if max(ex, ey) <= tol:
            logratio = max(np.abs(np.log(row / mu.weights)).max(),
                           np.abs(np.log(col / nu.weights)).max())
            if logratio <= 10 * tol / max(1.0, eps):
                converged = True
                break
        if state.t + 1 >= max_iter:
            break
    if not converged:
        rows = [dataclasses.replace(r, converged=False) for r in rows]
    meta = {
        "kind": "sinkhorn_trace",
        "eps": float(eps),
        "tol": float(tol),
        "reference_tol": float(tol / 100),
        "half_steps": 2 * (state.t + 1),
        "potential_units": "cost",
        "version": __version__,
    }
    return ConvergenceTrace(rows, meta)


def _format_value(v):
    if is_inapplicable(v):
        return "inapplicable"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _parse_value(s):
    if s == "inapplicable":
        return INAPPLICABLE
    return float(s)


def emit_report(trace, fmt, path):
    """Write ``trace`` to ``path`` as CSV or JSON, plus ``meta.json`` beside it.

    CSV columns are ``index, metric, value, converged``. Returns the list of
    files written.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown report format {fmt!r}")
    directory = os.path.dirname(os.path.abspath(path))
    written = []
    try:
        os.makedirs(directory, exist_ok=True)
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_HEADER)
                for r in trace.rows:
                    w.writerow([r.index, r.metric, _format_value(r.value),
                                "true" if r.converged else "false"])
        else:
            payload = {
                "meta": trace.meta,
                "rows": [{"index": r.index, "metric": r.metric, "value": _format_value(r.value),
                          "converged": r.converged} for r in trace.rows],
            }
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=1, sort_keys=True)
                fh.write("\n")
        written.append(path)
        if trace.meta:
            meta_path = os.path.join(directory, "meta.json")
            with open(meta_path, "w") as fh:
                json.dump(trace.meta, fh, indent=1, sort_keys=True)
                fh.write("\n")
            written.append(meta_path)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return written


def read_report(path):
    """Parse a report written by :func:`emit_report` back into a trace."""
    if str(path).endswith(".json"):
        with open(path) as fh:
            payload = json.load(fh)
        rows = [TraceRow(int(r["index"]), r["metric"], _parse_value(r["value"]),
                         bool(r["converged"])) for r in payload["rows"]]
        return ConvergenceTrace(rows, payload.get("meta", {}))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        rows = [TraceRow(int(i), m, _parse_value(v), c == "true") for i, m, v, c in reader]
    meta_path = os.path.join(os.path.dirname(os.path.abspath(path)), "meta.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
    return ConvergenceTrace(rows, meta)
