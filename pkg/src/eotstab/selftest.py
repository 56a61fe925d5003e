"""Fixture-free checks of the closed-form examples, run by ``eotstab selftest``."""

import math
import tempfile
import os

import numpy as np

from .diagnostics import condition_report, dual_value, normalize, primal_value, schroedinger_residual
from .harness import ConvergenceTrace, ExperimentConfig, TraceRow, emit_report, sinkhorn_trace, stability_sweep
from .measures import CostMatrix, DiscreteMeasure, PerturbationSpec, build_cost, perturb, sample_subgaussian
from .metrics import (
    bounded_lipschitz,
    ky_fan,
    pushforward_kolmogorov,
    relative_entropy,
    tv_distance,
    tv_distance_couplings,
)
from .oracle import brute_force_solve, potentials_from_coupling
from .sinkhorn import (
    Coupling,
    Potentials,
    coupling_from_potentials,
    half_step_phi,
    half_step_psi,
    iterate_marginals,
    sinkhorn_states,
    solve,
)

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _pt(*xs):
    return DiscreteMeasure([list(xs)], [1.0])


def _two(w=(0.5, 0.5), atoms=((0.0,), (1.0,))):
    return DiscreteMeasure(np.array(atoms, dtype=float), np.array(w))


def _close(a, b, tol=1e-12):
    assert np.allclose(a, b, rtol=0, atol=tol), f"{a!r} != {b!r}"


@check
def build_cost_coincident():
    _close(build_cost(_pt(0.0), _pt(0.0)).values, [[0.0]])


@check
def build_cost_unit():
    _close(build_cost(_pt(1.0, 0.0), _pt(0.0, 0.0)).values, [[1.0]])


@check
def build_cost_thirteen():
    _close(build_cost(_pt(1.0, 2.0), _pt(3.0, 5.0)).values, [[13.0]])


@check
def sample_single_atom():
    for fam in ("gaussian", "gaussian-mixture", "uniform-box"):
        m = sample_subgaussian(1, 2, fam, 3)
        assert m.size == 1 and m.weights[0] == 1.0


@check
def sample_uniform_weights():
    _close(sample_subgaussian(4, 1, "gaussian", 7).weights, [0.25] * 4, 0)


@check
def perturb_zero_magnitude():
    base = _two()
    for mode in ("weight-jitter", "support-jitter"):
        assert perturb(base, PerturbationSpec(mode, (0.1, 0.0)), 2) == base


@check
def perturb_weight_tv_bound():
    base = _two()
    out = perturb(base, PerturbationSpec("weight-jitter", (0.1,), seed=1), 1)
    assert tv_distance(out, base) <= 0.1


@check
def perturb_support_displacement():
    base = DiscreteMeasure.uniform(np.array([[0.0], [1.0], [2.0]]))
    out = perturb(base, PerturbationSpec("support-jitter", (0.01,), seed=1), 1)
    assert np.all(np.linalg.norm(out.atoms - base.atoms, axis=1) <= 0.01)


@check
def half_steps_zero_cost():
    mu = _two((0.3, 0.7))
    _close(half_step_psi(np.zeros(2), np.zeros((2, 3)), mu, 1.0), np.zeros(3))
    _close(half_step_phi(np.zeros(2), np.zeros((3, 2)), mu, 1.0), np.zeros(3))


@check
def half_steps_single_atom():
    c = np.array([[0.5, 2.0]])
    _close(half_step_psi(np.zeros(1), c, _pt(0.0), 0.7), c[0])
    _close(half_step_phi(np.zeros(1), c.T, _pt(0.0), 0.7), c[0])


@check
def solve_zero_cost():
    mu, nu = _two((0.3, 0.7)), _two((0.6, 0.4))
    rep = solve(mu, nu, CostMatrix(np.zeros((2, 2))), 1.0)
    assert rep.converged and rep.iterations == 1
    _close(rep.coupling.matrix, np.outer(mu.weights, nu.weights))
    _close(rep.potentials.f[:, None] + rep.potentials.g[None, :], np.zeros((2, 2)))


@check
def solve_single_atoms():
    mu, nu = _pt(0.0, 0.0), _pt(1.0, 2.0)
    C = build_cost(mu, nu)
    rep = solve(mu, nu, C, 0.5)
    _close(rep.coupling.matrix, [[1.0]])
    _close(rep.potentials.f[0] + rep.potentials.g[0], 5.0)


@check
def coupling_from_zero_potentials():
    mu, nu = _two((0.3, 0.7)), _two((0.6, 0.4))
    pi = coupling_from_potentials(Potentials(np.zeros(2), np.zeros(2), 1.0), np.zeros((2, 2)), mu, nu)
    _close(pi.matrix, np.outer(mu.weights, nu.weights))


@check
def coupling_single_cell():
    mu, nu = _pt(0.0), _pt(3.0)
    C = build_cost(mu, nu)
    pi = coupling_from_potentials(Potentials([0.0], [9.0], 2.0), C, mu, nu)
    _close(pi.matrix, [[1.0]])


@check
def iterate_marginals_odd_step():
    mu, nu = _two((0.3, 0.7)), _two((0.6, 0.4), ((0.0,), (2.0,)))
    C = build_cost(mu, nu)
    for state in sinkhorn_states(mu, nu, C, 1.0):
        _close(state.coupling(2 * state.t + 1).row_marginal(), mu.weights)
        if state.t == 3:
            break


@check
def iterate_marginals_zero_cost():
    mu, nu = _two((0.3, 0.7)), _two((0.6, 0.4))
    states = sinkhorn_states(mu, nu, np.zeros((2, 2)), 1.0)
    next(states)
    mu_2, _ = iterate_marginals(next(states))
    _close(mu_2.weights, mu.weights)


@check
def normalize_examples():
    mu1 = _two((0.5, 0.5))
    cases = [(np.zeros(2), 0.0), (np.ones(2), -1.0), (np.array([0.0, 2.0]), -1.0)]
    for f, a in cases:
        out = normalize(Potentials(f, np.zeros(1), 1.0), mu1, 0.0)
        _close(out.f - f, [a, a], 1e-12)


@check
def residual_zero():
    mu = _two((0.3, 0.7))
    r = schroedinger_residual(Potentials(np.zeros(2), np.zeros(2), 1.0), np.zeros((2, 2)), mu, mu)
    _close(r, (0.0, 0.0))


@check
def primal_dual_trivial():
    mu, nu = _two((0.3, 0.7)), _two((0.6, 0.4))
    prod = Coupling(np.outer(mu.weights, nu.weights), mu, nu)
    _close(primal_value(prod, np.zeros((2, 2)), mu, nu, 1.0), 0.0)
    _close(dual_value(Potentials(np.zeros(2), np.zeros(2), 1.0), mu, nu), 0.0)
    x, y = _pt(0.0), _pt(2.0)
    C = build_cost(x, y)
    _close(primal_value(Coupling([[1.0]], x, y), C, x, y, 0.3), 4.0)
    _close(dual_value(Potentials([0.0], [4.0], 0.3), x, y), 4.0)


@check
def condition_report_trivial():
    mu = _two((0.3, 0.7))
    rep = condition_report(Potentials(-np.ones(2), np.zeros(2), 1.0), mu, mu, mu, mu,
                           np.zeros((2, 2)), (1.0,), (1.5, 2.0, 10.0))
    assert rep.f_plus_mean == 0.0
    assert rep.entropy_to_limit == 0.0
    assert all(v == 0.0 for v in rep.rn_tail_mu.values())


@check
def tv_examples():
    a, b = _two((0.5, 0.5)), _two((0.7, 0.3))
    _close(tv_distance(a, a), 0.0)
    _close(tv_distance(a, b), 0.2)
    _close(tv_distance(a, _two(atoms=((5.0,), (6.0,)))), 1.0)


@check
def tv_coupling_examples():
    a, b = _two((0.5, 0.5)), _two((0.7, 0.3))
    pa = Coupling(np.diag([0.5, 0.5]), a, a)
    pb = Coupling(np.diag([0.7, 0.3]), b, b)
    far = _two(atoms=((5.0,), (6.0,)))
    _close(tv_distance_couplings(pa, pa), 0.0)
    _close(tv_distance_couplings(pa, pb), 0.2)
    _close(tv_distance_couplings(pa, Coupling(np.diag([0.5, 0.5]), far, far)), 1.0)


@check
def relative_entropy_trivial():
    a = _two((0.5, 0.5))
    _close(relative_entropy(a, a), 0.0)
    assert relative_entropy(a, _pt(0.0)) == math.inf


@check
def ky_fan_trivial():
    mu = _two((0.3, 0.7))
    _close(ky_fan([1.0, 2.0], [1.0, 2.0], mu), 0.0)
    _close(ky_fan([1.1, 2.1], [1.0, 2.0], mu), 0.1, 1e-12)


@check
def kolmogorov_examples():
    mu = _two((0.5, 0.5))
    _close(pushforward_kolmogorov([0.0, 1.0], mu, [0.0, 1.0], mu), 0.0)
    _close(pushforward_kolmogorov([0.5], _pt(0.0), [0.0], _pt(0.0)), 1.0)
    _close(pushforward_kolmogorov([0.0, 1.0], _two((0.6, 0.4)), [0.0, 1.0], mu), 0.1)


@check
def bounded_lipschitz_trivial():
    mu = _two((0.3, 0.7))
    pi = Coupling(np.outer(mu.weights, mu.weights), mu, mu)
    _close(bounded_lipschitz(pi, pi), 0.0)
    moved = DiscreteMeasure(mu.atoms + 0.01, mu.weights)
    assert bounded_lipschitz(pi, Coupling(pi.matrix, moved, mu)) <= 0.01


@check
def oracle_trivial():
    mu, nu = _two((0.3, 0.7)), DiscreteMeasure.uniform(np.arange(3.0))
    _close(brute_force_solve(mu, nu, np.zeros((2, 3)), 1.0).matrix, np.outer(mu.weights, nu.weights))
    row = brute_force_solve(_pt(0.0), nu, build_cost(_pt(0.0), nu), 0.5)
    _close(row.matrix, nu.weights[None, :])


@check
def oracle_potentials_trivial():
    mu, nu = _two((0.3, 0.7)), _two((0.6, 0.4))
    prod = Coupling(np.outer(mu.weights, nu.weights), mu, nu)
    p = potentials_from_coupling(prod, np.zeros((2, 2)), mu, nu, 1.0)
    _close(p.f[:, None] + p.g[None, :], np.zeros((2, 2)))
    x, y = _pt(0.0), _pt(2.0)
    p = potentials_from_coupling(Coupling([[1.0]], x, y), build_cost(x, y), x, y, 1.0)
    _close(p.f[0] + p.g[0], 4.0)


@check
def sweep_unperturbed():
    cfg = ExperimentConfig(
        marginals={"mu": {"atoms": [[0.0], [1.0]], "weights": [0.4, 0.6]},
                   "nu": {"atoms": [[0.5], [2.0]], "weights": [0.5, 0.5]}},
        perturbation={"mode": "weight-jitter", "schedule": [0.0]},
        metrics=("tv_distance_couplings", "ky_fan_f", "ky_fan_g", "pushforward_kolmogorov_f",
                 "bounded_lipschitz", "dual_value_gap", "mean_gap_f", "sup_norm_f"),
    )
    trace = stability_sweep(cfg)
    assert trace.rows and all(r.value == 0.0 for r in trace.rows)


@check
def trace_zero_cost():
    mu, nu = _two((0.3, 0.7)), _two((0.6, 0.4))
    trace = sinkhorn_trace(mu, nu, CostMatrix(np.zeros((2, 2))), 1.0, betas=(1.0,))
    for r in trace.rows:
        if not r.metric.startswith("exp_moment"):
            _close(r.value, 0.0)


@check
def emit_trivial_reports():
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "empty.csv")
        emit_report(ConvergenceTrace(), "csv", path)
        with open(path) as fh:
            assert fh.read() == "index,metric,value,converged\n"
        emit_report(ConvergenceTrace([TraceRow(3, "x", 0.5, True)]), "csv", path)
        with open(path) as fh:
            assert fh.read().splitlines()[1:] == ["3,x,0.5,true"]


def run_selftest(out=print):
    """Run every check, report one line each; return the number of failures."""
    failures = 0
    for fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # report and keep going
            failures += 1
            out(f"FAIL {fn.__name__}: {type(exc).__name__}: {exc}")
        else:
            out(f"PASS {fn.__name__}")
    out(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
