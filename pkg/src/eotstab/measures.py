"""Discrete marginals, cost matrices and controlled perturbations of marginals."""

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

WEIGHT_SUM_TOL = 1e-12
CANONICAL_DIGITS = 12

COST_KINDS = ("sqeuclidean", "euclidean")
SAMPLER_FAMILIES = ("gaussian", "gaussian-mixture", "uniform-box")
PERTURBATION_MODES = ("weight-jitter", "support-jitter")


def canonical_key(point):
    """Hashable key of a point after rounding every coordinate to 12 significant digits."""
    return tuple(float(f"{float(x):.{CANONICAL_DIGITS - 1}e}") + 0.0 for x in np.ravel(point))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure on finitely many distinct points of R^d.

    Atoms with zero weight are dropped at construction. Weights must already
    sum to one; use :meth:`from_weights` with ``normalize=True`` to rescale
    arbitrary positive weights.

    Parameters
    ----------
    atoms : array-like, shape (m, d) or (m,)
        Support points. A 1-D array is read as ``m`` points in R^1.
    weights : array-like, shape (m,)
        Nonnegative masses aligned with ``atoms``.
    """

    atoms: np.ndarray
    weights: np.ndarray
    keys: tuple = field(init=False, repr=False)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2:
            raise ValueError(f"atoms must be a 2-D array, got shape {atoms.shape}")
        weights = np.asarray(self.weights, dtype=float).ravel()
        if weights.shape[0] != atoms.shape[0]:
            raise ValueError(
                f"{atoms.shape[0]} atoms but {weights.shape[0]} weights"
            )
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and nonnegative")
        keep = weights > 0
        atoms, weights = atoms[keep], weights[keep]
        if weights.size == 0:
            raise ValueError("measure has no atom with positive weight")
        total = weights.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1")
        keys = tuple(canonical_key(a) for a in atoms)
        if len(set(keys)) != len(keys):
            raise ValueError("atoms are not pairwise distinct")
        object.__setattr__(self, "atoms", _frozen(atoms))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "keys", keys)

    @classmethod
    def from_weights(cls, atoms, weights, normalize=True):
        w = np.asarray(weights, dtype=float)
        if normalize:
            if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
                raise ValueError("weights must be finite, nonnegative and not all zero")
            w = w / w.sum()
        return cls(atoms, w)

    @classmethod
    def uniform(cls, atoms):
        atoms = np.asarray(atoms, dtype=float)
        m = atoms.shape[0]
        return cls(atoms, np.full(m, 1.0 / m))

    @property
    def size(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.atoms.shape[1]

    def same_support(self, other):
        return self.keys == other.keys

    def to_dict(self):
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d, normalize=False):
        return cls.from_weights(d["atoms"], d["weights"], normalize=normalize)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path, normalize=False):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), normalize=normalize)

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.atoms.shape == other.atoms.shape
            and np.array_equal(self.atoms, other.atoms)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Dense nonnegative cost ``values[i, j] = c(x_i, y_j)``.

    ``row_support`` and ``col_support`` hold canonical keys of the atoms the
    rows and columns refer to; they are empty tuples when the matrix was
    supplied without atoms.
    """

    values: np.ndarray
    row_support: tuple = ()
    col_support: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError(f"cost must be a 2-D matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("cost entries must be finite")
        if np.any(v < 0):
            i, j = np.argwhere(v < 0)[0]
            raise ValueError(f"negative cost entry at ({i}, {j}): {v[i, j]!r}")
        if self.row_support and len(self.row_support) != v.shape[0]:
            raise ValueError("row_support does not match the number of rows")
        if self.col_support and len(self.col_support) != v.shape[1]:
            raise ValueError("col_support does not match the number of columns")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def shape(self):
        return self.values.shape

    def scaled(self, factor):
        return CostMatrix(self.values * factor, self.row_support, self.col_support)

    def save(self, path):
        if str(path).endswith(".json"):
            with open(path, "w") as fh:
                json.dump(self.values.tolist(), fh)
        else:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                for row in self.values:
                    w.writerow([repr(float(x)) for x in row])

    @classmethod
    def load(cls, path):
        if str(path).endswith(".json"):
            with open(path) as fh:
                data = json.load(fh)
            if isinstance(data, dict):
                data = data["values"]
            return cls(np.array(data, dtype=float))
        with open(path, newline="") as fh:
            rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
        return cls(np.array(rows, dtype=float))


def build_cost(X, Y, kind="sqeuclidean"):
    """Cost matrix between the atoms of ``X`` and ``Y``.

    ``kind`` is ``"sqeuclidean"``, ``"euclidean"`` or an explicit (m, n)
    array of nonnegative entries.
    """
    if isinstance(kind, str):
        if X.dim != Y.dim:
            raise ValueError(f"atom dimensions differ: {X.dim} vs {Y.dim}")
        diff = X.atoms[:, None, :] - Y.atoms[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        if kind == "sqeuclidean":
            values = sq
        elif kind == "euclidean":
            values = np.sqrt(sq)
        else:
            raise ValueError(f"unknown cost kind {kind!r}; expected one of {COST_KINDS}")
    else:
        values = np.asarray(kind.values if isinstance(kind, CostMatrix) else kind, dtype=float)
        if values.shape != (X.size, Y.size):
            raise ValueError(
                f"cost matrix has shape {values.shape}, expected {(X.size, Y.size)}"
            )
    return CostMatrix(values, X.keys, Y.keys)


def sample_subgaussian(n_atoms, d, family="gaussian", seed=0):
    """Empirical measure of ``n_atoms`` i.i.d. draws from a subgaussian law.

    Families: standard normal, an equal mixture of N(+e_1, I/4) and
    N(-e_1, I/4), and the uniform law on [0, 1]^d. Weights are uniform.
    """
    if int(n_atoms) != n_atoms or n_atoms < 1:
        raise ValueError(f"n_atoms must be a positive integer, got {n_atoms!r}")
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    n_atoms, d = int(n_atoms), int(d)
    rng = np.random.default_rng(seed)
    if family == "gaussian":
        atoms = rng.standard_normal((n_atoms, d))
    elif family == "gaussian-mixture":
        centers = np.zeros((n_atoms, d))
        centers[:, 0] = np.where(rng.random(n_atoms) < 0.5, -1.0, 1.0)
        atoms = centers + 0.5 * rng.standard_normal((n_atoms, d))
    elif family == "uniform-box":
        atoms = rng.random((n_atoms, d))
    else:
        raise ValueError(f"unknown family {family!r}; expected one of {SAMPLER_FAMILIES}")
    return DiscreteMeasure.uniform(atoms)


@dataclass(frozen=True)
class PerturbationSpec:
    """Deterministic sequence of perturbations indexed by ``n = 1, 2, ...``.

    ``schedule[n - 1]`` is the magnitude used at index ``n``. The schedule
    must be strictly decreasing; a single trailing zero is allowed so that
    the unperturbed measure can be appended to a sweep. ``floor`` defaults
    to ``1/m`` for an m-atom base measure.
    """

    mode: str
    schedule: tuple
    seed: int = 0
    floor: float = None

    def __post_init__(self):
        if self.mode not in PERTURBATION_MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {PERTURBATION_MODES}")
        sched = tuple(float(s) for s in self.schedule)
        if not sched:
            raise ValueError("empty magnitude schedule")
        if any(s < 0 or not np.isfinite(s) for s in sched):
            raise ValueError("magnitudes must be finite and nonnegative")
        if any(s == 0 for s in sched[:-1]):
            raise ValueError("only the last magnitude may be zero")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("magnitude schedule must be strictly decreasing")
        if self.floor is not None and not self.floor > 0:
            raise ValueError("floor must be positive")
        object.__setattr__(self, "schedule", sched)

    @classmethod
    def geometric(cls, mode, n, ratio=0.5, seed=0, floor=None):
        """Schedule ``ratio**k`` for ``k = 1..n``."""
        return cls(mode, tuple(ratio ** k for k in range(1, n + 1)), seed, floor)

    def magnitude(self, n):
        if n < 1:
            raise ValueError(f"perturbation index must be >= 1, got {n}")
        if n > len(self.schedule):
            raise IndexError(
                f"magnitude schedule of length {len(self.schedule)} exhausted at n={n}"
            )
        return self.schedule[n - 1]


def perturb(base, spec, n):
    """The ``n``-th perturbation of ``base`` under ``spec``.

    Weight jitter keeps the atoms and moves weights by an additive zero-sum
    noise of l1-norm at most ``delta``, clamped below at ``floor * min(w)``
    and renormalised, so ``tv_distance(result, base) <= delta``. Support
    jitter keeps the weights and moves every atom by a vector of norm at
    most ``delta``. Randomness depends only on ``(spec.seed, n)``.
    """
    delta = spec.magnitude(n)
    if delta == 0:
        return base
    rng = np.random.default_rng([int(spec.seed), int(n)])
    m = base.size
    if spec.mode == "weight-jitter":
        floor = 1.0 / m if spec.floor is None else spec.floor
        if floor > 1.0 / m:
            raise ValueError(f"floor {floor} exceeds 1/m = {1.0 / m}")
        xi = rng.uniform(-1.0, 1.0, size=m)
        xi -= xi.mean()
        l1 = np.abs(xi).sum()
        if l1 > 1.0:
            xi /= l1
        w = base.weights
        raw = np.maximum(w + delta * xi, floor * w.min())
        return DiscreteMeasure(base.atoms, raw / raw.sum())
    direction = rng.standard_normal(base.atoms.shape)
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radius = delta * rng.uniform(0.0, 1.0, size=(m, 1))
    return DiscreteMeasure(base.atoms + direction / norms * radius, base.weights)


def load_measure_spec(spec, base_dir="."):
    """Measure from a config entry: inline dict, sampler directive or JSON path."""
    if isinstance(spec, str):
        return DiscreteMeasure.load(os.path.join(base_dir, spec), normalize=True)
    if "sample" in spec:
        s = spec["sample"]
        return sample_subgaussian(s["n_atoms"], s.get("d", 1), s.get("family", "gaussian"),
                                  s.get("seed", 0))
    if "path" in spec:
        return DiscreteMeasure.load(os.path.join(base_dir, spec["path"]), normalize=True)
    return DiscreteMeasure.from_dict(spec, normalize=True)


def load_cost_spec(spec, X, Y, base_dir="."):
    """Cost from a config entry: kind name, ``{"matrix": ...}`` or ``{"path": ...}``."""
    if isinstance(spec, str):
        return build_cost(X, Y, spec)
    if "matrix" in spec:
        return build_cost(X, Y, np.asarray(spec["matrix"], dtype=float))
    if "path" in spec:
        return build_cost(X, Y, CostMatrix.load(os.path.join(base_dir, spec["path"])))
    if "kind" in spec:
        return build_cost(X, Y, spec["kind"])
    raise ValueError(f"unrecognised cost specification {spec!r}")
