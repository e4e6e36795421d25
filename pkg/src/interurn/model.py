"""System specification: replacement families, validation, JSON ingest.

A system is N urns over K colors. Urn j carries a replacement model whose
mean matrix H^j has every column summing to the urn's balance constant c^j;
the sampling probability of urn j mixes the proportions of all urns through
row j of the interaction matrix W. Validation rescales each urn by c^j so
that every mean matrix is column-stochastic, and records whether the model
adds a constant total of balls per draw (balanced) or only on average.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    ColumnSumNotConstant,
    DimensionMismatch,
    NegativeEntry,
    RowNotStochastic,
)

# Max spread of the declared column sums (and mismatch vs a declared c).
COLSUM_TOL = 1e-9
# Row sums of W and column sums of a normalized mean matrix.
STOCHASTIC_TOL = 1e-12

# Family codes shared with the simulation engines.
FAMILY_DETERMINISTIC = 0
FAMILY_SINGLE_BALL = 1
FAMILY_DIRICHLET = 2
FAMILY_RANDOM_SCALED = 3


def _as_matrix(H, name="H"):
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionMismatch(f"{name} must be a square matrix, got shape {H.shape}")
    return H


@dataclass(frozen=True, eq=False)
class Deterministic:
    """Replacement matrix D equal to H on every draw."""

    H: np.ndarray

    name = "deterministic"
    code = FAMILY_DETERMINISTIC
    balanced = True
    kappa = None

    def column_covariances(self):
        K = self.H.shape[0]
        return [np.zeros((K, K)) for _ in range(K)]

    def sample(self, rng, size=None):
        if size is None:
            return self.H.copy()
        return np.broadcast_to(self.H, (size, *self.H.shape)).copy()


@dataclass(frozen=True, eq=False)
class SingleBallMultinomial:
    """Column i of D is a single unit vector, row chosen with probabilities H[:, i]."""

    H: np.ndarray

    name = "single_ball_multinomial"
    code = FAMILY_SINGLE_BALL
    balanced = True
    kappa = None

    def column_covariances(self):
        out = []
        for i in range(self.H.shape[0]):
            h = self.H[:, i]
            out.append(np.diag(h) - np.outer(h, h))
        return out

    def sample(self, rng, size=None):
        K = self.H.shape[0]
        n = 1 if size is None else size
        D = np.zeros((n, K, K))
        rows = np.arange(n)
        for i in range(K):
            ks = rng.choice(K, size=n, p=self.H[:, i])
            D[rows, ks, i] = 1.0
        return D[0] if size is None else D


@dataclass(frozen=True, eq=False)
class DirichletColumns:
    """Column i of D drawn from a Dirichlet law with mean H[:, i] and concentration kappa."""

    H: np.ndarray
    kappa: float

    name = "dirichlet_columns"
    code = FAMILY_DIRICHLET
    balanced = True

    def column_covariances(self):
        out = []
        for i in range(self.H.shape[0]):
            h = self.H[:, i]
            out.append((np.diag(h) - np.outer(h, h)) / (self.kappa + 1.0))
        return out

    def sample(self, rng, size=None):
        K = self.H.shape[0]
        n = 1 if size is None else size
        D = np.zeros((n, K, K))
        for i in range(K):
            # Gamma construction tolerates zero concentration components.
            g = rng.standard_gamma(np.broadcast_to(self.kappa * self.H[:, i], (n, K)))
            D[:, :, i] = g / g.sum(axis=1, keepdims=True)
        return D[0] if size is None else D


@dataclass(frozen=True, eq=False)
class RandomScaled:
    """D = S * M with S a fair {0, 2} coin and M a single-ball multinomial draw.

    E[D] = H, but the total added per draw is 0 or 2, so the model is not
    balanced: it satisfies the moment assumptions but not constant balance.
    """

    H: np.ndarray

    name = "random_scaled"
    code = FAMILY_RANDOM_SCALED
    balanced = False
    kappa = None

    def column_covariances(self):
        out = []
        for i in range(self.H.shape[0]):
            h = self.H[:, i]
            # E[D_i D_i'] = E[S^2] diag(h) = 2 diag(h)
            out.append(2.0 * np.diag(h) - np.outer(h, h))
        return out

    def sample(self, rng, size=None):
        K = self.H.shape[0]
        n = 1 if size is None else size
        s = np.where(rng.random(n) < 0.5, 0.0, 2.0)
        D = np.zeros((n, K, K))
        rows = np.arange(n)
        for i in range(K):
            ks = rng.choice(K, size=n, p=self.H[:, i])
            D[rows, ks, i] = s
        return D[0] if size is None else D


ReplacementModel = (
    Deterministic | SingleBallMultinomial | DirichletColumns | RandomScaled
)

MODEL_TYPES = {
    cls.name: cls
    for cls in (Deterministic, SingleBallMultinomial, DirichletColumns, RandomScaled)
}


def moments_of(model):
    """Return (H, [C(1), ..., C(K)]) for a validated model.

    H is the mean replacement matrix and C(i) the covariance matrix of
    column i, both in normalized (column-stochastic) units.
    """
    return model.H, model.column_covariances()


@dataclass(frozen=True, eq=False)
class UrnSpec:
    """One urn: a replacement model plus an optional declared balance constant."""

    replacement: ReplacementModel
    c: float | None = None


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Raw description of an interacting urn system, prior to validation."""

    K: int
    W: np.ndarray
    urns: tuple[UrnSpec, ...]
    initial: tuple[np.ndarray, ...] | None = None

    @property
    def N(self):
        return len(self.urns)


@dataclass(frozen=True, eq=False)
class ValidatedSystem:
    """Normalized system: column-stochastic mean matrices, c retained as metadata."""

    K: int
    W: np.ndarray
    urns: tuple[ReplacementModel, ...]
    c: np.ndarray
    initial: np.ndarray  # (N, K), in normalized units, strictly positive
    balanced: bool

    @property
    def N(self):
        return len(self.urns)

    def as_spec(self):
        """Re-wrap as a SystemSpec; validating it again is the identity."""
        return SystemSpec(
            K=self.K,
            W=self.W,
            urns=tuple(UrnSpec(replacement=m) for m in self.urns),
            initial=tuple(self.initial[j].copy() for j in range(self.N)),
        )

    def fingerprint(self):
        payload = system_to_json(self)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _rebuild(model, H):
    if isinstance(model, DirichletColumns):
        return DirichletColumns(H=H, kappa=model.kappa)
    return type(model)(H=H)


def validate_spec(spec: SystemSpec) -> ValidatedSystem:
    """Check a system description and normalize it by the balance constants.

    Raises DimensionMismatch, NegativeEntry, ColumnSumNotConstant or
    RowNotStochastic; on success every urn's mean matrix is column-stochastic
    and the balanced flag reports whether all urns add a constant total.
    """
    K = int(spec.K)
    if K < 1:
        raise DimensionMismatch("K must be >= 1")
    N = len(spec.urns)
    if N < 1:
        raise DimensionMismatch("at least one urn is required")

    W = np.asarray(spec.W, dtype=float)
    if W.shape != (N, N):
        raise DimensionMismatch(f"W must be {N}x{N}, got shape {W.shape}")
    if np.any(W < 0.0) or np.any(W > 1.0):
        raise RowNotStochastic("entries of W must lie in [0, 1]")
    rowsums = W.sum(axis=1)
    bad = np.nonzero(np.abs(rowsums - 1.0) > STOCHASTIC_TOL)[0]
    if bad.size:
        raise RowNotStochastic(
            f"row {bad[0]} of W sums to {rowsums[bad[0]]!r}, expected 1"
        )

    models = []
    cs = np.empty(N)
    for j, urn in enumerate(spec.urns):
        model = urn.replacement
        H = _as_matrix(model.H, name=f"H^{j}")
        if H.shape != (K, K):
            raise DimensionMismatch(f"H^{j} must be {K}x{K}, got shape {H.shape}")
        if np.any(H < 0.0):
            raise NegativeEntry(f"H^{j} has a negative entry")
        if isinstance(model, DirichletColumns) and not model.kappa > 0.0:
            raise NegativeEntry(f"urn {j}: Dirichlet concentration must be positive")
        colsums = H.sum(axis=0)
        c = float(colsums.mean())
        if c <= 0.0:
            raise ColumnSumNotConstant(f"H^{j} has zero column sums")
        spread = float(colsums.max() - colsums.min())
        if spread > COLSUM_TOL * max(1.0, c):
            raise ColumnSumNotConstant(
                f"columns of H^{j} sum to different values (spread {spread:.3g})"
            )
        if urn.c is not None and abs(urn.c - c) > COLSUM_TOL * max(1.0, c):
            raise ColumnSumNotConstant(
                f"urn {j}: declared c={urn.c!r} but column sums give {c!r}"
            )
        if urn.c is not None:
            c = float(urn.c)
        Hn = H / c if c != 1.0 else H
        models.append(_rebuild(model, Hn))
        cs[j] = c

    if spec.initial is None:
        initial = np.full((N, K), 1.0 / K)
    else:
        if len(spec.initial) != N:
            raise DimensionMismatch("initial compositions must match the urn count")
        initial = np.empty((N, K))
        for j, y0 in enumerate(spec.initial):
            y0 = np.asarray(y0, dtype=float)
            if y0.shape != (K,):
                raise DimensionMismatch(f"initial composition {j} must have length {K}")
            if np.any(y0 <= 0.0):
                raise NegativeEntry(f"initial composition {j} must be strictly positive")
            initial[j] = y0 / cs[j]

    balanced = all(m.balanced for m in models)
    return ValidatedSystem(
        K=K, W=W, urns=tuple(models), c=cs, initial=initial, balanced=balanced
    )


# ---------------------------------------------------------------------------
# JSON interface
#
# {"K": 2, "W": [[...], ...],
#  "urns": [{"model": "single_ball_multinomial", "H": [[...], ...],
#            "kappa": 10.0, "c": 1.0}, ...],
#  "initial": [[...], ...]}


def system_from_json(doc) -> SystemSpec:
    """Build a SystemSpec from a JSON document (text or already-parsed dict)."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    try:
        K = doc["K"]
        W = doc["W"]
        urns_doc = doc["urns"]
    except KeyError as exc:
        raise DimensionMismatch(f"missing required key {exc}") from None
    urns = []
    for j, u in enumerate(urns_doc):
        name = u.get("model", "single_ball_multinomial")
        if name not in MODEL_TYPES:
            raise DimensionMismatch(
                f"urn {j}: unknown model {name!r} (choose from {sorted(MODEL_TYPES)})"
            )
        cls = MODEL_TYPES[name]
        H = np.asarray(u["H"], dtype=float)
        if cls is DirichletColumns:
            if "kappa" not in u:
                raise DimensionMismatch(f"urn {j}: dirichlet_columns requires kappa")
            model = DirichletColumns(H=H, kappa=float(u["kappa"]))
        else:
            model = cls(H=H)
        urns.append(UrnSpec(replacement=model, c=u.get("c")))
    initial = doc.get("initial")
    if initial is not None:
        initial = tuple(np.asarray(v, dtype=float) for v in initial)
    return SystemSpec(K=int(K), W=np.asarray(W, dtype=float), urns=tuple(urns), initial=initial)


def system_to_dict(validated: ValidatedSystem) -> dict:
    urns = []
    for j, m in enumerate(validated.urns):
        entry = {"model": m.name, "H": m.H.tolist(), "c": float(validated.c[j])}
        if m.kappa is not None:
            entry["kappa"] = float(m.kappa)
        urns.append(entry)
    return {
        "K": validated.K,
        "W": validated.W.tolist(),
        "urns": urns,
        "initial": validated.initial.tolist(),
        "balanced": validated.balanced,
    }


def system_to_json(validated: ValidatedSystem) -> str:
    """Canonical JSON echo of the normalized system (floats via repr, bit-exact)."""
    return json.dumps(system_to_dict(validated), sort_keys=True)
