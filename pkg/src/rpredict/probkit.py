"""Finite-alphabet distributions and information measures.

All logarithms are base 2, so every information quantity is in bits.
Objects are immutable once built; the wrapped arrays are marked read-only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

PMF_TOL = 1e-12
LOG2E = float(np.log2(np.e))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_simplex(values: np.ndarray, what: str, axis=None) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what}: entries must be finite")
    if np.any(values < 0):
        raise ValueError(f"{what}: entries must be nonnegative")
    sums = values.sum(axis=axis)
    if np.any(np.abs(sums - 1.0) > PMF_TOL):
        raise ValueError(f"{what}: mass must sum to 1 (got {sums})")


def normalize(a, axis=None) -> np.ndarray:
    """Rescale nonnegative weights to unit mass along ``axis``.

    Never applied implicitly by the constructors below; call it yourself on
    data that is only approximately normalized.
    """
    a = np.asarray(a, dtype=float)
    return a / a.sum(axis=axis, keepdims=True)


@dataclass(frozen=True, eq=False)
class Pmf:
    mass: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mass", _frozen(self.mass))
        if self.mass.ndim != 1 or self.mass.size == 0:
            raise ValueError("Pmf: mass must be a nonempty vector")
        _check_simplex(self.mass, "Pmf")

    @property
    def n(self) -> int:
        return self.mass.size

    @classmethod
    def uniform(cls, n: int) -> Pmf:
        return cls(np.full(n, 1.0 / n))

    def to_dict(self) -> dict:
        return {"n": self.n, "mass": self.mass.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Pmf:
        pmf = cls(d["mass"])
        if "n" in d and d["n"] != pmf.n:
            raise ValueError("Pmf: declared n does not match mass length")
        return pmf


@dataclass(frozen=True, eq=False)
class Kernel:
    """Conditional pmf ``rows[x, yhat]``; each row sums to one."""

    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", _frozen(self.rows))
        if self.rows.ndim != 2 or 0 in self.rows.shape:
            raise ValueError("Kernel: rows must be a nonempty matrix")
        _check_simplex(self.rows, "Kernel", axis=1)

    @property
    def nin(self) -> int:
        return self.rows.shape[0]

    @property
    def nout(self) -> int:
        return self.rows.shape[1]

    def pushforward(self, px: Pmf | np.ndarray) -> np.ndarray:
        px = px.mass if isinstance(px, Pmf) else np.asarray(px)
        return px @ self.rows

    @classmethod
    def identity(cls, n: int) -> Kernel:
        return cls(np.eye(n))

    @classmethod
    def constant(cls, nin: int, row) -> Kernel:
        return cls(np.tile(np.asarray(row, dtype=float), (nin, 1)))

    def to_dict(self) -> dict:
        return {"nin": self.nin, "nout": self.nout, "rows": self.rows.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Kernel:
        k = cls(d["rows"])
        if (d.get("nin", k.nin), d.get("nout", k.nout)) != (k.nin, k.nout):
            raise ValueError("Kernel: declared dimensions do not match rows")
        return k


@dataclass(frozen=True, eq=False)
class FiniteJoint:
    """Joint pmf ``pmf[x, y]`` over a finite product alphabet."""

    pmf: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pmf", _frozen(self.pmf))
        if self.pmf.ndim != 2 or 0 in self.pmf.shape:
            raise ValueError("FiniteJoint: pmf must be a nonempty matrix")
        _check_simplex(self.pmf, "FiniteJoint")

    @property
    def nx(self) -> int:
        return self.pmf.shape[0]

    @property
    def ny(self) -> int:
        return self.pmf.shape[1]

    @property
    def px(self) -> np.ndarray:
        return self.pmf.sum(axis=1)

    @property
    def py(self) -> np.ndarray:
        return self.pmf.sum(axis=0)

    @property
    def support(self) -> np.ndarray:
        """Boolean mask of x values with positive probability."""
        return self.px > 0

    def conditional(self) -> np.ndarray:
        """P(y|x) as a matrix; rows off the support of X are left at zero."""
        px = self.px
        out = np.zeros_like(self.pmf)
        s = px > 0
        out[s] = self.pmf[s] / px[s, None]
        return out

    @classmethod
    def from_marginal_and_channel(cls, px, py_x) -> FiniteJoint:
        return cls(np.asarray(px, dtype=float)[:, None] * np.asarray(py_x, dtype=float))

    def mix(self, other: FiniteJoint, alpha: float) -> FiniteJoint:
        return FiniteJoint(alpha * self.pmf + (1 - alpha) * other.pmf)

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "pmf": self.pmf.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> FiniteJoint:
        j = cls(d["pmf"])
        if (d.get("nx", j.nx), d.get("ny", j.ny)) != (j.nx, j.ny):
            raise ValueError("FiniteJoint: declared dimensions do not match pmf")
        return j


@dataclass(frozen=True, eq=False)
class LossMatrix:
    """Loss ``values[yhat, y]``. Rows index the reconstruction alphabet."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 2 or 0 in self.values.shape:
            raise ValueError("LossMatrix: values must be a nonempty matrix")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("LossMatrix: entries must be finite")

    @property
    def nhat(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zero_one(cls, k: int) -> LossMatrix:
        return cls(1.0 - np.eye(k))

    @classmethod
    def squared(cls, yhat_values, y_values) -> LossMatrix:
        yh = np.asarray(yhat_values, dtype=float)
        y = np.asarray(y_values, dtype=float)
        return cls((yh[:, None] - y[None, :]) ** 2)

    @property
    def is_zero_one(self) -> bool:
        v = self.values
        return (v.shape[0] == v.shape[1] and np.all(np.diag(v) == 0)
                and np.all((v == 0) | (v == 1))
                and np.all(v[~np.eye(v.shape[0], dtype=bool)] == 1))

    def to_dict(self) -> dict:
        return {"values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> LossMatrix:
        return cls(d["values"])


def dumps(obj) -> str:
    return json.dumps({"type": type(obj).__name__, **obj.to_dict()})


_TYPES = {c.__name__: c for c in (Pmf, Kernel, FiniteJoint, LossMatrix)}


def loads(text: str):
    d = json.loads(text)
    try:
        cls = _TYPES[d.pop("type")]
    except KeyError as exc:
        raise ValueError(f"unknown or missing type tag: {exc}") from None
    return cls.from_dict(d)


# --- information measures -------------------------------------------------

def _mass(p) -> np.ndarray:
    return p.mass if isinstance(p, Pmf) else np.asarray(p, dtype=float)


def entropy(p) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    m = _mass(p)
    return float(-xlogy(m, m).sum() / np.log(2))


def kl_divergence(p, q) -> float:
    """D(p || q) in bits; ``inf`` when p is not absolutely continuous wrt q."""
    p, q = _mass(p), _mass(q)
    if p.shape != q.shape:
        raise ValueError("kl_divergence: alphabets differ")
    if np.any((p > 0) & (q <= 0)):
        return float("inf")
    s = p > 0
    return float(np.sum(p[s] * (np.log2(p[s]) - np.log2(q[s]))))


def row_divergences(rows: np.ndarray, q: np.ndarray) -> np.ndarray:
    """D(rows[x] || q) for every row, in bits."""
    rows = np.asarray(rows, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(rows > 0, rows * (np.log2(rows) - np.log2(q)), 0.0)
    terms = np.where((rows > 0) & (q <= 0), np.inf, terms)
    return terms.sum(axis=1)


def mutual_information(px, k: Kernel) -> float:
    """I(X; Yhat) in bits for input law ``px`` pushed through kernel ``k``."""
    px = _mass(px)
    if px.size != k.nin:
        raise ValueError(f"mutual_information: px has {px.size} symbols, kernel expects {k.nin}")
    qbar = px @ k.rows
    # sum over joint mass p(x)k(y|x) > 0, where qbar(y) >= p(x)k(y|x) > 0 too;
    # going through per-row divergences breaks when qbar underflows
    joint = px[:, None] * k.rows
    xi, yi = np.nonzero(joint > 0)
    terms = joint[xi, yi] * (np.log2(k.rows[xi, yi]) - np.log2(qbar[yi]))
    return max(float(terms.sum()), 0.0)


def _check_shapes(P: FiniteJoint, k: Kernel | None, L: LossMatrix) -> None:
    if L.ny != P.ny:
        raise ValueError(f"loss has {L.ny} target symbols, joint has {P.ny}")
    if k is not None:
        if k.nin != P.nx:
            raise ValueError(f"kernel has {k.nin} inputs, joint has {P.nx}")
        if k.nout != L.nhat:
            raise ValueError(f"kernel has {k.nout} outputs, loss has {L.nhat}")


def expected_loss(P: FiniteJoint, k: Kernel, L: LossMatrix) -> float:
    """E[loss(Yhat, Y)] = sum_{x,y,yhat} p(x,y) q(yhat|x) loss(yhat, y)."""
    _check_shapes(P, k, L)
    return float(np.einsum("xy,xh,hy->", P.pmf, k.rows, L.values))


def distortion_matrix(P: FiniteJoint, L: LossMatrix) -> np.ndarray:
    """Per-letter expected loss d[x, yhat] = E[loss(yhat, Y) | X = x].

    Rows for x outside the support of X are zero and carry no weight in any
    expectation; use ``P.support`` to tell them apart.
    """
    _check_shapes(P, None, L)
    return P.conditional() @ L.values.T
