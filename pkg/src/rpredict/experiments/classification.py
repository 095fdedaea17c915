"""Two-source classification example.

X = (X1, X2) is uniform on Y1 x Y2 with disjoint label sets of sizes k1 and
k2, and Y = X_i with probability q_i. Under 0-1 loss the optimal kernel
concentrates on one block i: it outputs x_i with probability

    head_i = 2^(q_i/lam) / (2^(q_i/lam) + k_i - 1)

and spreads the rest uniformly over the other k_i - 1 labels of that block.
Estimate-compress can only compress the MAP estimate X1 or emit a fixed
label of Y2. Everything here is closed form; the k1 x k2 joint is never
built, so k1 = 2**32 is fine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..probkit import FiniteJoint

LN2 = math.log(2.0)


@dataclass(frozen=True)
class TwoSourceSpec:
    k1: int = 2 ** 32
    k2: int = 2
    q1: float = 2.0 / 3.0
    q2: float = 1.0 / 3.0

    def __post_init__(self):
        for name in ("k1", "k2"):
            k = getattr(self, name)
            if int(k) != k or k < 1:
                raise ValueError(f"{name} must be a positive integer, got {k}")
        if not (0 <= self.q1 <= 1 and 0 <= self.q2 <= 1):
            raise ValueError("q1, q2 must lie in [0, 1]")
        if abs(self.q1 + self.q2 - 1.0) > 1e-12:
            raise ValueError(f"q1 + q2 must be 1, got {self.q1 + self.q2}")

    @property
    def ks(self) -> tuple[int, int]:
        return (int(self.k1), int(self.k2))

    @property
    def qs(self) -> tuple[float, float]:
        return (self.q1, self.q2)

    def joint(self) -> FiniteJoint:
        """Materialize P(x, y) with x = x1 * k2 + x2 and y in Y1 then Y2. Small k only."""
        k1, k2 = self.ks
        if k1 * k2 * (k1 + k2) > 5_000_000:
            raise ValueError("joint too large to materialize; use the closed forms")
        pmf = np.zeros((k1 * k2, k1 + k2))
        x1, x2 = np.divmod(np.arange(k1 * k2), k2)
        pmf[np.arange(k1 * k2), x1] += self.q1
        pmf[np.arange(k1 * k2), k1 + x2] += self.q2
        return FiniteJoint(pmf / (k1 * k2))


def _log2_branch(u: float, k: int) -> float:
    """log2(1 + (2^u - 1)/k) without overflow for large u."""
    if u < 512:
        return math.log1p(math.expm1(u * LN2) / k) / LN2
    # 2^u dominates: log2(2^u + k - 1) - log2 k
    return u - math.log2(k) + math.log1p((k - 1) * 2.0 ** -u) / LN2


def _check_lam(lam: float) -> None:
    if not lam > 0:
        raise ValueError("lambda must be positive")


def branch_logs(spec: TwoSourceSpec, lam: float) -> tuple[float, float]:
    _check_lam(lam)
    return tuple(_log2_branch(q / lam, k) for q, k in zip(spec.qs, spec.ks))


def two_source_optimal_cost(spec: TwoSourceSpec, lam: float) -> float:
    return 1.0 - lam * max(branch_logs(spec, lam))


def two_source_ec_cost(spec: TwoSourceSpec, lam: float) -> float:
    _check_lam(lam)
    b1 = _log2_branch(spec.q1 / lam, spec.ks[0])
    b2 = spec.q2 / (lam * spec.k2)
    return 1.0 - lam * max(b1, b2)


@dataclass(frozen=True)
class BlockEstimator:
    """Kernel that outputs x_branch w.p. head and each other label of that block w.p. tail."""

    branch: int  # 1 or 2
    head: float
    tail: float
    k: int

    @property
    def risk_given(self) -> float:
        """P(Yhat = Y | Y drawn from this block)."""
        return self.head

    def conditional_entropy(self) -> float:
        h = -_xlog2x(self.head)
        if self.k > 1:
            h += -(self.k - 1) * _xlog2x(self.tail)
        return h

    def info_bits(self) -> float:
        """I(X; Yhat): the output is uniform over the block."""
        return max(math.log2(self.k) - self.conditional_entropy(), 0.0)


def _xlog2x(p: float) -> float:
    return p * math.log2(p) if p > 0 else 0.0


def _block(branch: int, q: float, k: int, lam: float) -> BlockEstimator:
    # head = 1 / (1 + (k-1) 2^(-q/lam)), computed without overflow
    r = (k - 1) * 2.0 ** (-q / lam)
    head = 1.0 / (1.0 + r)
    tail = (r / (k - 1)) / (1.0 + r) if k > 1 else 0.0
    return BlockEstimator(branch, head, tail, k)


def two_source_optimal_estimator(spec: TwoSourceSpec, lam: float) -> BlockEstimator:
    """Optimal kernel structure; ties go to block 1."""
    b1, b2 = branch_logs(spec, lam)
    i = 0 if b1 >= b2 else 1
    return _block(i + 1, spec.qs[i], spec.ks[i], lam)


def optimal_point(spec: TwoSourceSpec, lam: float) -> tuple[float, float]:
    """(I(X; Yhat), risk) of the optimal kernel at this lambda."""
    est = two_source_optimal_estimator(spec, lam)
    q = spec.qs[est.branch - 1]
    return est.info_bits(), 1.0 - q * est.head


def ec_point(spec: TwoSourceSpec, lam: float) -> tuple[float, float]:
    """(I, risk) of the estimate-compress choice at this lambda."""
    _check_lam(lam)
    b1 = _log2_branch(spec.q1 / lam, spec.ks[0])
    if b1 >= spec.q2 / (lam * spec.k2):
        est = _block(1, spec.q1, spec.ks[0], lam)
        return est.info_bits(), 1.0 - spec.q1 * est.head
    return 0.0, 1.0 - spec.q2 / spec.k2


def unbounded_gap_rate(k1: int) -> float:
    """I(X; Yhat) when X1 passes a k1-ary symmetric channel with P(Yhat = X1) = 1/2.

    H(Yhat) = log k1 and H(Yhat | X1) = h(1/2) + (1/2) log(k1 - 1), so the
    rate is log k1 - (1/2) log(k1 - 1) - 1. With q1 = 2/3 this is the least
    rate at which estimate-compress reaches risk 2/3. It exceeds the 1 bit
    that the optimal scheme needs exactly when k1 >= 15.
    """
    k1 = int(k1)
    if k1 < 15:
        raise ValueError("requires k1 >= 15; below that compressing X1 is not worse than 1 bit")
    return math.log2(k1) - 0.5 * math.log2(k1 - 1) - 1.0


def time_sharing_vertices(spec: TwoSourceSpec) -> list[tuple[float, float]]:
    """Lower convex hull of the deterministic operating points (rate bits, risk).

    Candidates: send X1 with ceil(log2 k1) bits, send X2 with ceil(log2 k2)
    bits, or send nothing and emit the best fixed label.
    """
    pts = {
        (float(math.ceil(math.log2(spec.k1))), 1.0 - spec.q1),
        (float(math.ceil(math.log2(spec.k2))), 1.0 - spec.q2),
        (0.0, 1.0 - max(spec.q1 / spec.k1, spec.q2 / spec.k2)),
    }
    return _lower_hull(sorted(pts))


def _lower_hull(pts: list[tuple[float, float]]) -> list[tuple[float, float]]:
    # monotone chain, then keep the part where risk decreases in rate
    hull: list[tuple[float, float]] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    out = [hull[0]]
    for p in hull[1:]:
        if p[1] < out[-1][1]:
            out.append(p)
    return out


FIG4_HEADER = ("series", "lambda", "rate_bits", "rate_kind", "risk")


def default_fig4_lambdas() -> np.ndarray:
    return np.geomspace(0.005, 100.0, 81)


def figure4_sweep(spec: TwoSourceSpec, lambda_grid) -> list[tuple]:
    """Long-format rows (series, lambda, rate, rate_kind, risk).

    Series: optimal_info (mutual information at the optimum), optimal_rate_upper
    (I + log2(I + 1) + 5 at the same risk), estimate_compress_info, and
    time_sharing (vertices of the achievable hull, lambda left blank).
    """
    rows = []
    for lam in np.asarray(lambda_grid, dtype=float):
        info, risk = optimal_point(spec, float(lam))
        rows.append(("optimal_info", float(lam), info, "mutual_information", risk))
        rows.append(("optimal_rate_upper", float(lam), info + math.log2(info + 1.0) + 5.0,
                     "rate_upper_bound", risk))
        ei, er = ec_point(spec, float(lam))
        rows.append(("estimate_compress_info", float(lam), ei, "mutual_information", er))
    for rate, risk in time_sharing_vertices(spec):
        rows.append(("time_sharing", None, rate, "expected_length", risk))
    return rows
