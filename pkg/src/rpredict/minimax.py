"""Worst-case risk-information cost over a convex ambiguity set.

For a hull of finitely many joints P_1..P_V the outer problem is

    max_w g(w),   g(w) = inf_kernel L(kernel, sum_v w_v P_v),

with L the risk-information cost. Writing the mutual information through
its variational form, L(k, P) = min_Q G(k, Q, P) where

    G(k, Q, P) = E_P[loss] + lam * sum_x p(x) D(k(.|x) || Q)

is linear in P. Hence g is a minimum of linear functions of w, and the vector
(G(k*, Q*, P_v))_v at the inner optimum (k*, Q*) is a supergradient of g. The
same vector certifies optimality: since sum_v w_v G_v = g(w) and
sup_{P in hull} L(k*, P) <= max_v G_v, the number max_v G_v - g(w) bounds
the duality gap from above.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import sfrl
from .probkit import FiniteJoint, Kernel, LossMatrix, Pmf, row_divergences
from .riskinfo import RiskInfoSolution, minimize_kernel

DEFAULT_GAP_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class HullSet:
    """Convex hull of finitely many joints on a shared alphabet."""

    vertices: tuple

    def __post_init__(self):
        verts = tuple(self.vertices)
        if not verts:
            raise ValueError("a hull needs at least one vertex")
        shapes = {(v.nx, v.ny) for v in verts}
        if len(shapes) != 1:
            raise ValueError(f"vertices disagree on alphabet sizes: {sorted(shapes)}")
        object.__setattr__(self, "vertices", verts)

    @property
    def size(self) -> int:
        return len(self.vertices)

    def mixture(self, w) -> FiniteJoint:
        w = np.asarray(w, dtype=float)
        pmf = np.tensordot(w, np.stack([v.pmf for v in self.vertices]), axes=1)
        return FiniteJoint(pmf / pmf.sum())

    def to_dict(self) -> dict:
        return {"variant": "hull", "vertices": [v.to_dict() for v in self.vertices]}


@dataclass(frozen=True, eq=False)
class MomentSet:
    """All laws of (X, Y) with the given first and second moments.

    Only the regression module consumes this variant; the hull solver
    requires finite alphabets.
    """

    mu_x: np.ndarray
    mu_y: float
    sigma_x: np.ndarray
    sigma_y2: float
    c_xy: np.ndarray

    def __post_init__(self):
        mu_x = np.atleast_1d(np.asarray(self.mu_x, dtype=float))
        sigma_x = np.atleast_2d(np.asarray(self.sigma_x, dtype=float))
        c_xy = np.atleast_1d(np.asarray(self.c_xy, dtype=float))
        d = mu_x.size
        if sigma_x.shape != (d, d) or c_xy.size != d:
            raise ValueError("moment dimensions disagree")
        if not np.allclose(sigma_x, sigma_x.T):
            raise ValueError("sigma_x must be symmetric")
        if np.min(np.linalg.eigvalsh(sigma_x)) <= 0:
            raise ValueError("sigma_x must be positive definite")
        if not self.sigma_y2 > 0:
            raise ValueError("sigma_y2 must be positive")
        object.__setattr__(self, "mu_x", mu_x)
        object.__setattr__(self, "sigma_x", sigma_x)
        object.__setattr__(self, "c_xy", c_xy)
        object.__setattr__(self, "mu_y", float(self.mu_y))
        object.__setattr__(self, "sigma_y2", float(self.sigma_y2))
        if self.sigma_y2 - self.explained < -1e-12:
            raise ValueError("moments do not form a valid covariance: "
                             "sigma_y2 < c_xy' sigma_x^-1 c_xy")

    @property
    def dim(self) -> int:
        return self.mu_x.size

    @property
    def weights(self) -> np.ndarray:
        """sigma_x^-1 c_xy, the coefficients of the linear MMSE predictor."""
        return np.linalg.solve(self.sigma_x, self.c_xy)

    @property
    def explained(self) -> float:
        """c_xy' sigma_x^-1 c_xy."""
        return float(self.c_xy @ self.weights)

    def to_dict(self) -> dict:
        return {"variant": "moment", "mu_x": self.mu_x.tolist(), "mu_y": self.mu_y,
                "sigma_x": self.sigma_x.tolist(), "sigma_y2": self.sigma_y2,
                "c_xy": self.c_xy.tolist()}


def ambiguity_from_dict(d: dict):
    variant = d.get("variant")
    if variant == "hull":
        return HullSet(tuple(FiniteJoint.from_dict(v) for v in d["vertices"]))
    if variant == "moment":
        return MomentSet(d["mu_x"], d["mu_y"], d["sigma_x"], d["sigma_y2"], d["c_xy"])
    raise ValueError(f"unknown ambiguity-set variant {variant!r}")


@dataclass(frozen=True, eq=False)
class SaddlePoint:
    weights: Pmf
    kernel: Kernel
    reference: Pmf
    value: float
    gap: float
    joint: FiniteJoint
    iterations: int = 0
    vertex_costs: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"weights": self.weights.mass.tolist(), "kernel": self.kernel.rows.tolist(),
                "reference": self.reference.mass.tolist(), "value": self.value,
                "gap": self.gap, "iterations": self.iterations,
                "vertex_costs": None if self.vertex_costs is None
                else np.asarray(self.vertex_costs).tolist()}


def linearized_cost(P: FiniteJoint, kernel: Kernel, reference, L: LossMatrix,
                    lam: float) -> float:
    """E_P[loss] + lam * sum_x p(x) D(kernel(.|x) || reference).

    Upper-bounds the risk-information cost of ``kernel`` under P, with
    equality when ``reference`` is the output law induced by P.
    """
    q = reference.mass if isinstance(reference, Pmf) else np.asarray(reference, dtype=float)
    px = P.px
    s = px > 0
    risk = float(np.einsum("xy,xh,hy->", P.pmf, kernel.rows, L.values))
    return risk + lam * float(px[s] @ row_divergences(kernel.rows[s], q))


def _vertex_costs(G: HullSet, sol: RiskInfoSolution, L, lam) -> np.ndarray:
    return np.array([linearized_cost(v, sol.kernel, sol.reference, L, lam)
                     for v in G.vertices])


def _lp_step(cuts: list[np.ndarray]) -> tuple[np.ndarray, float, np.ndarray]:
    """Solve max_w min_j <cut_j, w> over the simplex.

    Returns the maximizer, the optimal value and the LP dual multipliers on
    the cuts; the latter form a pmf mu with max_v sum_j mu_j cut_j[v] equal to
    the optimal value.
    """
    V = cuts[0].size
    c = np.zeros(V + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-np.array(cuts), np.ones((len(cuts), 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(cuts)),
                  A_eq=np.append(np.ones(V), 0.0)[None, :], b_eq=[1.0],
                  bounds=[(0, None)] * V + [(None, None)], method="highs")
    if res.status != 0:
        raise RuntimeError(f"cutting-plane LP failed: {res.message}")
    w = np.maximum(res.x[:V], 0.0)
    mu = np.maximum(-res.ineqlin.marginals, 0.0)
    return w / w.sum(), float(-res.fun), mu / mu.sum()


def worst_case_value(G: HullSet, L: LossMatrix, lam: float, tol: float = DEFAULT_GAP_TOL,
                     max_iter: int = 500) -> SaddlePoint:
    """Maximize g(w) over mixture weights and return the saddle point.

    Kelley's cutting-plane method on the supergradients described in the
    module docstring. At the optimum the inner minimizer is often not unique
    (ties among outputs are typical), so the reported kernel is recovered from
    the LP duals as a mixture of the inner solutions seen so far. By joint
    convexity of D, that mixture's worst vertex cost is at most the LP upper
    bound, which closes the certificate. Check ``gap`` against your tolerance
    before trusting the result.
    """
    if not isinstance(G, HullSet):
        raise TypeError("worst_case_value needs a HullSet; moment sets go to rpredict.regression")
    if L.ny != G.vertices[0].ny:
        raise ValueError(f"loss has {L.ny} target symbols, hull has {G.vertices[0].ny}")
    if lam <= 0:
        raise ValueError("lambda must be positive")

    V = G.size
    w = np.full(V, 1.0 / V)
    cuts, pairs = [], []
    best = None  # (g, w, sol)
    primal = None  # (certificate upper value, kernel rows, reference)
    it = 0
    for it in range(1, max_iter + 1):
        sol = minimize_kernel(G.mixture(w), L, lam)
        Gv = _vertex_costs(G, sol, L, lam)
        if best is None or sol.value > best[0]:
            best = (sol.value, w, sol)
        if primal is None or max(Gv) < primal[0]:
            primal = (float(max(Gv)), sol.kernel.rows, sol.reference.mass)
        cuts.append(Gv)
        pairs.append((sol.kernel.rows, sol.reference.mass))
        if primal[0] - best[0] < tol:
            break
        w, upper, mu = _lp_step(cuts)
        rows = sum(m * k for m, (k, _) in zip(mu, pairs) if m > 0)
        ref = sum(m * q for m, (_, q) in zip(mu, pairs) if m > 0)
        mixed = Kernel(rows / rows.sum(axis=1, keepdims=True))
        ref = ref / ref.sum()
        cert = max(linearized_cost(v, mixed, ref, L, lam) for v in G.vertices)
        if cert < primal[0]:
            primal = (cert, mixed.rows, ref)
        if primal[0] - best[0] < tol or upper - best[0] < 1e-14:
            break
    value, w_star, _ = best
    kernel = Kernel(primal[1])
    ref = Pmf(primal[2])
    Gv = np.array([linearized_cost(v, kernel, ref, L, lam) for v in G.vertices])
    gap = max(float(Gv.max() - value), 0.0)
    return SaddlePoint(Pmf(w_star), kernel, ref, value, gap, G.mixture(w_star), it, Gv)


def duality_gap_check(sp: SaddlePoint, G: HullSet, L: LossMatrix, lam: float) -> float:
    """Recompute the certificate max_v G(k, Q, P_v) - inf_kernel L(., P*) from scratch.

    Nonnegative for any kernel; near zero only at a saddle point.
    """
    P_star = G.mixture(sp.weights.mass)
    q = sp.kernel.pushforward(P_star.px)
    primal = max(linearized_cost(v, sp.kernel, q, L, lam) for v in G.vertices)
    dual = minimize_kernel(P_star, L, lam).value
    return primal - dual


def synthesize_robust_scheme(sp: SaddlePoint, lam: float, seed: int) -> sfrl.Scheme:
    """Channel-simulation scheme for the saddle kernel against the worst-case output law."""
    q = sp.kernel.pushforward(sp.joint.px)
    ch = sfrl.DiscreteChannel(sp.kernel, Pmf(q / q.sum()))
    return sfrl.Scheme(ch, lam, sfrl.CommonRandomness(seed))


def empirical_joint(samples, nx: int, ny: int) -> FiniteJoint:
    """Normalized count matrix of (x, y) label pairs."""
    pairs = np.asarray(list(samples), dtype=int).reshape(-1, 2)
    if pairs.shape[0] == 0:
        raise ValueError("no samples")
    x, y = pairs[:, 0], pairs[:, 1]
    if x.min() < 0 or x.max() >= nx or y.min() < 0 or y.max() >= ny:
        raise ValueError("sample labels fall outside the declared alphabets")
    counts = np.zeros((nx, ny))
    np.add.at(counts, (x, y), 1.0)
    return FiniteJoint(counts / counts.sum())
