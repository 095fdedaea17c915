"""Risk-information cost E[loss] + lam * I(X; Yhat) and its minimization.

For fixed P the infimum over kernels is a rate-distortion problem with the
per-letter distortion d[x, yhat] = E[loss(yhat, Y) | X = x], solved here by
alternating minimization (Blahut-Arimoto) with all exponentials in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .probkit import (FiniteJoint, Kernel, LossMatrix, Pmf, distortion_matrix, entropy,
                      expected_loss, mutual_information, row_divergences)

LN2 = math.log(2.0)
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
# cost decrease is quadratic in the distance to the optimum, so the
# reference itself must also stop moving before we declare convergence
REF_TOL = 1e-9
# max_y c(y) - 1 bounds the dual suboptimality, so this also certifies
# optimality when the optimal reference is not unique
KKT_TOL = 1e-11


@dataclass(frozen=True, eq=False)
class RiskInfoSolution:
    kernel: Kernel
    reference: Pmf
    value: float
    risk: float
    info: float
    iterations: int
    converged: bool
    trace: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {"kernel": self.kernel.rows.tolist(), "reference": self.reference.mass.tolist(),
                "value": self.value, "risk": self.risk, "info_bits": self.info,
                "iterations": self.iterations, "converged": self.converged}


def risk_info_cost(P: FiniteJoint, k: Kernel, L: LossMatrix, lam: float) -> float:
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return expected_loss(P, k, L) + lam * mutual_information(P.px, k)


def _as_pmf(v: np.ndarray) -> Pmf:
    v = np.maximum(v, 0.0)
    return Pmf(v / v.sum())


def _as_kernel(rows: np.ndarray) -> Kernel:
    rows = np.maximum(rows, 0.0)
    return Kernel(rows / rows.sum(axis=1, keepdims=True))


def gibbs_rows(log_ref: np.ndarray, d: np.ndarray, lam: float) -> np.ndarray:
    """Rows proportional to ref(yhat) * 2**(-d[x, yhat] / lam)."""
    logits = log_ref[None, :] - d * (LN2 / lam)
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def _gibbs_weights(loga: np.ndarray) -> np.ndarray:
    # row-shifted so every row peaks at exactly 1; rows can't underflow entirely
    return np.exp(loga - loga.max(axis=1, keepdims=True))


def _step(A: np.ndarray, px: np.ndarray, q: np.ndarray):
    """One multiplicative update: rows prop. to q * A, then q <- pushforward."""
    rows = A * q[None, :]
    rows /= rows.sum(axis=1, keepdims=True)
    q = px @ rows
    dead = q <= 0
    if dead.any():
        # underflowed symbols: drop them from every row as well
        rows[:, dead] = 0.0
        rows /= rows.sum(axis=1, keepdims=True)
    return rows, q


def _kkt_excess(A: np.ndarray, px: np.ndarray, q: np.ndarray) -> np.ndarray:
    """c(y) - 1 with c(y) = E_P[A(X, y) / <A(X, .), q>]; <= 0 off the support at the optimum."""
    return px @ (A / (A @ q)[:, None]) - 1.0


def _dual_objective(A, px, q) -> float:
    with np.errstate(divide="ignore"):
        return float(-(px @ np.log(A @ q)))


def _newton_polish(A: np.ndarray, px: np.ndarray, q: np.ndarray, max_iter: int = 100):
    """Active-set Newton refinement of min_q -E log <A_X, q> over the simplex.

    Components that a step would push negative are clamped at zero and
    leave the active set. Returns the refined q, or None when the final
    point fails the optimality check (some dropped component has c > 1).
    """
    q = q.copy()
    active = q > 0
    f = _dual_objective(A, px, q)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        z = A @ q
        c = px @ (A[:, idx] / z[:, None])
        if idx.size == 1:
            break
        H = (A[:, idx] * (px / z**2)[:, None]).T @ A[:, idx]
        kkt = np.zeros((idx.size + 1, idx.size + 1))
        kkt[:-1, :-1] = H
        kkt[:-1, -1] = kkt[-1, :-1] = 1.0
        rhs = np.append(c, 0.0)
        # an exact solve keeps near-flat directions; the resulting long step
        # is cut off at the boundary, which is where such optima live
        try:
            delta = np.linalg.solve(kkt, rhs)[:-1]
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:-1]
        if not np.all(np.isfinite(delta)):
            break
        slope = -c @ delta
        if not slope < 0:
            break
        neg = delta < 0
        t_max = min(1.0, float(np.min(-q[idx][neg] / delta[neg]))) if neg.any() else 1.0
        t = t_max
        while t > 1e-12:
            trial = q.copy()
            trial[idx] = np.maximum(q[idx] + t * delta, 0.0)
            if t == t_max and t_max < 1.0:
                hit = idx[np.isclose(-q[idx] / np.where(neg, delta, -1.0), t_max, rtol=1e-12, atol=0)]
                trial[hit] = 0.0
            trial /= trial.sum()
            f_trial = _dual_objective(A, px, trial)
            if f_trial <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        q, f = trial, f_trial
        active = q > 0
        if np.max(np.abs(t * delta)) < 1e-15:
            break
    if (~active).any() and np.max(_kkt_excess(A, px, q)[~active]) > 1e-9:
        return None
    return q


def _kernel_cost(px, d, rows, q, lam) -> tuple[float, float, float]:
    risk = float(px @ (rows * d).sum(axis=1))
    s = px > 0
    info = float(px[s] @ row_divergences(rows[s], q))
    return risk + lam * info, risk, info


POLISH_EVERY = 16


def minimize_kernel(P: FiniteJoint, L: LossMatrix, lam: float, nout: int | None = None,
                    tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                    init: np.ndarray | None = None) -> RiskInfoSolution:
    """inf over kernels of E[loss] + lam I(X; Yhat) for a fixed joint P.

    Alternates reference <- pushforward of the kernel and kernel row x <-
    reference * 2**(-d[x]/lam), normalized. Each step cannot raise the cost;
    iteration stops once a step lowers it by less than ``tol`` bits and either
    moves no reference entry by more than REF_TOL or satisfies the dual
    optimality conditions to KKT_TOL.

    The plain iteration slows to a crawl when the optimum is ill-conditioned
    or has zero reference entries, so every POLISH_EVERY steps the reference
    is refined by an active-set Newton method on the convex dual objective
    and the refinement kept only if it lowers the cost.

    Rows for x outside the support of X are set to the reference.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive; use map_estimator for lambda = 0")
    nout = L.nhat if nout is None else nout
    if nout != L.nhat:
        raise ValueError(f"loss matrix has {L.nhat} reconstruction symbols, asked for {nout}")
    s = P.support
    px = P.px[s]
    d = distortion_matrix(P, L)[s]
    A = _gibbs_weights(-d * (LN2 / lam))
    q = np.full(nout, 1.0 / nout) if init is None else np.asarray(init, dtype=float)
    rows, q = _step(A, px, q)
    cost = _kernel_cost(px, d, rows, q, lam)[0]
    trace = [cost]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        q_old = q
        rows, q = _step(A, px, q)
        new = _kernel_cost(px, d, rows, q, lam)[0]
        if it % POLISH_EVERY == 0:
            cand = _newton_polish(A, px, q)
            if cand is not None and _dual_objective(A, px, cand) <= _dual_objective(A, px, q):
                c_rows, c_q = _step(A, px, cand)
                c_cost = _kernel_cost(px, d, c_rows, c_q, lam)[0]
                if c_cost <= new:
                    rows, q, new = c_rows, c_q, c_cost
        trace.append(new)
        done = cost - new < tol and (np.max(np.abs(q - q_old)) < REF_TOL
                                     or np.max(_kkt_excess(A, px, q)) < KKT_TOL)
        cost = new
        if done:
            converged = True
            break
    value, risk, info = _kernel_cost(px, d, rows, q, lam)
    full = np.tile(q, (P.nx, 1))
    full[s] = rows
    return RiskInfoSolution(_as_kernel(full), _as_pmf(q), value, risk, info, it, converged,
                            tuple(trace))


def map_estimator(P: FiniteJoint) -> Kernel:
    """Deterministic kernel picking argmax_y P(y|x); ties go to the smaller y."""
    best = np.argmax(P.conditional(), axis=1)
    rows = np.zeros((P.nx, P.ny))
    rows[np.arange(P.nx), best] = 1.0
    return Kernel(rows)


def _log2_weights(P: FiniteJoint, lam: float) -> np.ndarray:
    # natural log of 2**(P(y|x)/lam)
    return P.conditional() * (LN2 / lam)


def classification_objective(P: FiniteJoint, lam: float, reference) -> float:
    """E_P[-log2 sum_y 2**(P(y|X)/lam) ref(y)], the quantity minimized over ref."""
    ref = reference.mass if isinstance(reference, Pmf) else np.asarray(reference, dtype=float)
    s = P.support
    with np.errstate(divide="ignore"):
        z = logsumexp(_log2_weights(P, lam)[s] + np.log(ref)[None, :], axis=1)
    return float(-(P.px[s] @ z) / LN2)


def classification_cost(P: FiniteJoint, lam: float, tol: float = DEFAULT_TOL,
                        max_iter: int = DEFAULT_MAX_ITER) -> tuple[float, Pmf]:
    """Optimal risk-information cost under 0-1 loss with Yhat ranging over Y.

    Evaluates 1 + lam * inf_ref E_P[-log2 sum_y 2**(P(y|X)/lam) ref(y)]. The
    objective is convex in ref; it is minimized by the multiplicative update
    ref <- ref * E_P[w_X / <w_X, ref>] with w_x(y) = 2**(P(y|x)/lam), which
    never increases it, plus the same support polish as ``minimize_kernel``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    s = P.support
    px = P.px[s]
    A = _gibbs_weights(_log2_weights(P, lam)[s])
    ref = np.full(P.ny, 1.0 / P.ny)
    obj = classification_objective(P, lam, ref)
    for it in range(1, max_iter + 1):
        ref_old = ref
        ref = ref * (px @ (A / (A @ ref)[:, None]))
        ref /= ref.sum()
        new = classification_objective(P, lam, ref)
        if it % POLISH_EVERY == 0:
            cand = _newton_polish(A, px, ref)
            if cand is not None and classification_objective(P, lam, cand) <= new:
                ref, new = cand, classification_objective(P, lam, cand)
        done = obj - new < tol and (np.max(np.abs(ref - ref_old)) < REF_TOL
                                    or np.max(_kkt_excess(A, px, ref)) < KKT_TOL)
        obj = new
        if done:
            break
    return 1.0 + lam * obj, _as_pmf(ref)


def classification_estimator(P: FiniteJoint, lam: float, reference: Pmf) -> Kernel:
    """Kernel rows proportional to 2**(P(yhat|x)/lam) * reference(yhat)."""
    with np.errstate(divide="ignore"):
        logits = _log2_weights(P, lam) + np.log(reference.mass)[None, :]
    return _as_kernel(np.exp(logits - logsumexp(logits, axis=1, keepdims=True)))


def symmetric_classification_cost(P: FiniteJoint, lam: float) -> float:
    """1 + lam log2 k - lam E_P log2 sum_y 2**(P(y|X)/lam): the uniform-reference value."""
    return 1.0 + lam * classification_objective(P, lam, np.full(P.ny, 1.0 / P.ny))


# --- log loss / information bottleneck ---------------------------------------

class IBResult(NamedTuple):
    value: float
    encoder: Kernel
    decoder: Kernel
    info_xu: float
    info_yu: float


def _ib_terms(P: FiniteJoint, enc: np.ndarray):
    pxu = P.px[:, None] * enc
    pu = pxu.sum(axis=0)
    puy = enc.T @ P.pmf
    used = pu > 0
    dec = np.zeros_like(puy)
    dec[used] = puy[used] / pu[used, None]
    dec[~used] = P.py
    hyu = float(pu[used] @ np.array([entropy(r) for r in dec[used]]))
    ixu = mutual_information(P.px, Kernel(enc))
    return dec, pu, hyu, ixu


def _ib_single(P: FiniteJoint, lam: float, m: int, rng: np.random.Generator,
               tol: float, max_iter: int):
    py_x = P.conditional()
    s = P.support
    enc = rng.dirichlet(np.ones(m), size=P.nx)
    dec, pu, hyu, ixu = _ib_terms(P, enc)
    val = hyu + lam * ixu
    for _ in range(max_iter):
        # per-letter distortion D(P(.|x) || P(.|u)), finite because dec > 0 wherever used
        with np.errstate(divide="ignore", invalid="ignore"):
            logdec = np.log2(dec)
            cross = np.where(py_x[:, None, :] > 0, py_x[:, None, :] * logdec[None, :, :], 0.0)
        d = -cross.sum(axis=2) + np.array([-entropy(r) if s[i] else 0.0
                                           for i, r in enumerate(py_x)])[:, None]
        with np.errstate(divide="ignore"):
            enc = gibbs_rows(np.log(pu), d, lam)
        enc[~s] = pu
        dec, pu, hyu, ixu = _ib_terms(P, enc)
        new = hyu + lam * ixu
        done = abs(val - new) < tol
        val = new
        if done:
            break
    return val, enc, dec, ixu


def ib_cost(P: FiniteJoint, lam: float, ncluster: int, tol: float = DEFAULT_TOL,
            max_iter: int = 10_000, restarts: int = 16) -> IBResult:
    """Log-loss risk-information cost inf_{P(U|X)} H(Y|U) + lam I(X;U) over |U| = ncluster.

    The problem is nonconvex; the best of ``restarts`` random starts (seeds
    0, 1, ...) is returned and is a local optimum only.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if ncluster < 1:
        raise ValueError("ncluster must be at least 1")
    best = None
    for seed in range(restarts):
        out = _ib_single(P, lam, ncluster, np.random.default_rng(seed), tol, max_iter)
        if best is None or out[0] < best[0]:
            best = out
    val, enc, dec, ixu = best
    encoder = _as_kernel(enc)
    # recompute every reported number from the returned kernels
    dec, pu, hyu, ixu = _ib_terms(P, encoder.rows)
    iyu = entropy(P.py) - hyu
    return IBResult(hyu + lam * ixu, encoder, _as_kernel(dec), ixu, iyu)
