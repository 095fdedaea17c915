"""Rate-constrained minimax linear regression under moment constraints.

Over all laws with given means and covariances, the worst case is Gaussian
and the optimal kernel is a shrunk linear predictor plus independent
Gaussian noise. With s = c' Sigma^-1 c and beta = lam * log2(e) / 2:

    a       = 1 - beta / s
    sigma_Z = a * beta                  (variance)
    risk    = sigma_Y^2 - s + beta
    info    = 0.5 * log2(s / beta)      (bits)

whenever beta < s. Otherwise the constant predictor mu_Y is optimal and the
cost is sigma_Y^2. Everything is in bits; "log e" means log2(e).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import sfrl
from .minimax import MomentSet
from .probkit import LOG2E


@dataclass(frozen=True)
class RegressionSolution:
    regime: str  # "active" or "degenerate"
    a: float
    b: float
    sigma_z2: float
    cost: float
    info_bits: float
    risk: float
    lam: float

    @property
    def active(self) -> bool:
        return self.regime == "active"

    def to_dict(self) -> dict:
        return {"regime": self.regime, "a": self.a, "b": self.b, "sigma_z2": self.sigma_z2,
                "cost": self.cost, "info_bits": self.info_bits, "risk": self.risk,
                "lambda": self.lam}


def threshold_lambda(G: MomentSet) -> float:
    """Smallest lambda at which the constant predictor becomes optimal."""
    return 2.0 * G.explained / LOG2E


def solve_regression(G: MomentSet, lam: float) -> RegressionSolution:
    if not isinstance(G, MomentSet):
        raise TypeError("solve_regression needs a MomentSet")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    s = G.explained
    beta = lam * LOG2E / 2.0
    if beta >= s:
        return RegressionSolution("degenerate", 0.0, G.mu_y, 0.0, G.sigma_y2, 0.0,
                                  G.sigma_y2, lam)
    a = 1.0 - beta / s
    b = G.mu_y - a * float(G.weights @ G.mu_x)
    risk = G.sigma_y2 + beta - s
    info = 0.5 * float(np.log2(s / beta))
    return RegressionSolution("active", a, b, a * beta, risk + lam * info, info,
                              risk, lam)


class GaussianSource:
    """Sampler for a member of the moment set.

    ``shape="gaussian"`` gives the worst-case law. ``shape="uniform"`` keeps
    the same means and covariances but draws X and the regression residual
    from scaled uniforms, for checking the robust scheme off the worst case.
    """

    def __init__(self, G: MomentSet, shape: str = "gaussian"):
        if shape not in ("gaussian", "uniform"):
            raise ValueError(f"unknown source shape {shape!r}")
        self.G = G
        self.shape = shape
        self._chol = np.linalg.cholesky(G.sigma_x)
        self._resid_sd = float(np.sqrt(max(G.sigma_y2 - G.explained, 0.0)))

    def _standard(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.shape == "gaussian":
            return rng.standard_normal(size)
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size)

    def sample(self, rng: np.random.Generator, n: int):
        G = self.G
        x = G.mu_x + self._standard(rng, (n, G.dim)) @ self._chol.T
        y = G.mu_y + (x - G.mu_x) @ G.weights + self._resid_sd * self._standard(rng, n)
        return (x[:, 0] if G.dim == 1 else x), y


def regression_scheme(sol: RegressionSolution, G: MomentSet, lam: float,
                      seed: int) -> sfrl.Scheme:
    """One-shot scheme realizing Yhat = a w'x + b + N(0, sigma_Z^2).

    In the degenerate regime the output is the constant mu_Y and every
    description is the 1-bit codeword for K = 1.
    """
    w = sfrl.CommonRandomness(seed)
    if not sol.active:
        return sfrl.Scheme(sfrl.ConstantChannel(sol.b), lam, w)
    s = G.explained
    ch = sfrl.GaussianChannel(sol.a * G.weights, sol.b, sol.sigma_z2, G.mu_y,
                              sol.a ** 2 * s + sol.sigma_z2)
    return sfrl.Scheme(ch, lam, w)


def one_shot_upper_rate(info: float) -> float:
    return info + 2.0 * np.log2(info + 1.0) + 6.0


class Fig3Point(NamedTuple):
    lam: float
    lower_rate: float
    lower_risk: float
    scheme_rate: float
    scheme_risk: float
    upper_rate: float
    stderr_rate: float
    stderr_risk: float

    CSV_HEADER = ("lambda", "lower_rate", "lower_risk", "scheme_rate", "scheme_risk",
                  "upper_rate")

    def csv_row(self) -> tuple:
        return self[:6]


def default_lambda_grid(G: MomentSet, num: int = 12) -> np.ndarray:
    """Log-spaced lambdas from 0.01 up to the degenerate threshold, inclusive."""
    top = threshold_lambda(G)
    return np.geomspace(min(0.01, top / 2), top, num)


def figure3_sweep(G: MomentSet, lambda_grid, n_mc: int = 100_000, seed: int = 0,
                  source: GaussianSource | None = None, workers: int = 1) -> list[Fig3Point]:
    """Rate/risk operating points of the closed form and of the simulated scheme.

    Every lambda reuses the same data stream and common randomness seed, so
    neighboring points differ only through the scheme.
    """
    source = GaussianSource(G) if source is None else source
    out = []
    for lam in np.asarray(lambda_grid, dtype=float):
        sol = solve_regression(G, float(lam))
        scheme = regression_scheme(sol, G, float(lam), seed)
        pt = sfrl.run_one_shot(scheme, source, "squared", n_mc, seed, workers=workers)
        out.append(Fig3Point(float(lam), sol.info_bits, sol.risk, pt.rate_bits, pt.risk,
                             one_shot_upper_rate(sol.info_bits), pt.stderr_rate, pt.stderr_risk))
    return out
