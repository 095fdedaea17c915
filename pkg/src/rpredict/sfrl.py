"""One-shot channel simulation with the Poisson functional representation.

Descriptor and estimator share a seed. From it both sides enumerate the same
candidate stream (T_i, Y_i), i = 1, 2, ..., where T_i are the arrival times of
a unit-rate Poisson process and Y_i are i.i.d. draws from a reference law.
The descriptor picks K = argmin_i T_i / r_x(Y_i), with r_x the density ratio
of the target conditional to the reference, and sends K with an Elias delta
codeword. The estimator regenerates Y_K from the seed.

Randomness is counter-based: candidate i of seed s is a pure function of
(s, i), so the decoder reaches Y_K in O(1) and many rounds can be encoded at
once as numpy arrays.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import ndtri
from scipy.stats import chisquare

from .codec import elias_delta_decode, elias_delta_encode, elias_delta_length
from .probkit import FiniteJoint, Kernel, LossMatrix, Pmf, row_divergences

MAX_CANDIDATES = 10_000_000
LN2 = math.log(2.0)

# --- counter-based uniforms -------------------------------------------------

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LANE_KEYS = (np.uint64(0x243F6A8885A308D3), np.uint64(0x13198A2E03707344))
_ROUND_KEY = np.uint64(0xA4093822299F31D0)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype != np.uint64:
        a = a.astype(np.int64).astype(np.uint64) if a.dtype.kind == "i" else a.astype(np.uint64)
    return a


def split_seeds(master: int, rounds) -> np.ndarray:
    """Sub-seeds for the given round indices, derived from one master seed."""
    with np.errstate(over="ignore"):
        key = _mix64(_as_u64(np.array(master % 2**64, dtype=np.uint64)) ^ _ROUND_KEY)
        r = _as_u64(np.asarray(rounds, dtype=np.int64))
        return _mix64(key + (r + np.uint64(1)) * _GAMMA)


def stream_uniforms(seeds, index, lane: int) -> np.ndarray:
    """Uniforms in (0, 1) at candidate ``index`` of each seed's stream.

    ``seeds`` and ``index`` broadcast against each other. Lane 0 feeds the
    arrival times, lane 1 the candidate values.
    """
    with np.errstate(over="ignore"):
        key = _mix64(_as_u64(seeds) ^ _LANE_KEYS[lane])
        h = _mix64(key + _as_u64(index) * _GAMMA)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class CommonRandomness:
    """Shared seed W. ``round(r)`` gives the independent stream for round r."""

    seed: int

    def round(self, r: int) -> CommonRandomness:
        return CommonRandomness(int(split_seeds(self.seed, [r])[0]))

    def arrival_times(self, n: int) -> np.ndarray:
        """T_1..T_n; recomputed from the counter, no state kept."""
        idx = np.arange(1, n + 1)
        return np.cumsum(-np.log(stream_uniforms(np.uint64(self.seed), idx, 0)))

    def candidates(self, ch: TargetChannel, n: int) -> np.ndarray:
        idx = np.arange(1, n + 1)
        return ch.sample_reference(stream_uniforms(np.uint64(self.seed), idx, 1))


# --- target channels ------------------------------------------------------------

class TargetChannel:
    """Pair (conditional law of Yhat given x, reference law of Yhat).

    Subclasses vectorize over a batch of inputs ``x`` (first axis) and a
    matrix of candidates ``y`` of shape (batch, block).
    """

    discrete = False

    def sample_reference(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log2_ratio(self, x, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log2_sup_ratio(self, x) -> np.ndarray:
        raise NotImplementedError

    def kl(self, x) -> np.ndarray:
        raise NotImplementedError


class DiscreteChannel(TargetChannel):
    discrete = True

    def __init__(self, kernel: Kernel, reference: Pmf):
        if kernel.nout != reference.n:
            raise ValueError("kernel output alphabet and reference differ in size")
        zero = reference.mass <= 0
        if np.any(kernel.rows[:, zero] > 0):
            raise ValueError("kernel puts mass where the reference has none; "
                             "the density ratio is unbounded")
        self.kernel = kernel
        self.reference = reference
        with np.errstate(divide="ignore"):
            table = np.log2(kernel.rows) - np.log2(np.where(zero, 1.0, reference.mass))
        self._log_ratio = np.where(kernel.rows > 0, table, -np.inf)
        self._log_sup = self._log_ratio.max(axis=1)
        self._cdf = np.cumsum(reference.mass)
        self._last = int(np.flatnonzero(~zero)[-1])

    def sample_reference(self, u):
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, self._last)

    def log2_ratio(self, x, y):
        x = np.asarray(x)
        return self._log_ratio[x[:, None] if y.ndim == 2 else x, y]

    def log2_sup_ratio(self, x):
        return self._log_sup[np.asarray(x)]

    def kl(self, x):
        x = np.atleast_1d(np.asarray(x))
        return row_divergences(self.kernel.rows[x], self.reference.mass)


class GaussianChannel(TargetChannel):
    """Yhat | x ~ N(coef . x + offset, var) against reference N(ref_mean, ref_var).

    The density ratio is bounded only when ref_var > var; its supremum is
    sqrt(ref_var/var) * exp((m - ref_mean)^2 / (2 (ref_var - var))).
    """

    def __init__(self, coef, offset: float, var: float, ref_mean: float, ref_var: float):
        if not var > 0:
            raise ValueError("conditional variance must be positive")
        if not ref_var > var:
            raise ValueError("reference variance must exceed the conditional variance")
        self.coef = np.atleast_1d(np.asarray(coef, dtype=float))
        self.offset = float(offset)
        self.var = float(var)
        self.ref_mean = float(ref_mean)
        self.ref_var = float(ref_var)

    def mean(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim <= 1 and self.coef.size == 1:
            return self.coef[0] * x + self.offset
        return np.atleast_2d(x) @ self.coef + self.offset

    def sample_reference(self, u):
        return self.ref_mean + math.sqrt(self.ref_var) * ndtri(u)

    def log2_ratio(self, x, y):
        m = self.mean(x)
        if y.ndim == 2:
            m = m[:, None]
        ln = (0.5 * math.log(self.ref_var / self.var) - (y - m) ** 2 / (2 * self.var)
              + (y - self.ref_mean) ** 2 / (2 * self.ref_var))
        return ln / LN2

    def log2_sup_ratio(self, x):
        m = self.mean(x)
        ln = 0.5 * math.log(self.ref_var / self.var) + (m - self.ref_mean) ** 2 / (
            2 * (self.ref_var - self.var))
        return ln / LN2

    def kl(self, x):
        m = np.atleast_1d(self.mean(x))
        ln = 0.5 * (math.log(self.ref_var / self.var)
                    + (self.var + (m - self.ref_mean) ** 2) / self.ref_var - 1.0)
        return ln / LN2


class ConstantChannel(TargetChannel):
    """Deterministic output equal to its own reference; K is always 1."""

    def __init__(self, value):
        self.value = value

    def sample_reference(self, u):
        return np.full(np.shape(u), self.value)

    def log2_ratio(self, x, y):
        return np.zeros(np.shape(y))

    def log2_sup_ratio(self, x):
        return np.zeros(len(np.atleast_1d(x)))

    def kl(self, x):
        return np.zeros(len(np.atleast_1d(x)))


# --- encoder / decoder -----------------------------------------------------------

class PFRBudgetError(RuntimeError):
    """Raised when the candidate budget runs out before the argmin is certified."""

    def __init__(self, examined: int, pending: int, best_log2_score: float):
        super().__init__(f"{pending} round(s) unresolved after {examined} candidates "
                         f"(best log2 score {best_log2_score:.4g})")
        self.examined = examined
        self.pending = pending
        self.best_log2_score = best_log2_score


def encode_batch(x, ch: TargetChannel, seeds, budget: int = MAX_CANDIDATES,
                 first_block: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``pfr_encode`` over rounds with inputs ``x[r]`` and seeds ``seeds[r]``.

    Candidates are scanned in growing blocks. A round stops once the next
    arrival time exceeds best_score * sup_y r_x(y): no later candidate can
    then score lower, so the returned K is the exact argmin over the whole
    infinite stream. Ties go to the smaller index.
    """
    seeds = _as_u64(np.atleast_1d(seeds))
    n = seeds.size
    x = np.asarray(x)
    if x.ndim == 0 or x.shape[0] != n:
        raise ValueError(f"need one input per seed: got {x.shape} inputs for {n} seeds")
    log_sup = np.broadcast_to(ch.log2_sup_ratio(x), (n,))
    best = np.full(n, np.inf)
    best_k = np.zeros(n, dtype=np.int64)
    best_y = np.zeros(n, dtype=int if ch.discrete else float)
    t_last = np.zeros(n)
    active = np.arange(n)
    start, block = 1, first_block
    while active.size:
        if start > budget:
            raise PFRBudgetError(start - 1, active.size, float(np.min(best[active])))
        idx = np.arange(start, start + block, dtype=np.int64)
        s = seeds[active, None]
        arrivals = t_last[active, None] + np.cumsum(-np.log(stream_uniforms(s, idx, 0)), axis=1)
        cand = ch.sample_reference(stream_uniforms(s, idx, 1))
        score = np.log2(arrivals) - ch.log2_ratio(x[active], cand)
        j = np.argmin(score, axis=1)
        rows = np.arange(active.size)
        bs = score[rows, j]
        better = bs < best[active]
        upd = active[better]
        best[upd] = bs[better]
        best_k[upd] = idx[j[better]]
        best_y[upd] = cand[rows[better], j[better]]
        t_last[active] = arrivals[:, -1]
        done = np.log2(arrivals[:, -1]) >= best[active] + log_sup[active]
        active = active[~done]
        start += block
        block = min(2 * block, 4096)
    return best_k, best_y


def decode_batch(k, ch: TargetChannel, seeds) -> np.ndarray:
    """Candidate values Y_K for each (K, seed) pair; x is never needed."""
    return ch.sample_reference(stream_uniforms(_as_u64(np.atleast_1d(seeds)),
                                               np.atleast_1d(k), 1))


def pfr_encode(x, ch: TargetChannel, w: CommonRandomness):
    """Return (K, yhat) for a single input. yhat ~ P(.|x) exactly over W."""
    k, y = encode_batch(np.asarray([x]), ch, [w.seed])
    return int(k[0]), y[0].item()


def pfr_decode(k: int, ch: TargetChannel, w: CommonRandomness):
    return decode_batch([k], ch, [w.seed])[0].item()


# --- schemes and Monte Carlo -----------------------------------------------------

@dataclass
class Scheme:
    """Descriptor/estimator pair built on one target channel and a shared seed."""

    channel: TargetChannel
    lam: float
    randomness: CommonRandomness = field(default_factory=lambda: CommonRandomness(0))

    def describe(self, x, round: int = 0) -> str:
        k, _ = pfr_encode(x, self.channel, self.randomness.round(round))
        return elias_delta_encode(k)

    def estimate(self, bits: str, round: int = 0):
        k, _ = elias_delta_decode(bits)
        return pfr_decode(k, self.channel, self.randomness.round(round))


@dataclass(frozen=True)
class RateRiskPoint:
    rate_bits: float
    risk: float
    n_samples: int
    stderr_rate: float
    stderr_risk: float
    mean_log2_k: float = float("nan")

    CSV_HEADER = ("lambda", "rate_bits", "stderr_rate", "risk", "stderr_risk", "n")

    def cost(self, lam: float) -> float:
        return self.risk + lam * self.rate_bits

    def csv_row(self, lam: float) -> tuple:
        return (lam, self.rate_bits, self.stderr_rate, self.risk, self.stderr_risk,
                self.n_samples)


class _Moments:
    """Mergeable running sums for the Monte Carlo accumulators."""

    def __init__(self, width: int):
        self.n = 0
        self.s1 = np.zeros(width)
        self.s2 = np.zeros(width)

    def add(self, cols: np.ndarray) -> None:
        self.n += cols.shape[0]
        self.s1 += cols.sum(axis=0)
        self.s2 += (cols ** 2).sum(axis=0)

    def merge(self, other: _Moments) -> _Moments:
        self.n += other.n
        self.s1 += other.s1
        self.s2 += other.s2
        return self

    def mean_and_stderr(self):
        mean = self.s1 / self.n
        var = np.maximum(self.s2 / self.n - mean ** 2, 0.0) * self.n / max(self.n - 1, 1)
        return mean, np.sqrt(var / self.n)


def sample_joint(P: FiniteJoint, rng: np.random.Generator, n: int):
    flat = rng.choice(P.nx * P.ny, size=n, p=P.pmf.ravel())
    return flat // P.ny, flat % P.ny


LossFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _loss_fn(loss) -> LossFn:
    if loss is None or loss == "squared":
        return lambda yhat, y: (np.asarray(yhat, float) - y) ** 2
    if isinstance(loss, LossMatrix):
        return lambda yhat, y: loss.values[yhat, y]
    if callable(loss):
        return loss
    raise ValueError(f"unsupported loss {loss!r}")


def run_one_shot(scheme: Scheme, source, loss=None, n: int = 100_000, seed: int = 0,
                 chunk: int = 1 << 14, workers: int = 1) -> RateRiskPoint:
    """Monte Carlo estimate of (E|M|, E loss) for ``scheme`` under ``source``.

    ``source`` is a FiniteJoint or any object with ``sample(rng, n) -> (x, y)``.
    Round r uses data drawn from ``seed`` and common randomness
    ``scheme.randomness.round(r)``, so rounds are i.i.d. and reproducible for
    any chunking or worker count.
    """
    if n < 1:
        raise ValueError("n must be positive")
    lossf = _loss_fn(loss)
    bounds = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    data_seeds = np.random.SeedSequence(seed).spawn(len(bounds))

    def work(i):
        lo, hi = bounds[i]
        rng = np.random.default_rng(data_seeds[i])
        if isinstance(source, FiniteJoint):
            x, y = sample_joint(source, rng, hi - lo)
        else:
            x, y = source.sample(rng, hi - lo)
        seeds = split_seeds(scheme.randomness.seed, np.arange(lo, hi))
        k, yhat_enc = encode_batch(x, scheme.channel, seeds)
        yhat = decode_batch(k, scheme.channel, seeds)
        if not np.array_equal(yhat, yhat_enc):
            raise RuntimeError("decoder output differs from the encoder's selection")
        acc = _Moments(3)
        acc.add(np.column_stack([elias_delta_length(k), lossf(yhat, y), np.log2(k)]))
        return acc

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, range(len(bounds))))
    else:
        parts = [work(i) for i in range(len(bounds))]
    total = parts[0]
    for p in parts[1:]:
        total.merge(p)
    mean, se = total.mean_and_stderr()
    return RateRiskPoint(rate_bits=float(mean[0]), risk=float(mean[1]), n_samples=total.n,
                         stderr_rate=float(se[0]), stderr_risk=float(se[1]),
                         mean_log2_k=float(mean[2]))


class ElogKCheck(NamedTuple):
    elogk: float
    kl: float
    stderr: float

    def holds(self, slack: float = 1.6, sigmas: float = 3.0) -> bool:
        return self.elogk <= self.kl + slack + sigmas * self.stderr


def verify_elogk_bound(ch: TargetChannel, x, trials: int, seed: int) -> ElogKCheck:
    """Monte Carlo E[log2 K] at a fixed input next to the exact divergence."""
    seeds = split_seeds(seed, np.arange(trials))
    xs = np.repeat(np.asarray([x]), trials, axis=0)
    k, _ = encode_batch(xs, ch, seeds)
    lk = np.log2(k)
    se = float(lk.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return ElogKCheck(float(lk.mean()), float(ch.kl(np.asarray([x]))[0]), se)


def mean_divergence(ch: TargetChannel, P: FiniteJoint) -> float:
    """Average over x ~ P of D(P(.|x) || reference), in bits."""
    px = P.px
    s = np.flatnonzero(px > 0)
    return float(px[s] @ ch.kl(s))


def exactness_pvalue(ch: DiscreteChannel, x: int, trials: int, seed: int) -> float:
    """Chi-square p-value of decoded outputs at input x against the target row.

    Outputs with zero target mass must never appear; if one does the p-value
    is 0.
    """
    seeds = split_seeds(seed, np.arange(trials))
    k, _ = encode_batch(np.full(trials, x), ch, seeds)
    yhat = decode_batch(k, ch, seeds)
    row = ch.kernel.rows[x]
    counts = np.bincount(yhat, minlength=row.size)
    pos = row > 0
    if counts[~pos].any():
        return 0.0
    if pos.sum() == 1:
        return 1.0
    return float(chisquare(counts[pos], trials * row[pos]).pvalue)


__all__ = [
    "CommonRandomness", "TargetChannel", "DiscreteChannel", "GaussianChannel",
    "ConstantChannel", "Scheme", "RateRiskPoint", "PFRBudgetError", "pfr_encode",
    "pfr_decode", "encode_batch", "decode_batch", "run_one_shot", "verify_elogk_bound",
    "split_seeds", "stream_uniforms", "sample_joint", "mean_divergence", "exactness_pvalue",
]
