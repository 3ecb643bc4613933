"""Exact t-SNE.

Gaussian conditionals calibrated to a target perplexity are symmetrized into
a joint P; the map uses a Student-t (one degree of freedom) kernel for Q.
The KL(P || Q) objective is minimized by momentum gradient descent with
per-parameter gains and an early-exaggeration phase.  Everything is O(n^2)
and dense, which is fine for a few hundred regions.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

log = logging.getLogger(__name__)

FLOOR = 1e-12
ENTROPY_TOL = 1e-5
MAX_BISECTIONS = 50
MAX_BRACKET_STEPS = 100


class TsneDivergenceError(RuntimeError):
    def __init__(self, iteration: int, learning_rate: float):
        self.iteration = iteration
        self.learning_rate = learning_rate
        super().__init__(
            f"t-SNE diverged at iteration {iteration} (learning rate {learning_rate}); "
            "try a smaller --lr"
        )


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    exaggeration_factor: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    max_iters: int = 1000
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch_iter: int = 250
    seed: int = 0
    min_gain: float = 0.01

    def __post_init__(self):
        if not self.perplexity > 0:
            raise ValueError("perplexity must be > 0")
        if self.exaggeration_factor < 1:
            raise ValueError("exaggeration_factor must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_iters < 0 or self.exaggeration_iters < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.exaggeration_iters > self.max_iters:
            raise ValueError("exaggeration_iters must not exceed max_iters")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RowCalibration:
    sigma: float
    probs: np.ndarray
    entropy_bits: float
    converged: bool

    @property
    def perplexity(self) -> float:
        return 2.0 ** self.entropy_bits


@dataclass(frozen=True)
class AffinityMatrix:
    p: np.ndarray
    sigmas: np.ndarray | None = None
    unconverged_rows: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.p.shape[0]


@dataclass
class Embedding:
    coords: np.ndarray
    region_ids: tuple[str, ...]
    cost_trace: list[tuple[int, float]] = field(default_factory=list)
    config_used: TsneConfig | None = None
    method: str = "tsne"
    unconverged_rows: tuple[int, ...] = ()

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("embedding has non-finite coordinates")

    def kl_at(self, iteration: int) -> float:
        for it, kl in self.cost_trace:
            if it == iteration:
                return kl
        raise KeyError(f"no KL recorded at iteration {iteration}")

    @property
    def final_kl(self) -> float | None:
        return self.cost_trace[-1][1] if self.cost_trace else None


def _as_array(x) -> np.ndarray:
    values = getattr(x, "values", x)
    if isinstance(values, AffinityMatrix):
        values = values.p
    return np.asarray(getattr(values, "p", values), dtype=float)


def pairwise_sq_dists(x) -> np.ndarray:
    """Squared Euclidean distances between rows; exactly symmetric."""
    x = _as_array(x)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a 2-D array with at least 2 rows")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    n, d = x.shape
    out = np.empty((n, n))
    # bound the (rows, n, d) temporary to a few million floats
    chunk = max(1, 4_000_000 // max(1, n * d))
    for start in range(0, n, chunk):
        diff = x[start:start + chunk, None, :] - x[None, :, :]
        out[start:start + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    # mirror the upper triangle so symmetry is exact regardless of SIMD reduction order
    out = np.triu(out, 1)
    return out + out.T


def _row_entropy(shifted: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    # shifted = distances minus their minimum, so the largest weight is exactly 1
    w = np.exp(-shifted * beta)
    z = w.sum()
    probs = w / z
    h_nats = math.log(z) + beta * float(np.dot(shifted, probs))
    return h_nats / math.log(2.0), probs


def calibrate_sigma(dist_row, perplexity: float, tol: float = ENTROPY_TOL) -> RowCalibration:
    """Find the Gaussian bandwidth whose conditional row hits ``perplexity``.

    ``dist_row`` holds the squared distances from one point to the n-1
    others.  The bandwidth is bracketed by doubling/halving and then
    bisected (at most 50 steps).  If the target entropy cannot be reached
    the closest row found is returned with ``converged=False``.
    """
    d = np.asarray(dist_row, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("dist_row must be a nonempty 1-D array")
    if not np.any(d > 0):
        raise ValueError("calibrate_sigma needs at least one positive distance")
    if perplexity <= 0:
        raise ValueError("perplexity must be positive")
    target = math.log2(perplexity)
    shifted = d - d.min()

    if not np.any(shifted > 0):
        # equidistant: every bandwidth gives the uniform row
        probs = np.full(d.size, 1.0 / d.size)
        h = math.log2(d.size)
        return RowCalibration(math.sqrt(float(d.mean())), probs, h, abs(h - target) <= tol)

    def at(sigma: float):
        h, probs = _row_entropy(shifted, 1.0 / (2.0 * sigma * sigma))
        return h, probs

    sigma = math.sqrt(float(np.median(d[d > 0])))
    h, probs = at(sigma)
    best = (abs(h - target), sigma, h, probs)

    def track(s, hh, pp):
        nonlocal best
        if abs(hh - target) < best[0]:
            best = (abs(hh - target), s, hh, pp)

    lo = hi = None
    for _ in range(MAX_BRACKET_STEPS):
        if abs(h - target) <= tol:
            return RowCalibration(sigma, probs, h, True)
        if h > target:
            hi = sigma
            if lo is not None:
                break
            sigma /= 2.0
        else:
            lo = sigma
            if hi is not None:
                break
            sigma *= 2.0
        h, probs = at(sigma)
        track(sigma, h, probs)
    else:
        _, sigma, h, probs = best
        return RowCalibration(sigma, probs, h, abs(h - target) <= tol)

    for _ in range(MAX_BISECTIONS):
        sigma = 0.5 * (lo + hi)
        h, probs = at(sigma)
        track(sigma, h, probs)
        if abs(h - target) <= tol:
            return RowCalibration(sigma, probs, h, True)
        if h > target:
            hi = sigma
        else:
            lo = sigma
    _, sigma, h, probs = best
    return RowCalibration(sigma, probs, h, abs(h - target) <= tol)


def conditional_affinities(x, perplexity: float) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    """Row-stochastic p_{j|i} matrix, per-row sigmas and unconverged row ids."""
    dist = pairwise_sq_dists(x)
    n = dist.shape[0]
    if perplexity >= n:
        raise ValueError(f"perplexity must be < n (got {perplexity} with n={n})")
    cond = np.zeros((n, n))
    sigmas = np.empty(n)
    bad = []
    for i in range(n):
        others = np.r_[0:i, i + 1:n]
        cal = calibrate_sigma(dist[i, others], perplexity)
        cond[i, others] = cal.probs
        sigmas[i] = cal.sigma
        if not cal.converged:
            bad.append(i)
    if bad:
        log.warning(
            "perplexity %.3g not attainable for %d of %d rows; using nearest achievable",
            perplexity, len(bad), n,
        )
    return cond, sigmas, tuple(bad)


def joint_affinities(x, perplexity: float) -> AffinityMatrix:
    cond, sigmas, bad = conditional_affinities(x, perplexity)
    n = cond.shape[0]
    p = (cond + cond.T) / (2.0 * n)
    p = np.maximum(p, FLOOR)
    np.fill_diagonal(p, 0.0)
    return AffinityMatrix(p, sigmas, bad)


def _student_t(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = 1.0 / (1.0 + pairwise_sq_dists(y))
    np.fill_diagonal(w, 0.0)
    q = np.maximum(w / w.sum(), FLOOR)
    np.fill_diagonal(q, 0.0)
    return q, w


def low_dim_affinities(y) -> AffinityMatrix:
    q, _ = _student_t(_as_array(y))
    return AffinityMatrix(q)


def kl_cost(P, Q) -> float:
    p, q = _as_array(P), _as_array(Q)
    if p.shape != q.shape:
        raise ValueError("P and Q must have the same shape")
    off = ~np.eye(p.shape[0], dtype=bool)
    pp, qq = p[off], q[off]
    return float(np.sum(pp * np.log(pp / qq)))


def gradient(P, Q, y) -> np.ndarray:
    """dKL/dy = 4 sum_j (p_ij - q_ij) (y_i - y_j) / (1 + |y_i - y_j|^2)."""
    p, q, y = _as_array(P), _as_array(Q), _as_array(y)
    if p.shape != q.shape or p.shape[0] != y.shape[0]:
        raise ValueError("shape mismatch between P, Q and y")
    w = 1.0 / (1.0 + pairwise_sq_dists(y))
    np.fill_diagonal(w, 0.0)
    return _gradient(p, q, w, y)


def _gradient(p, q, w, y):
    pqw = (p - q) * w
    return 4.0 * (pqw.sum(axis=1)[:, None] * y - pqw @ y)


def run_tsne(fm, cfg: TsneConfig = TsneConfig(), region_ids=None, trace_every: int = 50) -> Embedding:
    """Embed the rows of ``fm`` in two dimensions.

    KL(P || Q) against the un-exaggerated P is recorded every
    ``trace_every`` iterations (iteration i means the map after i updates)
    and after the last update.
    """
    x = _as_array(fm)
    n = x.shape[0]
    if region_ids is None:
        region_ids = getattr(fm, "region_ids", tuple(str(i) for i in range(n)))
    if cfg.perplexity >= n:
        raise ValueError(f"perplexity must be < n (got {cfg.perplexity} with n={n})")

    aff = joint_affinities(x, cfg.perplexity)
    P = aff.p
    P_exag = P * cfg.exaggeration_factor

    rng = np.random.default_rng(cfg.seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    trace: list[tuple[int, float]] = []

    # overflow is detected explicitly below and reported as divergence
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for it in range(cfg.max_iters):
            Q, W = _student_t(y)
            if it % trace_every == 0:
                kl = kl_cost(P, Q)
                if not math.isfinite(kl):
                    raise TsneDivergenceError(it, cfg.learning_rate)
                trace.append((it, kl))
            grad = _gradient(P_exag if it < cfg.exaggeration_iters else P, Q, W, y)
            momentum = cfg.momentum_early if it < cfg.momentum_switch_iter else cfg.momentum_late
            same_sign = (grad > 0) == (update > 0)
            gains = np.where(same_sign, gains * 0.8, gains + 0.2)
            np.maximum(gains, cfg.min_gain, out=gains)
            update = momentum * update - cfg.learning_rate * gains * grad
            y = y + update
            if not np.all(np.isfinite(y)):
                raise TsneDivergenceError(it, cfg.learning_rate)

        Q, _ = _student_t(y)
        kl = kl_cost(P, Q)
        if not math.isfinite(kl):
            raise TsneDivergenceError(cfg.max_iters, cfg.learning_rate)
    if not trace or trace[-1][0] != cfg.max_iters:
        trace.append((cfg.max_iters, kl))
    return Embedding(y, tuple(region_ids), trace, cfg, "tsne", aff.unconverged_rows)
