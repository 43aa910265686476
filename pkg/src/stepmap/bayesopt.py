"""Gaussian-process Bayesian optimization over the unit parameter box."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg
from scipy.stats import norm, qmc

LENGTHSCALES = (0.1, 0.2, 0.5, 1.0)
NOISES = (1e-4, 1e-2)
N_CANDIDATES = 2048


@dataclass(frozen=True)
class BOBudget:
    n_random: int = 100
    n_bayes: int = 70

    def __post_init__(self):
        if self.n_random < 1 or self.n_bayes < 0:
            raise ValueError("need n_random >= 1 and n_bayes >= 0")

    @property
    def total(self) -> int:
        return self.n_random + self.n_bayes


def se_kernel(A, B, lengthscales):
    A = np.asarray(A, float) / lengthscales
    B = np.asarray(B, float) / lengthscales
    sq = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T
    return np.exp(-0.5 * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class GPModel:
    """Exact GP regression on standardized targets with unit signal variance."""

    X: np.ndarray
    y: np.ndarray
    lengthscales: np.ndarray
    noise: float
    y_mean: float
    y_scale: float
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    log_marginal_likelihood: float = 0.0

    def predict(self, Xq, standardized: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of the latent function at ``Xq``."""
        Xq = np.atleast_2d(np.asarray(Xq, float))
        Ks = se_kernel(Xq, self.X, self.lengthscales)
        mean = Ks @ self.alpha
        v = linalg.solve_triangular(self.chol, Ks.T, lower=True)
        var = np.maximum(1.0 - np.sum(v * v, 0), 0.0)
        if standardized:
            return mean, var
        return self.y_mean + self.y_scale * mean, var * self.y_scale**2


def _fit_one(X, ys, ls, noise):
    K = se_kernel(X, X, ls)
    # one retry with ten times the diagonal jitter, then give up
    for jitter in (noise, 10.0 * noise):
        try:
            L = linalg.cholesky(K + jitter * np.eye(len(X)), lower=True)
            break
        except linalg.LinAlgError:
            continue
    else:
        raise linalg.LinAlgError("kernel matrix not positive definite even with jitter")
    alpha = linalg.cho_solve((L, True), ys)
    lml = -0.5 * ys @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * len(X) * np.log(2 * np.pi)
    return L, alpha, jitter, lml


def gp_fit(X, y, lengthscales=LENGTHSCALES, noises=NOISES) -> GPModel:
    """Fit a GP picking the (isotropic lengthscale, noise) pair with the best evidence."""
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float).ravel()
    if len(X) < 1 or len(X) != len(y):
        raise ValueError("need at least one observation with matching X and y")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("observations must be finite")
    y_mean = float(y.mean())
    y_scale = float(y.std()) if len(y) > 1 else 1.0
    if y_scale <= 0:
        y_scale = 1.0
    ys = (y - y_mean) / y_scale
    d = X.shape[1]
    best = None
    for ls in lengthscales:
        for noise in noises:
            L, alpha, used_noise, lml = _fit_one(X, ys, np.full(d, ls), noise)
            if best is None or lml > best[-1]:
                best = (np.full(d, float(ls)), used_noise, L, alpha, lml)
    ls, noise, L, alpha, lml = best
    return GPModel(X=X, y=y, lengthscales=ls, noise=noise, y_mean=y_mean, y_scale=y_scale,
                   chol=L, alpha=alpha, log_marginal_likelihood=float(lml))


def expected_improvement(mean, variance, best):
    """Expected improvement over ``best`` for maximization."""
    mean = np.asarray(mean, float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, float), 0.0))
    gap = mean - best
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, gap / np.where(sigma > 0, sigma, 1.0), 0.0)
        ei = np.where(sigma > 0, gap * norm.cdf(z) + sigma * norm.pdf(z), np.maximum(gap, 0.0))
    return np.maximum(ei, 0.0)


def candidate_points(rng, incumbent, d, n=N_CANDIDATES):
    """Half uniform over the box, half Gaussian clouds around the incumbent."""
    n_global = n // 2
    pts = [rng.random((n_global, d))]
    scales = (0.1, 0.03, 0.01)
    per = (n - n_global) // len(scales)
    for i, s in enumerate(scales):
        m = per if i < len(scales) - 1 else n - n_global - per * (len(scales) - 1)
        pts.append(incumbent + s * rng.standard_normal((m, d)))
    return np.clip(np.vstack(pts), 0.0, 1.0)


@dataclass
class TraceRow:
    iteration: int
    phase: str
    x: np.ndarray
    value: float
    incumbent: float
    seconds: float


def maximize(fn: Callable[[np.ndarray], float], d: int, budget: BOBudget,
             rng: np.random.Generator) -> tuple[np.ndarray, float, list[TraceRow]]:
    """Maximize a black-box ``fn`` over ``[0, 1]^d``.

    Returns the best observed point, its value and the per-evaluation trace.
    """
    halton = qmc.Halton(d=d, scramble=True, seed=rng)
    X = np.empty((budget.total, d))
    y = np.empty(budget.total)
    trace = []
    initial = halton.random(budget.n_random)
    best = -np.inf
    for i in range(budget.total):
        t0 = time.perf_counter()
        if i < budget.n_random:
            x = initial[i]
            phase = "random"
        else:
            gp = gp_fit(X[:i], y[:i])
            inc = X[int(np.argmax(y[:i]))]
            cand = candidate_points(rng, inc, d)
            mu, var = gp.predict(cand)
            x = cand[int(np.argmax(expected_improvement(mu, var, best)))]
            phase = "bayes"
        value = float(fn(x))
        if not np.isfinite(value):
            raise ValueError(f"objective returned non-finite value at {x}")
        X[i], y[i] = x, value
        best = max(best, value)
        trace.append(TraceRow(i, phase, x.copy(), value, best, time.perf_counter() - t0))
    k = int(np.argmax(y))
    return X[k].copy(), float(y[k]), trace
