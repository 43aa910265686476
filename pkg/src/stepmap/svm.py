"""Class-weighted RBF support vector machine trained by SMO."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

TAU = 1e-12


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    sq = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def median_gamma(Z) -> float:
    """Inverse median squared pairwise distance."""
    Z = np.asarray(Z, float)
    sq = np.sum((Z[:, None, :] - Z[None, :, :]) ** 2, axis=-1)
    d = sq[np.triu_indices(len(Z), k=1)]
    d = d[d > 0]
    return 1.0 / float(np.median(d)) if d.size else 1.0


@dataclass
class SMOResult:
    alpha: np.ndarray
    bias: float
    iterations: int
    gap: float


def dual_objective(alpha, y, K) -> float:
    """``0.5 a^T Q a - sum(a)`` with ``Q = (y y^T) * K``; SMO minimizes this."""
    ay = alpha * y
    return float(0.5 * ay @ K @ ay - alpha.sum())


def smo(K, y, C, tol: float = 1e-3, max_iter: int = 1_000_000) -> SMOResult:
    """Solve the soft-margin dual with per-sample upper bounds ``C``.

    Working pairs are chosen by maximal violation for the first index and
    second-order gain for the second; stops when the KKT gap is below ``tol``.
    """
    y = np.asarray(y, float)
    C = np.broadcast_to(np.asarray(C, float), y.shape).copy()
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(Q).copy()
    it = 0
    gap = np.inf
    while it < max_iter:
        # I_up / I_low membership
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * grad
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        m = score[i]
        M = np.min(score[low])
        gap = m - M
        if gap < tol:
            break
        cand = low & (score < m)
        idx = np.flatnonzero(cand)
        b = m - score[idx]
        a = diag[i] + diag[idx] - 2.0 * y[i] * y[idx] * Q[i, idx]
        a = np.where(a > 0, a, TAU)
        j = int(idx[np.argmax(b * b / a)])

        # step t along alpha_i += y_i t, alpha_j -= y_j t keeps y^T alpha fixed
        aij = diag[i] + diag[j] - 2.0 * y[i] * y[j] * Q[i, j]
        aij = aij if aij > 0 else TAU
        t = (-y[i] * grad[i] + y[j] * grad[j]) / aij
        ub_i = C[i] - alpha[i] if y[i] > 0 else alpha[i]
        ub_j = alpha[j] if y[j] > 0 else C[j] - alpha[j]
        t = min(t, ub_i, ub_j)
        ai_old, aj_old = alpha[i], alpha[j]
        ai = min(max(ai_old + y[i] * t, 0.0), C[i])
        aj = min(max(aj_old - y[j] * t, 0.0), C[j])
        # land exactly on a bound so the index leaves the working sets
        if t == ub_i:
            ai = C[i] if y[i] > 0 else 0.0
        if t == ub_j:
            aj = 0.0 if y[j] > 0 else C[j]
        di, dj = ai - ai_old, aj - aj_old
        grad += Q[:, i] * di + Q[:, j] * dj
        alpha[i], alpha[j] = ai, aj
        it += 1
    else:
        raise RuntimeError(f"SMO did not reach KKT gap {tol} in {max_iter} iterations")

    free = (alpha > 1e-12) & (alpha < C - 1e-12)
    score = -y * grad
    if free.any():
        bias = float(np.mean(score[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = np.max(score[up]) if up.any() else 0.0
        lo = np.min(score[low]) if low.any() else 0.0
        bias = float(0.5 * (hi + lo))
    return SMOResult(alpha, bias, it, float(gap))


@dataclass
class SafeRegionModel:
    support_vectors: np.ndarray   # raw (v0, s_des) coordinates
    dual_coef: np.ndarray         # alpha_i * y_i
    bias: float
    gamma: float
    mean: np.ndarray
    scale: np.ndarray
    class_weights: tuple
    C: float
    v_range: tuple
    s_range: tuple
    tol: float = 1e-3
    iterations: int = 0

    def decision_function(self, X) -> np.ndarray:
        Z = (np.atleast_2d(np.asarray(X, float)) - self.mean) / self.scale
        S = (self.support_vectors - self.mean) / self.scale
        return rbf_kernel(Z, S, self.gamma) @ self.dual_coef + self.bias

    def to_dict(self) -> dict:
        return {"kind": "rbf-svm", "gamma": self.gamma, "bias": self.bias, "C": self.C,
                "class_weights": list(self.class_weights), "tol": self.tol,
                "iterations": self.iterations,
                "mean": self.mean.tolist(), "scale": self.scale.tolist(),
                "v_range": list(self.v_range), "s_range": list(self.s_range),
                "support_vectors": self.support_vectors.tolist(),
                "dual_coef": self.dual_coef.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SafeRegionModel":
        if d.get("kind") != "rbf-svm":
            raise ValueError("not a safe-region model document")
        return cls(np.asarray(d["support_vectors"], float).reshape(-1, 2),
                   np.asarray(d["dual_coef"], float), float(d["bias"]), float(d["gamma"]),
                   np.asarray(d["mean"], float), np.asarray(d["scale"], float),
                   tuple(d["class_weights"]), float(d["C"]), tuple(d["v_range"]),
                   tuple(d["s_range"]), float(d["tol"]), int(d["iterations"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SafeRegionModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_svm(X, labels, class_weights=(1.0, 14.0), C: float = 1.0, gamma: float | None = None,
            tol: float = 1e-3) -> SafeRegionModel:
    """Train on points ``X`` (n x 2) with boolean ``labels`` (True = safe).

    ``class_weights`` are (safe, unsafe) multipliers on ``C``.  Inputs are
    standardized per axis; ``gamma`` defaults to the median heuristic.
    """
    X = np.atleast_2d(np.asarray(X, float))
    lab = np.asarray(labels, bool).ravel()
    if len(X) != len(lab):
        raise ValueError("X and labels differ in length")
    if lab.all() or not lab.any():
        raise ValueError("training data must contain both reachable and unreachable points")
    mean = X.mean(0)
    scale = X.std(0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (X - mean) / scale
    gamma = median_gamma(Z) if gamma is None else float(gamma)
    y = np.where(lab, 1.0, -1.0)
    Ci = C * np.where(lab, class_weights[0], class_weights[1])
    res = smo(rbf_kernel(Z, Z, gamma), y, Ci, tol=tol)
    sv = res.alpha > 1e-12
    return SafeRegionModel(X[sv].copy(), (res.alpha * y)[sv], res.bias, gamma, mean, scale,
                           tuple(float(w) for w in class_weights), float(C),
                           (float(X[:, 0].min()), float(X[:, 0].max())),
                           (float(X[:, 1].min()), float(X[:, 1].max())), tol, res.iterations)
