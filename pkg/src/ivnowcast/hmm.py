"""Gaussian-emission hidden Markov model for implied volatility regimes.

Forward-backward, Viterbi and Baum-Welch, all in log space. Fitted states
are reported as ordinal regimes by ascending emission mean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import logsumexp

VARIANCE_FLOOR = 1e-6
REGIME_NAMES = ("low", "medium", "high", "very_high")
_LOG_2PI = math.log(2.0 * math.pi)


class DegenerateModel(ValueError):
    pass


class TooFewObservations(ValueError):
    pass


@dataclass
class GaussianHmm:
    pi: np.ndarray
    A: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    seed: int | None = None
    history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        k = len(self.means)
        if self.pi.shape != (k,) or self.A.shape != (k, k) or self.variances.shape != (k,):
            raise ValueError("inconsistent HMM parameter shapes")

    @property
    def n_states(self) -> int:
        return len(self.means)

    def check(self):
        if np.any(~(self.variances > 0)):
            raise DegenerateModel(f"non-positive emission variance: {self.variances}")
        if abs(self.pi.sum() - 1.0) > 1e-9 or np.any(self.pi < 0):
            raise DegenerateModel("initial distribution does not sum to 1")
        if np.any(np.abs(self.A.sum(axis=1) - 1.0) > 1e-9) or np.any(self.A < 0):
            raise DegenerateModel("transition matrix is not row-stochastic")

    def log_emissions(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)[:, None]
        return -0.5 * (_LOG_2PI + np.log(self.variances) + (x - self.means) ** 2 / self.variances)

    def order(self) -> np.ndarray:
        """ordinal[state] = rank of the state's mean (0 = lowest)."""
        ranks = np.empty(self.n_states, dtype=np.int64)
        ranks[np.argsort(self.means, kind="stable")] = np.arange(self.n_states)
        return ranks

    def permuted(self, perm) -> "GaussianHmm":
        """Same model with state ``i`` of the result being state ``perm[i]`` of this one."""
        p = np.asarray(perm)
        return GaussianHmm(self.pi[p], self.A[np.ix_(p, p)], self.means[p], self.variances[p], self.seed, list(self.history))

    def sorted(self) -> "GaussianHmm":
        return self.permuted(np.argsort(self.means, kind="stable"))

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "pi": self.pi.tolist(),
            "A": self.A.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianHmm":
        return cls(d["pi"], d["A"], d["means"], d["variances"], d.get("seed"))


def _logs(model: GaussianHmm):
    with np.errstate(divide="ignore"):
        return np.log(model.pi), np.log(model.A)


def _forward(log_pi, log_A, log_b):
    T, K = log_b.shape
    alpha = np.empty((T, K))
    alpha[0] = log_pi + log_b[0]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + log_A, axis=0) + log_b[t]
    return alpha


def _backward(log_A, log_b):
    T, K = log_b.shape
    beta = np.zeros((T, K))
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(log_A + (log_b[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def _validate_obs(observations) -> np.ndarray:
    x = np.asarray(observations, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("observations are empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("observations contain non-finite values")
    return x


def log_likelihood(model: GaussianHmm, observations) -> float:
    model.check()
    x = _validate_obs(observations)
    log_pi, log_A = _logs(model)
    alpha = _forward(log_pi, log_A, model.log_emissions(x))
    return float(logsumexp(alpha[-1]))


def posteriors(model: GaussianHmm, observations) -> np.ndarray:
    """Smoothed state probabilities gamma[t, k] from forward-backward."""
    model.check()
    x = _validate_obs(observations)
    log_pi, log_A = _logs(model)
    log_b = model.log_emissions(x)
    alpha = _forward(log_pi, log_A, log_b)
    beta = _backward(log_A, log_b)
    g = alpha + beta
    return np.exp(g - logsumexp(g, axis=1, keepdims=True))


def viterbi(model: GaussianHmm, observations) -> tuple[np.ndarray, float]:
    """Most probable state path and its joint log-probability.

    Ties prefer the lower state index, both for back-pointers and the final state.
    """
    model.check()
    x = _validate_obs(observations)
    log_pi, log_A = _logs(model)
    log_b = model.log_emissions(x)
    T, K = log_b.shape
    delta = log_pi + log_b[0]
    back = np.zeros((T, K), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + log_A
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(K)] + log_b[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[path[-1]])


def initial_model(x: np.ndarray, n_states: int, seed: int = 42) -> GaussianHmm:
    """Means at evenly spaced observation percentiles, pooled variance, sticky transitions."""
    q = (2 * np.arange(n_states) + 1) / (2 * n_states) * 100
    means = np.percentile(x, q)
    if len(np.unique(means)) < n_states:
        # repeated quantiles would leave states identical forever under EM
        rng = np.random.default_rng(seed)
        means = means + rng.normal(scale=1e-3 * (x.std() + 1.0), size=n_states)
    var = max(float(x.var()), VARIANCE_FLOOR)
    if n_states == 1:
        A = np.ones((1, 1))
    else:
        A = np.full((n_states, n_states), 0.1 / (n_states - 1))
        np.fill_diagonal(A, 0.9)
    return GaussianHmm(np.full(n_states, 1.0 / n_states), A, means, np.full(n_states, var), seed)


def _e_step_scaled(model: GaussianHmm, x: np.ndarray):
    """Forward-backward with per-step normalisation; ``None`` if anything underflows."""
    log_b = model.log_emissions(x)
    shift = log_b.max(axis=1)
    b = np.exp(log_b - shift[:, None])
    A = model.A
    T, K = b.shape
    alpha = np.empty((T, K))
    c = np.empty(T)
    a = model.pi * b[0]
    for t in range(T):
        if t:
            a = (alpha[t - 1] @ A) * b[t]
        c[t] = a.sum()
        if not c[t] > 0:
            return None
        alpha[t] = a / c[t]
    beta = np.empty((T, K))
    beta[-1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = A @ (b[t + 1] * beta[t + 1]) / c[t + 1]
    ll = float(np.log(c).sum() + shift.sum())
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi = (alpha[:-1].T @ (b[1:] * beta[1:] / c[1:, None])) * A
    if not (np.isfinite(ll) and np.all(np.isfinite(xi))):
        return None
    return ll, gamma, xi


def _e_step_log(model: GaussianHmm, x: np.ndarray):
    log_pi, log_A = _logs(model)
    log_b = model.log_emissions(x)
    alpha = _forward(log_pi, log_A, log_b)
    beta = _backward(log_A, log_b)
    ll = float(logsumexp(alpha[-1]))
    g = alpha + beta
    gamma = np.exp(g - logsumexp(g, axis=1, keepdims=True))
    log_xi = alpha[:-1, :, None] + log_A[None, :, :] + (log_b[1:] + beta[1:])[:, None, :] - ll
    xi = np.exp(logsumexp(log_xi, axis=0))
    return ll, gamma, xi


def fit_baum_welch(
    observations,
    n_states: int = 4,
    n_iter: int = 100,
    seed: int = 42,
    tol: float = 1e-6,
    init: GaussianHmm | None = None,
) -> GaussianHmm:
    """Baum-Welch EM. Stops after ``n_iter`` M-steps or once the gain drops below ``tol``.

    ``model.history`` holds the log-likelihood evaluated before each M-step
    (plus the final evaluation when stopping on tolerance).
    """
    x = _validate_obs(observations)
    if len(x) <= n_states:
        raise TooFewObservations(f"need more than {n_states} observations, got {len(x)}")
    model = init if init is not None else initial_model(x, n_states, seed)
    history: list[float] = []
    for _ in range(n_iter):
        step = _e_step_scaled(model, x) or _e_step_log(model, x)
        ll, gamma, xi = step
        if history and ll - history[-1] < tol:
            history.append(ll)
            break
        history.append(ll)

        pi = gamma[0] / gamma[0].sum()
        rows = xi.sum(axis=1, keepdims=True)
        A = np.where(rows > 0, xi / np.where(rows > 0, rows, 1.0), model.A)
        A = A / A.sum(axis=1, keepdims=True)
        occ = gamma.sum(axis=0)
        safe = occ > 1e-300
        denom = np.where(safe, occ, 1.0)
        means = np.where(safe, (gamma * x[:, None]).sum(axis=0) / denom, model.means)
        var = (gamma * (x[:, None] - means) ** 2).sum(axis=0) / denom
        var = np.where(safe, np.maximum(var, VARIANCE_FLOOR), model.variances)
        model = GaussianHmm(pi, A, means, var, seed)
    model.history = history
    return model


@dataclass
class RegimePath:
    dates: pd.DatetimeIndex
    states: np.ndarray  # ordinal 0..K-1, 0 = lowest mean
    in_sample: np.ndarray

    @property
    def labels(self) -> list[str]:
        return [regime_name(s, int(self.states.max(initial=0)) + 1) for s in self.states]

    def to_frame(self, symbol: str = "", n_states: int = 4) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "symbol": symbol,
                "date": self.dates.strftime("%Y-%m-%d"),
                "regime": [regime_name(s, n_states) for s in self.states],
                "in_sample": self.in_sample.astype(int),
            }
        )


def regime_name(ordinal: int, n_states: int = 4) -> str:
    if n_states == len(REGIME_NAMES):
        return REGIME_NAMES[ordinal]
    return f"regime_{ordinal}"


def fit_regime_model(
    iv: pd.Series,
    train_end,
    n_states: int = 4,
    n_iter: int = 100,
    seed: int = 42,
) -> GaussianHmm:
    """Fit on observations dated on or before ``train_end`` only."""
    iv = iv.sort_index()
    train = iv[iv.index <= pd.Timestamp(train_end)]
    if len(train) <= n_states:
        raise TooFewObservations(
            f"{len(train)} observation(s) on or before {pd.Timestamp(train_end).date()}, need > {n_states}"
        )
    return fit_baum_welch(train.to_numpy(dtype=float), n_states, n_iter, seed).sorted()


def assign_regimes(model: GaussianHmm, iv: pd.Series, train_end) -> RegimePath:
    iv = iv.sort_index()
    states, _ = viterbi(model, iv.to_numpy(dtype=float))
    dates = pd.DatetimeIndex(iv.index)
    return RegimePath(dates, model.order()[states], np.asarray(dates <= pd.Timestamp(train_end)))


def save_model(model: GaussianHmm, path: str | Path, train_start=None, train_end=None) -> None:
    d = model.to_dict()
    d["n_iter_run"] = max(len(model.history) - 1, 0)
    d["log_likelihood"] = model.history[-1] if model.history else None
    d["train_start"] = None if train_start is None else str(pd.Timestamp(train_start).date())
    d["train_end"] = None if train_end is None else str(pd.Timestamp(train_end).date())
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def load_model(path: str | Path) -> GaussianHmm:
    return GaussianHmm.from_dict(json.loads(Path(path).read_text()))
