"""Input probability models, black-box wrappers and built-in benchmarks.

The package estimates ``P(Y > S)`` for a scalar output ``Y = M(X)`` of a
deterministic model ``M`` with random input vector ``X``.  This module
provides the three ingredients: the input law (:class:`Marginal`,
:class:`InputModel`), the model wrapper with exact call accounting
(:class:`BlackBox`) and the failure event (:class:`FailureEvent`).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats
from scipy.linalg import solve_triangular

__all__ = [
    "EvaluationError",
    "Marginal",
    "InputModel",
    "FailureEvent",
    "BlackBox",
    "sample_input",
    "builtin_model",
]

_MARGINAL_KINDS = ("normal", "lognormal", "uniform")


class EvaluationError(RuntimeError):
    """A black-box evaluation could not produce a finite scalar."""


@dataclass(frozen=True)
class Marginal:
    """One-dimensional input distribution.

    Parameters are stored in natural units:

    ``normal``
        ``loc`` is the mean, ``scale`` the standard deviation.
    ``lognormal``
        ``loc`` and ``scale`` are the mean and standard deviation of the
        underlying normal, i.e. ``log X ~ N(loc, scale**2)``.
    ``uniform``
        ``loc`` is the lower edge, ``scale`` the width.
    """

    kind: str
    loc: float
    scale: float

    def __post_init__(self):
        if self.kind not in _MARGINAL_KINDS:
            raise ValueError(f"unknown marginal kind {self.kind!r}, expected one of {_MARGINAL_KINDS}")
        if not (np.isfinite(self.loc) and np.isfinite(self.scale)):
            raise ValueError("marginal parameters must be finite")
        if self.scale <= 0:
            raise ValueError(f"marginal scale must be strictly positive, got {self.scale}")

    def _frozen(self):
        if self.kind == "normal":
            return stats.norm(self.loc, self.scale)
        if self.kind == "lognormal":
            return stats.lognorm(s=self.scale, scale=math.exp(self.loc))
        return stats.uniform(self.loc, self.scale)

    def pdf(self, x):
        return self._frozen().pdf(x)

    def logpdf(self, x):
        return self._frozen().logpdf(x)

    def cdf(self, x):
        return self._frozen().cdf(x)

    def quantile(self, u):
        return self._frozen().ppf(u)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "normal":
            return self.loc + self.scale * rng.standard_normal(n)
        if self.kind == "lognormal":
            return np.exp(self.loc + self.scale * rng.standard_normal(n))
        return self.loc + self.scale * rng.random(n)

    def mean(self) -> float:
        return float(self._frozen().mean())

    def sd(self) -> float:
        """Standard deviation of the variable itself (not of log X)."""
        return float(self._frozen().std())


@dataclass(frozen=True)
class InputModel:
    """Joint law of the input vector.

    ``dependence`` is either ``"independent"`` or ``"gaussian"``.  In the
    gaussian case the coupling is a Gaussian copula whose correlation is
    read off ``covariance`` (off-diagonal entries scaled by the diagonal);
    with all-normal marginals this is exactly the multivariate normal
    with that covariance.
    """

    marginals: tuple[Marginal, ...]
    dependence: str = "independent"
    covariance: np.ndarray | None = None
    _correlation_chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        marginals = tuple(self.marginals)
        object.__setattr__(self, "marginals", marginals)
        if len(marginals) < 1:
            raise ValueError("input model needs at least one marginal")
        if self.dependence not in ("independent", "gaussian"):
            raise ValueError(f"unknown dependence kind {self.dependence!r}")
        if self.dependence == "gaussian":
            if self.covariance is None:
                raise ValueError("gaussian dependence requires a covariance matrix")
            cov = np.asarray(self.covariance, dtype=float)
            d = len(marginals)
            if cov.shape != (d, d):
                raise ValueError(f"covariance must be {d}x{d}, got {cov.shape}")
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise ValueError("covariance must be symmetric")
            sd = np.sqrt(np.diag(cov))
            if np.any(sd <= 0):
                raise ValueError("covariance diagonal must be strictly positive")
            corr = cov / np.outer(sd, sd)
            try:
                chol = np.linalg.cholesky(corr)
            except np.linalg.LinAlgError as exc:
                raise ValueError("covariance must be positive definite") from exc
            object.__setattr__(self, "covariance", cov)
            object.__setattr__(self, "_correlation_chol", chol)
        elif self.covariance is not None:
            raise ValueError("covariance is only meaningful with gaussian dependence")

    @property
    def dimension(self) -> int:
        return len(self.marginals)

    @property
    def is_gaussian_vector(self) -> bool:
        """True when the joint law is multivariate normal."""
        return all(m.kind == "normal" for m in self.marginals)

    def mean_vector(self) -> np.ndarray:
        return np.array([m.loc if m.kind == "normal" else m.mean() for m in self.marginals])

    def gaussian_cholesky(self) -> np.ndarray:
        """Cholesky factor of the joint covariance for a Gaussian vector."""
        if not self.is_gaussian_vector:
            raise ValueError("input model is not jointly Gaussian")
        scales = np.array([m.scale for m in self.marginals])
        if self.dependence == "independent":
            return np.diag(scales)
        return scales[:, None] * self._correlation_chol

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        d = self.dimension
        if self.dependence == "independent":
            cols = [m.sample(n, rng) for m in self.marginals]
            return np.column_stack(cols)
        z = rng.standard_normal((n, d)) @ self._correlation_chol.T
        if self.is_gaussian_vector:
            scales = np.array([m.scale for m in self.marginals])
            locs = np.array([m.loc for m in self.marginals])
            return locs + scales * z
        u = stats.norm.cdf(z)
        cols = [m.quantile(u[:, i]) for i, m in enumerate(self.marginals)]
        return np.column_stack(cols)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Joint log density at each row of ``x`` (``-inf`` off-support)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.column_stack([m.logpdf(x[:, i]) for i, m in enumerate(self.marginals)])
            out = logs.sum(axis=1)
            if self.dependence == "gaussian":
                inside = np.isfinite(out)
                z = np.empty_like(x)
                for i, m in enumerate(self.marginals):
                    z[:, i] = stats.norm.ppf(np.clip(m.cdf(x[:, i]), 1e-300, 1.0 - 1e-16))
                chol = self._correlation_chol
                zin = z[inside]
                y = solve_triangular(chol, zin.T, lower=True).T
                quad = 0.5 * (np.sum(zin * zin, axis=1) - np.sum(y * y, axis=1))
                logdet = np.sum(np.log(np.diag(chol)))
                out[inside] = out[inside] + quad - logdet
        return out


@dataclass(frozen=True)
class FailureEvent:
    """Failure event ``{Y > threshold}``; the orientation is fixed."""

    threshold: float

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")

    def indicator(self, y) -> np.ndarray:
        return np.asarray(y) > self.threshold


class BlackBox:
    """Deterministic scalar model with exact call accounting.

    ``evaluate`` maps a length-``d`` vector to one float and increments the
    call counter by exactly one.  ``evaluate_batch`` maps an ``(n, d)``
    array to ``n`` floats and increments the counter by ``n``; built-in
    models provide a vectorized backend, the generic fallback loops over
    ``evaluate``'s function.  Non-finite outputs raise
    :class:`EvaluationError` instead of being passed on.
    """

    def __init__(self, fn: Callable, dimension: int, name: str = "",
                 thread_safe: bool = False, batch_fn: Callable | None = None):
        self._fn = fn
        self._batch_fn = batch_fn
        self.dimension = int(dimension)
        self.name = name
        self.thread_safe = bool(thread_safe)
        self._count = 0
        self._lock = threading.Lock()

    @property
    def call_count(self) -> int:
        return self._count

    def _bump(self, k: int):
        with self._lock:
            self._count += k

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dimension:
            raise ValueError(f"expected {self.dimension} inputs, got {x.shape[0]}")
        y = float(self._fn(x))
        self._bump(1)
        if not math.isfinite(y):
            raise EvaluationError(f"non-finite output {y!r} from model {self.name!r} at input {x.tolist()}")
        return y

    def evaluate_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dimension:
            raise ValueError(f"expected {self.dimension} inputs, got {x.shape[1]}")
        if self._batch_fn is not None:
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                y = np.asarray(self._batch_fn(x), dtype=float).reshape(-1)
            self._bump(x.shape[0])
        else:
            y = np.empty(x.shape[0])
            for i in range(x.shape[0]):
                yi = float(self._fn(x[i]))
                self._bump(1)
                y[i] = yi
        if not np.all(np.isfinite(y)):
            bad = int(np.flatnonzero(~np.isfinite(y))[0])
            raise EvaluationError(
                f"non-finite output {y[bad]!r} from model {self.name!r} at input {x[bad].tolist()}")
        return y

    def __repr__(self):
        return f"BlackBox(name={self.name!r}, dimension={self.dimension}, calls={self._count})"


def sample_input(model: InputModel, n: int, seed) -> np.ndarray:
    """Draw ``n`` i.i.d. input vectors as an ``(n, d)`` array."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return model.sample(int(n), rng)


def _toy1_batch(x):
    return x[:, 0] + (x[:, 0] > 3.0) * np.abs(x[:, 1])


def _chi2_batch(x):
    return x[:, 0] + x[:, 1] ** 2


def _sdof_batch(x):
    c1, c2, r, m, t, f = (x[:, i] for i in range(6))
    k = c1 + c2
    return -3.0 * r + np.abs(2.0 * f / k * np.sin(np.sqrt(k / m) * t / 2.0))


_BUILTINS = {}


def _register(name, batch_fn, marginals, threshold, dependence="independent"):
    _BUILTINS[name] = (batch_fn, marginals, threshold, dependence)


_register("toy1", _toy1_batch,
          (Marginal("normal", 0.0, 1.0), Marginal("normal", 0.0, math.sqrt(5.0))), 3.0)
_register("additive_chi2", _chi2_batch,
          (Marginal("normal", 0.0, 1.0), Marginal("normal", 0.0, 1.0)), 15.0)
_register("sdof_oscillator", _sdof_batch,
          (Marginal("lognormal", 2.0, 0.2),    # first spring stiffness
           Marginal("lognormal", 0.2, 0.02),   # second spring stiffness
           Marginal("lognormal", 0.6, 0.05),   # displacement capacity
           Marginal("lognormal", 1.0, 0.05),   # mass
           Marginal("lognormal", 1.0, 0.2),    # observation time
           Marginal("lognormal", 1.0, 0.2)),   # load amplitude
          0.0)


def builtin_model(name: str) -> tuple[BlackBox, InputModel, FailureEvent]:
    """Return one of the built-in benchmarks as (black box, inputs, event).

    Available names: ``toy1`` (indicator-gated additive model, failure at 3),
    ``additive_chi2`` (normal plus squared normal, failure at 15) and
    ``sdof_oscillator`` (six lognormal inputs, failure at 0).
    """
    if name not in _BUILTINS:
        raise ValueError(f"unknown builtin model {name!r}, expected one of {sorted(_BUILTINS)}")
    batch_fn, marginals, threshold, dependence = _BUILTINS[name]
    box = BlackBox(fn=lambda x: batch_fn(x.reshape(1, -1))[0], dimension=len(marginals),
                   name=name, thread_safe=True, batch_fn=batch_fn)
    return box, InputModel(marginals, dependence), FailureEvent(threshold)
