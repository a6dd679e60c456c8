"""Maximum-entropy density estimation under fractional moment constraints.

Given empirical moments ``mu_j = mean(phi_j)`` of a sample, the density
of maximum entropy supported on a box and matching those moments has the
form ``f(x) = c * exp(-sum_j lam_j phi_j(x))``.  The multipliers solve
the strictly convex dual problem

    minimize  <lam, mu> + log integral exp(-<lam, phi(x)>) dx,

whose gradient is ``mu - E_f[phi]`` and whose Hessian is ``Cov_f(phi)``;
a damped Newton iteration with backtracking line search drives the
gradient norm below ``tol``.

Two families are provided: one-dimensional densities with power features
``x**beta`` on a data-driven support (used for failure-conditioned input
marginals), and copula densities on the unit square with features
``u**a * v**b`` fitted to rank pseudo-observations (used for the
input/output dependence indices).  Copula estimates match only the
listed moments; uniformity of their marginals is not enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.linalg import cho_factor, cho_solve, LinAlgError

__all__ = [
    "MaxEntError",
    "InfeasibleConstraintsError",
    "MomentConstraints",
    "MaxEntDensity",
    "MaxEntCopula",
    "fractional_moments_1d",
    "copula_fractional_moments",
    "solve_maxent",
    "dual_objective",
    "density_eval",
]

SUPPORT_MARGIN = 0.0
SHIFT_EPS = 1e-6
DEFAULT_EXPONENTS = (0.5, 1.0, 1.5)


class MaxEntError(RuntimeError):
    """The dual solve failed to converge."""


class InfeasibleConstraintsError(MaxEntError):
    """The dual is diverging: no density on the support matches the moments."""


@dataclass(frozen=True)
class MomentConstraints:
    """Moment targets defining one maximum-entropy problem.

    For ``ndim == 1`` the exponents are floats, the support is an
    interval in shifted coordinates ``z = x + shift`` and the targets are
    means of ``z**beta``.  For ``ndim == 2`` the exponents are ``(a, b)``
    pairs on the unit square and the targets are means of
    ``u**a * v**b`` over rank pseudo-observations.
    """

    ndim: int
    exponents: tuple
    targets: np.ndarray
    support: tuple
    shift: float = 0.0
    sample_size: int = 0

    def __post_init__(self):
        targets = np.asarray(self.targets, dtype=float)
        targets.setflags(write=False)
        object.__setattr__(self, "targets", targets)
        if self.ndim not in (1, 2):
            raise ValueError("ndim must be 1 or 2")
        if len(self.exponents) != targets.shape[0]:
            raise ValueError("exponents and targets must have the same length")
        if not np.all(np.isfinite(targets)):
            raise ValueError("moment targets must be finite")


def _check_exponents(exponents):
    exps = tuple(float(e) for e in exponents)
    if len(exps) == 0:
        raise ValueError("need at least one exponent")
    if len(set(exps)) != len(exps):
        raise ValueError(f"exponents must be distinct, got {exps}")
    if any(not np.isfinite(e) or e <= 0 for e in exps):
        raise ValueError(f"exponents must be strictly positive, got {exps}")
    return exps


def fractional_moments_1d(sample, exponents=DEFAULT_EXPONENTS, *,
                          margin=SUPPORT_MARGIN) -> MomentConstraints:
    """Empirical moments ``mean((x + shift)**beta)`` of a 1-D sample.

    When the sample touches zero or goes negative and any exponent is
    non-integer, the sample is first shifted by ``-min + 1e-6 * range``
    so all powers are real; the shift is recorded and undone at density
    evaluation time.  The support is the sample range widened by
    ``margin`` times the range on each side (clamped at zero in shifted
    coordinates).  The default margin is zero: conditional densities of
    rare-event problems often have hard edges at the failure boundary,
    and padding the support smears them, which biases ratio-based
    indices downward.
    """
    x = np.asarray(sample, dtype=float).reshape(-1)
    if x.size < 2:
        raise ValueError("need at least two sample points")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    lo, hi = float(x.min()), float(x.max())
    rng = hi - lo
    if rng == 0.0:
        raise ValueError("degenerate sample: all values are equal")
    if margin < 0.0:
        raise ValueError("margin must be nonnegative")
    exps = _check_exponents(exponents)
    fractional = any(e != int(e) for e in exps)
    shift = 0.0
    if fractional and lo <= 0.0:
        shift = -lo + SHIFT_EPS * rng
    a = lo - margin * rng + shift
    b = hi + margin * rng + shift
    if fractional and a < 0.0:
        a = 0.0
    z = x + shift
    targets = np.array([np.mean(z ** e) for e in exps])
    return MomentConstraints(ndim=1, exponents=exps, targets=targets,
                             support=(a, b), shift=shift, sample_size=x.size)


def copula_fractional_moments(sample_xy, exponents=DEFAULT_EXPONENTS) -> MomentConstraints:
    """Empirical copula moments of a bivariate sample.

    Pseudo-observations are ``rank / n`` with average ranks on ties, so
    they lie in ``(0, 1]``.  The targets are ``mean(u**a * v**b)`` for
    every pair ``(a, b)`` of the given exponents.
    """
    xy = np.asarray(sample_xy, dtype=float)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) sample, got shape {xy.shape}")
    if xy.shape[0] < 2:
        raise ValueError("need at least two sample points")
    if not np.all(np.isfinite(xy)):
        raise ValueError("sample contains non-finite values")
    for col in range(2):
        if xy[:, col].min() == xy[:, col].max():
            raise ValueError(f"degenerate sample: column {col} is constant")
    exps = _check_exponents(exponents)
    n = xy.shape[0]
    u = stats.rankdata(xy[:, 0], method="average") / n
    v = stats.rankdata(xy[:, 1], method="average") / n
    pairs = tuple((r, s) for r in exps for s in exps)
    targets = np.array([np.mean(u ** r * v ** s) for r, s in pairs])
    return MomentConstraints(ndim=2, exponents=pairs, targets=targets,
                             support=((0.0, 1.0), (0.0, 1.0)), sample_size=n)


@dataclass(frozen=True)
class MaxEntDensity:
    """Density ``c * exp(-sum lam_j z**beta_j)`` on an interval.

    Evaluation is in original coordinates; internally ``z = x + shift``.
    """

    exponents: tuple[float, ...]
    multipliers: np.ndarray
    log_normalizer: float
    support_shifted: tuple[float, float]
    shift: float

    @property
    def support(self) -> tuple[float, float]:
        """Support interval in original coordinates."""
        a, b = self.support_shifted
        return (a - self.shift, b - self.shift)

    def log_pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = x + self.shift
        a, b = self.support_shifted
        inside = (z >= a) & (z <= b)
        out = np.full(x.shape, -np.inf)
        zin = z[inside]
        acc = np.full(zin.shape, self.log_normalizer)
        for lam, e in zip(self.multipliers, self.exponents):
            acc -= lam * zin ** e
        out[inside] = acc
        return out

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.log_pdf(x))

    def to_record(self) -> dict:
        return {"kind": "density_1d", "exponents": list(self.exponents),
                "multipliers": [float(v) for v in self.multipliers],
                "log_normalizer": float(self.log_normalizer),
                "support_shifted": list(self.support_shifted), "shift": float(self.shift)}

    @classmethod
    def from_record(cls, record: dict) -> "MaxEntDensity":
        if record.get("kind") != "density_1d":
            raise ValueError(f"not a 1-D density record: {record.get('kind')!r}")
        return cls(exponents=tuple(record["exponents"]),
                   multipliers=np.asarray(record["multipliers"], dtype=float),
                   log_normalizer=float(record["log_normalizer"]),
                   support_shifted=tuple(record["support_shifted"]),
                   shift=float(record["shift"]))


@dataclass(frozen=True)
class MaxEntCopula:
    """Density ``c * exp(-sum lam_rs u**a_r v**a_s)`` on the unit square.

    Only the fitted moments are guaranteed; the marginals are close to
    but not exactly uniform (see :meth:`uniformity_gap`).
    """

    exponents: tuple[tuple[float, float], ...]
    multipliers: np.ndarray
    log_normalizer: float

    def log_pdf(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        scalar_pair = uv.ndim == 1
        uv2 = np.atleast_2d(uv)
        u, v = uv2[:, 0], uv2[:, 1]
        inside = (u >= 0) & (u <= 1) & (v >= 0) & (v <= 1)
        acc = np.full(u.shape, self.log_normalizer)
        uc, vc = np.clip(u, 0.0, 1.0), np.clip(v, 0.0, 1.0)
        for lam, (r, s) in zip(self.multipliers, self.exponents):
            acc -= lam * uc ** r * vc ** s
        acc[~inside] = -np.inf
        return acc[0] if scalar_pair else acc

    def pdf(self, uv) -> np.ndarray:
        return np.exp(self.log_pdf(uv))

    def uniformity_gap(self, n_grid: int = 201) -> float:
        """Max deviation from 1 of both marginal densities (diagnostic)."""
        nodes, weights = _gauss_legendre(0.0, 1.0, 128)
        grid = np.linspace(0.0, 1.0, n_grid)
        gg, nn = np.meshgrid(grid, nodes, indexing="ij")
        mu = np.sum(self.pdf(np.column_stack([gg.ravel(), nn.ravel()])).reshape(gg.shape)
                    * weights, axis=1)
        mv = np.sum(self.pdf(np.column_stack([nn.ravel(), gg.ravel()])).reshape(gg.shape)
                    * weights, axis=1)
        return float(max(np.max(np.abs(mu - 1.0)), np.max(np.abs(mv - 1.0))))

    def to_record(self) -> dict:
        return {"kind": "copula_2d", "exponents": [list(p) for p in self.exponents],
                "multipliers": [float(v) for v in self.multipliers],
                "log_normalizer": float(self.log_normalizer)}

    @classmethod
    def from_record(cls, record: dict) -> "MaxEntCopula":
        if record.get("kind") != "copula_2d":
            raise ValueError(f"not a copula record: {record.get('kind')!r}")
        return cls(exponents=tuple(tuple(p) for p in record["exponents"]),
                   multipliers=np.asarray(record["multipliers"], dtype=float),
                   log_normalizer=float(record["log_normalizer"]))


def _gauss_legendre(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _composite_gl(a, b, panels, nodes):
    edges = np.linspace(a, b, panels + 1)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = _gauss_legendre(lo, hi, nodes)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def _quadrature_1d(constraints, panels=8, nodes=48):
    """Feature matrix and weights on the support.

    With a non-negative support the substitution ``z = t**2`` removes the
    square-root kink of fractional powers at zero, so Gauss-Legendre
    panels converge spectrally; otherwise (all-integer exponents) the
    grid is laid out directly.
    """
    a, b = constraints.support
    exps = constraints.exponents
    if a >= 0.0:
        t, wt = _composite_gl(math.sqrt(a), math.sqrt(b), panels, nodes)
        w = 2.0 * t * wt
        feats = np.vstack([t ** (2.0 * e) for e in exps])
    else:
        z, w = _composite_gl(a, b, panels, nodes)
        feats = np.vstack([z ** e for e in exps])
    return feats, w


def _quadrature_2d(constraints, n_axis=128):
    """Tensor grid on the unit square after ``u = s**2, v = t**2``."""
    s, ws = _gauss_legendre(0.0, 1.0, n_axis)
    su, wu = s, 2.0 * s * ws
    gu, gv = np.meshgrid(su, su, indexing="ij")
    wuv = np.outer(wu, wu).ravel()
    u2, v2 = (gu ** 2).ravel(), (gv ** 2).ravel()
    feats = np.vstack([u2 ** r * v2 ** s_ for r, s_ in constraints.exponents])
    return feats, wuv


def _log_partition(lam, feats, w):
    logq = -(lam @ feats)
    m = np.max(logq)
    return m + math.log(np.sum(w * np.exp(logq - m)))


def dual_objective(constraints: MomentConstraints, lam) -> float:
    """Value of the convex dual at ``lam`` (used to certify convexity)."""
    lam = np.asarray(lam, dtype=float)
    feats, w = _quadrature_1d(constraints) if constraints.ndim == 1 else _quadrature_2d(constraints)
    return float(lam @ constraints.targets + _log_partition(lam, feats, w))


def _newton(targets, feats, w, tol, max_iter):
    """Damped Newton on the dual; returns (multipliers, log Z, iterations)."""
    scale = np.max(np.abs(feats), axis=1)
    if np.any(scale == 0.0):
        raise MaxEntError("a feature vanishes identically on the support")
    fs = feats / scale[:, None]
    mu_s = targets / scale
    lam = np.zeros(targets.shape[0])
    obj = None
    for it in range(1, max_iter + 1):
        logq = -(lam @ fs)
        mstar = np.max(logq)
        q = w * np.exp(logq - mstar)
        z = float(np.sum(q))
        if not np.isfinite(z) or z <= 0.0:
            raise InfeasibleConstraintsError("dual integrand degenerated; constraints "
                                             "are infeasible on this support")
        log_z = mstar + math.log(z)
        p = q / z
        mom = fs @ p
        grad = mu_s - mom
        grad_orig = grad * scale
        if np.linalg.norm(grad_orig) <= tol and np.linalg.norm(grad) <= tol:
            return lam / scale, log_z, it
        obj = float(lam @ mu_s + log_z)
        hess = (fs * p) @ fs.T - np.outer(mom, mom)
        ridge = 0.0
        while True:
            try:
                chol = cho_factor(hess + ridge * np.eye(hess.shape[0]), lower=True)
                break
            except LinAlgError:
                # the trace-relative floor alone can stall at zero when the
                # dual iterate collapses the density onto a single node
                ridge = max(ridge * 10.0, 1e-12 * np.trace(hess) / hess.shape[0], 1e-15)
                if ridge > 1e6:
                    raise MaxEntError("dual Hessian is numerically singular")
        step = -cho_solve(chol, grad)
        slope = float(grad @ step)
        t = 1.0
        for _ in range(60):
            cand = lam + t * step
            cand_obj = float(cand @ mu_s + _log_partition(cand, fs, w))
            if cand_obj <= obj + 1e-4 * t * slope:
                lam = cand
                break
            t *= 0.5
        else:
            raise MaxEntError("line search failed; the dual may be flat or the "
                              "constraints near the feasibility boundary")
        if np.linalg.norm(lam) > 1e10:
            raise InfeasibleConstraintsError("dual multipliers diverging; no density on "
                                             "the support matches the moment targets")
    raise MaxEntError(f"Newton did not reach gradient norm {tol} in {max_iter} iterations")


def solve_maxent(constraints: MomentConstraints, tol: float = 1e-6,
                 max_iter: int = 200):
    """Solve the dual and return the fitted density object.

    Returns a :class:`MaxEntDensity` (``ndim == 1``) or a
    :class:`MaxEntCopula` (``ndim == 2``).  Raises
    :class:`InfeasibleConstraintsError` when the multipliers diverge and
    :class:`MaxEntError` when the iteration stalls.
    """
    if constraints.ndim == 1:
        feats, w = _quadrature_1d(constraints)
        lam, log_z, _ = _newton(constraints.targets, feats, w, tol, max_iter)
        return MaxEntDensity(exponents=constraints.exponents, multipliers=lam,
                             log_normalizer=-log_z,
                             support_shifted=constraints.support, shift=constraints.shift)
    feats, w = _quadrature_2d(constraints, 128)
    lam, log_z, _ = _newton(constraints.targets, feats, w, tol, max_iter)
    feats_c, w_c = _quadrature_2d(constraints, 64)
    drift = abs(_log_partition(lam, feats_c, w_c) - log_z)
    if drift > 1e-7:
        import warnings

        warnings.warn(f"copula quadrature drift {drift:.2e} between 128- and 64-point "
                      "grids; results may be under-resolved", stacklevel=2)
    return MaxEntCopula(exponents=constraints.exponents, multipliers=lam,
                        log_normalizer=-log_z)


def density_eval(density, point):
    """Evaluate a fitted density at one point or an array of points."""
    return density.pdf(point)
