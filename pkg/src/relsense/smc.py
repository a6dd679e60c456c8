"""Adaptive multilevel splitting for rare events, with a final sampling pass.

The probability phase tracks a cloud of ``n_particles`` inputs through an
adaptive ladder of intermediate levels: at each level the lower
``rho``-quantile of the current outputs becomes the next threshold, the
particles strictly above it are duplicated back to full size, and every
particle is moved by ``mutation_steps`` Metropolis-Hastings transitions
that leave the input law restricted to the current level invariant.  The
failure probability estimate is the product of the observed per-level
survival fractions.  The sampling phase then duplicates the final
survivors into ``final_sample_size`` chains and applies
``final_mh_steps`` more transitions targeting the failure region itself,
producing an (approximately independent) conditioned sample for the
sensitivity estimators.

Call accounting is exact: the probability phase costs
``n_particles * (1 + n_levels * mutation_steps)`` model calls and the
sampling phase ``final_sample_size * final_mh_steps``, both verified
against the black-box counter.  (The only exception is a random-walk
candidate falling outside the input support, which is rejected without
spending a call; with fully supported inputs the identity is exact.)
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import BlackBox, FailureEvent, InputModel
from .seeding import stream

__all__ = [
    "SmcError",
    "CrankNicolsonKernel",
    "GaussianRandomWalkKernel",
    "SmcParams",
    "SmcResult",
    "run_adaptive_smc",
    "mh_step",
    "final_sampling",
]

# Stream ids under the run seed.
_INIT, _LEVEL, _FINAL = 0, 1, 2

ACCEPTANCE_BAND = (0.15, 0.40)


class SmcError(RuntimeError):
    """The splitting run cannot continue (stagnation, dead chains, ...)."""


@dataclass(frozen=True)
class CrankNicolsonKernel:
    """Autoregressive Gaussian proposal for jointly Gaussian inputs.

    A candidate is ``mean + sqrt(1-a) * (x - mean) + sqrt(a) * L @ z`` with
    ``z`` standard normal and ``L`` the Cholesky factor of the input
    covariance.  The proposal is reversible for the unrestricted input
    law, so the acceptance rule reduces to the level indicator.
    """

    a: float

    def __post_init__(self):
        if not (0.0 < self.a < 1.0):
            raise ValueError(f"mixing weight a must lie in (0, 1), got {self.a}")


@dataclass(frozen=True)
class GaussianRandomWalkKernel:
    """Symmetric random-walk proposal for general marginals.

    A candidate adds centered Gaussian noise with per-coordinate standard
    deviations ``step_sds``; the acceptance rule uses the full input
    density ratio times the level indicator.
    """

    step_sds: tuple[float, ...]

    def __post_init__(self):
        sds = tuple(float(s) for s in np.atleast_1d(np.asarray(self.step_sds, dtype=float)))
        object.__setattr__(self, "step_sds", sds)
        if any(not np.isfinite(s) or s <= 0 for s in sds):
            raise ValueError("step_sds must all be strictly positive")

    @classmethod
    def matching_input_sds(cls, model: InputModel) -> "GaussianRandomWalkKernel":
        """Step sizes equal to the input standard deviations."""
        return cls(tuple(m.sd() for m in model.marginals))


Kernel = CrankNicolsonKernel | GaussianRandomWalkKernel


@dataclass(frozen=True)
class SmcParams:
    """Tuning parameters of one splitting run.

    ``rho`` is the quantile level of the adaptive thresholds: at each
    selection the level is the ``rho``-quantile (from below) of the
    current outputs and the particles strictly above it survive, so a
    fraction of about ``1 - rho`` of the cloud is kept per level.
    """

    n_particles: int
    rho: float
    mutation_steps: int
    final_sample_size: int
    final_mh_steps: int
    kernel: Kernel
    max_levels: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be at least 2")
        if not (0.0 < self.rho < 1.0):
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.mutation_steps < 1:
            raise ValueError("mutation_steps must be at least 1")
        if self.final_sample_size < 1:
            raise ValueError("final_sample_size must be at least 1")
        if self.final_mh_steps < 0:
            raise ValueError("final_mh_steps must be non-negative")
        if self.max_levels < 1:
            raise ValueError("max_levels must be at least 1")
        k = math.ceil(self.rho * self.n_particles)
        if not (1 <= k <= self.n_particles - 1):
            raise ValueError(
                f"rho={self.rho} with n_particles={self.n_particles} leaves no room "
                "for both discarded and surviving particles")
        if not isinstance(self.kernel, (CrankNicolsonKernel, GaussianRandomWalkKernel)):
            raise ValueError("kernel must be a CrankNicolsonKernel or GaussianRandomWalkKernel")


@dataclass(frozen=True)
class SmcResult:
    """Output of one splitting run.

    ``levels`` holds every adaptive threshold in order; the last one
    exceeds the failure threshold, and ``n_levels`` counts the mutation
    phases actually performed (``len(levels) - 1``).
    """

    conditioned_sample: np.ndarray
    conditioned_outputs: np.ndarray
    p_f_hat: float
    levels: tuple[float, ...]
    n_levels: int
    calls_probability_phase: int
    calls_sampling_phase: int
    acceptance_rates: tuple[float, ...]
    final_acceptance_rate: float | None
    threshold: float

    @property
    def calls_total(self) -> int:
        return self.calls_probability_phase + self.calls_sampling_phase

    def __post_init__(self):
        for name in ("conditioned_sample", "conditioned_outputs"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _kernel_matrices(kernel: Kernel, model: InputModel):
    """Precompute what the proposal needs; validates kernel/model pairing."""
    if isinstance(kernel, CrankNicolsonKernel):
        if not model.is_gaussian_vector:
            raise SmcError("crank_nicolson kernel requires jointly Gaussian inputs "
                           "(all-normal marginals); use gaussian_random_walk instead")
        return model.mean_vector(), model.gaussian_cholesky()
    sds = np.asarray(kernel.step_sds, dtype=float)
    if sds.shape[0] != model.dimension:
        raise SmcError(f"step_sds has length {sds.shape[0]} but the input has "
                       f"dimension {model.dimension}")
    return sds, None


def _chain_sweep(x, y, gamma, steps, box, model, kernel, rng, mats):
    """Advance every row of ``x`` by ``steps`` MH transitions targeting
    the input law restricted to ``{M > gamma}``.  Returns the moved
    cloud, its outputs and the observed acceptance rate."""
    n, d = x.shape
    x = x.copy()
    y = y.copy()
    accepted = 0
    cn = isinstance(kernel, CrankNicolsonKernel)
    if not cn:
        cur_logf = model.log_density(x)
    for _ in range(steps):
        z = rng.standard_normal((n, d))
        u = rng.random(n)
        if cn:
            mean, chol = mats
            cand = mean + math.sqrt(1.0 - kernel.a) * (x - mean) + math.sqrt(kernel.a) * (z @ chol.T)
            in_support = np.ones(n, dtype=bool)
            log_ratio = np.zeros(n)
        else:
            sds, _ = mats
            cand = x + z * sds
            cand_logf = model.log_density(cand)
            in_support = np.isfinite(cand_logf)
            log_ratio = np.where(in_support, cand_logf - cur_logf, -np.inf)
        y_cand = np.full(n, -np.inf)
        if np.any(in_support):
            y_cand[in_support] = box.evaluate_batch(cand[in_support])
        accept = in_support & (y_cand > gamma) & (np.log(np.maximum(u, 1e-300)) <= log_ratio)
        x[accept] = cand[accept]
        y[accept] = y_cand[accept]
        if not cn:
            cur_logf[accept] = cand_logf[accept]
        accepted += int(np.count_nonzero(accept))
    return x, y, accepted / float(n * steps) if steps > 0 else float("nan")


def mh_step(x, gamma, blackbox, input_model, kernel, rng):
    """One MH transition of a single state targeting ``X | M(X) > gamma``.

    Returns ``(x_next, accepted)``; on rejection ``x_next`` is ``x``
    itself.  The candidate costs exactly one model call (skipped only
    when it falls outside the input support, where rejection is certain).
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    mats = _kernel_matrices(kernel, input_model)
    # The current output is not needed: acceptance only compares the
    # candidate's output with the level.
    y0 = np.array([np.inf])
    x1, _, rate = _chain_sweep(x, y0, gamma, 1, blackbox, input_model, kernel, rng, mats)
    accepted = rate > 0
    return x1[0], bool(accepted)


def final_sampling(survivors_x, survivors_y, blackbox, input_model, event,
                   n_sample, n_steps, kernel, rng):
    """Grow a conditioned sample of size ``n_sample`` from the survivors.

    The survivors are first restricted to ``{Y > threshold}``, duplicated
    uniformly with replacement, then moved by ``n_steps`` MH transitions
    targeting the failure region.  With ``n_steps = 0`` the duplicated
    rows are returned verbatim.
    """
    survivors_x = np.atleast_2d(np.asarray(survivors_x, dtype=float))
    survivors_y = np.asarray(survivors_y, dtype=float).reshape(-1)
    keep = survivors_y > event.threshold
    if not np.any(keep):
        raise SmcError("empty survivor set above the failure threshold; "
                       "cannot start the sampling phase")
    pool_x = survivors_x[keep]
    pool_y = survivors_y[keep]
    mats = _kernel_matrices(kernel, input_model)
    idx = rng.integers(0, pool_x.shape[0], size=int(n_sample))
    x = pool_x[idx]
    y = pool_y[idx]
    if n_steps > 0:
        x, y, rate = _chain_sweep(x, y, event.threshold, int(n_steps),
                                  blackbox, input_model, kernel, rng, mats)
    else:
        rate = None
    return x, y, rate


def run_adaptive_smc(blackbox: BlackBox, input_model: InputModel,
                     event: FailureEvent, params: SmcParams) -> SmcResult:
    """Run the full two-phase campaign and return an :class:`SmcResult`.

    Raises :class:`SmcError` on level stagnation, on exceeding
    ``max_levels``, or when a mutation phase accepts nothing (dead
    chains make the duplicated cloud degenerate).
    """
    if blackbox.dimension != input_model.dimension:
        raise ValueError("black box and input model disagree on the dimension")
    mats = _kernel_matrices(params.kernel, input_model)
    n_x = params.n_particles
    s = event.threshold
    k_rank = math.ceil(params.rho * n_x)

    calls_before = blackbox.call_count
    x = input_model.sample(n_x, stream(params.seed, _INIT))
    y = blackbox.evaluate_batch(x)

    levels: list[float] = []
    fractions: list[float] = []
    acceptance: list[float] = []
    while True:
        gamma = float(np.sort(y)[k_rank - 1])
        levels.append(gamma)
        if gamma > s:
            break
        p = len(levels) - 1
        if p >= params.max_levels:
            raise SmcError(f"no level above the threshold {s} after {params.max_levels} "
                           f"levels (last level {gamma}); the event may be too rare for "
                           "these parameters")
        if p >= 1 and gamma <= levels[-2]:
            raise SmcError(f"level stagnation: level {p} at {gamma} does not improve on "
                           f"{levels[-2]}; outputs may be discrete or chains are stuck")
        surv = np.flatnonzero(y > gamma)
        if surv.size == 0:
            raise SmcError(f"no particles strictly above level {gamma}; outputs are tied")
        fractions.append(surv.size / n_x)
        rng_level = stream(params.seed, _LEVEL, p)
        idx = rng_level.integers(0, surv.size, size=n_x)
        x, y, rate = _chain_sweep(x[surv][idx], y[surv][idx], gamma, params.mutation_steps,
                                  blackbox, input_model, params.kernel, rng_level, mats)
        acceptance.append(rate)
        if rate == 0.0:
            raise SmcError(f"Metropolis-Hastings acceptance collapsed to zero at level {p} "
                           f"(gamma={gamma}); the kernel step is too large or the region "
                           "is disconnected")
    n_levels = len(levels) - 1
    calls_probability = blackbox.call_count - calls_before

    out_band = [r for r in acceptance if not (ACCEPTANCE_BAND[0] <= r <= ACCEPTANCE_BAND[1])]
    if out_band:
        worst = max(out_band, key=lambda r: min(abs(r - b) for b in ACCEPTANCE_BAND))
        warnings.warn(
            f"{len(out_band)} of {len(acceptance)} mutation phases had acceptance rates "
            f"outside [{ACCEPTANCE_BAND[0]}, {ACCEPTANCE_BAND[1]}] (worst {worst:.3f}); "
            "consider retuning the kernel", stacklevel=2)

    p_f_hat = float(np.prod(fractions) * (np.count_nonzero(y > s) / n_x))

    cs, co, final_rate = final_sampling(x, y, blackbox, input_model, event,
                                        params.final_sample_size, params.final_mh_steps,
                                        params.kernel, stream(params.seed, _FINAL))
    calls_sampling = blackbox.call_count - calls_before - calls_probability

    return SmcResult(conditioned_sample=cs, conditioned_outputs=co, p_f_hat=p_f_hat,
                     levels=tuple(levels), n_levels=n_levels,
                     calls_probability_phase=int(calls_probability),
                     calls_sampling_phase=int(calls_sampling),
                     acceptance_rates=tuple(acceptance),
                     final_acceptance_rate=final_rate, threshold=s)
