"""Campaign orchestration: config files, replications, and reports.

A campaign repeats the whole estimation pipeline (conditioned sampling,
density fits, index evaluation) ``replications`` times with
counter-derived seeds, then aggregates the per-replication tables into
means, standard deviations and ranks.  Everything a run needs is read
from a single JSON config document, so a report can be regenerated
bit-identically from the pair (config, master seed).

The JSON grammar, by section (sections marked "optional" fall back to
the defaults shown)::

    {
      "model":  {"builtin": "toy1"}
                or {"command": ["python3", "my_model.py"], "dimension": 6},
      "inputs": {                                  # optional for builtins
        "marginals": [
          {"kind": "normal",    "mean": 0.0, "sd": 1.0},
          {"kind": "lognormal", "log_mean": 2.0, "log_sd": 0.2},
          {"kind": "uniform",   "low": 0.0, "high": 1.0}
        ],
        "dependence": "independent"                # or {"type": "gaussian",
                                                   #     "covariance": [[...], ...]}
        "names": ["k_p", "zeta"]                   # optional labels
      },
      "event": {"threshold": 3.0},                 # optional for builtins
      "smc": {
        "n_particles": 1000, "rho": 0.25, "mutation_steps": 5,
        "final_sample_size": 3000, "final_mh_steps": 5,
        "kernel": {"type": "crank_nicolson", "a": 0.5}
                  or {"type": "random_walk", "step_sds": [...] or "match_input"},
        "max_levels": 100                          # optional
      },
      "density": {                                 # optional
        "marginal_exponents": [0.5, 1.0, 1.5],
        "copula_exponents":   [0.5, 1.0, 1.5],
        "support_margin": 0.0
      },
      "indices": {                                 # optional
        "n_draws": 100000,
        "eta_method": "quadrature",                # or "monte_carlo"
        "divergence": "total_variation"            # or "kullback_leibler"
      },
      "replications": 100,
      "seed": 0
    }

Replication ``r`` draws its splitting seed from the stream keyed
``(REPLICATION, r)`` under the master seed and its Monte Carlo index
draws from streams keyed ``(1, r, input, family)``; both are
counter-based, so raising the replication count later leaves earlier
replications bitwise unchanged, and running with ``jobs > 1`` returns
exactly the sequential result.
"""

from __future__ import annotations

import concurrent.futures
import io
import json
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .external import external_blackbox
from .indices import (DivergenceSpec, IndexReport, aggregate_replications,
                      clip_unit, csiszar_marginal_index, delta_index,
                      rank_descending, scaled_target_index,
                      sobol_indicator_index, target_tv_index)
from .maxent import (DEFAULT_EXPONENTS, SUPPORT_MARGIN, copula_fractional_moments,
                     fractional_moments_1d, solve_maxent)
from .model import (BlackBox, FailureEvent, InputModel, Marginal, builtin_model)
from .seeding import REPLICATION, seed_sequence, stream
from .smc import (CrankNicolsonKernel, GaussianRandomWalkKernel, SmcParams,
                  run_adaptive_smc)

__all__ = [
    "CampaignConfig", "CampaignReport", "CampaignRuntimeError", "ConfigError",
    "FAMILY_ORDER", "load_config", "parse_config", "run_campaign",
    "run_replication", "validate_config", "write_outputs",
]

# Families reported by every campaign, in table and CSV order.
FAMILY_ORDER = ("delta_f", "eta_bar", "eta", "sobol_indicator")

# Stream ids under the master seed (REPLICATION = 0 lives in seeding).
_INDEX_DRAWS = 1

# Family slots inside the per-replication index-draw key.
_FAMILY_STREAM = {"delta_f": 0, "eta_bar": 1, "sobol_indicator": 2}

_BUILTIN_NAMES = ("toy1", "additive_chi2", "sdof_oscillator")

_DIVERGENCES = {
    "total_variation": DivergenceSpec.total_variation,
    "kullback_leibler": DivergenceSpec.kullback_leibler,
}


class ConfigError(ValueError):
    """A config document failed validation; ``findings`` lists every problem."""

    def __init__(self, findings):
        self.findings = list(findings)
        super().__init__("; ".join(self.findings))


class CampaignRuntimeError(RuntimeError):
    """A replication failed while running; the message names it and its seed."""


@dataclass(frozen=True)
class CampaignConfig:
    """Validated campaign description.

    ``builtin`` and ``command`` are mutually exclusive; ``smc.seed`` is a
    placeholder that gets replaced per replication.  ``raw`` keeps the
    normalized source document for echoing into reports and for
    rebuilding the config inside worker processes.
    """

    builtin: str | None
    command: tuple[str, ...] | None
    input_model: InputModel
    input_names: tuple[str, ...]
    event: FailureEvent
    smc: SmcParams
    marginal_exponents: tuple[float, ...]
    copula_exponents: tuple[float, ...]
    support_margin: float
    n_draws: int
    eta_method: str
    divergence: str
    replications: int
    master_seed: int
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.input_model.dimension

    @property
    def model_label(self) -> str:
        return self.builtin if self.builtin else " ".join(self.command)


def _get_section(raw, name, findings, required=True):
    sec = raw.get(name)
    if sec is None:
        if required:
            findings.append(f"{name} section required")
        return None
    if not isinstance(sec, dict):
        findings.append(f"{name} must be an object")
        return None
    return sec


def _get_number(sec, path, findings, *, required=True, default=None,
                integer=False, minimum=None, maximum=None, strict_min=False):
    name = path.rsplit(".", 1)[-1]
    if sec is None:
        return default
    if name not in sec:
        if required:
            findings.append(f"{path} required")
        return default
    value = sec[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        findings.append(f"{path} must be a number, got {value!r}")
        return default
    if integer and int(value) != value:
        findings.append(f"{path} must be an integer, got {value!r}")
        return default
    value = int(value) if integer else float(value)
    if minimum is not None and (value <= minimum if strict_min else value < minimum):
        op = ">" if strict_min else ">="
        findings.append(f"{path} must be {op} {minimum}, got {value}")
        return default
    if maximum is not None and value > maximum:
        findings.append(f"{path} must be <= {maximum}, got {value}")
        return default
    return value


def _parse_marginal(entry, path, findings):
    if not isinstance(entry, dict):
        findings.append(f"{path} must be an object")
        return None
    kind = entry.get("kind")
    if kind == "normal":
        loc = _get_number(entry, f"{path}.mean", findings)
        scale = _get_number(entry, f"{path}.sd", findings, minimum=0.0, strict_min=True)
    elif kind == "lognormal":
        loc = _get_number(entry, f"{path}.log_mean", findings)
        scale = _get_number(entry, f"{path}.log_sd", findings, minimum=0.0, strict_min=True)
    elif kind == "uniform":
        lo = _get_number(entry, f"{path}.low", findings)
        hi = _get_number(entry, f"{path}.high", findings)
        if lo is None or hi is None:
            return None
        if hi <= lo:
            findings.append(f"{path}.high must exceed {path}.low")
            return None
        loc, scale = lo, hi - lo
    else:
        findings.append(f"{path}.kind must be one of normal, lognormal, uniform, "
                        f"got {kind!r}")
        return None
    if loc is None or scale is None:
        return None
    try:
        return Marginal(kind, loc, scale)
    except ValueError as exc:
        findings.append(f"{path}: {exc}")
        return None


def _parse_inputs(raw, builtin_inputs, findings):
    sec = raw.get("inputs")
    if sec is None:
        if builtin_inputs is None:
            findings.append("inputs section required for external models")
            return None, None
        return builtin_inputs, None
    if not isinstance(sec, dict):
        findings.append("inputs must be an object")
        return None, None
    entries = sec.get("marginals")
    if not isinstance(entries, list) or not entries:
        findings.append("inputs.marginals must be a non-empty list")
        return None, None
    marginals = [_parse_marginal(e, f"inputs.marginals[{i}]", findings)
                 for i, e in enumerate(entries)]
    names = sec.get("names")
    if names is not None:
        if (not isinstance(names, list)
                or len(names) != len(entries)
                or not all(isinstance(n, str) and n for n in names)):
            findings.append("inputs.names must list one non-empty string per marginal")
            names = None
        elif len(set(names)) != len(names):
            findings.append("inputs.names must be unique")
            names = None
        else:
            names = tuple(names)
    if any(m is None for m in marginals):
        return None, names
    dep = sec.get("dependence", "independent")
    dependence, covariance = "independent", None
    if isinstance(dep, str):
        if dep != "independent":
            findings.append(f"inputs.dependence must be 'independent' or a gaussian "
                            f"object, got {dep!r}")
            return None, names
    elif isinstance(dep, dict):
        if dep.get("type") != "gaussian":
            findings.append("inputs.dependence.type must be 'gaussian'")
            return None, names
        cov = dep.get("covariance")
        if cov is None:
            findings.append("inputs.dependence.covariance required")
            return None, names
        dependence, covariance = "gaussian", np.asarray(cov, dtype=float)
    else:
        findings.append("inputs.dependence must be a string or an object")
        return None, names
    try:
        return InputModel(tuple(marginals), dependence, covariance), names
    except (ValueError, np.linalg.LinAlgError) as exc:
        findings.append(f"inputs: {exc}")
        return None, names


def _parse_model(raw, findings):
    sec = _get_section(raw, "model", findings)
    if sec is None:
        return None, None, None
    builtin, command = sec.get("builtin"), sec.get("command")
    if (builtin is None) == (command is None):
        findings.append("model must give exactly one of model.builtin or model.command")
        return None, None, None
    if builtin is not None:
        if builtin not in _BUILTIN_NAMES:
            findings.append(f"model.builtin must be one of {', '.join(_BUILTIN_NAMES)}, "
                            f"got {builtin!r}")
            return None, None, None
        _, inputs, event = builtin_model(builtin)
        return builtin, None, (inputs, event)
    if (not isinstance(command, list) or not command
            or not all(isinstance(c, str) and c for c in command)):
        findings.append("model.command must be a non-empty list of strings")
        return None, None, None
    dim = _get_number(sec, "model.dimension", findings, integer=True, minimum=1)
    if dim is None:
        return None, tuple(command), None
    return None, tuple(command), int(dim)


def _parse_kernel(sec, input_model, findings):
    entry = sec.get("kernel")
    if not isinstance(entry, dict):
        findings.append("smc.kernel required (an object with a 'type' field)")
        return None
    kind = entry.get("type")
    if kind == "crank_nicolson":
        a = _get_number(entry, "smc.kernel.a", findings,
                        minimum=0.0, strict_min=True, maximum=1.0)
        if a is not None and a >= 1.0:
            findings.append(f"smc.kernel.a must be < 1, got {a}")
            return None
        if input_model is not None and not input_model.is_gaussian_vector:
            bad = next(i for i, m in enumerate(input_model.marginals)
                       if m.kind != "normal")
            findings.append(f"smc.kernel: crank_nicolson kernel requires gaussian "
                            f"inputs, but marginal {bad} is "
                            f"{input_model.marginals[bad].kind}")
            return None
        if a is None:
            return None
        return CrankNicolsonKernel(a)
    if kind == "random_walk":
        sds = entry.get("step_sds", "match_input")
        if sds == "match_input":
            if input_model is None:
                return None
            return GaussianRandomWalkKernel.matching_input_sds(input_model)
        if not isinstance(sds, list) or not sds:
            findings.append("smc.kernel.step_sds must be 'match_input' or a list")
            return None
        if input_model is not None and len(sds) != input_model.dimension:
            findings.append(f"smc.kernel.step_sds must list one value per input "
                            f"({input_model.dimension}), got {len(sds)}")
            return None
        try:
            return GaussianRandomWalkKernel(tuple(float(s) for s in sds))
        except (TypeError, ValueError) as exc:
            findings.append(f"smc.kernel.step_sds: {exc}")
            return None
    findings.append(f"smc.kernel.type must be 'crank_nicolson' or 'random_walk', "
                    f"got {kind!r}")
    return None


def _parse_smc(raw, input_model, findings):
    sec = _get_section(raw, "smc", findings)
    if sec is None:
        return None
    n_particles = _get_number(sec, "smc.n_particles", findings, integer=True, minimum=2)
    rho = _get_number(sec, "smc.rho", findings)
    if rho is not None and not (0.0 < rho < 1.0):
        findings.append(f"smc.rho must lie in (0, 1), got {rho}")
        rho = None
    mutation_steps = _get_number(sec, "smc.mutation_steps", findings,
                                 integer=True, minimum=1)
    final_n = _get_number(sec, "smc.final_sample_size", findings,
                          integer=True, minimum=1)
    final_mh = _get_number(sec, "smc.final_mh_steps", findings,
                           integer=True, minimum=0)
    max_levels = _get_number(sec, "smc.max_levels", findings, required=False,
                             default=100, integer=True, minimum=1)
    kernel = _parse_kernel(sec, input_model, findings)
    if None in (n_particles, rho, mutation_steps, final_n, final_mh, kernel):
        return None
    try:
        return SmcParams(n_particles=n_particles, rho=rho,
                         mutation_steps=mutation_steps, final_sample_size=final_n,
                         final_mh_steps=final_mh, kernel=kernel,
                         max_levels=max_levels, seed=0)
    except ValueError as exc:
        findings.append(f"smc: {exc}")
        return None


def _parse_exponents(sec, path, findings):
    name = path.rsplit(".", 1)[-1]
    if sec is None or name not in sec:
        return DEFAULT_EXPONENTS
    entry = sec[name]
    if (not isinstance(entry, list) or not entry
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in entry)):
        findings.append(f"{path} must be a non-empty list of numbers")
        return None
    exps = tuple(float(v) for v in entry)
    if any(e <= 0 for e in exps) or any(b <= a for a, b in zip(exps, exps[1:])):
        findings.append(f"{path} must be strictly increasing and positive")
        return None
    return exps


def validate_config(raw: dict) -> list[str]:
    """Return every problem found in a raw config document (empty = valid)."""
    findings: list[str] = []
    if not isinstance(raw, dict):
        return ["config must be a JSON object"]
    known = {"model", "inputs", "event", "smc", "density", "indices",
             "replications", "seed"}
    for key in raw:
        if key not in known:
            findings.append(f"unknown top-level section {key!r}")

    builtin, command, extra = _parse_model(raw, findings)
    builtin_inputs, builtin_event = (extra if builtin else (None, None))
    input_model, names = _parse_inputs(raw, builtin_inputs, findings)
    if (command and input_model is not None and isinstance(extra, int)
            and input_model.dimension != extra):
        findings.append(f"model.dimension is {extra} but inputs.marginals "
                        f"lists {input_model.dimension}")
    if (builtin and builtin_inputs is not None and input_model is not None
            and input_model.dimension != builtin_inputs.dimension):
        findings.append(f"model.builtin {builtin!r} takes "
                        f"{builtin_inputs.dimension} inputs but inputs.marginals "
                        f"lists {input_model.dimension}")

    event_sec = _get_section(raw, "event", findings, required=False)
    if event_sec is None:
        if builtin_event is None:
            findings.append("event.threshold required")
    else:
        threshold = _get_number(event_sec, "event.threshold", findings)
        if threshold is not None and not np.isfinite(threshold):
            findings.append(f"event.threshold must be finite, got {threshold}")

    _parse_smc(raw, input_model, findings)

    dens = _get_section(raw, "density", findings, required=False)
    _parse_exponents(dens, "density.marginal_exponents", findings)
    _parse_exponents(dens, "density.copula_exponents", findings)
    _get_number(dens, "density.support_margin", findings, required=False,
                default=SUPPORT_MARGIN, minimum=0.0)

    idx = _get_section(raw, "indices", findings, required=False)
    _get_number(idx, "indices.n_draws", findings, required=False,
                default=100_000, integer=True, minimum=1)
    divergence = (idx or {}).get("divergence", "total_variation")
    eta_method = (idx or {}).get(
        "eta_method", "quadrature" if divergence == "total_variation" else "monte_carlo")
    if eta_method not in ("monte_carlo", "quadrature"):
        findings.append(f"indices.eta_method must be 'monte_carlo' or 'quadrature', "
                        f"got {eta_method!r}")
    if divergence not in _DIVERGENCES:
        findings.append(f"indices.divergence must be one of "
                        f"{', '.join(_DIVERGENCES)}, got {divergence!r}")
    if divergence != "total_variation" and eta_method == "quadrature":
        findings.append("indices.eta_method 'quadrature' only supports the "
                        "total_variation divergence")

    _get_number(raw, "replications", findings, integer=True, minimum=1)
    _get_number(raw, "seed", findings, required=False, default=0,
                integer=True, minimum=0, maximum=2**64 - 1)
    return findings


def parse_config(raw: dict) -> CampaignConfig:
    """Build a :class:`CampaignConfig`; raise :class:`ConfigError` if invalid."""
    findings = validate_config(raw)
    if findings:
        raise ConfigError(findings)
    builtin, command, extra = _parse_model(raw, [])
    builtin_inputs, builtin_event = (extra if builtin else (None, None))
    input_model, names = _parse_inputs(raw, builtin_inputs, [])
    if names is None:
        names = tuple(f"X{i + 1}" for i in range(input_model.dimension))
    event_sec = raw.get("event")
    if event_sec is not None and "threshold" in event_sec:
        event = FailureEvent(float(event_sec["threshold"]))
    else:
        event = builtin_event
    dens = raw.get("density") or {}
    idx = raw.get("indices") or {}
    return CampaignConfig(
        builtin=builtin,
        command=command,
        input_model=input_model,
        input_names=names,
        event=event,
        smc=_parse_smc(raw, input_model, []),
        marginal_exponents=_parse_exponents(dens, "density.marginal_exponents", []),
        copula_exponents=_parse_exponents(dens, "density.copula_exponents", []),
        support_margin=float(dens.get("support_margin", SUPPORT_MARGIN)),
        n_draws=int(idx.get("n_draws", 100_000)),
        eta_method=idx.get("eta_method", "quadrature"
                           if idx.get("divergence", "total_variation") == "total_variation"
                           else "monte_carlo"),
        divergence=idx.get("divergence", "total_variation"),
        replications=int(raw["replications"]),
        master_seed=int(raw.get("seed", 0)),
        raw=raw,
    )


def load_config(path) -> CampaignConfig:
    """Read and validate a JSON config file."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    return parse_config(raw)


def _make_blackbox(config: CampaignConfig) -> BlackBox:
    if config.builtin:
        box, _, _ = builtin_model(config.builtin)
        return box
    return external_blackbox(list(config.command), config.dimension)


def replication_seed(master_seed: int, rep: int) -> int:
    """Splitting seed for replication ``rep`` (counter-based, stable)."""
    return int(seed_sequence(master_seed, REPLICATION, rep)
               .generate_state(1, np.uint64)[0])


def run_replication(config: CampaignConfig, rep: int,
                    box: BlackBox | None = None) -> dict:
    """Run the full pipeline once and return the per-replication record.

    The record maps each family in :data:`FAMILY_ORDER` to a
    ``(values, clip_flags)`` pair plus scalars describing the splitting
    run (``p_f_hat``, level count, call split, acceptance rates).
    """
    if box is None:
        box = _make_blackbox(config)
    calls_before = box.call_count
    params = replace(config.smc, seed=replication_seed(config.master_seed, rep))
    result = run_adaptive_smc(box, config.input_model, config.event, params)
    sample, outputs = result.conditioned_sample, result.conditioned_outputs

    divergence = _DIVERGENCES[config.divergence]()
    bounded = config.divergence == "total_variation"
    d = config.dimension
    values = {fam: np.empty(d) for fam in FAMILY_ORDER}
    flags = {fam: np.zeros(d, dtype=bool) for fam in FAMILY_ORDER}
    for i in range(d):
        marginal = config.input_model.marginals[i]
        pair = np.column_stack([sample[:, i], outputs])
        density = solve_maxent(fractional_moments_1d(
            sample[:, i], config.marginal_exponents, margin=config.support_margin))
        copula = solve_maxent(copula_fractional_moments(pair, config.copula_exponents))

        def draws(fam):
            return stream(config.master_seed, _INDEX_DRAWS, rep, i,
                          _FAMILY_STREAM[fam])

        delta_f = delta_index(copula, config.n_draws, draws("delta_f"), divergence)
        if config.eta_method == "quadrature":
            eta_bar = target_tv_index(density, marginal, method="quadrature")
        else:
            eta_bar = csiszar_marginal_index(density, marginal, divergence,
                                             config.n_draws, draws("eta_bar"))
        sobol = sobol_indicator_index(density, marginal, result.p_f_hat,
                                      config.n_draws, draws("sobol_indicator"))
        values["delta_f"][i], flags["delta_f"][i] = _clip(delta_f, bounded)
        values["eta_bar"][i], flags["eta_bar"][i] = _clip(eta_bar, bounded)
        values["eta"][i] = scaled_target_index(values["eta_bar"][i], result.p_f_hat)
        values["sobol_indicator"][i], flags["sobol_indicator"][i] = _clip(sobol, True)

    return {
        "families": {fam: (values[fam], flags[fam]) for fam in FAMILY_ORDER},
        "p_f_hat": result.p_f_hat,
        "n_levels": result.n_levels,
        "levels": result.levels,
        "acceptance_rates": result.acceptance_rates,
        "final_acceptance_rate": result.final_acceptance_rate,
        "calls_probability": result.calls_probability_phase,
        "calls_sampling": result.calls_sampling_phase,
        "calls_counter": box.call_count - calls_before,
    }


def _clip(value: float, bounded: bool) -> tuple[float, bool]:
    """Clip into [0, 1] for bounded generators, else only floor at zero."""
    if bounded:
        return clip_unit(value)
    if value >= 0.0:
        return float(value), False
    return 0.0, True


def _job(raw: dict, rep: int) -> dict:
    return run_replication(parse_config(raw), rep)


@dataclass(frozen=True)
class CampaignReport:
    """Everything a finished campaign produced.

    The aggregated table lives in ``indices`` (an
    :class:`~relsense.indices.IndexReport`); ``per_replication`` keeps the
    raw family tables so the CSV can list every replication.  The call
    split is cross-checked against the black box call counter:
    ``calls_probability + calls_sampling == calls_counter_total`` always
    holds.  ``wall_clock_seconds`` is the one field excluded from the
    deterministic report body.
    """

    config_echo: dict
    version: str
    indices: IndexReport
    references: dict[str, tuple[float, ...]] | None
    per_replication: tuple[dict, ...]
    p_f_per_replication: tuple[float, ...]
    n_levels_per_replication: tuple[int, ...]
    calls_probability: int
    calls_sampling: int
    calls_counter_total: int
    master_seed: int
    wall_clock_seconds: float

    @property
    def calls_total(self) -> int:
        return self.calls_probability + self.calls_sampling

    def deterministic_body(self) -> dict:
        """The report content that is a pure function of (config, seed)."""
        rep = self.indices
        return {
            "version": self.version,
            "config": self.config_echo,
            "master_seed": self.master_seed,
            "replications": rep.n_replications,
            "input_names": list(rep.input_names),
            "p_f_hat": rep.p_f_hat,
            "p_f_per_replication": list(self.p_f_per_replication),
            "n_levels_per_replication": list(self.n_levels_per_replication),
            "calls": {
                "probability_phase": self.calls_probability,
                "sampling_phase": self.calls_sampling,
                "total": self.calls_total,
                "counter_total": self.calls_counter_total,
            },
            "indices": {
                fam: {
                    "mean": rep.estimates[fam].tolist(),
                    "sd": rep.sds[fam].tolist(),
                    "rank": rep.ranks[fam].tolist(),
                    "clipped": rep.clipped[fam].tolist(),
                }
                for fam in FAMILY_ORDER
            },
            "references": (
                None if self.references is None
                else {k: list(v) for k, v in self.references.items()}
            ),
            "dependent_inputs": rep.dependent_inputs,
        }

    def to_json(self) -> str:
        body = {"report": self.deterministic_body(),
                "timing": {"wall_clock_seconds": self.wall_clock_seconds}}
        return json.dumps(body, indent=2) + "\n"

    def csv_text(self) -> str:
        """Per-replication estimates, one row per (replication, input, family).

        Ranks are recomputed within each replication and family.  The
        body is a pure function of (config, seed): no timestamps, fixed
        ordering, C-locale floats.
        """
        out = io.StringIO()
        out.write("replication,input_index,index_family,estimate,rank\n")
        for r, record in enumerate(self.per_replication):
            for fam in FAMILY_ORDER:
                vals = record["families"][fam][0]
                ranks = rank_descending(vals)
                for i, (v, k) in enumerate(zip(vals, ranks)):
                    out.write(f"{r},{i + 1},{fam},{v:.12g},{k}\n")
        return out.getvalue()

    def summary_table(self) -> str:
        """Aggregated table: reference (rank) | mean (rank) | sd | RD.

        RD is the relative deviation ``(reference - mean) / reference``,
        blank when no reference exists or the reference is zero.
        """
        rep = self.indices
        model = self.config_echo.get("model", {})
        label = model.get("builtin") or " ".join(model.get("command", ["?"]))
        rows = [f"model: {label}  replications: {rep.n_replications}  "
                f"p_f_hat: {rep.p_f_hat:.6g}  calls: {self.calls_total}"]
        header = (f"{'index':<16}{'input':<12}{'reference':>16}"
                  f"{'mean':>16}{'sd':>12}{'RD':>10}")
        rows += [header, "-" * len(header)]
        for fam in FAMILY_ORDER:
            refs = (self.references or {}).get(fam)
            ref_ranks = None
            if refs is not None:
                ref_ranks = rank_descending(np.asarray(refs))
            for i, name in enumerate(rep.input_names):
                mean, sd = rep.estimates[fam][i], rep.sds[fam][i]
                rank = rep.ranks[fam][i]
                if refs is None:
                    ref_txt, rd_txt = "-", "-"
                else:
                    ref_txt = f"{refs[i]:.4g} ({ref_ranks[i]})"
                    rd_txt = (f"{(refs[i] - mean) / refs[i]:.3f}"
                              if refs[i] != 0.0 else "-")
                clip_mark = "*" if rep.clipped[fam][i] else ""
                rows.append(f"{fam:<16}{name:<12}{ref_txt:>16}"
                            f"{f'{mean:.4g} ({rank}){clip_mark}':>16}"
                            f"{sd:>12.4g}{rd_txt:>10}")
        rows.append("(* at least one replication was clipped into range)")
        return "\n".join(rows)


_REFERENCE_CACHE: dict[str, dict[str, tuple[float, ...]]] = {}


def _reference_table(config: CampaignConfig) -> dict[str, tuple[float, ...]] | None:
    """Per-family reference values when the campaign targets a builtin.

    Only attached when the builtin's canonical inputs and threshold are
    unchanged; any override invalidates the tabulated values.
    """
    if config.builtin is None or config.builtin == "sdof_oscillator":
        return None
    _, canon_inputs, canon_event = builtin_model(config.builtin)
    if (config.input_model != canon_inputs
            or config.event.threshold != canon_event.threshold
            or config.divergence != "total_variation"):
        return None
    if config.builtin not in _REFERENCE_CACHE:
        from . import oracle

        fn = oracle.toy1_references if config.builtin == "toy1" else oracle.chi2_references
        by_name = {rv.name: rv.value for rv in fn()}
        d = config.dimension
        table = {"p_f": (by_name["p_f"],)}
        for fam in FAMILY_ORDER:
            if fam == "eta":
                table[fam] = tuple(2.0 * by_name["p_f"] * by_name[f"eta_bar_{i + 1}"]
                                   for i in range(d))
            else:
                table[fam] = tuple(by_name[f"{fam}_{i + 1}"] for i in range(d))
        _REFERENCE_CACHE[config.builtin] = table
    return _REFERENCE_CACHE[config.builtin]


def run_campaign(config: CampaignConfig, jobs: int = 1,
                 with_references: bool = True) -> CampaignReport:
    """Run every replication and aggregate.

    ``jobs > 1`` distributes replications over worker processes; the
    result is identical to the sequential one because each replication
    only touches its own seed streams.  External models force ``jobs=1``
    (a single child process holds the pipe).
    """
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    if config.command is not None and jobs > 1:
        warnings.warn("external models run replications sequentially; "
                      "forcing jobs=1", stacklevel=2)
        jobs = 1
    start = time.perf_counter()
    records: list[dict] = []
    if jobs == 1:
        box = _make_blackbox(config)
        try:
            for r in range(config.replications):
                records.append(_guard(run_replication, config, r, box))
        finally:
            close = getattr(box, "close", None)
            if close:
                close()
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_job, config.raw, r)
                       for r in range(config.replications)]
            for r, fut in enumerate(futures):
                records.append(_guard_future(fut, config, r))
    wall = time.perf_counter() - start

    indices = aggregate_replications(
        [rec["families"] for rec in records],
        [rec["p_f_hat"] for rec in records],
        config.input_names, config.n_draws,
        dependent_inputs=config.input_model.dependence != "independent")
    return CampaignReport(
        config_echo=config.raw,
        version=__version__,
        indices=indices,
        references=_reference_table(config) if with_references else None,
        per_replication=tuple(records),
        p_f_per_replication=tuple(rec["p_f_hat"] for rec in records),
        n_levels_per_replication=tuple(rec["n_levels"] for rec in records),
        calls_probability=sum(rec["calls_probability"] for rec in records),
        calls_sampling=sum(rec["calls_sampling"] for rec in records),
        calls_counter_total=sum(rec["calls_counter"] for rec in records),
        master_seed=config.master_seed,
        wall_clock_seconds=wall,
    )


def _guard(fn, config, rep, *args):
    try:
        return fn(config, rep, *args)
    except Exception as exc:
        raise CampaignRuntimeError(
            f"replication {rep} (seed {replication_seed(config.master_seed, rep)}) "
            f"failed: {exc}") from exc


def _guard_future(fut, config, rep):
    try:
        return fut.result()
    except Exception as exc:
        raise CampaignRuntimeError(
            f"replication {rep} (seed {replication_seed(config.master_seed, rep)}) "
            f"failed: {exc}") from exc


def write_outputs(report: CampaignReport, out_dir) -> tuple[Path, Path]:
    """Write ``report.json`` and ``indices.csv``; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "report.json"
    csv_path = out / "indices.csv"
    report_path.write_text(report.to_json())
    csv_path.write_text(report.csv_text())
    return report_path, csv_path
