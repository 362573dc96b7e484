"""Seeded experiment runner: configuration, trial streams, worker pool and output files.

Every trial draws from its own counter-based stream
``Generator(Philox(SeedSequence(master_seed, spawn_key=(trial,))))``.  The
stream depends only on the master seed and the trial index, so results do not
depend on worker count or scheduling.  Sweep points reuse the same trial
streams, which pairs trials across sweep points and cancels most of the
sampling noise in differences between points.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .adiabatic import adiabatic_preparation, make_schedule, window_mass
from .noise import (
    NoiseModel,
    conditional_fidelity,
    decay_prob,
    dephasing_flip_prob,
    record_jitters,
    run_noisy_preparation,
    success_lower_bound,
)
from .oracle import full_pe_run
from .phase_estimation import (
    make_plan,
    n_bits,
    round_time,
    run_preparation,
    run_preparation_batch,
    run_targeted_preparation,
    targeted_success_probability,
)
from .pi_code import PiCodeParams, find_angles, prepare_9qubit

EXPERIMENTS = (
    "prepare",
    "targeted",
    "dephasing-rates",
    "fidelity-bound",
    "jitter-sweep",
    "picode",
    "adiabatic",
    "oracle-check",
)
WORKERS_ENV = "DICKEPREP_WORKERS"


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class RunConfig:
    kind: str
    n_spins: int = 500
    gamma: float = 5e6
    n_rounds: int | None = None
    trials: int = 200
    master_seed: int = 0
    t1: float = 50e-6
    t_phi: float = 2e-6
    sigmas: tuple[float, ...] = (0.0,)
    repetitions: tuple[int, ...] = (1,)
    gammas: tuple[float, ...] = (1e6, 2e6, 5e6, 1e7)
    k_rounds: int = 20
    target_m: int = 0
    ties: str = "half"
    n_list: tuple[int, ...] = (2, 4, 6, 8, 10)
    coupling_g: float = 1e6
    theta: float = 0.57056
    find: bool = False

    def validate(self) -> "RunConfig":
        if self.kind not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.n_spins < 2 or self.n_spins % 2:
            raise ConfigError("N must be an even integer >= 2")
        if not self.gamma > 0 or any(not g > 0 for g in self.gammas):
            raise ConfigError("coupling rates must be positive")
        if not (self.t1 > 0 and self.t_phi > 0):
            raise ConfigError("T1 and T_phi must be positive")
        if any(s < 0 for s in self.sigmas):
            raise ConfigError("jitter sigma must be nonnegative")
        if any(m < 1 for m in self.repetitions):
            raise ConfigError("repetitions must be >= 1")
        if self.ties not in ("half", "fail"):
            raise ConfigError("ties must be 'half' or 'fail'")
        if self.n_rounds is not None and not 1 <= self.n_rounds <= n_bits(self.n_spins):
            raise ConfigError(f"rounds must lie in 1..{n_bits(self.n_spins)}")
        if self.master_seed < 0:
            raise ConfigError("seed must be nonnegative")
        return self

    def echo(self) -> dict:
        """JSON-safe config echo (non-finite floats as strings)."""

        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        return {k: clean(v) for k, v in asdict(self).items()}


# Defaults that differ between experiments; everything else uses RunConfig.
EXPERIMENT_DEFAULTS = {
    "prepare": {"t1": math.inf, "t_phi": math.inf},
    "targeted": {"t1": math.inf, "t_phi": math.inf, "n_spins": 100, "trials": 2000},
    "jitter-sweep": {"t1": math.inf, "t_phi": math.inf, "n_rounds": 6, "sigmas": (0.5e-9, 1e-9, 3e-9, 6e-9, 10e-9), "repetitions": (1, 3, 5)},
    "fidelity-bound": {"repetitions": tuple(range(1, 16))},
    "dephasing-rates": {"k_rounds": 8},
    "adiabatic": {"n_spins": 400, "trials": 1000},
    "oracle-check": {"trials": 100},
    "picode": {"repetitions": tuple(range(1, 8))},
}


# --- parsing ----------------------------------------------------------------

_UNITS = {
    "": 1.0,
    "s": 1.0,
    "ms": 1e-3,
    "us": 1e-6,
    "µs": 1e-6,
    "ns": 1e-9,
    "hz": 1.0,
    "khz": 1e3,
    "mhz": 1e6,
    "ghz": 1e9,
}


def parse_quantity(text: str) -> float:
    """``"5MHz"`` -> 5e6, ``"2us"`` -> 2e-6, ``"inf"`` -> inf.

    Frequencies are angular rates: "5MHz" means 5e6 rad/s, the convention
    under which the first round lasts pi / gamma.
    """
    t = str(text).strip()
    if t.lower() in ("inf", "infinity", "none", "off"):
        return math.inf
    mt = re.fullmatch(r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-zµ]*)", t)
    if not mt or mt.group(2).lower() not in _UNITS:
        raise ConfigError(f"cannot parse quantity {text!r}")
    return float(mt.group(1)) * _UNITS[mt.group(2).lower()]


def parse_int_list(text: str) -> tuple[int, ...]:
    """Comma list with ``a..b`` ranges (inclusive), e.g. ``"1..5,9"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError as exc:
            raise ConfigError(f"cannot parse integer list {text!r}") from exc
    if not out:
        raise ConfigError(f"empty list {text!r}")
    return tuple(out)


def parse_quantity_list(text: str) -> tuple[float, ...]:
    vals = tuple(parse_quantity(p) for p in str(text).split(",") if p.strip())
    if not vals:
        raise ConfigError(f"empty list {text!r}")
    return vals


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; keys may use dashes."""
    entries = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        entries[key.replace("-", "_")] = value
    return entries


# key -> (RunConfig field, parser)
FIELD_PARSERS = {
    "n": ("n_spins", int),
    "gamma": ("gamma", parse_quantity),
    "rounds": ("n_rounds", int),
    "trials": ("trials", int),
    "seed": ("master_seed", int),
    "t1": ("t1", parse_quantity),
    "tphi": ("t_phi", parse_quantity),
    "sigma": ("sigmas", parse_quantity_list),
    "m": ("repetitions", parse_int_list),
    "gammas": ("gammas", parse_quantity_list),
    "k": ("k_rounds", int),
    "target": ("target_m", int),
    "ties": ("ties", str),
    "ns": ("n_list", parse_int_list),
    "g": ("coupling_g", parse_quantity),
    "theta": ("theta", float),
    "find": ("find", lambda s: str(s).lower() in ("1", "true", "yes", "on")),
}


def build_config(kind: str, file_values: dict[str, str] | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Experiment defaults, then config-file values, then CLI overrides."""
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {kind!r}")
    cfg = replace(RunConfig(kind), **EXPERIMENT_DEFAULTS.get(kind, {}))
    for source in (file_values or {}, overrides or {}):
        updates = {}
        for key, raw in source.items():
            if key not in FIELD_PARSERS:
                raise ConfigError(f"unknown setting {key!r}")
            name, parser = FIELD_PARSERS[key]
            try:
                updates[name] = parser(raw)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        cfg = replace(cfg, **updates)
    return cfg.validate()


# --- trial streams and pool ---------------------------------------------------


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(trial,))))


def worker_count(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get(WORKERS_ENV)
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer") from exc


def _run_chunk(args):
    func, cfg, trials = args
    return [func(cfg, t) for t in trials]


def map_trials(func, cfg: RunConfig, n_trials: int, workers: int = 1) -> list:
    """``[func(cfg, t) for t in range(n_trials)]``, optionally on a process pool."""
    if workers <= 1 or n_trials < 2:
        return [func(cfg, t) for t in range(n_trials)]
    n_chunks = min(n_trials, 4 * workers)
    chunks = [list(range(n_trials))[i::n_chunks] for i in range(n_chunks)]
    out = [None] * n_trials
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for chunk, results in zip(chunks, pool.map(_run_chunk, [(func, cfg, c) for c in chunks])):
            for t, r in zip(chunk, results):
                out[t] = r
    return out


# --- results ------------------------------------------------------------------


@dataclass
class RunResult:
    config: RunConfig
    columns: tuple[str, ...]
    rows: list[dict]
    aggregates: dict = field(default_factory=dict)

    def provenance(self) -> dict:
        return {"experiment": self.config.kind, "version": __version__, "master_seed": self.config.master_seed}


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for row in result.rows:
        w.writerow([format_value(row[c]) for c in result.columns])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def json_text(result: RunResult) -> str:
    doc = {**result.provenance(), "config": result.config.echo(), "aggregates": result.aggregates}
    return json.dumps(_json_safe(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_outputs(result: RunResult, csv_path: Path, json_path: Path) -> None:
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(csv_text(result))
    json_path.write_text(json_text(result))


def summarize(values) -> dict:
    """Mean and normal-approximation 95% half-width ``1.96 s / sqrt(n)``."""
    x = np.asarray(values, dtype=float)
    n = x.size
    mean = float(x.mean()) if n else math.nan
    sd = float(x.std(ddof=1)) if n > 1 else 0.0
    return {"n": n, "mean": mean, "ci95": 1.96 * sd / math.sqrt(n) if n else math.nan}


def group_key(row: dict, keys) -> str:
    return ",".join(f"{k}={format_value(row[k])}" for k in keys)


def aggregate_rows(rows: list[dict], group_by: tuple[str, ...], value_cols: tuple[str, ...], flag_cols: tuple[str, ...] = ()) -> dict:
    """Per-group summaries of ``value_cols`` and rates of boolean ``flag_cols``."""
    groups: dict[str, list[dict]] = {}
    for row in rows:
        groups.setdefault(group_key(row, group_by), []).append(row)
    out = {}
    for key, members in groups.items():
        entry = {c: summarize([float(r[c]) for r in members]) for c in value_cols}
        for c in flag_cols:
            entry[f"{c}_rate"] = float(np.mean([float(r[c]) for r in members]))
        out[key or "all"] = entry
    return out


# --- experiments ----------------------------------------------------------------


def _bitstring(bits) -> str:
    return "".join(str(b) for b in bits)


def _prepare_trial(cfg: RunConfig, trial: int) -> list[dict]:
    plan = make_plan(cfg.n_spins, cfg.gamma, cfg.n_rounds)
    rows = []
    for m_reps in cfg.repetitions:
        noise = NoiseModel(cfg.t1, cfg.t_phi, cfg.gamma, cfg.sigmas[0], m_reps)
        rec = run_noisy_preparation(plan, noise, trial_rng(cfg.master_seed, trial))
        rows.append(
            {
                "reps": m_reps,
                "trial": trial,
                "bits": _bitstring(rec.bits),
                "decoded_m": rec.decoded_m,
                "fidelity": rec.fidelity,
                "success": rec.extras["success"],
                "n_decays": rec.extras["n_decays"],
                "n_flips": rec.extras["n_flips"],
                "n_ties": rec.extras["n_ties"],
            }
        )
    return rows


def _prepare_batch_rows(cfg: RunConfig) -> list[dict]:
    """Noiseless single-shot rounds through the batched path; same rows as :func:`_prepare_trial`."""
    plan = make_plan(cfg.n_spins, cfg.gamma, cfg.n_rounds)
    uniforms = np.array([trial_rng(cfg.master_seed, t).random(plan.n_rounds) for t in range(cfg.trials)])
    out = run_preparation_batch(plan, uniforms)
    return [
        {
            "reps": 1,
            "trial": t,
            "bits": _bitstring(out.bits[t]),
            "decoded_m": int(out.decoded_m[t]),
            "fidelity": float(out.fidelity[t]),
            "success": True,
            "n_decays": 0,
            "n_flips": 0,
            "n_ties": 0,
        }
        for t in range(cfg.trials)
    ]


def _jitter_trial(cfg: RunConfig, trial: int) -> list[dict]:
    plan = make_plan(cfg.n_spins, cfg.gamma, cfg.n_rounds)
    rows = []
    for sigma in cfg.sigmas:
        for m_reps in cfg.repetitions:
            noise = NoiseModel(cfg.t1, cfg.t_phi, cfg.gamma, sigma, m_reps)
            rec = run_noisy_preparation(plan, noise, trial_rng(cfg.master_seed, trial))
            rows.append(
                {
                    "sigma": sigma,
                    "reps": m_reps,
                    "trial": trial,
                    "decoded_m": rec.decoded_m,
                    "fidelity": rec.fidelity,
                    "conditional_fidelity": conditional_fidelity(plan, noise, record_jitters(rec)),
                }
            )
    return rows


def _targeted_trial(cfg: RunConfig, trial: int) -> list[dict]:
    rec = run_targeted_preparation(cfg.n_spins, cfg.target_m, cfg.gamma, trial_rng(cfg.master_seed, trial), cfg.n_rounds)
    return [
        {
            "trial": trial,
            "target_m": cfg.target_m,
            "bits": _bitstring(rec.bits),
            "decoded_m": rec.decoded_m,
            "accepted": rec.accepted,
            "fidelity": rec.fidelity,
        }
    ]


def _adiabatic_trial(cfg: RunConfig, trial: int) -> list[dict]:
    rec = adiabatic_preparation(cfg.n_spins, cfg.coupling_g, trial_rng(cfg.master_seed, trial))
    return [
        {
            "trial": trial,
            "label": rec.extras["label"],
            "status": rec.extras["status"],
            "decoded_m": rec.decoded_m,
            "accepted": rec.accepted,
            "fidelity": rec.fidelity,
        }
    ]


def _oracle_trial(cfg: RunConfig, trial: int) -> list[dict]:
    rows = []
    for n in cfg.n_list:
        plan = make_plan(n, cfg.gamma)
        a = run_preparation(plan, trial_rng(cfg.master_seed, trial))
        b = full_pe_run(plan, trial_rng(cfg.master_seed, trial))
        diffs = [abs(x - y) for x, y in zip(a.born_probabilities, b.born_probabilities)]
        rows.append(
            {
                "n": n,
                "trial": trial,
                "bits_equal": a.bits == b.bits,
                "max_prob_diff": max(diffs) if len(diffs) == len(a.bits) == len(b.bits) else math.inf,
                "fidelity_collective": a.fidelity,
                "fidelity_full": b.fidelity,
                "decoded_m": a.decoded_m,
            }
        )
    return rows


def _flatten(per_trial: list[list[dict]]) -> list[dict]:
    # order rows by sweep point first, then by trial, independent of scheduling
    rows = [r for group in per_trial for r in group]
    sweep_cols = [c for c in ("n", "sigma", "reps") if rows and c in rows[0]]
    return sorted(rows, key=lambda r: tuple(r[c] for c in sweep_cols) + (r["trial"],))


def run_experiment(cfg: RunConfig, workers: int = 1) -> RunResult:
    kind = cfg.kind
    if kind == "prepare":
        noiseless = math.isinf(cfg.t1) and math.isinf(cfg.t_phi) and cfg.sigmas[0] == 0.0
        if noiseless and cfg.repetitions == (1,):
            rows = _prepare_batch_rows(cfg)
        else:
            rows = _flatten(map_trials(_prepare_trial, cfg, cfg.trials, workers))
        cols = ("reps", "trial", "bits", "decoded_m", "fidelity", "success", "n_decays", "n_flips", "n_ties")
        agg = aggregate_rows(rows, ("reps",), ("fidelity",), ("success",))
        return RunResult(cfg, cols, rows, agg)
    if kind == "jitter-sweep":
        rows = _flatten(map_trials(_jitter_trial, cfg, cfg.trials, workers))
        cols = ("sigma", "reps", "trial", "decoded_m", "fidelity", "conditional_fidelity")
        agg = aggregate_rows(rows, ("sigma", "reps"), ("fidelity", "conditional_fidelity"))
        return RunResult(cfg, cols, rows, agg)
    if kind == "targeted":
        rows = _flatten(map_trials(_targeted_trial, cfg, cfg.trials, workers))
        cols = ("trial", "target_m", "bits", "decoded_m", "accepted", "fidelity")
        agg = aggregate_rows(rows, (), ("fidelity",), ("accepted",))
        agg["all"]["predicted_accept_rate"] = targeted_success_probability(cfg.n_spins, cfg.target_m)
        return RunResult(cfg, cols, rows, agg)
    if kind == "adiabatic":
        rows = _flatten(map_trials(_adiabatic_trial, cfg, cfg.trials, workers))
        cols = ("trial", "label", "status", "decoded_m", "accepted", "fidelity")
        agg = aggregate_rows(rows, (), (), ("accepted",))
        agg["accepted"] = summarize([r["fidelity"] for r in rows if r["accepted"]])
        sched = make_schedule(cfg.n_spins, cfg.coupling_g)
        agg["schedule"] = {"centre": sched.centre, "window": list(sched.window), "rounds": sched.n_rounds, "window_mass": window_mass(cfg.n_spins)}
        return RunResult(cfg, cols, rows, agg)
    if kind == "oracle-check":
        rows = _flatten(map_trials(_oracle_trial, cfg, cfg.trials, workers))
        cols = ("n", "trial", "bits_equal", "max_prob_diff", "fidelity_collective", "fidelity_full", "decoded_m")
        agg = aggregate_rows(rows, ("n",), ("max_prob_diff",), ("bits_equal",))
        return RunResult(cfg, cols, rows, agg)
    if kind == "dephasing-rates":
        rows = []
        for gamma in cfg.gammas:
            for j in range(1, cfg.k_rounds + 1):
                t = round_time(j, gamma)
                rows.append({"gamma": gamma, "round": j, "t": t, "p_dephase": dephasing_flip_prob(t, cfg.t_phi), "p_decay": decay_prob(t, cfg.t1)})
        return RunResult(cfg, ("gamma", "round", "t", "p_dephase", "p_decay"), rows, {})
    if kind == "fidelity-bound":
        rows = []
        for m_reps in cfg.repetitions:
            noise = NoiseModel(cfg.t1, cfg.t_phi, cfg.gamma, 0.0, m_reps)
            p, per_round = success_lower_bound(cfg.k_rounds, m_reps, noise, cfg.ties)
            rows.append({"reps": m_reps, "k": cfg.k_rounds, "bound": p, "worst_round": min(per_round)})
        return RunResult(cfg, ("reps", "k", "bound", "worst_round"), rows, {})
    if kind == "picode":
        rows = []
        for m_reps in cfg.repetitions:
            r = prepare_9qubit(m_reps, cfg.theta)
            rows.append({"reps": m_reps, "theta": cfg.theta, "fidelity": r.fidelity, "fidelity_squared": r.fidelity_squared, "p_succ": r.p_succ})
        agg = {}
        if cfg.find:
            s = find_angles(PiCodeParams(3, 3), 1, seed=cfg.master_seed)
            agg["angle_search"] = {"angles": list(s.angles), "residual": s.residual, "converged": s.converged}
        return RunResult(cfg, ("reps", "theta", "fidelity", "fidelity_squared", "p_succ"), rows, agg)
    raise ConfigError(f"unknown experiment {kind!r}")


def config_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(RunConfig))
