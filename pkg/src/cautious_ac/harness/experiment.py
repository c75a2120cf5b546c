"""Seeded experiment orchestration, bound checking and CSV/JSON emission."""

import csv
import io
import itertools
import json
import math
import statistics
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..algorithms import (
    AlgoConfig,
    IterationRecord,
    hard_value_iteration,
    run_cac,
    run_cpi_classic,
    run_cvi,
    run_spi_shannon,
    soft_optimal_policy,
)
from ..cautious import tv_bound
from ..mdp import ConvergenceError
from ..regularizers import InfiniteKLError
from .config import ConfigError, algo_from_dict
from .metrics import DIVISORS, OscillationReport, oscillation_metrics

__all__ = [
    "RunFailure",
    "BoundViolation",
    "ExperimentResult",
    "RECORD_COLUMNS",
    "SUMMARY_COLUMNS",
    "run_experiment",
    "run_compare",
    "run_sweep",
    "check_bounds",
    "render",
    "write_output",
    "read_records",
    "metrics_from_records",
]

# output column -> IterationRecord field
RECORD_COLUMNS = {
    "k": "k",
    "J": "return_J",
    "zeta": "zeta",
    "M": "m",
    "max_tv": "max_tv_consecutive",
    "max_kl": "max_kl_consecutive",
    "tv_bound": "tv_bound_consecutive",
    "dist_to_opt": "dist_to_soft_optimal_policy",
    "q_change": "q_sup_norm_change",
}
SUMMARY_COLUMNS = ("label", "repeat", "sup_drop", "rms_drop", "num_drops", "num_steps", "divisor")
SUMMARY_MARKER = "#summary"


class RunFailure(RuntimeError):
    """An algorithm failed while running (CLI exit code 3)."""


class BoundViolation(RuntimeError):
    """Measured consecutive-policy TV exceeded its bound (CLI exit code 3)."""

    def __init__(self, label, repeat, k, measured, bound):
        super().__init__(f"{label} repeat {repeat}: max TV {measured!r} exceeds bound {bound!r} at k={k}")
        self.label, self.repeat, self.k = label, repeat, k
        self.measured, self.bound = measured, bound


@dataclass
class ExperimentResult:
    """Rows are ``(label, repeat, IterationRecord)``; summaries ``(label, repeat, OscillationReport)``."""

    rows: list = field(default_factory=list)
    summaries: list = field(default_factory=list)

    def extend(self, other):
        self.rows.extend(other.rows)
        self.summaries.extend(other.summaries)


def _build_env(spec):
    try:
        return spec.build()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot build environment {spec.kind!r}: {exc}") from None


class _References:
    """Optimal policies per (mdp, kappa), computed once per experiment."""

    def __init__(self, mdp):
        self.mdp = mdp
        self.cache = {}

    def get(self, kappa):
        if kappa not in self.cache:
            if kappa > 0:
                self.cache[kappa] = soft_optimal_policy(self.mdp, kappa)
            else:
                self.cache[kappa] = hard_value_iteration(self.mdp)[1]
        return self.cache[kappa]


def _other_fields(cfg, skip):
    return {f.name: getattr(cfg, f.name) for f in fields(AlgoConfig) if f.name not in skip}


def _dispatch(name, mdp, cfg):
    if name == "cac":
        return run_cac(mdp, cfg)
    if name == "cvi":
        rest = _other_fields(cfg, ("reg", "iterations", "eval_tol", "zeta_mode"))
        return run_cvi(mdp, cfg.reg, cfg.iterations, cfg.eval_tol, **rest)
    if name == "spi":
        rest = _other_fields(cfg, ("reg", "iterations", "eval_tol", "zeta_mode"))
        return run_spi_shannon(mdp, cfg.reg.kappa, cfg.iterations, cfg.eval_tol, **rest)
    rest = _other_fields(cfg, ("iterations", "zeta_mode", "eval_tol", "reg"))
    return run_cpi_classic(mdp, cfg.iterations, cfg.zeta_mode, cfg.eval_tol, **rest)


def _run_repeats(mdp, refs, label, algo, repeats, eval_every, seed, keep_trace=False):
    name, base = algo_from_dict(algo, seed)
    kappa = 0.0 if name == "cpi" else base.reg.kappa
    base = replace(base, reference_policy=refs.get(kappa), keep_trace=keep_trace)
    result = ExperimentResult()
    runs = []
    for rep in range(repeats):
        cfg = replace(base, seed=base.seed + rep)
        try:
            run = _dispatch(name, mdp, cfg)
        except (ConvergenceError, InfiniteKLError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise RunFailure(f"{label} repeat {rep}: {exc}") from exc
        kept = [r for r in run.records if r.k % eval_every == 0]
        result.rows.extend((label, rep, r) for r in kept)
        runs.append(run)
    return result, runs


def _summarize(result, divisor):
    by_run = {}
    for label, rep, rec in result.rows:
        by_run.setdefault((label, rep), []).append(rec.return_J)
    for (label, rep), returns in by_run.items():
        if len(returns) >= 2:
            rep_ = oscillation_metrics(returns, divisor)
        else:
            rep_ = OscillationReport(0.0, 0.0, 0, 0, divisor)
        result.summaries.append((label, rep, rep_))
    return result


def run_experiment(config, seed=None, divisor="drops", label=None, algo=None):
    """Run ``config.repeats`` seeded repeats of one algorithm setting.

    Repeat ``r`` uses algorithm seed ``base + r`` where ``base`` is ``seed``
    when given and the configured ``algo.seed`` otherwise.
    """
    mdp = _build_env(config.env)
    algo = config.algo if algo is None else algo
    label = algo.get("name", "cac") if label is None else label
    result, _ = _run_repeats(mdp, _References(mdp), label, algo, config.repeats, config.eval_every, seed)
    return _summarize(result, divisor)


def run_compare(config, seed=None, divisor="drops"):
    """Run every preset of ``config.presets`` on the same environment."""
    if not config.presets:
        raise ConfigError("compare needs a non-empty 'presets' list")
    labels = [lab for lab, _ in config.presets]
    if len(set(labels)) != len(labels):
        raise ConfigError("preset labels must be unique")
    mdp = _build_env(config.env)
    refs = _References(mdp)
    out = ExperimentResult()
    for lab, over in config.presets:
        res, _ = _run_repeats(mdp, refs, lab, {**config.algo, **over}, config.repeats, config.eval_every, seed)
        out.extend(res)
    return _summarize(out, divisor)


def _sweep_points(config):
    grid = config.sweep
    if not grid:
        raise ConfigError("sweep needs a non-empty 'sweep' grid")
    algo = config.algo
    keys = ("kappa", "tau", "zeta", "noise_sigma")
    axes = [grid.get(k, [None]) for k in keys]
    for combo in itertools.product(*axes):
        point = dict(algo)
        parts = []
        for key, value in zip(keys, combo):
            if value is None:
                continue
            if key == "zeta":
                point["zeta"] = {"mode": value} if isinstance(value, str) else {"mode": "fixed", "value": value}
            else:
                point[key] = value
            parts.append(f"{key}={value}")
        yield ";".join(parts) or "base", point


def run_sweep(config, seed=None, divisor="drops"):
    """Cartesian grid over ``kappa``, ``tau``, ``zeta`` and ``noise_sigma``."""
    points = list(_sweep_points(config))
    for _, point in points:
        algo_from_dict(point)
    mdp = _build_env(config.env)
    refs = _References(mdp)
    out = ExperimentResult()
    for lab, point in points:
        res, _ = _run_repeats(mdp, refs, lab, point, config.repeats, config.eval_every, seed)
        out.extend(res)
    return _summarize(out, divisor)


def check_bounds(config, seed=None, perturb=None, log=None):
    """Verify the consecutive-policy TV bound at every iteration of every repeat.

    TVs are recomputed from the stored greedy policies rather than read from
    the records.  ``perturb(k, policy) -> policy`` may replace the greedy
    policy of iteration ``k`` before the check (used to test the failure path).

    Returns the :class:`ExperimentResult`; raises :class:`BoundViolation` on
    the first violation.
    """
    name, cfg = algo_from_dict(config.algo, seed)
    if name == "cpi":
        raise ConfigError("check-bounds needs a regularized algorithm (cac, cvi or spi)")
    if cfg.noise_sigma != 0:
        raise ConfigError("check-bounds requires noise_sigma = 0")
    mdp = _build_env(config.env)
    reg = cfg.reg
    say = log or (lambda msg: None)
    say(f"bound at k=1: {tv_bound(reg, 1, cfg.epsilon, mdp.r_max, mdp.discount).bound:.4f}")
    result, runs = _run_repeats(mdp, _References(mdp), name, config.algo, config.repeats, 1, seed, keep_trace=True)
    init = (
        np.full(mdp.shape, 1.0 / mdp.num_actions) if cfg.init_policy is None else np.asarray(cfg.init_policy)
    )
    for rep, run in enumerate(runs):
        prev = init
        for k, greedy in enumerate(run.trace["greedy"]):
            if perturb is not None:
                greedy = perturb(k, greedy)
            tv = float(0.5 * np.abs(greedy - prev).sum(axis=1).max())
            bound = tv_bound(reg, max(k, 1), cfg.epsilon, mdp.r_max, mdp.discount).bound
            if not tv <= bound:
                raise BoundViolation(name, rep, k, tv, bound)
            prev = greedy
        say(f"repeat {rep}: {len(run.trace['greedy'])} iterations within bound")
    return _summarize(result, "drops")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("booleans are not emitted")
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _record_row(label, rep, rec):
    return [label, rep] + [getattr(rec, f) for f in RECORD_COLUMNS.values()]


def _summary_rows(summaries):
    rows = [[lab, rep, s.sup_drop, s.rms_drop, s.num_drops, s.num_steps, s.divisor] for lab, rep, s in summaries]
    groups = {}
    for lab, _, s in summaries:
        groups.setdefault((lab, s.divisor), []).append(s)
    for (lab, div), reps in groups.items():
        rows.append(
            [
                lab,
                "median",
                float(statistics.median(s.sup_drop for s in reps)),
                float(statistics.median(s.rms_drop for s in reps)),
                float(statistics.median(s.num_drops for s in reps)),
                float(statistics.median(s.num_steps for s in reps)),
                div,
            ]
        )
    return rows


def _render_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "repeat", *RECORD_COLUMNS])
    for row in result.rows:
        w.writerow([_fmt(x) for x in _record_row(*row)])
    buf.write(SUMMARY_MARKER + "\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in _summary_rows(result.summaries):
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _render_json(result):
    records = [
        dict(zip(["label", "repeat", *RECORD_COLUMNS], map(_jsonable, _record_row(*row)))) for row in result.rows
    ]
    summary = [dict(zip(SUMMARY_COLUMNS, map(_jsonable, row))) for row in _summary_rows(result.summaries)]
    return json.dumps({"records": records, "summary": summary}, indent=2, sort_keys=True) + "\n"


def render(result, fmt="csv"):
    if fmt == "csv":
        return _render_csv(result)
    if fmt == "json":
        return _render_json(result)
    raise ValueError(f"unknown format {fmt!r}")


def write_output(text, path):
    """Write ``text`` to ``path`` (``None`` or ``"-"`` means stdout is handled by the caller)."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from None


def _to_record(values):
    kw = {}
    for col, fname in RECORD_COLUMNS.items():
        v = values[col]
        kw[fname] = int(v) if fname == "k" else float(v)
    return IterationRecord(**kw)


def _parse_csv(text):
    head, _, _ = text.partition(SUMMARY_MARKER + "\n")
    reader = csv.DictReader(io.StringIO(head))
    expected = ["label", "repeat", *RECORD_COLUMNS]
    if reader.fieldnames != expected:
        raise ConfigError(f"unexpected CSV header {reader.fieldnames}")
    return [(row["label"], int(row["repeat"]), _to_record(row)) for row in reader]


def _parse_json(text):
    data = json.loads(text)
    return [(r["label"], int(r["repeat"]), _to_record(r)) for r in data["records"]]


def read_records(path):
    """Parse the record section of a file written by :func:`render`."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        if text.lstrip().startswith("{"):
            return _parse_json(text)
        return _parse_csv(text)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot parse records in {path}: {exc}") from None


def metrics_from_records(rows, divisors=DIVISORS):
    """Oscillation summaries recomputed from parsed rows, one set per divisor.

    The returned result carries no rows, so rendering it emits only the
    summary block.
    """
    out = ExperimentResult()
    for div in divisors:
        tmp = _summarize(ExperimentResult(rows=list(rows)), div)
        out.summaries.extend(tmp.summaries)
    return out
