"""Command-line driver.

A run is described by a YAML file::

    command: capital
    seed: 20240101
    cells:
      - label: retail
        frequency: {family: poisson, lam: 10}
        severity: {family: lognormal, mu: 1, sigma: 2}
    solver: {method: FFT, M: 65536}

and executed with ``oplda --config run.yaml --out results``. Every key is
checked against the schema of its command; unknown keys, missing required
keys and out-of-domain parameters are reported with the line they occur
on. Exit codes: 0 success, 2 configuration, 3 data, 4 numerics,
5 convergence.
"""

import argparse
import csv
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import aggregate, bayeslib, capital, deplib, fitlib
from .distlib import (
    GB2,
    GCD,
    GPD,
    Binomial,
    GandH,
    InsurancePolicy,
    Lognormal,
    NegBinomial,
    Poisson,
    RiskCell,
)
from .errors import ConfigError, DataError, LDAError, ParameterDomainError
from .io import write_rows

log = logging.getLogger("oplda")

COMMANDS = ("fit", "aggregate", "capital", "dependence-study", "bias-study", "combine")

FREQUENCY_FAMILIES = {
    "poisson": (Poisson, ("lam",)),
    "negbinomial": (NegBinomial, ("r", "p")),
    "binomial": (Binomial, ("n", "p")),
}
SEVERITY_FAMILIES = {
    "lognormal": (Lognormal, ("mu", "sigma")),
    "gpd": (GPD, ("xi", "beta")),
    "gandh": (GandH, ("a", "b", "g", "h")),
    "gb2": (GB2, ("a", "b", "p", "q")),
    "gcd": (GCD, ("alpha", "M", "c")),
}
DEPENDENCE_KINDS = (
    "independent",
    "frequency_copula",
    "aggregate_copula",
    "interarrival_copula",
    "common_factor",
    "common_shock",
)


# -- YAML with line numbers -------------------------------------------------


class Mapping(dict):
    """dict that remembers the 1-based line of itself and of each key."""

    line = None

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.lines = {}

    def line_of(self, key):
        return self.lines.get(key, self.line)


class Sequence(list):
    line = None


def _convert(node, loader):
    if isinstance(node, yaml.MappingNode):
        out = Mapping()
        out.line = node.start_mark.line + 1
        for k, v in node.value:
            key = loader.construct_object(k, deep=True)
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", k.start_mark.line + 1)
            out[key] = _convert(v, loader)
            out.lines[key] = k.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        out = Sequence(_convert(v, loader) for v in node.value)
        out.line = node.start_mark.line + 1
        return out
    return loader.construct_object(node, deep=True)


def load_yaml(text):
    """Parse YAML into Mapping / Sequence / scalars carrying line numbers."""
    try:
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            if node is None:
                raise ConfigError("empty configuration", 1)
            return _convert(node, loader)
        finally:
            loader.dispose()
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from None


# -- schema checks ----------------------------------------------------------


def _line(node, key=None):
    if isinstance(node, Mapping) and key is not None:
        return node.line_of(key)
    return getattr(node, "line", None)


def _mapping(node, where, allowed, required=(), line=None):
    if not isinstance(node, Mapping):
        raise ConfigError(f"{where} must be a mapping", line or _line(node))
    for key in node:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}", node.line_of(key))
    for key in required:
        if key not in node:
            raise ConfigError(f"{where} is missing required key {key!r}", node.line)
    return node


def _number(node, key, kind=float, lo=None, hi=None, lo_open=False, default=None):
    if key not in node:
        return default
    v = node[key]
    line = node.line_of(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}", line)
    if kind is int:
        if int(v) != v:
            raise ConfigError(f"{key} must be an integer, got {v!r}", line)
        v = int(v)
    else:
        v = float(v)
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"parameter domain: {key} must be {'>' if lo_open else '>='} {lo}, got {v}", line)
    if hi is not None and v > hi:
        raise ConfigError(f"parameter domain: {key} must be <= {hi}, got {v}", line)
    return v


def _numbers(node, key, default=None, kind=float):
    if key not in node:
        return default
    v = node[key]
    line = node.line_of(key)
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in _flat(v)):
        raise ConfigError(f"{key} must be a list of numbers", line)
    return np.asarray(v, dtype=kind)


def _flat(v):
    for x in v:
        if isinstance(x, list):
            yield from _flat(x)
        else:
            yield x


def _choice(node, key, choices, default=None):
    if key not in node:
        return default
    v = node[key]
    if not isinstance(v, str) or v.lower() not in choices:
        raise ConfigError(f"{key} must be one of {', '.join(choices)}; got {v!r}", node.line_of(key))
    return v.lower()


def _strings(node, key, choices, default=None):
    if key not in node:
        return default
    v = node[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key} must be a nonempty list", node.line_of(key))
    for x in v:
        if x not in choices:
            raise ConfigError(f"{key}: unknown entry {x!r}; expected one of {', '.join(choices)}", node.line_of(key))
    return list(v)


def _model(node, where, families):
    node = _mapping(node, where, {"family"} | {p for _, ps in families.values() for p in ps}, ("family",))
    family = _choice(node, "family", tuple(families))
    cls, params = families[family]
    _mapping(node, f"{where} ({family})", {"family", *params}, ())
    values = {}
    for p in params:
        if p not in node:
            if p == "c":
                continue
            raise ConfigError(f"{where} ({family}) is missing parameter {p!r}", node.line)
        values[p] = _number(node, p, int if (family == "binomial" and p == "n") else float)
    try:
        return cls(**values)
    except ParameterDomainError as exc:
        raise ConfigError(f"parameter domain: {exc}", node.line) from None


_CELL_KEYS = ("label", "frequency", "severity", "insurance", "business_line", "event_type")


def _cell(node, i):
    where = f"cells[{i}]"
    node = _mapping(node, where, _CELL_KEYS, ("label", "frequency", "severity"))
    freq = _model(node["frequency"], f"{where}.frequency", FREQUENCY_FAMILIES)
    sev = _model(node["severity"], f"{where}.severity", SEVERITY_FAMILIES)
    policy = None
    if "insurance" in node:
        ins = _mapping(node["insurance"], f"{where}.insurance", ("deductible", "limit"), ("deductible", "limit"))
        try:
            policy = InsurancePolicy(_number(ins, "deductible"), _number(ins, "limit"))
        except ParameterDomainError as exc:
            raise ConfigError(f"parameter domain: {exc}", ins.line) from None
    try:
        return RiskCell(
            str(node["label"]),
            freq,
            sev,
            policy,
            _number(node, "business_line", int),
            _number(node, "event_type", int),
        )
    except ParameterDomainError as exc:
        raise ConfigError(f"parameter domain: {exc}", node.line) from None


def _cells(root, required=True, min_cells=1):
    if "cells" not in root:
        if required:
            raise ConfigError("cells are required for this command", root.line)
        return []
    seq = root["cells"]
    if not isinstance(seq, list) or len(seq) < min_cells:
        raise ConfigError(f"cells must be a list of at least {min_cells} cell(s)", root.line_of("cells"))
    cells = [_cell(c, i) for i, c in enumerate(seq)]
    labels = [c.label for c in cells]
    if len(set(labels)) != len(labels):
        raise ConfigError("cell labels must be unique", root.line_of("cells"))
    return cells


def _corr(node, key, d):
    """Correlation matrix from ``rho`` (pairwise) or ``corr`` (full matrix)."""
    if "corr" in node:
        m = _numbers(node, "corr")
        if m.shape != (d, d):
            raise ConfigError(f"corr must be {d} x {d}", node.line_of("corr"))
    else:
        rho = _number(node, "rho", lo=-1.0, hi=1.0, default=None)
        if rho is None:
            raise ConfigError(f"{key} needs rho or corr", node.line)
        m = np.full((d, d), rho)
        np.fill_diagonal(m, 1.0)
    try:
        return deplib.GaussianCopulaSpec(m)
    except LDAError as exc:
        raise ConfigError(f"{key}: {exc}", node.line) from None


def _dependence(node, n_cells):
    node = _mapping(
        node,
        "dependence",
        ("kind", "rho", "corr", "M", "frequency_loadings", "severity_loadings", "factor_corr", "common",
         "participation"),
        ("kind",),
    )
    kind = _choice(node, "kind", DEPENDENCE_KINDS)
    try:
        if kind == "independent":
            return deplib.Dependence()
        if kind == "frequency_copula":
            return deplib.FrequencyCopula(_corr(node, "dependence", n_cells))
        if kind == "aggregate_copula":
            return deplib.AggregateLossCopula(_corr(node, "dependence", n_cells), _number(node, "M", int, 2, default=2**16))
        if kind == "interarrival_copula":
            return deplib.InterArrivalCopula(_corr(node, "dependence", n_cells))
        if kind == "common_factor":
            if "frequency_loadings" not in node:
                raise ConfigError("common_factor needs frequency_loadings", node.line)
            return deplib.CommonFactor(
                deplib.FactorLoadings(
                    _numbers(node, "frequency_loadings"),
                    _numbers(node, "severity_loadings"),
                    _numbers(node, "factor_corr"),
                )
            )
        common = _number(node, "common", lo=0.0)
        part = _numbers(node, "participation")
        if common is None or part is None or part.size != n_cells:
            raise ConfigError("common_shock needs common and one participation per cell", node.line)
        return deplib.CommonShock(common, tuple(part))
    except ParameterDomainError as exc:
        raise ConfigError(f"parameter domain: {exc}", node.line) from None


# -- run configuration ------------------------------------------------------


@dataclass
class RunConfig:
    """Validated run description; ``settings`` holds command-specific values."""

    command: str
    seed: int
    out: Path
    threads: int = 1
    cells: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)
    base: Path = Path(".")


_COMMON = ("command", "seed", "out", "threads")
_SECTIONS = {
    "fit": ("data", "fit"),
    "aggregate": ("cells", "solver"),
    "capital": ("cells", "solver", "dependence", "regulatory"),
    "dependence-study": ("cells", "study"),
    "bias-study": ("bias",),
    "combine": ("prior", "counts", "experts", "vco_floor"),
}


def _file(node, key, base):
    if key not in node:
        return None
    path = Path(str(node[key]))
    path = path if path.is_absolute() else base / path
    if not path.exists():
        raise ConfigError(f"{key}: file {path} does not exist", node.line_of(key))
    return path


def _solver(node, command):
    keys = {"method", "methods", "levels", "q", "K", "M", "step", "theta", "gamma", "subtract_el", "cap"}
    node = _mapping(node if node is not None else Mapping(), "solver", keys)
    s = {
        "K": _number(node, "K", int, 1, default=10**5),
        "M": _number(node, "M", int, 2, default=2**16),
        "step": _number(node, "step", lo=0.0, lo_open=True),
        "theta": _number(node, "theta", lo=0.0),
        "gamma": _number(node, "gamma", lo=0.0, hi=0.999999, default=0.95),
    }
    if s["M"] & (s["M"] - 1):
        raise ConfigError("M must be a power of two", node.line_of("M"))
    methods = ("mc", "panjer", "fft", "singleloss", "normal", "translatedgamma")
    if command == "aggregate":
        s["methods"] = _strings(node, "methods", methods + tuple(m.upper() for m in methods) +
                                ("MC", "Panjer", "FFT", "SingleLoss", "Normal", "TranslatedGamma"), ["FFT"])
        levels = _numbers(node, "levels", np.array([0.999]))
        if np.any((levels <= 0) | (levels >= 1)):
            raise ConfigError("levels must lie in (0, 1)", node.line_of("levels"))
        s["levels"] = [float(x) for x in levels]
    else:
        s["method"] = _choice(node, "method", ("mc", "panjer", "fft"), "fft")
        s["q"] = _number(node, "q", lo=0.0, hi=0.999999, lo_open=True, default=0.999)
        el = node.get("subtract_el", False)
        if not isinstance(el, bool):
            raise ConfigError("subtract_el must be true or false", node.line_of("subtract_el"))
        s["subtract_el"] = el
        s["cap"] = _number(node, "cap", lo=0.0, hi=1.0, default=capital.INSURANCE_CAP)
    return s


def parse_config(path, seed=None, out=None, threads=None):
    """Read and validate a YAML run configuration.

    ``seed``, ``out`` and ``threads`` override the file's values.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    root = load_yaml(text)
    if not isinstance(root, Mapping):
        raise ConfigError("configuration must be a mapping", getattr(root, "line", 1))
    if "command" not in root:
        raise ConfigError("missing required key 'command'", root.line)
    command = root["command"]
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}; got {command!r}", root.line_of("command"))
    _mapping(root, "configuration", _COMMON + _SECTIONS[command])
    if seed is None:
        if "seed" not in root:
            raise ConfigError("missing required key 'seed' (runs must be reproducible)", root.line)
        seed = _number(root, "seed", int, 0)
    elif seed < 0:
        raise ConfigError("seed must be nonnegative")
    base = path.resolve().parent
    out = Path(out) if out is not None else base / str(root.get("out", "out"))
    threads = threads if threads is not None else _number(root, "threads", int, 1, default=1)
    cfg = RunConfig(command, int(seed), out, int(threads), base=base)
    s = cfg.settings

    if command == "fit":
        data = _mapping(root.get("data"), "data", ("losses", "threshold"), ("losses",), root.line)
        s["losses"] = _file(data, "losses", base)
        s["threshold"] = _number(data, "threshold", lo=0.0, default=0.0)
        f = _mapping(root.get("fit", Mapping()), "fit", ("severity", "frequency", "n_starts"))
        s["severity"] = _choice(f, "severity", fitlib.SEVERITY_FAMILIES, "lognormal")
        s["frequency"] = _choice(f, "frequency", ("poisson", "negbinomial"), "poisson")
        s["n_starts"] = _number(f, "n_starts", int, 1, default=5)
    elif command == "aggregate":
        cfg.cells = _cells(root)
        s.update(_solver(root.get("solver"), command))
    elif command == "capital":
        cfg.cells = _cells(root)
        s.update(_solver(root.get("solver"), command))
        s["dependence"] = _dependence(root["dependence"], len(cfg.cells)) if "dependence" in root else None
        if "regulatory" in root:
            reg = _mapping(root["regulatory"], "regulatory", ("bia", "tsa"))
            s["bia"] = _numbers(reg, "bia")
            s["tsa"] = _numbers(reg, "tsa")
            if s["tsa"] is not None and s["tsa"].shape != (8, 3):
                raise ConfigError("tsa must be 8 business lines x 3 years", reg.line_of("tsa"))
    elif command == "dependence-study":
        cfg.cells = _cells(root, required=False)
        st = _mapping(root.get("study"), "study", ("constructions", "rhos", "years"), ("constructions", "rhos"), root.line)
        names = ("frequency_copula", "interarrival_copula", "aggregate_copula", "common_factor",
                 "profiles_lambda", "profiles_mu", "profiles_both")
        s["constructions"] = _strings(st, "constructions", names)
        s["rhos"] = [float(r) for r in _numbers(st, "rhos")]
        if any(not -1 <= r <= 1 for r in s["rhos"]):
            raise ConfigError("rhos must lie in [-1, 1]", st.line_of("rhos"))
        s["years"] = _number(st, "years", int, 100, default=10**6)
        if len(cfg.cells) not in (0, 2) or (not cfg.cells and any(not n.startswith("profiles") for n in s["constructions"])):
            raise ConfigError("the study needs exactly two cells (profiles_* constructions define their own)", root.line)
    elif command == "bias-study":
        b = _mapping(root.get("bias", Mapping()), "bias", ("theta0", "years", "R", "K", "q", "method", "n_mixture", "M"))
        theta0 = _numbers(b, "theta0", np.array([10.0, 1.0, 2.0]))
        if theta0.shape != (3,) or theta0[0] <= 0 or theta0[2] <= 0:
            raise ConfigError("parameter domain: theta0 must be (lambda > 0, mu, sigma > 0)", b.line_of("theta0"))
        s["theta0"] = tuple(float(x) for x in theta0)
        s["years"] = tuple(int(x) for x in _numbers(b, "years", np.array([5, 10, 20, 40, 80]), kind=int))
        s["R"] = _number(b, "R", int, 10, default=100)
        s["K"] = _number(b, "K", int, 1000, default=20_000)
        s["q"] = _number(b, "q", lo=0.0, hi=0.999999, lo_open=True, default=0.999)
        s["method"] = _choice(b, "method", ("mc", "fft"), "mc")
        s["n_mixture"] = _number(b, "n_mixture", int, 1, default=200)
        s["M"] = _number(b, "M", int, 2, default=2**16)
    elif command == "combine":
        s["counts"] = _numbers(root, "counts")
        if s["counts"] is None or s["counts"].ndim != 1 or np.any(s["counts"] < 0):
            raise ConfigError("counts must be a list of nonnegative annual counts", root.line_of("counts"))
        prior = _mapping(root.get("prior"), "prior", ("alpha", "beta", "mean", "interval", "coverage"), (), root.line)
        try:
            if "alpha" in prior or "beta" in prior:
                s["prior"] = bayeslib.GammaPrior(_number(prior, "alpha"), _number(prior, "beta"))
            else:
                interval = _numbers(prior, "interval")
                if "mean" not in prior or interval is None or interval.shape != (2,):
                    raise ConfigError("prior needs alpha/beta or mean, interval and coverage", prior.line)
                s["prior"] = bayeslib.elicit_gamma_prior(
                    _number(prior, "mean"), tuple(interval), _number(prior, "coverage", lo=0.0, hi=1.0, default=2 / 3)
                )
        except (ParameterDomainError, TypeError) as exc:
            raise ConfigError(f"parameter domain: {exc}", prior.line) from None
        s["experts"] = None
        if "experts" in root:
            ex = _mapping(root["experts"], "experts", ("opinions", "xi"), ("opinions", "xi"))
            try:
                s["experts"] = bayeslib.ExpertOpinions(tuple(_numbers(ex, "opinions")), _number(ex, "xi"))
            except ParameterDomainError as exc:
                raise ConfigError(f"parameter domain: {exc}", ex.line) from None
        s["vco_floor"] = _number(root, "vco_floor", lo=0.0)
    return cfg


# -- data ingestion ---------------------------------------------------------


@dataclass(frozen=True)
class IngestReport:
    rows: int
    accepted: int
    rejected_below_threshold: int
    per_cell_rejected: dict


def ingest_losses(path, threshold=0.0):
    """Read a ``period,cell,amount`` CSV into one LossRecord per cell.

    Rows with amount below ``threshold`` are dropped and counted. All cells
    share the observation window from the first to the last period in the
    file, so years without losses count as zero. Returns
    ``(records, report)``.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or all(not r for r in rows):
        warnings.warn(f"{path} is empty; no loss records", stacklevel=2)
        return {}, IngestReport(0, 0, 0, {})
    header = [h.strip().lower() for h in rows[0]]
    if header != ["period", "cell", "amount"]:
        raise DataError(f"expected header period,cell,amount; got {','.join(rows[0])}", 1)
    kept, rejected = {}, {}
    n_rows = 0
    periods_seen = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        n_rows += 1
        if len(row) != 3:
            raise DataError(f"expected 3 fields, got {len(row)}", lineno)
        try:
            period = int(row[0])
        except ValueError:
            raise DataError(f"period must be an integer year, got {row[0]!r}", lineno) from None
        label = row[1].strip()
        if not label:
            raise DataError("empty cell label", lineno)
        try:
            amount = float(row[2])
        except ValueError:
            raise DataError(f"amount must be a number, got {row[2]!r}", lineno) from None
        if not np.isfinite(amount) or amount <= 0:
            raise DataError(f"amount must be positive and finite, got {row[2]!r}", lineno)
        periods_seen.append(period)
        if amount < threshold:
            rejected[label] = rejected.get(label, 0) + 1
            kept.setdefault(label, [])
            continue
        kept.setdefault(label, []).append((period, amount))
    if n_rows == 0:
        warnings.warn(f"{path} has no data rows; no loss records", stacklevel=2)
        return {}, IngestReport(0, 0, 0, {})
    first, last = min(periods_seen), max(periods_seen)
    records = {}
    for label, items in kept.items():
        years = np.array([p for p, _ in items], dtype=np.int64)
        amounts = np.array([a for _, a in items], dtype=float)
        records[label] = fitlib.LossRecord.from_years(years, amounts, threshold, first, last, label)
    n_rej = sum(rejected.values())
    if n_rej:
        log.info("rejected %d of %d rows below threshold %g", n_rej, n_rows, threshold)
    return records, IngestReport(n_rows, n_rows - n_rej, n_rej, rejected)


# -- commands ---------------------------------------------------------------


def _run_fit(cfg):
    s = cfg.settings
    records, report = ingest_losses(s["losses"], s["threshold"])
    print(f"ingested {report.rows} rows; {report.rejected_below_threshold} below threshold {s['threshold']:g} rejected")
    written = []
    for label in sorted(records):
        rec = records[label]
        res = fitlib.fit_truncated_mle(rec, s["threshold"], s["severity"], s["frequency"], s["n_starts"], cfg.seed)
        rows = res.rows()
        path = res.write_csv(cfg.out / f"fit_{label}.csv")
        written.append(path)
        print(f"{label}: " + ", ".join(f"{n}={e:.6g}" for n, e, _ in rows))
    return written


def _run_aggregate(cfg):
    s = cfg.settings
    results, written = [], []
    for j, cell in enumerate(cfg.cells):
        for method in s["methods"]:
            res = aggregate.compound_quantiles(
                cell, s["levels"], method, M=s["M"], step=s["step"], theta=s["theta"], K=s["K"],
                seed=np.random.SeedSequence(cfg.seed, spawn_key=(j,)), gamma=s["gamma"], threads=cfg.threads,
            )
            results.append((cell.label, res))
            if res.density is not None:
                written.append(aggregate.write_density_csv(cfg.out / f"density_{cell.label}_{res.method}.csv", res.density))
    rows = [(label, *row) for label, res in results for row in res.rows()]
    written.append(write_rows(cfg.out / "quantiles.csv", ["cell", "method", "q", "estimate", "lo", "hi"], rows))
    for row in rows:
        print("{}  {:<16s} q={:<8g} {:.6g}  [{:.6g}, {:.6g}]".format(*row))
    return written


def _run_capital(cfg):
    s = cfg.settings
    report = capital.conditional_capital(
        cfg.cells, s["method"], s["dependence"], s["q"], s["K"], s["M"], s["step"], s["theta"],
        cfg.seed, s["gamma"], cfg.threads, s["subtract_el"], s["cap"],
    )
    written = [report.write_csv(cfg.out / "capital.csv")]
    text = report.summary()
    reg = []
    if s.get("bia") is not None:
        reg.append(("BIA", capital.bia_charge(s["bia"])))
    if s.get("tsa") is not None:
        reg.append(("TSA", capital.tsa_charge(s["tsa"])))
    if reg:
        written.append(write_rows(cfg.out / "regulatory.csv", ["approach", "capital"], reg))
        text += "\n" + "\n".join(f"  {name} charge {v:14.6g}" for name, v in reg)
    summary = cfg.out / "capital_summary.txt"
    summary.write_text(text + "\n")
    written.append(summary)
    print(text)
    return written


def _run_dependence_study(cfg):
    s = cfg.settings
    rows = deplib.dependence_study(cfg.cells, s["constructions"], s["rhos"], s["years"], cfg.seed, cfg.threads)
    path = deplib.write_study_csv(cfg.out / "dependence_study.csv", rows)
    for name, rho, est, se in rows:
        print(f"{name:<22s} rho={rho:<6g} rho_S={est:.4f} (se {se:.4f})")
    return [path]


def _run_bias_study(cfg):
    s = cfg.settings
    res = capital.parameter_uncertainty_bias(
        s["theta0"], s["years"], s["R"], s["K"], cfg.seed, s["q"], s["method"], s["n_mixture"], s["M"], cfg.threads
    )
    path = res.write_csv(cfg.out / "bias_study.csv")
    for t, b, se in res.rows():
        print(f"T={t:<4d} relative bias {b:.4f} (se {se:.4f})")
    return [path]


def _run_combine(cfg):
    s = cfg.settings
    counts = s["counts"]
    post, cred = bayeslib.poisson_gamma_posterior(s["prior"], counts, s["vco_floor"])
    written = []
    rows = [("prior_alpha", s["prior"].alpha), ("prior_beta", s["prior"].beta),
            ("posterior_alpha", post.alpha), ("posterior_beta", post.beta),
            ("posterior_mean", post.mean), ("credibility_weight", cred.weight)]
    if s["experts"] is not None:
        gig = bayeslib.three_source_posterior(s["prior"], counts, s["experts"])
        rows.append(("three_source_mean", gig.mean))
        traj = bayeslib.estimator_trajectories(counts, s["prior"], s["experts"])
        header = ["year", "mle", "two_source", "three_source"]
        written.append(write_rows(cfg.out / "trajectories.csv", header, zip(*(traj[h] for h in header))))
    written.append(write_rows(cfg.out / "combine.csv", ["quantity", "value"], rows))
    for name, v in rows:
        print(f"{name:<20s} {v:.6g}")
    return written


_RUNNERS = {
    "fit": _run_fit,
    "aggregate": _run_aggregate,
    "capital": _run_capital,
    "dependence-study": _run_dependence_study,
    "bias-study": _run_bias_study,
    "combine": _run_combine,
}


def run(cfg):
    """Execute a validated configuration; returns the list of written files."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    return _RUNNERS[cfg.command](cfg)


def build_parser():
    p = argparse.ArgumentParser(prog="oplda", description="Operational risk loss distribution approach engine.")
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the configuration)")
    p.add_argument("--out", help="output directory (overrides the configuration)")
    p.add_argument("--threads", type=int, help="worker threads for simulation blocks")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = parse_config(args.config, args.seed, args.out, args.threads)
        run(cfg)
    except LDAError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
