"""Command-line front end: simulate, modes, sweep, analyze.

Configuration comes from an optional flat ``key = value`` file, overridden by
command-line flags.  Every command writes into ``output_dir`` (default: the
``CRITDECOH_OUTPUT`` environment variable, else the working directory) and
leaves a JSON manifest with the resolved config and SHA-256 checksums.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure,
3 analysis warning.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from multiprocessing import get_context
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__, analysis, analytic
from .decoherence import (DEFAULT_DG, DecoherenceTrace, HIGH_K, LOW_K, mode_snapshot,
                          run_quench)
from .modes import IntegrationError, IntegratorConfig
from .quench import CouplingSplit, ModeGrid, QuenchSchedule

ENV_OUTPUT = "CRITDECOH_OUTPUT"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_ANALYSIS = 3

TRACE_COLUMNS = ("t", "g", "D_numeric", "D_analytic", "D_fidelity", "ln_D_numeric",
                 "singular_flag", "valid_flag")
MODES_COLUMNS = ("k", "F_k_numeric", "F_k_analytic", "regime")
SCALING_COLUMNS = ("tau_Q", "delta", "ln_D_hat", "D_hat")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class TraceParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        self.line = line
        super().__init__(f"{path}, line {line}: {message}")


def _default_output() -> str:
    return os.environ.get(ENV_OUTPUT, ".")


@dataclass(frozen=True)
class RunConfig:
    N: int = 1000
    delta: float = 0.01
    tau_Q: float = 250.0
    g_start: float = 5.0
    g_end: float = -3.0
    dg: float = DEFAULT_DG
    subsample: int = 1
    method: str = "magnus4"
    dt_max: Optional[float] = None
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    snapshot_g: tuple = ()
    tau_Q_list: tuple = ()
    matched_phase: float = analysis.DEFAULT_MATCHED_PHASE
    workers: int = 0
    output_dir: str = field(default_factory=_default_output)

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Re-run every physical and numerical constraint, naming the failing field."""
        if not self.g_start > 1.0:
            raise ConfigError("g_start", "the run must start above g = 1")
        if not self.g_end < -1.0:
            raise ConfigError("g_end", "the run must end below g = -1")
        checks = (
            ("N", lambda: ModeGrid(self.N)),
            ("tau_Q", lambda: QuenchSchedule(self.tau_Q, self.g_start, self.g_end)),
            ("delta", lambda: CouplingSplit(self.delta) if self.delta else None),
            ("method", lambda: self.integrator()),
        )
        for name, build in checks:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    build()
            except (ValueError, TypeError) as exc:
                raise ConfigError(name, str(exc)) from None
        if not self.dg > 0:
            raise ConfigError("dg", "must be positive")
        if self.subsample < 1:
            raise ConfigError("subsample", "must be >= 1")
        for g in self.snapshot_g:
            if not self.g_end <= g <= self.g_start:
                raise ConfigError("snapshot_g",
                                  f"{g} outside the run range [{self.g_end}, {self.g_start}]")
        if any(not t > 0 for t in self.tau_Q_list):
            raise ConfigError("tau_Q_list", "quench times must be positive")
        if not 0 < self.matched_phase < math.pi / 2:
            raise ConfigError("matched_phase", "must lie in (0, pi/2)")
        if self.workers < 0:
            raise ConfigError("workers", "must be >= 0 (0 = all cores)")

    def schedule(self) -> QuenchSchedule:
        return QuenchSchedule(self.tau_Q, g_start=self.g_start, g_end=self.g_end)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(method=self.method, dt_max=self.dt_max,
                                rel_tol=self.rel_tol, abs_tol=self.abs_tol)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["snapshot_g"] = list(self.snapshot_g)
        d["tau_Q_list"] = list(self.tau_Q_list)
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_INT_FIELDS = {"N", "subsample", "workers"}
_LIST_FIELDS = {"snapshot_g", "tau_Q_list"}
_STR_FIELDS = {"method", "output_dir"}


def _coerce(key: str, raw):
    if key not in _FIELDS:
        raise ConfigError(key, "unknown configuration key")
    if not isinstance(raw, str):
        return tuple(raw) if key in _LIST_FIELDS else raw
    text = raw.strip()
    try:
        if key in _STR_FIELDS:
            return text
        if key in _LIST_FIELDS:
            return tuple(float(x) for x in text.replace(",", " ").split())
        if key == "dt_max" and text.lower() in ("", "none", "auto"):
            return None
        if key in _INT_FIELDS:
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r}") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("<file>", f"{path}, line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the config file, then ``overrides`` (``None`` values skipped)."""
    values = {}
    if path is not None:
        values.update(read_config_file(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    kwargs = {k: _coerce(k, v) for k, v in values.items()}
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError("<config>", str(exc)) from None


# --- output helpers ------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path: Path, columns: Sequence[str], rows) -> None:
    """Fixed column order, 17 significant digits, LF line endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _finite_or_none(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def write_manifest(out_dir: Path, name: str, config: Optional[RunConfig], started: str,
                   files: Sequence[Path], failures=(), extra: Optional[dict] = None) -> Path:
    manifest = {
        "tool": "critdecoh",
        "version": __version__,
        "config": config.to_dict() if config is not None else None,
        "started_utc": started,
        "finished_utc": _now(),
        "failures": [list(f) for f in failures],
        "files": {Path(f).name: sha256_of(f) for f in files},
    }
    if extra:
        manifest.update(extra)
    path = out_dir / f"{name}_manifest.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_finite_or_none)
        fh.write("\n")
    return path


def _set_threads(workers: int) -> None:
    import numba
    n = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(n if workers == 0 else min(workers, n))


def _out_dir(config: RunConfig) -> Path:
    p = Path(config.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


# --- commands ------------------------------------------------------------------

def cmd_simulate(config: RunConfig) -> int:
    """Full quench; writes ``trace.csv`` and ``simulate_manifest.json``."""
    started = _now()
    out = _out_dir(config)
    _set_threads(config.workers)
    schedule = config.schedule()
    try:
        trace, _ = run_quench(schedule, config.delta, ModeGrid(config.N), config.integrator(),
                              subsample=config.subsample, dg=config.dg)
    except IntegrationError as exc:
        write_manifest(out, "simulate", config, started, [], exc.failures,
                       {"status": "numerical failure", "error": str(exc)})
        return EXIT_NUMERICAL

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if config.delta:
            D_an, valid = analytic.decoherence_analytic(config.N, config.delta, config.tau_Q,
                                                        trace.t)
        else:
            D_an, valid = np.ones(len(trace)), np.abs(np.abs(trace.g) - 1.0) > 0
        ks = ModeGrid(config.N).momenta
        D_fid = np.array([math.exp(analytic.fidelity_product(ks, g, config.delta))
                          for g in trace.g])
    notes = sorted({str(w.message) for w in caught})

    path = out / "trace.csv"
    write_csv(path, TRACE_COLUMNS,
              zip(trace.t, trace.g, trace.D, np.atleast_1d(D_an), D_fid, trace.ln_D,
                  trace.singular, np.atleast_1d(valid)))
    write_manifest(out, "simulate", config, started, [path],
                   extra={"status": "ok", "run_metadata": trace.metadata, "warnings": notes})
    return EXIT_OK


def _analytic_fk(k, regime, g, t, config: RunConfig):
    k = np.asarray(k)
    val = analytic.fk_adiabatic(k, g, config.delta).value
    val = np.array(val, dtype=float)
    low = regime == LOW_K
    high = regime == HIGH_K
    if low.any():
        val[low] = analytic.fk_excited_first(k[low], t, config.tau_Q, config.delta).value
    if high.any():
        val[high] = analytic.fk_excited_second(k[high], t, config.tau_Q, config.delta).value
    return val


def snapshot_filename(g: float) -> str:
    return f"modes_g{g:+.6g}.csv"


def cmd_modes(config: RunConfig, g_list: Optional[Sequence[float]] = None) -> int:
    """One ``modes_g<g>.csv`` per requested field."""
    started = _now()
    g_list = tuple(config.snapshot_g if g_list is None else g_list)
    if not g_list:
        raise ConfigError("snapshot_g", "no snapshot fields given")
    for g in g_list:
        if not config.g_end <= g <= config.g_start:
            raise ConfigError("snapshot_g", f"{g} outside the run range")
    out = _out_dir(config)
    _set_threads(config.workers)
    schedule = config.schedule()
    grid = ModeGrid(config.N)
    files = []
    for g in g_list:
        try:
            snap = mode_snapshot(schedule, config.delta, grid, g, config.integrator())
        except IntegrationError as exc:
            write_manifest(out, "modes", config, started, files, exc.failures,
                           {"status": "numerical failure", "error": str(exc)})
            return EXIT_NUMERICAL
        fa = _analytic_fk(snap.k, snap.regime, g, snap.t, config)
        path = out / snapshot_filename(g)
        write_csv(path, MODES_COLUMNS, zip(snap.k, snap.F, fa, snap.regime))
        files.append(path)
    write_manifest(out, "modes", config, started, files, extra={"status": "ok"})
    return EXIT_OK


def matched_phase_point(tau_Q: float, config: RunConfig) -> float:
    """``ln D_hat`` at g = 0 for the matched-phase coupling of ``tau_Q``."""
    snap = analysis.matched_phase_snapshot(tau_Q, config.N, config.matched_phase,
                                           config.integrator(), g_start=config.g_start)
    return analysis.excited_sector_factor(snap)


def _sweep_worker(args):
    point, tau_Q, config = args
    _set_threads(1)
    return point(tau_Q, config)


def cmd_sweep(config: RunConfig, tau_Q_list: Optional[Sequence[float]] = None,
              point: Callable[[float, RunConfig], float] = matched_phase_point) -> int:
    """Scaling sweep; writes ``scaling.csv`` and ``scaling_fit.json``.

    ``point(tau_Q, config)`` returns ``ln D_hat`` for one quench time.  With
    ``workers > 1`` the points run in separate processes (``point`` must then
    be picklable).
    """
    started = _now()
    taus = tuple(float(t) for t in (config.tau_Q_list if tau_Q_list is None else tau_Q_list))
    if len(taus) < 4:
        raise ConfigError("tau_Q_list", f"need at least 4 quench times, got {len(taus)}")
    if any(not t > 0 for t in taus):
        raise ConfigError("tau_Q_list", "quench times must be positive")
    out = _out_dir(config)
    jobs = [(point, t, config) for t in taus]
    try:
        if config.workers > 1:
            with ProcessPoolExecutor(min(config.workers, len(taus)),
                                     mp_context=get_context("spawn")) as pool:
                ln_dhat = list(pool.map(_sweep_worker, jobs))
        else:
            _set_threads(config.workers)
            ln_dhat = [point(t, config) for t in taus]
    except IntegrationError as exc:
        write_manifest(out, "sweep", config, started, [], exc.failures,
                       {"status": "numerical failure", "error": str(exc)})
        return EXIT_NUMERICAL

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", analysis.FitWarning)
        try:
            fit = analysis.fit_scaling(list(zip(taus, ln_dhat)))
        except ValueError as exc:
            raise ConfigError("tau_Q_list", str(exc)) from None
    csv_path = out / "scaling.csv"
    write_csv(csv_path, SCALING_COLUMNS,
              ((t, config.matched_phase / (4.0 * t), l, math.exp(l))
               for t, l in zip(taus, ln_dhat)))
    fit_path = out / "scaling_fit.json"
    body = fit.to_dict()
    body["matched_phase"] = config.matched_phase
    with open(fit_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(out, "sweep", config, started, [csv_path, fit_path],
                   extra={"status": "poor fit" if fit.poor_fit else "ok",
                          "warnings": [str(w.message) for w in caught]})
    return EXIT_ANALYSIS if fit.poor_fit else EXIT_OK


def read_trace(path, metadata: Optional[dict] = None) -> DecoherenceTrace:
    """Load a ``trace.csv``; malformed input raises :class:`TraceParseError`."""
    path = Path(path)
    required = ("t", "g", "D_numeric")
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceParseError(path, 1, "empty file")
        missing = [c for c in required if c not in header]
        if missing:
            raise TraceParseError(path, 1, f"missing column(s) {', '.join(missing)}")
        idx = {c: header.index(c) for c in header}
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise TraceParseError(path, line,
                                      f"expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise TraceParseError(path, line, str(exc)) from None
    if not rows:
        raise TraceParseError(path, 2, "no data rows")
    a = np.array(rows)
    D = a[:, idx["D_numeric"]]
    ln_D = a[:, idx["ln_D_numeric"]] if "ln_D_numeric" in idx else np.log(D)
    singular = (a[:, idx["singular_flag"]] != 0 if "singular_flag" in idx
                else np.zeros(D.size, dtype=bool))
    return DecoherenceTrace(t=a[:, idx["t"]], g=a[:, idx["g"]], d=np.sqrt(D).astype(complex),
                            ln_D=ln_D, singular=singular, metadata=dict(metadata or {}))


def cmd_analyze(trace_path, metadata: Optional[dict] = None,
                output_dir: Optional[str] = None) -> int:
    """Revival report for a trace; metadata falls back to the neighbouring manifest."""
    started = _now()
    trace_path = Path(trace_path)
    meta = {}
    manifest = trace_path.parent / "simulate_manifest.json"
    if manifest.exists():
        with open(manifest, encoding="utf-8") as fh:
            meta.update(json.load(fh).get("config") or {})
    meta.update({k: v for k, v in (metadata or {}).items() if v is not None})
    missing = [k for k in ("N", "delta", "tau_Q") if k not in meta]
    if missing:
        raise ConfigError(missing[0], "needed for analysis; pass it or keep the manifest")
    meta = {"N": int(meta["N"]), "delta": float(meta["delta"]), "tau_Q": float(meta["tau_Q"])}
    trace = read_trace(trace_path, meta)

    out = Path(output_dir) if output_dir else trace_path.parent
    out.mkdir(parents=True, exist_ok=True)
    regime = analysis.classify_regime(meta["delta"], meta["tau_Q"])
    report = {"regime": regime, "trace": trace_path.name, **meta}
    code = EXIT_OK
    try:
        rev = analysis.find_revivals(trace)
        report["revivals"] = rev.to_dict()
    except analysis.NoPeriodError as exc:
        report["revivals"] = None
        report["no_period"] = str(exc)
        if regime == analysis.REVIVALS:
            code = EXIT_ANALYSIS
    except ValueError as exc:
        report["revivals"] = None
        report["error"] = str(exc)
        code = EXIT_ANALYSIS
    if regime != analysis.REVIVALS:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                fit = analysis.fit_gaussian_decay(trace)
                report["gaussian_fit"] = {"coefficient": fit.coefficient,
                                          "predicted": fit.predicted,
                                          "relative_error": fit.relative_error,
                                          "n_samples": fit.n_samples}
            except ValueError as exc:
                report["gaussian_fit"] = None
                report["gaussian_fit_error"] = str(exc)
    path = out / "analysis.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_finite_or_none)
        fh.write("\n")
    write_manifest(out, "analyze", None, started, [path],
                   extra={"status": "ok" if code == EXIT_OK else "analysis warning",
                          "input": {trace_path.name: sha256_of(trace_path)}})
    return code


# --- argument parsing ----------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--N", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--tau-Q", dest="tau_Q", type=float)
    p.add_argument("--g-start", dest="g_start", type=float)
    p.add_argument("--g-end", dest="g_end", type=float)
    p.add_argument("--dg", type=float, help="field spacing of trace samples")
    p.add_argument("--subsample", type=int, help="integrate every m-th mode only")
    p.add_argument("--method", choices=("magnus4", "rk4", "dopri5"))
    p.add_argument("--dt-max", dest="dt_max", type=float)
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--abs-tol", dest="abs_tol", type=float)
    p.add_argument("--workers", type=int, help="threads (processes for sweep); 0 = all")
    p.add_argument("--output-dir", "-o", dest="output_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="critdecoh",
        description="Qubit decoherence by a transverse-field Ising chain quenched "
                    "through its critical points.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="full quench, decoherence trace")
    _add_run_flags(p)

    p = sub.add_parser("modes", help="mode-resolved overlaps at given fields")
    _add_run_flags(p)
    p.add_argument("--g", dest="snapshot_g", type=float, nargs="+")

    p = sub.add_parser("sweep", help="scaling of the non-adiabatic factor with tau_Q")
    _add_run_flags(p)
    p.add_argument("--tau-Q-list", dest="tau_Q_list", type=float, nargs="+")
    p.add_argument("--matched-phase", dest="matched_phase", type=float)

    p = sub.add_parser("analyze", help="revival report for a trace.csv")
    p.add_argument("trace")
    p.add_argument("--N", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--tau-Q", dest="tau_Q", type=float)
    p.add_argument("--output-dir", "-o", dest="output_dir")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    opts = vars(args)
    command = opts.pop("command")
    try:
        if command == "analyze":
            return cmd_analyze(opts.pop("trace"),
                               {k: opts[k] for k in ("N", "delta", "tau_Q")},
                               opts.get("output_dir"))
        config = load_config(opts.pop("config"), opts)
        if command == "simulate":
            return cmd_simulate(config)
        if command == "modes":
            return cmd_modes(config)
        return cmd_sweep(config)
    except (ConfigError, TraceParseError) as exc:
        print(f"critdecoh: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"critdecoh: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
