"""Command line front end: ``gen``, ``run``, ``reference`` and ``compare``.

Settings come from an optional flat ``key = value`` file (``--config``) and
command-line flags; flags win.  Outputs depend only on the settings and the
ensemble, never on the clock, host or worker count.

    worldline-casimir gen --loops 100 --points 1000 --seed 42 --out loops.wlge
    worldline-casimir run --geometry perpendicular_plates --ensemble loops.wlge \\
        --at-list 0,0.1,0.196 --out perp.csv
    worldline-casimir reference --at-range 0:1.2:0.05 --out ref.csv
    worldline-casimir compare parallel.csv ref.csv
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .estimator import compute_observables, results_from_observables
from .geometry import DEFAULT_N_XI, GeometryKind
from .loopgen import EnsembleFormatError, LoopEnsemble, open_ensemble, save_ensemble
from .reference import (parallel_leading_correction, parallel_ratio_analytic,
                        perpendicular_leading_correction)
from .thermal import DEFAULT_TRUNC_EPS

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_FAIL = 0, 1, 2, 3
PULL_LIMIT = 3.0

RUN_COLUMNS = ["geometry", "aT", "ratio_mean", "ratio_stderr", "coeff_mean", "coeff_stderr",
               "n_loops", "n_points", "n_xi", "seed"]
REFERENCE_COLUMNS = ["aT", "parallel_ratio_analytic", "parallel_leading", "perpendicular_leading"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    geometry: list[GeometryKind] = field(default_factory=lambda: [GeometryKind.PARALLEL])
    at_list: list[float] | None = None
    loops: int | None = None
    points: int | None = None
    seed: int | None = None
    xi_nodes: int = DEFAULT_N_XI
    trunc_eps: float = DEFAULT_TRUNC_EPS
    ensemble: str | None = None
    out: str | None = None
    workers: int = 1


def _fmt(x: float) -> str:
    # + 0.0 folds -0.0 into 0.0
    return format(x + 0.0, ".17g")


def _positive_int(key: str, text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if value < 1:
        raise ConfigError(f"{key}: must be positive, got {value}")
    return value


def _parse_at_list(key: str, text: str) -> list[float]:
    try:
        values = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{key}: empty list")
    bad = [v for v in values if not (v >= 0 and math.isfinite(v))]
    if bad:
        raise ConfigError(f"{key}: aT values must be finite and >= 0, got {bad}")
    return values


def _parse_at_range(key: str, text: str) -> list[float]:
    parts = text.split(":")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{key}: expected start:stop:step, got {text!r}") from None
    if step <= 0 or start < 0 or stop < start:
        raise ConfigError(f"{key}: need 0 <= start <= stop and step > 0, got {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(n)]


def _parse_geometry(key: str, text: str) -> list[GeometryKind]:
    kinds = []
    for name in text.replace(" ", "").split(","):
        if name == "both":
            kinds.extend(GeometryKind)
            continue
        try:
            kinds.append(GeometryKind(name))
        except ValueError:
            choices = ", ".join(k.value for k in GeometryKind)
            raise ConfigError(f"{key}: unknown geometry {name!r}; expected {choices} or both") from None
    return list(dict.fromkeys(kinds))


def _parse_trunc_eps(key: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    if not 0 < value < 1e-6:
        raise ConfigError(f"{key}: must lie in (0, 1e-6), got {value}")
    return value


def _parse_seed(key: str, text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise ConfigError(f"{key}: must be an unsigned 64-bit integer, got {value}")
    return value


_PARSERS = {
    "geometry": ("geometry", _parse_geometry),
    "at_list": ("at_list", _parse_at_list),
    "at_range": ("at_list", _parse_at_range),
    "loops": ("loops", _positive_int),
    "points": ("points", _positive_int),
    "seed": ("seed", _parse_seed),
    "xi_nodes": ("xi_nodes", _positive_int),
    "trunc_eps": ("trunc_eps", _parse_trunc_eps),
    "ensemble": ("ensemble", lambda k, v: v),
    "out": ("out", lambda k, v: v),
    "workers": ("workers", _positive_int),
}


def read_config_file(path: str) -> list[tuple[str, str]]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            items.append((key, value))
    return items


def build_config(items: list[tuple[str, str]]) -> RunConfig:
    """Apply ``(key, value)`` settings in order; later settings override earlier ones."""
    cfg = RunConfig()
    for key, value in items:
        norm = key.replace("-", "_")
        if norm not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}")
        attr, parse = _PARSERS[norm]
        setattr(cfg, attr, parse(norm, value))
    if cfg.points is not None and cfg.points < 4:
        raise ConfigError(f"points: must be >= 4, got {cfg.points}")
    if cfg.xi_nodes < 2:
        raise ConfigError(f"xi_nodes: must be >= 2, got {cfg.xi_nodes}")
    return cfg


def _write_atomic(path: str, writer) -> int:
    """Write through a temporary file in the target directory; returns bytes written."""
    target = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            writer(fh)
            size = fh.tell()
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return size


def _csv_bytes(header: list[str], rows: list[list[str]]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _emit(cfg: RunConfig, data: bytes) -> None:
    if cfg.out in (None, "-"):
        sys.stdout.write(data.decode("utf-8"))
    else:
        _write_atomic(cfg.out, lambda fh: fh.write(data))


def _require(cfg: RunConfig, *keys: str) -> None:
    missing = [k for k in keys if getattr(cfg, k) is None]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def cmd_gen(cfg: RunConfig) -> int:
    _require(cfg, "loops", "points", "seed", "out")
    ens = LoopEnsemble(count=cfg.loops, n_points=cfg.points, seed=cfg.seed)
    size = _write_atomic(cfg.out, lambda fh: save_ensemble(ens, fh))
    print(f"generated {ens.count} loops x {ens.n_points} points (seed {ens.seed}) "
          f"-> {cfg.out} ({size} bytes)")
    return EXIT_OK


def _ensemble_for_run(cfg: RunConfig) -> LoopEnsemble:
    if cfg.ensemble is not None and Path(cfg.ensemble).exists():
        return open_ensemble(cfg.ensemble)
    if None in (cfg.loops, cfg.points, cfg.seed):
        where = f"ensemble file {cfg.ensemble!r} not found and " if cfg.ensemble else ""
        raise ConfigError(f"{where}no generation parameters (loops, points, seed) given")
    return LoopEnsemble(count=cfg.loops, n_points=cfg.points, seed=cfg.seed)


def run_rows(cfg: RunConfig, ensemble: LoopEnsemble) -> list[list[str]]:
    if ensemble.count < 2:
        raise ConfigError("loops: need at least 2 loops for error estimates")
    observables = compute_observables(ensemble, cfg.geometry, cfg.xi_nodes, cfg.workers)
    rows = []
    for kind in cfg.geometry:
        for r in results_from_observables(observables[kind], cfg.at_list, cfg.trunc_eps):
            rows.append([kind.value, _fmt(r.aT), _fmt(r.ratio.mean), _fmt(r.ratio.stderr),
                         _fmt(r.coefficient.mean), _fmt(r.coefficient.stderr),
                         str(ensemble.count), str(ensemble.n_points), str(cfg.xi_nodes),
                         str(ensemble.seed)])
    return rows


def cmd_run(cfg: RunConfig) -> int:
    _require(cfg, "at_list")
    ensemble = _ensemble_for_run(cfg)
    _emit(cfg, _csv_bytes(RUN_COLUMNS, run_rows(cfg, ensemble)))
    return EXIT_OK


def reference_rows(at_list: list[float]) -> list[list[str]]:
    return [[_fmt(t), _fmt(parallel_ratio_analytic(t)), _fmt(parallel_leading_correction(t)),
             _fmt(perpendicular_leading_correction(t))] for t in at_list]


def cmd_reference(cfg: RunConfig) -> int:
    _require(cfg, "at_list")
    _emit(cfg, _csv_bytes(REFERENCE_COLUMNS, reference_rows(cfg.at_list)))
    return EXIT_OK


class GridMismatchError(ValueError):
    pass


def _read_csv(path: str) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def compare_tables(run: list[dict[str, str]], ref: list[dict[str, str]]) -> tuple[list[str], bool]:
    """Pull of each run row against the reference curve.

    ``ref`` is either a reference table (parallel rows are compared with
    ``parallel_ratio_analytic``) or another run table (rows matched by
    geometry and aT, compared with its ``ratio_mean``).  Only parallel rows
    decide PASS/FAIL.
    """
    if not run or "ratio_mean" not in run[0]:
        raise ConfigError("first file is not a run table")
    if not ref:
        raise ConfigError("reference table is empty")
    ref_is_run = "ratio_mean" in ref[0]
    if ref_is_run:
        lookup = {(r["geometry"], float(r["aT"])): float(r["ratio_mean"]) for r in ref}
    elif "parallel_ratio_analytic" in ref[0]:
        lookup = {float(r["aT"]): float(r["parallel_ratio_analytic"]) for r in ref}
    else:
        raise ConfigError("second file is neither a reference nor a run table")

    by_geometry: dict[str, set[float]] = {}
    for row in run:
        by_geometry.setdefault(row["geometry"], set()).add(float(row["aT"]))
    ref_grid = {k[1] if ref_is_run else k for k in lookup}
    for geom, grid in by_geometry.items():
        other = {k[1] for k in lookup if k[0] == geom} if ref_is_run else ref_grid
        if grid != other:
            only_run = sorted(grid - other)
            only_ref = sorted(other - grid)
            raise GridMismatchError(
                f"aT grids differ for {geom}: only in run {only_run}, only in reference {only_ref}")

    lines = ["geometry,aT,mc_ratio,reference_ratio,stderr,pull"]
    worst = 0.0
    checked = 0
    for row in run:
        geom, t = row["geometry"], float(row["aT"])
        mc, err = float(row["ratio_mean"]), float(row["ratio_stderr"])
        if ref_is_run:
            expected = lookup[(geom, t)]
        elif geom == GeometryKind.PARALLEL.value:
            expected = lookup[t]
        else:
            lines.append(f"{geom},{_fmt(t)},{_fmt(mc)},,{_fmt(err)},not-checked")
            continue
        diff = mc - expected
        pull = 0.0 if diff == 0 else (diff / err if err > 0 else math.copysign(math.inf, diff))
        lines.append(f"{geom},{_fmt(t)},{_fmt(mc)},{_fmt(expected)},{_fmt(err)},{_fmt(pull)}")
        if geom == GeometryKind.PARALLEL.value or ref_is_run:
            worst = max(worst, abs(pull))
            checked += 1
    ok = worst <= PULL_LIMIT
    lines.append(f"{'PASS' if ok else 'FAIL'}: max |pull| = {_fmt(worst)} over {checked} rows "
                 f"(limit {PULL_LIMIT:g})")
    return lines, ok


def cmd_compare(run_csv: str, reference_csv: str, cfg: RunConfig) -> int:
    lines, ok = compare_tables(_read_csv(run_csv), _read_csv(reference_csv))
    _emit(cfg, ("\n".join(lines) + "\n").encode("utf-8"))
    return EXIT_OK if ok else EXIT_FAIL


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--geometry", help="parallel_plates, perpendicular_plates or both")
    common.add_argument("--at-list", help="comma-separated aT values")
    common.add_argument("--at-range", help="start:stop:step, stop inclusive")
    common.add_argument("--loops", help="number of loops")
    common.add_argument("--points", help="points per loop")
    common.add_argument("--seed", help="64-bit ensemble seed")
    common.add_argument("--xi-nodes", help="xi quadrature nodes per loop")
    common.add_argument("--trunc-eps", help="relative truncation of winding series")
    common.add_argument("--ensemble", help="ensemble file to read")
    common.add_argument("--workers", help="worker threads for per-loop work")
    common.add_argument("--out", help="output path (stdout if omitted or '-')")

    ap = argparse.ArgumentParser(prog="worldline-casimir", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate and store a loop ensemble")
    sub.add_parser("run", parents=[common], help="Monte Carlo force ratios as CSV")
    sub.add_parser("reference", parents=[common], help="analytic curves as CSV")
    cmp_ = sub.add_parser("compare", parents=[common], help="pulls of a run against a reference")
    cmp_.add_argument("run_csv")
    cmp_.add_argument("reference_csv")
    return ap


_FLAG_KEYS = ["geometry", "at_list", "at_range", "loops", "points", "seed", "xi_nodes",
              "trunc_eps", "ensemble", "workers", "out"]


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        items = read_config_file(args.config) if args.config else []
        items += [(k, getattr(args, k)) for k in _FLAG_KEYS if getattr(args, k) is not None]
        cfg = build_config(items)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "reference":
            return cmd_reference(cfg)
        return cmd_compare(args.run_csv, args.reference_csv, cfg)
    except (ConfigError, GridMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, EnsembleFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
