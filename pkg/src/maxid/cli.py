"""Command-line driver: ``maxid {exact,diag,br,gas,report} --config FILE``.

Every run writes into one output directory:

* ``summary.json``: the results, deterministic for a fixed config and seed;
* ``manifest.json``: inputs, package versions, seed and wall time;
* one table per result family, as CSV (default) or JSON.

Exit status is 0 on success, 2 when the config or output directory is
invalid and 3 when a numerical diagnostic was flagged.  ``--config`` also
accepts the stem of a bundled config, e.g. ``--config diagonal_exact``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import COMMANDS, ConfigError, bundled_configs, load_config, resolve_config_path
from .runs import RUNNERS, RunResult

EXIT_OK, EXIT_INVALID, EXIT_FLAGGED = 0, 2, 3
OUT_ROOT_ENV = "MAXID_OUT_ROOT"
DEFAULT_OUT_ROOT = "maxid_runs"


def _plain(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps_json(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def dumps_csv(rows: list[dict], seed: int) -> str:
    buf = io.StringIO()
    if not rows:
        return "seed\n"
    fields = ["seed", *rows[0].keys()]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({"seed": seed, **{k: ("" if v is None else v) for k, v in _plain(row).items()}})
    return buf.getvalue()


def _versions() -> dict[str, str]:
    out = {"python": platform.python_version(), "platform": platform.platform()}
    for dist in ("artifact", "numpy", "scipy", "pyyaml", "jsonschema"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "unknown"
    return out


def _prepare_out(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError([f"output directory {out} is not writable: {exc}"]) from exc


def _command_of(doc_path: Path) -> str:
    """The single command section present in a config (used by ``report``)."""
    import yaml

    doc = yaml.safe_load(doc_path.read_text()) or {}
    present = [c for c in COMMANDS if c != "report" and isinstance(doc, dict) and c in doc]
    if len(present) != 1:
        raise ConfigError([f"{doc_path}: report needs exactly one command section, found {present}"])
    return present[0]


def _write_outputs(out: Path, result: RunResult, seed: int, fmt: str) -> list[str]:
    written = ["summary.json"]
    (out / "summary.json").write_text(dumps_json(result.summary))
    for name, rows in result.tables.items():
        fname = f"{name}.{fmt}"
        text = dumps_csv(rows, seed) if fmt == "csv" else dumps_json({"seed": seed, "rows": rows})
        (out / fname).write_text(text)
        written.append(fname)
    return written


def execute(command: str, config: Path | None, out: Path, *, seed: int | None = None,
            fmt: str = "csv", replicates: int | None = None, quiet: bool = False) -> int:
    """Run one command end to end; returns the exit status."""
    started = time.perf_counter()
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    try:
        if command == "report":
            result, doc, cfg_path = _run_report(config, out, seed, fmt, replicates, quiet)
        else:
            if config is None:
                raise ConfigError([f"{command} needs --config"])
            cfg_path = resolve_config_path(str(config))
            doc = load_config(cfg_path, command)
            if seed is not None:
                doc["seed"] = seed
            if replicates is not None:
                if "replicates" not in doc[command]:
                    raise ConfigError([f"--replicates does not apply to {command}"])
                doc[command]["replicates"] = replicates
            _prepare_out(out)
            result = RUNNERS[command](doc[command], doc["seed"])
    except ConfigError as exc:
        print(f"maxid {command}: invalid configuration", file=sys.stderr)
        for err in exc.errors:
            print(f"  - {err}", file=sys.stderr)
        return EXIT_INVALID

    written = _write_outputs(out, result, doc["seed"], fmt)
    status = EXIT_FLAGGED if result.flags else EXIT_OK
    manifest = {
        "command": command,
        "config_path": str(cfg_path) if cfg_path else None,
        "config_sha256": hashlib.sha256(cfg_path.read_bytes()).hexdigest() if cfg_path else None,
        "config": doc,
        "seed": doc["seed"],
        "format": fmt,
        "replicates_override": replicates,
        "versions": _versions(),
        "started_utc": stamp,
        "wall_time_s": round(time.perf_counter() - started, 3),
        "outputs": written,
        "flags": result.flags,
        "exit_status": status,
    }
    (out / "manifest.json").write_text(dumps_json(manifest))
    if not quiet:
        print(f"maxid {command}: wrote {', '.join(written)} to {out}")
        for line in result.headline:
            print(f"  {line}")
        for flag in result.flags:
            print(f"  FLAG: {flag}")
    return status


def _run_report(config, out, seed, fmt, replicates, quiet):
    """Run a list of configs (default: every bundled one) into subdirectories."""
    if config is None:
        cfg_path = None
        entries = sorted(bundled_configs().items())
        doc: dict[str, Any] = {"seed": 0, "report": {"configs": [name for name, _ in entries]}}
    else:
        cfg_path = resolve_config_path(str(config))
        doc = load_config(cfg_path, "report")
        entries = []
        for name in doc["report"]["configs"]:
            path = resolve_config_path(name)
            if not path.exists():
                raise ConfigError([f"report/configs: no such config {name!r}"])
            entries.append((path.stem, path))
    if seed is not None:
        doc["seed"] = seed
    _prepare_out(out)
    runs, flags = {}, []
    for stem, path in entries:
        command = _command_of(path)
        status = execute(command, path, out / stem, seed=seed, fmt=fmt,
                         replicates=replicates, quiet=quiet)
        if status == EXIT_INVALID:
            raise ConfigError([f"{stem}: invalid configuration (see above)"])
        summary = json.loads((out / stem / "summary.json").read_text())
        runs[stem] = {"command": command, "exit_status": status, "summary": summary}
        if status == EXIT_FLAGGED:
            flags.append(f"{stem}: flagged diagnostics")
    result = RunResult({"command": "report", "seed": doc["seed"], "runs": runs},
                       {"runs": [{"config": s, "command": r["command"], "exit_status": r["exit_status"]}
                                 for s, r in runs.items()]},
                       flags, [f"{len(runs)} runs"])
    return result, doc, cfg_path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxid",
        description="Dependence diagnostics for max-i.d. processes: exact models, "
                    "sequence classifiers, Brown-Resnick and ideal-gas simulations.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="YAML/JSON config file or bundled config name")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help=f"output directory (default ${OUT_ROOT_ENV}/<command>-<config>)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    parser.add_argument("--replicates", type=int, help="override the replicate count (br, gas)")
    parser.add_argument("--quiet", action="store_true", help="print nothing on success")
    parser.add_argument("--list-configs", action="store_true", help="list bundled configs and exit")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    if "--list-configs" in argv:
        for name, path in sorted(bundled_configs().items()):
            print(f"{name}\t{path}")
        return EXIT_OK
    args = parser.parse_args(argv)
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be non-negative")
    if args.replicates is not None and args.replicates < 1:
        parser.error("--replicates must be positive")
    if args.out:
        out = Path(args.out)
    else:
        stem = Path(args.config).stem if args.config else "bundled"
        out = Path(os.environ.get(OUT_ROOT_ENV, DEFAULT_OUT_ROOT)) / f"{args.command}-{stem}"
    config = Path(args.config) if args.config else None
    return execute(args.command, config, out, seed=args.seed, fmt=args.format,
                   replicates=args.replicates, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
