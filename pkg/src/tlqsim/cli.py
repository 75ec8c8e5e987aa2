"""Command-line entry point: ``tlqsim <suite> [--config PATH] [--seed N] ...``.

Settings resolve as flag > ``TLQSIM_*`` environment variable > config file >
default.  A config is one JSON object with the keys in ``CONFIG_KEYS``;
``params`` holds suite parameter overrides (for ``selftest``, a mapping from
suite name to overrides).  Exit status: 0 when every assertion passes, 1 when
one fails, 2 for an invalid config, 3 for a runtime contract violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import warnings

from . import __version__
from .experiments import RUNNERS, SELFTEST_ORDER, SuiteResult, resolve_params, run_suite
from .reductions import ContractViolation, InvalidParams

SUBCOMMANDS = ["refute", "junta", "km", "mqsq2sq", "weaklearn", "concentration", "sqdim", "selftest"]
CONFIG_KEYS = {"suite", "seed", "trials", "threads", "out", "format", "params"}
ENV_PREFIX = "TLQSIM_"
CSV_SCHEMA = "tlqsim-rows/1: suite,regime,seed,metric,value"
DEFAULT_SEED = 1

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CONTRACT = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tlqsim", description="Seeded simulation suites for refutation-based learning.")
    ap.add_argument("--version", action="version", version=f"tlqsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="master seed (u64)")
        sp.add_argument("--trials", type=int, help="override every trial count of the suite")
        sp.add_argument("--out", help="output path; a manifest is written next to it")
        sp.add_argument("--format", choices=["json", "csv"])
        sp.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    return ap


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(cfg) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"violated predicate: known config field (unknown {unknown})")
    return cfg


def _env(name: str, cast=str):
    raw = os.environ.get(ENV_PREFIX + name.upper())
    if raw is None:
        return None
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"{ENV_PREFIX}{name.upper()}: {exc}") from exc


def resolve_settings(args, cfg: dict) -> dict:
    casts = {"seed": int, "trials": int, "threads": int, "out": str, "format": str}
    out = {}
    for key, cast in casts.items():
        val = getattr(args, key)
        if val is None:
            val = _env(key, cast)
        if val is None:
            val = cfg.get(key)
        out[key] = val
    out["seed"] = DEFAULT_SEED if out["seed"] is None else int(out["seed"])
    if not 0 <= out["seed"] < 2**64:
        raise ConfigError("violated predicate: 0 <= seed < 2^64")
    out["threads"] = max(1, int(out["threads"] or 1))
    out["format"] = out["format"] or "json"
    if out["format"] not in ("json", "csv"):
        raise ConfigError("violated predicate: format in {json, csv}")
    if out["trials"] is not None and out["trials"] < 1:
        raise ConfigError("violated predicate: trials >= 1")
    return out


def plan(command: str, cfg: dict, trials: int | None) -> list[tuple[str, dict]]:
    """Resolve (suite, params) pairs for a command; raises InvalidParams on bad overrides."""
    if cfg.get("suite") not in (None, command):
        raise ConfigError(f"violated predicate: config suite {cfg['suite']!r} matches command {command!r}")
    overrides = cfg.get("params") or {}
    if not isinstance(overrides, dict):
        raise ConfigError("violated predicate: params is an object")
    if command == "selftest":
        unknown = sorted(set(overrides) - set(RUNNERS))
        if unknown:
            raise ConfigError(f"violated predicate: known suite in selftest params (unknown {unknown})")
        return [(s, resolve_params(s, overrides.get(s), trials)) for s in SELFTEST_ORDER]
    return [(command, resolve_params(command, overrides, trials))]


def manifest(command: str, settings: dict, planned: list[tuple[str, dict]]) -> dict:
    import networkx
    import numpy
    import scipy
    import sklearn

    return {
        "tool": "tlqsim",
        "version": __version__,
        "command": command,
        "seed": settings["seed"],
        "format": settings["format"],
        "csv_schema": CSV_SCHEMA,
        "seed_derivation": "SeedSequence([seed, crc32(suite id), trial index])",
        "versions": {"python": platform.python_version(), "numpy": numpy.__version__, "scipy": scipy.__version__,
                     "scikit-learn": sklearn.__version__, "networkx": networkx.__version__},
        "params": {s: p for s, p in planned},
    }


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def to_csv(results: list[SuiteResult], seed: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suite", "regime", "seed", "metric", "value"])
    for r in results:
        for row in r.rows:
            for k, v in row.items():
                if k != "regime":
                    w.writerow([r.suite, row["regime"], seed, k, _cell(v)])
        for a in r.assertions:
            w.writerow([r.suite, "assert", seed, a.name, _cell(a.value)])
            w.writerow([r.suite, "assert", seed, a.name + ":threshold", _cell(a.threshold)])
            w.writerow([r.suite, "assert", seed, a.name + ":passed", _cell(a.passed)])
    return buf.getvalue()


def to_json(results: list[SuiteResult], man: dict, error: dict | None = None) -> str:
    doc = {"manifest": man, "passed": error is None and all(r.passed for r in results),
           "results": [r.to_json() for r in results]}
    if error is not None:
        doc["error"] = error
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None, man: dict) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        with open(out + ".manifest.json", "w", encoding="utf-8") as fh:
            fh.write(json.dumps(man, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.config is None:
        args.config = os.environ.get(ENV_PREFIX + "CONFIG")
    try:
        cfg = load_config(args.config)
        settings = resolve_settings(args, cfg)
        planned = plan(args.command, cfg, settings["trials"])
    except (ConfigError, InvalidParams, OSError) as exc:
        print(f"tlqsim: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    man = manifest(args.command, settings, planned)
    results: list[SuiteResult] = []
    error = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for suite, params in planned:
            try:
                res = run_suite(suite, params, settings["seed"], settings["threads"])
            except ContractViolation as exc:
                error = {"suite": suite, "type": type(exc).__name__, "message": str(exc)}
                break
            results.append(res)
            status = "PASS" if res.passed else "FAIL"
            print(f"[{status}] {suite} ({res.elapsed:.1f}s)", file=sys.stderr)
            for a in res.assertions:
                print(f"    {'ok ' if a.passed else 'BAD'} {a.name}: {a.value:.6g} vs {a.threshold:.6g}", file=sys.stderr)
    if settings["format"] == "csv":
        text = to_csv(results, settings["seed"])
    else:
        text = to_json(results, man, error)
    _emit(text, settings["out"], man)
    if error is not None:
        print(f"tlqsim: contract violation in {error['suite']}: {error['message']}", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
