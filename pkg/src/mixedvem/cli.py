"""Command-line entry point for the benchmark sweeps.

Settings come from an optional ``key=value`` config file; command-line flags
override it.  Exit codes: 0 when the sweep ran (individual solver failures
are recorded in the CSV), 2 on a configuration error, 3 on an I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import InvalidArgumentError
from .experiments import ExperimentConfig, run_experiment
from .vector_basis import Approach

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
CONFIG_KEYS = ("test", "approach", "k_min", "k_max", "meshes", "aspect_ratio", "out", "workers")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mixedvem", description="Mixed virtual element benchmark sweeps.")
    p.add_argument("--config", type=Path, help="key=value settings file")
    p.add_argument("--test", choices=["1", "2", "patch"])
    p.add_argument("--approach", choices=["monomial", "partial", "ortho", "all"])
    p.add_argument("--k-min", type=int, dest="k_min")
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--meshes", help="comma-separated cell counts per side, e.g. 5,10,20")
    p.add_argument("--aspect-ratio", dest="aspect_ratio", help="comma-separated aspect ratios (test 2)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="threads for element assembly")
    p.add_argument("--parallel", action="store_true", help="shorthand for --workers 4")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def read_config_file(path: Path) -> dict[str, str]:
    settings = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        settings[key] = value
    return settings


def _ints(text: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"{what}: expected comma-separated integers, got {text!r}") from exc


def _floats(text: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from exc


def make_config(settings: dict[str, str]) -> ExperimentConfig:
    kw = {}
    if "test" in settings:
        kw["test"] = settings["test"]
    if "approach" in settings:
        name = settings["approach"]
        if name == "all":
            kw["approaches"] = tuple(Approach)
        else:
            try:
                kw["approaches"] = tuple(Approach(a.strip()) for a in name.split(","))
            except ValueError as exc:
                raise ConfigError(f"unknown approach {name!r}") from exc
    for key in ("k_min", "k_max", "workers"):
        if key in settings:
            vals = _ints(settings[key], key)
            if len(vals) != 1:
                raise ConfigError(f"{key}: expected a single integer, got {settings[key]!r}")
            kw[key] = vals[0]
    if "meshes" in settings:
        kw["meshes"] = _ints(settings["meshes"], "meshes")
    if "aspect_ratio" in settings:
        kw["aspect_ratios"] = _floats(settings["aspect_ratio"], "aspect_ratio")
    if "out" in settings:
        kw["out"] = Path(settings["out"])
    try:
        return ExperimentConfig(**kw)
    except (InvalidArgumentError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        settings = read_config_file(args.config) if args.config else {}
        for key in CONFIG_KEYS:
            val = getattr(args, key, None)
            if val is not None:
                settings[key] = str(val)
        if args.parallel and "workers" not in settings:
            settings["workers"] = "4"
        config = make_config(settings)
    except ConfigError as exc:
        print(f"mixedvem: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"mixedvem: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        results, rates = run_experiment(config)
    except OSError as exc:
        print(f"mixedvem: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {results} and {rates}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
