"""Command line front end for the experiment catalog.

Configs are JSON documents validated against the packaged ``schema.json``
before any computation runs; unknown keys are rejected.  Exit codes: 0 when
every asserted check passes, 1 on a numerical check failure (the audit rows
are echoed), 2 on a config or schema error (the failing key path is named).
"""

import argparse
import json
import sys
import warnings
from importlib import resources

import jsonschema

from .experiments import EXPERIMENTS, run_experiment


def load_schema():
    """The published config schema, as shipped inside the package."""
    text = resources.files("scatterkit").joinpath("schema.json").read_text()
    return json.loads(text)


def validate_config(cfg, schema=None):
    """Return None if cfg conforms, else (dotted key path, message)."""
    schema = load_schema() if schema is None else schema
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if not errors:
        return None
    err = jsonschema.exceptions.best_match(errors)
    path = ".".join(str(part) for part in err.absolute_path)
    return path or "(top level)", err.message


def list_experiments():
    """Registered experiment names with one-line descriptions."""
    return [(name, desc) for name, (_, desc) in EXPERIMENTS.items()]


def _echo_csv_rows(rep, stream):
    for path in rep.csv_paths:
        stream.write(f"--- {path} ---\n")
        with open(path, "r", encoding="ascii") as fh:
            stream.write(fh.read())


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="scatterkit",
        description="Run a named verification experiment from a JSON config.",
    )
    parser.add_argument("--config", metavar="PATH", help="JSON config file")
    parser.add_argument(
        "--seed", type=int, default=None, help="override the config seed"
    )
    parser.add_argument(
        "--out", metavar="DIR", default=None, help="override the output directory"
    )
    parser.add_argument(
        "--list", action="store_true", help="list experiments and exit"
    )
    parser.add_argument(
        "--strict", action="store_true", help="treat runtime warnings as failures"
    )
    args = parser.parse_args(argv)

    if args.list:
        width = max(len(name) for name, _ in list_experiments())
        for name, desc in list_experiments():
            print(f"{name:<{width}}  {desc}")
        return 0

    if args.config is None:
        parser.error("--config is required unless --list is given")

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON: {exc}", file=sys.stderr)
        return 2

    problem = validate_config(cfg)
    if problem is not None:
        path, message = problem
        print(f"config error at {path}: {message}", file=sys.stderr)
        return 2

    name = cfg["experiment"]
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = args.out if args.out is not None else cfg.get("out", f"runs/{name}")

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = run_experiment(name, cfg, out, seed=seed)

    print(report.summary())
    failed = not report.passed
    if args.strict and caught:
        failed = True
        for w in caught:
            print(f"[FAIL] warning under --strict: {w.message}")

    if failed:
        _echo_csv_rows(report, sys.stdout)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
