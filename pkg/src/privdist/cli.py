"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 protocol error.
Flags mirror :class:`ExperimentConfig`; values from ``--config`` (JSON or
YAML) override flags.  Reports go to ``--output``, else to
``$PRIVDIST_OUTPUT_DIR``, else only to stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import yaml

from .data import ConfigError, DataError
from .experiments import ExperimentConfig, Report, nss_bench, run, secsum_bench
from .net import ProtocolError, TransportError
from .nmf import DomainError as NmfDomainError
from .normed import DegenerateInputError, OfflinePhaseError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PROTOCOL = 0, 1, 2, 3
OUTPUT_ENV = "PRIVDIST_OUTPUT_DIR"

_OPTIONAL_TYPES = {"party_fraction": float, "dataset": str, "dataset_format": str, "output": str}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "experiment":
            continue
        flag = "--" + f.name.replace("_", "-")
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kw = {"dest": f.name, "default": argparse.SUPPRESS}
        if isinstance(default, bool):
            parser.add_argument(flag, action=argparse.BooleanOptionalAction, **kw)
        elif isinstance(default, list):
            parser.add_argument(flag, nargs="+", type=int, **kw)
        else:
            typ = _OPTIONAL_TYPES.get(f.name, type(default))
            parser.add_argument(flag, type=typ, **kw)
    parser.add_argument("--config", help="JSON or YAML file whose values override flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privdist", description="Private distributed NMF/SVD experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("equivalence", "uplift", "privacy", "dp-baseline"):
        _add_config_flags(sub.add_parser(name, help=f"run the {name} experiment"))
    sb = sub.add_parser("secsum-bench", help="time SecSum invocations")
    sb.add_argument("--d", type=int, nargs="+", default=[1000])
    sb.add_argument("--parties", type=int, default=3)
    sb.add_argument("--mode", choices=("float", "fixed", "prf"), default="fixed")
    sb.add_argument("--repeats", type=int, default=5)
    sb.add_argument("--transport", choices=("memory", "tcp"), default="memory")
    sb.add_argument("--output")
    nb = sub.add_parser("nss-bench", help="time NormedSecSum invocations")
    nb.add_argument("--d", type=int, nargs="+", default=[1000])
    nb.add_argument("--parties", type=int, default=3)
    nb.add_argument("--backend", choices=("float", "ideal", "shared-circuit"), default="shared-circuit")
    nb.add_argument("--f-bits", dest="f_bits", type=int, default=31)
    nb.add_argument("--repeats", type=int, default=1)
    nb.add_argument("--transport", choices=("memory", "tcp"), default="memory")
    nb.add_argument("--output")
    return parser


def load_config_file(path) -> dict:
    text = Path(path).read_text()
    try:
        values = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(values, dict):
        raise ConfigError(f"{path}: expected a mapping of config keys")
    return {k.replace("-", "_"): v for k, v in values.items()}


def config_from_args(command: str, args: argparse.Namespace) -> ExperimentConfig:
    values = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if getattr(args, "config", None):
        try:
            values.update(load_config_file(args.config))
        except OSError as exc:
            raise ConfigError(str(exc)) from None
    values["experiment"] = command
    try:
        return ExperimentConfig.from_dict(values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _output_dir(explicit):
    return explicit or os.environ.get(OUTPUT_ENV) or None


def _emit(report: Report, output) -> None:
    out = _output_dir(output)
    if out:
        jpath, cpath = report.write(out)
        print(f"wrote {jpath} and {cpath}", file=sys.stderr)
    print(report.to_json())


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "secsum-bench":
            rows = [secsum_bench(d, args.parties, args.mode, args.repeats, args.transport) for d in args.d]
            _emit(Report("secsum-bench", vars(args), rows), args.output)
        elif args.command == "nss-bench":
            rows = [nss_bench(d, args.parties, args.backend, args.f_bits, args.repeats, args.transport) for d in args.d]
            _emit(Report("nss-bench", vars(args), rows), args.output)
        else:
            cfg = config_from_args(args.command, args)
            _emit(run(cfg), cfg.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, NmfDomainError, DegenerateInputError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ProtocolError, TransportError, OfflinePhaseError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
