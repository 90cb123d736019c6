"""Command line entry point: ``python -m app.lab.cli <command> [options]``.

Exit codes: 0 pass, 1 verification failure, 2 usage or config error,
3 numerical-regime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from typing import Any, Dict, List, Optional, Sequence, Tuple

from rich.console import Console
from rich.table import Table

from app.core import logging as lab_logging
from app.core.config import apply_settings, load_settings
from app.core.errors import ConfigError
from app.db.session import record_run
from app.lab.bootstrap import get_registry
from app.lab.models import ExperimentResponse
from app.lab.suites.constructions.experiments import SYSTEMS

logger = logging.getLogger(__name__)
console = Console()

Option = Tuple[Tuple[str, ...], Dict[str, Any]]


def _opt(*flags: str, **kwargs: Any) -> Option:
    kwargs.setdefault("default", None)
    return flags, kwargs


COMMANDS: Dict[str, Tuple[str, str, List[Option]]] = {
    "simulate": (
        "constructions.simulate",
        "orbit CSV and phase portrait of a one-factor system",
        [
            _opt("--system", choices=SYSTEMS),
            _opt("--steps", type=int),
            _opt("--orbits", type=int),
            _opt("--p", type=int),
            _opt("--nu", type=float),
            _opt("--N", type=int),
            _opt("--eps", type=float),
        ],
    ),
    "pendulum": (
        "pendulum.sweep",
        "periodic orbits and island linear data of the pseudo-pendulum",
        [
            _opt("--q", type=int),
            _opt("--N", type=int),
            _opt("--sweep", action="store_true"),
            _opt("--points", type=int),
            _opt("--mu", type=float),
        ],
    ),
    "verify-periodic": (
        "constructions.verify_periodic",
        "certify a periodic ellipse or an island disc",
        [
            _opt("--kind", choices=("ellipse", "island")),
            _opt("--p", type=int),
            _opt("--nu", type=float),
            _opt("--q", type=int),
            _opt("--N", type=int),
            _opt("--mu", type=float),
            _opt("--samples", type=int),
        ],
    ),
    "verify-wandering": (
        "constructions.verify_wandering",
        "certify the wandering disc of the rescaled standard map",
        [_opt("--q", type=int), _opt("--window", type=int), _opt("--samples", type=int)],
    ),
    "verify-coupling": (
        "coupling.verify",
        "periodic product of two ellipses under the coupled map",
        [
            _opt("--q", type=int),
            _opt("--p", type=int),
            _opt("--nu", type=float),
            _opt("--nu-prime", dest="nu_prime", type=float),
            _opt("--samples", type=int),
        ],
    ),
    "detect-island": (
        "pendulum.detect_island",
        "bounded-orbit scan around a_{q,N}",
        [
            _opt("--q", type=int),
            _opt("--N", type=int),
            _opt("--mu", type=float),
            _opt("--rays", type=int),
            _opt("--radial", type=int),
            _opt("--iterations", type=int),
        ],
    ),
    "stability-sweep": (
        "stability.sweep",
        "escape times of an ensemble as eps decreases",
        [
            _opt("--n", type=int),
            _opt("--eps", dest="epsilons", type=float, nargs="+"),
            _opt("--rho", type=float),
            _opt("--cap", type=int),
            _opt("--ensemble-size", dest="ensemble_size", type=int),
            _opt("--workers", type=int),
        ],
    ),
    "suspend": (
        "suspension.suspend",
        "generating function and suspension Hamiltonian of a near-integrable twist map",
        [
            _opt("--eps", type=float),
            _opt("--angles", type=int),
            _opt("--actions", type=int),
            _opt("--samples", type=int),
            _opt("--tolerance", type=float),
            _opt("--no-dump", dest="dump", action="store_false"),
        ],
    ),
    "assemble": (
        "constructions.assemble",
        "assemble Psi_{j,q} or Phi_j and certify its domain",
        [
            _opt("system", choices=("psi", "phi"), nargs="?"),
            _opt("--j", type=int),
            _opt("--n", type=int),
            _opt("--ell", type=int),
            _opt("--mu", type=float),
            _opt("--q-max", dest="q_max", type=int),
            _opt("--no-verify", dest="verify", action="store_false"),
            _opt("--samples", type=int),
            _opt("--window", type=int),
        ],
    ),
}

GLOBAL_KEYS = {"command", "config", "out", "seed", "json", "log_level"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lab", description="Near-integrable symplectic map laboratory")
    parser.add_argument("--config", help="TOML file with [potential], [bumps], ... sections")
    parser.add_argument("--out", help="root directory for run artifacts")
    parser.add_argument("--seed", type=int, help="override lab.seed")
    parser.add_argument("--json", action="store_true", help="print the response as JSON on stdout")
    parser.add_argument("--log-level", dest="log_level")
    commands = parser.add_subparsers(dest="command", required=True)
    for command, (_, help_text, options) in COMMANDS.items():
        sub = commands.add_parser(command, help=help_text)
        for flags, kwargs in options:
            sub.add_argument(*flags, **kwargs)
    return parser


def _configure(config: Optional[str], seed: Optional[int], log_level: Optional[str]) -> None:
    loaded = load_settings(config)
    if seed is not None:
        loaded = loaded.model_copy(update={"lab": loaded.lab.model_copy(update={"seed": seed})})
    applied = apply_settings(loaded)
    lab_logging.setup_logging(log_level or applied.log_level)


def _render(command: str, response: ExperimentResponse) -> None:
    style = {"ok": "green", "fail": "yellow", "error": "red"}.get(response.status, "white")
    table = Table(title=f"{command}: [{style}]{response.status}[/{style}]")
    table.add_column("Key", style="cyan")
    table.add_column("Value", style="white")
    for key, value in response.data.items():
        if isinstance(value, (dict, list)):
            value = json.dumps(value, default=str)
            if len(value) > 120:
                value = value[:117] + "..."
        table.add_row(key, str(value))
    for key in ("run_dir", "exit_code"):
        table.add_row(key, str(response.metadata.get(key)))
    console.print(table)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _configure(args.config, args.seed, args.log_level)
    except ConfigError as exc:
        console.print(f"[bold red]config error[/bold red]: {exc}")
        logger.error(f"Configuration rejected: {exc}")
        return exc.exit_code

    name = COMMANDS[args.command][0]
    params = {k: v for k, v in vars(args).items() if k not in GLOBAL_KEYS and v is not None}
    started = time.time()
    response = get_registry().execute(name, params, out=args.out)
    record_run(name, params, response.model_dump(), int((time.time() - started) * 1000), "cli")
    if args.json:
        print(json.dumps(response.model_dump(), sort_keys=True, indent=2, default=str))
    else:
        _render(args.command, response)
    return int(response.metadata.get("exit_code", 1))


if __name__ == "__main__":
    sys.exit(main())
