"""Command-line entry point: ``lowreg-moments <command> [flags]``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import tomli
import tomli_w

from .forests import NOISE_MODES, REAL, SUPPORTED_ORDERS, degenerate_count, duhamel_trees, paired_forest_classes
from .oscillatory import CONVENTIONS, PHYSICAL, geometric_taus
from .scheme import assemble_scheme, stabilize, to_physical
from .spectral import SCHEME_IDS, GridSpec, StepError
from .trees import SPECS, get_spec, n_plus, symmetry_factor, upsilon

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_NUMERIC = 5

CSV_VERSION = 1
COMMANDS = ("trees", "pairings", "scheme", "order-check", "mc-validate", "converge")
SCHEME_FORMATS = ("fourier", "physical", "json")
TABLE_FORMATS = ("text", "csv", "json")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    eq: str = "nls"
    order: int = 1
    n: Optional[int] = None
    grid: int = 32
    taus: list[float] = field(default_factory=lambda: [0.01])
    steps: int = 256
    samples: int = 2000
    seed: int = 0
    kmax: int = 16
    noise: str = REAL
    out: Optional[str] = None
    format: Optional[str] = None
    convention: str = PHYSICAL
    theta: float = 2.0
    ks: list[int] = field(default_factory=lambda: [0, 1, 2, 3])
    scheme: Optional[str] = None
    stabilized: bool = False

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def validate(self, command: str) -> None:
        if self.eq not in SPECS:
            raise ConfigError(f"eq must be one of {sorted(SPECS)}, got {self.eq!r}")
        if self.order not in SUPPORTED_ORDERS:
            raise ConfigError(f"order must be one of {SUPPORTED_ORDERS}, got {self.order}")
        if not self.taus:
            raise ConfigError("tau list is empty")
        if any(not (t > 0 and math.isfinite(t)) for t in self.taus):
            raise ConfigError(f"tau values must be positive, got {self.taus}")
        if self.grid < 8 or self.grid & (self.grid - 1):
            raise ConfigError(f"grid must be a power of two >= 8, got {self.grid}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.samples < 2:
            raise ConfigError("samples must be >= 2")
        if self.kmax < 1:
            raise ConfigError("kmax must be >= 1")
        if command in ("mc-validate", "converge") and self.kmax > self.grid // 2:
            raise ConfigError(f"kmax={self.kmax} exceeds grid/2={self.grid // 2}")
        if self.noise not in NOISE_MODES:
            raise ConfigError(f"noise must be one of {NOISE_MODES}, got {self.noise!r}")
        if self.convention not in CONVENTIONS:
            raise ConfigError(f"convention must be one of {CONVENTIONS}, got {self.convention!r}")
        if self.scheme is not None and (self.scheme not in SCHEME_IDS or not self.scheme.startswith(self.eq)):
            raise ConfigError(f"scheme {self.scheme!r} does not fit eq={self.eq}; choices {SCHEME_IDS}")
        allowed = SCHEME_FORMATS if command == "scheme" else TABLE_FORMATS
        if self.format is not None and self.format not in allowed:
            raise ConfigError(f"format for {command} must be one of {allowed}, got {self.format!r}")


COMMAND_DEFAULTS = {
    "order-check": {"taus": geometric_taus(4, 10), "samples": 50, "kmax": 8},
    "converge": {"taus": geometric_taus(4, 9), "ks": [1, 2, 3]},
}


def parse_taus(text: str) -> list[float]:
    """Comma list of floats, or ``geom:a:b`` for 2^-a .. 2^-b."""
    text = text.strip()
    if not text:
        return []
    if text.startswith("geom:"):
        _, a, b = text.split(":")
        return geometric_taus(int(a), int(b))
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


FLAG_FIELDS = {
    "eq": str,
    "order": int,
    "n": int,
    "grid": int,
    "tau": parse_taus,
    "steps": int,
    "samples": int,
    "seed": int,
    "kmax": int,
    "noise": str,
    "out": str,
    "format": str,
    "convention": str,
    "theta": float,
    "k": _int_list,
    "scheme": str,
}
RENAMED = {"tau": "taus", "k": "ks"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowreg-moments", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML file with ExperimentConfig keys")
        p.add_argument("--show-config", action="store_true", help="print the merged config and exit")
        p.add_argument("--stabilized", action="store_true", default=None, help="use the filtered stepper")
        for flag, conv in FLAG_FIELDS.items():
            p.add_argument(f"--{flag}", type=conv if conv is not str else None, default=None)
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> ExperimentConfig:
    """Flags over file over command defaults over dataclass defaults."""
    data: dict[str, Any] = dict(COMMAND_DEFAULTS.get(command, {}))
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                data.update(tomli.load(fh))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
    for flag in FLAG_FIELDS:
        val = getattr(args, flag)
        if val is not None:
            data[RENAMED.get(flag, flag)] = val
    if args.stabilized:
        data["stabilized"] = True
    cfg = ExperimentConfig.from_dict(data)
    cfg.validate(command)
    return cfg


# -- output --------------------------------------------------------------------------


def _emit(cfg: ExperimentConfig, text: str) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def _table(cfg: ExperimentConfig, command: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    fmt = cfg.format or "csv"
    if fmt == "json":
        return json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n"
    if fmt == "text":
        widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
        lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths))]
        lines += ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)) for r in rows]
        return "\n".join(lines) + "\n"
    buf = io.StringIO()
    buf.write(f"# lowreg-moments {command} v{CSV_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.12g}"


# -- commands ------------------------------------------------------------------------


def cmd_trees(cfg: ExperimentConfig) -> int:
    spec = get_spec(cfg.eq)
    rows = []
    for i, t in enumerate(duhamel_trees(spec, cfg.order)):
        rows.append([i, n_plus(t, spec), symmetry_factor(t), str(upsilon(t, spec)), str(t)])
    _emit(cfg, _table(cfg, "trees", ["index", "integrals", "symmetry", "upsilon", "tree"], rows))
    return EXIT_OK


def cmd_pairings(cfg: ExperimentConfig) -> int:
    spec = get_spec(cfg.eq)
    classes = paired_forest_classes(spec, cfg.order, cfg.noise)
    rows = []
    for i, c in enumerate(classes, start=1):
        rep = c.representative
        rows.append(
            [i, f"{c.tree_pair[0]}.{c.tree_pair[1]}", c.multiplicity, len(rep.free_symbols), str(rep.left), str(rep.right)]
        )
    text = _table(cfg, "pairings", ["class", "tree_pair", "multiplicity", "free", "left", "right"], rows)
    if (cfg.format or "csv") == "text":
        text += f"{len(classes)} classes; {degenerate_count(spec, cfg.order, cfg.noise)} k=0-only matchings dropped\n"
    _emit(cfg, text)
    return EXIT_OK


def cmd_scheme(cfg: ExperimentConfig) -> int:
    spec = get_spec(cfg.eq)
    expr = assemble_scheme(spec, cfg.order, cfg.n, cfg.noise, cfg.convention)
    fmt = cfg.format or "fourier"
    physical = to_physical(expr)
    if cfg.stabilized:
        if cfg.order != 1:
            raise ConfigError("stabilized schemes exist for order 1 only")
        physical = stabilize(physical, f"{spec.name}2")
    if fmt == "fourier" and not cfg.stabilized:
        text = expr.to_fourier() + "\n"
    elif fmt == "json":
        text = json.dumps({"fourier": expr.to_json(), "physical": physical.to_json()}, indent=2) + "\n"
    else:
        text = physical.render() + "\n"
    _emit(cfg, text)
    return EXIT_OK


def cmd_order_check(cfg: ExperimentConfig) -> int:
    from .experiments import forest_order_census

    spec = get_spec(cfg.eq)
    rows = forest_order_census(spec, cfg.order, cfg.taus, cfg.samples, cfg.kmax, cfg.seed, cfg.noise, cfg.convention)
    table = [
        [f"{r.tree_pair[0]}.{r.tree_pair[1]}", r.member, json.dumps(r.assignment), _fmt(r.slope), r.threshold, r.status]
        for r in rows
    ]
    _emit(cfg, _table(cfg, "order-check", ["tree_pair", "member", "assignment", "slope", "threshold", "status"], table))
    failed = sum(r.status == "fail" for r in rows)
    print(f"order-check: {len(rows)} samples, {failed} below threshold", file=sys.stderr)
    return EXIT_FAILED if failed else EXIT_OK


def _scheme_id(cfg: ExperimentConfig) -> Optional[str]:
    if cfg.scheme:
        return cfg.scheme
    if cfg.stabilized:
        return f"{cfg.eq}2_stab"
    return None


def cmd_converge(cfg: ExperimentConfig) -> int:
    from .experiments import SERIES_MARGIN, convergence_study

    spec = get_spec(cfg.eq)
    rows, slopes = convergence_study(
        spec, cfg.order, cfg.ks, cfg.taus, GridSpec(cfg.grid), cfg.theta, cfg.kmax, _scheme_id(cfg), cfg.noise, cfg.convention
    )
    table = [[_fmt(r.tau), r.k, _fmt(r.scheme), _fmt(r.series), _fmt(r.error), _fmt(slopes[r.k])] for r in rows]
    _emit(cfg, _table(cfg, "converge", ["tau", "k", "scheme", "series", "error", "slope"], table))
    threshold = cfg.order + 2 - SERIES_MARGIN
    failed = [k for k, s in slopes.items() if s is not None and s < threshold]
    print(f"converge: slopes {slopes}, threshold {threshold}", file=sys.stderr)
    return EXIT_FAILED if failed else EXIT_OK


def cmd_mc_validate(cfg: ExperimentConfig) -> int:
    from .experiments import mc_validation

    spec = get_spec(cfg.eq)
    table = []
    failed = 0
    for tau in cfg.taus:
        rows = mc_validation(
            spec, cfg.order, cfg.ks, tau, GridSpec(cfg.grid), cfg.samples, cfg.seed, cfg.theta, cfg.kmax,
            cfg.steps, cfg.noise, _scheme_id(cfg), cfg.convention,
        )
        for r in rows:
            failed += not r.passed
            table.append(
                [_fmt(tau), r.k, _fmt(r.scheme), _fmt(r.series), _fmt(r.mc_mean), _fmt(r.mc_stderr),
                 _fmt(r.allowance), r.samples, r.discarded, "pass" if r.passed else "fail"]
            )
    header = ["tau", "k", "scheme", "series", "mc_mean", "mc_stderr", "allowance", "samples", "discarded", "status"]
    _emit(cfg, _table(cfg, "mc-validate", header, table))
    return EXIT_FAILED if failed else EXIT_OK


HANDLERS = {
    "trees": cmd_trees,
    "pairings": cmd_pairings,
    "scheme": cmd_scheme,
    "order-check": cmd_order_check,
    "mc-validate": cmd_mc_validate,
    "converge": cmd_converge,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = resolve_config(args.command, args)
        if args.show_config:
            sys.stdout.write(cfg.to_toml())
            return EXIT_OK
        return HANDLERS[args.command](cfg)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (StepError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
