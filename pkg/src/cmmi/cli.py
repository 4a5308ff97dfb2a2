"""Command-line experiment runner.

Configuration files are flat ``key = value`` lines; keys are the
:class:`SystemConfig` fields plus the experiment keys below.  Command-line
flags override file values.
"""

import argparse
import configparser
import dataclasses
import logging
import os
import sys

from .experiment import (
    ALL_METHODS,
    SR_CONFIG,
    ExperimentSpec,
    SpecError,
    emit_csv,
    emit_plot_script,
    run_experiment,
)
from .metrics import flop_counts
from .system import SystemConfig

COMMANDS = {
    "nmse-sinr": "nmse-vs-sinr",
    "nmse-samples": "nmse-vs-samples",
    "sr-sinr": "sr-vs-sinr",
    "rank-detect": "rank-detection",
}
EXPERIMENT_KEYS = {
    "sweep": str,
    "trials": int,
    "seed": int,
    "methods": str,
    "rank_mode": str,
    "aic_penalty": str,
    "sinr_axis": str,
    "scm_noise": str,
    "fixed_sinr_db": float,
    "mi_draws": int,
    "block_size": int,
    "workers": int,
    "out": str,
}
_SECTION = "run"


def _system_types():
    return {f.name: f.type for f in dataclasses.fields(SystemConfig)}


def parse_config_text(text, source="<config>"):
    """Parse flat ``key = value`` text into typed values.

    Unknown keys and malformed values raise :class:`SpecError`.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=source)
    except configparser.Error as exc:
        raise SpecError(f"{source}: {exc}") from exc
    types = {**_system_types(), **EXPERIMENT_KEYS}
    values = {}
    for key, raw in parser[_SECTION].items():
        if key not in types:
            raise SpecError(f"{source}: unknown key {key!r}")
        try:
            values[key] = types[key](raw)
        except ValueError as exc:
            raise SpecError(f"{source}: bad value for {key!r}: {raw!r}") from exc
    return values


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SpecError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config_text(text, source=path)


def _split(text):
    return [item.strip() for item in text.split(",") if item.strip()]


def _sweep_values(text, kind):
    try:
        if kind in ("nmse-vs-samples", "rank-detection"):
            return tuple(int(v) for v in _split(text))
        return tuple(float(v) for v in _split(text))
    except ValueError as exc:
        raise SpecError(f"bad sweep list {text!r}") from exc


def build_spec(kind, values):
    """Experiment spec plus worker count and output directory from merged values."""
    system_keys = set(_system_types())
    base = dict(SR_CONFIG) if kind == "sr-vs-sinr" else {}
    base.update({k: v for k, v in values.items() if k in system_keys})
    try:
        cfg = SystemConfig(**base)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    methods = ()
    if values.get("methods") is not None:
        methods = tuple(_split(values["methods"]))
        unknown = [m for m in methods if m not in ALL_METHODS]
        if unknown or not methods:
            raise SpecError(f"methods must be a non-empty subset of {ALL_METHODS}, got {values['methods']!r}")
    kwargs = dict(kind=kind, config=cfg, methods=methods)
    if values.get("sweep"):
        kwargs["sweep_values"] = _sweep_values(values["sweep"], kind)
    if values.get("trials") is not None:
        if values["trials"] < 1:
            raise SpecError(f"trials must be >= 1, got {values['trials']}")
        kwargs["trials"] = values["trials"]
    if values.get("seed") is not None:
        kwargs["master_seed"] = values["seed"]
    for key in ("rank_mode", "aic_penalty", "sinr_axis", "scm_noise", "fixed_sinr_db", "mi_draws", "block_size"):
        if values.get(key) is not None:
            kwargs[key] = values[key]
    spec = ExperimentSpec(**kwargs).validate()
    workers = values.get("workers") or 1
    if workers < 1:
        raise SpecError(f"workers must be >= 1, got {workers}")
    out = values.get("out") or os.path.join("results", kind)
    return spec, workers, out


def dump_spec(spec):
    """The effective run settings in the config-file format."""
    lines = [f"# {spec.kind}"]
    for f in dataclasses.fields(SystemConfig):
        lines.append(f"{f.name} = {getattr(spec.config, f.name)!r}")
    lines += [
        f"sweep = {', '.join(str(v) for v in spec.sweep_values)}",
        f"trials = {spec.trials}",
        f"seed = {spec.master_seed}",
        f"methods = {', '.join(spec.methods)}",
        f"rank_mode = {spec.rank_mode}",
        f"aic_penalty = {spec.aic_penalty}",
        f"sinr_axis = {spec.sinr_axis}",
        f"scm_noise = {spec.scm_noise}",
        f"fixed_sinr_db = {spec.fixed_sinr_db!r}",
        f"mi_draws = {spec.mi_draws}",
        f"block_size = {spec.block_size}",
    ]
    return "\n".join(lines) + "\n"


def _add_common(p):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--trials", type=int, help="trials per grid point")
    p.add_argument("--out", help="output directory")
    p.add_argument("--methods", help="comma-separated subset of " + ",".join(ALL_METHODS))
    p.add_argument("--rank-mode", choices=("oracle", "aic"), dest="rank_mode")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--sweep", help="comma-separated grid (dB, or sample counts)")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="cmmi", description="Monte Carlo study of interference covariance estimators."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in COMMANDS.items():
        _add_common(sub.add_parser(name, help=f"run the {kind} experiment"))
    fp = sub.add_parser("flops", help="print closed-form FLOP counts")
    fp.add_argument("--config")
    fp.add_argument("--K", type=int, dest="K", help="snapshots (default n_samples)")
    fp.add_argument("--nr", type=int, help="receive dimension (default n_b)")
    fp.add_argument("--r", type=int, dest="r", help="rank (default n_jam)")
    fp.add_argument("--nb", type=int, help="antennas setting the pair count (default n_b)")
    fp.add_argument("--out", help="also write flops.csv here")
    return parser


def _merged(args):
    values = load_config(args.config) if args.config else {}
    for key in ("seed", "trials", "out", "methods", "rank_mode", "workers", "sweep"):
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    return values


def _run_flops(args):
    values = load_config(args.config) if args.config else {}
    base = {k: v for k, v in values.items() if k in _system_types()}
    try:
        cfg = SystemConfig(**base)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    K = args.K if args.K is not None else cfg.n_samples
    nr = args.nr if args.nr is not None else cfg.n_b
    r = args.r if args.r is not None else cfg.n_jam
    nb = args.nb if args.nb is not None else cfg.n_b
    try:
        counts = flop_counts(K, nr, r, nb).as_dict()
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    text = "method,flops\n" + "".join(f"{m},{c}\n" for m, c in counts.items())
    sys.stdout.write(f"# K={K} Nr={nr} r={r} Nb={nb}\n{text}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "flops.csv"), "w", encoding="utf-8") as fh:
            fh.write(text)


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "flops":
            _run_flops(args)
            return 0
        kind = COMMANDS[args.command]
        spec, workers, out = build_spec(kind, _merged(args))
        records = run_experiment(spec, workers=workers)
        trials_path, agg_path = emit_csv(records, out)
        plot_path = emit_plot_script(agg_path, kind)
        with open(os.path.join(out, "run.cfg"), "w", encoding="utf-8") as fh:
            fh.write(dump_spec(spec))
    except (SpecError, ValueError, OSError) as exc:
        print(f"cmmi: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {trials_path}, {agg_path}, {plot_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
