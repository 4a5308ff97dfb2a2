"""Seeded Monte Carlo experiments over SINR or sample-count grids.

Trials are grouped into fixed-size blocks.  Each trial draws everything
from its own generator, seeded from ``(master_seed, sweep index, trial
index)``; a block then runs the estimators on its trials as one batch.
Because the batched numerics never mix members of a batch and block
boundaries do not depend on the worker count, the records are
bit-identical however many worker processes execute the blocks.
"""

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import CovarianceEstimate, evd_truncate, jd, pca_evd, scm
from .metrics import bob_mi, flop_counts, mallory_mi, nmse, sjnr, zfc_rbf
from .numerics import hermitian_evd, sample_complex_gaussian
from .rank import PENALTIES, rank_from_spectrum
from .system import (
    SystemConfig,
    draw_channels,
    jamming_only_samples,
    jnr_to_jamming_power,
    population_interference_cov,
    sinr_to_jamming_power,
)
from .validation import sample_covariance

log = logging.getLogger(__name__)

KINDS = ("nmse-vs-sinr", "nmse-vs-samples", "sr-vs-sinr", "rank-detection")
ALL_METHODS = ("SCM", "EVD", "PCA-EVD", "JD", "ideal")
SINR_GRID = tuple(np.arange(-10.0, 15.0 + 1e-9, 2.5).round(6))
DEFAULT_SWEEPS = {
    "nmse-vs-sinr": SINR_GRID,
    "sr-vs-sinr": SINR_GRID,
    "nmse-vs-samples": (4, 6, 8, 12, 16),
    "rank-detection": (8, 100),
}
DEFAULT_TRIALS = {"nmse-vs-sinr": 2000, "nmse-vs-samples": 2000, "sr-vs-sinr": 500, "rank-detection": 1000}
DEFAULT_METHODS = {
    "nmse-vs-sinr": ("SCM", "EVD", "PCA-EVD", "JD"),
    "nmse-vs-samples": ("SCM", "EVD", "PCA-EVD", "JD"),
    "sr-vs-sinr": ALL_METHODS,
    "rank-detection": ("PCA-EVD",),
}
# detection is posed at the power-ratio SINR; the NMSE and SR figures
# behave as printed only on the per-antenna JNR reading
DEFAULT_AXIS = {"nmse-vs-sinr": "jnr", "nmse-vs-samples": "jnr", "sr-vs-sinr": "jnr", "rank-detection": "sinr"}
# SR experiments need Bob to out-resolve Mallory; NMSE is scale free
SR_CONFIG = {"beta": 0.3, "noise_bob": 0.1, "noise_mallory": 0.1}
SCM_NOISE = ("raw", "known", "tail")
METRICS = ("nmse", "sjnr", "sr", "flops")
FLOAT_DIGITS = 12


class SpecError(ValueError):
    """An experiment specification that cannot run."""


def _round(x):
    return None if x is None else float(f"{x:.{FLOAT_DIGITS}g}")


@dataclass(frozen=True)
class ExperimentSpec:
    """What to sweep, how many trials, and under which conventions.

    ``sinr_axis`` selects how an SINR sweep value sets the jamming power:
    ``"jnr"`` reads it as the first-slot jamming-to-noise ratio per Bob
    antenna, ``"sinr"`` as ``beta P / (P_M sigma_m^2 n_jam + sigma_B^2)``.
    ``scm_noise`` is ``"raw"`` to score the plain sample covariance,
    ``"known"`` to subtract the configured noise power first, or ``"tail"``
    to subtract the trailing-eigenvalue noise estimate.
    """

    kind: str
    sweep_values: tuple = ()
    trials: int = 0
    master_seed: int = 0
    config: SystemConfig = field(default_factory=SystemConfig)
    methods: tuple = ()
    rank_mode: str = "oracle"
    aic_penalty: str = "full"
    sinr_axis: str = ""
    scm_noise: str = "raw"
    fixed_sinr_db: float = -5.0
    mi_draws: int = 2000
    block_size: int = 250

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not self.sweep_values:
            object.__setattr__(self, "sweep_values", DEFAULT_SWEEPS[self.kind])
        if not self.trials:
            object.__setattr__(self, "trials", DEFAULT_TRIALS[self.kind])
        if not self.methods:
            object.__setattr__(self, "methods", DEFAULT_METHODS[self.kind])
        if not self.sinr_axis:
            object.__setattr__(self, "sinr_axis", DEFAULT_AXIS[self.kind])
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        object.__setattr__(
            self, "methods", tuple(m for m in ALL_METHODS if m in set(self.methods))
        )

    @property
    def sweeps_samples(self):
        return self.kind in ("nmse-vs-samples", "rank-detection")

    def validate(self):
        unknown = set(self.methods) ^ set(self.methods).intersection(ALL_METHODS)
        if unknown or not self.methods:
            raise SpecError(f"methods must be a non-empty subset of {ALL_METHODS}")
        if self.trials < 1:
            raise SpecError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.master_seed < 2**64:
            raise SpecError("seed must be an unsigned 64-bit integer")
        if self.rank_mode not in ("oracle", "aic"):
            raise SpecError(f"rank mode must be 'oracle' or 'aic', got {self.rank_mode!r}")
        if self.aic_penalty not in PENALTIES:
            raise SpecError(f"aic_penalty must be one of {PENALTIES}, got {self.aic_penalty!r}")
        if self.sinr_axis not in ("jnr", "sinr"):
            raise SpecError(f"sinr_axis must be 'jnr' or 'sinr', got {self.sinr_axis!r}")
        if self.scm_noise not in SCM_NOISE:
            raise SpecError(f"scm_noise must be one of {SCM_NOISE}, got {self.scm_noise!r}")
        if self.block_size < 1 or self.mi_draws < 1:
            raise SpecError("block_size and mi_draws must be positive")
        cfg = self.config
        if self.rank_mode == "oracle" and cfg.n_jam >= cfg.n_b:
            raise SpecError("oracle rank must be below the number of Bob antennas")
        if cfg.n_b < 3:
            raise SpecError("rank detection needs at least 3 Bob antennas")
        for i in range(len(self.sweep_values)):
            trial_cfg = self.trial_config(i)
            if "JD" in self.methods and self.rank_mode == "oracle" and trial_cfg.n_samples <= cfg.n_jam:
                raise SpecError(
                    f"JD needs more samples than the rank: L={trial_cfg.n_samples}, r={cfg.n_jam}"
                )
            if trial_cfg.n_samples < 2:
                raise SpecError("need at least two samples per trial")
        return self

    def sinr_db(self, sweep_index):
        if self.sweeps_samples:
            return float(self.fixed_sinr_db)
        return float(self.sweep_values[sweep_index])

    def trial_config(self, sweep_index):
        """Configuration for every trial at one grid point."""
        cfg = self.config
        if self.sweeps_samples:
            value = self.sweep_values[sweep_index]
            if float(value) != int(value):
                raise SpecError(f"sample counts must be integers, got {value}")
            cfg = cfg.replace(n_samples=int(value))
        to_power = jnr_to_jamming_power if self.sinr_axis == "jnr" else sinr_to_jamming_power
        try:
            return cfg.replace(jam_power=to_power(cfg, self.sinr_db(sweep_index)))
        except ValueError as exc:
            raise SpecError(str(exc)) from exc


@dataclass
class TrialRecord:
    """Metrics of one trial; per-method dicts keyed by method name."""

    sweep_value: float
    trial_index: int
    seed: int
    detected_rank: int
    rank_used: int
    jd_converged: object
    nmse: dict
    sjnr: dict
    sr: dict
    flops: dict

    def row(self, methods):
        out = [
            _fmt(self.sweep_value),
            str(self.trial_index),
            str(self.seed),
            str(self.detected_rank),
            str(self.rank_used),
            "" if self.jd_converged is None else str(int(self.jd_converged)),
        ]
        for metric in METRICS:
            out.extend(_fmt(getattr(self, metric).get(m)) for m in methods)
        return out


def trial_seed(master_seed, sweep_index, trial_index):
    """64-bit seed for one trial, hashed from its coordinates."""
    ss = np.random.SeedSequence([int(master_seed), int(sweep_index), int(trial_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def trial_rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.{FLOAT_DIGITS}g}"


def _ideal_estimate(true_cov, rank):
    U = hermitian_evd(true_cov).eigenvectors[..., :rank]
    return CovarianceEstimate(true_cov, "ideal", rank, 0.0, basis=U)


def _estimate_batch(method, Y, r, cfg, spec):
    if method == "SCM":
        noise = {"raw": None, "known": cfg.noise_bob, "tail": "tail"}[spec.scm_noise]
        return scm(Y, noise, r)
    if method == "EVD":
        return evd_truncate(Y, r)
    if method == "PCA-EVD":
        return pca_evd(Y, r)
    return jd(Y, r)


def _pick(est, t):
    def at(x):
        return x[t] if isinstance(x, np.ndarray) and x.ndim > 0 else x

    return CovarianceEstimate(
        est.matrix[t],
        est.method,
        est.rank_used,
        at(est.noise_var_hat),
        at(est.converged),
        at(est.n_sweeps),
        None if est.rotation is None else est.rotation[t],
        None if est.basis is None else est.basis[t],
    )


def run_block(spec, sweep_index, start, stop):
    """Run trials ``start .. stop-1`` of one grid point."""
    cfg = spec.trial_config(sweep_index)
    L = cfg.n_samples
    seeds, rngs, channels, samples, truths, antennas = [], [], [], [], [], []
    for t in range(start, stop):
        seed = trial_seed(spec.master_seed, sweep_index, t)
        rng = trial_rng(seed)
        ch = draw_channels(cfg, rng)
        seeds.append(seed)
        rngs.append(rng)
        channels.append(ch)
        samples.append(jamming_only_samples(cfg, ch, rng))
        truths.append(population_interference_cov(cfg, ch))
        antennas.append(int(rng.integers(cfg.n_t)))
    Y = np.stack(samples)
    truth = np.stack(truths)

    detected = np.atleast_1d(
        rank_from_spectrum(
            hermitian_evd(sample_covariance(Y)).eigenvalues, L, penalty=spec.aic_penalty
        )
    )
    if spec.rank_mode == "oracle":
        used = np.full(len(seeds), cfg.n_jam)
    else:
        used = np.minimum(detected, L - 1)

    per_trial = [dict() for _ in seeds]
    for r in np.unique(used):
        members = np.flatnonzero(used == r)
        for method in spec.methods:
            if method == "ideal":
                continue
            est = _estimate_batch(method, Y[members], int(r), cfg, spec)
            for pos, t in enumerate(members):
                per_trial[t][method] = _pick(est, pos)

    records = []
    sweep_value = spec.sweep_values[sweep_index]
    want_sr = spec.kind == "sr-vs-sinr"
    for t, seed in enumerate(seeds):
        ch, rng, R = channels[t], rngs[t], truth[t]
        h = ch.HS[:, antennas[t]]
        ests = dict(per_trial[t])
        if "ideal" in spec.methods:
            ests["ideal"] = _ideal_estimate(R, cfg.n_jam)
        flops = flop_counts(L, cfg.n_b, int(used[t]), cfg.n_b).as_dict()
        rec = TrialRecord(
            sweep_value=sweep_value,
            trial_index=start + t,
            seed=seed,
            detected_rank=int(detected[t]),
            rank_used=int(used[t]),
            jd_converged=bool(ests["JD"].converged) if "JD" in ests else None,
            nmse={},
            sjnr={},
            sr={},
            flops={m: flops[m] for m in spec.methods if m in flops},
        )
        if want_sr:
            i_mallory = mallory_mi(cfg, ch, rng, spec.mi_draws)
            bob_noise = sample_complex_gaussian((spec.mi_draws, 1), 1.0, rng)
        for m in spec.methods:
            est = ests[m]
            rec.nmse[m] = _round(float(nmse(est.matrix, R)))
            u = zfc_rbf(est, h)
            rec.sjnr[m] = _round(float(sjnr(u, h, cfg, R)))
            if want_sr:
                i_bob = bob_mi(cfg, ch, u, R, rng, noise=bob_noise)
                rec.sr[m] = _round(max(0.0, i_bob - i_mallory))
        records.append(rec)
    return records


def _blocks(spec):
    for i in range(len(spec.sweep_values)):
        for start in range(0, spec.trials, spec.block_size):
            yield i, start, min(start + spec.block_size, spec.trials)


def _run_unit(args):
    spec, i, start, stop = args
    return run_block(spec, i, start, stop)


def run_experiment(spec, workers=1):
    """Execute every trial of ``spec`` and return records in grid order."""
    spec.validate()
    units = [(spec, i, a, b) for i, a, b in _blocks(spec)]
    log.info("%s: %d grid points x %d trials in %d blocks", spec.kind,
             len(spec.sweep_values), spec.trials, len(units))
    if workers <= 1:
        chunks = [_run_unit(u) for u in units]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_unit, units))
    index = {v: i for i, v in enumerate(spec.sweep_values)}
    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=lambda rec: (index[rec.sweep_value], rec.trial_index))
    seeds = [rec.seed for rec in records]
    if len(set(seeds)) != len(seeds):
        raise RuntimeError("trial seed collision")
    return records


# --- persistence -----------------------------------------------------------

BASE_COLUMNS = ["sweep_value", "trial_index", "seed", "detected_rank", "rank_used", "jd_converged"]


def trial_columns(methods):
    return BASE_COLUMNS + [f"{metric}_{m}" for metric in METRICS for m in methods]


def _methods_in(records):
    present = set()
    for rec in records:
        present.update(rec.nmse)
    return tuple(m for m in ALL_METHODS if m in present)


def _open_for_write(path):
    try:
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_trials_csv(records, path, methods=None):
    if not records:
        raise ValueError("no records to write")
    methods = _methods_in(records) if methods is None else tuple(methods)
    if not methods:
        raise ValueError("records carry no methods")
    with _open_for_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trial_columns(methods))
        for rec in records:
            writer.writerow(rec.row(methods))
    return path


def _parse_num(text, kind=float):
    return None if text == "" else kind(text)


def read_trials_csv(path):
    """Parse a file written by :func:`write_trials_csv` back into records."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        methods = tuple(c[len("nmse_"):] for c in header if c.startswith("nmse_"))
        records = []
        for row in reader:
            cell = dict(zip(header, row))
            per = {
                metric: {
                    m: _parse_num(cell[f"{metric}_{m}"], int if metric == "flops" else float)
                    for m in methods
                }
                for metric in METRICS
            }
            for metric in METRICS:
                per[metric] = {m: v for m, v in per[metric].items() if v is not None}
            conv = cell["jd_converged"]
            records.append(
                TrialRecord(
                    sweep_value=_parse_sweep(cell["sweep_value"]),
                    trial_index=int(cell["trial_index"]),
                    seed=int(cell["seed"]),
                    detected_rank=int(cell["detected_rank"]),
                    rank_used=int(cell["rank_used"]),
                    jd_converged=None if conv == "" else bool(int(conv)),
                    **per,
                )
            )
    return records


def _parse_sweep(text):
    value = float(text)
    return int(value) if value.is_integer() and "." not in text and "e" not in text else value


def aggregate(records):
    """Mean and standard error of every metric column per grid point.

    Returns ``(columns, rows)`` with one row per sweep value, in order.
    """
    methods = _methods_in(records)
    groups = {}
    for rec in records:
        groups.setdefault(rec.sweep_value, []).append(rec)
    metric_cols = [(metric, m) for metric in METRICS for m in methods]
    metric_cols = [
        (metric, m) for metric, m in metric_cols
        if any(m in getattr(rec, metric) for rec in records)
    ]
    columns = ["sweep_value", "n_trials", "detected_rank_mean", "detected_rank_se", "rank_hit_rate"]
    for metric, m in metric_cols:
        columns += [f"{metric}_{m}_mean", f"{metric}_{m}_se"]
    rows = []
    for value, recs in groups.items():
        used = np.array([r.rank_used for r in recs], dtype=float)
        det = np.array([r.detected_rank for r in recs], dtype=float)
        row = [value, len(recs), *_mean_se(det), float(np.mean(det == _mode(used)))]
        for metric, m in metric_cols:
            vals = np.array([getattr(r, metric)[m] for r in recs if m in getattr(r, metric)], dtype=float)
            row.extend(_mean_se(vals))
        rows.append(row)
    return columns, rows


def _mode(values):
    vals, counts = np.unique(values, return_counts=True)
    return vals[np.argmax(counts)]


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return None, None
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else None
    return mean, se


def write_aggregate_csv(records, path):
    columns, rows = aggregate(records)
    with _open_for_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    return path


def emit_csv(records, out_dir, methods=None):
    """Write ``trials.csv`` and ``aggregate.csv`` into ``out_dir``."""
    if methods is not None and not methods:
        raise ValueError("method subset is empty")
    if not records:
        raise ValueError("no records to write")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc.strerror or exc}") from exc
    trials = write_trials_csv(records, os.path.join(out_dir, "trials.csv"), methods)
    agg = write_aggregate_csv(records, os.path.join(out_dir, "aggregate.csv"))
    return trials, agg


# --- plotting --------------------------------------------------------------

PLOT_KINDS = {
    "nmse-vs-sinr": ("nmse", "SINR (dB)", "NMSE", True),
    "nmse-vs-samples": ("nmse", "Number of samples", "NMSE", True),
    "sr-vs-sinr": ("sr", "SINR (dB)", "Average secrecy rate (bits/channel use)", False),
    "rank-detection": (None, "Number of samples", "Probability of correct rank", False),
}


def plot_script(aggregate_path, kind):
    """Gnuplot source plotting one series per method from an aggregate file."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown figure kind {kind!r}; expected one of {tuple(PLOT_KINDS)}")
    metric, xlabel, ylabel, logy = PLOT_KINDS[kind]
    with open(aggregate_path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    if metric is None:
        series = [("rank_hit_rate", None, "AIC")]
    else:
        prefix = f"{metric}_"
        series = [
            (col, col[:-5] + "_se", col[len(prefix):-5])
            for col in header
            if col.startswith(prefix) and col.endswith("_mean")
        ]
    if not series:
        raise ValueError(f"{aggregate_path} has no {metric} columns to plot")
    lines = [
        "# gnuplot script",
        "set datafile separator ','",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set logscale y" if logy else "unset logscale y",
        "set grid",
        "set key top right",
    ]
    parts = []
    for mean_col, se_col, title in series:
        if se_col is not None and se_col in header:
            using = f'using "sweep_value":"{mean_col}":"{se_col}" with yerrorlines'
        else:
            using = f'using "sweep_value":"{mean_col}" with linespoints'
        parts.append(f"'{os.path.basename(aggregate_path)}' {using} title '{title}'")
    lines.append("plot " + ", \\\n     ".join(parts))
    return "\n".join(lines) + "\n"


def emit_plot_script(aggregate_path, kind, path=None):
    if path is None:
        path = os.path.join(os.path.dirname(aggregate_path) or ".", f"plot.{kind}.txt")
    text = plot_script(aggregate_path, kind)
    with _open_for_write(path) as fh:
        fh.write(text)
    return path
