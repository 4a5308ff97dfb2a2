import csv
import os

import numpy as np
import pytest

from cmmi import cli
from cmmi.experiment import (
    ExperimentSpec,
    SpecError,
    aggregate,
    emit_csv,
    emit_plot_script,
    plot_script,
    read_trials_csv,
    run_experiment,
    trial_seed,
)
from cmmi.system import SystemConfig


def small(kind="nmse-vs-sinr", **kw):
    kw.setdefault("trials", 6)
    kw.setdefault("sweep_values", (-5.0, 5.0) if "sinr" in kind else (8, 12))
    kw.setdefault("block_size", 4)
    kw.setdefault("mi_draws", 200)
    return ExperimentSpec(kind, **kw)


class TestSpec:
    def test_defaults(self):
        spec = ExperimentSpec("nmse-vs-sinr")
        assert spec.trials == 2000 and spec.sweep_values[0] == -10 and spec.sweep_values[-1] == 15
        assert ExperimentSpec("sr-vs-sinr").trials == 500
        assert ExperimentSpec("rank-detection").sinr_axis == "sinr"

    @pytest.mark.parametrize(
        "kw",
        [
            dict(trials=-1),
            dict(methods=("FOO",)),
            dict(rank_mode="guess"),
            dict(sinr_axis="snr"),
            dict(scm_noise="half"),
            dict(sinr_axis="sinr", sweep_values=(30.0,)),
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(SpecError):
            small(**kw).validate()

    def test_unknown_kind(self):
        with pytest.raises(SpecError):
            ExperimentSpec("nmse-vs-time")

    def test_jd_needs_samples(self):
        with pytest.raises(SpecError, match="more samples"):
            small("nmse-vs-samples", sweep_values=(3,)).validate()

    def test_non_integer_samples(self):
        with pytest.raises(SpecError):
            small("nmse-vs-samples", sweep_values=(8.5,)).validate()

    def test_seeds_unique(self):
        seeds = {trial_seed(7, i, t) for i in range(20) for t in range(500)}
        assert len(seeds) == 20 * 500


class TestRun:
    def test_repeatable_single_trial(self):
        spec = small(trials=1, sweep_values=(0.0,))
        assert run_experiment(spec) == run_experiment(spec)

    def test_records(self):
        recs = run_experiment(small())
        assert len(recs) == 12
        assert [r.trial_index for r in recs[:6]] == list(range(6))
        r = recs[0]
        assert set(r.nmse) == {"SCM", "EVD", "PCA-EVD", "JD"}
        assert r.flops["SCM"] == 3072 and "EVD" not in r.flops
        assert r.jd_converged in (True, False) and r.sr == {}

    def test_block_size_does_not_change_records(self):
        a = run_experiment(small(block_size=1))
        b = run_experiment(small(block_size=5))
        assert a == b

    def test_worker_count_does_not_change_records(self):
        spec = small(trials=4)
        assert run_experiment(spec, workers=1) == run_experiment(spec, workers=2)

    def test_sr_and_ideal(self):
        recs = run_experiment(small("sr-vs-sinr", trials=2, config=SystemConfig(beta=0.3, noise_bob=0.1, noise_mallory=0.1)))
        r = recs[0]
        assert set(r.sr) == {"SCM", "EVD", "PCA-EVD", "JD", "ideal"}
        assert r.nmse["ideal"] == 0 and all(v >= 0 for v in r.sr.values())

    def test_aic_rank_mode(self):
        recs = run_experiment(small(rank_mode="aic", trials=3))
        assert all(1 <= r.rank_used <= 6 for r in recs)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        recs = run_experiment(small("sr-vs-sinr", trials=2, config=SystemConfig(beta=0.3, noise_bob=0.1, noise_mallory=0.1)))
        trials, _ = emit_csv(recs, tmp_path)
        assert read_trials_csv(trials) == recs
        with open(trials, encoding="utf-8") as fh:
            header = next(csv.reader(fh))
        assert header[:3] == ["sweep_value", "trial_index", "seed"]

    def test_aggregate_means(self, tmp_path):
        recs = run_experiment(small())
        _, agg = emit_csv(recs, tmp_path)
        rows = list(csv.DictReader(open(agg, encoding="utf-8")))
        for row in rows:
            v = float(row["sweep_value"])
            vals = [r.nmse["JD"] for r in recs if r.sweep_value == v]
            assert float(row["nmse_JD_mean"]) == pytest.approx(np.mean(vals), abs=1e-9, rel=1e-11)
            assert float(row["nmse_JD_se"]) == pytest.approx(np.std(vals, ddof=1) / np.sqrt(len(vals)), rel=1e-10)

    def test_empty_method_subset(self, tmp_path):
        recs = run_experiment(small(trials=1))
        with pytest.raises(ValueError):
            emit_csv(recs, tmp_path, methods=())
        with pytest.raises(ValueError):
            emit_csv([], tmp_path)

    def test_unwritable(self, tmp_path):
        recs = run_experiment(small(trials=1))
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match=str(blocker)):
            emit_csv(recs, blocker / "sub")

    def test_stderr_shrinks(self):
        def se(n):
            recs = run_experiment(small(trials=n, sweep_values=(0.0,), block_size=250, methods=("PCA-EVD",)))
            cols, rows = aggregate(recs)
            return rows[0][cols.index("nmse_PCA-EVD_se")]

        ratio = se(100) / se(400)
        assert 2 * 0.7 <= ratio <= 2 * 1.3


class TestPlot:
    def _agg(self, tmp_path, kind):
        cfg = SystemConfig(beta=0.3, noise_bob=0.1, noise_mallory=0.1)
        recs = run_experiment(small(kind, trials=2, config=cfg))
        return emit_csv(recs, tmp_path)[1]

    def test_nmse_log_scale(self, tmp_path):
        text = plot_script(self._agg(tmp_path, "nmse-vs-sinr"), "nmse-vs-sinr")
        assert "set logscale y" in text and "set ylabel 'NMSE'" in text

    def test_sr_linear(self, tmp_path):
        text = plot_script(self._agg(tmp_path, "sr-vs-sinr"), "sr-vs-sinr")
        assert "unset logscale y" in text and "secrecy rate" in text.lower()

    def test_series_match_header(self, tmp_path):
        agg = self._agg(tmp_path, "nmse-vs-samples")
        path = emit_plot_script(agg, "nmse-vs-samples")
        assert os.path.basename(path) == "plot.nmse-vs-samples.txt"
        header = next(csv.reader(open(agg, encoding="utf-8")))
        present = {c for c in header if c.startswith("nmse_") and c.endswith("_mean")}
        text = open(path, encoding="utf-8").read()
        referenced = {c for c in header if f'"{c}"' in text and c.endswith("_mean")}
        assert referenced == present

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(ValueError):
            plot_script(self._agg(tmp_path, "nmse-vs-sinr"), "fig-9")


class TestCli:
    def test_config_parse(self):
        vals = cli.parse_config_text("n_b = 6\ntrials = 3  # inline\nsweep = -5, 0\n")
        assert vals == {"n_b": 6, "trials": 3, "sweep": "-5, 0"}
        with pytest.raises(SpecError):
            cli.parse_config_text("nope = 1")
        with pytest.raises(SpecError):
            cli.parse_config_text("n_b = many")

    def test_run_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("trials = 50\nsweep = 0\nmethods = PCA-EVD\n")
        out = tmp_path / "out"
        code = cli.main(["nmse-sinr", "--config", str(cfg), "--trials", "2", "--out", str(out)])
        assert code == 0
        for name in ("trials.csv", "aggregate.csv", "plot.nmse-vs-sinr.txt", "run.cfg"):
            assert (out / name).exists()
        assert len(read_trials_csv(out / "trials.csv")) == 2
        # the written settings reproduce the run
        code = cli.main(["nmse-sinr", "--config", str(out / "run.cfg"), "--out", str(tmp_path / "again")])
        assert code == 0
        assert (out / "trials.csv").read_bytes() == (tmp_path / "again" / "trials.csv").read_bytes()

    def test_rejected_spec_exit_status(self, tmp_path, capsys):
        assert cli.main(["sr-sinr", "--methods", "FOO", "--out", str(tmp_path)]) != 0
        assert "error" in capsys.readouterr().err
        assert cli.main(["nmse-sinr", "--config", str(tmp_path / "missing.cfg")]) != 0

    def test_flops(self, capsys):
        assert cli.main(["flops"]) == 0
        out = capsys.readouterr().out
        assert "SCM,3072" in out and "PCA-EVD,69632" in out and "JD,132084" in out
