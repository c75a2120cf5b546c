import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cautious_ac.harness import cli
from cautious_ac.harness.config import ConfigError, algo_from_dict, load_config, parse_config
from cautious_ac.harness.experiment import (
    BoundViolation,
    check_bounds,
    read_records,
    render,
    run_compare,
    run_experiment,
    run_sweep,
)
from cautious_ac.harness.metrics import oscillation_metrics

SMALL = {
    "env": {"kind": "random", "params": {"num_states": 2, "num_actions": 2}, "seed": 3},
    "algo": {"name": "cac", "iterations": 10},
}


def _cfg(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


class TestOscillation:
    def test_monotone(self):
        r = oscillation_metrics([1, 1, 2, 5])
        assert (r.sup_drop, r.rms_drop, r.num_drops) == (0.0, 0.0, 0)

    def test_single_drop(self):
        r = oscillation_metrics([0, 3, 1, 2])
        assert (r.sup_drop, r.rms_drop, r.num_drops, r.num_steps) == (2.0, 2.0, 1, 3)

    def test_two_drops(self):
        r = oscillation_metrics([5, 4, 6, 3])
        assert r.sup_drop == 3.0 and r.num_drops == 2
        assert r.rms_drop == pytest.approx(2.2361, abs=1e-4)

    def test_steps_divisor(self):
        r = oscillation_metrics([5, 4, 6, 3], divisor="steps")
        assert r.rms_drop == pytest.approx(math.sqrt(10 / 3))

    def test_invalid(self):
        with pytest.raises(ValueError):
            oscillation_metrics([1.0])
        with pytest.raises(ValueError):
            oscillation_metrics([1.0, np.nan])
        with pytest.raises(ValueError):
            oscillation_metrics([1.0, 2.0], divisor="other")

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=60))
    def test_rms_below_sup(self, returns):
        for div in ("drops", "steps"):
            r = oscillation_metrics(returns, div)
            assert 0 <= r.rms_drop <= r.sup_drop * (1 + 1e-12)
            drops = [a - b for a, b in zip(returns, returns[1:]) if b < a]
            assert r.num_drops == len(drops)
            if drops:
                assert r.sup_drop == max(drops)


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({"env": {"kind": "chain", "params": {"n": 3}}})
        assert cfg.repeats == 1 and cfg.eval_every == 1 and cfg.emit == "csv"
        name, algo = algo_from_dict(cfg.algo)
        assert name == "cac" and algo.reg.kappa == 0.2 and algo.reg.tau == 0.1
        assert algo.zeta_mode.state.nu_a == 0.01 and algo.zeta_mode.state.nu_maxdiff == 0.001

    @pytest.mark.parametrize(
        "data",
        [
            {"env": {"kind": "random"}, "extra": 1},
            {"env": {"kind": "maze"}},
            {"env": {"kind": "random"}, "algo": {"kappa": -1}},
            {"env": {"kind": "random"}, "algo": {"zeta": {"mode": "fixed", "value": 2}}},
            {"env": {"kind": "random"}, "algo": {"name": "cvi", "tau": 0.0}},
            {"env": {"kind": "random"}, "repeats": 0},
            {"algo": {}},
        ],
    )
    def test_rejects(self, data):
        with pytest.raises(ConfigError):
            parse_config(data)

    def test_presets(self):
        cfg = parse_config(
            {**SMALL, "presets": [{"label": "a", "algo": {"zeta": {"mode": "exact", "horizon_const": 0.5}}}]}
        )
        name, algo = algo_from_dict({**cfg.algo, **cfg.presets[0][1]})
        assert algo.zeta_mode.horizon_const == 0.5

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "missing.json"))
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(str(bad))


class TestExperiment:
    def test_counting_contract(self):
        result = run_experiment(parse_config({**SMALL, "repeats": 1}))
        assert len(result.rows) == 10
        assert len(result.summaries) == 1
        text = render(result)
        data, _, summary = text.partition("#summary\n")
        assert len(data.strip().splitlines()) == 11
        assert summary.splitlines()[0].startswith("label,repeat,sup_drop")

    def test_eval_every(self):
        result = run_experiment(parse_config({**SMALL, "eval_every": 3}))
        assert [rec.k for _, _, rec in result.rows] == [0, 3, 6, 9]

    def test_repeat_seeds(self):
        cfg = parse_config({**SMALL, "algo": {"iterations": 5, "noise_sigma": 0.3, "seed": 4}, "repeats": 2})
        result = run_experiment(cfg)
        # repeat 1 of base seed 4 equals repeat 0 of base seed 5
        shifted = run_experiment(cfg, seed=5)
        rep1 = [rec for _, r, rec in result.rows if r == 1]
        rep0 = [rec for _, r, rec in shifted.rows if r == 0]
        assert rep1 == rep0

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_round_trip(self, tmp_path, fmt):
        cfg = parse_config({**SMALL, "algo": {"iterations": 12, "noise_sigma": 0.2}, "repeats": 2})
        result = run_experiment(cfg)
        path = tmp_path / f"out.{fmt}"
        path.write_text(render(result, fmt))
        assert read_records(str(path)) == result.rows

    def test_round_trip_non_finite(self, tmp_path):
        result = run_experiment(parse_config(SMALL))
        label, rep, rec = result.rows[0]
        result.rows[0] = (label, rep, replace(rec, max_kl_consecutive=math.inf, m=-math.inf))
        for fmt in ("csv", "json"):
            path = tmp_path / f"inf.{fmt}"
            path.write_text(render(result, fmt))
            assert read_records(str(path)) == result.rows

    def test_compare_and_sweep_labels(self):
        cfg = parse_config(
            {
                **SMALL,
                "presets": [{"label": "x", "algo": {}}, {"label": "y", "algo": {"name": "spi"}}],
                "sweep": {"tau": [0.05, 0.1], "zeta": ["exact", 1.0]},
            }
        )
        assert {lab for lab, _, _ in run_compare(cfg).rows} == {"x", "y"}
        labels = {lab for lab, _, _ in run_sweep(cfg).rows}
        assert labels == {f"tau={t};zeta={z}" for t in (0.05, 0.1) for z in ("exact", 1.0)}

    def test_compare_requires_presets(self):
        with pytest.raises(ConfigError):
            run_compare(parse_config(SMALL))
        with pytest.raises(ConfigError):
            run_sweep(parse_config(SMALL))

    def test_bad_env_params(self):
        with pytest.raises(ConfigError):
            run_experiment(parse_config({"env": {"kind": "chain", "params": {"size": 3}}}))


class TestCheckBounds:
    def test_clean_run_passes(self):
        lines = []
        check_bounds(parse_config({**SMALL, "algo": {"name": "cvi", "iterations": 30}}), log=lines.append)
        assert lines[0] == "bound at k=1: 2.5820"

    def test_corrupted_policy_is_caught(self):
        def corrupt(k, pi):
            if k == 4:
                bad = np.zeros_like(pi)
                bad[:, 0] = 1.0
                return bad
            return pi

        with pytest.raises(BoundViolation) as info:
            # a large tau shrinks the bound below the injected jump
            cfg = parse_config({**SMALL, "algo": {"name": "cvi", "kappa": 0.2, "tau": 100.0, "iterations": 10}})
            check_bounds(cfg, perturb=corrupt)
        assert info.value.k in (4, 5)

    def test_noise_rejected(self):
        with pytest.raises(ConfigError):
            check_bounds(parse_config({**SMALL, "algo": {"noise_sigma": 0.1}}))
        with pytest.raises(ConfigError):
            check_bounds(parse_config({**SMALL, "algo": {"name": "cpi"}}))


class TestCli:
    def test_solve_to_stdout(self, tmp_path, capsys):
        assert cli.main(["solve", "--config", _cfg(tmp_path, SMALL)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("label,repeat,k,J,") and "#summary" in out

    def test_format_flag_and_config_emit(self, tmp_path):
        out = tmp_path / "o.json"
        assert cli.main(["solve", "--config", _cfg(tmp_path, SMALL), "--format", "json", "--out", str(out)]) == 0
        assert set(json.loads(out.read_text())) == {"records", "summary"}
        path = tmp_path / "configured.csv"
        cfg = _cfg(tmp_path, {**SMALL, "output_path": str(path)}, "with_out.json")
        assert cli.main(["solve", "--config", cfg]) == 0
        assert path.read_text().startswith("label,")

    def test_metrics_emits_both_divisors(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        cfg = _cfg(tmp_path, {**SMALL, "algo": {"iterations": 20, "noise_sigma": 0.5}})
        assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
        capsys.readouterr()
        assert cli.main(["metrics", str(out)]) == 0
        text = capsys.readouterr().out
        divisors = {line.rsplit(",", 1)[1] for line in text.split("#summary\n")[1].splitlines()[1:]}
        assert divisors == {"drops", "steps"}
        assert cli.main(["metrics", str(out), "--osc-divisor", "steps"]) == 0
        text = capsys.readouterr().out
        assert {line.rsplit(",", 1)[1] for line in text.split("#summary\n")[1].splitlines()[1:]} == {"steps"}

    def test_exit_codes(self, tmp_path):
        assert cli.main(["solve", "--config", str(tmp_path / "missing.json")]) == 2
        assert cli.main(["solve", "--config", _cfg(tmp_path, {"env": {"kind": "random"}, "bogus": 1})]) == 2
        assert cli.main(["solve", "--config", _cfg(tmp_path, SMALL), "--out", str(tmp_path / "no" / "x.csv")]) == 2
        assert cli.main(["metrics", str(tmp_path / "missing.csv")]) == 2
        assert cli.main(["check-bounds", "--config", _cfg(tmp_path, SMALL)]) == 0

    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["solve"])
        assert info.value.code == 2
        with pytest.raises(SystemExit) as info:
            cli.main(["solve", "--config", "x", "--format", "xml"])
        assert info.value.code == 2

    def test_violation_exits_3(self, tmp_path, monkeypatch, capsys):
        real = cli.check_bounds

        def corrupted(config, seed=None, log=None):
            def flip(k, pi):
                # near-uniform policy replaced by a deterministic one
                return np.eye(pi.shape[1])[np.zeros(len(pi), dtype=int)] if k == 2 else pi

            return real(config, seed=seed, perturb=flip, log=log)

        monkeypatch.setattr(cli, "check_bounds", corrupted)
        cfg = _cfg(tmp_path, {**SMALL, "algo": {"name": "cvi", "tau": 1000.0, "iterations": 6}})
        assert cli.main(["check-bounds", "--config", cfg]) == 3
        assert "k=" in capsys.readouterr().err

    def test_algorithm_failure_exits_3(self, tmp_path, monkeypatch):
        from cautious_ac.harness import experiment
        from cautious_ac.mdp import ConvergenceError

        def boom(*args, **kwargs):
            raise ConvergenceError("synthetic", 1.0, 5)

        monkeypatch.setattr(experiment, "run_cac", boom)
        assert cli.main(["solve", "--config", _cfg(tmp_path, SMALL)]) == 3
