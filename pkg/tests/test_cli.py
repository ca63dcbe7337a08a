import csv
import json
import math

import numpy as np
import pytest

from phaseamp import analytic, cli


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, command, cfg, out="out", extra=()):
    code = cli.main([command, "--config", write_config(tmp_path, cfg), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(v) for v in r] for r in rows[1:]]


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


SWEEP = {"alpha": 0.48, "T": 0.8, "eta": 0.63, "M": [1, 2], "n_th": {"start": 0.05, "stop": 1.0, "num": 5}}
OPERATING_POINT = {"alpha": math.sqrt(0.186), "n_th": 0.15, "T": 0.8, "eta": 0.63, "M": [1, 2, 3, 4],
                   "wigner": {"x": {"start": -2, "stop": 2, "num": 9}, "p": {"start": -2, "stop": 2, "num": 7}}}


class TestSweep:
    def test_rows_and_header(self, tmp_path):
        code, out = run(tmp_path, "sweep", SWEEP)
        assert code == 0
        header, rows = read_csv(out / "sweep.csv")
        assert header == ["n_th", "M", "gamma", "gain", "ps"]
        assert len(rows) == 10
        assert [r[1] for r in rows] == [1] * 5 + [2] * 5

    def test_full_figure_grid(self, tmp_path):
        cfg = dict(SWEEP, M=[1, 2, 3, 4], n_th={"start": 0.01, "stop": 2.0, "num": 60})
        code, out = run(tmp_path, "sweep", cfg)
        assert code == 0
        _, rows = read_csv(out / "sweep.csv")
        assert len(rows) == 240

    def test_values_match_library(self, tmp_path):
        _, out = run(tmp_path, "sweep", SWEEP)
        _, rows = read_csv(out / "sweep.csv")
        n, M, gamma, _, ps = rows[3]
        p = analytic.AmplifierParams(0.48, n, 0.8, 0.63, int(M))
        assert gamma == analytic.normalized_variance(p)
        assert ps == analytic.success_probability(p)

    def test_byte_identical_rerun(self, tmp_path):
        run(tmp_path, "sweep", SWEEP, out="a")
        run(tmp_path, "sweep", SWEEP, out="b")
        assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")

    def test_empty_grid(self, tmp_path):
        assert run(tmp_path, "sweep", dict(SWEEP, n_th=[]))[0] == 2

    def test_spot_check_gap_exits_3(self, tmp_path, monkeypatch):
        real = analytic.success_probability
        monkeypatch.setattr(analytic, "success_probability", lambda p, **kw: real(p, **kw) * (1 + 1e-4))
        assert run(tmp_path, "sweep", SWEEP)[0] == 3


class TestAmplify:
    def test_operating_point_files(self, tmp_path):
        code, out = run(tmp_path, "amplify", OPERATING_POINT)
        assert code == 0
        names = set(p.name for p in out.iterdir())
        for tag in ["input", "M1", "M2", "M3", "M4"]:
            assert {f"state_{tag}.json", f"stats_{tag}.json", f"wigner_{tag}.csv"} <= names
        header, rows = read_csv(out / "wigner_M2.csv")
        assert header == ["x", "p", "w"]
        assert len(rows) == 9 * 7
        stats = [json.loads((out / f"stats_M{m}.json").read_text()) for m in range(1, 5)]
        assert all(b["v_canonical"] < a["v_canonical"] for a, b in zip(stats, stats[1:]))

    def test_state_json_round_trips(self, tmp_path):
        from phaseamp.fock import FockDensity
        _, out = run(tmp_path, "amplify", OPERATING_POINT)
        rho = FockDensity.from_dict(json.loads((out / "state_M1.json").read_text()))
        assert rho.is_valid()

    def test_empty_m_list_is_input_only(self, tmp_path):
        code, out = run(tmp_path, "amplify", dict(OPERATING_POINT, M=[]))
        assert code == 0
        assert sorted(p.name for p in out.iterdir()) == ["state_input.json", "stats_input.json", "wigner_input.csv"]

    def test_herald_impossible_exit(self, tmp_path, capsys):
        code, _ = run(tmp_path, "amplify", dict(OPERATING_POINT, alpha=0.0, n_th=0.0, M=[0, 3]))
        assert code == 4
        assert "M=3" in capsys.readouterr().err

    def test_byte_identical_rerun(self, tmp_path):
        run(tmp_path, "amplify", OPERATING_POINT, out="a")
        run(tmp_path, "amplify", OPERATING_POINT, out="b")
        assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")


class TestPhaseDist:
    def test_distributions(self, tmp_path):
        code, out = run(tmp_path, "phase-dist", OPERATING_POINT)
        assert code == 0
        widths = []
        for tag in ["input", "noisy", "M1", "M2", "M3", "M4"]:
            header, rows = read_csv(out / f"phase_{tag}.csv")
            assert header == ["theta", "p"]
            th, p = np.array(rows).T
            assert len(th) == 2048
            assert np.trapezoid(p, th) == pytest.approx(1.0, abs=1e-9)
            widths.append(p.max())
        # the heralded distributions get taller (narrower) with every extra photon
        assert all(b > a for a, b in zip(widths[2:], widths[3:]))

    def test_vacuum_is_flat(self, tmp_path):
        code, out = run(tmp_path, "phase-dist", {"alpha": 0.0})
        assert code == 0
        _, rows = read_csv(out / "phase_input.csv")
        assert np.allclose(np.array(rows)[:, 1], 1 / (2 * math.pi))


class TestTomo:
    CFG = {"state": {"alpha": 0.4}, "n_samples": 50000, "eta_hd": 0.85, "dim": 12, "seed": 0}

    def test_round_trip(self, tmp_path, capsys):
        code, out = run(tmp_path, "tomo", self.CFG)
        assert code == 0
        printed = capsys.readouterr().out
        assert float(printed.split()[-1]) >= 0.995
        header, rows = read_csv(out / "records.csv")
        assert header == ["theta", "x"] and len(rows) == 50000
        summary = json.loads((out / "summary.json").read_text())
        assert summary["fidelity"] >= 0.995

    def test_seed_flag_overrides(self, tmp_path):
        cfg = dict(self.CFG, n_samples=2000, dim=6)
        run(tmp_path, "tomo", cfg, out="a")
        run(tmp_path, "tomo", cfg, out="b", extra=("--seed", "9"))
        run(tmp_path, "tomo", dict(cfg, seed=9), out="c")
        assert (tmp_path / "a" / "records.csv").read_bytes() != (tmp_path / "b" / "records.csv").read_bytes()
        assert snapshot(tmp_path / "b") == snapshot(tmp_path / "c")

    def test_bad_settings(self, tmp_path):
        assert run(tmp_path, "tomo", dict(self.CFG, dim=1))[0] == 2


class TestValidate:
    def test_acceptance_grid(self, tmp_path):
        code, out = run(tmp_path, "validate", {"grid": "acceptance", "mc_samples": 0})
        assert code == 0
        with open(out / "validation.csv") as fh:
            assert len(fh.readlines()) == 241

    def test_custom_grid_with_mc(self, tmp_path):
        grid = {"alpha": [0.48], "n_th": [0.2], "T": [0.8], "eta": [0.63], "M": [1, 2]}
        code, out = run(tmp_path, "validate", {"grid": grid, "mc_samples": 20000})
        assert code == 0
        with open(out / "validation.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2 and all(float(r["ps_mc_se"]) > 0 for r in rows)

    def test_gap_exits_3(self, tmp_path, monkeypatch):
        real = analytic.mu_amplified
        monkeypatch.setattr(analytic, "mu_amplified", lambda p, **kw: real(p, **kw) * (1 + 1e-5))
        grid = {"alpha": [0.48], "n_th": [0.2], "T": [0.8], "eta": [0.63], "M": [1]}
        assert run(tmp_path, "validate", {"grid": grid, "mc_samples": 0})[0] == 3

    def test_bad_grid(self, tmp_path):
        assert run(tmp_path, "validate", {"grid": "everything"})[0] == 2


class TestConfigErrors:
    def test_missing_file(self, tmp_path):
        assert cli.main(["sweep", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert cli.main(["sweep", "--config", str(path), "--out", str(tmp_path)]) == 2

    def test_missing_key(self, tmp_path):
        assert run(tmp_path, "sweep", {"M": [1], "n_th": [0.1]})[0] == 2

    def test_invalid_parameter(self, tmp_path):
        assert run(tmp_path, "sweep", dict(SWEEP, T=1.5))[0] == 2

    def test_unknown_command(self):
        assert cli.main(["frobnicate"]) == 2

    def test_negative_seed(self, tmp_path):
        assert run(tmp_path, "tomo", {"n_samples": 200, "dim": 4}, extra=("--seed", "-1"))[0] == 2
