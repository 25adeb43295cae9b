import json

import numpy as np
import pytest

from lanemfg.cli import main, run
from lanemfg.scenario import scenario_from_dict, write_scenario


def small_dict(**overrides):
    d = {
        "lanes": 2,
        "domain": [0.0, 10.0],
        "horizon": 2.0,
        "node_count": 41,
        "step_count": 20,
        "flux": {"a": 3.0, "b": 1.0, "rho_max": 1.0},
        "cost": {"kappa": 1.0, "epsilon": 1e-5},
        "control_levels": [0.0, 0.5, 1.0],
        "target": [[10.0, 1], [10.0, 2]],
        "initial_density": {
            "samples": [
                [[0.0, 0.0], [3.0, 0.4], [6.0, 0.0], [10.0, 0.0]],
                [[0.0, 0.0], [5.0, 0.2], [8.0, 0.0], [10.0, 0.0]],
            ]
        },
        "snapshot_times": [0.0, 1.0, 2.0],
        "solver": {"max_outer_iters": 10},
    }
    d.update(overrides)
    return d


def read_csv(path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


class TestRun:
    def test_writes_snapshots_and_summary(self, tmp_path):
        scn = scenario_from_dict(small_dict())
        summary = run(scn, "mfg", tmp_path / "out")
        for t in ("0", "1", "2"):
            assert (tmp_path / "out" / f"snapshot_t{t}.csv").exists()
        assert (tmp_path / "out" / "summary.json").exists()
        assert summary["iterations"] >= 1
        assert len(summary["snapshots"]) == 3

    def test_snapshot_format(self, tmp_path):
        scn = scenario_from_dict(small_dict())
        run(scn, "mfg", tmp_path)
        header, rows = read_csv(tmp_path / "snapshot_t1.csv")
        assert header == ["t", "x", "lane", "rho", "V", "u", "S"]
        assert len(rows) == 2 * 41
        lanes = {r[2] for r in rows}
        assert lanes == {"1", "2"}
        s_vals = {int(r[6]) for r in rows}
        assert s_vals <= {-1, 0, 1}

    def test_uncontrolled_zero_density_all_zero(self, tmp_path):
        d = small_dict()
        d["initial_density"] = {"samples": [[[0.0, 0.0], [10.0, 0.0]]] * 2}
        scn = scenario_from_dict(d)
        run(scn, "uncontrolled", tmp_path)
        _, rows = read_csv(tmp_path / "snapshot_t2.csv")
        for row in rows:
            assert float(row[3]) == 0.0  # rho
            assert float(row[4]) == 0.0  # V
            assert float(row[5]) == 0.0  # u
            assert int(row[6]) == 0  # S

    def test_non_convergence_flagged(self, tmp_path):
        d = small_dict()
        d["solver"] = {"max_outer_iters": 1, "tol_policy": 0.0, "tol_value": 0.0}
        scn = scenario_from_dict(d)
        summary = run(scn, "mfg", tmp_path)
        assert summary["converged"] is False

    def test_snapshot_mass_matches_summary(self, tmp_path):
        scn = scenario_from_dict(small_dict())
        summary = run(scn, "mfg", tmp_path)
        dx = (10.0 - 0.0) / 40
        for snap in summary["snapshots"]:
            _, rows = read_csv(tmp_path / snap["file"])
            for lane in (1, 2):
                rho = np.array([float(r[3]) for r in rows if int(r[2]) == lane])
                w = np.full(rho.size, dx)
                w[0] = w[-1] = dx / 2
                assert float(rho @ w) == pytest.approx(
                    snap["mass_per_lane"][lane - 1], abs=1e-10
                )

    def test_determinism_byte_identical(self, tmp_path):
        scn = scenario_from_dict(small_dict())
        run(scn, "mfg", tmp_path / "a")
        run(scn, "mfg", tmp_path / "b")
        for t in ("0", "1", "2"):
            name = f"snapshot_t{t}.csv"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_rejects_unknown_mode(self, tmp_path):
        scn = scenario_from_dict(small_dict())
        with pytest.raises(ValueError):
            run(scn, "turbo", tmp_path)


class TestMain:
    def test_config_file_roundtrip(self, tmp_path):
        scn = scenario_from_dict(small_dict())
        cfg = tmp_path / "scn.json"
        write_scenario(scn, cfg)
        code = main(["--config", str(cfg), "--out-dir", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "summary.json").exists()

    def test_bad_config_exits_one(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps(small_dict(lanes=0)))
        assert main(["--config", str(cfg), "--out-dir", str(tmp_path)]) == 1

    def test_unknown_preset_exits_one(self, tmp_path):
        assert main(["--preset", "nope", "--out-dir", str(tmp_path)]) == 1

    def test_snapshot_override(self, tmp_path):
        scn = scenario_from_dict(small_dict())
        cfg = tmp_path / "scn.json"
        write_scenario(scn, cfg)
        code = main([
            "--config", str(cfg), "--out-dir", str(tmp_path / "out"),
            "--snapshots", "0.5,1.5",
        ])
        assert code == 0
        assert (tmp_path / "out" / "snapshot_t0.5.csv").exists()
        assert (tmp_path / "out" / "snapshot_t1.5.csv").exists()
        assert not (tmp_path / "out" / "snapshot_t2.csv").exists()

    def test_invalid_snapshot_override_exits_one(self, tmp_path):
        scn = scenario_from_dict(small_dict())
        cfg = tmp_path / "scn.json"
        write_scenario(scn, cfg)
        code = main([
            "--config", str(cfg), "--out-dir", str(tmp_path),
            "--snapshots", "0,99",
        ])
        assert code == 1

    def test_solver_overrides(self, tmp_path):
        scn = scenario_from_dict(small_dict())
        cfg = tmp_path / "scn.json"
        write_scenario(scn, cfg)
        out = tmp_path / "out"
        code = main([
            "--config", str(cfg), "--out-dir", str(out),
            "--max-outer-iters", "2", "--damping", "1.0",
            "--drift", "optimal-control", "--mode", "mfg",
        ])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["iterations"] <= 2

    def test_uncontrolled_mode(self, tmp_path):
        scn = scenario_from_dict(small_dict())
        cfg = tmp_path / "scn.json"
        write_scenario(scn, cfg)
        code = main([
            "--config", str(cfg), "--mode", "uncontrolled",
            "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 0
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["mode"] == "uncontrolled"
        assert summary["residual_history"] == []
