import json
import math
from pathlib import Path

import numpy as np
import pytest

from nematic2d import cli
from nematic2d import config as cfgmod
from nematic2d import spectral as sp
from nematic2d.energy import CSV_COLUMNS, global_energy
from nematic2d.integrator import make_state
from nematic2d.potential import PotentialSpec
from nematic2d.scenarios import SCENARIOS, build, scenario_params
from nematic2d.snapshots import SnapshotError, read_directory, read_snapshot, write_snapshot
from nematic2d.spectral import TorusGrid


def write_config(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


TG_SMALL = """
seed = 3
[grid]
n = 16
[scenario]
name = "taylor_green"
[stepper]
dt = 1e-3
T = 0.02
snapshot_every = 5
monitor_every = 2
[output]
dir = "unused"
plots = false
"""


class TestScenarios:
    def test_taylor_green(self):
        g = TorusGrid(32)
        s = build("taylor_green", g, {"amp": 1.0}).state
        assert s.divergence_max() < 1e-12
        assert global_energy(s).E_global == pytest.approx(np.pi**2, rel=1e-13)

    def test_uniform_director(self):
        s = build("uniform_director_ode", TorusGrid(8), {"c0": 0.1, "axis": [0, 0, 1]}).state
        assert np.allclose(s.d[2], 0.1, atol=1e-15)

    def test_bubble_on_sphere(self):
        s = build("director_bubble", TorusGrid(64), {"scale": 0.1}).state
        assert s.sphere_drift() <= 1e-12
        assert np.allclose(s.d[:, 0, 0], [0, 0, -1])

    def test_forced_rotation(self):
        sc = build("forced_rotation", TorusGrid(8), {"g": [0, 0, 2]})
        assert np.allclose(sc.forcing.g(0.0, TorusGrid(8))[2], 2)

    def test_random_smooth_seeded(self):
        g = TorusGrid(16)
        a = build("random_smooth", g, seed=5).state
        b = build("random_smooth", g, seed=5).state
        c = build("random_smooth", g, seed=6).state
        assert np.array_equal(a.v, b.v) and not np.array_equal(a.v, c.v)
        a.check()

    def test_unknown_name_lists_alternatives(self):
        with pytest.raises(ValueError, match="taylor_green"):
            build("vortex", TorusGrid(8))

    def test_unknown_parameter(self):
        with pytest.raises(ValueError, match="unknown parameters"):
            build("zero", TorusGrid(8), {"amp": 1})

    def test_every_scenario_builds_with_defaults(self):
        g = TorusGrid(32)
        for name in SCENARIOS:
            build(name, g, scenario_params(name)).state.check()


class TestConfig:
    def test_defaults(self):
        cfg = cfgmod.parse_dict({})
        assert cfg.grid == {"n": 64, "L": 2 * math.pi}
        assert cfg.make_stepper().dt == 1e-3

    def test_round_trip_idempotent(self, tmp_path):
        cfg = cfgmod.parse_text(TG_SMALL)
        once = cfgmod.dumps(cfg)
        twice = cfgmod.dumps(cfgmod.parse_text(once))
        assert once == twice
        cfgmod.save(cfg, tmp_path / "c.json")
        assert cfgmod.load(tmp_path / "c.json") == cfg

    @pytest.mark.parametrize(
        "raw, path",
        [
            ({"stepper": {"dt": 0}}, "stepper.dt"),
            ({"stepper": {"dt": -1.0}}, "stepper.dt"),
            ({"grid": {"n": 15}}, "grid.n"),
            ({"grid": {"nx": 16}}, "grid.nx"),
            ({"scenario": {"name": "nope"}}, "scenario.name"),
            ({"scenario": {"name": "zero", "params": {"amp": 1}}}, "scenario.params.amp"),
            ({"monitors": {"policy": "explode"}}, "monitors.policy"),
            ({"monitors": {"R": 2.0}}, "monitors.R"),
            ({"forcing": {"f": [{"kind": "mode", "amp": [1.0]}]}}, "forcing.f[0]"),
            ({"seed": -1}, "seed"),
            ({"colour": 1}, "colour"),
        ],
    )
    def test_field_path_errors(self, raw, path):
        with pytest.raises(cfgmod.ConfigError) as info:
            cfgmod.parse_dict(raw)
        assert info.value.path == path
        assert str(info.value).startswith(path)

    def test_override(self):
        cfg = cfgmod.parse_dict({}).with_override("monitors.eps", 0.3)
        assert cfg.make_monitors().eps == 0.3

    def test_typed_views(self):
        cfg = cfgmod.parse_dict({"potential": {"family": "magnetic", "H": [0, 0, 2]}})
        assert cfg.make_potential() == PotentialSpec.magnetic((0, 0, 2))
        assert cfg.make_grid().n == 64


class TestSnapshots:
    def test_round_trip(self, tmp_path):
        g = TorusGrid(16, 3.0)
        s = build("random_smooth", g, seed=1).state
        s.t = 0.125
        write_snapshot(tmp_path / "snap_0000000.snap", s)
        back = read_snapshot(tmp_path / "snap_0000000.snap")
        assert back.t == 0.125 and back.grid.L == 3.0
        assert np.array_equal(back.v, s.v) and np.array_equal(back.d, s.d)

    def test_layout(self, tmp_path):
        g = TorusGrid(8)
        s = make_state(g, None, np.array([0, 0, 1.0]))
        write_snapshot(tmp_path / "s.snap", s)
        raw = (tmp_path / "s.snap").read_bytes()
        header, payload = raw.split(b"\n", 1)
        assert json.loads(header)["components"] == ["vx", "vy", "d1", "d2", "d3"]
        arr = np.frombuffer(payload, "<f8").reshape(8, 8, 5)
        assert np.all(arr[..., 4] == 1)

    def test_truncated_payload(self, tmp_path):
        g = TorusGrid(8)
        write_snapshot(tmp_path / "s.snap", make_state(g, None, np.array([0, 0, 1.0])))
        data = (tmp_path / "s.snap").read_bytes()
        (tmp_path / "s.snap").write_bytes(data[:-8])
        with pytest.raises(SnapshotError, match="payload"):
            read_snapshot(tmp_path / "s.snap")

    def test_empty_directory(self, tmp_path):
        with pytest.raises(SnapshotError):
            read_directory(tmp_path)


class TestCli:
    def test_run_and_verify(self, tmp_path):
        cfg = write_config(tmp_path / "tg.toml", TG_SMALL)
        out = tmp_path / "run"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        header = (out / "energy.csv").read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        assert len(list(out.glob("snap_*.snap"))) == 5
        resolved = cfgmod.load(out / "config.toml")
        assert resolved.output["dir"] == str(out) and resolved.seed == 3
        assert json.loads((out / "run.json").read_text())["status"] == "completed"

        assert cli.main(["verify", str(out)]) == 0
        verdict = json.loads((out / "verdict.json").read_text())
        assert verdict["pass"] and set(verdict) == {"pass", *cli.CHECKS}
        for name in ("pressure.csv", "zcheck.csv", "smalldata.csv"):
            assert (out / name).is_file()

    def test_verify_only(self, tmp_path):
        cfg = write_config(tmp_path / "tg.toml", TG_SMALL)
        out = tmp_path / "run"
        cli.main(["run", "--config", str(cfg), "--out", str(out)])
        vdir = tmp_path / "v"
        assert cli.main(["verify", str(out), "--only", "zcheck", "--out", str(vdir)]) == 0
        assert set(json.loads((vdir / "verdict.json").read_text())) == {"pass", "zcheck"}
        assert not (vdir / "pressure.csv").exists()
        assert cli.main(["verify", str(out), "--only", "nothing"]) == 1

    def test_verify_truncated_directory(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "tg.toml", TG_SMALL)
        out = tmp_path / "run"
        cli.main(["run", "--config", str(cfg), "--out", str(out)])
        for f in out.glob("snap_*.snap"):
            f.unlink()
        assert cli.main(["verify", str(out)]) == 1
        assert "snapshots" in capsys.readouterr().err

    def test_invalid_config(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "bad.toml", "[stepper]\ndt = 0.0\n")
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1
        assert "stepper.dt" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "none.toml")]) == 1

    def test_halt_exit_code(self, tmp_path):
        cfg = write_config(
            tmp_path / "b.toml",
            TG_SMALL.replace('name = "taylor_green"', 'name = "director_bubble"\nparams = { scale = 0.3 }')
            .replace("n = 16", "n = 32")
            + '[monitors]\neps = 0.5\nR = 0.3\npolicy = "halt"\n',
        )
        out = tmp_path / "b"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 2
        events = [json.loads(line) for line in (out / "events.jsonl").read_text().splitlines()]
        assert events[0]["event"] == "fire"

    def test_abort_exit_code(self, tmp_path):
        text = TG_SMALL.replace('name = "taylor_green"', 'name = "random_smooth"\nparams = { amp_v = 1000.0, amp_d = 1.0 }')
        text = text.replace("dt = 1e-3\nT = 0.02", "dt = 0.2\nT = 2.0")
        cfg = write_config(tmp_path / "a.toml", text)
        with np.errstate(over="ignore", invalid="ignore"):
            assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 3
        summary = json.loads((tmp_path / "a" / "run.json").read_text())
        assert summary["status"] == "aborted" and summary["diagnostics"]["t"] > 0

    def test_seed_override(self, tmp_path):
        cfg = write_config(tmp_path / "r.toml", TG_SMALL.replace('"taylor_green"', '"random_smooth"'))
        cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "11"])
        assert cfgmod.load(tmp_path / "a" / "config.toml").seed == 11
        assert cli.main(["run", "--config", str(cfg), "--seed", str(2**64)]) == 1

    def test_picard_exit_codes(self, tmp_path):
        base = "[grid]\nn = 16\n[picard]\nT0 = 0.05\n[output]\nplots = false\n"
        zero = write_config(tmp_path / "z.toml", base + '[scenario]\nname = "zero"\n')
        assert cli.main(["picard", "--config", str(zero), "--out", str(tmp_path / "z")]) == 0
        assert json.loads((tmp_path / "z" / "picard.json").read_text())["iterations"] == 1

        small = write_config(tmp_path / "s.toml", base + '[scenario]\nname = "taylor_green"\nparams = { amp = 0.1 }\n')
        assert cli.main(["picard", "--config", str(small), "--out", str(tmp_path / "s")]) == 0
        rows = (tmp_path / "s" / "picard.csv").read_text().splitlines()
        assert rows[0] == "iteration,distance,factor"
        assert all(float(r.split(",")[2]) < 1 for r in rows[2:])

        large = write_config(
            tmp_path / "l.toml",
            "[grid]\nn = 16\n[picard]\nT0 = 1.0\ndt = 1e-2\nmax_iters = 15\n"
            '[scenario]\nname = "random_smooth"\nparams = { amp_v = 50.0, amp_d = 1.0 }\n',
        )
        assert cli.main(["picard", "--config", str(large), "--out", str(tmp_path / "l")]) == 4

    def test_sweep(self, tmp_path):
        cfg = write_config(
            tmp_path / "sw.toml", TG_SMALL + '[sweep]\nkey = "stepper.dt"\nvalues = [1e-3, 2e-3]\nworkers = 2\n'
        )
        assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "sw")]) == 0
        summary = json.loads((tmp_path / "sw" / "sweep.json").read_text())
        assert [m["exit"] for m in summary["members"]] == [0, 0]
        member = cfgmod.load(tmp_path / "sw" / "member_001" / "config.toml")
        assert member.stepper["dt"] == 2e-3 and member.sweep is None

    def test_sweep_requires_table(self, tmp_path):
        cfg = write_config(tmp_path / "tg.toml", TG_SMALL)
        assert cli.main(["sweep", "--config", str(cfg)]) == 1

    def test_plots_written(self, tmp_path):
        cfg = write_config(tmp_path / "tg.toml", TG_SMALL.replace("plots = false", "plots = true"))
        out = tmp_path / "p"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "energy.png").stat().st_size > 0
        assert len(list(out.glob("fields_*.png"))) == 3
