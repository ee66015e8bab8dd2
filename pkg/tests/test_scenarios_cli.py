"""Tests for scenario definitions, config round-trip, run outputs and the CLI."""
import json
from dataclasses import replace

import numpy as np
import pytest

from hybridgas import cli, euler, runio, runner, scenarios
from hybridgas.coupling import compute_dt
from hybridgas.errors import UnknownScenario
from hybridgas.scenarios import EpsilonSpec, builtin_scenario, parse, serialize


class TestBuiltinScenarios:
    def test_sod_temperatures(self):
        cfg = builtin_scenario("sod")
        assert cfg.initial.left == (1.0, 0.0, 5.0)
        assert cfg.initial.right == (0.125, 0.0, 4.0)
        assert cfg.initial.split_x == 1.0
        assert cfg.grid.x_min == 0.0 and cfg.grid.x_max == 2.0 and cfg.grid.n_cells == 200
        assert cfg.t_end == 0.8
        assert cfg.beta_thr == 2.5e-2

    def test_sod_budgets_follow_epsilon(self):
        assert builtin_scenario("sod", eps=1e-1).budget.value == 6e5
        assert builtin_scenario("sod", eps=1e-2).budget.value == 4e5
        assert builtin_scenario("sod", eps=1e-3).budget.value == 2e5

    def test_two_freq_epsilon_split(self):
        cfg = builtin_scenario("two-freq")
        assert cfg.epsilon == EpsilonSpec(1e-4, 1e-2, 0.5)
        eps = cfg.epsilon.field(cfg.grid)
        assert eps[0] == 1e-4 and eps[-1] == 1e-2
        assert np.all(eps[cfg.grid.centers() < 0.5] == 1e-4)
        assert cfg.budget.kind == "total" and cfg.budget.value == 80000
        assert cfg.buffer_width == 10
        assert cfg.boundaries == ("open", "open")

    def test_unsteady_shock_buffer_depends_on_eps(self):
        assert builtin_scenario("unsteady-shock", eps=1e-1).buffer_width == 10
        assert builtin_scenario("unsteady-shock", eps=1e-2).buffer_width == 10
        assert builtin_scenario("unsteady-shock", eps=1e-3).buffer_width == 5
        cfg = builtin_scenario("unsteady-shock", eps=1e-3)
        assert cfg.initial == scenarios.UniformInit(1.0, -2.0, 4.0)
        assert cfg.boundaries[0] == "reflecting"
        assert cfg.budget == scenarios.ParticleBudget("per-unit-density", 400.0)

    def test_unknown_scenario(self):
        with pytest.raises(UnknownScenario):
            builtin_scenario("nope")

    def test_m_p_conventions(self):
        shock = builtin_scenario("unsteady-shock", eps=1e-1)
        field = shock.initial.build(shock.grid)
        assert shock.budget.m_p(field) == pytest.approx(shock.grid.dx / 400.0)
        sod = builtin_scenario("sod", eps=1e-3)
        f = sod.initial.build(sod.grid)
        total_mass = (1.0 + 0.125) * 1.0
        assert sod.budget.m_p(f) == pytest.approx(total_mass / 2e5, rel=1e-12)


class TestConfigRoundTrip:
    @pytest.mark.parametrize("name", ["two-freq", "unsteady-shock", "sod"])
    def test_parse_serialize_identity(self, name):
        cfg = builtin_scenario(name, eps=1e-2, seed=99)
        assert parse(serialize(cfg)) == cfg

    def test_split_epsilon_round_trip(self):
        cfg = builtin_scenario("two-freq", seed=5)
        assert parse(serialize(cfg)) == cfg

    def test_schema_rejected(self):
        text = serialize(builtin_scenario("sod")).replace("schema = 1", "schema = 2")
        with pytest.raises(ValueError):
            parse(text)


class TestSnapshotIO:
    def make_record(self, n=3):
        return runio.SnapshotRecord(
            time=0.125,
            x=np.linspace(0.1, 0.5, n),
            rho=np.array([1.0, 0.3333333333333333, 1e-7]),
            ux=np.array([0.0, -2.5, 1.0 / 3.0]),
            T=np.array([1.0, 4.0, 5.0]),
            h=np.array([0.0, 0.5, 1.0]),
            beta=np.array([0.0, 0.025, 2.5e-2]),
            particle_count=np.array([0, 10, 400]),
            total_particles=410,
        )

    def test_header_and_line_count(self, tmp_path):
        p = tmp_path / "snap.csv"
        runio.write_snapshot(self.make_record(), p)
        lines = p.read_text().splitlines()
        assert lines[0] == "time,cell,x,rho,ux,T,h,beta,np"
        assert len(lines) == 4

    def test_round_trip_bit_exact(self, tmp_path):
        p = tmp_path / "snap.csv"
        rec = self.make_record()
        runio.write_snapshot(rec, p)
        back = runio.read_snapshot(p)
        for name in ("x", "rho", "ux", "T", "h", "beta"):
            assert np.array_equal(getattr(back, name), getattr(rec, name)), name
        assert np.array_equal(back.particle_count, rec.particle_count)
        assert back.time == rec.time

    def test_empty_series(self, tmp_path):
        p = tmp_path / "series.csv"
        runio.write_series([], p)
        assert p.read_text() == "step,time,dt,total_particles\n"

    def test_series_round_trip(self, tmp_path):
        p = tmp_path / "series.csv"
        rows = [(0, 0.001, 0.001, 100), (1, 0.0020000000000000005, 0.001, 101)]
        runio.write_series(rows, p)
        assert runio.read_series(p) == rows

    def test_lf_line_endings(self, tmp_path):
        p = tmp_path / "snap.csv"
        runio.write_snapshot(self.make_record(), p)
        raw = p.read_bytes()
        assert b"\r" not in raw


class TestRun:
    def euler_cfg(self, **kw):
        cfg = builtin_scenario("sod", eps=1e-1, seed=2)
        return replace(cfg, t_end=0.1, output_times=(0.1,), **kw)

    def test_euler_only_matches_direct_stepping(self, tmp_path):
        cfg = self.euler_cfg()
        res = runner.run(cfg, mode="euler-only", out_dir=tmp_path / "run")
        field = cfg.initial.build(cfg.grid)
        eps = cfg.epsilon.field(cfg.grid)
        t = 0.0
        while t < cfg.t_end - 1e-12:
            dt = compute_dt(field, None, eps)
            field = euler.fluid_step(field, None, dt, np.zeros(200), cfg.boundaries)
            t += dt
        assert np.array_equal(res.sim.field.as_matrix(), field.as_matrix())

    def test_determinism_byte_identical(self, tmp_path):
        cfg = replace(
            builtin_scenario("unsteady-shock", eps=1e-1, seed=42), t_end=0.02, output_times=(0.01, 0.02)
        )
        a = runner.run(cfg, mode="coupled", out_dir=tmp_path / "a")
        b = runner.run(cfg, mode="coupled", out_dir=tmp_path / "b")
        for pa, pb in zip(a.snapshot_paths, b.snapshot_paths):
            assert pa.read_bytes() == pb.read_bytes()
        assert a.series_path.read_bytes() == b.series_path.read_bytes()

    def test_beta_thr_infinity_equals_euler_only(self):
        cfg = self.euler_cfg()
        coupled = runner.run(replace(cfg, beta_thr=np.inf), mode="coupled")
        eul = runner.run(cfg, mode="euler-only")
        assert np.array_equal(coupled.sim.field.as_matrix(), eul.sim.field.as_matrix())
        assert coupled.sim.ens.n == 0

    def test_outputs_and_manifest(self, tmp_path):
        cfg = self.euler_cfg()
        res = runner.run(cfg, mode="euler-only", out_dir=tmp_path / "r")
        assert (tmp_path / "r" / "snapshot_000.csv").exists()
        assert (tmp_path / "r" / "series.csv").exists()
        manifest = json.loads((tmp_path / "r" / "manifest.json").read_text())
        assert manifest["mode"] == "euler-only"
        assert manifest["seed"] == 2
        assert scenarios.parse(manifest["config"]) == cfg
        series = runio.read_series(res.series_path)
        assert len(series) == res.sim.step_index
        assert all(r[3] == 0 for r in series)

    def test_snapshot_times_cover_output_times(self):
        cfg = self.euler_cfg()
        res = runner.run(cfg, mode="euler-only")
        assert len(res.snapshots) == 1
        assert res.snapshots[0].time >= 0.1 - 1e-12


class TestCli:
    def test_run_builtin(self, tmp_path, capsys):
        rc = cli.main(
            [
                "run",
                "--scenario",
                "unsteady-shock",
                "--mode",
                "euler-only",
                "--eps",
                "1e-1",
                "--seed",
                "3",
                "--out",
                str(tmp_path / "o"),
            ]
        )
        assert rc == 0
        assert (tmp_path / "o" / "manifest.json").exists()
        out = capsys.readouterr().out
        assert "unsteady-shock" in out

    def test_run_config_file(self, tmp_path):
        cfg = replace(builtin_scenario("sod", eps=1e-1, seed=2), t_end=0.05, output_times=(0.05,))
        p = tmp_path / "my.ini"
        p.write_text(serialize(cfg))
        rc = cli.main(
            ["run", "--scenario", str(p), "--mode", "euler-only", "--out", str(tmp_path / "o2")]
        )
        assert rc == 0

    def test_eps_pair_parsing(self, tmp_path):
        rc = cli.main(
            [
                "run",
                "--scenario",
                "two-freq",
                "--mode",
                "euler-only",
                "--eps",
                "1e-3,1e-1",
                "--out",
                str(tmp_path / "o3"),
            ]
        )
        assert rc == 0
        manifest = json.loads((tmp_path / "o3" / "manifest.json").read_text())
        cfg = scenarios.parse(manifest["config"])
        assert cfg.epsilon == EpsilonSpec(1e-3, 1e-1, 0.5)

    def test_unknown_scenario_errors(self, tmp_path, capsys):
        rc = cli.main(["run", "--scenario", "bogus", "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_plain_dsmc_requires_full_dsmc(self, tmp_path):
        with pytest.raises(SystemExit):
            cli.main(
                ["run", "--scenario", "sod", "--mode", "coupled", "--plain-dsmc", "--out", "x"]
            )

    def test_overrides_applied(self, tmp_path):
        rc = cli.main(
            [
                "run",
                "--scenario",
                "unsteady-shock",
                "--mode",
                "euler-only",
                "--eps",
                "1e-1",
                "--beta-thr",
                "0.5",
                "--buffer",
                "7",
                "--particles",
                "123",
                "--out",
                str(tmp_path / "o4"),
            ]
        )
        assert rc == 0
        manifest = json.loads((tmp_path / "o4" / "manifest.json").read_text())
        cfg = scenarios.parse(manifest["config"])
        assert cfg.beta_thr == 0.5
        assert cfg.buffer_width == 7
        assert cfg.budget.value == 123
