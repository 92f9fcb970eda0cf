import csv

import numpy as np
import pytest

from tvnormal import cli, config
from tvnormal.config import (
    ChartSpec,
    ExperimentConfig,
    GridSpec,
    LossSpec,
    SolverSpec,
    parse_config_text,
    serialize_config,
)
from tvnormal.errors import ConfigError

SPHERE_TV = 4 * np.sqrt(2) * np.pi


def write_config(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestConfig:
    def test_roundtrip(self):
        cfg = ExperimentConfig(
            seed=42,
            out="runs/x",
            grid=GridSpec(48, 96),
            chart=ChartSpec(kind="radial", base_radius=1.0, terms=((2.0, 0.0, 0.15), (3.0, 2.0, 0.15))),
            functionals=config.FunctionalSelection(select=("tv_normal", "area")),
            loss=LossSpec(kind="area_penalty", target=12.5, weight=3.0),
            solver=SolverSpec(beta=0.25, lam=2.0, max_sweeps=7),
        )
        assert parse_config_text(serialize_config(cfg)) == cfg

    def test_defaults(self):
        cfg = parse_config_text("")
        assert cfg.grid == GridSpec()
        assert cfg.chart.kind == "sphere"

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("[turbo]\nx = 1\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("[grid]\nn_theta = 16\nn_phi = 32\nshape = 3\n")

    def test_bad_chart_kind(self):
        with pytest.raises(ConfigError):
            parse_config_text('[chart]\nkind = "torus"\n')

    def test_exactness_floor(self):
        text = '[grid]\nn_theta = 8\nn_phi = 32\n\n[chart]\nkind = "radial"\nterms = [[6, 0, 0.1]]\n'
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_bad_admm_values(self):
        with pytest.raises(ConfigError):
            parse_config_text("[admm]\nlam = 0.0\n")

    def test_bad_loss_target(self):
        with pytest.raises(ConfigError):
            parse_config_text('[loss]\ntarget = "whatever"\n')

    def test_malformed_toml(self):
        with pytest.raises(ConfigError):
            parse_config_text("grid = [unterminated\n")

    def test_overrides(self):
        cfg = parse_config_text("").with_overrides(out="elsewhere", seed=9, resolution=(24, 48))
        assert cfg.out == "elsewhere"
        assert cfg.seed == 9
        assert cfg.grid == GridSpec(24, 48)


EVAL_TOML = """
seed = 0
out = "{out}"

[grid]
n_theta = 48
n_phi = 96

[chart]
kind = "sphere"
radius = 1.0
"""


class TestCli:
    def test_eval_end_to_end(self, tmp_path, capsys):
        out = tmp_path / "run"
        path = write_config(tmp_path, EVAL_TOML.format(out=out))
        assert cli.main(["eval", "--config", str(path)]) == 0
        printed = capsys.readouterr().out.splitlines()
        header = printed[0].split(",")
        values = dict(zip(header, map(float, printed[1].split(","))))
        assert abs(values["tv_normal"] - SPHERE_TV) < 1e-8
        assert abs(values["total_abs_gauss"] - 4 * np.pi) < 1e-8
        assert values["gauss_bonnet_residual"] < 1e-10
        assert (out / "eval.csv").exists()
        assert (out / "eval.png").exists()
        assert (out / "surface.obj").exists()

    def test_eval_deterministic_bytes(self, tmp_path, capsys):
        out = tmp_path / "runA"
        path = write_config(tmp_path, EVAL_TOML.format(out=out))
        cli.main(["eval", "--config", str(path)])
        first = (out / "eval.csv").read_bytes()
        cli.main(["eval", "--config", str(path)])
        assert (out / "eval.csv").read_bytes() == first
        capsys.readouterr()

    def test_resolution_and_out_overrides(self, tmp_path, capsys):
        path = write_config(tmp_path, EVAL_TOML.format(out=tmp_path / "ignored"))
        out2 = tmp_path / "override"
        code = cli.main([
            "eval", "--config", str(path), "--out", str(out2), "--resolution", "24x48",
        ])
        assert code == 0
        assert (out2 / "eval.csv").exists()
        capsys.readouterr()

    def test_missing_config_gives_io_exit(self, tmp_path, capsys):
        assert cli.main(["eval", "--config", str(tmp_path / "nope.toml")]) == cli.EXIT_IO
        capsys.readouterr()

    def test_malformed_config_gives_config_exit(self, tmp_path, capsys):
        path = write_config(tmp_path, "???")
        assert cli.main(["eval", "--config", str(path)]) == cli.EXIT_CONFIG
        capsys.readouterr()

    def test_numerical_failure_exit(self, tmp_path, capsys):
        bad = EVAL_TOML.format(out=tmp_path / "bad") + (
            '\n[chart]\nkind = "radial"\nterms = [[2, 0, 9.0]]\n'
        )
        # rewrite chart section wholesale: a radius this negative cannot build
        text = bad.replace('[chart]\nkind = "sphere"\nradius = 1.0\n', "")
        path = write_config(tmp_path, text)
        assert cli.main(["eval", "--config", str(path)]) == cli.EXIT_NUMERICAL
        capsys.readouterr()

    def test_ellipsoid_sweep_symmetry(self, tmp_path, capsys):
        toml = f"""
out = "{tmp_path / 'ell'}"

[grid]
n_theta = 32
n_phi = 64

[ellipsoids]
aspects = [0.8, 1.0, 1.25]
"""
        path = write_config(tmp_path, toml)
        assert cli.main(["ellipsoids", "--config", str(path)]) == 0
        capsys.readouterr()
        rows = list(csv.DictReader(open(tmp_path / "ell" / "ellipsoids.csv")))
        tv = {(r["aspect_p"], r["aspect_q"]): float(r["tv"]) for r in rows}
        assert abs(tv[("0.8", "1.25")] - tv[("1.25", "0.8")]) < 1e-8
        assert abs(tv[("0.8", "1.0")] - tv[("1.0", "0.8")]) < 1e-8
        mins = [r for r in rows if r["is_min"] == "true"]
        assert len(mins) == 1 and mins[0]["aspect_p"] == "1.0" and mins[0]["aspect_q"] == "1.0"

    def test_axis_permutation_invariance(self, grid32):
        # relabeling (a, b, c) only relabels the parametrization
        from tvnormal import geometry
        from tvnormal.charts import EllipsoidChart, ScaledChart
        from tvnormal.functionals import tv_of_normal

        values = []
        for axes in [(0.8, 1.25, 1.0), (1.25, 1.0, 0.8), (1.0, 0.8, 1.25)]:
            chart = EllipsoidChart(*axes)
            scale = np.sqrt(4 * np.pi / geometry.area(chart, grid32))
            values.append(tv_of_normal(geometry.sample(ScaledChart(chart, scale), grid32)))
        assert max(values) - min(values) < 1e-8

    def test_optimize_zero_sweeps(self, tmp_path, capsys):
        toml = f"""
out = "{tmp_path / 'opt0'}"

[grid]
n_theta = 16
n_phi = 32

[chart]
kind = "sphere"

[admm]
max_sweeps = 0
opt_degree = 2
"""
        path = write_config(tmp_path, toml)
        assert cli.main(["optimize", "--config", str(path)]) == 0
        assert "0 sweeps" in capsys.readouterr().out
        rows = list(csv.DictReader(open(tmp_path / "opt0" / "trace.csv")))
        assert rows == []

    def test_optimize_smoke(self, tmp_path, capsys):
        toml = f"""
out = "{tmp_path / 'opt'}"

[grid]
n_theta = 16
n_phi = 32

[chart]
kind = "radial"
base_radius = 1.0
terms = [[2, 0, 0.12]]

[loss]
kind = "area_penalty"
target = "initial"
weight = 5.0

[admm]
beta = 0.05
lam = 0.5
max_sweeps = 6
shape_steps_per_sweep = 1
opt_degree = 3
tol_residual = 1e-4
tol_objective = 1e-5
checkpoint_every = 2
"""
        path = write_config(tmp_path, toml)
        assert cli.main(["optimize", "--config", str(path)]) == 0
        capsys.readouterr()
        out = tmp_path / "opt"
        rows = list(csv.DictReader(open(out / "trace.csv")))
        assert rows and rows[0]["sweep"] == "0"
        assert set(rows[0]) == {"sweep", "lagrangian", "tv", "loss", "residual", "area", "volume"}
        for row in rows:
            assert all(np.isfinite(float(v)) for v in row.values())
        assert float(rows[-1]["tv"]) < float(rows[0]["tv"])
        assert (out / "initial_mesh.obj").exists()
        assert (out / "final_mesh.obj").exists()
        assert (out / "trace.png").exists()
        assert any(p.name.startswith("checkpoint_") for p in out.iterdir())

    def test_derivcheck_small(self, tmp_path, capsys):
        toml = f"""
seed = 3
out = "{tmp_path / 'dc'}"

[grid]
n_theta = 24
n_phi = 48

[chart]
kind = "radial"
base_radius = 1.0
terms = [[2, 0, 0.1]]

[battery]
n_fields = 2
degree = 3
eps = [1e-3, 1e-4]
"""
        path = write_config(tmp_path, toml)
        assert cli.main(["derivcheck", "--config", str(path)]) == 0
        capsys.readouterr()
        rows = list(csv.DictReader(open(tmp_path / "dc" / "derivcheck.csv")))
        assert all(float(r["rel_err"]) <= 1e-4 for r in rows)
        zero_rows = [r for r in rows if r["field"] == "zero"]
        assert zero_rows and all(
            float(r["analytic"]) == 0.0 and float(r["fd"]) == 0.0 for r in zero_rows
        )
        assert (tmp_path / "dc" / "derivcheck.png").exists()

    def test_stationarity_small(self, tmp_path, capsys):
        toml = f"""
seed = 5
out = "{tmp_path / 'st'}"

[grid]
n_theta = 32
n_phi = 64

[battery]
n_fields = 3
degree = 4
radii = [1.0]
controls = true
"""
        path = write_config(tmp_path, toml)
        assert cli.main(["stationarity", "--config", str(path)]) == 0
        capsys.readouterr()
        rows = list(csv.DictReader(open(tmp_path / "st" / "stationarity.csv")))
        stationary = [float(r["residual"]) for r in rows if r["control"] == "false"]
        controls = [float(r["residual"]) for r in rows if r["control"] == "true"]
        assert stationary and max(stationary) < 1e-6
        assert controls and min(controls) > 1e-3

    def test_functional_selection(self, tmp_path, capsys):
        toml = EVAL_TOML.format(out=tmp_path / "sel") + (
            '\n[functionals]\nselect = ["tv_normal", "area"]\n'
        )
        path = write_config(tmp_path, toml)
        assert cli.main(["eval", "--config", str(path), "--resolution", "16x32"]) == 0
        header = capsys.readouterr().out.splitlines()[0]
        assert header == "tv_normal,area"

    def test_unknown_functional_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text('[functionals]\nselect = ["perimeter"]\n')

    def test_worker_env_var_keeps_output_deterministic(self, tmp_path, capsys, monkeypatch):
        toml = f"""
seed = 5
out = "{tmp_path / 'wrk'}"

[grid]
n_theta = 24
n_phi = 48

[battery]
n_fields = 2
degree = 3
radii = [1.0]
"""
        path = write_config(tmp_path, toml)
        cli.main(["stationarity", "--config", str(path)])
        serial = (tmp_path / "wrk" / "stationarity.csv").read_bytes()
        monkeypatch.setenv("TVNORMAL_MAX_WORKERS", "4")
        cli.main(["stationarity", "--config", str(path)])
        assert (tmp_path / "wrk" / "stationarity.csv").read_bytes() == serial
        capsys.readouterr()

    def test_dump_config_roundtrips(self, tmp_path, capsys):
        path = write_config(tmp_path, EVAL_TOML.format(out=tmp_path / "d"))
        cli.main(["eval", "--config", str(path), "--dump-config", "--resolution", "16x32"])
        lines = capsys.readouterr().out.splitlines()
        csv_start = next(i for i, l in enumerate(lines) if l.startswith("tv_normal,"))
        cfg = config.parse_config_text("\n".join(lines[:csv_start]))
        assert cfg.grid == GridSpec(16, 32)
