"""Command-line front end.

Subcommands: ``eval``, ``derivcheck``, ``stationarity``, ``ellipsoids``,
``optimize``.  Each reads a TOML experiment config, writes CSV (plus a PNG
figure with the same stem, and meshes where applicable) into the output
directory, and echoes the main result to stdout.  Exit codes: 0 success,
2 configuration error, 3 numerical failure, 4 I/O error.

The environment variable ``TVNORMAL_MAX_WORKERS`` caps the thread pool used
for the embarrassingly parallel check batteries (default 1, which also
guarantees a deterministic execution order; results are written in a fixed
order either way, so fixed seed + fixed config gives identical CSV bytes).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bregman, calculus, geometry, reporting
from .charts import EllipsoidChart, RadialChart, SphereChart, build_chart
from .config import ExperimentConfig, parse_config, serialize_config
from .errors import ConfigError, TVNormalError
from .fields import (
    ConstantField,
    LinearField,
    RadialHarmonicField,
    TrigPolyField,
    TrigScalar,
)
from .functionals import evaluate_all, tv_of_normal
from .geometry import export_mesh, make_grid, sample

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("TVNORMAL_MAX_WORKERS", "1")))
    except ValueError:
        return 1


def _resolution(text: str):
    try:
        nt, npn = text.lower().split("x")
        return int(nt), int(npn)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NTHETAxNPHI, got {text!r}")


def _build_chart(cfg: ExperimentConfig):
    spec = cfg.chart
    if spec.kind == "sphere":
        return build_chart("sphere", radius=spec.radius)
    if spec.kind == "ellipsoid":
        return build_chart("ellipsoid", semi_axes=spec.semi_axes)
    return build_chart("radial", base_radius=spec.base_radius, terms=spec.terms)


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_csv(path: Path):
    sys.stdout.write(path.read_text(encoding="ascii"))


# ----------------------------------------------------------------------
# eval

def cmd_eval(cfg: ExperimentConfig) -> int:
    grid = make_grid(cfg.grid.n_theta, cfg.grid.n_phi)
    chart = _build_chart(cfg)
    samples = sample(chart, grid)
    row = evaluate_all(samples)
    columns = [c for c in row if c in cfg.functionals.select]
    out = _outdir(cfg)
    csv_path = reporting.write_csv(out / "eval.csv", columns, [row])
    reporting.surface_figure(samples, out / "eval.png", title=f"{cfg.chart.kind} chart")
    export_mesh(chart, grid, out / "surface.obj")
    _echo_csv(csv_path)
    return EXIT_OK


# ----------------------------------------------------------------------
# derivcheck

def _derivcheck_fields(cfg: ExperimentConfig, rng, healthy):
    """Battery of deformation fields for the derivative checks.

    Random draws are rejected (deterministically, from the seeded stream)
    when some checked derivative is nearly zero for them: a relative
    comparison against finite differences is meaningless at such a point.
    Modest wavenumbers keep the FD truncation constant small enough that
    even the eps = 1e-3 rows sit below the 1e-4 gate.
    """
    fields = [
        ("zero", ConstantField([0.0, 0.0, 0.0])),
        ("translation", ConstantField([0.7, -0.3, 0.5])),
        ("dilation", LinearField(np.eye(3))),
    ]
    for i in range(cfg.battery.n_fields):
        for _attempt in range(20):
            if i % 2 == 0:
                candidate = TrigPolyField.random(rng, 3, wave_scale=0.6)
            else:
                candidate = RadialHarmonicField.random(rng, cfg.battery.degree)
            if healthy(candidate):
                break
        name = "trig" if i % 2 == 0 else "harmonic"
        fields.append((f"{name}-{i}", candidate))
    return fields


def _derivcheck_rows(chart, grid, samples, name, field, eps_list, scalar, state, frame, loss, admm):
    rows = []

    # Quantities below this are indistinguishable from central-difference
    # roundoff noise (~1e-16/eps), so both sides count as zero.
    noise_floor = 1e-8

    def rel(analytic, fd):
        scale = max(abs(analytic), abs(fd))
        return abs(analytic - fd) / scale if scale > noise_floor else 0.0

    def rel_field(analytic, fd):
        na = float(np.linalg.norm(analytic))
        nf = float(np.linalg.norm(fd))
        if max(na, nf) <= noise_floor:
            return na, nf, 0.0
        return na, nf, float(np.linalg.norm(np.asarray(analytic) - np.asarray(fd))) / max(na, nf)

    gv = scalar(samples.position)
    dgv = np.einsum("ni,ni->n", scalar.gradient(samples.position), field(samples.position))

    def integral_scalar(chart_, grid_):
        s = sample(chart_, grid_)
        return s.integrate(scalar(s.position))

    analytic_ops = {
        "area": calculus.area_shape_derivative(samples, field),
        "volume": calculus.volume_shape_derivative(samples, field),
        "surface_integral": calculus.shape_derivative_surface_integral(samples, gv, dgv, field),
        "tv": calculus.tv_shape_derivative(samples, field),
        "lagrangian": bregman.lagrangian_shape_derivative(samples, state, frame, loss, field, admm),
    }
    fd_functionals = {
        "area": lambda ch, g: sample(ch, g).integrate(1.0),
        "volume": geometry.volume,
        "surface_integral": integral_scalar,
        "tv": calculus.fd_tv,
        "lagrangian": None,
    }
    for eps in eps_list:
        for op, analytic in analytic_ops.items():
            if op == "lagrangian":
                fd = bregman.fd_lagrangian_derivative(
                    chart, grid, state, frame, loss, admm, field, eps
                )
            else:
                fd = calculus.fd_shape_derivative(chart, fd_functionals[op], field, eps, grid)
            rows.append(
                {"operation": op, "field": name, "eps": eps,
                 "analytic": float(analytic), "fd": float(fd), "rel_err": rel(analytic, fd)}
            )
        nodewise = {
            "material_normal": (
                calculus.material_normal(samples, field),
                calculus.fd_material_normal(chart, field, grid, eps),
            ),
            "material_frame": (
                np.stack(calculus.material_frame(samples, field)),
                np.stack(calculus.fd_material_frame(chart, field, grid, eps)),
            ),
            "material_dn_xi": (
                np.stack(calculus.material_dn_xi(samples, field)),
                np.stack(calculus.fd_material_dn_xi(chart, field, grid, eps)),
            ),
        }
        for op, (analytic, fd) in nodewise.items():
            na, nf, err = rel_field(analytic, fd)
            rows.append(
                {"operation": op, "field": name, "eps": eps,
                 "analytic": na, "fd": nf, "rel_err": err}
            )
    return rows


def cmd_derivcheck(cfg: ExperimentConfig) -> int:
    grid = make_grid(cfg.grid.n_theta, cfg.grid.n_phi)
    chart = _build_chart(cfg)
    samples = sample(chart, grid)
    rng = np.random.default_rng(cfg.seed)
    scalar = TrigScalar.random(rng, 3)

    # frozen random split state for the Lagrangian check
    t1 = np.cross(samples.normal, rng.normal(size=(samples.n_nodes, 3)))
    t1 *= 0.3 / np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = np.cross(samples.normal, t1)
    t2 *= 0.2 / np.linalg.norm(t2, axis=-1, keepdims=True)
    state = bregman.SplitState(d1=t1, d2=t2, b1=0.1 * t2, b2=-0.15 * t1)
    frame = (samples.xi1, samples.xi2)
    admm = bregman.AdmmConfig(beta=0.3, lam=1.2)
    loss = bregman.AreaPenalty(target=samples.integrate(1.0) * 0.95, weight=1.5)

    gv_probe = scalar(samples.position)
    grad_probe = scalar.gradient(samples.position)

    def healthy(field):
        dg = np.einsum("ni,ni->n", grad_probe, field(samples.position))
        probes = (
            calculus.area_shape_derivative(samples, field),
            calculus.volume_shape_derivative(samples, field),
            calculus.shape_derivative_surface_integral(samples, gv_probe, dg, field),
            calculus.tv_shape_derivative(samples, field),
            bregman.lagrangian_shape_derivative(samples, state, frame, loss, field, admm),
        )
        return min(abs(p) for p in probes) > 0.05

    jobs = _derivcheck_fields(cfg, rng, healthy)
    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        futures = [
            pool.submit(
                _derivcheck_rows, chart, grid, samples, name, field,
                cfg.battery.eps, scalar, state, frame, loss, admm,
            )
            for name, field in jobs
        ]
        rows = [row for fut in futures for row in fut.result()]

    out = _outdir(cfg)
    csv_path = reporting.write_csv(
        out / "derivcheck.csv",
        ["operation", "field", "eps", "analytic", "fd", "rel_err"],
        rows,
    )
    reporting.derivcheck_figure(rows, out / "derivcheck.png")
    worst = max((r["rel_err"] for r in rows), default=0.0)
    sys.stdout.write(f"derivcheck: {len(rows)} rows, worst rel_err = {worst!r}\n")
    sys.stdout.write(f"wrote {csv_path}\n")
    return EXIT_OK


# ----------------------------------------------------------------------
# stationarity

def cmd_stationarity(cfg: ExperimentConfig) -> int:
    grid = make_grid(cfg.grid.n_theta, cfg.grid.n_phi)
    rng = np.random.default_rng(cfg.seed)
    fields = [("uniform", RadialHarmonicField(np.array([np.sqrt(4.0 * np.pi)])))]
    for i in range(cfg.battery.n_fields):
        fields.append((f"harmonic-{i}", RadialHarmonicField.random(rng, cfg.battery.degree)))

    def radius_rows(radius):
        battery = calculus.stationarity_battery(radius, [f for _, f in fields], grid)
        rows = []
        for constraint in ("area", "volume"):
            residuals, mu = calculus.combine_stationarity(battery, radius, constraint)
            for (name, _), value in zip(fields, residuals):
                rows.append(
                    {"constraint": constraint, "radius": radius, "field": name,
                     "mu": mu, "residual": float(value), "control": False}
                )
        if cfg.battery.controls:
            # with a deliberately wrong multiplier the uniform field (whose
            # constraint derivative is nonzero) must show a fat residual
            res_a, mu_a = calculus.combine_stationarity(battery, radius, "area", mu=0.0)
            rows.append(
                {"constraint": "area", "radius": radius, "field": "uniform",
                 "mu": mu_a, "residual": float(res_a[0]), "control": True}
            )
            wrong = -np.sqrt(2.0) / radius ** 2 + 0.5
            res_v, mu_v = calculus.combine_stationarity(battery, radius, "volume", mu=wrong)
            rows.append(
                {"constraint": "volume", "radius": radius, "field": "uniform",
                 "mu": mu_v, "residual": float(res_v[0]), "control": True}
            )
        return rows

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        rows = [row for batch in pool.map(radius_rows, cfg.battery.radii) for row in batch]

    out = _outdir(cfg)
    csv_path = reporting.write_csv(
        out / "stationarity.csv",
        ["constraint", "radius", "field", "mu", "residual", "control"],
        rows,
    )
    reporting.stationarity_figure(rows, out / "stationarity.png")
    worst = max(r["residual"] for r in rows if not r["control"])
    sys.stdout.write(f"stationarity: worst stationary residual = {worst!r}\n")
    sys.stdout.write(f"wrote {csv_path}\n")
    return EXIT_OK


# ----------------------------------------------------------------------
# ellipsoids

def cmd_ellipsoids(cfg: ExperimentConfig) -> int:
    grid = make_grid(cfg.grid.n_theta, cfg.grid.n_phi)
    target_area = 4.0 * np.pi
    rows = []
    for p in cfg.ellipsoids.aspects:
        for q in cfg.ellipsoids.aspects:
            chart = EllipsoidChart(p, q, 1.0)
            raw_area = sample(chart, grid).integrate(1.0)
            scale = float(np.sqrt(target_area / raw_area))
            samples = sample(EllipsoidChart(p * scale, q * scale, scale), grid)
            rows.append(
                {
                    "aspect_p": float(p), "aspect_q": float(q),
                    "a": p * scale, "b": q * scale, "c": scale,
                    "area": samples.integrate(1.0),
                    "tv": tv_of_normal(samples),
                    "is_min": False,
                }
            )
    best = int(np.argmin([r["tv"] for r in rows]))
    rows[best]["is_min"] = True

    out = _outdir(cfg)
    csv_path = reporting.write_csv(
        out / "ellipsoids.csv",
        ["aspect_p", "aspect_q", "a", "b", "c", "area", "tv", "is_min"],
        rows,
    )
    reporting.ellipsoids_figure(rows, out / "ellipsoids.png")
    r = rows[best]
    sys.stdout.write(
        f"ellipsoids: minimum tv = {r['tv']!r} at aspects ({r['aspect_p']}, {r['aspect_q']})\n"
    )
    sys.stdout.write(f"wrote {csv_path}\n")
    return EXIT_OK


# ----------------------------------------------------------------------
# optimize

def cmd_optimize(cfg: ExperimentConfig) -> int:
    grid = make_grid(cfg.grid.n_theta, cfg.grid.n_phi)
    admm = cfg.solver.admm_config()
    base = _build_chart(cfg)
    if isinstance(base, SphereChart):
        chart = RadialChart.from_sphere(base.radius, admm.opt_degree)
    elif isinstance(base, EllipsoidChart):
        chart = RadialChart.fit(base, grid, admm.opt_degree)
    else:
        chart = base.lift(max(admm.opt_degree, base.degree))

    samples0 = sample(chart, grid)
    if cfg.loss.kind == "none":
        loss = bregman.ZeroLoss()
    else:
        if cfg.loss.target == "initial":
            target = (
                samples0.integrate(1.0)
                if cfg.loss.kind == "area_penalty"
                else samples0.integrate(
                    np.einsum("ni,ni->n", samples0.position, samples0.normal) / 3.0
                )
            )
        else:
            target = float(cfg.loss.target)
        cls = bregman.AreaPenalty if cfg.loss.kind == "area_penalty" else bregman.VolumePenalty
        loss = cls(target, cfg.loss.weight)

    out = _outdir(cfg)
    export_mesh(chart, grid, out / "initial_mesh.obj")
    every = cfg.solver.checkpoint_every

    def on_sweep(sweep, current, row):
        if every > 0 and sweep % every == 0:
            export_mesh(current, grid, out / f"checkpoint_{sweep:04d}.obj")

    final, trace = bregman.run(chart, grid, loss, admm, on_sweep=on_sweep)

    columns = ["sweep", "lagrangian", "tv", "loss", "residual", "area", "volume"]
    csv_path = reporting.write_csv(out / "trace.csv", columns, trace)
    if trace:
        reporting.trace_figure(trace, out / "trace.png")
    export_mesh(final, grid, out / "final_mesh.obj")
    reporting.surface_figure(sample(final, grid), out / "final_surface.png", title="optimized surface")
    if trace:
        first, last = trace[0], trace[-1]
        sys.stdout.write(
            f"optimize: {last['sweep']} sweeps, tv {first['tv']!r} -> {last['tv']!r}, "
            f"residual {last['residual']!r}\n"
        )
    else:
        sys.stdout.write("optimize: 0 sweeps (max_sweeps = 0)\n")
    sys.stdout.write(f"wrote {csv_path}\n")
    return EXIT_OK


# ----------------------------------------------------------------------
# entry point

_COMMANDS = {
    "eval": cmd_eval,
    "derivcheck": cmd_derivcheck,
    "stationarity": cmd_stationarity,
    "ellipsoids": cmd_ellipsoids,
    "optimize": cmd_optimize,
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvnormal",
        description="Total variation of the surface normal: evaluation, checks, optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="TOML experiment configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
        p.add_argument(
            "--resolution", type=_resolution, default=None,
            help="quadrature resolution NTHETAxNPHI (overrides config)",
        )
        p.add_argument(
            "--dump-config", action="store_true",
            help="echo the effective config before running",
        )
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(args.config).with_overrides(
            out=args.out, seed=args.seed, resolution=args.resolution
        )
        if args.dump_config:
            sys.stdout.write(serialize_config(cfg))
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TVNormalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
