"""Command-line entry point: run scenarios, convergence studies, mesh info.

Verbs: ``run`` (one scenario from a config file), ``converge`` (refinement
study emitting an EOC table), ``list-scenarios``, ``mesh-info``. Exit
codes: 0 success, 2 configuration problem, 3 numerical breakdown (partial
artifacts are kept).

The output root defaults to the working directory and can be redirected
with the MBFEM_OUTPUT_ROOT environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, adr, cahn_hilliard, coupling, helfrich
from .config import SCENARIOS, ScenarioConfig, apply_overrides, parse_config
from .errors import (AreaDriftExceeded, MbfemError, ParseError, SchemaError)
from .geometry import generate
from .mesh import quality
from .output import RunManifest, eoc_table, load_mesh, write_csv, \
    write_manifest

OUTPUT_ROOT_ENV = "MBFEM_OUTPUT_ROOT"


# ---------------------------------------------------------------------------
# scenario runners: config -> (series columns, termination string)
# ---------------------------------------------------------------------------

def _run_adr_hemisphere(cfg: ScenarioConfig):
    p = cfg.params
    flags = adr.AdrSolverFlags.solver(
        p["solver"], adr.BoundSpec(-1.0, 1.0), gamma_b=p["gamma_b"],
        gamma_A=p["gamma_A"], cip_variant=p["cip_variant"])
    err = adr.run_rotating_hemisphere(p["h"], p["tau"], p["T"], flags)
    return {"h": [p["h"]], "tau": [p["tau"]], "l2_error": [err]}, "completed"


def _run_adr_ill_posed(cfg: ScenarioConfig):
    mesh, coeffs, bounds, u0 = adr.ill_posed_scenario()
    if cfg.geometry:
        spec = dict(cfg.geometry)
        mesh = generate(spec.pop("kind"), **spec)
        x = mesh.vertices
        u0 = np.exp(-3.0 * (x[:, 0] ** 2 + x[:, 1] ** 2))
    p = cfg.params
    series = adr.run_ill_posed(p["solver"], p["tau"], p["T"], mesh, coeffs,
                               bounds, u0)
    return series, "completed"


def _run_ch_cylinder(cfg: ScenarioConfig):
    p = cfg.params
    series = cahn_hilliard.ch_cylinder_scenario(
        p["potential"], p["solver"], p["h"], p["T"], p["tau"],
        p["mobility"], p["epsilon"], p["sigma"], p["seed"])
    reason = series.pop("break_reason")
    series.pop("break_step")
    return series, reason or "completed"


def _run_willmore_sphere(cfg: ScenarioConfig):
    p = cfg.params
    err = helfrich.run_willmore_sphere(
        p["subdivisions"], p["tau"], p["T"], p["kappa0"], p["r0"],
        p["solver"], p["gamma_w"])
    return {"subdivisions": [p["subdivisions"]], "tau": [p["tau"]],
            "radius_error": [err]}, "completed"


def _run_willmore_torus(cfg: ScenarioConfig):
    p = cfg.params
    series = helfrich.run_willmore_torus(p["h"], p["tau"], p["T"],
                                         p["solver"], gamma_w=p["gamma_w"])
    series.pop("state")
    reason = series.pop("break_reason")
    series.pop("break_step")
    return series, reason or "completed"


def _run_willmore_cigar(cfg: ScenarioConfig):
    p = cfg.params
    series = helfrich.run_willmore_cigar(p["variant"], p["h"], p["tau"],
                                         solver=p["solver"])
    series.pop("state", None)
    reason = series.pop("break_reason")
    series.pop("break_step")
    return series, reason or "completed"


def _run_coupled_sphere(cfg: ScenarioConfig):
    p = cfg.params
    report = coupling.coupled_sphere_run(h=p["h"], tau=p["tau"], T=p["T"],
                                         mode=p["mode"])
    return {"field_error": [report["field_error"]],
            "radius_error": [report["radius_error"]],
            "max_sweeps": [report["max_sweeps"]]}, "completed"


def _run_tumor_growth(cfg: ScenarioConfig):
    p = cfg.params
    result = coupling.tumor_growth_run(p["solver"], p["T"], p["tau"],
                                       p["h"], p["freeze_until"],
                                       seed=p["seed"])
    series = result["series"]
    return series, result["break_reason"] or "completed"


def _run_two_phase(cfg: ScenarioConfig):
    p = cfg.params
    result = coupling.two_phase_membrane_run(
        p["gamma_w"], p["tau"], p["T"], p["h"], epsilon=p["epsilon"],
        mobility=p["mobility"])
    return result["series"], result["stop_reason"] or "completed"


_RUNNERS = {
    "adr_rotating_hemisphere": _run_adr_hemisphere,
    "adr_ill_posed": _run_adr_ill_posed,
    "ch_cylinder": _run_ch_cylinder,
    "willmore_sphere": _run_willmore_sphere,
    "willmore_torus": _run_willmore_torus,
    "willmore_cigar": _run_willmore_cigar,
    "coupled_sphere": _run_coupled_sphere,
    "tumor_growth": _run_tumor_growth,
    "two_phase_membrane": _run_two_phase,
}


# ---------------------------------------------------------------------------
# convergence harness
# ---------------------------------------------------------------------------

def _converge_adr(cfg: ScenarioConfig, levels: int, quantity: str):
    p = cfg.params
    rows = []
    for k in range(levels):
        if quantity == "h":
            h, tau = p["h"] / 2 ** k, p["tau"]
        else:
            h, tau = p["h"], p["tau"] / 2 ** k
        flags = adr.AdrSolverFlags.solver(p["solver"],
                                          adr.BoundSpec(-1.0, 1.0))
        err = adr.run_rotating_hemisphere(h, tau, p["T"], flags)
        rows.append((h, tau, err))
    return rows


def _converge_coupled(cfg: ScenarioConfig, levels: int, quantity: str):
    p = cfg.params
    rows = []
    mesh0 = coupling.sphere_mesh(1.0, p["h"])
    for k in range(levels):
        if quantity == "h":
            # scale the step with h^2 so the first-order-in-time part
            # refines at the same rate as the second-order-in-space part
            h, tau = p["h"] / 2 ** k, p["tau"] / 4 ** k
        else:
            h, tau = p["h"], p["tau"] / 2 ** k
        report = coupling.coupled_sphere_run(h=h, tau=tau, T=p["T"],
                                             mode=p["mode"])
        rows.append((h, tau, report["field_error"]))
    return rows


def _converge_willmore_sphere(cfg: ScenarioConfig, levels: int,
                              quantity: str):
    p = cfg.params
    rows = []
    for k in range(levels):
        if quantity == "h":
            sub, tau = p["subdivisions"] + k, p["tau"]
        else:
            sub, tau = p["subdivisions"], p["tau"] / 2 ** k
        err = helfrich.run_willmore_sphere(sub, tau, p["T"], p["kappa0"],
                                           p["r0"], p["solver"],
                                           p["gamma_w"])
        rows.append((1.0 / 2 ** sub, tau, err))
    return rows


_CONVERGERS = {
    "adr_rotating_hemisphere": _converge_adr,
    "coupled_sphere": _converge_coupled,
    "willmore_sphere": _converge_willmore_sphere,
}


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def _output_dir(cfg: ScenarioConfig) -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV, ".")
    path = os.path.join(root, cfg.output_dir, cfg.scenario)
    os.makedirs(path, exist_ok=True)
    return path


def _load_config(args) -> ScenarioConfig:
    if args.config:
        with open(args.config) as handle:
            cfg = parse_config(handle.read())
    else:
        cfg = parse_config(f'scenario = "{args.scenario}"\n')
    if cfg.scenario != args.scenario:
        raise SchemaError(f"config is for scenario '{cfg.scenario}', "
                          f"but '{args.scenario}' was requested")
    if args.override:
        cfg = apply_overrides(cfg, args.override)
    return cfg


def _manifest_config(cfg: ScenarioConfig) -> dict:
    return {"scenario": cfg.scenario, "params": cfg.params,
            "geometry": cfg.geometry, "output_dir": cfg.output_dir,
            "seed": cfg.seed}


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    out = _output_dir(cfg)
    csv_path = os.path.join(out, "series.csv")
    manifest_path = os.path.join(out, "manifest.json")
    try:
        series, termination = _RUNNERS[cfg.scenario](cfg)
    except AreaDriftExceeded as exc:
        # configured stopping rule, not a failure
        write_manifest(manifest_path, RunManifest(
            _manifest_config(cfg), __version__, [], f"stopped: {exc}"))
        print(f"stopped by area-drift rule: {exc}")
        return 0
    except MbfemError as exc:
        write_manifest(manifest_path, RunManifest(
            _manifest_config(cfg), __version__, [],
            f"breakdown: {type(exc).__name__}: {exc}"))
        print(f"numerical breakdown: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3
    write_csv(csv_path, series)
    write_manifest(manifest_path, RunManifest(
        _manifest_config(cfg), __version__, [csv_path], termination))
    print(f"{cfg.scenario}: {termination}; wrote {csv_path}")
    return 0 if ("completed" in termination
                 or "AreaDriftExceeded" in termination) else 3


def _cmd_converge(args) -> int:
    cfg = _load_config(args)
    if cfg.scenario not in _CONVERGERS:
        supported = ", ".join(sorted(_CONVERGERS))
        raise SchemaError(f"converge supports: {supported}")
    rows = _CONVERGERS[cfg.scenario](cfg, args.levels, args.quantity)
    params = [r[0] if args.quantity == "h" else r[1] for r in rows]
    table = eoc_table(list(zip(params, [r[2] for r in rows])))
    out = _output_dir(cfg)
    csv_path = os.path.join(out, f"eoc_{args.quantity}.csv")
    write_csv(csv_path, {
        "level": [t["level"] for t in table],
        "h": [r[0] for r in rows],
        "tau": [r[1] for r in rows],
        "error": [t["error"] for t in table],
        "eoc": [t["order"] for t in table]})
    for t in table:
        order = "-" if t["order"] is None else f"{t['order']:.3f}"
        print(f"level {t['level']}: param {t['parameter']:.5g} "
              f"error {t['error']:.5e} eoc {order}")
    print(f"wrote {csv_path}")
    return 0


def _cmd_list(_args) -> int:
    for name in sorted(SCENARIOS):
        print(f"{name}: {SCENARIOS[name].description}")
    return 0


def _cmd_mesh_info(args) -> int:
    mesh = load_mesh(args.file)
    q = quality(mesh)
    print(f"vertices: {mesh.n_vertices}")
    print(f"cells: {len(mesh.cells)} (manifold dim {mesh.dim_manifold}, "
          f"ambient dim {mesh.dim_ambient})")
    print(f"boundary facets: {len(mesh.boundary_facets)}")
    print(f"h_max: {q.h_max:.6g}")
    print(f"min_angle: {q.min_angle:.6g}")
    print(f"total measure: {mesh.total_measure():.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mbfem", description="moving-boundary FEM scenario driver")
    sub = parser.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("scenario", choices=sorted(SCENARIOS))
    run.add_argument("--config", help="TOML or JSON config file")
    run.add_argument("--override", action="append", default=[],
                     metavar="KEY=VALUE")
    run.set_defaults(fn=_cmd_run)

    conv = sub.add_parser("converge", help="refinement study with EOC table")
    conv.add_argument("scenario", choices=sorted(SCENARIOS))
    conv.add_argument("--levels", type=int, default=3)
    conv.add_argument("--quantity", choices=("h", "tau"), default="h")
    conv.add_argument("--config", help="TOML or JSON config file")
    conv.add_argument("--override", action="append", default=[],
                      metavar="KEY=VALUE")
    conv.set_defaults(fn=_cmd_converge)

    lst = sub.add_parser("list-scenarios", help="list runnable scenarios")
    lst.set_defaults(fn=_cmd_list)

    info = sub.add_parser("mesh-info", help="print mesh statistics")
    info.add_argument("file")
    info.set_defaults(fn=_cmd_mesh_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, SchemaError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except MbfemError as exc:
        print(f"numerical breakdown: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
