"""Batch command-line interface: cases, sweeps, verification, replay.

Configs are strict YAML: unknown keys are rejected and physics parameters
(law, grid, kappa, time step) have no defaults.  Admissibility of the
configured law is checked at parse time; a failing condition aborts with
exit code 2 and the witness point.  Every run writes a manifest before any
compute so that runs are reproducible from the manifest alone.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from types import SimpleNamespace
from typing import Optional

import click
import numpy as np
import yaml

from . import __version__
from .constitutive import (GeneralLawPair, ViscosityLaw, check_cgen,
                           check_important, linear_law, log_law, power_law,
                           table_law)
from .diagnostics import (DiagnosticsWriter, identity_suite,
                          max_principle_monitor, row_from_report)
from .fields import Grid, ScalarField, VectorField, leray_project, read_snapshot, write_snapshot
from .limits import (SweepPlan, SweepReport, _initial_state, _member_config,
                     _trajectory_distances, _vanish_observable,
                     reference_incompressible, reference_ks)
from .solver import FluidState, SolverConfig, run

EXIT_CONFIG = 2
EXIT_MONITOR = 1


class ConfigError(Exception):
    pass


# strict schema helpers ------------------------------------------------------

def _check_keys(d, required, optional, ctx):
    if not isinstance(d, dict):
        raise ConfigError(f"{ctx}: expected a mapping")
    unknown = sorted(set(d) - set(required) - set(optional))
    if unknown:
        raise ConfigError(f"{ctx}: unknown keys {unknown}")
    missing = sorted(set(required) - set(d))
    if missing:
        raise ConfigError(f"{ctx}: missing required keys {missing}")


def grid_from_spec(spec) -> Grid:
    _check_keys(spec, ("d", "n"), ("length",), "grid")
    return Grid(int(spec["d"]), int(spec["n"]),
                float(spec.get("length", 2.0 * np.pi)))


_LAW_KEYS = {
    "power": ("alpha",),
    "linear": ("a", "b"),
    "log": ("scale",),
    "table": ("s_nodes", "mu_nodes"),
}


def law_from_spec(spec) -> ViscosityLaw:
    _check_keys(spec, ("kind", "r", "R"), ("alpha", "a", "b", "scale",
                                           "offset", "s_nodes", "mu_nodes"),
                "law")
    kind = spec["kind"]
    if kind not in _LAW_KEYS:
        raise ConfigError(f"law: unknown kind {kind!r}")
    extra = sorted(set(spec) - {"kind", "r", "R", "offset"} - set(_LAW_KEYS[kind]))
    if extra:
        raise ConfigError(f"law kind {kind!r}: unexpected keys {extra}")
    missing = sorted(set(_LAW_KEYS[kind]) - set(spec))
    if missing:
        raise ConfigError(f"law kind {kind!r}: missing keys {missing}")
    r, R = float(spec["r"]), float(spec["R"])
    if kind == "power":
        return power_law(float(spec["alpha"]), r, R)
    if kind == "linear":
        return linear_law(float(spec["a"]), float(spec["b"]), r, R)
    if kind == "log":
        return log_law(r, R, scale=float(spec["scale"]),
                       offset=float(spec.get("offset", 0.0)))
    return table_law([float(s) for s in spec["s_nodes"]],
                     [float(m) for m in spec["mu_nodes"]], r, R)


def _admissibility(law: ViscosityLaw, d: int, mode: str,
                   tilde_spec=None) -> dict:
    """Run the condition checks; raise ConfigError when the mode needs one."""
    rep = check_important(law, d)
    out = {"important": {"satisfied": bool(rep.satisfied),
                         "infimum": rep.infimum, "argmin": rep.argmin}}
    if tilde_spec is not None:
        tilde = law_from_spec(tilde_spec)
        pair = GeneralLawPair(law, tilde, law.r)
        gen = check_cgen(pair, d)
        out["general_pair"] = {"satisfied": bool(gen.satisfied),
                               "witness": gen.witness}
    needs = mode not in ("incompressible_ns", "ks_limit")
    if needs and not rep.satisfied:
        raise ConfigError(
            "admissibility condition fails for the configured law: "
            f"infimum {rep.infimum:.6g} at density {rep.argmin:.6g}")
    return out


_CASE_REQUIRED = ("grid", "law", "kappa", "dt", "t_end", "initial")
_CASE_OPTIONAL = ("scheme", "mode", "epsilon", "mollify_width", "capillarity",
                  "save_every", "diagnostics_every", "seed", "law_tilde")
_INITIAL_KINDS = {
    "random": (("rho_mean", "rho_amplitude", "w_amplitude"), ()),
    "taylor_green": (("rho_mean", "w_amplitude"), ("rho_amplitude",)),
}
_SWEEP_REQUIRED = ("target", "kappas", "grid", "law", "dt", "t_end", "initial")
_SWEEP_OPTIONAL = ("scheme", "epsilon", "seed")
_VERIFY_SUITES = ("identities", "mms", "temporal", "identification")


@dataclass
class ParsedConfig:
    kind: str
    section: dict
    grid: Optional[Grid] = None
    law: Optional[ViscosityLaw] = None
    admissibility: Optional[dict] = None
    seed: int = 0


def parse_config(path) -> ParsedConfig:
    """Load and validate a config file; admissibility runs here."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}")
    if not isinstance(raw, dict) or not raw:
        raise ConfigError("config is empty or not a mapping")
    _check_keys(raw, (), ("case", "sweep", "verify"), "top level")
    kinds = [k for k in ("case", "sweep", "verify") if k in raw]
    if len(kinds) != 1:
        raise ConfigError("config must contain exactly one of case/sweep/verify")
    kind = kinds[0]
    section = raw[kind]

    if kind == "case":
        _check_keys(section, _CASE_REQUIRED, _CASE_OPTIONAL, "case")
        grid = grid_from_spec(section["grid"])
        law = law_from_spec(section["law"])
        _validate_initial(section["initial"])
        mode = section.get("mode", "reduced")
        adm = _admissibility(law, grid.d, mode, section.get("law_tilde"))
        return ParsedConfig("case", section, grid, law, adm,
                            int(section.get("seed", 0)))
    if kind == "sweep":
        _check_keys(section, _SWEEP_REQUIRED, _SWEEP_OPTIONAL, "sweep")
        grid = grid_from_spec(section["grid"])
        law = law_from_spec(section["law"])
        _validate_initial(section["initial"])
        if section["target"] not in ("kappa_to_0", "kappa_to_1"):
            raise ConfigError(f"sweep: unknown target {section['target']!r}")
        adm = _admissibility(law, grid.d, "reduced")
        return ParsedConfig("sweep", section, grid, law, adm,
                            int(section.get("seed", 0)))
    _check_keys(section, ("suite",), ("seed",), "verify")
    if section["suite"] not in _VERIFY_SUITES + ("all",):
        raise ConfigError(f"verify: unknown suite {section['suite']!r}")
    return ParsedConfig("verify", section, seed=int(section.get("seed", 0)))


def _validate_initial(spec):
    _check_keys(spec, ("kind",), ("rho_mean", "rho_amplitude", "w_amplitude"),
                "initial")
    kind = spec["kind"]
    if kind not in _INITIAL_KINDS:
        raise ConfigError(f"initial: unknown kind {kind!r}")
    required, _ = _INITIAL_KINDS[kind]
    missing = sorted(set(required) - set(spec))
    if missing:
        raise ConfigError(f"initial kind {kind!r}: missing keys {missing}")


def _build_initial(grid: Grid, spec, seed: int, law: ViscosityLaw,
                   kappa: float) -> FluidState:
    from .verification import _smooth_random

    rng = np.random.default_rng(seed)
    kind = spec["kind"]
    if kind == "random":
        rho = _smooth_random(grid, rng, mean=float(spec["rho_mean"]),
                             amplitude=float(spec["rho_amplitude"]))
        comps = np.stack([_smooth_random(grid, rng, 0.0,
                                         float(spec["w_amplitude"]))
                          for _ in range(grid.d)])
        w = leray_project(VectorField(grid, comps))
    else:
        x, y = grid.xs[0], grid.xs[1]
        rho = (float(spec["rho_mean"])
               + float(spec.get("rho_amplitude", 0.0)) * np.sin(x) * np.cos(y))
        a = float(spec["w_amplitude"])
        comps = np.zeros((grid.d,) + grid.shape)
        comps[0] = a * np.sin(x) * np.cos(y)
        comps[1] = -a * np.cos(x) * np.sin(y)
        w = VectorField(grid, comps, solenoidal=True)
    if float(rho.min()) <= law.r or float(rho.max()) >= law.R:
        raise ConfigError(
            f"initial density range [{rho.min():.4g}, {rho.max():.4g}] leaves "
            f"the law band ({law.r:.4g}, {law.R:.4g})")
    return FluidState(ScalarField(grid, rho), w, kappa, law)


# manifest -------------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def write_manifest(out_dir: Path, config_path, parsed: ParsedConfig,
                   seed: int, workers: int) -> dict:
    manifest = {
        "version": __version__,
        "kind": parsed.kind,
        "config_path": str(config_path),
        "config_sha256": _sha256(config_path),
        "seed": seed,
        "workers": workers,
        "resolved": parsed.section,
        "admissibility": parsed.admissibility,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    return manifest


# case runner ----------------------------------------------------------------

def _solver_config_from_section(section, grid, law) -> SolverConfig:
    return SolverConfig(grid=grid, dt=float(section["dt"]),
                        t_end=float(section["t_end"]), law=law,
                        kappa=float(section["kappa"]),
                        scheme=section.get("scheme", "imex1"),
                        mode=section.get("mode", "reduced"),
                        epsilon=float(section.get("epsilon", 0.0)),
                        mollify_width=float(section.get("mollify_width", 0.0)),
                        capillarity=float(section.get("capillarity", 0.0)),
                        save_every=int(section.get("save_every", 0)),
                        diagnostics_every=int(section.get("diagnostics_every", 1)))


def _ghost_config_from(section, law):
    from .applications import GhostConfig

    spec = section["law"]
    if spec["kind"] != "linear" or float(spec["a"]) != 0.0:
        raise ConfigError("ghost mode needs a proportional (linear, a=0) law")
    return GhostConfig(capillarity=float(section["capillarity"]),
                       kappa=float(section["kappa"]),
                       mu_bar=float(spec["b"]))


def run_case(parsed: ParsedConfig, out_dir: Path, seed: int) -> int:
    from .applications import GHOST_COLUMNS, ghost_row_extras

    section = parsed.section
    grid, law = parsed.grid, parsed.law
    cfg = _solver_config_from_section(section, grid, law)
    state = _build_initial(grid, section["initial"], seed, law, cfg.kappa)
    r0, R0 = float(state.rho.values.min()), float(state.rho.values.max())

    ghost_cfg = None
    extra_cols = ()
    if cfg.mode == "ghost" and cfg.capillarity > 0.0:
        ghost_cfg = _ghost_config_from(section, law)
        extra_cols = GHOST_COLUMNS

    extras_rows = []

    def on_step(st):
        if ghost_cfg is not None:
            extras_rows.append(ghost_row_extras(st, ghost_cfg))
        else:
            extras_rows.append({})

    traj = run(cfg, state, on_step=on_step)

    with DiagnosticsWriter(out_dir / "diagnostics.csv", extra_cols) as writer:
        for i, rep in enumerate(traj.reports):
            entry = {k: traj.series[k][i] for k in traj.series}
            row = row_from_report(rep, entry, entry["identification_error"])
            row.update(extras_rows[i])
            writer.write_row(row)

    for idx, (t, st) in enumerate(zip(traj.times, traj.states)):
        fields = {"rho": st.rho.values}
        for i in range(grid.d):
            fields[f"w{i}"] = st.w.components[i]
        if st.v is not None:
            for i in range(grid.d):
                fields[f"v{i}"] = st.v.components[i]
        write_snapshot(out_dir / f"snapshot_{idx:05d}.kef1", grid, fields, t=t)

    monitor = max_principle_monitor(traj, r0, R0)
    with open(out_dir / "monitors.json", "w") as fh:
        json.dump({"max_principle": monitor}, fh, indent=2)
    if not monitor["ok"]:
        click.echo(f"monitor failure: density excursion {monitor['excursion']:.3g} "
                   f"exceeds {monitor['tolerance']:.3g}", err=True)
        return EXIT_MONITOR
    return 0


# sweep runner ---------------------------------------------------------------

def _build_sweep_plan(section, grid, law, seed: int) -> SweepPlan:
    from .verification import _smooth_random

    init = section["initial"]
    rng = np.random.default_rng(seed)
    if init["kind"] == "random":
        rho0 = _smooth_random(grid, rng, mean=float(init["rho_mean"]),
                              amplitude=float(init["rho_amplitude"]))
        comps = np.stack([_smooth_random(grid, rng, 0.0,
                                         float(init["w_amplitude"]))
                          for _ in range(grid.d)])
        w0 = leray_project(VectorField(grid, comps)).components
    else:
        x, y = grid.xs[0], grid.xs[1]
        rho0 = (float(init["rho_mean"])
                + float(init.get("rho_amplitude", 0.0)) * np.sin(x) * np.cos(y))
        a = float(init["w_amplitude"])
        w0 = np.zeros((grid.d,) + grid.shape)
        w0[0] = a * np.sin(x) * np.cos(y)
        w0[1] = -a * np.cos(x) * np.sin(y)
    return SweepPlan(kappas=[float(k) for k in section["kappas"]],
                     target=section["target"], grid=grid,
                     dt=float(section["dt"]), t_end=float(section["t_end"]),
                     law=law, rho0=lambda g: rho0.copy(),
                     w0=lambda g: w0.copy(),
                     scheme=section.get("scheme", "imex1"),
                     epsilon=float(section.get("epsilon", 0.0)))


def _reference_payload(plan: SweepPlan):
    ref = (reference_incompressible(plan) if plan.target == "kappa_to_0"
           else reference_ks(plan))
    return {"times": list(ref.times),
            "rho": [st.rho.values for st in ref.states],
            "w": [st.w.components for st in ref.states]}


def _member_row(plan: SweepPlan, kappa: float, ref_payload) -> dict:
    from .diagnostics import kappa_entropy

    cfg = _member_config(plan, kappa, "reduced")
    traj = run(cfg, _initial_state(plan, kappa))
    ref = SimpleNamespace(
        times=ref_payload["times"],
        states=[SimpleNamespace(rho=SimpleNamespace(values=r),
                                w=SimpleNamespace(components=w))
                for r, w in zip(ref_payload["rho"], ref_payload["w"])])
    dist_rho, dist_w = _trajectory_distances(plan.grid, traj, ref)
    return {"kappa": kappa, "dist_rho": dist_rho, "dist_w": dist_w,
            "vanish_obs": _vanish_observable(traj, kappa, plan.target, plan.dt),
            "entropy_initial": kappa_entropy(traj.states[0]).E_kappa,
            "entropy_final": kappa_entropy(traj.final_state).E_kappa}


def _sweep_member_task(args):
    section, seed, kappa, ref_payload = args
    grid = grid_from_spec(section["grid"])
    law = law_from_spec(section["law"])
    plan = _build_sweep_plan(section, grid, law, seed)
    return _member_row(plan, kappa, ref_payload)


def run_sweep(parsed: ParsedConfig, out_dir: Path, seed: int,
              workers: int) -> int:
    section = parsed.section
    plan = _build_sweep_plan(section, parsed.grid, parsed.law, seed)
    ref_payload = _reference_payload(plan)
    order = sorted(plan.kappas, reverse=(plan.target == "kappa_to_0"))

    if workers > 1:
        tasks = [(section, seed, k, ref_payload) for k in order]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_member_task, tasks))
    else:
        rows = [_member_row(plan, k, ref_payload) for k in order]

    report = SweepReport(target=plan.target, rows=rows)
    report.write_csv(out_dir / "sweep.csv")

    ok = True
    for col in ("dist_rho", "dist_w"):
        vals = report.column(col)
        if not all(a > b for a, b in zip(vals, vals[1:])):
            click.echo(f"monitor failure: {col} not strictly decreasing "
                       f"toward the endpoint", err=True)
            ok = False
    return 0 if ok else EXIT_MONITOR


# verification runner --------------------------------------------------------

def _suite_identities(out_dir: Path, seed: int) -> bool:
    from .verification import _smooth_random, make_case, validate_case

    grid = Grid(2, 64)
    law = power_law(1.0, 0.5, 3.0)
    rng = np.random.default_rng(seed)
    worst = {"split_identity": 0.0, "two_velocity": 0.0,
             "renormalized_continuity": 0.0, "gn_ratio": 0.0}
    for _ in range(10):
        rho = _smooth_random(grid, rng, mean=1.5, amplitude=0.3)
        comps = np.stack([_smooth_random(grid, rng, 0.0, 0.5) for _ in range(2)])
        st = FluidState(ScalarField(grid, rho),
                        leray_project(VectorField(grid, comps)),
                        rng.uniform(0.1, 0.9), law)
        res = identity_suite(st)
        for k in worst:
            worst[k] = max(worst[k], res[k])
    cases = {kind: validate_case(make_case(kind), grid)
             for kind in ("steady", "traveling")}
    ok = (worst["split_identity"] <= 1e-10
          and worst["two_velocity"] <= 1e-10
          and worst["renormalized_continuity"] <= 1e-10
          and np.isfinite(worst["gn_ratio"])
          and all(max(c.values()) <= 1e-10 for c in cases.values()))
    with open(out_dir / "verify_identities.json", "w") as fh:
        json.dump({"worst": worst, "manufactured": cases, "ok": ok}, fh, indent=2)
    return ok


def _suite_mms(out_dir: Path) -> bool:
    from .verification import make_case, mms_run

    rep = mms_run(make_case("steady"), ns=(16, 32, 64), dt=1e-3, t_end=0.1)
    ok = bool(rep.errors_l2[-1] < 1e-10
              and all(a > b for a, b in zip(rep.errors_l2, rep.errors_l2[1:])))
    with open(out_dir / "verify_mms.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "error_l2", "error_linf"])
        for n, e2, einf in zip(rep.values, rep.errors_l2, rep.errors_linf):
            writer.writerow([n, format(e2, ".17g"), format(einf, ".17g")])
    return ok


def _suite_temporal(out_dir: Path) -> bool:
    from .verification import make_case, temporal_order

    rep = temporal_order(make_case("traveling"), n=32, dts=(4e-3, 2e-3, 1e-3),
                         t_end=0.2)
    order = float(np.mean(rep.orders))
    ok = 1.9 <= order <= 2.1
    with open(out_dir / "verify_temporal.json", "w") as fh:
        json.dump({"dts": list(rep.values), "errors_l2": list(rep.errors_l2),
                   "order": order, "ok": ok}, fh, indent=2)
    return ok


def _suite_identification(out_dir: Path, seed: int) -> bool:
    from .verification import identification_experiment

    law = power_law(1.0, 0.5, 3.0)
    deltas = (0.2, 0.05, 0.0)
    res = identification_experiment(law, kappa=0.5, n=32, dt=5e-4, t_end=0.05,
                                    deltas=deltas, etas=(0.0,), seed=seed)
    errs = [res[(d, 0.0)]["max_error"] for d in deltas]
    ok = all(a >= b for a, b in zip(errs, errs[1:])) and errs[-1] < 1e-6
    with open(out_dir / "verify_identification.json", "w") as fh:
        json.dump({"deltas": deltas, "max_errors": errs, "ok": ok}, fh, indent=2)
    return ok


def run_verify(suite: str, out_dir: Path, seed: int) -> int:
    suites = _VERIFY_SUITES if suite == "all" else (suite,)
    ok = True
    for name in suites:
        if name == "identities":
            good = _suite_identities(out_dir, seed)
        elif name == "mms":
            good = _suite_mms(out_dir)
        elif name == "temporal":
            good = _suite_temporal(out_dir)
        else:
            good = _suite_identification(out_dir, seed)
        click.echo(f"suite {name}: {'ok' if good else 'FAILED'}")
        ok = ok and good
    return 0 if ok else EXIT_MONITOR


# replay ---------------------------------------------------------------------

def replay_run(out_dir: Path, tol: float = 1e-14) -> int:
    """Recompute diagnostics rows from snapshots and compare with the CSV."""
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    section = manifest["resolved"]
    law = law_from_spec(section["law"])
    kappa = float(section["kappa"])
    cfg_eps = float(section.get("epsilon", 0.0))

    with open(out_dir / "diagnostics.csv") as fh:
        rows = list(csv.DictReader(fh))
    by_time = {row["t"]: row for row in rows}

    from .diagnostics import kappa_entropy

    worst = 0.0
    checked = 0
    for snap in sorted(out_dir.glob("snapshot_*.kef1")):
        grid, t, fields = read_snapshot(snap)
        w = np.stack([fields[f"w{i}"] for i in range(grid.d)])
        v = None
        if "v0" in fields:
            v = VectorField(grid, np.stack([fields[f"v{i}"]
                                            for i in range(grid.d)]))
        st = FluidState(ScalarField(grid, fields["rho"]),
                        VectorField(grid, w, solenoidal=True),
                        kappa, law, v=v, t=t)
        key = format(t, ".17g")
        if key not in by_time:
            continue
        row = by_time[key]
        rep = kappa_entropy(st, epsilon=cfg_eps)
        recomputed = {
            "E_kappa": rep.E_kappa, "D_rot": rep.D_rot, "D_dev": rep.D_dev,
            "D_div": rep.D_div, "eps_budget": rep.eps_budget,
            "min_rho": float(np.min(st.rho.values)),
            "max_rho": float(np.max(st.rho.values)),
            "mass": grid.integrate(st.rho.values),
        }
        for k, val in recomputed.items():
            ref = float(row[k])
            scale = max(abs(ref), 1.0)
            worst = max(worst, abs(val - ref) / scale)
        checked += 1
    click.echo(f"replay: {checked} snapshot rows checked, "
               f"worst relative gap {worst:.3g}")
    if checked == 0:
        click.echo("replay: no snapshot matched a diagnostics row", err=True)
        return EXIT_MONITOR
    return 0 if worst <= tol else EXIT_MONITOR


# click wiring ---------------------------------------------------------------

@click.group()
def main():
    """Batch driver for flow cases, sweeps, and verification suites."""


def _common(config, out):
    try:
        parsed = parse_config(config)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return parsed, out_dir


@main.command("run-case")
@click.option("--config", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=1, envvar="KEF_WORKERS")
@click.option("--dry-run", is_flag=True, default=False)
def cmd_run_case(config, out, seed, workers, dry_run):
    """Run a single configured case and write diagnostics + snapshots."""
    parsed, out_dir = _common(config, out)
    if parsed.kind != "case":
        click.echo("config error: run-case needs a 'case' config", err=True)
        sys.exit(EXIT_CONFIG)
    eff_seed = parsed.seed if seed is None else seed
    write_manifest(out_dir, config, parsed, eff_seed, workers)
    if dry_run:
        click.echo("dry run: manifest written, no compute")
        return
    try:
        code = run_case(parsed, out_dir, eff_seed)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    sys.exit(code)


@main.command("run-sweep")
@click.option("--config", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=1, envvar="KEF_WORKERS")
@click.option("--dry-run", is_flag=True, default=False)
def cmd_run_sweep(config, out, seed, workers, dry_run):
    """Run a mixing-parameter sweep against its endpoint reference."""
    parsed, out_dir = _common(config, out)
    if parsed.kind != "sweep":
        click.echo("config error: run-sweep needs a 'sweep' config", err=True)
        sys.exit(EXIT_CONFIG)
    eff_seed = parsed.seed if seed is None else seed
    write_manifest(out_dir, config, parsed, eff_seed, workers)
    if dry_run:
        click.echo("dry run: manifest written, no compute")
        return
    sys.exit(run_sweep(parsed, out_dir, eff_seed, workers))


@main.command("run-verify")
@click.option("--suite", required=True,
              type=click.Choice(_VERIFY_SUITES + ("all",)))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=0)
def cmd_run_verify(suite, out, seed):
    """Run a verification suite; nonzero exit on any threshold failure."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sys.exit(run_verify(suite, out_dir, seed))


@main.command("replay")
@click.option("--out", required=True, type=click.Path(exists=True))
def cmd_replay(out):
    """Recompute diagnostics from stored snapshots and compare."""
    sys.exit(replay_run(Path(out)))


@main.command("inspect-snapshot")
@click.argument("path", type=click.Path(exists=True))
def cmd_inspect_snapshot(path):
    """Print the header and field statistics of one snapshot file."""
    grid, t, fields = read_snapshot(path)
    click.echo(f"grid: d={grid.d} n={grid.n} length={grid.length:.17g}")
    click.echo(f"t: {t:.17g}")
    for name, arr in fields.items():
        click.echo(f"{name}: min={arr.min():.6g} max={arr.max():.6g} "
                   f"l2={grid.l2_a(arr):.6g}")


if __name__ == "__main__":
    main()
