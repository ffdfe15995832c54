"""Command-line entry point: ``shnl {simulate,sweep,kernel-check,dispersion-test}``.

Exit status is 0 when every requested run and check succeeded, 1 when a run
failed or a check did not pass, and 2 for configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import epsilon_sweep, uniform_bound_report
from .config import RunConfig, build_initial, load_config, serialize_config, with_seed
from .convolution import make_operator
from .domain import Field, inner
from .errors import ConfigError, KernelError, NonFinite, SHNLError, Stalled, StepperError
from .kernels import check_K_admissible, check_Q_dominated, sample_kernel
from .model import ModelSpec, Nonlinearity, build_operators
from .stepper import export, integrate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override if override is not None else cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out: Path, cfg: RunConfig, command: str, started: float, status: int) -> None:
    text = serialize_config(cfg)
    write_json(
        out / "manifest.json",
        {
            "command": command,
            "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
            "tool_version": __version__,
            "wall_clock_seconds": time.perf_counter() - started,
            "exit_status": status,
        },
    )
    (out / "config.toml").write_text(text)


def _initial(cfg: RunConfig, spec: ModelSpec) -> Field:
    u0 = build_initial(cfg.initial, cfg.domain)
    if cfg.initial.mollify and spec.variant != "local":
        op = make_operator(sample_kernel(spec.kernel, spec.eps, cfg.domain, "K"))
        u0 = Field(cfg.domain, op.apply(u0.values))
    return u0


def _failure(exc: Exception) -> dict:
    out = {"status": "failed", "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, (NonFinite, Stalled)):
        out.update(step=exc.step, time=exc.time)
    return out


# -- commands -----------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    spec = cfg.model
    try:
        ops = build_operators(spec, cfg.domain)
        u0 = _initial(cfg, spec)
        traj = integrate(spec, ops, u0, cfg.stepper)
    except (StepperError, KernelError) as exc:
        write_json(out / "simulate.json", _failure(exc))
        print(f"simulate failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if cfg.output.snapshots:
        export(traj, out / "trajectory")
    E = traj.energies()
    increases = np.diff(E) - 1e-10 * (1 + np.abs(E[:-1]))
    write_json(
        out / "simulate.json",
        {
            "status": "ok",
            "final_time": traj.times[-1],
            "steps": len(traj.dt_history),
            "min_dt": min(traj.dt_history),
            "energy_initial": float(E[0]),
            "energy_final": float(E[-1]),
            "energy_non_increasing": bool(np.all(increases <= 0)),
            "max_dissipation_residual": max(traj.dissipation_residual),
        },
    )
    write_json(out / "energy.json", [e.as_dict() for e in traj.energy_series])
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    if cfg.model.variant == "local":
        raise ConfigError("sweep needs a nonlocal model variant")
    spec = cfg.model
    u0 = build_initial(cfg.initial, cfg.domain)
    report = epsilon_sweep(
        spec,
        u0,
        cfg.stepper,
        cfg.eps_list,
        cfg.norms,
        mollify_initial=cfg.initial.mollify,
        threads=threads,
    )
    if "csv" in cfg.output.formats:
        (out / "sweep.csv").write_text(report.to_csv())
    if "json" in cfg.output.formats:
        (out / "sweep.json").write_text(report.to_json() + "\n")
    table = uniform_bound_report(report)
    ok = report.all_ok and table.passed
    if not ok:
        failed = [f"eps={r.eps!r} {r.norm.label}: {r.status}" for r in report.rows if r.status != "ok"]
        write_json(out / "failures.json", {"rows": failed, "uniform_bound_flags": table.flagged})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_kernel_check(cfg: RunConfig, out: Path) -> int:
    spec = cfg.model
    dim = cfg.domain.dim
    adm = check_K_admissible(spec.kernel, dim)
    result = {"K": adm.as_dict(), "resolution": {}, "domination": {}}
    ok = adm.passed
    for eps in cfg.eps_list:
        key = repr(eps)
        try:
            dk = sample_kernel(spec.kernel, eps, cfg.domain, "K")
            result["resolution"][key] = {"status": "ok", "half_width": list(dk.half_width)}
        except KernelError as exc:
            result["resolution"][key] = {"status": "failed", "message": str(exc)}
            ok = False
            continue
        if spec.variant == "two-kernel":
            dom = check_Q_dominated(spec.qkernel, spec.kernel, eps, cfg.domain)
            result["domination"][key] = dom.as_dict()
            ok = ok and dom.passed
    result["passed"] = ok
    write_json(out / "kernel_check.json", result)
    return EXIT_OK if ok else EXIT_FAIL


def dispersion_rates(cfg: RunConfig) -> list[dict]:
    """Measured vs exact growth rates of cosine modes of the linear equation.

    The modes are orthogonal and the equation is linear, so a single run from
    their sum is projected back onto each mode.
    """
    dom = cfg.domain
    spec = ModelSpec("local", r=cfg.model.r, gamma=0.0, nonlinearity=Nonlinearity.zero())
    stepper = replace(cfg.stepper, energy_guard=False)
    L = dom.lengths[0]
    x0 = dom.mesh()[0]
    for k in cfg.dispersion.modes:
        if k >= dom.sizes[0]:
            raise ConfigError(f"dispersion mode {k} is not representable on {dom.sizes[0]} cells")
    modes = {k: Field(dom, np.cos(math.pi * k * x0 / L)) for k in cfg.dispersion.modes}
    u0 = Field(dom, sum(phi.values for phi in modes.values()))
    traj = integrate(spec, None, u0, stepper)
    T = traj.times[-1]
    rows = []
    for k, phi in modes.items():
        amp = inner(traj.final, phi) / inner(phi, phi)
        measured = math.log(amp) / T if amp > 0 else -math.inf
        kappa = math.pi * k / L
        exact = cfg.model.r - (1 - kappa**2) ** 2
        err = abs(measured - exact) / abs(exact) if exact != 0 else abs(measured)
        rows.append(
            {
                "k": k,
                "measured": measured,
                "exact": exact,
                "error": err,
                "passed": bool(err <= cfg.dispersion.tolerance),
            }
        )
    return rows


def cmd_dispersion_test(cfg: RunConfig, out: Path) -> int:
    rows = dispersion_rates(cfg)
    ok = all(r["passed"] for r in rows)
    write_json(out / "dispersion.json", {"r": cfg.model.r, "tolerance": cfg.dispersion.tolerance, "modes": rows, "passed": ok})
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "kernel-check": cmd_kernel_check,
    "dispersion-test": cmd_dispersion_test,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shnl", description="Local and nonlocal Swift-Hohenberg solver and eps-sweep harness.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "integrate one run and write the trajectory and energy series",
        "sweep": "run the eps sweep against the local limit and write CSV/JSON reports",
        "kernel-check": "check kernel admissibility, resolution and |Q| <= K domination",
        "dispersion-test": "compare linear growth rates of cosine modes with the closed form",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides [output] directory)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--seed", type=int, default=None, help="seed for random-smooth initial data")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = with_seed(load_config(args.config), args.seed)
        out = _out_dir(cfg, args.out)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "sweep":
            status = cmd_sweep(cfg, out, args.threads)
        else:
            status = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    except (SHNLError, OSError) as exc:
        write_json(out / "failure.json", _failure(exc))
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_FAIL
    _manifest(out, cfg, args.command, started, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
