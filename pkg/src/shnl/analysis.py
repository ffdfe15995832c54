"""Norms, trajectory errors and the eps-sweep harness.

A sweep runs the local limit once and the nonlocal model once per eps with
the same initial data, grid, time step and snapshot schedule, then tabulates
time-reduced norms of u_eps - u.  Alongside it records per-run proxies of
the uniform bounds that drive the compactness argument:

``C0H2``      max_t ||u(t)||_{H^2}
``H1L2``      (sum_n dt_n ||(u_{n+1} - u_n)/dt_n||^2)^{1/2}
``coupling``  max_t sup_x |g u K_eps*u^m|  (|g| |u|^{m+1} for the limit run),
              with g = gamma for the one-kernel model and 1 for two kernels
``L2H4``      trapezoidal l2-in-time of ||u(t)||_{H^4}
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .convolution import make_operator
from .domain import Field, dct, lp_norm, spectral_gradient
from .errors import KernelError, NonFinite, ScheduleMismatch, Stalled, StepperError, UnderResolved
from .kernels import sample_kernel
from .model import ModelSpec, build_operators, limit_spec
from .stepper import StepperConfig, Trajectory, integrate

NORM_KINDS = ("Lp", "Hs", "sup", "holder")
TIME_REDUCTIONS = ("max", "l2")
PROXIES = ("C0H2", "H1L2", "coupling", "L2H4")
UNIFORMITY_FACTOR = 10.0


@dataclass(frozen=True)
class NormSpec:
    """A spatial norm, a time reduction and an optional interior restriction.

    ``s`` is the exponent for ``Lp``, the order for ``Hs`` and the Hölder
    exponent for ``holder``; it is ignored for ``sup``.
    """

    kind: str = "Lp"
    s: float = 2.0
    time_reduction: str = "max"
    margin: float | None = None

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ValueError(f"norm kind must be one of {NORM_KINDS}, got {self.kind!r}")
        if self.time_reduction not in TIME_REDUCTIONS:
            raise ValueError(f"time_reduction must be one of {TIME_REDUCTIONS}")
        if self.kind == "Lp" and not self.s >= 1:
            raise ValueError("Lp needs s >= 1")
        if self.kind == "Hs":
            if not 0 <= self.s <= 2:
                raise ValueError("Hs supports s in [0, 2]")
            if self.margin is not None and self.s not in (0, 1):
                raise ValueError("interior-restricted Hs supports s = 0 and s = 1 only")
        if self.kind == "holder" and not 0 < self.s < 1:
            raise ValueError("Hölder exponent must lie in (0, 1)")
        if self.margin is not None and self.margin < 0:
            raise ValueError("margin must be nonnegative")

    @property
    def restriction(self) -> str:
        return "full" if self.margin is None else f"interior({self.margin!r})"

    @property
    def label(self) -> str:
        if self.kind == "sup":
            base = "sup"
        elif self.kind == "holder":
            base = f"holder({self.s!r})"
        else:
            base = f"{self.kind}({self.s!r})"
        return f"{base}/{self.time_reduction}/{self.restriction}"


def hs_norm(u: Field, s: float) -> float:
    """Parseval H^s norm with weights (1 + |kappa|^2)^s; any real s."""
    dom = u.domain
    k2 = np.zeros(dom.shape)
    for axis, kappa in enumerate(dom.wavenumbers()):
        sl = [np.newaxis] * dom.dim
        sl[axis] = slice(None)
        k2 = k2 + (kappa**2)[tuple(sl)]
    c = dct(u.values)
    return math.sqrt(float(np.sum((1 + k2) ** s * c * c)) * dom.weight)


def holder_seminorm(u: Field, alpha: float) -> float:
    """max |u(x) - u(y)| / |x - y|^alpha over node pairs.

    All pairs in 1-D, axis-aligned pairs in higher dimensions.
    """
    best = 0.0
    for axis, h in enumerate(u.domain.spacing):
        v = np.moveaxis(u.values, axis, 0)
        n = v.shape[0]
        for d in range(1, n):
            diff = np.max(np.abs(v[d:] - v[:-d]))
            best = max(best, float(diff) / (d * h) ** alpha)
    return best


def field_norm(u: Field, spec: NormSpec) -> float:
    dom = u.domain
    mask = None if spec.margin is None else dom.interior_mask(spec.margin)
    if spec.kind == "Lp":
        return lp_norm(u.values, dom.weight, spec.s, mask)
    if spec.kind == "sup":
        return lp_norm(u.values, dom.weight, math.inf, mask)
    if spec.kind == "holder":
        return holder_seminorm(u, spec.s)
    if mask is None:
        return hs_norm(u, spec.s)
    sq = lp_norm(u.values, dom.weight, 2, mask) ** 2
    if spec.s == 1:
        for g in spectral_gradient(u):
            sq += lp_norm(g, dom.weight, 2, mask) ** 2
    return math.sqrt(sq)


def reduce_in_time(times, values, how: str) -> float:
    values = np.asarray(values, dtype=float)
    if how == "max":
        return float(np.max(values))
    if len(values) == 1:
        return float(values[0])
    return math.sqrt(float(trapezoid(values**2, np.asarray(times))))


def norm(obj, spec: NormSpec) -> float:
    """Norm of a :class:`Field`, or time-reduced norm of a :class:`Trajectory`."""
    if isinstance(obj, Field):
        return field_norm(obj, spec)
    return reduce_in_time(obj.times, [field_norm(f, spec) for f in obj.fields], spec.time_reduction)


def trajectory_error(traj_eps: Trajectory, traj_limit: Trajectory, spec: NormSpec) -> float:
    if len(traj_eps.times) != len(traj_limit.times) or not np.allclose(
        traj_eps.times, traj_limit.times, rtol=0, atol=1e-12
    ):
        raise ScheduleMismatch("trajectories have different snapshot schedules")
    vals = [field_norm(a - b, spec) for a, b in zip(traj_eps.fields, traj_limit.fields)]
    return reduce_in_time(traj_limit.times, vals, spec.time_reduction)


# -- uniform-bound proxies ----------------------------------------------------


def _coupling_exponent(spec: ModelSpec) -> int:
    return spec.q if spec.variant == "two-kernel" else 2


def _coupling_weight(spec: ModelSpec) -> float:
    return abs(spec.gamma) if spec.variant == "one-kernel" else 1.0


def bound_proxies(traj: Trajectory, spec: ModelSpec, m: int, eps: float | None, weight: float = 1.0) -> dict:
    """Measured proxies of the uniform estimates for one run.

    ``eps=None`` marks the local run, for which the coupling proxy is
    weight * sup |u|^{m+1}.
    """
    op = None
    if eps is not None:
        op = make_operator(sample_kernel(spec.kernel, eps, traj.domain, "K"))
    coupling = 0.0
    for f in traj.fields:
        u = f.values
        val = np.abs(u) ** (m + 1) if op is None else np.abs(u * op.apply(u**m))
        coupling = max(coupling, weight * float(np.max(val)))
    h1 = math.sqrt(float(np.dot(traj.rate_sq, traj.dt_history))) if traj.dt_history else 0.0
    return {
        "C0H2": max(hs_norm(f, 2) for f in traj.fields),
        "H1L2": h1,
        "coupling": coupling,
        "L2H4": reduce_in_time(traj.times, [hs_norm(f, 4) for f in traj.fields], "l2"),
    }


# -- sweep --------------------------------------------------------------------


@dataclass
class SweepRow:
    eps: float
    norm: NormSpec
    error: float | None
    status: str


@dataclass
class SweepReport:
    eps_list: list[float]
    norm_specs: list[NormSpec]
    rows: list[SweepRow]
    orders: dict[str, float | None]
    uniform_bounds: dict[str, dict]
    run_status: dict[str, str]
    limit_run_id: str = "limit"

    def errors(self, spec: NormSpec) -> list[float | None]:
        return [r.error for r in self.rows if r.norm == spec]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "norm_kind", "s_or_alpha", "restriction", "error", "status"])
        for r in self.rows:
            s_val = "" if r.norm.kind == "sup" else repr(float(r.norm.s))
            err = "" if r.error is None else repr(float(r.error))
            w.writerow([repr(float(r.eps)), r.norm.kind, s_val, r.norm.restriction, err, r.status])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {
            "eps_list": self.eps_list,
            "limit_run_id": self.limit_run_id,
            "norms": [
                {
                    "label": n.label,
                    "kind": n.kind,
                    "s": n.s,
                    "time_reduction": n.time_reduction,
                    "margin": n.margin,
                    "errors": self.errors(n),
                    "order": self.orders.get(n.label),
                }
                for n in self.norm_specs
            ],
            "order_fit": "empirical log-log least squares over the last 3 eps",
            "run_status": self.run_status,
            "uniform_bounds": self.uniform_bounds,
            "uniform_bound_report": uniform_bound_report(self).as_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=1, sort_keys=True)

    @property
    def all_ok(self) -> bool:
        return all(r.status == "ok" for r in self.rows)


def fit_order(eps, errors, last: int = 3) -> float | None:
    pts = [(e, x) for e, x in zip(eps, errors) if x is not None and x > 0]
    pts = pts[-last:]
    if len(pts) < 2:
        return None
    le, lx = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    return float(np.polyfit(le, lx, 1)[0])


def _mollified(spec: ModelSpec, u0: Field, eps: float) -> Field:
    op = make_operator(sample_kernel(spec.kernel, eps, u0.domain, "K"))
    return Field(u0.domain, op.apply(u0.values))


def _run(task):
    """One sweep run; returns (key, trajectory or None, status, proxies)."""
    key, spec, u0, cfg, eps, mollify, (m, weight), method = task
    try:
        if eps is not None:
            spec = spec.with_eps(eps)
            ops = build_operators(spec, u0.domain, method)
            if mollify:
                u0 = _mollified(spec, u0, eps)
        else:
            ops = None
        traj = integrate(spec, ops, u0, cfg)
        return key, traj, "ok", bound_proxies(traj, spec, m, eps, weight)
    except UnderResolved as exc:
        return key, None, f"under-resolved: {exc}", None
    except KernelError as exc:
        return key, None, f"kernel: {exc}", None
    except NonFinite as exc:
        return key, None, f"non-finite at step {exc.step}, t = {exc.time!r}", None
    except Stalled as exc:
        return key, None, f"stalled at step {exc.step}, t = {exc.time!r}", None
    except StepperError as exc:
        return key, None, f"stepper: {exc}", None


def epsilon_sweep(
    spec: ModelSpec,
    u0: Field,
    stepper: StepperConfig,
    eps_list,
    norm_specs,
    *,
    mollify_initial: bool = False,
    threads: int = 1,
    method: str | None = None,
) -> SweepReport:
    """Run the local limit and ``spec`` at each eps; tabulate the errors."""
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be nonempty and strictly decreasing")
    if spec.variant == "local":
        raise ValueError("a sweep needs a nonlocal model")
    norm_specs = list(norm_specs)
    m = (_coupling_exponent(spec), _coupling_weight(spec))
    lim = limit_spec(spec, u0.domain.dim)
    tasks = [("limit", lim, u0, stepper, None, False, m, method)]
    tasks += [(repr(e), spec, u0, stepper, e, mollify_initial, m, method) for e in eps_list]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run, tasks))
    else:
        results = [_run(t) for t in tasks]
    trajs = {k: t for k, t, _, _ in results}
    status = {k: s for k, _, s, _ in results}
    bounds = {k: b for k, _, _, b in results if b is not None}

    rows = []
    limit = trajs["limit"]
    for e in eps_list:
        key = repr(e)
        for ns in norm_specs:
            if limit is None:
                rows.append(SweepRow(e, ns, None, "limit run failed: " + status["limit"]))
            elif trajs[key] is None:
                rows.append(SweepRow(e, ns, None, status[key]))
            else:
                rows.append(SweepRow(e, ns, trajectory_error(trajs[key], limit, ns), "ok"))
    report = SweepReport(eps_list, norm_specs, rows, {}, bounds, status)
    report.orders = {ns.label: fit_order(eps_list, report.errors(ns)) for ns in norm_specs}
    return report


# -- uniform bounds -----------------------------------------------------------


@dataclass
class UniformBoundTable:
    per_eps: dict[str, dict]
    limit: dict | None
    max_over_eps: dict[str, float]
    spread: dict[str, float]  # max/min over eps
    flagged: list[str]

    @property
    def passed(self) -> bool:
        return not self.flagged

    def as_dict(self):
        return dict(self.__dict__)


def uniform_bound_report(sweep: SweepReport) -> UniformBoundTable:
    """Per-eps proxies, their max over eps and the 10x uniformity flags."""
    limit = sweep.uniform_bounds.get(sweep.limit_run_id)
    per_eps = {k: v for k, v in sweep.uniform_bounds.items() if k != sweep.limit_run_id}
    maxima, spread, flagged = {}, {}, []
    for name in PROXIES:
        vals = [v[name] for v in per_eps.values()]
        if not vals:
            continue
        maxima[name] = max(vals)
        lo = min(vals)
        spread[name] = maxima[name] / lo if lo > 0 else (1.0 if maxima[name] == 0 else math.inf)
        if limit is not None and maxima[name] > UNIFORMITY_FACTOR * limit[name]:
            flagged.append(name)
    failed = [k for k, s in sweep.run_status.items() if s != "ok"]
    flagged += [f"run {k} failed" for k in failed]
    return UniformBoundTable(per_eps, limit, maxima, spread, flagged)
