"""Time integration of du/dt = -(I + Laplacian)^2 u + F(u).

The stiff fourth-order part is diagonal in the cosine basis with symbol
mu_k = (1 + lambda_k)^2 >= 0, so the implicit schemes only divide by
``1 + dt * mu_k``.  Schemes:

``imex1``
    implicit Euler on the linear part, explicit Euler on F.
``imex2``
    Crank-Nicolson on the linear part, variable-step Adams-Bashforth-2 on F
    (the first step uses F(u_0) alone).
``rk4-explicit``
    classical RK4 on the full equation, substepped for stability.  Meant as
    an oracle on small grids only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import Field, dct, idct, write_field
from .errors import NonFinite, Stalled, StepperError
from .model import EnergyReport, Evaluation, KernelOps, Model, ModelSpec

SCHEMES = ("imex1", "imex2", "rk4-explicit")
SNAPSHOT_CAP = 256
ENERGY_SLACK = 1e-10
MAX_HALVINGS = 20
# the real-axis stability interval of classical RK4 is about [-2.785, 0]
RK4_STABILITY = 2.5
RK4_MAX_SUBSTEPS = 4096
# below this many cells the rk4 oracle applies the linear operator as a dense
# matrix, which is cheaper than two transforms per stage
RK4_DENSE_CELLS = 512


@dataclass(frozen=True)
class StepperConfig:
    scheme: str = "imex1"
    dt: float = 1e-3
    T: float = 1.0
    snapshot_stride: int = 1
    energy_guard: bool | None = None  # None: on for gradient-flow variants

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise StepperError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise StepperError("dt must be positive")
        if not self.T >= self.dt * (1 - 1e-12):
            raise StepperError("T must be at least dt")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise StepperError("snapshot_stride must be an integer >= 1")

    @property
    def nsteps(self) -> int:
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    def guard_for(self, spec: ModelSpec) -> bool:
        return spec.is_gradient_flow if self.energy_guard is None else bool(self.energy_guard)

    def effective_stride(self) -> int:
        return max(int(self.snapshot_stride), math.ceil(self.nsteps / SNAPSHOT_CAP))


@dataclass
class Trajectory:
    times: list[float]
    fields: list[Field]
    energy_series: list[EnergyReport]
    dt_history: list[float]
    dissipation_residual: list[float]
    rate_sq: list[float]  # ||(u_{n+1} - u_n)/dt||^2 per accepted step

    @property
    def domain(self):
        return self.fields[0].domain

    @property
    def final(self) -> Field:
        return self.fields[-1]

    def energies(self) -> np.ndarray:
        return np.array([e.total for e in self.energy_series])


@dataclass
class _State:
    t: float
    c: np.ndarray
    u: np.ndarray
    ev: Evaluation
    f_prev: np.ndarray | None = None  # spectral F at the previous step (imex2)
    dt_prev: float | None = None


class Integrator:
    """Steps a :class:`Model` with a fixed scheme."""

    def __init__(self, model: Model, scheme: str):
        if scheme not in SCHEMES:
            raise StepperError(f"unknown scheme {scheme!r}")
        self.model = model
        self.scheme = scheme
        self.mu = model.symbol
        self.mu_max = float(np.max(self.mu))
        self.dense = None
        if scheme == "rk4-explicit" and model.domain.cell_count <= RK4_DENSE_CELLS:
            n = model.domain.cell_count
            eye = np.eye(n).reshape((n,) + model.domain.shape)
            cols = [idct(-self.mu * dct(e)).ravel() for e in eye]
            self.dense = np.array(cols).T

    def state(self, u: np.ndarray, t: float = 0.0) -> _State:
        c = dct(u)
        return _State(t, c, u, self.model.evaluate(u, c))

    def advance(self, s: _State, dt: float) -> _State:
        f = dct(s.ev.rhs)
        if self.scheme == "imex1":
            c = (s.c + dt * f) / (1.0 + dt * self.mu)
        elif self.scheme == "imex2":
            if s.f_prev is None:
                fx = f
            else:
                w = dt / s.dt_prev
                fx = (1 + 0.5 * w) * f - 0.5 * w * s.f_prev
            c = ((1.0 - 0.5 * dt * self.mu) * s.c + dt * fx) / (1.0 + 0.5 * dt * self.mu)
        else:
            u = self._rk4(s.u, s.ev.rhs, dt)
            c = dct(u)
            return _State(s.t + dt, c, u, self.model.evaluate(u, c), f, dt)
        u = idct(c)
        return _State(s.t + dt, c, u, self.model.evaluate(u, c), f, dt)

    def _rk4(self, u: np.ndarray, f0: np.ndarray, dt: float) -> np.ndarray:
        m = max(1, math.ceil(dt * self.mu_max / RK4_STABILITY))
        if m > RK4_MAX_SUBSTEPS:
            raise StepperError(
                f"rk4-explicit needs {m} substeps per step (dt*max mu = {dt * self.mu_max:.3g}); "
                "reduce dt or the grid size"
            )
        h = dt / m
        shape = u.shape
        force = self.model.force
        if self.dense is not None:
            A = self.dense

            def linear(v):
                return (A @ v.ravel()).reshape(shape)
        else:
            mu = self.mu

            def linear(v):
                return idct(-mu * dct(v))

        def g(v, fv=None):
            return linear(v) + (force(v) if fv is None else fv)

        for i in range(m):
            k1 = g(u, f0 if i == 0 else None)
            k2 = g(u + 0.5 * h * k1)
            k3 = g(u + 0.5 * h * k2)
            k4 = g(u + h * k3)
            u = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return u


def step(spec: ModelSpec, kernels: KernelOps | None, u: Field, dt: float, scheme: str = "imex1") -> Field:
    """One step from u with no history (imex2 then reduces to CN with F(u))."""
    if not dt > 0:
        raise StepperError("dt must be positive")
    integ = Integrator(Model(spec, u.domain, kernels), scheme)
    with np.errstate(over="ignore", invalid="ignore"):
        new = integ.advance(integ.state(u.values), dt)
    if not np.all(np.isfinite(new.u)):
        raise NonFinite("non-finite value after one step", step=1, time=dt)
    return Field(u.domain, new.u)


def integrate(spec: ModelSpec, kernels: KernelOps | None, u0: Field, config: StepperConfig) -> Trajectory:
    """Integrate from u0 over [0, T], recording snapshots and energies."""
    model = Model(spec, u0.domain, kernels)
    integ = Integrator(model, config.scheme)
    guard = config.guard_for(spec)
    w = u0.domain.weight
    stride = config.effective_stride()
    n = config.nsteps

    s = integ.state(u0.values.copy())
    traj = Trajectory([0.0], [u0], [model.report(s.u, 0.0, s.ev)], [], [], [])

    def accept(old: _State, new: _State, dt: float, step_no: int):
        if not (np.all(np.isfinite(new.u)) and math.isfinite(new.ev.total)):
            raise NonFinite(f"non-finite state at step {step_no}, t = {new.t:.6g}", step=step_no, time=new.t)
        if guard:
            e0 = old.ev.total
            return new.ev.total <= e0 + ENERGY_SLACK * (1 + abs(e0))
        return True

    def record(old: _State, new: _State, dt: float):
        rate = float(np.sum((new.u - old.u) ** 2)) * w / dt**2
        traj.dt_history.append(dt)
        traj.rate_sq.append(rate)
        traj.dissipation_residual.append(abs((new.ev.total - old.ev.total) / dt + rate))
        traj.energy_series.append(model.report(new.u, new.t, new.ev))

    def guarded(st: _State, dt: float, depth: int, step_no: int) -> _State:
        new = integ.advance(st, dt)
        if accept(st, new, dt, step_no):
            record(st, new, dt)
            return new
        if depth >= MAX_HALVINGS:
            raise Stalled(
                f"energy increase persists after {MAX_HALVINGS} step halvings at t = {st.t:.6g}",
                step=step_no,
                time=st.t,
            )
        half = guarded(st, 0.5 * dt, depth + 1, step_no)
        return guarded(half, 0.5 * dt, depth + 1, step_no)

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n + 1):
            dt = config.dt if k < n else config.T - (n - 1) * config.dt
            s = guarded(s, dt, 0, k)
            if k % stride == 0 or k == n:
                traj.times.append(s.t)
                traj.fields.append(Field(u0.domain, s.u))
    return traj


def export(traj: Trajectory, directory) -> Path:
    """Write snapshots as binary field files plus ``index.json``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, f in enumerate(traj.fields):
        name = f"snapshot_{i:05d}.shnl"
        write_field(out / name, f)
        names.append(name)
    index = {
        "times": traj.times,
        "snapshots": names,
        "energy_series": [e.as_dict() for e in traj.energy_series],
        "dt_history": traj.dt_history,
        "dissipation_residual": traj.dissipation_residual,
    }
    (out / "index.json").write_text(json.dumps(index, indent=1))
    return out
