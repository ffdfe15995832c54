"""Right-hand sides and energies of the local, one-kernel and two-kernel models.

All variants are written as

    du/dt = -(I + Laplacian)^2 u + F(u),

and :func:`rhs` returns F(u) only; the stiff linear part is left to the
stepper.  The three forms of F are

    local       r u + N(u) - gamma u^3
    one-kernel  r u + N(u) - gamma u (K_eps * u^2)
    two-kernel  r u + sigma [u (Q_eps * u^p) - u (K_eps * u^q)]

with sigma = +1 for the dissipative sign convention and -1 for the signs as
printed in the two-kernel system.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .convolution import ConvolutionOperator, make_operator
from .domain import Domain, Field, biharmonic_symbol, dct
from .errors import DomainError, ModelError
from .kernels import KernelSpec, sample_kernel

VARIANTS = ("local", "one-kernel", "two-kernel")
SIGN_CONVENTIONS = ("dissipative", "as-printed")
MAX_DEGREE = 7


@dataclass(frozen=True)
class Nonlinearity:
    """Polynomial N(u) = sum_j coefficients[j] * u**j."""

    coefficients: tuple[float, ...] = ()
    name: str = "custom"

    def __post_init__(self):
        coeffs = [float(c) for c in self.coefficients]
        while coeffs and coeffs[-1] == 0.0:
            coeffs.pop()
        if len(coeffs) - 1 > MAX_DEGREE:
            raise ModelError(f"nonlinearity degree above {MAX_DEGREE}")
        object.__setattr__(self, "coefficients", tuple(coeffs))

    @classmethod
    def quadratic_cubic(cls, b: float = 1.0) -> "Nonlinearity":
        return cls((0.0, 0.0, b, -1.0), "quadratic-cubic")

    @classmethod
    def cubic_quintic(cls, s: float = 1.0) -> "Nonlinearity":
        return cls((0.0, 0.0, 0.0, s, 0.0, -1.0), "cubic-quintic")

    @classmethod
    def zero(cls) -> "Nonlinearity":
        return cls((), "none")

    @property
    def is_zero(self) -> bool:
        return not self.coefficients

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, u):
        return np.polynomial.polynomial.polyval(u, self.coefficients) if self.coefficients else 0.0 * u

    def potential_coefficients(self) -> np.ndarray:
        """Coefficients of Nhat(x) = -int_0^x N(s) ds, lowest order first."""
        if self.is_zero:
            return np.zeros(1)
        return -np.polynomial.polynomial.polyint(self.coefficients)

    def potential(self, u):
        return np.polynomial.polynomial.polyval(u, self.potential_coefficients())


@dataclass(frozen=True)
class GrowthWitness:
    """Constants with c_N |x|^p / p - C_N <= Nhat(x) for all real x.

    ``c_N`` is the leading growth constant p * (leading coefficient of Nhat),
    which is the supremum of admissible slopes; the inequality is certified
    with ``C_N`` for the strictly smaller slope ``witness_slope``.
    """

    c_N: float
    C_N: float
    p: int
    witness_slope: float


def check_A1(nl: Nonlinearity, slope_fraction: float = 0.5) -> GrowthWitness:
    """Verify the polynomial growth condition on Nhat.

    Raises :class:`ModelError` when Nhat is unbounded below (odd leading
    degree, negative leading coefficient) or grows slower than quartically.
    """
    pot = np.polynomial.polynomial.Polynomial(nl.potential_coefficients())
    p = pot.degree()
    lead = float(pot.coef[-1]) if p > 0 else 0.0
    if p < 4:
        raise ModelError(f"Nhat has degree {p}; growth of degree p >= 4 is required")
    if p % 2 == 1 or lead <= 0:
        raise ModelError("Nhat is unbounded below (odd degree or negative leading coefficient)")
    c_N = p * lead
    slope = slope_fraction * c_N
    gap = pot - np.polynomial.polynomial.Polynomial([0.0] * p + [slope / p])
    # gap has even degree and positive leading coefficient: its minimum sits
    # at a real critical point
    crit = gap.deriv().roots()
    crit = crit[np.abs(crit.imag) <= 1e-9 * (1 + np.abs(crit.real))].real
    lowest = min(float(gap(x)) for x in np.concatenate([crit, [0.0]]))
    return GrowthWitness(c_N=c_N, C_N=max(-lowest, 0.0), p=p, witness_slope=slope)


@dataclass(frozen=True)
class ModelSpec:
    variant: str
    r: float = 0.0
    gamma: float = 0.0
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity.quadratic_cubic)
    p: int = 1
    q: int = 2
    kernel: KernelSpec = field(default_factory=KernelSpec)
    qkernel: KernelSpec = field(default_factory=lambda: KernelSpec(amplitude=0.5))
    eps: float = 0.1
    sign_convention: str = "dissipative"
    override_gamma_check: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise ModelError(f"sign_convention must be one of {SIGN_CONVENTIONS}")
        if self.variant != "local" and not self.eps > 0:
            raise ModelError("eps must be positive")
        if self.variant == "two-kernel":
            if not (1 <= self.p < self.q) or self.q % 2:
                raise ModelError(f"two-kernel model requires p < q and q even (got p={self.p}, q={self.q})")
            if self.kernel.sign != "nonnegative":
                raise ModelError("the K kernel must be nonnegative")
        if self.variant == "one-kernel" and self.kernel.sign != "nonnegative":
            raise ModelError("the K kernel must be nonnegative")

    @property
    def is_gradient_flow(self) -> bool:
        return self.variant in ("local", "one-kernel")

    @property
    def sigma(self) -> float:
        return 1.0 if self.sign_convention == "dissipative" else -1.0

    def with_eps(self, eps: float) -> "ModelSpec":
        return replace(self, eps=float(eps))


def validate(spec: ModelSpec) -> list[str]:
    """Check the admissibility conditions; returns warnings, raises on violations."""
    notes = []
    if spec.variant == "two-kernel" or spec.nonlinearity.is_zero:
        return notes
    w = check_A1(spec.nonlinearity)
    if w.p == 4 and spec.gamma < -w.c_N:
        msg = f"gamma = {spec.gamma!r} violates the growth coupling γ ≥ −c_N if p = 4 (c_N = {w.c_N!r})"
        if not spec.override_gamma_check:
            raise ModelError(msg)
        notes.append(msg + " (overridden)")
        warnings.warn(msg, stacklevel=2)
    return notes


def limit_spec(spec: ModelSpec, dim: int) -> ModelSpec:
    """The local equation that the eps -> 0 limit of ``spec`` solves."""
    if spec.variant == "local":
        return spec
    if spec.variant == "one-kernel":
        return replace(spec, variant="local")
    # K is renormalised to unit mass; Q keeps its continuum mass
    mq = spec.qkernel.mass(dim)
    coeffs = np.zeros(spec.q + 2)
    coeffs[spec.p + 1] += spec.sigma * mq
    coeffs[spec.q + 1] -= spec.sigma * 1.0
    return replace(
        spec,
        variant="local",
        gamma=0.0,
        nonlinearity=Nonlinearity(tuple(coeffs), f"limit(p={spec.p},q={spec.q})"),
    )


@dataclass(frozen=True)
class KernelOps:
    eps: float
    k_op: ConvolutionOperator | None = None
    q_op: ConvolutionOperator | None = None


def build_operators(spec: ModelSpec, domain: Domain, method: str | None = None) -> KernelOps:
    if spec.variant == "local":
        return KernelOps(eps=0.0)
    k_op = make_operator(sample_kernel(spec.kernel, spec.eps, domain, "K"), method)
    q_op = None
    if spec.variant == "two-kernel":
        q_op = make_operator(sample_kernel(spec.qkernel, spec.eps, domain, "Q"), method)
    return KernelOps(spec.eps, k_op, q_op)


@dataclass
class EnergyReport:
    t: float
    local_part: float
    nonlocal_part: float
    total: float
    l4_bound: float
    q_part: float | None = None
    eQ_bound_rhs: float | None = None

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class Evaluation:
    """Everything derived from one state u: F(u) and the energy parts."""

    rhs: np.ndarray
    local_part: float
    nonlocal_part: float
    q_part: float | None
    total: float


class Model:
    """A model bound to a domain and its eps-dependent convolution operators."""

    def __init__(self, spec: ModelSpec, domain: Domain, ops: KernelOps | None = None, method=None):
        self.spec = spec
        self.domain = domain
        self.ops = build_operators(spec, domain, method) if ops is None else ops
        _check_ops(spec, domain, self.ops)
        self.symbol = biharmonic_symbol(domain)
        self.w = domain.weight
        self._n_coef = spec.nonlinearity.coefficients
        self._pot_coef = tuple(spec.nonlinearity.potential_coefficients())

    def quadratic_energy(self, u: np.ndarray, coeffs: np.ndarray | None = None) -> float:
        """int 1/2 (Lap u)^2 - |grad u|^2 + (1 - r)/2 u^2, spectrally."""
        c = dct(u) if coeffs is None else coeffs
        return self.w * (0.5 * float(np.sum(self.symbol * c * c)) - 0.5 * self.spec.r * float(np.sum(u * u)))

    def evaluate(self, u: np.ndarray, coeffs: np.ndarray | None = None) -> Evaluation:
        s, w = self.spec, self.w
        quad = self.quadratic_energy(u, coeffs)
        if s.variant == "two-kernel":
            ck = self.ops.k_op.apply(u**s.q)
            cq = self.ops.q_op.apply(u**s.p)
            coupling = u * cq - u * ck
            rhs = s.r * u + s.sigma * coupling
            u2 = u * u
            ek = 0.25 * float(np.sum(u2 * ck)) * w
            eq = 0.25 * float(np.sum(u2 * cq)) * w
            total = quad + s.sigma * (ek - eq)
            return Evaluation(rhs, quad, ek, eq, total)
        u2 = u * u
        local = quad + float(np.sum(_horner(self._pot_coef, u))) * w
        if s.variant == "local":
            conv = u2
        else:
            conv = self.ops.k_op.apply(u2)
        coupled = u * conv
        rhs = s.r * u + _horner(self._n_coef, u) - s.gamma * coupled
        enl = 0.25 * s.gamma * float(np.sum(u2 * conv)) * w
        return Evaluation(rhs, local, enl, None, local + enl)

    def force(self, u: np.ndarray) -> np.ndarray:
        """F(u) alone, skipping the energy bookkeeping of :meth:`evaluate`."""
        s = self.spec
        if s.variant == "two-kernel":
            return s.r * u + s.sigma * u * (self.ops.q_op.apply(u**s.p) - self.ops.k_op.apply(u**s.q))
        conv = u * u if s.variant == "local" else self.ops.k_op.apply(u * u)
        return s.r * u + _horner(self._n_coef, u) - s.gamma * u * conv

    def report(self, u: np.ndarray, t: float = 0.0, ev: Evaluation | None = None) -> EnergyReport:
        ev = self.evaluate(u) if ev is None else ev
        l4 = 0.25 * abs(self.spec.gamma) * float(np.sum(u**4)) * self.w
        return EnergyReport(t, ev.local_part, ev.nonlocal_part, ev.total, l4, ev.q_part)


def _horner(coeffs, u):
    acc = np.zeros_like(u)
    for a in reversed(coeffs):
        acc = acc * u
        if a:
            acc += a
    return acc


def _check_ops(spec: ModelSpec, domain: Domain, ops: KernelOps):
    if spec.variant == "local":
        return
    if ops.k_op is None or (spec.variant == "two-kernel" and ops.q_op is None):
        raise ModelError("kernel operators missing for a nonlocal model")
    for op in (ops.k_op, ops.q_op):
        if op is None:
            continue
        if op.domain != domain:
            raise DomainError("kernel operator built on a different domain")
        if op.kernel.eps != spec.eps:
            raise ModelError(f"kernel operator built for eps={op.kernel.eps}, model has eps={spec.eps}")


def _model(spec, ops, u: Field) -> Model:
    return Model(spec, u.domain, ops if ops is not None else None)


def rhs(spec: ModelSpec, ops: KernelOps | None, u: Field) -> Field:
    """F(u), the right-hand side without the -(I + Laplacian)^2 u term."""
    return Field(u.domain, _model(spec, ops, u).evaluate(u.values).rhs)


def energy(spec: ModelSpec, ops: KernelOps | None, u: Field, t: float = 0.0) -> EnergyReport:
    return _model(spec, ops, u).report(u.values, t)


def young_constants(p: int, q: int, delta: float = 1.0) -> tuple[float, float]:
    """Constants (C, c) with |E^Q| <= C (1 + E^K) + c ||u||^2 when |Q| <= K.

    C is the sharp C_delta in |a|^p <= C_delta |a|^q + delta, and c = delta/4.
    """
    if not 0 < p < q:
        raise ModelError("need 0 < p < q")
    if not 0 < delta < 2:
        raise ModelError("delta must lie in (0, 2) so that c < 1/2")
    t_p = q * delta / (q - p)  # value of |a|^p at the maximiser of (|a|^p - delta)/|a|^q
    C = (t_p - delta) * t_p ** (-q / p)
    return C, delta / 4


@dataclass
class EQBoundReport:
    lhs: float
    rhs: float
    margin: float
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


def check_eQ_bound(spec: ModelSpec, ops: KernelOps | None, u: Field, C: float, c: float) -> EQBoundReport:
    """Evaluate |E^Q(u)| <= C (1 + E^K(u)) + c ||u||^2 on one field."""
    if spec.variant != "two-kernel":
        raise ModelError("the Q-energy bound applies to the two-kernel model")
    if not 0 < c < 0.5:
        raise ModelError("c must lie in (0, 1/2)")
    ev = _model(spec, ops, u).evaluate(u.values)
    l2sq = float(np.sum(u.values**2)) * u.domain.weight
    lhs = abs(ev.q_part)
    bound = C * (1 + ev.nonlocal_part) + c * l2sq
    return EQBoundReport(lhs, bound, bound - lhs, bool(lhs <= bound))
