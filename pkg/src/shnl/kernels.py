"""Kernel profiles, their eps-scaled grid samples and admissibility checks.

All closed-form profiles are radial, P(|x|), with unit mass over R^d.  A
kernel spec rescales them as

    K(x) = amplitude * base_scale**-d * P(|x| / base_scale)

and the eps family is K_eps(x) = eps**-d * K(x / eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate as sint
from scipy import special

from .domain import Domain
from .errors import KernelError, KernelFileError, NegativeSample, UnderResolved

FAMILIES = ("gaussian", "tophat", "triangle", "truncated-exponential", "table")
SIGNS = ("nonnegative", "signed")

# support radius of each closed-form profile, in base units
SUPPORT = {
    "gaussian": 8.0,
    "tophat": 1.0,
    "triangle": 1.0,
    "truncated-exponential": 16.0,
}

_EDGE_TOL = 1e-9


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere S^{d-1} (2 for d = 1)."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    base_scale: float = 1.0
    sign: str = "nonnegative"
    amplitude: float = 1.0
    path: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}")
        if self.sign not in SIGNS:
            raise KernelError(f"sign must be one of {SIGNS}, got {self.sign!r}")
        if not self.base_scale > 0:
            raise KernelError("base_scale must be positive")
        if self.family == "table" and not self.path:
            raise KernelError("table kernels need a sample file path")

    @property
    def radius(self) -> float:
        """Support radius of K (before eps scaling), in length units."""
        if self.family == "table":
            return load_table(self.path).radius * self.base_scale
        return SUPPORT[self.family] * self.base_scale

    def profile(self, rho, dim: int) -> np.ndarray:
        """Unscaled radial profile P at rho = |x| / base_scale."""
        rho = np.asarray(rho, dtype=float)
        if self.family == "gaussian":
            out = (2 * math.pi) ** (-dim / 2) * np.exp(-0.5 * rho**2)
            out[rho > SUPPORT["gaussian"]] = 0.0
            return out
        if self.family == "tophat":
            h = 1.0 / ball_volume(dim)
            out = np.where(rho < 1.0, h, 0.0)
            # discontinuity sampled at the mean of its one-sided limits
            out[np.abs(rho - 1.0) <= _EDGE_TOL] = 0.5 * h
            return out
        if self.family == "triangle":
            c = dim * (dim + 1) / sphere_area(dim)
            return c * np.clip(1.0 - rho, 0.0, None)
        if self.family == "truncated-exponential":
            # normalised over the truncated ball, not over R^d
            R = SUPPORT["truncated-exponential"]
            c = 1.0 / (sphere_area(dim) * math.gamma(dim) * special.gammainc(dim, R))
            out = c * np.exp(-rho)
            out[rho > SUPPORT["truncated-exponential"]] = 0.0
            return out
        return load_table(self.path).evaluate(rho)

    def __call__(self, x_norm, dim: int) -> np.ndarray:
        """K(x) evaluated at |x| = x_norm."""
        b = self.base_scale
        return self.amplitude * b**-dim * self.profile(np.asarray(x_norm) / b, dim)

    def scaled(self, x_norm, eps: float, dim: int) -> np.ndarray:
        """K_eps(x) = eps^-d K(x / eps)."""
        return eps**-dim * self(np.asarray(x_norm) / eps, dim)

    def mass(self, dim: int) -> float:
        """Continuum mass of K over R^d by radial quadrature."""
        if self.family == "table":
            return self.amplitude * load_table(self.path).mass(dim)
        R = SUPPORT[self.family]
        area = sphere_area(dim)

        def integrand(r):
            return area * r ** (dim - 1) * float(self.profile(np.array([r]), dim)[0])

        val, _ = sint.quad(integrand, 0.0, R, limit=200, epsabs=1e-14, epsrel=1e-13)
        return self.amplitude * val


@dataclass(frozen=True)
class TableProfile:
    offsets: np.ndarray
    values: np.ndarray
    even: bool

    @property
    def radius(self) -> float:
        return float(np.max(np.abs(self.offsets)))

    def _half(self, rho):
        x, v = self.offsets, self.values
        right = np.interp(rho, x, v, left=0.0, right=0.0)
        if x[0] >= 0:
            return right
        left = np.interp(-rho, x, v, left=0.0, right=0.0)
        return 0.5 * (right + left)

    def evaluate(self, rho) -> np.ndarray:
        rho = np.abs(np.asarray(rho, dtype=float))
        out = self._half(rho)
        if self.offsets[0] > 0:
            # nothing tabulated between 0 and the first offset
            out = np.where(rho < self.offsets[0], self.values[0], out)
        return out

    def mass(self, dim: int) -> float:
        # piecewise linear in rho, so Gauss-Legendre with 3 nodes per segment
        # integrates rho^(d-1) P(rho) exactly
        knots = np.unique(np.concatenate([[0.0], np.abs(self.offsets)]))
        g, gw = np.polynomial.legendre.leggauss(3)
        total = 0.0
        for a, b in zip(knots[:-1], knots[1:]):
            r = 0.5 * (b - a) * g + 0.5 * (b + a)
            total += 0.5 * (b - a) * float(np.sum(gw * r ** (dim - 1) * self.evaluate(r)))
        return sphere_area(dim) * total


@lru_cache(maxsize=32)
def load_table(path) -> TableProfile:
    """Read a two-column (offset, value) kernel table."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise KernelFileError(f"cannot read kernel table {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise KernelFileError(f"{path}:{lineno}: expected two columns")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise KernelFileError(f"{path}:{lineno}: {exc}") from exc
    if len(rows) < 2:
        raise KernelFileError(f"{path}: need at least two samples")
    arr = np.array(rows)
    x, v = arr[:, 0], arr[:, 1]
    if np.any(np.diff(x) <= 0):
        raise KernelFileError(f"{path}: offsets must be strictly increasing")
    even = True
    if x[0] < 0:
        neg = np.interp(-x, x, v, left=0.0, right=0.0)
        even = bool(np.allclose(neg, v, rtol=1e-12, atol=1e-14))
    return TableProfile(x, v, even)


@dataclass(frozen=True)
class DiscreteKernel:
    """Samples of K_eps on the lattice of grid offsets.

    ``samples[m + j]`` holds K_eps(j * h) for the offset multi-index j,
    -m_i <= j_i <= m_i.
    """

    spec: KernelSpec
    domain: Domain
    eps: float
    role: str
    half_width: tuple[int, ...]
    support_radius: float
    samples: np.ndarray = field(repr=False)
    discrete_mass: float
    second_moment: float

    def offset_norms(self) -> np.ndarray:
        return _offset_norms(self.domain, self.half_width)


def _offset_norms(domain: Domain, half_width) -> np.ndarray:
    axes = [np.arange(-m, m + 1) * h for m, h in zip(half_width, domain.spacing)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.sqrt(sum(g**2 for g in grids))


def _fsum_mass(samples, weight):
    return math.fsum(samples.ravel()) * weight


def _renormalize_exact(samples: np.ndarray, weight: float, center) -> np.ndarray:
    """Scale to unit discrete mass, then nudge the centre sample until the
    floating-point mass is exactly 1."""
    samples = samples / _fsum_mass(samples, weight)
    for _ in range(64):
        m = _fsum_mass(samples, weight)
        if m == 1.0:
            return samples
        target = 1.0 / weight - (math.fsum(samples.ravel()) - samples[center])
        if samples[center] == target:
            step = np.inf if m < 1.0 else -np.inf
            samples[center] = np.nextafter(samples[center], step)
        else:
            samples[center] = target
    raise KernelError("could not renormalise kernel to exact unit mass")


def sample_kernel(spec: KernelSpec, eps: float, domain: Domain, role: str = "K") -> DiscreteKernel:
    """Sample K_eps on the grid offsets within its support.

    K-role kernels must be nonnegative and are renormalised so that the
    discrete mass is exactly one.  Q-role kernels are sampled as they are.
    """
    if role not in ("K", "Q"):
        raise KernelError(f"role must be 'K' or 'Q', got {role!r}")
    if not eps > 0:
        raise KernelError("eps must be positive")
    radius = spec.radius * eps
    hmax = max(domain.spacing)
    if radius < 2 * hmax:
        raise UnderResolved(
            f"kernel support radius {radius:.3g} is below two grid cells (2h = {2 * hmax:.3g})"
        )
    half = tuple(
        min(int(math.floor(radius / h * (1 + 1e-12))), n - 1)
        for h, n in zip(domain.spacing, domain.sizes)
    )
    rho = _offset_norms(domain, half)
    samples = spec.scaled(rho, eps, domain.dim)
    samples = np.where(rho <= radius * (1 + 1e-12), samples, 0.0)
    w = domain.weight
    if role == "K":
        if np.any(samples < 0):
            raise NegativeSample("K-role kernel has negative samples")
        center = tuple(half)
        samples = _renormalize_exact(np.array(samples, dtype=float), w, center)
    samples.setflags(write=False)
    return DiscreteKernel(
        spec=spec,
        domain=domain,
        eps=float(eps),
        role=role,
        half_width=half,
        support_radius=radius,
        samples=samples,
        discrete_mass=_fsum_mass(samples, w),
        second_moment=float(np.sum(rho**2 * samples) * w),
    )


@dataclass
class AdmissibilityReport:
    even: bool
    nonnegative: bool
    unit_mass: bool
    mass: float
    messages: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.even and self.nonnegative and self.unit_mass

    def as_dict(self):
        return {
            "even": self.even,
            "nonnegative": self.nonnegative,
            "unit_mass": self.unit_mass,
            "mass": self.mass,
            "passed": self.passed,
            "messages": list(self.messages),
        }


def check_K_admissible(spec: KernelSpec, dim: int = 1) -> AdmissibilityReport:
    """Check evenness, nonnegativity and unit mass of a K profile."""
    msgs = []
    even = True
    if spec.family == "table":
        table = load_table(spec.path)
        even = table.even
        nonneg = bool(np.all(table.values * spec.amplitude >= 0))
    else:
        # radial profiles are even by construction
        nonneg = spec.amplitude >= 0
    if not even:
        msgs.append("table is not symmetric about 0")
    if not nonneg:
        msgs.append("kernel takes negative values")
    mass = spec.mass(dim)
    unit = abs(mass - 1.0) <= 1e-8
    if not unit:
        msgs.append(f"mass is {mass:.12g}, expected 1")
    return AdmissibilityReport(even, nonneg, unit, mass, msgs)


@dataclass
class DominationReport:
    passed: bool
    worst_margin: float
    worst_offset: float
    status: str

    def as_dict(self):
        return {
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "worst_offset": self.worst_offset,
            "status": self.status,
        }


def check_Q_dominated(qspec: KernelSpec, kspec: KernelSpec, eps: float, domain: Domain) -> DominationReport:
    """Check |Q_eps| <= K_eps at every lattice offset.

    This certifies the sufficient condition for the Q-energy bound; when it
    fails the bound is reported as unverified rather than false.
    """
    radius = max(qspec.radius, kspec.radius) * eps
    for spec in (qspec, kspec):
        if spec.radius * eps < 2 * max(domain.spacing):
            raise UnderResolved(f"{spec.family} kernel unresolved at eps={eps}")
    half = tuple(
        min(int(math.floor(radius / h * (1 + 1e-12))), n - 1)
        for h, n in zip(domain.spacing, domain.sizes)
    )
    rho = _offset_norms(domain, half)
    margin = kspec.scaled(rho, eps, domain.dim) - np.abs(qspec.scaled(rho, eps, domain.dim))
    idx = np.unravel_index(int(np.argmin(margin)), margin.shape)
    worst = float(margin[idx])
    passed = worst >= 0.0
    return DominationReport(
        passed=passed,
        worst_margin=worst,
        worst_offset=float(rho[idx]),
        status="certified" if passed else "unverified",
    )
