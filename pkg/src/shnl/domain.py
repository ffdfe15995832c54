"""Box domains with cell-centred grids and the Neumann cosine transform.

Every grid function is expanded in the cosine modes

    phi_k(x) = prod_i cos(pi * k_i * x_i / L_i),   0 <= k_i < n_i,

sampled at the cell centres x_j = (j + 1/2) h.  These modes have vanishing
normal derivative (and vanishing normal derivative of their Laplacian) on
the box faces, so both homogeneous Neumann conditions hold identically for
any representable field.  The forward/inverse pair is the orthonormal
DCT-II/DCT-III, hence Parseval holds with constant 1:

    sum_j u_j**2 == sum_k c_k**2.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .errors import DomainError

MIN_CELLS = 8
SNAPSHOT_MAGIC = b"SHNL"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Domain:
    """Uniform cell-centred grid on the box prod_i [0, L_i]."""

    dim: int
    lengths: tuple[float, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise DomainError(f"dim must be 1, 2 or 3, got {self.dim}")
        if len(self.lengths) != self.dim or len(self.sizes) != self.dim:
            raise DomainError("lengths and sizes need one entry per axis")
        for L in self.lengths:
            if not (L > 0 and math.isfinite(L)):
                raise DomainError(f"lengths must be positive, got {L}")
        for n in self.sizes:
            if int(n) != n or n < MIN_CELLS:
                raise DomainError(f"size {n} below minimum of {MIN_CELLS} cells")
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.sizes))

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def weight(self) -> float:
        """Uniform midpoint quadrature weight h_1 * ... * h_d."""
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axes(self) -> list[np.ndarray]:
        """1-D arrays of cell-centre coordinates, one per axis."""
        return [(np.arange(n) + 0.5) * h for n, h in zip(self.sizes, self.spacing)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def wavenumbers(self) -> list[np.ndarray]:
        """Per-axis angular wavenumbers kappa_i = pi k_i / L_i."""
        return [np.pi * np.arange(n) / L for n, L in zip(self.sizes, self.lengths)]

    def interior_mask(self, margin: float) -> np.ndarray:
        """Boolean mask of cells at distance >= margin from every face."""
        mask = np.ones(self.shape, dtype=bool)
        for axis, (x, L) in enumerate(zip(self.axes(), self.lengths)):
            ok = (x >= margin) & (x <= L - margin)
            sl = [np.newaxis] * self.dim
            sl[axis] = slice(None)
            mask &= ok[tuple(sl)]
        return mask

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))

    def field(self, values) -> "Field":
        return Field(self, values)


def build_domain(dim, lengths, sizes) -> Domain:
    return Domain(int(dim), tuple(lengths), tuple(sizes))


@dataclass(frozen=True)
class Field:
    """Real samples on the cells of a :class:`Domain`.

    ``values`` is stored with shape ``domain.shape``; its C-order ravel is the
    row-major flat layout used in snapshot files.
    """

    domain: Domain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.domain.cell_count:
            raise DomainError(
                f"field has {vals.size} values, domain has {self.domain.cell_count} cells"
            )
        vals = vals.reshape(self.domain.shape)
        if not np.all(np.isfinite(vals)):
            raise DomainError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def __add__(self, other):
        return Field(self.domain, self.values + _vals(other, self.domain))

    def __sub__(self, other):
        return Field(self.domain, self.values - _vals(other, self.domain))

    def __mul__(self, a):
        return Field(self.domain, self.values * a)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.domain, -self.values)


def _vals(other, domain):
    if isinstance(other, Field):
        if other.domain != domain:
            raise DomainError("fields live on different domains")
        return other.values
    return other


@dataclass(frozen=True)
class SpectralField:
    """Orthonormal cosine coefficients indexed by k = (k_1, ..., k_d)."""

    domain: Domain
    coeffs: np.ndarray = field(repr=False)

    @property
    def mean(self) -> float:
        """Domain mean recovered from the k = 0 coefficient."""
        return float(self.coeffs.flat[0] / math.sqrt(self.domain.cell_count))


def dct(values: np.ndarray) -> np.ndarray:
    if values.ndim == 1:
        return sfft.dct(values, type=2, norm="ortho")
    return sfft.dctn(values, type=2, norm="ortho")


def idct(coeffs: np.ndarray) -> np.ndarray:
    if coeffs.ndim == 1:
        return sfft.idct(coeffs, type=2, norm="ortho")
    return sfft.idctn(coeffs, type=2, norm="ortho")


def to_spectral(u: Field) -> SpectralField:
    return SpectralField(u.domain, dct(u.values))


def from_spectral(sf: SpectralField) -> Field:
    return Field(sf.domain, idct(sf.coeffs))


def laplacian_symbol(domain: Domain) -> np.ndarray:
    """lambda_k = -sum_i (pi k_i / L_i)^2 on the coefficient grid."""
    lam = np.zeros(domain.shape)
    for axis, kappa in enumerate(domain.wavenumbers()):
        sl = [np.newaxis] * domain.dim
        sl[axis] = slice(None)
        lam = lam - (kappa**2)[tuple(sl)]
    return lam


def biharmonic_symbol(domain: Domain) -> np.ndarray:
    """Symbol (1 + lambda_k)^2 of (I + Laplacian)^2."""
    return (1.0 + laplacian_symbol(domain)) ** 2


def apply_laplacian(u: Field) -> Field:
    return Field(u.domain, idct(laplacian_symbol(u.domain) * dct(u.values)))


def apply_biharmonic_op(u: Field) -> Field:
    """(I + Laplacian)^2 u = u + Delta^2 u + 2 Delta u, computed per mode."""
    return Field(u.domain, idct(biharmonic_symbol(u.domain) * dct(u.values)))


def integrate(u: Field) -> float:
    return float(np.sum(u.values) * u.domain.weight)


def inner(u: Field, v: Field) -> float:
    """Quadrature inner product <u, v>."""
    return float(np.sum(u.values * _vals(v, u.domain)) * u.domain.weight)


def lp_norm(values: np.ndarray, weight: float, s: float, mask=None) -> float:
    """Discrete L^s norm with midpoint weights; ``s = inf`` gives the max."""
    v = np.abs(values if mask is None else values[mask])
    if v.size == 0:
        return 0.0
    if math.isinf(s):
        return float(np.max(v))
    if s == 2:
        return math.sqrt(float(np.sum(v * v)) * weight)
    return float(np.sum(v**s) * weight) ** (1.0 / s)


def spectral_gradient(u: Field) -> list[np.ndarray]:
    """Spectral partial derivatives, one array per axis.

    The derivative of a cosine series is a sine series; it is evaluated on the
    cell centres with a DST-III along the differentiated axis.
    """
    dom = u.domain
    c = dct(u.values)
    grads = []
    for axis in range(dom.dim):
        kappa = dom.wavenumbers()[axis]
        sl = [np.newaxis] * dom.dim
        sl[axis] = slice(None)
        # d/dx_i of the cosine series, still cosine along the other axes
        b = -c * kappa[tuple(sl)]
        # back to physical space along the other axes first
        other = [a for a in range(dom.dim) if a != axis]
        if other:
            b = sfft.idctn(b, type=2, norm="ortho", axes=other)
        n = dom.sizes[axis]
        # orthonormal amplitude of mode k >= 1 is sqrt(2/n)
        b = b * math.sqrt(2.0 / n)
        # DST-III: y_j = (-1)^j x_{n-1} + 2 sum_{m<n-1} x_m sin(pi(2j+1)(m+1)/(2n))
        x = np.zeros_like(b)
        src = [slice(None)] * dom.dim
        dst = [slice(None)] * dom.dim
        src[axis] = slice(1, n)
        dst[axis] = slice(0, n - 1)
        x[tuple(dst)] = 0.5 * b[tuple(src)]
        grads.append(sfft.dst(x, type=3, axis=axis))
    return grads


# -- snapshot files -------------------------------------------------------


def write_field(path, u: Field) -> None:
    """Write ``u`` in the little-endian SHNL snapshot format."""
    dom = u.domain
    header = SNAPSHOT_MAGIC + struct.pack("<II", SNAPSHOT_VERSION, dom.dim)
    header += struct.pack(f"<{dom.dim}I", *dom.sizes)
    header += struct.pack(f"<{dom.dim}d", *dom.lengths)
    Path(path).write_bytes(header + u.flat.astype("<f8").tobytes())


def read_field(path) -> Field:
    data = Path(path).read_bytes()
    if data[:4] != SNAPSHOT_MAGIC:
        raise DomainError(f"{path}: not an SHNL snapshot")
    version, dim = struct.unpack_from("<II", data, 4)
    if version != SNAPSHOT_VERSION:
        raise DomainError(f"{path}: unsupported snapshot version {version}")
    off = 12
    sizes = struct.unpack_from(f"<{dim}I", data, off)
    off += 4 * dim
    lengths = struct.unpack_from(f"<{dim}d", data, off)
    off += 8 * dim
    dom = build_domain(dim, lengths, sizes)
    values = np.frombuffer(data, dtype="<f8", offset=off)
    if values.size != dom.cell_count:
        raise DomainError(f"{path}: expected {dom.cell_count} values, found {values.size}")
    return Field(dom, values.astype(float))
