"""Convolution over the domain only: (K_eps * phi)(x) = int_Omega K_eps(x - y) phi(y) dy.

The field is extended by zero outside the box (never periodically, never by
reflection), so points within the kernel radius of a face see a mass deficit.
Two evaluation routes are provided: a direct lattice sum, used as the oracle
and on small grids, and a zero-padded FFT linear convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .domain import Field, lp_norm
from .errors import DomainError, KernelError
from .kernels import DiscreteKernel

METHODS = ("direct", "fft-zeropad")
FFT_THRESHOLD = 64


@dataclass(frozen=True)
class ConvolutionOperator:
    kernel: DiscreteKernel
    method: str
    pad_shape: tuple[int, ...] | None = None
    spectrum: np.ndarray | None = field(default=None, repr=False)

    @property
    def domain(self):
        return self.kernel.domain

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Convolve a raw array of shape ``domain.shape``."""
        if self.method == "direct":
            return _direct(self.kernel, values)
        return _fft(self, values)

    def __call__(self, u: Field) -> Field:
        return convolve(self, u)


def make_operator(kernel: DiscreteKernel, method: str | None = None) -> ConvolutionOperator:
    """Build a convolution operator; FFT for grids with >= 64 cells per axis."""
    if method is None:
        method = "fft-zeropad" if min(kernel.domain.sizes) >= FFT_THRESHOLD else "direct"
    if method not in METHODS:
        raise KernelError(f"unknown convolution method {method!r}")
    if method == "direct":
        return ConvolutionOperator(kernel, method)
    dom = kernel.domain
    # linear convolution needs at least n + m points per axis to avoid wrap
    pad = tuple(sfft.next_fast_len(n + m, real=True) for n, m in zip(dom.sizes, kernel.half_width))
    karr = np.zeros(pad)
    src_idx = np.ix_(*[np.arange(-m, m + 1) % p for m, p in zip(kernel.half_width, pad)])
    karr[src_idx] = kernel.samples
    spec = sfft.rfftn(karr) * dom.weight
    spec.setflags(write=False)
    return ConvolutionOperator(kernel, method, pad, spec)


def _direct(kernel: DiscreteKernel, phi: np.ndarray) -> np.ndarray:
    dom = kernel.domain
    w = dom.weight
    m = kernel.half_width
    s = kernel.samples
    if dom.dim == 1:
        full = np.convolve(phi, s)  # length n + 2m
        return full[m[0] : m[0] + dom.sizes[0]] * w
    out = np.zeros(dom.shape)
    for idx in zip(*np.nonzero(s)):
        off = [i - mi for i, mi in zip(idx, m)]
        dst, src = [], []
        for o, n in zip(off, dom.sizes):
            # out[x] += K(o) * phi[x - o]
            if o >= 0:
                dst.append(slice(o, n))
                src.append(slice(0, n - o))
            else:
                dst.append(slice(0, n + o))
                src.append(slice(-o, n))
        out[tuple(dst)] += s[idx] * phi[tuple(src)]
    return out * w


def _fft(op: ConvolutionOperator, phi: np.ndarray) -> np.ndarray:
    dom = op.kernel.domain
    full = sfft.irfftn(sfft.rfftn(phi, s=op.pad_shape) * op.spectrum, s=op.pad_shape)
    return full[tuple(slice(0, n) for n in dom.sizes)]


def convolve(op: ConvolutionOperator, u: Field) -> Field:
    if u.domain != op.domain:
        raise DomainError("kernel and field live on different domains")
    return Field(u.domain, op.apply(u.values))


def contraction_gap(op: ConvolutionOperator, u: Field, s: float) -> float:
    """||K * phi||_s - ||phi||_s, which is <= 0 for unit-mass nonnegative K."""
    if op.kernel.role != "K":
        raise KernelError("the contraction property only holds for K-role kernels")
    if not (s >= 1):
        raise ValueError("s must lie in [1, inf]")
    w = u.domain.weight
    return lp_norm(convolve(op, u).values, w, s) - lp_norm(u.values, w, s)


def approx_identity_error(op: ConvolutionOperator, u: Field, s: float, margin: float | None = None) -> float:
    """||K * phi - phi||_s, optionally restricted to cells >= margin from the faces."""
    if not (1 <= s < math.inf):
        raise ValueError("s must lie in [1, inf)")
    mask = None if margin is None else u.domain.interior_mask(margin)
    diff = convolve(op, u).values - u.values
    return lp_norm(diff, u.domain.weight, s, mask)
