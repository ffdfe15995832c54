import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shnl.convolution import (
    approx_identity_error,
    contraction_gap,
    convolve,
    make_operator,
)
from shnl.domain import Field, build_domain, inner, lp_norm
from shnl.errors import DomainError, KernelError
from shnl.kernels import KernelSpec, sample_kernel


def naive_convolution(kernel, phi):
    """O(N^2) double loop over cell pairs; independent of both production routes."""
    dom = kernel.domain
    m = kernel.half_width
    w = dom.weight
    out = np.zeros(dom.shape)
    cells = list(itertools.product(*[range(n) for n in dom.sizes]))
    for i in cells:
        acc = 0.0
        for j in cells:
            off = [a - b for a, b in zip(i, j)]
            if any(abs(o) > mi for o, mi in zip(off, m)):
                continue
            acc += kernel.samples[tuple(o + mi for o, mi in zip(off, m))] * phi[j]
        out[i] = acc * w
    return out


def test_tophat_on_unit_interval():
    dom = build_domain(1, [1.0], [100])
    op = make_operator(sample_kernel(KernelSpec("tophat"), 0.1, dom))
    x = dom.axes()[0]
    out = convolve(op, Field(dom, np.ones(100))).values
    interior = (x >= 0.1) & (x <= 0.9)
    np.testing.assert_allclose(out[interior], 1.0, rtol=0, atol=1e-14)
    left = x < 0.1
    np.testing.assert_allclose(out[left], (x[left] + 0.1) / 0.2, rtol=0, atol=1e-13)
    right = x > 0.9
    np.testing.assert_allclose(out[right], (1 - x[right] + 0.1) / 0.2, rtol=0, atol=1e-13)


@pytest.mark.parametrize("method", ["direct", "fft-zeropad"])
def test_zero_in_zero_out(method):
    dom = build_domain(1, [2.0], [64])
    op = make_operator(sample_kernel(KernelSpec("triangle"), 0.2, dom), method)
    assert np.all(convolve(op, dom.zeros()).values == 0.0)


def test_gaussian_multiplier_on_cosine():
    dom = build_domain(1, [math.pi], [512])
    eps = 0.05
    op = make_operator(sample_kernel(KernelSpec("gaussian"), eps, dom))
    x = dom.axes()[0]
    out = convolve(op, Field(dom, np.cos(2 * x))).values
    i = int(np.argmin(np.abs(x - math.pi / 2)))
    expected = math.exp(-4 * eps**2 / 2) * math.cos(2 * x[i])
    assert abs(out[i] - expected) <= 1e-4


def test_domain_mismatch():
    a = build_domain(1, [1.0], [32])
    b = build_domain(1, [2.0], [32])
    op = make_operator(sample_kernel(KernelSpec("gaussian"), 0.1, a))
    with pytest.raises(DomainError):
        convolve(op, b.zeros())


def test_boundary_contributions_are_zero_extension():
    # a delta in the first cell spreads only into the domain; nothing wraps to
    # the far end and nothing is reflected back
    dom = build_domain(1, [1.0], [64])
    dk = sample_kernel(KernelSpec("tophat"), 0.1, dom)
    for method in ("direct", "fft-zeropad"):
        op = make_operator(dk, method)
        phi = np.zeros(64)
        phi[0] = 1.0
        out = op.apply(phi)
        m = dk.half_width[0]
        np.testing.assert_allclose(out[: m + 1], dk.samples[m:] * dom.weight, atol=1e-15)
        assert np.all(np.abs(out[m + 1 :]) <= 1e-16)


@pytest.mark.parametrize("n", [8, 16, 33, 64])
@pytest.mark.parametrize("family", ["gaussian", "tophat", "triangle", "truncated-exponential"])
def test_methods_agree_1d(n, family):
    rng = np.random.default_rng(n)
    dom = build_domain(1, [1.0], [n])
    dk = sample_kernel(KernelSpec(family), 2.5 / n, dom)
    phi = rng.standard_normal(n)
    ref = naive_convolution(dk, phi)
    for method in ("direct", "fft-zeropad"):
        out = make_operator(dk, method).apply(phi)
        assert np.linalg.norm(out - ref) <= 1e-10 * np.linalg.norm(ref)


@pytest.mark.parametrize("shape", [(12, 10), (32, 32)])
def test_methods_agree_2d(shape):
    rng = np.random.default_rng(0)
    dom = build_domain(2, [1.0, 1.2], shape)
    dk = sample_kernel(KernelSpec("gaussian"), 0.3 / 8, dom)
    phi = rng.standard_normal(shape)
    d = make_operator(dk, "direct").apply(phi)
    f = make_operator(dk, "fft-zeropad").apply(phi)
    assert np.linalg.norm(d - f) <= 1e-10 * np.linalg.norm(d)
    if shape == (12, 10):
        ref = naive_convolution(dk, phi)
        assert np.linalg.norm(d - ref) <= 1e-12 * np.linalg.norm(ref)


def test_methods_agree_3d():
    rng = np.random.default_rng(1)
    dom = build_domain(3, [1.0, 1.0, 1.0], [8, 9, 10])
    dk = sample_kernel(KernelSpec("triangle"), 0.25, dom)
    phi = rng.standard_normal(dom.shape)
    d = make_operator(dk, "direct").apply(phi)
    f = make_operator(dk, "fft-zeropad").apply(phi)
    ref = naive_convolution(dk, phi)
    assert np.linalg.norm(d - ref) <= 1e-12 * np.linalg.norm(ref)
    assert np.linalg.norm(f - ref) <= 1e-10 * np.linalg.norm(ref)


def test_default_method_switch():
    small = build_domain(1, [1.0], [32])
    big = build_domain(1, [1.0], [64])
    assert make_operator(sample_kernel(KernelSpec(), 0.1, small)).method == "direct"
    assert make_operator(sample_kernel(KernelSpec(), 0.1, big)).method == "fft-zeropad"
    with pytest.raises(KernelError):
        make_operator(sample_kernel(KernelSpec(), 0.1, big), "periodic")


def test_contraction_constant_field_strict():
    dom = build_domain(1, [1.0], [128])
    op = make_operator(sample_kernel(KernelSpec("gaussian"), 0.05, dom))
    assert contraction_gap(op, Field(dom, np.ones(128)), 2) < 0


def test_contraction_zero_field():
    dom = build_domain(1, [1.0], [128])
    op = make_operator(sample_kernel(KernelSpec("gaussian"), 0.05, dom))
    assert contraction_gap(op, dom.zeros(), 2) == 0.0


def test_contraction_rejects_q_kernels():
    dom = build_domain(1, [1.0], [64])
    op = make_operator(sample_kernel(KernelSpec(amplitude=0.5), 0.1, dom, role="Q"))
    with pytest.raises(KernelError):
        contraction_gap(op, dom.zeros(), 2)


def test_contraction_random_fields_against_oracle():
    rng = np.random.default_rng(7)
    dom = build_domain(1, [1.0], [48])
    specs = [KernelSpec(f) for f in ("gaussian", "tophat", "triangle", "truncated-exponential")]
    for trial in range(100):
        dk = sample_kernel(specs[trial % 4], rng.uniform(0.05, 0.3), dom)
        op = make_operator(dk, "fft-zeropad")
        phi = rng.standard_normal(48) * rng.uniform(0.1, 10)
        ref = naive_convolution(dk, phi)
        for s in (1, 2, 4, math.inf):
            norm = lp_norm(phi, dom.weight, s)
            gap = contraction_gap(op, Field(dom, phi), s)
            oracle_gap = lp_norm(ref, dom.weight, s) - norm
            assert gap <= 1e-12 * norm
            assert oracle_gap <= 1e-12 * norm
            assert abs(gap - oracle_gap) <= 1e-11 * norm


def test_approx_identity_constant_interior():
    dom = build_domain(1, [4.0], [256])
    eps = 0.1
    op = make_operator(sample_kernel(KernelSpec("gaussian"), eps, dom))
    err = approx_identity_error(op, Field(dom, np.full(256, 3.0)), 2, margin=8 * eps)
    assert err <= 1e-12


def smooth_bump(dom, center, width):
    x = dom.axes()[0]
    return np.exp(-0.5 * ((x - center) / width) ** 2)


def test_approx_identity_second_order():
    dom = build_domain(1, [12.0], [1024])
    phi = Field(dom, smooth_bump(dom, 6.0, 1.5))
    errs = []
    for eps in (0.4, 0.2, 0.1, 0.05):
        op = make_operator(sample_kernel(KernelSpec("gaussian"), eps, dom))
        errs.append(approx_identity_error(op, phi, 2, margin=3.2))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.6 <= r <= 4.4 for r in ratios), ratios


@pytest.mark.parametrize("s", [1, 2, 4])
def test_approx_identity_step(s):
    # exact: tophat * step - step is a pair of ramps of height 1/2 and width
    # eps, so ||.||_s = (2 eps / ((s + 1) 2^s))^(1/s)
    dom = build_domain(1, [2.0], [4000])
    x = dom.axes()[0]
    phi = Field(dom, (x >= 1.0).astype(float))
    errs = []
    for eps in (0.2, 0.1):
        op = make_operator(sample_kernel(KernelSpec("tophat"), eps, dom))
        err = approx_identity_error(op, phi, s, margin=0.25)
        exact = (2 * eps / ((s + 1) * 2**s)) ** (1 / s)
        assert err > 0
        assert err == pytest.approx(exact, rel=0.02)
        errs.append(err)
    assert math.log2(errs[0] / errs[1]) == pytest.approx(1 / s, abs=0.05)


def test_self_adjoint_and_positive():
    rng = np.random.default_rng(11)
    for dim, shape in ((1, (96,)), (2, (24, 20))):
        dom = build_domain(dim, [1.0] * dim, shape)
        op = make_operator(sample_kernel(KernelSpec("gaussian"), 0.06, dom), "fft-zeropad")
        for _ in range(10):
            a = Field(dom, rng.standard_normal(shape))
            b = Field(dom, rng.standard_normal(shape))
            lhs = inner(convolve(op, a), b)
            rhs = inner(a, convolve(op, b))
            assert abs(lhs - rhs) <= 1e-10 * math.sqrt(inner(a, a) * inner(b, b))
            pos = Field(dom, np.abs(a.values))
            assert np.min(convolve(op, pos).values) >= -1e-14


def test_monotone_approximation():
    dom = build_domain(1, [2 * math.pi], [512])
    x = dom.axes()[0]
    phi = Field(dom, np.cos(x) + 0.3 * np.cos(3 * x))
    errs = []
    for eps in (0.4, 0.2, 0.1, 0.05):
        op = make_operator(sample_kernel(KernelSpec("gaussian"), eps, dom))
        errs.append(approx_identity_error(op, phi, 2))
    assert all(a >= b for a, b in zip(errs, errs[1:]))


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(8, 64),
    eps_cells=st.floats(2.0, 6.0),
    family=st.sampled_from(["gaussian", "tophat", "triangle", "truncated-exponential"]),
    seed=st.integers(0, 2**32 - 1),
)
def test_method_equivalence_property(n, eps_cells, family, seed):
    dom = build_domain(1, [1.0], [n])
    spec = KernelSpec(family)
    eps = eps_cells * dom.spacing[0] / spec.radius * 2
    dk = sample_kernel(spec, eps, dom)
    phi = np.random.default_rng(seed).standard_normal(n)
    d = make_operator(dk, "direct").apply(phi)
    f = make_operator(dk, "fft-zeropad").apply(phi)
    assert np.linalg.norm(d - f) <= 1e-10 * max(np.linalg.norm(d), 1e-300)
