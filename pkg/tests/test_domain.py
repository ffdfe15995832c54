import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shnl.domain import (
    Domain,
    Field,
    SpectralField,
    apply_biharmonic_op,
    apply_laplacian,
    build_domain,
    from_spectral,
    inner,
    integrate,
    laplacian_symbol,
    read_field,
    spectral_gradient,
    to_spectral,
    write_field,
)
from shnl.errors import DomainError


def cosine_sum_forward(u):
    """Direct O(n^2) orthonormal DCT-II on a 1-D array."""
    n = u.size
    c = np.zeros(n)
    for k in range(n):
        a = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        for j in range(n):
            c[k] += a * u[j] * math.cos(math.pi * k * (j + 0.5) / n)
    return c


def cosine_sum_inverse(c):
    n = c.size
    u = np.zeros(n)
    for j in range(n):
        for k in range(n):
            a = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
            u[j] += a * c[k] * math.cos(math.pi * k * (j + 0.5) / n)
    return u


def random_smooth(dom, rng, cutoff=6):
    c = np.zeros(dom.shape)
    sl = tuple(slice(0, cutoff) for _ in dom.shape)
    c[sl] = rng.standard_normal(c[sl].shape)
    return from_spectral(SpectralField(dom, c))


def test_build_domain_1d():
    dom = build_domain(1, [math.pi], [64])
    assert dom.spacing == (math.pi / 64,)
    assert dom.weight == pytest.approx(math.pi / 64, rel=0, abs=0)
    x = dom.axes()[0]
    assert x[0] == pytest.approx(0.5 * math.pi / 64)


def test_build_domain_2d():
    dom = build_domain(2, [2 * math.pi, 2 * math.pi], [32, 32])
    assert dom.cell_count == 1024
    assert dom.weight == pytest.approx((2 * math.pi / 32) ** 2)


@pytest.mark.parametrize(
    "args",
    [
        (1, [1.0], [4]),
        (1, [0.0], [16]),
        (1, [-1.0], [16]),
        (4, [1.0] * 4, [8] * 4),
        (0, [], []),
        (2, [1.0], [8, 8]),
    ],
)
def test_build_domain_rejects(args):
    with pytest.raises(DomainError):
        build_domain(*args)


def test_field_length_must_match():
    dom = build_domain(1, [1.0], [16])
    with pytest.raises(DomainError):
        Field(dom, np.zeros(15))
    with pytest.raises(DomainError):
        Field(dom, np.full(16, np.nan))


def test_constant_has_only_dc_mode():
    dom = build_domain(1, [2.0], [32])
    sf = to_spectral(Field(dom, np.full(32, 3.0)))
    assert sf.coeffs[0] == pytest.approx(3.0 * math.sqrt(32))
    assert np.max(np.abs(sf.coeffs[1:])) < 1e-13
    assert sf.mean == pytest.approx(3.0)


def test_first_cosine_is_single_mode():
    L = 3.0
    dom = build_domain(1, [L], [32])
    x = dom.axes()[0]
    sf = to_spectral(Field(dom, np.cos(np.pi * x / L)))
    others = np.delete(sf.coeffs, 1)
    assert abs(sf.coeffs[1]) > 1.0
    assert np.max(np.abs(others)) < 1e-13


def test_transform_matches_direct_cosine_sum():
    rng = np.random.default_rng(0)
    dom = build_domain(1, [1.7], [16])
    u = rng.standard_normal(16)
    c = to_spectral(Field(dom, u)).coeffs
    np.testing.assert_allclose(c, cosine_sum_forward(u), rtol=0, atol=1e-13)
    np.testing.assert_allclose(cosine_sum_inverse(c), u, rtol=0, atol=1e-13)


@pytest.mark.parametrize("shape", [(16,), (16, 12), (8, 10, 12)])
def test_round_trip(shape):
    rng = np.random.default_rng(1)
    dom = build_domain(len(shape), [1.0 + i for i in range(len(shape))], shape)
    u = Field(dom, rng.standard_normal(shape))
    back = from_spectral(to_spectral(u))
    assert np.max(np.abs(back.values - u.values)) <= 1e-12 * np.max(np.abs(u.values))


def test_parseval_constant_one():
    rng = np.random.default_rng(2)
    dom = build_domain(2, [1.0, 2.0], [12, 16])
    u = rng.standard_normal(dom.shape)
    c = to_spectral(Field(dom, u)).coeffs
    assert np.sum(c**2) == pytest.approx(np.sum(u**2), rel=1e-13)


def test_laplacian_symbol_examples():
    lam = laplacian_symbol(build_domain(1, [math.pi], [16]))
    assert lam[0] == 0.0
    assert lam[1] == pytest.approx(-1.0)
    assert np.all(lam <= 0)
    lam2 = laplacian_symbol(build_domain(2, [2 * math.pi, 2 * math.pi], [16, 16]))
    assert lam2[2, 1] == pytest.approx(-1.25)


def test_laplacian_exact_on_every_mode():
    L, n = 2.5, 24
    dom = build_domain(1, [L], [n])
    x = dom.axes()[0]
    for k in range(n):
        mode = np.cos(np.pi * k * x / L)
        lap = apply_laplacian(Field(dom, mode)).values
        expected = -((np.pi * k / L) ** 2) * mode
        assert np.max(np.abs(lap - expected)) <= 1e-12 * (1 + (np.pi * k / L) ** 2)


def test_biharmonic_examples():
    dom = build_domain(1, [math.pi], [64])
    x = dom.axes()[0]
    c = Field(dom, np.full(64, 2.5))
    np.testing.assert_allclose(apply_biharmonic_op(c).values, 2.5, rtol=1e-13)
    # round-off in the top modes is amplified by the largest symbol value
    noise = 1e-14 * float(np.max((1 + laplacian_symbol(dom)) ** 2))
    neutral = apply_biharmonic_op(Field(dom, np.cos(x))).values
    assert np.max(np.abs(neutral)) < noise
    u = np.cos(2 * x)
    np.testing.assert_allclose(apply_biharmonic_op(Field(dom, u)).values, 9 * u, atol=noise)


def test_biharmonic_self_adjoint():
    rng = np.random.default_rng(3)
    dom = build_domain(2, [1.0, 1.5], [16, 20])
    for _ in range(5):
        u = random_smooth(dom, rng)
        v = random_smooth(dom, rng)
        lhs = inner(apply_biharmonic_op(u), v)
        rhs = inner(u, apply_biharmonic_op(v))
        assert abs(lhs - rhs) <= 1e-10 * math.sqrt(inner(u, u) * inner(v, v))


def test_integrate_examples():
    dom = build_domain(1, [math.pi], [64])
    x = dom.axes()[0]
    assert integrate(Field(dom, np.ones(64))) == pytest.approx(math.pi, rel=1e-15)
    assert integrate(dom.zeros()) == 0.0
    assert abs(integrate(Field(dom, np.cos(x)))) <= 1e-12 * math.pi


def _one_sided_derivative_weights(nodes):
    # 5-point one-sided stencil for f'(0), exact on quartics
    V = np.vander(nodes, 5, increasing=True).T
    return np.linalg.solve(V, np.array([0.0, 1.0, 0.0, 0.0, 0.0]))


def test_modes_satisfy_neumann_stencil():
    L, n = math.pi, 1024
    dom = build_domain(1, [L], [n])
    h = dom.spacing[0]
    x = dom.axes()[0]
    w = _one_sided_derivative_weights(x[:5])
    mode = np.cos(np.pi * x / L)
    assert abs(w @ mode[:5]) <= 1e-6 * h**2
    assert abs(w @ mode[::-1][:5]) <= 1e-6 * h**2


@pytest.mark.parametrize("k", [1, 2, 3])
def test_neumann_stencil_residual_is_truncation_error(k):
    # one-sided residual on a Neumann mode decays like h^5 (pure truncation)
    res = []
    for n in (128, 256):
        dom = build_domain(1, [math.pi], [n])
        x = dom.axes()[0]
        w = _one_sided_derivative_weights(x[:5])
        res.append(abs(w @ np.cos(k * x)[:5]))
    assert 4.5 < math.log2(res[0] / res[1]) < 5.5


def test_spectral_gradient_matches_analytic():
    L = (2.0, 3.0)
    dom = build_domain(2, L, [24, 20])
    X, Y = dom.mesh()
    u = np.cos(np.pi * 3 * X / L[0]) * np.cos(np.pi * 2 * Y / L[1]) + 0.5 * np.cos(np.pi * Y / L[1])
    gx, gy = spectral_gradient(Field(dom, u))
    ex = -(np.pi * 3 / L[0]) * np.sin(np.pi * 3 * X / L[0]) * np.cos(np.pi * 2 * Y / L[1])
    ey = -(np.pi * 2 / L[1]) * np.cos(np.pi * 3 * X / L[0]) * np.sin(np.pi * 2 * Y / L[1]) - 0.5 * (
        np.pi / L[1]
    ) * np.sin(np.pi * Y / L[1])
    np.testing.assert_allclose(gx, ex, atol=1e-12)
    np.testing.assert_allclose(gy, ey, atol=1e-12)


def test_gradient_norm_matches_parseval():
    rng = np.random.default_rng(4)
    dom = build_domain(1, [2.0], [32])
    u = Field(dom, rng.standard_normal(32))
    (g,) = spectral_gradient(u)
    direct = np.sum(g**2) * dom.weight
    parseval = -np.sum(laplacian_symbol(dom) * to_spectral(u).coeffs ** 2) * dom.weight
    assert direct == pytest.approx(parseval, rel=1e-12)


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    dom = build_domain(2, [1.0, 2.5], [8, 12])
    u = Field(dom, rng.standard_normal(dom.shape))
    p = tmp_path / "u.shnl"
    write_field(p, u)
    raw = p.read_bytes()
    assert raw[:4] == b"SHNL"
    assert len(raw) == 4 + 4 + 4 + 2 * 4 + 2 * 8 + 96 * 8
    back = read_field(p)
    assert back.domain == dom
    np.testing.assert_array_equal(back.values, u.values)


def test_snapshot_rejects_garbage(tmp_path):
    p = tmp_path / "bad.shnl"
    p.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(DomainError):
        read_field(p)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=8, max_value=40),
    L=st.floats(min_value=0.1, max_value=50.0),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_round_trip_property(n, L, seed):
    dom = Domain(1, (L,), (n,))
    u = Field(dom, np.random.default_rng(seed).standard_normal(n))
    back = from_spectral(to_spectral(u))
    assert np.max(np.abs(back.values - u.values)) <= 1e-12 * np.max(np.abs(u.values))
