import math

import numpy as np
import pytest
from scipy import integrate

from hgconj.conjugacy import (build_global, build_local, global_H, global_h, inverse_H, local_H,
                              simplified_h)
from hgconj.cutoff import CutoffSpec
from hgconj.errors import ConfigError, NonDecay, NotInRegionOfAttraction, NotStableSpectrum
from hgconj.field_model import nonlinear_part, random_hyperbolic_field
from hgconj.flow_engine import certify_dominance_ball, flow
from hgconj.spectral import expm
from hgconj.verification import check_conjugacy, fd_jacobian

from conftest import linear_field


def _bump(r, M, eps):
    # independent copy of the C-infinity radial cutoff
    def g(t):
        return math.exp(-1.0 / t) if t > 0 else 0.0
    u = (M + eps - abs(r)) / eps
    return g(u) / (g(u) + g(1.0 - u))


def cubic_cutoff_factor(M, eps):
    """H_cutoff / H_true for x' = -x + x^3 under the global cutoff form.

    In 1-D both maps conjugate to y' = -y, so they differ by a constant
    c = 1 + int_0^{M+eps} W-hat(u) / (H_true(u) f(u)) du.
    """
    tail, _ = integrate.quad(lambda u: _bump(u, M, eps) ** 3 * u / math.sqrt(1 - u * u),
                             M, M + eps, epsabs=1e-14, epsrel=1e-13)
    return math.sqrt(1 - M * M) - tail


@pytest.fixture(scope="module")
def example1_map(example1):
    return build_local(example1.field, CutoffSpec.none(), stable_direction="forward")


@pytest.fixture(scope="module")
def sin_forward(sin1d):
    return build_global(sin1d.field)


@pytest.fixture(scope="module")
def cubic_forward(cubic1d):
    return build_global(cubic1d.field)


@pytest.fixture(scope="module")
def cubic_cutoff(cubic1d):
    return build_global(cubic1d.field, CutoffSpec.ball(0.5, 0.2))


def test_origin_maps_to_origin(example1_map, sin_forward, cubic_cutoff):
    assert np.array_equal(local_H(example1_map, np.zeros(3)), np.zeros(3))
    assert global_h(sin_forward, [0.0])[0] == 0.0
    assert global_H(cubic_cutoff, [0.0])[0] == 0.0


def test_example1_reference_point(example1_map):
    assert np.allclose(local_H(example1_map, [0.0, 1.0, 0.0]), [1 / 3, 1.0, 0.0], atol=1e-6)


def test_example1_against_closed_form(example1_map, example1):
    rng = np.random.default_rng(5)
    for x in rng.uniform(-1, 1, (10, 3)):
        assert np.allclose(example1_map(x), example1.closed_H(x), atol=1e-6)


def test_example2_threshold_reference(example2):
    ctx = build_local(example2.field, CutoffSpec.threshold(1.0))
    y = local_H(ctx, [1.0, 0.0, 0.5])
    assert np.allclose(y, [1.0, -0.25 * math.log(4.0), 0.5], atol=1e-5)


def test_example2_threshold_continuous_at_zero_product(example2):
    ctx = build_local(example2.field, CutoffSpec.threshold(1.0))
    assert np.allclose(ctx([0.0, 0.3, 0.7]), [0.0, 0.3, 0.7], atol=1e-9)
    # x1 x3^2 = 1e-8: correction 1e-8 ln 1e8 ~ 2e-7
    y = ctx([1e-8, 0.3, 1.0])
    assert abs(y[1] - 0.3) < 3e-7


@pytest.mark.parametrize("direction", ["forward", "backward"])
def test_example2_unmodified_integrals_do_not_decay(example2, direction):
    ctx = build_local(example2.field, CutoffSpec.none(), stable_direction=direction)
    with pytest.raises(NonDecay):
        local_H(ctx, [1.0, 0.0, 0.5])


def test_example2_raw_simplified_forms(example2):
    ctx = build_local(example2.field, CutoffSpec.none())
    for form in ("forward", "backward"):
        with pytest.raises(NonDecay):
            simplified_h(ctx, [1.0, 0.0, 0.5], form)


@pytest.mark.parametrize("x", [1.0, -1.0])
def test_cubic_equilibrium_collapse(cubic1d, x):
    ctx = build_local(cubic1d.field, CutoffSpec.ball(1.2, 0.3))
    assert abs(local_H(ctx, [x])[0]) <= 1e-6


@pytest.mark.parametrize("x", [-0.9, -0.3, 0.3, 0.6, 0.9])
def test_cubic_forward_form_matches_closed_form(cubic_forward, cubic1d, x):
    assert global_H(cubic_forward, [x])[0] == pytest.approx(cubic1d.closed_H([x])[0], abs=1e-6)


@pytest.mark.parametrize("x", [-0.6, 0.05, 0.3, 0.6, 0.9])
def test_cubic_cutoff_form_is_scaled_conjugacy(cubic_cutoff, cubic1d, x):
    # the cutoff form is a conjugacy but is normalized by c != 1
    c = cubic_cutoff_factor(0.5, 0.2)
    assert c == pytest.approx(0.819971384278, abs=1e-11)
    assert global_H(cubic_cutoff, [x])[0] == pytest.approx(c * cubic1d.closed_H([x])[0], abs=1e-6)


def test_cubic_cutoff_form_derivative_at_origin(cubic_cutoff):
    J = fd_jacobian(cubic_cutoff, np.zeros(1), 1e-3)
    assert J[0, 0] == pytest.approx(cubic_cutoff_factor(0.5, 0.2), abs=1e-5)


@pytest.mark.parametrize("x", [0.5, 1.5, 2.5, 3.0])
def test_sin_forward_form_matches_closed_form(sin_forward, sin1d, x):
    assert global_H(sin_forward, [x])[0] == pytest.approx(sin1d.closed_H([x])[0], abs=1e-5)


def test_sin_small_x_expansion(sin_forward):
    assert simplified_h(sin_forward, [0.1], "forward")[0] == pytest.approx(0.1 ** 3 / 12, abs=2e-6)


def test_sin_cutoff_form_is_scaled(sin1d):
    ctx = build_global(sin1d.field, CutoffSpec.ball(1.0, 0.5))
    ratios = [global_H(ctx, [x])[0] / sin1d.closed_H([x])[0] for x in (0.2, 1.2, 2.5)]
    assert np.ptp(ratios) < 1e-6
    assert abs(ratios[0] - 1.0) > 1e-3


def test_linear_system_has_zero_correction():
    f = linear_field([[-1.0, 0.5], [0.0, -2.0]])
    ctx = build_global(f)
    assert np.array_equal(global_h(ctx, [0.3, -0.4]), np.zeros(2))
    loc = build_local(linear_field(np.diag([1.0, -1.0])), CutoffSpec.ball(1.0, 0.5))
    assert np.allclose(loc([0.3, 0.2]), [0.3, 0.2], atol=1e-15)


def test_region_of_attraction_rejection(sin_forward, cubic_cutoff):
    with pytest.raises(NotInRegionOfAttraction):
        global_H(sin_forward, [3.2])
    with pytest.raises(NotInRegionOfAttraction):
        global_H(cubic_cutoff, [1.5])


def test_global_requires_stable_spectrum(example1):
    with pytest.raises(NotStableSpectrum):
        build_global(example1.field)


def test_global_cutoff_must_fit_dominance_ball(cubic1d):
    with pytest.raises(ConfigError):
        build_global(cubic1d.field, CutoffSpec.ball(0.9, 0.3))


def test_inverse_cubic(cubic_forward):
    assert inverse_H(cubic_forward, [0.75])[0] == pytest.approx(0.6, abs=1e-6)
    assert inverse_H(cubic_forward, [0.0])[0] == 0.0
    for y in (-5.0, 2.0):
        assert inverse_H(cubic_forward, [y])[0] == pytest.approx(y / math.sqrt(1 + y * y), abs=1e-6)


def test_inverse_cutoff_form_roundtrip(cubic_cutoff):
    for x in (-0.95, 0.2, 0.8):
        y = cubic_cutoff([x])
        assert inverse_H(cubic_cutoff, y)[0] == pytest.approx(x, abs=1e-6)


def test_inverse_sin_roundtrip(sin_forward):
    xs = np.random.default_rng(11).uniform(-3.0, 3.0, 20)
    for x in xs:
        assert inverse_H(sin_forward, global_H(sin_forward, [x]))[0] == pytest.approx(x, abs=1e-6)


def test_inverse_local(example1_map):
    y = np.array([0.2, -0.1, 0.15])
    x = inverse_H(example1_map, y)
    assert np.allclose(example1_map(x), y, atol=1e-8)


def test_local_conjugacy_on_random_saddles():
    for seed in (3, 4):
        f = random_hyperbolic_field(seed, 3, "saddle")
        ctx = build_local(f, CutoffSpec.ball(0.5, 0.25))
        pts = np.random.default_rng(seed).uniform(-0.3, 0.3, (6, 3))
        rec = check_conjugacy(ctx, f, f.A, pts, [0.25, 0.5, 1.0], restrict_to_ball=0.5)
        assert rec.samples > 0
        assert rec.max_residual <= 1e-4 * (1 + 0.3 * math.sqrt(3))


def test_global_conjugacy_up_to_t5(sin_forward, sin1d):
    for x in (0.5, 2.0, -2.8):
        Hx = sin_forward([x])
        for t in (1.0, 2.5, 5.0):
            y = sin_forward(flow(sin1d.field, [x], t))
            assert y[0] == pytest.approx((expm(sin1d.field.A, t) @ Hx)[0], abs=1e-4)


def test_pde_residual_cutoff_form(cubic_cutoff, cubic1d):
    W = nonlinear_part(cubic1d.field)
    A = cubic1d.field.A
    for x in (-0.8, -0.3, 0.45, 0.65, 0.9):
        xv = np.array([x])
        h = lambda z: global_h(cubic_cutoff, z)  # noqa: E731
        Dh = fd_jacobian(h, xv, 1e-4 * (1 + abs(x)))
        res = A @ h(xv) - W(xv) - Dh @ cubic1d.field(xv)
        assert np.linalg.norm(res) <= 1e-3 * (1 + abs(x))


def test_injectivity_on_sampled_roa(sin_forward):
    xs = np.sort(np.random.default_rng(2).uniform(-3.1, 3.1, 1000))
    ys = np.array([sin_forward([x])[0] for x in xs])
    close_y = np.abs(np.diff(ys)) <= 1e-8
    close_x = np.abs(np.diff(xs)) <= 1e-6
    assert not np.any(close_y & ~close_x)
    assert np.all(np.diff(ys) > 0)


def test_deterministic_evaluation(example1_map):
    x = np.array([0.31, -0.52, 0.77])
    assert example1_map(x).tobytes() == example1_map(x).tobytes()


def test_identity_jacobian_where_normalized(example1_map, sin_forward):
    assert np.abs(fd_jacobian(example1_map, np.zeros(3)) - np.eye(3)).max() <= 1e-5
    assert abs(fd_jacobian(sin_forward, np.zeros(1))[0, 0] - 1.0) <= 1e-5
