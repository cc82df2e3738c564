import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfoldpen.errors import QuadratureFailure, UnknownFunction
from vfoldpen.functions import HIS6_VALUES, eval_regression_function, noise_function, regression_function
from vfoldpen.quadrature import integrate, integrate_cells


def test_sin_at_half():
    assert eval_regression_function("sin", 0.5) == pytest.approx(1.0, abs=1e-15)


def test_heavisine_at_half():
    # 4 sin(2 pi) - sgn(0.2) - sgn(0.22)
    assert eval_regression_function("heavisine", 0.5) == pytest.approx(-2.0, abs=1e-12)


def test_doppler_at_095():
    expected = math.sqrt(0.95 * 0.05) * math.sin(2 * math.pi * 1.05 / 1.0)
    assert eval_regression_function("doppler", 0.95) == pytest.approx(expected, rel=1e-14)
    assert math.sqrt(0.95 * 0.05) == pytest.approx(0.2179, abs=1e-4)


def test_linear_and_sqrt():
    x = np.array([0.0, 0.25, 0.81])
    np.testing.assert_allclose(eval_regression_function("linear", x), x)
    np.testing.assert_allclose(eval_regression_function("sqrt", x), [0.0, 0.5, 0.9])


def test_his6_is_step_function_with_five_jumps():
    values = np.asarray(HIS6_VALUES)
    assert len(values) == 6
    assert abs(values.sum()) < 1e-15
    assert np.all(np.diff(values) != 0)
    mids = (np.arange(6) + 0.5) / 6
    np.testing.assert_array_equal(eval_regression_function("his6", mids), values)
    assert regression_function("his6").jumps == pytest.approx([k / 6 for k in range(1, 6)])


def test_unknown_function():
    with pytest.raises(UnknownFunction):
        eval_regression_function("bogus", 0.1)
    with pytest.raises(UnknownFunction):
        noise_function("bogus")


def test_noise_functions():
    x = np.array([0.1, 0.49, 0.5, 0.9])
    np.testing.assert_allclose(noise_function("const", 0.3)(x), 0.3)
    np.testing.assert_allclose(noise_function("linear")(x), x)
    np.testing.assert_array_equal(noise_function("step")(x), [0, 0, 1, 1])


# --- quadrature -----------------------------------------------------------------


def test_polynomial_exact():
    assert integrate(lambda x: x**5, 0.0, 1.0) == pytest.approx(1 / 6, rel=1e-15)


def test_sin_closed_forms():
    assert integrate(lambda x: np.sin(np.pi * x), 0.0, 0.5) == pytest.approx(1 / math.pi, rel=1e-14)
    assert integrate(lambda x: np.sin(np.pi * x) ** 2, 0.0, 1.0) == pytest.approx(0.5, rel=1e-14)


def test_sqrt_with_singularity_hint():
    assert integrate(np.sqrt, 0.0, 1.0, singular_at=0.0) == pytest.approx(2 / 3, rel=1e-14)
    assert integrate(np.sqrt, 0.0, 1e-3, singular_at=0.0) == pytest.approx(2 / 3 * 1e-3**1.5, rel=1e-13)


def test_sqrt_without_hint_fails_loudly():
    with pytest.raises(QuadratureFailure):
        integrate(np.sqrt, 0.0, 1.0)


def test_jump_splitting():
    step = noise_function("step")
    assert integrate(step, 0.0, 1.0, jumps=step.jumps) == 0.5
    assert integrate(step, 0.3, 0.7, jumps=step.jumps) == pytest.approx(0.2, rel=1e-15)


@pytest.mark.parametrize("a,b", [(0.0, 1.0), (0.0, 1 / 2048), (0.25, 0.3125), (0.9, 1.0)])
def test_doppler_against_mpmath(a, b):
    d = regression_function("doppler")
    mp = mpmath.mp
    with mp.workdps(30):
        f = lambda x: mpmath.sqrt(x * (1 - x)) * mpmath.sin(2 * mpmath.pi * mpmath.mpf("1.05") / (x + mpmath.mpf("0.05")))
        pts = [a + (b - a) * k / 64 for k in range(65)]
        if a == 0.0:
            pts = [0.0] + [b * 2.0**-j for j in range(40, 0, -1)] + pts[1:]
            pts = sorted(set(pts))
        ref = float(mp.quad(f, pts))
    got = integrate(d, a, b, singular_at=d.singular_at)
    assert got == pytest.approx(ref, rel=1e-11, abs=1e-16)


def test_heavisine_against_mpmath():
    h = regression_function("heavisine")
    with mpmath.mp.workdps(30):
        f = lambda x: 4 * mpmath.sin(4 * mpmath.pi * x) - mpmath.sign(x - mpmath.mpf("0.3")) - mpmath.sign(mpmath.mpf("0.72") - x)
        ref = float(mpmath.quad(f, [0.2, 0.3, 0.72, 0.8]))
    assert integrate(h, 0.2, 0.8, jumps=h.jumps) == pytest.approx(ref, rel=1e-12)


def test_integrate_cells_owner_dependent():
    lo = np.array([0.0, 0.5])
    hi = np.array([0.5, 1.0])
    shift = np.array([1.0, 2.0])
    out = integrate_cells(lambda x, k: (x - shift[k]) ** 2, lo, hi)
    exact = [((0.5 - 1) ** 3 - (0 - 1) ** 3) / 3, ((1 - 2) ** 3 - (0.5 - 2) ** 3) / 3]
    np.testing.assert_allclose(out, exact, rtol=1e-14)


def test_integrate_cells_rejects_bad_cells():
    with pytest.raises(ValueError):
        integrate_cells(lambda x, k: x, [0.5], [0.5])
    assert integrate_cells(lambda x, k: x, [], []).size == 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.99), st.floats(1e-4, 1.0))
def test_cell_integrals_add_up(a, width):
    b = min(1.0, a + width)
    m = 0.5 * (a + b)
    s = regression_function("sin")
    whole = integrate(s, a, b)
    parts = integrate_cells(lambda x, _: s(x), [a, m], [m, b]).sum()
    assert whole == pytest.approx(parts, rel=1e-13, abs=1e-17)
