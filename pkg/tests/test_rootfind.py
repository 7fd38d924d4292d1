import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from walkmax.rootfind import RootError, newton_bisect


def test_simple_root():
    x, its = newton_bisect(lambda x: (x * x - 2.0, 2.0 * x), 0.0, 2.0)
    assert x == pytest.approx(math.sqrt(2.0), rel=1e-15)
    assert its < 20


def test_no_sign_change():
    with pytest.raises(RootError):
        newton_bisect(lambda x: (x * x + 1.0, 2.0 * x), -1.0, 1.0)


def test_endpoint_root():
    assert newton_bisect(lambda x: (x, 1.0), 0.0, 1.0) == (0.0, 0)


def test_bad_derivative_falls_back_to_bisection():
    # wrong derivative sign everywhere: Newton would walk away, bisection still converges
    x, _ = newton_bisect(lambda x: (x - 0.3, -1.0), 0.0, 1.0, rtol=1e-13)
    assert x == pytest.approx(0.3, abs=1e-12)


def test_iteration_cap():
    with pytest.raises(RootError):
        newton_bisect(lambda x: (x - 0.3, -1.0), 0.0, 1.0, rtol=0.0, maxit=5)


@given(st.floats(-50, 50), st.floats(0.1, 10))
def test_cubic_roots(r, width):
    f = lambda x: ((x - r) ** 3, 3 * (x - r) ** 2)  # noqa: E731
    x, _ = newton_bisect(f, r - width, r + 0.7 * width, rtol=1e-14, atol=1e-12)
    assert abs(x - r) <= 1e-4 * max(1.0, abs(r))
