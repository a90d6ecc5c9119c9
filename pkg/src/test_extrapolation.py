import numpy as np
import pytest

from extrapolation import CONVERGED, DIVERGENT, INCONCLUSIVE, eps_ladder, growth_slope, limit_of, limits_of_array


@pytest.fixture
def ladder():
    return eps_ladder(3, 30)


def test_ladder_values():
    ladder = eps_ladder(3, 6)
    assert ladder.tolist() == [0.125, 0.0625, 0.03125, 0.015625]
    with pytest.raises(ValueError):
        eps_ladder(5, 5)


def test_linear_approach(ladder):
    est = limit_of(ladder, 1.0 + ladder)
    assert est.status == CONVERGED
    assert est.value == pytest.approx(1.0, abs=1e-12)
    assert isinstance(est.value, float)


def test_square_root_approach(ladder):
    est = limit_of(ladder, 1.0 + np.sqrt(ladder) + ladder)
    assert est.converged
    assert est.value == pytest.approx(1.0, abs=1e-6)


def test_complex_values_keep_imaginary_part(ladder):
    est = limit_of(ladder, 1j + ladder.astype(complex))
    assert est.converged
    assert est.value == pytest.approx(1j, abs=1e-12)


def test_pole_diverges(ladder):
    est = limit_of(ladder, 1.0 / ladder)
    assert est.status == DIVERGENT
    assert est.slope == pytest.approx(1.0, abs=1e-6)
    assert est.value is None


def test_slow_divergence_still_detected(ladder):
    assert limit_of(ladder, ladder ** -0.5).divergent


def test_oscillation_is_inconclusive(ladder):
    est = limit_of(ladder, 2.0 + 0.5 * np.sin(-np.log2(ladder)))
    assert est.status == INCONCLUSIVE


def test_nonfinite_samples(ladder):
    values = 1.0 + ladder
    values[-1] = np.nan
    assert limit_of(ladder, values).status == INCONCLUSIVE


def test_short_ladder():
    with pytest.raises(ValueError):
        limit_of([0.5, 0.25, 0.125], [1.0, 1.0, 1.0])


def test_vanishing_samples_have_no_slope(ladder):
    assert growth_slope(ladder, np.zeros(len(ladder))) == -np.inf
    assert limit_of(ladder, np.zeros(len(ladder))).value == 0.0


def test_elementwise_limits(ladder):
    stack = np.stack([np.array([[1 + e, 1 / e], [2 - e, 3.0]]) for e in ladder])
    out = limits_of_array(ladder, stack)
    assert out.shape == (2, 2)
    assert out[0, 0].value == pytest.approx(1.0)
    assert out[0, 1].divergent
    assert out[1, 0].value == pytest.approx(2.0)
    assert out[1, 1].value == 3.0
