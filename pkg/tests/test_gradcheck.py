import numpy as np
import pytest
from pydantic import ValidationError

from pivad.autograd import GradReport, Tensor, grad_check
from pivad.exceptions import GradCheckError
from pivad.objectives import l_infonce_bidirectional


def _wrong_square(x: Tensor) -> Tensor:
    # derivative off by 50%
    return Tensor._result(x.data**2, (x,), lambda g: (g * 3.0 * x.data,), "wrong_square")


def test_sum_of_squares_passes_tight_threshold():
    x = Tensor([0.3, -1.2, 2.0], requires_grad=True)
    report = grad_check(lambda: (x * x).sum(), {"x": x}, threshold=1e-6)
    assert report.passed
    assert set(report.max_relative_error) == {"x"}


def test_infonce_on_random_inputs_passes():
    rng = np.random.default_rng(7)
    a = Tensor(rng.standard_normal((4, 8)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 8)), requires_grad=True)
    report = grad_check(lambda: l_infonce_bidirectional(a, b, 0.5), [a, b])
    assert report.passed, report.max_relative_error


def test_corrupted_backward_rule_is_caught():
    x = Tensor([0.5, 1.5], requires_grad=True)
    report = grad_check(lambda: _wrong_square(x).sum(), {"x": x})
    assert not report.passed
    assert report.max_relative_error["x"] == pytest.approx(1.0 / 3.0, rel=1e-4)


def test_parameters_are_restored_after_check():
    values = np.array([[0.1, 0.2], [0.3, 0.4]])
    x = Tensor(values.copy(), requires_grad=True)
    grad_check(lambda: (x.exp() * x).sum(), {"x": x})
    assert np.array_equal(x.data, values)


def test_coordinate_sampling():
    x = Tensor(np.linspace(0.1, 1.0, 20), requires_grad=True)
    report = grad_check(lambda: (x * x * x).sum(), {"x": x}, max_coords=5, seed=3)
    assert report.passed


@pytest.mark.parametrize("eps", [0.0, -1e-5, 0.1])
def test_epsilon_range(eps):
    x = Tensor([1.0], requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda: x.sum(), {"x": x}, eps=eps)


def test_non_finite_function_value():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(GradCheckError):
        grad_check(lambda: (x * np.inf).sum(), {"x": x})


def test_report_pass_flag_must_match_errors():
    with pytest.raises(ValidationError):
        GradReport(max_relative_error={"w": 0.5}, epsilon=1e-5, threshold=1e-4, passed=True)
