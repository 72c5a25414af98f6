import math

import numpy as np
import pytest
from oracles import cosine_loops, infonce_loops, mil_loops, pmg_loops

from pivad.autograd import Tensor
from pivad.entities.entities import ForwardMode, LossWeights, ObjectiveComponents, TopKRule, VideoLabel
from pivad.exceptions import LossError, ShapeError
from pivad.objectives import (
    LossComputer,
    LossParts,
    breakdown,
    cosine_sim_matrix,
    l_align,
    l_distill,
    l_first,
    l_infonce_bidirectional,
    l_mil,
    l_pmg,
    l_second,
)

NORMAL, ANOMALOUS = VideoLabel.NORMAL, VideoLabel.ANOMALOUS


class TestPmg:
    def test_perfect_reconstruction(self):
        target = np.random.default_rng(0).standard_normal((4, 3))
        assert l_pmg({"P": Tensor(target)}, {"P": target}).item() == 0.0

    def test_unit_offset_per_modality(self):
        rng = np.random.default_rng(1)
        targets = {name: rng.standard_normal((6, 4)) for name in ("P", "D", "M", "O", "txt")}
        pseudo = {name: Tensor(values + 1.0) for name, values in targets.items()}
        assert l_pmg(pseudo, targets).item() == pytest.approx(5.0, abs=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        pseudo = {"P": rng.standard_normal((5, 4)), "D": rng.standard_normal((5, 2))}
        targets = {"P": rng.standard_normal((5, 4)), "D": rng.standard_normal((5, 2))}
        value = l_pmg({k: Tensor(v) for k, v in pseudo.items()}, targets).item()
        assert abs(value - pmg_loops(pseudo, targets)) < 1e-12

    def test_modality_sets_must_agree(self):
        with pytest.raises(LossError):
            l_pmg({"P": Tensor(np.ones((2, 2)))}, {"D": np.ones((2, 2))})


class TestCosine:
    def test_orthonormal_rows_give_identity(self):
        a = np.eye(3, 5)
        assert np.allclose(cosine_sim_matrix(Tensor(a), Tensor(a)).data, np.eye(3), atol=1e-15)

    def test_antipodal_rows(self):
        a = np.random.default_rng(3).standard_normal((4, 6))
        assert np.allclose(np.diag(cosine_sim_matrix(Tensor(a), Tensor(-a)).data), -1.0, atol=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal((4, 8)), rng.standard_normal((4, 8))
        assert np.allclose(cosine_sim_matrix(Tensor(a), Tensor(b)).data, cosine_loops(a, b), atol=1e-12, rtol=0)


class TestInfoNce:
    def test_two_orthonormal_snippets(self):
        rows = Tensor(np.eye(2))
        value = l_infonce_bidirectional(rows, rows, tau=1.0).item()
        assert value == pytest.approx(math.log(1.0 + math.exp(-1.0)), abs=1e-12)
        assert value == pytest.approx(0.313262, abs=1e-6)

    def test_loss_vanishes_as_temperature_drops(self):
        rows = Tensor(np.eye(2) * 3.0)
        values = [l_infonce_bidirectional(rows, rows, tau).item() for tau in (1.0, 0.5, 0.1, 0.05, 0.01)]
        assert all(later < earlier for earlier, later in zip(values, values[1:]))
        assert values[-1] < 1e-10

    def test_matches_log_sum_exp_oracle(self):
        rng = np.random.default_rng(5)
        a, b = rng.standard_normal((4, 8)), rng.standard_normal((4, 8))
        value = l_infonce_bidirectional(Tensor(a), Tensor(b), 0.3).item()
        assert abs(value - infonce_loops(a, b, 0.3)) < 1e-10

    def test_contract_violations(self):
        with pytest.raises(LossError):
            l_infonce_bidirectional(Tensor(np.ones((1, 4))), Tensor(np.ones((1, 4))), 0.1)
        with pytest.raises(LossError):
            l_infonce_bidirectional(Tensor(np.eye(2)), Tensor(np.eye(2)), 0.0)


class TestAlign:
    def test_singleton_and_linearity(self):
        rng = np.random.default_rng(6)
        features, stream = Tensor(rng.standard_normal((5, 4))), Tensor(rng.standard_normal((5, 4)))
        single = l_infonce_bidirectional(features, stream, 0.2).item()
        assert l_align(features, {"P": stream}, 0.2).item() == single
        five = {name: stream for name in ("P", "D", "M", "O", "txt")}
        assert l_align(features, five, 0.2).item() == pytest.approx(5.0 * single, rel=1e-12)

    def test_matches_oracle_sum(self):
        rng = np.random.default_rng(7)
        features = rng.standard_normal((5, 6))
        streams = {name: rng.standard_normal((5, 6)) for name in ("P", "D", "O")}
        value = l_align(Tensor(features), {k: Tensor(v) for k, v in streams.items()}, 0.4).item()
        expected = sum(infonce_loops(features, v, 0.4) for v in streams.values())
        assert abs(value - expected) < 1e-10


class TestDistill:
    def test_values(self):
        teacher = np.random.default_rng(8).standard_normal((4, 3))
        assert l_distill(Tensor(teacher), teacher).item() == 0.0
        assert l_distill(Tensor(teacher + 2.0), teacher).item() == pytest.approx(4.0, abs=1e-12)

    def test_no_gradient_reaches_teacher(self):
        student = Tensor(np.ones((3, 2)), requires_grad=True)
        teacher = Tensor(np.zeros((3, 2)), requires_grad=True)
        l_distill(student, teacher).backward()
        assert np.array_equal(teacher.grad, np.zeros((3, 2)))
        assert np.allclose(student.grad, np.full((3, 2), 2.0 / 6.0))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            l_distill(Tensor(np.ones((3, 2))), np.ones((2, 3)))


class TestMil:
    def test_perfect_separation(self):
        value = l_mil([Tensor(np.full(8, -50.0)), Tensor(np.full(8, 50.0))], [NORMAL, ANOMALOUS]).item()
        assert 0.0 < value < 1e-6

    def test_k_rule(self):
        assert TopKRule().k(32) == 3
        assert TopKRule().k(4) == 1
        assert TopKRule(divisor=1).k(5) == 5

    def test_matches_bce_oracle(self):
        rng = np.random.default_rng(9)
        logits = [rng.standard_normal(n) * 3.0 for n in (16, 32, 20, 7)]
        labels = [NORMAL, ANOMALOUS, ANOMALOUS, NORMAL]
        value = l_mil([Tensor(x) for x in logits], labels).item()
        assert abs(value - mil_loops(logits, [int(y) for y in labels])) < 1e-12

    def test_batch_contract(self):
        with pytest.raises(LossError):
            l_mil([], [])
        with pytest.raises(LossError):
            l_mil([Tensor(np.zeros(4)), Tensor(np.ones(4))], [ANOMALOUS, ANOMALOUS])


class TestCombination:
    def test_first_stage(self):
        assert l_first(LossParts(l_mil=9.0, l_align=2.0, l_distill=3.0, l_pmg=1.0)) == 6.0

    def test_second_stage_with_zero_weights(self):
        parts = LossParts(l_mil=0.5, l_align=2.0, l_distill=3.0, l_pmg=0.2)
        assert l_second(parts, 0.0, 0.0) == pytest.approx(0.7)

    def test_second_stage_weights(self):
        parts = LossParts(l_mil=1.0, l_align=2.0, l_distill=3.0, l_pmg=4.0)
        assert l_second(parts, 0.5, 2.0) == 12.0

    def test_disabled_components(self):
        parts = LossParts(l_mil=1.0, l_align=2.0, l_distill=3.0, l_pmg=4.0)
        only_pmg = ObjectiveComponents(pmg=True, align=False, distill=False)
        assert l_first(parts, only_pmg) == 4.0
        assert l_second(parts, 0.5, 2.0, only_pmg) == 5.0


class TestLossComputer:
    def test_parts_on_model_traces(self, model, videos):
        computer = LossComputer(LossWeights(tau=0.5))
        traces = [model.forward(v, ForwardMode.TRAIN) for v in videos]
        parts = computer.parts(traces, videos, with_mil=False)
        assert isinstance(parts.l_mil, float)
        total = computer.first(parts)
        values = breakdown(parts, total)
        assert set(values) == {"l_mil", "l_align", "l_distill", "l_pmg", "total"}
        assert values["total"] == pytest.approx(values["l_pmg"] + values["l_align"] + values["l_distill"])
        assert all(math.isfinite(v) and v >= 0.0 for v in values.values())

    def test_zero_lambdas_still_report_terms(self, model, videos):
        computer = LossComputer(LossWeights(lambda1=0.0, lambda2=0.0, tau=0.5))
        traces = [model.forward(v, ForwardMode.TRAIN) for v in videos]
        parts = computer.parts(traces, videos, with_mil=True)
        values = breakdown(parts, computer.second(parts))
        assert values["l_align"] > 0.0 and values["l_distill"] > 0.0
        assert values["total"] == pytest.approx(values["l_mil"] + values["l_pmg"])

    def test_missing_targets(self, model, videos):
        computer = LossComputer(LossWeights(tau=0.5))
        stripped = [v.without_modalities() for v in videos]
        traces = [model.forward(v, ForwardMode.TRAIN) for v in stripped]
        with pytest.raises(LossError):
            computer.parts(traces, stripped, with_mil=True)
