import math

import numpy as np
import pytest

from oracles import central_diff, max_rel_error, naive_forward, naive_xent
from sscl.errors import DimensionError, LabelError, ProtocolError
from sscl.learner import GradientLearner
from sscl.mathcore import MlpModel, labeled_step_grads, mlp_forward, sgd_step, softmax
from sscl.pseudo import (
    TeacherModel,
    predict_pseudo_label,
    soft_cross_entropy,
    student_update_with_pseudo,
    train_teacher_step,
)


def _naive_soft_xent(z, p):
    total = 0.0
    for row, target in zip(np.atleast_2d(z), np.atleast_2d(p)):
        m = max(row)
        lse = math.log(sum(math.exp(v - m) for v in row)) + m
        total += sum(-t * (v - lse) for v, t in zip(row, target))
    return total / len(np.atleast_2d(z))


def _separable(rng, n_per=40, k=3, dim=5):
    centers = np.eye(k, dim) * 6
    x = np.vstack([c + rng.normal(size=(n_per, dim)) for c in centers])
    y = np.repeat(np.arange(k), n_per)
    perm = rng.permutation(len(y))
    return x[perm], y[perm]


# -- teacher ----------------------------------------------------------------------

def test_teacher_head_per_task(rng):
    teacher = TeacherModel(5, [8, 6], 10, rng)
    train_teacher_step(teacher, rng.normal(size=(2, 5)), [3, 4], 1, 0.1, classes=[2, 3, 4])
    assert list(teacher.heads) == [1]
    assert teacher.heads[1][0].shape == (6, 3)
    train_teacher_step(teacher, rng.normal(size=(2, 5)), [0, 9], 0, 0.1)
    assert teacher.heads[0][0].shape == (6, 10)


def test_teacher_zero_rate_unchanged(rng):
    teacher = TeacherModel(5, [8], 3, rng)
    teacher.add_head(0, [0, 1, 2])
    before = [p.copy() for p in teacher.model_for(0).params()]
    train_teacher_step(teacher, rng.normal(size=(3, 5)), [0, 1, 2], 0, 0.0)
    for a, b in zip(before, teacher.model_for(0).params()):
        np.testing.assert_array_equal(a, b)


def test_teacher_gradient_finite_differences(rng):
    teacher = TeacherModel(4, [6, 5], 6, rng)
    teacher.add_head(0, [1, 3, 5])
    x = rng.normal(size=(3, 4))
    y_global = np.array([5, 1, 3])
    y_local = np.array([2, 0, 1])
    model = teacher.model_for(0)
    fd = central_diff(lambda: naive_xent(naive_forward(model.weights, model.biases, x), y_local), model.params())
    before = [p.copy() for p in model.params()]
    train_teacher_step(teacher, x, y_global, 0, 1.0)
    analytic = [b - p for b, p in zip(before, teacher.model_for(0).params())]
    assert max_rel_error(analytic, fd, floor=1e-7) < 1e-4


def test_teacher_rejects_foreign_label(rng):
    teacher = TeacherModel(4, [6], 6, rng)
    teacher.add_head(0, [0, 1])
    with pytest.raises(LabelError):
        train_teacher_step(teacher, np.zeros((1, 4)), [4], 0, 0.1)


def test_teacher_learns_separable_task():
    rng = np.random.default_rng(4)
    x, y = _separable(rng)
    teacher = TeacherModel(5, [16], 3, rng)
    for _ in range(30):
        for i in range(0, len(y), 10):
            train_teacher_step(teacher, x[i:i + 10], y[i:i + 10], 0, 0.1)
    assert np.mean(predict_pseudo_label(teacher, x, 0) == y) >= 0.99
    probes, truth = _separable(rng, n_per=30)
    assert np.mean(predict_pseudo_label(teacher, probes, 0) == truth) >= 0.95


# -- predictions -------------------------------------------------------------------

def test_argmax_hand_and_ties():
    teacher = TeacherModel(3, [3], 3, np.random.default_rng(0))
    teacher.add_head(0, [0, 1, 2])
    # identity backbone with positive inputs and an identity head pass the input through
    teacher.backbone_w[0][:] = np.eye(3)
    teacher.backbone_b[0][:] = 0
    W, b, _ = teacher.heads[0]
    W[:] = np.eye(3)
    b[:] = 0
    assert predict_pseudo_label(teacher, [2.0, 1.0, 3.0], 0).tolist() == [2]
    assert predict_pseudo_label(teacher, [1.0, 3.0, 3.0], 0).tolist() == [1]


def test_probabilistic_on_simplex(rng):
    teacher = TeacherModel(4, [5], 7, rng)
    teacher.add_head(2, [1, 4, 6])
    p = predict_pseudo_label(teacher, rng.normal(size=(5, 4)), 2, mode="probabilistic")
    assert p.shape == (5, 7)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert not p[:, [0, 2, 3, 5]].any()


def test_prediction_deterministic(rng):
    teacher = TeacherModel(4, [5], 3, rng)
    teacher.add_head(0, [0, 1, 2])
    x = rng.normal(size=(4, 4))
    a = predict_pseudo_label(teacher, x, 0, "probabilistic")
    assert a.tobytes() == predict_pseudo_label(teacher, x.copy(), 0, "probabilistic").tobytes()


def test_missing_head(rng):
    with pytest.raises(ProtocolError):
        predict_pseudo_label(TeacherModel(4, [5], 3, rng), np.zeros((1, 4)), 0)


def test_unknown_mode(rng):
    teacher = TeacherModel(4, [5], 3, rng)
    teacher.add_head(0, [0, 1, 2])
    with pytest.raises(ValueError):
        predict_pseudo_label(teacher, np.zeros((1, 4)), 0, mode="sharpened")


def test_teacher_outweighs_gradient_learner(rng):
    student = MlpModel.create(20, [100, 100], 10, rng)
    teacher = TeacherModel.like(student, rng)
    teacher.add_head(0, range(10))
    learner = GradientLearner.create(10, (64, 16), rng, eta=0.1)
    assert teacher.param_count() > learner.h.param_count()


# -- student update -----------------------------------------------------------------

def test_soft_fixed_point_leaves_model(rng):
    model = MlpModel.create(4, [5], 3, rng)
    x = rng.normal(size=(2, 4))
    target = softmax(mlp_forward(model, x)[0])
    before = [p.copy() for p in model.params()]
    student_update_with_pseudo(model, x, target, 0.5)
    for a, b in zip(before, model.params()):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_soft_upstream_sums_to_zero(rng):
    z = rng.normal(size=(3, 5))
    p = softmax(rng.normal(size=(3, 5)))
    _, grad = soft_cross_entropy(z, p)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-14)


def test_hard_pseudo_label_is_labeled_step(rng):
    a = MlpModel.create(4, [5], 3, rng)
    b = a.copy()
    x = rng.normal(size=(3, 4))
    y = np.array([0, 2, 2])
    student_update_with_pseudo(a, x, y, 0.1)
    _, grads, _, _ = labeled_step_grads(b, x, y)
    sgd_step(b, grads, 0.1)
    for p, q in zip(a.params(), b.params()):
        assert p.tobytes() == q.tobytes()


def test_soft_gradient_finite_differences(rng):
    model = MlpModel.create(4, [6], 3, rng)
    x = rng.normal(size=(3, 4))
    p = softmax(rng.normal(size=(3, 3)))
    fd = central_diff(lambda: _naive_soft_xent(naive_forward(model.weights, model.biases, x), p), model.params())
    before = [q.copy() for q in model.params()]
    student_update_with_pseudo(model, x, p, 1.0)
    analytic = [b - q for b, q in zip(before, model.params())]
    assert max_rel_error(analytic, fd, floor=1e-7) < 1e-4


def test_soft_shape_mismatch(rng):
    model = MlpModel.create(4, [6], 3, rng)
    with pytest.raises(DimensionError):
        student_update_with_pseudo(model, np.zeros((2, 4)), np.full((2, 4), 0.25), 0.1)
