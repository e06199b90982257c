import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import central_diff, max_rel_error, naive_forward, naive_xent
from sscl.errors import ConfigError, DimensionError, ProtocolError
from sscl.learner import (
    GradientLearner,
    apply_unlabeled_update,
    fitness_loss,
    noise_gradient,
    normalize,
    raw_fitness_loss,
)
from sscl.mathcore import MlpModel, cross_entropy, grad_cross_entropy, labeled_step_grads, mlp_forward, sgd_step

rows = arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 6)),
              elements=st.floats(-20, 20, allow_nan=False))


def _learner(rng, k=10, hidden=(64, 16), **kw):
    kw.setdefault("eta", 0.1)
    return GradientLearner.create(k, hidden, rng, **kw)


def _naive_fitness(gl, z, y, tau):
    g = naive_forward(gl.h.weights, gl.h.biases, z)
    out = []
    for row in g:
        n = float(np.sqrt(np.sum(row ** 2)))
        out.append(gl.alpha * tau * row / n)
    return gl.lam * naive_xent(z - gl.eta * np.array(out), y)


# -- predict_raw ------------------------------------------------------------

def test_zero_learner_predicts_zero(rng):
    gl = GradientLearner(MlpModel.zeros(5, [4], 5), eta=0.1)
    np.testing.assert_array_equal(gl.predict_raw(rng.normal(size=(3, 5))), np.zeros((3, 5)))


def test_predict_raw_deterministic(rng):
    gl = _learner(rng)
    z = rng.normal(size=(2, 10))
    assert gl.predict_raw(z).tobytes() == gl.predict_raw(z.copy()).tobytes()


def test_param_count_64_16(rng):
    # (10*64 + 64) + (64*16 + 16) + (16*10 + 10) = 704 + 1040 + 170
    assert _learner(rng).h.param_count() == 1914


def test_predict_raw_dimension_mismatch(rng):
    with pytest.raises(DimensionError):
        _learner(rng).predict_raw(np.zeros((1, 9)))


def test_learner_must_be_square(rng):
    with pytest.raises(DimensionError):
        GradientLearner(MlpModel.create(4, [3], 5, rng), eta=0.1)


@pytest.mark.parametrize("kw", [dict(alpha=1.5), dict(alpha=-0.1), dict(lam=0.0), dict(eta_hat=-1.0),
                                dict(warmup=-1)])
def test_learner_config_validation(rng, kw):
    with pytest.raises(ConfigError):
        _learner(rng, k=3, hidden=(4,), **kw)


def test_eta_hat_defaults_to_eta(rng):
    assert _learner(rng, eta=0.03).eta_hat == 0.03


# -- normalize ---------------------------------------------------------------

def test_normalize_hand_example():
    np.testing.assert_allclose(normalize([3.0, 4.0], 10.0, 0.5), [[3.0, 4.0]], atol=1e-15)


def test_normalize_alpha_zero():
    np.testing.assert_array_equal(normalize([3.0, 4.0], 10.0, 0.0), [[0.0, 0.0]])


def test_normalize_degenerate_row_is_zero():
    out = normalize([[1e-13, 0.0], [0.0, 2.0]], 1.0, 1.0)
    np.testing.assert_array_equal(out, [[0.0, 0.0], [0.0, 1.0]])


def test_normalize_negative_tau():
    with pytest.raises(ConfigError):
        normalize([1.0], -1.0, 0.5)


@given(rows, st.floats(0, 100), st.floats(0, 1))
def test_normalize_norm_and_direction(g, tau, alpha):
    out = normalize(g, tau, alpha)
    for row, o in zip(g, out):
        if np.linalg.norm(row) < 1e-12:
            assert not o.any()
            continue
        assert abs(np.linalg.norm(o) - alpha * tau) <= 1e-12 * max(1.0, alpha * tau)
        # nonnegative multiple of the input row
        assert o @ row >= 0
        np.testing.assert_allclose(o * np.linalg.norm(row), row * np.linalg.norm(o), atol=1e-9 * (1 + tau))


# -- fitness loss -------------------------------------------------------------

def test_fitness_zero_gradient(rng):
    z = rng.normal(size=(4, 5))
    y = rng.integers(0, 5, size=4)
    assert fitness_loss(z, np.zeros_like(z), y, 0.1, 0.3) == pytest.approx(0.3 * cross_entropy(z, y), abs=1e-15)


def test_fitness_true_gradient_improves(rng):
    for _ in range(20):
        z = rng.normal(size=(1, 6)) * 2
        y = rng.integers(0, 6, size=1)
        g = grad_cross_entropy(z, y)
        assert fitness_loss(z, g, y, 0.01, 1.0) < cross_entropy(z, y)


@given(rows, st.floats(0.01, 5))
def test_fitness_lambda_linear(z, lam):
    y = np.zeros(z.shape[0], dtype=int)
    g = np.ones_like(z)
    a = fitness_loss(z, g, y, 0.1, lam)
    assert a == pytest.approx(lam * fitness_loss(z, g, y, 0.1, 1.0), rel=1e-14)
    assert fitness_loss(z, g, y, 0.1, 2 * lam) == 2 * a


def test_raw_fitness_uses_unnormalized_gradient(rng):
    z = rng.normal(size=(2, 3))
    g = rng.normal(size=(2, 3))
    y = [0, 2]
    assert raw_fitness_loss(z, g, y, 0.2) == pytest.approx(naive_xent(z - 0.2 * g, y), abs=1e-12)


def test_fitness_shape_mismatch():
    with pytest.raises(DimensionError):
        fitness_loss(np.zeros((2, 3)), np.zeros((2, 2)), [0, 0], 0.1, 1.0)


# -- learn_step -----------------------------------------------------------------

def test_learn_step_zero_rate_keeps_weights_refreshes_tau(rng):
    gl = _learner(rng, k=4, hidden=(8,), eta_hat=0.0)
    before = [p.copy() for p in gl.h.params()]
    z = rng.normal(size=(3, 4))
    y = np.array([0, 1, 3])
    rec = gl.learn_step(z, y)
    assert gl.tau_prev == pytest.approx(np.linalg.norm(grad_cross_entropy(z, y).mean(0)), abs=1e-15)
    assert rec.tau == gl.tau_prev and gl.step_count == 1
    for a, b in zip(before, gl.h.params()):
        np.testing.assert_array_equal(a, b)


def test_learn_step_record_fitness(rng):
    gl = _learner(rng, k=5, hidden=(6,), alpha=0.5, lam=2.0, eta_hat=0.0)
    z = rng.normal(size=(4, 5))
    y = rng.integers(0, 5, size=4)
    rec = gl.learn_step(z, y)
    assert rec.fit_loss == pytest.approx(_naive_fitness(gl, z, y, rec.tau), abs=1e-12)


@pytest.mark.parametrize("hidden", [(5, 4), (16, 8), (64, 16)])
def test_learn_step_gradient_finite_differences(hidden):
    rng = np.random.default_rng(3)
    gl = _learner(rng, k=6, hidden=hidden, alpha=0.7, lam=1.5, eta=0.8)
    z = rng.normal(size=(3, 6)) * 2
    y = rng.integers(0, 6, size=3)
    tau = float(np.linalg.norm(grad_cross_entropy(z, y).mean(0)))
    params = gl.h.params()
    fd = central_diff(lambda: _naive_fitness(gl, z, y, tau), params, h=1e-6)

    # the analytic step is w <- w - eta_hat * grad; recover grad from a unit-rate step
    probe = gl.copy()
    probe.eta_hat = 1.0
    start = [p.copy() for p in probe.h.params()]
    probe.learn_step(z, y)
    analytic = [s - p for s, p in zip(start, probe.h.params())]
    assert max_rel_error(analytic, fd, floor=1e-7) < 1e-4


def test_straight_through_differs_from_exact(rng):
    gl = _learner(rng, k=4, hidden=(8,), alpha=1.0, eta=1.0)
    st_gl = gl.copy()
    st_gl.straight_through = True
    z = rng.normal(size=(2, 4))
    y = [1, 2]
    gl.learn_step(z, y)
    st_gl.learn_step(z, y)
    assert any(not np.array_equal(a, b) for a, b in zip(gl.h.params(), st_gl.h.params()))


def test_learn_step_degenerate_skips_update():
    gl = GradientLearner(MlpModel.zeros(3, [4], 3), eta=0.1)
    rec = gl.learn_step(np.ones((2, 3)), [0, 1])
    assert rec.skipped and gl.skipped_steps == 1
    assert gl.tau_prev is not None and gl.h.version == 0
    assert not rec.g_bar.any()


def test_fitness_decreases_over_training():
    # fixed classifier outputs cycled through a fixed set, so only the learner changes
    rng = np.random.default_rng(11)
    k = 10
    centers = rng.normal(size=(k, k)) * 2
    y_all = rng.integers(0, k, size=400)
    z_all = centers[y_all] + rng.normal(size=(400, k))
    gl = _learner(rng, k=k, hidden=(64, 16), alpha=1.0, lam=0.3, eta=0.5, eta_hat=0.5)
    losses = []
    for epoch in range(50):
        for i in range(0, 400, 20):
            losses.append(gl.learn_step(z_all[i:i + 20], y_all[i:i + 20]).fit_loss)
    # windows of 200 steps each cover the fixed set ten times over
    first, last = np.mean(losses[:200]), np.mean(losses[-200:])
    assert last < first


# -- unlabeled prediction -------------------------------------------------------

def test_predict_before_labeled_step_is_protocol_error(rng):
    with pytest.raises(ProtocolError):
        _learner(rng).predict_for_unlabeled(np.zeros((1, 10)))


def test_warmup_gate(rng):
    gl = _learner(rng, k=4, hidden=(8,), warmup=50, alpha=0.2)
    z = rng.normal(size=(2, 4))
    for _ in range(49):
        gl.learn_step(z, [0, 1])
    assert gl.step_count == 49
    assert gl.predict_for_unlabeled(z) is None
    gl.learn_step(z, [0, 1])
    out = gl.predict_for_unlabeled(rng.normal(size=(3, 4)))
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), gl.alpha * gl.tau_prev, rtol=1e-12)


def test_consecutive_unlabeled_share_tau(rng):
    gl = _learner(rng, k=4, hidden=(8,), warmup=0, alpha=0.3)
    gl.learn_step(rng.normal(size=(2, 4)), [0, 3])
    a = gl.predict_for_unlabeled(rng.normal(size=(1, 4)))
    b = gl.predict_for_unlabeled(rng.normal(size=(1, 4)))
    assert np.linalg.norm(a) == pytest.approx(np.linalg.norm(b), rel=1e-12)


def test_prediction_leaves_classifier_and_learner_untouched(rng):
    gl = _learner(rng, k=3, hidden=(4,), warmup=0)
    gl.learn_step(rng.normal(size=(2, 3)), [0, 1])
    model = MlpModel.create(5, [6], 3, rng)
    snap_model = [p.copy() for p in model.params()]
    snap_h = [p.copy() for p in gl.h.params()]
    z, tape = mlp_forward(model, rng.normal(size=(2, 5)))
    g_bar = gl.predict_for_unlabeled(z)
    for a, b in zip(snap_model, model.params()):
        np.testing.assert_array_equal(a, b)
    apply_unlabeled_update(model, tape, g_bar, 0.1)
    for a, b in zip(snap_h, gl.h.params()):
        np.testing.assert_array_equal(a, b)


# -- apply_unlabeled_update -----------------------------------------------------

def test_zero_pseudo_gradient_leaves_model(rng):
    model = MlpModel.create(4, [5], 3, rng)
    before = [p.copy() for p in model.params()]
    z, tape = mlp_forward(model, rng.normal(size=(2, 4)))
    apply_unlabeled_update(model, tape, np.zeros_like(z), 0.1)
    for a, b in zip(before, model.params()):
        np.testing.assert_array_equal(a, b)


def test_true_gradient_reproduces_labeled_step(rng):
    a = MlpModel.create(4, [5], 3, rng)
    b = a.copy()
    x = rng.normal(size=(3, 4))
    y = np.array([2, 0, 1])
    z, tape = mlp_forward(a, x)
    apply_unlabeled_update(a, tape, grad_cross_entropy(z, y), 0.2)
    _, grads, _, _ = labeled_step_grads(b, x, y)
    sgd_step(b, grads, 0.2)
    for p, q in zip(a.params(), b.params()):
        assert p.tobytes() == q.tobytes()


def test_unlabeled_update_linear_in_alpha(rng):
    gl = _learner(rng, k=3, hidden=(8,), warmup=0, alpha=0.1)
    gl.learn_step(rng.normal(size=(2, 3)), [0, 2])
    base = MlpModel.create(4, [6], 3, rng)
    x = rng.normal(size=(2, 4))
    deltas = []
    for alpha in (0.1, 0.2):
        gl.alpha = alpha
        m = base.copy()
        z, tape = mlp_forward(m, x)
        apply_unlabeled_update(m, tape, gl.predict_for_unlabeled(z), 0.05)
        deltas.append(np.sqrt(sum(np.sum((p - q) ** 2) for p, q in zip(m.params(), base.params()))))
    assert abs(deltas[1] - 2 * deltas[0]) < 1e-9


def test_unlabeled_update_shape_mismatch(rng):
    model = MlpModel.create(4, [5], 3, rng)
    _, tape = mlp_forward(model, rng.normal(size=(2, 4)))
    with pytest.raises(DimensionError):
        apply_unlabeled_update(model, tape, np.zeros((2, 4)), 0.1)


# -- noise ------------------------------------------------------------------------

def test_uniform_noise_support():
    g = noise_gradient("uniform", 10000, 0)
    assert g.min() >= -1.0 and g.max() <= 1.0


def test_normal_noise_mean():
    # 4.5 standard errors of the mean for 1e5 draws is about 0.014
    assert abs(noise_gradient("normal", 100000, 1).mean()) < 0.02


def test_noise_seeded():
    np.testing.assert_array_equal(noise_gradient("normal", (2, 3), 5), noise_gradient("normal", (2, 3), 5))


def test_noise_unknown_kind():
    with pytest.raises(ConfigError):
        noise_gradient("laplace", 3, 0)


# -- checkpoint -----------------------------------------------------------------

def test_checkpoint_round_trip(rng, tmp_path):
    gl = _learner(rng, k=4, hidden=(8, 3), warmup=7, alpha=0.25)
    gl.learn_step(rng.normal(size=(2, 4)), [1, 2])
    path = gl.save(tmp_path / "learner.bin")
    back = GradientLearner.load(path)
    for a, b in zip(gl.h.params(), back.h.params()):
        assert a.tobytes() == b.tobytes()
    assert (back.tau_prev, back.step_count, back.alpha, back.warmup) == (gl.tau_prev, 1, 0.25, 7)
