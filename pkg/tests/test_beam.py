import numpy as np
import pytest
from hypothesis import given, strategies as st

from crowdmodal.beam import (BeamModalModel, BeamSpec, DomainError, ImpulseTrain, acceleration_at,
                             eval_mode_shape, modal_acceleration_response, modal_displacement_response,
                             random_impulse_train, reference_shape)

from oracles import newmark_modal, newmark_richardson

SPEC = BeamSpec()
MODEL = BeamModalModel()
L, B = SPEC.span_length, SPEC.deck_width


def single(kind, f=5.0, zeta=0.01):
    return BeamModalModel((f,), (kind,), (zeta,), (1.0,))


def test_default_model_frequencies_and_kinds():
    assert MODEL.frequencies == (5.51, 9.93, 12.34, 20.26, 24.99)
    assert MODEL.kinds == ("V1", "V2", "T1", "V3", "T2")
    assert MODEL.damping == (0.01,) * 5
    assert SPEC.span_length == 3.06 and SPEC.deck_width == 0.635


@pytest.mark.parametrize("kwargs", [
    dict(frequencies=(5.0, 4.0), kinds=("V1", "V2")),
    dict(frequencies=(5.0,), kinds=("V1",), damping=(1.0,)),
    dict(frequencies=(5.0,), kinds=("V1",), modal_mass=(0.0,)),
    dict(frequencies=(5.0,), kinds=("X1",)),
    dict(frequencies=(5.0,), kinds=("V1", "V2")),
])
def test_model_invariants(kwargs):
    with pytest.raises(ValueError):
        BeamModalModel(**kwargs)


def test_spec_invariants():
    with pytest.raises(ValueError):
        BeamSpec(span_length=0)
    with pytest.raises(ValueError):
        BeamSpec(lane_offsets=(0.4,))


def test_shape_examples():
    assert eval_mode_shape(single("V2"), SPEC, 0, L / 2, 0.1) == pytest.approx(0, abs=1e-15)
    assert eval_mode_shape(single("T1"), SPEC, 0, L / 2, 0.0) == 0
    assert eval_mode_shape(single("V1"), SPEC, 0, L / 4, 0.0) == pytest.approx(np.sin(np.pi / 4), abs=1e-12)
    assert eval_mode_shape(single("T1"), SPEC, 0, L / 2, B / 2) == pytest.approx(1.0)


def test_shape_domain_errors():
    with pytest.raises(DomainError):
        eval_mode_shape(MODEL, SPEC, 0, L + 0.1, 0.0)
    with pytest.raises(DomainError):
        eval_mode_shape(MODEL, SPEC, 0, 1.0, B)


@given(st.floats(0, 1), st.floats(-1, 1), st.integers(0, 4))
def test_shape_bounded(u, w, n):
    v = eval_mode_shape(MODEL, SPEC, n, u * L, w * B / 2)
    assert -1 <= v <= 1


def test_reference_shape_max_normalized():
    x = np.linspace(0, L, 200)
    for n in range(MODEL.n_modes):
        r = reference_shape(MODEL, SPEC, n, x, 0.28)
        assert r.max() == pytest.approx(1.0, abs=1e-3) and r.min() >= 0
    assert np.all(reference_shape(MODEL, SPEC, 2, x, 0.0) == 0)


def test_empty_train_gives_zero():
    t = np.linspace(0, 3, 50)
    train = ImpulseTrain.empty()
    assert np.all(modal_displacement_response(MODEL, train, t, 0, SPEC) == 0)
    assert np.all(acceleration_at(MODEL, SPEC, train, 1.0, 0.1, t) == 0)


def test_undamped_unit_impulse():
    # zeta must lie in (0, 1), so take a tiny damping; the closed form is sin(wt)/w.
    m = single("V1", f=5.0, zeta=1e-12)
    x = L / 2  # shape value 1
    train = ImpulseTrain([0.0], [x], [0.0], [1.0])
    t = np.linspace(0, 2, 400)
    w = 2 * np.pi * 5.0
    np.testing.assert_allclose(modal_displacement_response(m, train, t, 0, SPEC), np.sin(w * t) / w, atol=1e-12)


def test_two_impulse_train_matches_newmark():
    m = single("V1", f=5.51, zeta=0.01)
    train = ImpulseTrain([0.1, 0.73], [L / 2, L / 3], [0.0, 0.0], [0.004, 0.003])
    t = np.linspace(0.05, 3.0, 60)
    q = modal_displacement_response(m, train, t, 0, SPEC)
    q_ref = np.array([newmark_modal(m, SPEC, train, ti, 0)[0] for ti in t])
    rel = np.sqrt(np.mean((q - q_ref) ** 2)) / np.sqrt(np.mean(q_ref ** 2))
    assert rel < 1e-6


def test_newmark_richardson_oracle_is_consistent():
    # The oracle itself against the closed-form damped free response.
    w, z, v0, T = 2 * np.pi * 5.51, 0.01, 1.0, 1.7
    wd = w * np.sqrt(1 - z * z)
    exact = v0 / wd * np.exp(-z * w * T) * np.sin(wd * T)
    q, _, _ = newmark_richardson(w, z, v0, T)
    assert abs(q - exact) < 1e-8 * v0 / wd


def test_modal_acceleration_is_analytic_derivative():
    rng = np.random.default_rng(3)
    train = random_impulse_train(SPEC, 4.0, (0.002, 0.006), 5.0, rng)
    t = np.linspace(0.5, 5.0, 200)
    h = 1e-5
    for n in range(MODEL.n_modes):
        q = lambda s: modal_displacement_response(MODEL, train, s, n, SPEC)  # noqa: E731
        fd = (q(t + h) - 2 * q(t) + q(t - h)) / h ** 2
        acc = modal_acceleration_response(MODEL, train, t, n, SPEC)
        # avoid the instants right at impulses, where the velocity jumps
        ok = np.min(np.abs(t[:, None] - train.times[None, :]), axis=1) > 1e-3
        np.testing.assert_allclose(acc[ok], fd[ok], rtol=1e-4, atol=1e-6 * np.abs(acc).max())


def test_five_mode_acceleration_matches_newmark():
    rng = np.random.default_rng(11)
    train = random_impulse_train(SPEC, 10.0, (0.002, 0.006), 1.0, rng)
    assert len(train) > 3
    x, y, t = L / 3, 0.2, 1.0
    a = acceleration_at(MODEL, SPEC, train, x, y, t)[0]
    a_ref = sum(float(eval_mode_shape(MODEL, SPEC, n, x, y)) * newmark_modal(MODEL, SPEC, train, t, n)[1]
                for n in range(MODEL.n_modes))
    assert abs(a - a_ref) <= 1e-5 * abs(a_ref)


def test_single_mode_node_and_antisymmetry():
    rng = np.random.default_rng(0)
    train = random_impulse_train(SPEC, 3.0, (0.002, 0.006), 4.0, rng)
    t = np.linspace(0, 4, 300)
    v2 = single("V2", 9.93)
    assert np.all(acceleration_at(v2, SPEC, train, L / 2, 0.0, t) == pytest.approx(0, abs=1e-14))
    t1 = single("T1", 12.34)
    up = acceleration_at(t1, SPEC, train, 1.0, B / 2, t)
    down = acceleration_at(t1, SPEC, train, 1.0, -B / 2, t)
    np.testing.assert_allclose(up, -down, atol=1e-15)
    assert np.abs(up).max() > 0


def test_superposition():
    r1, r2 = np.random.default_rng(1), np.random.default_rng(2)
    a = random_impulse_train(SPEC, 3.0, (0.002, 0.006), 4.0, r1)
    b = random_impulse_train(SPEC, 3.0, (0.002, 0.006), 4.0, r2)
    t = np.linspace(0, 4, 300)
    both = acceleration_at(MODEL, SPEC, a.concat(b), 0.9, 0.1, t)
    parts = acceleration_at(MODEL, SPEC, a, 0.9, 0.1, t) + acceleration_at(MODEL, SPEC, b, 0.9, 0.1, t)
    assert np.max(np.abs(both - parts)) <= 1e-10 * np.max(np.abs(parts))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_vertical_nodes_exact(k):
    m = single(f"V{k}")
    rng = np.random.default_rng(k)
    train = random_impulse_train(SPEC, 3.0, (0.002, 0.006), 3.0, rng)
    t = np.linspace(0, 3, 100)
    for j in range(k + 1):
        x = j * L / k
        assert np.max(np.abs(acceleration_at(m, SPEC, train, x, 0.1, t))) < 1e-12


def test_torsional_centerline_exactly_zero():
    rng = np.random.default_rng(5)
    train = random_impulse_train(SPEC, 3.0, (0.002, 0.006), 3.0, rng)
    t = np.linspace(0, 3, 100)
    assert np.all(acceleration_at(MODEL, SPEC, train, 1.3, 0.0, t, modes=[2, 4]) == 0)


def test_energy_decay_envelope():
    m = single("V1", 5.51, 0.02)
    train = ImpulseTrain([0.0, 0.3], [1.0, 2.0], [0.0, 0.0], [0.005, 0.004])
    T = 0.5
    w = m.omega(0)
    delta = np.arange(0, 3, 0.25)
    tail = np.linspace(0, 1, 2000)
    peaks = np.array([np.abs(acceleration_at(m, SPEC, train, 1.5, 0.0, T + d + tail)).max() for d in delta])
    assert np.all(np.diff(peaks) < 0)
    slope = np.polyfit(delta, np.log(peaks), 1)[0]
    assert slope == pytest.approx(-0.02 * w, rel=0.03)


def test_random_train_invariants_and_determinism():
    a = random_impulse_train(SPEC, 2.0, (0.002, 0.006), 30.0, np.random.default_rng(9))
    b = random_impulse_train(SPEC, 2.0, (0.002, 0.006), 30.0, np.random.default_rng(9))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.magnitude, b.magnitude)
    assert np.all(np.diff(a.times) >= 0)
    assert np.all((a.x >= 0) & (a.x <= L)) and np.all(np.abs(a.y) <= B / 2)
    assert np.all((a.magnitude >= 0.002) & (a.magnitude <= 0.006))
    with pytest.raises(ValueError):
        ImpulseTrain([1.0, 0.5], [0, 0], [0, 0], [1, 1])
