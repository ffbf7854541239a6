import numpy as np
import pytest

from transmon_lattice.errors import AliasingError, NearResonanceError
from transmon_lattice.fitting import (
    MODELS,
    fit_anticrossing,
    fit_damped_cos,
    fit_exp_decay,
    fit_rb_decay,
)


# parameter points where every model is well defined and non-degenerate
GRADIENT_CASES = {
    "exp_decay": (np.linspace(0.1, 200.0, 40), [(0.1, 0.9, 71.0), (0.4, -0.5, 20.0)]),
    "damped_cos": (
        np.linspace(0.0, 30.0, 60),
        [(0.5, 0.4, 1.0, 0.3, 51.0), (0.2, 0.7, 0.5, -1.1, 12.0)],
    ),
    "anticrossing": (
        np.concatenate([np.linspace(-20, -2, 10), np.linspace(2, 20, 10)]),
        [(0.654, 0.1), (0.3, -0.2)],
    ),
    "rb_decay": (
        np.array([2.0, 25.0, 50.0, 100.0, 250.0, 500.0, 750.0, 1000.0]),
        [(0.5, 0.9988, 0.5), (0.45, 0.95, 0.5)],
    ),
}


@pytest.mark.parametrize("name", sorted(MODELS))
def test_analytic_gradients_match_finite_differences(name):
    model, jacobian, n_params = MODELS[name]
    x, base_points = GRADIENT_CASES[name]
    rng = np.random.default_rng(17)
    points = [np.array(p) for p in base_points]
    # add randomized perturbations of the listed points
    for p in list(points):
        for _ in range(4):
            points.append(p * rng.uniform(0.9, 1.1, size=len(p)))
    for p in points:
        analytic = jacobian(x, p)
        numeric = np.empty_like(analytic)
        for k in range(n_params):
            h = 1e-6 * max(abs(p[k]), 1e-3)
            up, down = p.copy(), p.copy()
            up[k] += h
            down[k] -= h
            numeric[:, k] = (model(x, up) - model(x, down)) / (2 * h)
        scale = np.max(np.abs(analytic)) + 1e-12
        assert np.max(np.abs(analytic - numeric)) <= 1e-6 * scale


def test_exp_decay_exact_recovery():
    t = np.linspace(0.5, 300.0, 60)
    y = 0.1 + 0.9 * np.exp(-t / 71.0)
    fit = fit_exp_decay(t, y)
    assert fit.converged
    assert fit.params["a"] == pytest.approx(0.1, abs=1e-6)
    assert fit.params["b"] == pytest.approx(0.9, abs=1e-6)
    assert fit.params["T"] == pytest.approx(71.0, rel=1e-6)


def test_exp_decay_constant_data_flagged():
    t = np.linspace(0.0, 10.0, 20)
    y = np.full_like(t, 0.37)
    fit = fit_exp_decay(t, y)
    assert not fit.converged
    assert "unidentifiable" in fit.flags
    assert fit.params["a"] == pytest.approx(0.37)
    assert fit.params["b"] == 0.0


def test_exp_decay_noise_monte_carlo():
    t = np.linspace(1.0, 250.0, 50)
    clean = 0.05 + 0.9 * np.exp(-t / 71.0)
    errors = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        fit = fit_exp_decay(t, clean + rng.normal(0.0, 0.018, len(t)))
        errors.append(abs(fit.params["T"] - 71.0) / 71.0)
    assert np.median(errors) <= 0.03


def test_damped_cos_exact_recovery():
    t = np.linspace(0.0, 120.0, 481)
    y = 0.5 + 0.45 * np.cos(2 * np.pi * 1.0 * t + 0.4) * np.exp(-t / 51.0)
    fit = fit_damped_cos(t, y)
    assert fit.converged
    assert fit.params["f"] == pytest.approx(1.0, rel=0.01)
    assert fit.params["T"] == pytest.approx(51.0, rel=0.01)
    assert fit.params["phi"] == pytest.approx(0.4, abs=1e-3)


def test_damped_cos_flat_input_flagged():
    t = np.linspace(0.0, 10.0, 50)
    fit = fit_damped_cos(t, np.full_like(t, 0.5))
    assert "unidentifiable_frequency" in fit.flags


def test_damped_cos_phase_wrapped():
    t = np.linspace(0.0, 20.0, 200)
    y = 0.5 + 0.4 * np.cos(2 * np.pi * 0.7 * t + 5.0) * np.exp(-t / 40.0)
    fit = fit_damped_cos(t, y)
    # 5.0 rad wraps to 5.0 - 2 pi
    assert fit.params["phi"] == pytest.approx(5.0 - 2 * np.pi, abs=1e-3)
    assert -np.pi <= fit.params["phi"] <= np.pi


def test_damped_cos_undersampled_raises():
    t = np.linspace(0.0, 0.4, 9)  # span < 1 period at 1 MHz
    y = 0.5 + 0.4 * np.cos(2 * np.pi * 1.0 * t)
    with pytest.raises(AliasingError):
        fit_damped_cos(t, y)


def test_anticrossing_recovery():
    delta = np.concatenate([np.linspace(-25, -2, 12), np.linspace(2, 25, 12)])
    y = 0.654**2 / delta + 0.05
    fit = fit_anticrossing(delta, y)
    assert fit.params["J"] == pytest.approx(0.654, rel=0.02)
    assert fit.params["C"] == pytest.approx(0.05, abs=1e-6)
    assert fit.params["A"] == 1.0 and fit.params["B"] == 1.0


def test_anticrossing_flat_data():
    delta = np.concatenate([np.linspace(-25, -2, 12), np.linspace(2, 25, 12)])
    y = np.full_like(delta, 0.12)
    fit = fit_anticrossing(delta, y)
    assert fit.params["J"] == pytest.approx(0.0, abs=1e-6)
    assert fit.params["C"] == pytest.approx(0.12, abs=1e-9)


def test_anticrossing_guard_violation():
    delta = np.linspace(-5.0, 5.0, 21)  # crosses zero
    with pytest.raises(NearResonanceError):
        fit_anticrossing(delta, delta * 0.0)


def test_rb_decay_perfect_survivals():
    m = np.array([2.0, 25.0, 100.0, 500.0, 1000.0])
    fit = fit_rb_decay(m, np.ones_like(m))
    assert fit.params["p"] >= 1.0 - 1e-9


def test_rb_decay_exact_recovery():
    m = np.array([2.0, 25.0, 50.0, 100.0, 250.0, 500.0, 750.0, 1000.0])
    s = 0.5 * 0.9988**m + 0.5
    fit = fit_rb_decay(m, s)
    assert fit.params["p"] == pytest.approx(0.9988, abs=1e-4)


def test_rb_decay_two_qubit_asymptote_seed():
    m = np.array([2.0, 8.0, 16.0, 32.0, 64.0])
    s = 0.75 * 0.97**m + 0.25
    fit = fit_rb_decay(m, s, asymptote=0.25)
    assert fit.params["p"] == pytest.approx(0.97, abs=1e-6)
    assert fit.params["B"] == pytest.approx(0.25, abs=1e-4)


def test_fits_are_deterministic():
    t = np.linspace(1.0, 250.0, 50)
    rng = np.random.default_rng(5)
    y = 0.05 + 0.9 * np.exp(-t / 71.0) + rng.normal(0, 0.02, len(t))
    first = fit_exp_decay(t, y)
    second = fit_exp_decay(t, y)
    assert first.params == second.params
    assert first.uncertainties == second.uncertainties
    assert first.rss == second.rss


def test_monotone_improvement_from_bad_start():
    # even with noise the returned residual never exceeds the trivial
    # constant-model residual of the initialization path
    t = np.linspace(1.0, 250.0, 50)
    rng = np.random.default_rng(7)
    y = 0.05 + 0.9 * np.exp(-t / 71.0) + rng.normal(0, 0.05, len(t))
    fit = fit_exp_decay(t, y)
    assert fit.rss <= float(np.sum((y - y.mean()) ** 2))


def test_lm_never_worse_than_initialization():
    from transmon_lattice.fitting import exp_decay_jacobian, exp_decay_model, levenberg_marquardt

    t = np.linspace(1.0, 250.0, 50)
    rng = np.random.default_rng(9)
    y = 0.05 + 0.9 * np.exp(-t / 71.0) + rng.normal(0, 0.05, len(t))
    for p0 in ([0.0, 1.0, 10.0], [0.5, 0.1, 500.0], [0.0, -1.0, 50.0]):
        p0 = np.array(p0)
        initial = float(np.sum((exp_decay_model(t, p0) - y) ** 2))
        _, _, rss, *_ = levenberg_marquardt(
            exp_decay_model, exp_decay_jacobian, t, y, p0
        )
        assert rss <= initial + 1e-12
