"""Parameter estimation: curve stripping, damped least squares, diagnostics."""

import numpy as np
import pytest

from pklink.channel import PkParams, Route, ev_concentration, iv_concentration
from pklink.errors import ConvergenceError, DataError, DomainError
from pklink.fitting import (
    ConcentrationSeries,
    calibration_scale,
    fit_least_squares,
    fit_residuals,
    jacobian,
    predict,
)

from conftest import BENCH_DOSE, BENCH_K_A, BENCH_K_E, BENCH_V

RAT_K_A, RAT_K_E, RAT_V, RAT_DOSE = 1.69e-4, 5.08e-4, 202.0, 522.0


def _bench_series(noise_sigma=0.0, seed=7):
    pk = PkParams(k_e=BENCH_K_E, V=BENCH_V, k_a=BENCH_K_A)
    t = np.linspace(60.0, 4800.0, 28)
    c = ev_concentration(pk, BENCH_DOSE, t)
    if noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        c = c * (1.0 + noise_sigma * rng.standard_normal(c.size))
    return ConcentrationSeries(t, c, Route.EXTRAVASCULAR, BENCH_DOSE)


def test_series_validation():
    with pytest.raises(DataError):
        ConcentrationSeries(np.arange(3.0), np.ones(3), Route.EXTRAVASCULAR, 10.0)
    with pytest.raises(DataError):
        ConcentrationSeries(np.array([1.0, 1.0, 2.0, 3.0]), np.ones(4), Route.EXTRAVASCULAR, 10.0)
    with pytest.raises(DataError):
        ConcentrationSeries(np.arange(4.0), np.array([1.0, np.inf, 1.0, 1.0]),
                            Route.EXTRAVASCULAR, 10.0)
    with pytest.raises(DomainError):
        ConcentrationSeries(np.arange(4.0) + 1.0, np.ones(4), Route.EXTRAVASCULAR, 0.0)


def test_series_from_csv(tmp_path):
    path = tmp_path / "conc.csv"
    path.write_text(
        "t,plasma,urine\n"
        "# morning samples\n"
        "60.0,0.11,0.0\n"
        "120.0,0.19,0.001\n"
        "300.0,0.31,0.004\n"
        "900.0,0.22,0.02\n"
    )
    by_name = ConcentrationSeries.from_csv(path, Route.EXTRAVASCULAR, 100.0, column="plasma")
    by_index = ConcentrationSeries.from_csv(path, Route.EXTRAVASCULAR, 100.0, column=1)
    assert np.array_equal(by_name.concentrations, [0.11, 0.19, 0.31, 0.22])
    assert np.array_equal(by_name.concentrations, by_index.concentrations)
    with pytest.raises(DataError, match="no column named"):
        ConcentrationSeries.from_csv(path, Route.EXTRAVASCULAR, 100.0, column="serum")
    path.write_text("t,c\n60.0,0.1\n120.0,bad\n300.0,0.3\n900.0,0.2\n")
    with pytest.raises(DataError, match="line 3"):
        ConcentrationSeries.from_csv(path, Route.EXTRAVASCULAR, 100.0)


def test_predict_agrees_with_channel_forms():
    t = np.linspace(0.0, 5000.0, 41)
    pk = PkParams(k_e=BENCH_K_E, V=BENCH_V, k_a=BENCH_K_A)
    assert np.allclose(
        predict(Route.INTRAVENOUS, t, BENCH_K_E, BENCH_DOSE / BENCH_V),
        iv_concentration(pk, BENCH_DOSE, t),
        rtol=1e-14,
    )
    assert np.allclose(
        predict(Route.EXTRAVASCULAR, t, BENCH_K_E, BENCH_DOSE / BENCH_V, BENCH_K_A),
        ev_concentration(pk, BENCH_DOSE, t),
        rtol=1e-14,
    )


def _fd_jacobian(route, t, theta, order):
    cols = []
    for name in order:
        idx = {"k_e": 0, "amplitude": 1, "k_a": 2}[name]
        col = np.zeros(len(t))
        for sign in (+1.0, -1.0):
            point = list(theta)
            h = 1e-6 * point[idx]
            point[idx] += sign * h
            col += sign * predict(route, t, *point) / (2.0 * h)
        cols.append(col)
    return np.column_stack(cols)


def test_jacobian_matches_finite_differences():
    t = np.linspace(30.0, 3000.0, 17)
    amp = BENCH_DOSE / BENCH_V
    j_ev = jacobian(Route.EXTRAVASCULAR, t, BENCH_K_E, amp, BENCH_K_A)
    fd_ev = _fd_jacobian(Route.EXTRAVASCULAR, t, (BENCH_K_E, amp, BENCH_K_A),
                         ("k_a", "k_e", "amplitude"))
    assert np.max(np.abs(j_ev - fd_ev)) / np.max(np.abs(j_ev)) < 1e-8
    j_iv = jacobian(Route.INTRAVENOUS, t, BENCH_K_E, amp)
    fd_iv = _fd_jacobian(Route.INTRAVENOUS, t, (BENCH_K_E, amp), ("k_e", "amplitude"))
    assert np.max(np.abs(j_iv - fd_iv)) / np.max(np.abs(j_iv)) < 1e-8


def test_jacobian_confluent_branch_matches_finite_differences():
    # step size large enough to keep the probe in well conditioned territory
    amp, k = 0.2, 2.0e-3
    t = np.linspace(30.0, 3000.0, 17)
    j = jacobian(Route.EXTRAVASCULAR, t, k, amp, k)
    eps = 1e-4 * k
    fd = np.column_stack([
        (predict(Route.EXTRAVASCULAR, t, k, amp, k + eps)
         - predict(Route.EXTRAVASCULAR, t, k, amp, k - eps)) / (2 * eps),
        (predict(Route.EXTRAVASCULAR, t, k + eps, amp, k)
         - predict(Route.EXTRAVASCULAR, t, k - eps, amp, k)) / (2 * eps),
        predict(Route.EXTRAVASCULAR, t, k, 1.0, k),
    ])
    assert np.max(np.abs(j - fd)) / np.max(np.abs(j)) < 1e-6


def test_curve_stripping_recovers_bench_constants():
    result = fit_residuals(_bench_series(), volume=BENCH_V)
    assert result.method == "residuals"
    assert result.params.k_a == pytest.approx(BENCH_K_A, rel=1e-2)
    assert result.params.k_e == pytest.approx(BENCH_K_E, rel=1e-2)
    assert result.lumped_amplitude == pytest.approx(BENCH_DOSE / BENCH_V, rel=1e-2)
    assert 0.99 <= result.params.F <= 1.0


def test_least_squares_recovers_bench_constants_exactly():
    init = PkParams(k_e=2 * BENCH_K_E, V=BENCH_V / 2, k_a=2 * BENCH_K_A)
    result = fit_least_squares(_bench_series(), init, volume=BENCH_V)
    assert result.params.k_a == pytest.approx(BENCH_K_A, rel=1e-10)
    assert result.params.k_e == pytest.approx(BENCH_K_E, rel=1e-10)
    assert result.params.V == BENCH_V
    assert result.rss < 1e-20
    assert result.iterations <= 20


def test_least_squares_accepts_perfect_initialization():
    truth = PkParams(k_e=BENCH_K_E, V=BENCH_V, k_a=BENCH_K_A)
    result = fit_least_squares(_bench_series(), truth, volume=BENCH_V)
    assert result.iterations == 1
    assert result.rss < 1e-25


def test_least_squares_tolerates_measurement_noise():
    data = _bench_series(noise_sigma=0.01)
    init = fit_residuals(data, volume=BENCH_V).params
    result = fit_least_squares(data, init, volume=BENCH_V)
    assert result.params.k_a == pytest.approx(BENCH_K_A, rel=5e-2)
    assert result.params.k_e == pytest.approx(BENCH_K_E, rel=5e-2)


def test_intravenous_fits():
    pk = PkParams(k_e=BENCH_K_E, V=BENCH_V)
    t = np.linspace(60.0, 4800.0, 16)
    data = ConcentrationSeries(t, iv_concentration(pk, BENCH_DOSE, t), Route.INTRAVENOUS,
                               BENCH_DOSE)
    stripped = fit_residuals(data)
    assert stripped.params.k_e == pytest.approx(BENCH_K_E, rel=1e-10)
    assert stripped.params.k_a is None
    assert not stripped.flip_flop_ambiguous
    refined = fit_least_squares(data, PkParams(k_e=2 * BENCH_K_E, V=BENCH_V / 2))
    assert refined.params.k_e == pytest.approx(BENCH_K_E, rel=1e-10)
    assert refined.params.V == pytest.approx(BENCH_V, rel=1e-10)


def test_flip_flop_reports_both_readings():
    pk = PkParams(k_e=RAT_K_E, V=RAT_V, k_a=RAT_K_A)
    t = np.linspace(600.0, 40000.0, 30)
    data = ConcentrationSeries(t, ev_concentration(pk, RAT_DOSE, t), Route.EXTRAVASCULAR,
                               RAT_DOSE)
    init = PkParams(k_e=RAT_K_A * 1.8, V=RAT_V * 1.3, k_a=RAT_K_E * 0.6)
    result = fit_least_squares(data, init, volume=RAT_V)
    # primary reading applies the absorption-faster convention
    assert result.flip_flop_ambiguous
    assert result.params.k_a == pytest.approx(RAT_K_E, rel=1e-8)
    assert result.params.k_e == pytest.approx(RAT_K_A, rel=1e-8)
    assert result.k_fast == pytest.approx(RAT_K_E, rel=1e-8)
    assert result.k_slow == pytest.approx(RAT_K_A, rel=1e-8)
    # the alternate reading is the transmitted truth and predicts the same curve
    alt = result.alternate
    assert alt is not None
    assert alt.k_a == pytest.approx(RAT_K_A, rel=1e-8)
    assert alt.k_e == pytest.approx(RAT_K_E, rel=1e-8)
    assert alt.V == RAT_V
    curve_alt = ev_concentration(alt, RAT_DOSE, t)
    assert np.allclose(curve_alt, data.concentrations, rtol=1e-10)
    # both readings reproduce the observations
    curve_primary = predict(Route.EXTRAVASCULAR, t, result.params.k_e,
                            result.lumped_amplitude, result.params.k_a)
    assert np.allclose(curve_primary, data.concentrations, rtol=1e-8)


def test_volume_reconstruction_without_volume():
    result = fit_least_squares(
        _bench_series(), PkParams(k_e=2 * BENCH_K_E, V=BENCH_V / 2, k_a=2 * BENCH_K_A)
    )
    assert result.params.F == 1.0
    assert result.params.V == pytest.approx(BENCH_V, rel=1e-8)


def test_bioavailability_is_capped_at_one():
    # a supplied volume implying F > 1 is clamped; the amplitude stays honest
    result = fit_least_squares(
        _bench_series(),
        PkParams(k_e=2 * BENCH_K_E, V=BENCH_V / 2, k_a=2 * BENCH_K_A),
        volume=2.0 * BENCH_V,
    )
    assert result.params.F == 1.0
    assert result.lumped_amplitude == pytest.approx(BENCH_DOSE / BENCH_V, rel=1e-8)


def test_unfittable_data_raises_convergence_error():
    flat = ConcentrationSeries(np.arange(5.0) + 1.0, np.ones(5), Route.EXTRAVASCULAR, 10.0)
    with pytest.raises(ConvergenceError):
        fit_least_squares(flat, PkParams(k_e=1e-6, V=1.0, k_a=2e-6))


def test_stripping_rejects_non_decaying_data():
    t = np.arange(5.0) + 1.0
    rising = ConcentrationSeries(t, np.array([1.0, 2.0, 4.0, 8.0, 16.0]), Route.INTRAVENOUS, 10.0)
    with pytest.raises(ConvergenceError):
        fit_residuals(rising)
    bad_tail = ConcentrationSeries(t, np.array([1.0, 5.0, 2.0, 3.0, 4.5]),
                                   Route.EXTRAVASCULAR, 10.0)
    with pytest.raises(ConvergenceError):
        fit_residuals(bad_tail)


def test_stripping_needs_enough_post_peak_points():
    t = np.arange(4.0) + 1.0
    data = ConcentrationSeries(t, np.array([1.0, 3.0, 2.5, 2.0]), Route.EXTRAVASCULAR, 10.0)
    with pytest.raises(DataError):
        fit_residuals(data)


def test_calibration_scale():
    rng = np.random.default_rng(2)
    model = rng.standard_normal(50)
    assert calibration_scale(model, 3.0 * model) == pytest.approx(3.0, rel=1e-14)
    noisy = 2.0 * model + 0.01 * rng.standard_normal(50)
    s = calibration_scale(model, noisy)
    # least squares optimality: the residual is orthogonal to the model
    assert abs(model @ (noisy - s * model)) < 1e-10
    with pytest.raises(DomainError):
        calibration_scale(np.zeros(5), np.ones(5))
    with pytest.raises(DomainError):
        calibration_scale(np.ones(4), np.ones(5))
