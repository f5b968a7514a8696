import numpy as np
import pytest

from snlse_lab import (
    SLI1,
    SNRLI1,
    DivergenceError,
    QWienerSpec,
    SchemeParams,
    SpectralGrid,
    SpectralState,
    integrate,
    sample_path,
    sobolev_norm,
)
from snlse_lab.analysis import (
    ErrorConfig,
    ErrorRecord,
    compute_R_term,
    epsilon_scaling_study,
    local_error_decomposition_check,
    longterm_error_curve,
    moment_monitor,
    order_fit,
    rco_frequency_split,
    strong_error,
)
from snlse_lab.spectral import single_mode_coeffs, smooth_rational_coeffs

from conftest import make_state


def rec(tau, err):
    return ErrorRecord(
        tau=tau, time=1.0, error_value=err, error_sq=err**2,
        std_error=0.0, scheme_kind=SNRLI1, num_paths_used=1,
    )


def test_error_config_validation():
    with pytest.raises(ValueError):
        ErrorConfig(num_paths=0)
    with pytest.raises(ValueError):
        ErrorConfig(num_paths=1, epsilon=1.5)
    cfg = ErrorConfig(num_paths=4, epsilon=0.1, q_exponent=3.5)
    assert cfg.mu_scaled == pytest.approx(0.01)
    assert cfg.alpha_scaled == pytest.approx(0.1**2.5)
    assert cfg.predicted_order() == pytest.approx(0.5)


def test_order_fit_exact_power_laws():
    taus = [0.2, 0.1, 0.05, 0.025]
    slope, _, r2 = order_fit([rec(t, 3.0 * t**0.5) for t in taus])
    assert slope == pytest.approx(0.5, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)
    slope, _, _ = order_fit([rec(t, 0.7 * t) for t in taus])
    assert slope == pytest.approx(1.0, abs=1e-12)


def test_order_fit_jitter():
    rng = np.random.default_rng(3)
    taus = np.array([2.0**-e for e in range(2, 9)])
    errs = 0.9 * taus**0.75 * np.exp(rng.uniform(-0.05, 0.05, taus.size))
    slope, _, _ = order_fit([rec(t, e) for t, e in zip(taus, errs)])
    assert abs(slope - 0.75) < 0.05


def test_order_fit_invalid_inputs():
    with pytest.raises(ValueError):
        order_fit([rec(0.1, 1.0), rec(0.05, 0.5)])
    with pytest.raises(ValueError):
        order_fit([rec(0.1, 1.0), rec(0.1, 1.0), rec(0.1, 1.0)])
    with pytest.raises(ValueError):
        order_fit([rec(0.1, 1.0), rec(0.05, 0.0), rec(0.025, 0.2)])


def _cfg(m=4, seed=99, sigma=1.0):
    return ErrorConfig(num_paths=m, sigma=sigma, p_moment=1, master_seed=seed)


def test_strong_error_self_comparison_is_zero(grid32, rng):
    q = QWienerSpec.power_decay(8, amplitude=0.4)
    scheme = SchemeParams(mu=1.0, tau=0.05, noise=q, scheme_kind=SNRLI1)
    ref = SchemeParams(mu=1.0, tau=0.05, noise=q, scheme_kind=SNRLI1)
    initial = SpectralState(grid32, smooth_rational_coeffs(grid32, 0.3))
    records = strong_error(scheme, ref, _cfg(), [0.05], 0.5, initial)
    assert records[0].error_value == 0.0
    assert records[0].std_error == 0.0


def test_strong_error_commensuration_errors(grid32):
    q = QWienerSpec.power_decay(8, amplitude=0.1)
    scheme = SchemeParams(mu=0.0, tau=0.05, noise=q, scheme_kind=SNRLI1)
    ref = SchemeParams(mu=0.0, tau=0.02, noise=q, scheme_kind=SNRLI1)
    initial = SpectralState(grid32, smooth_rational_coeffs(grid32, 0.3))
    with pytest.raises(ValueError):
        strong_error(scheme, ref, _cfg(), [0.05], 0.5, initial)  # 0.05/0.02 not integer
    ref = SchemeParams(mu=0.0, tau=0.025, noise=q, scheme_kind=SNRLI1)
    with pytest.raises(ValueError):
        strong_error(scheme, ref, _cfg(), [0.05], 0.52, initial)  # T not multiple


def test_strong_error_workers_match_serial(grid32):
    q = QWienerSpec.power_decay(8, amplitude=0.3)
    scheme = SchemeParams(mu=0.5, tau=0.05, noise=q, scheme_kind=SNRLI1)
    ref = SchemeParams(mu=0.5, tau=0.0125, noise=q, scheme_kind=SNRLI1)
    initial = SpectralState(grid32, smooth_rational_coeffs(grid32, 0.3))
    a = strong_error(scheme, ref, _cfg(m=4), [0.05, 0.025], 0.25, initial, workers=1)
    b = strong_error(scheme, ref, _cfg(m=4), [0.05, 0.025], 0.25, initial, workers=3)
    for ra, rb in zip(a, b):
        assert ra.error_value == rb.error_value
        assert ra.std_error == rb.std_error


def test_moment_ordering_h1_vs_h0(grid32, rng):
    # per-path H^1 >= H^0 for any coefficient difference
    for _ in range(20):
        d = make_state(grid32, rng)
        assert sobolev_norm(d, 1.0) >= sobolev_norm(d, 0.0)


def test_longterm_zero_at_t0_and_m_doubling(grid32):
    q = QWienerSpec.power_decay(8, amplitude=0.3**2.0)
    schemes = [
        SchemeParams(mu=0.09, tau=0.05, noise=q, scheme_kind=SNRLI1),
        SchemeParams(mu=0.09, tau=0.05, noise=q, scheme_kind=SLI1),
    ]
    ref = SchemeParams(mu=0.09, tau=0.0125, noise=q, scheme_kind=SNRLI1)
    initial = SpectralState(grid32, smooth_rational_coeffs(grid32))
    curves_a = longterm_error_curve(
        schemes, _cfg(m=6), 0.05, 1.0, 4, ref_driver=ref, initial=initial
    )
    for kind in (SNRLI1, SLI1):
        assert curves_a[kind][0].time == 0.0
        assert curves_a[kind][0].error_value == 0.0
    curves_b = longterm_error_curve(
        schemes, _cfg(m=12), 0.05, 1.0, 4, ref_driver=ref, initial=initial
    )
    # doubling M moves each point by less than 3 pooled standard errors
    for kind in (SNRLI1, SLI1):
        for ra, rb in zip(curves_a[kind][1:], curves_b[kind][1:]):
            pooled = np.sqrt(ra.std_error**2 + rb.std_error**2)
            assert abs(ra.error_value - rb.error_value) <= 3.0 * pooled


def test_epsilon_scaling_determinism_and_q25_exponent(grid32):
    # rougher noise (decay exponent 5) and small data keep the noise branch
    # dominant, where the horizon error scales like epsilon^(q-2)
    cfg = ErrorConfig(num_paths=32, sigma=1.0, p_moment=1, epsilon=0.5,
                      q_exponent=2.5, master_seed=31)
    initial = SpectralState(grid32, smooth_rational_coeffs(grid32, 0.5))
    kwargs = dict(
        T=0.5,
        noise_template=QWienerSpec.power_decay(5, 0.0),
        tau_ref=0.002,
        initial=initial,
        scheme_kind=SNRLI1,
    )
    rows_a, exp_a = epsilon_scaling_study(cfg, [0.5, 0.35, 0.25], 0.01, "scaled_T_eps", **kwargs)
    rows_b, exp_b = epsilon_scaling_study(cfg, [0.5, 0.35, 0.25], 0.01, "scaled_T_eps", **kwargs)
    assert exp_a == exp_b
    for ra, rb in zip(rows_a, rows_b):
        assert ra.error_value == rb.error_value
    assert abs(exp_a - 0.5) <= 0.2


def test_epsilon_scaling_rejects_bad_horizon(grid32):
    cfg = ErrorConfig(num_paths=2, master_seed=1)
    initial = SpectralState(grid32, smooth_rational_coeffs(grid32))
    with pytest.raises(ValueError):
        epsilon_scaling_study(
            cfg, [0.1], 0.01, "sometimes",
            T=1.0, noise_template=QWienerSpec.power_decay(8, 0.0),
            tau_ref=0.001, initial=initial,
        )


def test_compute_r_term_zero_cases(grid8):
    v = SpectralState(grid8, single_mode_coeffs(grid8, 1.2 - 0.3j, 2))
    assert np.max(np.abs(compute_R_term(v, 1.7, 0.1, 1.0).coeffs)) == 0.0
    w = SpectralState(grid8, single_mode_coeffs(grid8, 1.0, 1))
    assert np.max(np.abs(compute_R_term(w, 0.0, 0.0, 1.0).coeffs)) == 0.0


def test_compute_r_term_cost_guard():
    grid = SpectralGrid(64)
    v = SpectralState(grid, np.zeros(64, dtype=complex))
    with pytest.raises(ValueError):
        compute_R_term(v, 0.0, 0.1, 1.0)


def _r_term_quadrature_oracle(v, t_n, tau, coeff, nodes=10**4):
    num_modes = v.grid.num_modes
    half = num_modes // 2
    modes = v.grid.mode_indices
    c = v.coeffs
    s = np.linspace(0.0, tau, nodes + 1)
    out = np.zeros(num_modes, dtype=complex)
    for i1, l1 in enumerate(modes):
        if c[i1] == 0:
            continue
        for i2, l2 in enumerate(modes):
            for i3, l3 in enumerate(modes):
                l = -l1 + l2 + l3
                phase = l * l + l1 * l1 - l2 * l2 - l3 * l3
                if phase == 0 or not -half <= l < half:
                    continue
                amp = np.conj(c[i1]) * c[i2] * c[i3]
                if amp == 0:
                    continue
                integral = np.trapezoid(np.exp(2j * s * l1 * l1) - np.exp(1j * s * phase), s)
                out[l + half] += amp * np.exp(1j * t_n * phase) * integral
    return 1j * coeff * out


def test_compute_r_term_vs_quadrature(grid8, rng):
    for _ in range(4):
        modes = rng.choice(8, size=2, replace=False)
        c = np.zeros(8, dtype=complex)
        for i in modes:
            c[i] = rng.standard_normal() + 1j * rng.standard_normal()
        v = SpectralState(grid8, c)
        got = compute_R_term(v, 0.9, 0.1, 0.7).coeffs
        want = _r_term_quadrature_oracle(v, 0.9, 0.1, 0.7)
        scale = max(np.max(np.abs(want)), 1e-30)
        assert np.max(np.abs(got - want)) <= 1e-8 * scale


def _two_mode_state(grid, rng, h1_target=2.0):
    c = np.zeros(grid.num_modes, dtype=complex)
    for mode in (-1, 1):
        c[mode + grid.num_modes // 2] = rng.standard_normal() + 1j * rng.standard_normal()
    state = SpectralState(grid, c)
    return SpectralState(grid, c * (h1_target / sobolev_norm(state, 1.0)))


def test_decomposition_zero_and_single_mode(grid8):
    params = SchemeParams(mu=1.0, tau=0.05, noise=QWienerSpec.power_decay(8, 0.0),
                          scheme_kind=SNRLI1)
    zero = SpectralState(grid8, np.zeros(8, dtype=complex))
    assert local_error_decomposition_check(zero, 0.0, 0.05, params, 16) == 0.0
    # single mode: identity holds by resonance, residual is pure quadrature error
    single = SpectralState(grid8, single_mode_coeffs(grid8, 0.8 + 0.1j, 1))
    res = local_error_decomposition_check(single, 0.3, 0.05, params, 256)
    assert res <= 1e-8 * sobolev_norm(single, 1.0) ** 3


def test_decomposition_two_mode_and_richardson_factor(grid8, rng):
    params = SchemeParams(mu=1.0, tau=0.05, noise=QWienerSpec.power_decay(8, 0.0),
                          scheme_kind=SNRLI1)
    v = _two_mode_state(grid8, rng)
    res = local_error_decomposition_check(v, 0.4, 0.05, params, 256)
    assert res <= 1e-8 * sobolev_norm(v, 1.0) ** 3
    res4 = local_error_decomposition_check(v, 0.4, 0.05, params, 1024)
    assert 8.0 <= res / res4 <= 32.0


def test_decomposition_requires_zero_noise(grid8):
    params = SchemeParams(mu=1.0, tau=0.05, noise=QWienerSpec.power_decay(8, 0.5),
                          scheme_kind=SNRLI1)
    v = SpectralState(grid8, single_mode_coeffs(grid8, 1.0, 1))
    with pytest.raises(ValueError):
        local_error_decomposition_check(v, 0.0, 0.05, params, 64)


def test_rco_frequency_split(grid32, rng):
    v = make_state(grid32, rng)
    # N0 = K keeps everything
    low, high = rco_frequency_split(v, 1.0 / 16.0)
    assert high == 0.0
    assert low == pytest.approx(sobolev_norm(v, 1.0), rel=1e-14)
    banded = make_state(grid32, rng, band=4)
    low, high = rco_frequency_split(banded, 0.25)  # N0 = 8 keeps |k| <= 4
    assert high == 0.0
    with pytest.raises(ValueError):
        rco_frequency_split(v, 1.5)
    with pytest.raises(ValueError):
        rco_frequency_split(v, 0.01)  # N0 = 200 > K


def test_rco_tail_bound(grid32):
    # coefficients (1+|k|)^-3: H^1 tail beyond N0 obeys C tau0^sigma ||v||_{1+sigma}
    k = np.abs(grid32.mode_indices).astype(float)
    v = SpectralState(grid32, (1.0 + k) ** -3.0 + 0j)
    sigma = 1.0
    for tau0 in (0.5, 0.25, 0.125):
        _, high = rco_frequency_split(v, tau0)
        n0 = 2 * int(np.floor(1.0 / tau0))
        # direct tail summation bound: ||(I-P)v||_1 <= (1+N0/2)^-sigma ||v||_{1+sigma}
        bound = (1.0 + n0 / 2.0) ** -sigma * sobolev_norm(v, 1.0 + sigma)
        assert high <= bound
        assert bound <= tau0**sigma * sobolev_norm(v, 1.0 + sigma)


def test_moment_monitor_free_flight_constant(grid32, rng):
    q0 = QWienerSpec.power_decay(8, amplitude=0.0)
    p = SchemeParams(mu=0.0, tau=0.05, noise=q0, scheme_kind=SNRLI1)
    u = make_state(grid32, rng)
    trajs = []
    for m in range(3):
        path = sample_path(q0, grid32, 7, m, 0.05, 20)
        trajs.append(integrate(u, path, p, 20, 1))
    times, series = moment_monitor(trajs, 1.0, 1)
    assert len(times) == 21
    assert np.all(np.diff(series) >= 0.0)
    assert np.max(series) - np.min(series) <= 1e-11 * np.max(series)


def test_moment_monitor_linear_growth(grid32):
    # mu = 0: the sigma=0, p=1 moment grows linearly with slope alpha^2 * hs(0);
    # the running supremum inflates it by at most Doob's L^2 factor of 4
    q = QWienerSpec.power_decay(8, amplitude=1.0)
    p = SchemeParams(mu=0.0, tau=0.05, noise=q, scheme_kind=SNRLI1)
    zero = SpectralState(grid32, np.zeros(32, dtype=complex))
    trajs = []
    for m in range(300):
        path = sample_path(q, grid32, 55, m, 0.05, 20)
        trajs.append(integrate(zero, path, p, 20, 1))
    times, series = moment_monitor(trajs, 0.0, 1)
    theory = q.hs_norm_sq(0.0, grid32) * times[-1]
    assert np.all(np.diff(series) >= 0.0)
    assert series[-1] >= 0.8 * theory
    assert series[-1] <= 4.0 * theory


def test_moment_monitor_mismatched_times(grid32, rng):
    q0 = QWienerSpec.power_decay(8, amplitude=0.0)
    p = SchemeParams(mu=0.0, tau=0.05, noise=q0, scheme_kind=SNRLI1)
    u = make_state(grid32, rng)
    path = sample_path(q0, grid32, 7, 0, 0.05, 20)
    a = integrate(u, path, p, 20, 1)
    b = integrate(u, path, p, 10, 1)
    with pytest.raises(ValueError):
        moment_monitor([a, b], 1.0, 1)


def test_strong_error_divergence_reporting(grid32):
    # explicit scheme at a huge step on large data: every path diverges
    q = QWienerSpec.power_decay(8, amplitude=0.1)
    scheme = SchemeParams(mu=50.0, tau=0.5, noise=q, scheme_kind=SNRLI1)
    ref = SchemeParams(mu=50.0, tau=0.125, noise=q, scheme_kind=SNRLI1)
    initial = SpectralState(grid32, smooth_rational_coeffs(grid32, 2.0))
    with pytest.raises(DivergenceError):
        strong_error(scheme, ref, _cfg(m=2), [0.5], 2.0, initial)
