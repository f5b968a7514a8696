import numpy as np
import pytest

from snlse_lab import (
    QWienerSpec,
    SpectralGrid,
    exact_convolution_sample,
    sample_path,
    wiener_increment,
)
from snlse_lab.spectral import phi1_scalar


def test_qwiener_spec_validation():
    with pytest.raises(ValueError):
        QWienerSpec(noise_amplitude=-1.0)
    with pytest.raises(ValueError):
        QWienerSpec(family="gaussian")
    with pytest.raises(ValueError):
        QWienerSpec.from_table([-1.0, 0.5])
    spec = QWienerSpec.power_decay(8, 1.0)
    lam = spec.eigenvalues(SpectralGrid(8))
    assert lam[4] == 1.0  # mode 0
    assert lam[5] == pytest.approx(0.5)  # mode 1


def test_hs_norm_sq():
    grid = SpectralGrid(64)
    spec = QWienerSpec.power_decay(8, 1.0)
    lam = spec.eigenvalues(grid)
    modes = grid.mode_indices
    expect = np.sum((1.0 + np.abs(modes)) ** 2 * lam) / (2 * np.pi)
    assert spec.hs_norm_sq(1.0, grid) == pytest.approx(expect, rel=1e-14)


def test_zero_covariance_gives_zero_increment():
    grid = SpectralGrid(16)
    spec = QWienerSpec.from_table(np.zeros(16), amplitude=1.0)
    path = sample_path(spec, grid, 1, 0, 0.1, 4)
    assert np.all(wiener_increment(path, 0, 2).coeffs == 0.0)


def test_determinism_bitwise():
    grid = SpectralGrid(16)
    spec = QWienerSpec.power_decay(8, 1.0)
    a = sample_path(spec, grid, 123, 7, 0.05, 32)
    b = sample_path(spec, grid, 123, 7, 0.05, 32)
    # access in different orders; values must not depend on traversal
    b.fine_increment(31)
    for step in (5, 0, 17):
        assert np.array_equal(a.fine_increment(step), b.fine_increment(step))
    c = sample_path(spec, grid, 123, 8, 0.05, 32)
    assert not np.array_equal(a.fine_increment(0), c.fine_increment(0))


def test_prefix_stability_under_path_length():
    grid = SpectralGrid(16)
    spec = QWienerSpec.power_decay(8, 1.0)
    long = sample_path(spec, grid, 9, 2, 0.1, 2000)
    short = sample_path(spec, grid, 9, 2, 0.1, 3)
    for step in (0, 1, 2):
        assert np.array_equal(long.fine_increment(step), short.fine_increment(step))


def test_single_increment_definition():
    grid = SpectralGrid(16)
    spec = QWienerSpec.power_decay(8, 1.0)
    path = sample_path(spec, grid, 5, 1, 0.2, 4)
    raw = path.fine_increment(2)
    lam = spec.eigenvalues(grid)
    expect = np.sqrt(lam) / np.sqrt(2 * np.pi) * raw
    assert np.array_equal(wiener_increment(path, 2, 1).coeffs, expect)


def test_coarse_aggregation_bitwise():
    grid = SpectralGrid(16)
    spec = QWienerSpec.power_decay(8, 1.0)
    path = sample_path(spec, grid, 5, 1, 0.1, 16)
    for r in (2, 4, 8, 16):
        coarse = wiener_increment(path, 0, r).coeffs
        total = wiener_increment(path, 0, 1).coeffs.copy()
        for i in range(1, r):
            total = total + wiener_increment(path, i, 1).coeffs
        assert np.array_equal(coarse, total)


def test_increment_out_of_range():
    grid = SpectralGrid(16)
    spec = QWienerSpec.power_decay(8, 1.0)
    path = sample_path(spec, grid, 5, 1, 0.1, 8)
    with pytest.raises(ValueError):
        wiener_increment(path, 4, 2)
    with pytest.raises(ValueError):
        path.fine_increment(8)


def test_single_mode_variance_monte_carlo():
    # one long path: disjoint fine increments are i.i.d. samples
    grid = SpectralGrid(8)
    table = np.zeros(8)
    table[4] = 1.0  # mode 0
    spec = QWienerSpec.from_table(table, amplitude=1.0)
    path = sample_path(spec, grid, 31, 0, 1.0, 10**5)
    sq = np.empty(10**5)
    for block in range(0, 10**5, 1024):
        rows = path._block(block // 1024)
        sq[block : block + rows.shape[0]] = np.abs(rows[:, 4]) ** 2
    emp, se = sq.mean(), sq.std(ddof=1) / np.sqrt(len(sq))
    assert abs(emp - 1.0) <= 3 * se


def test_ito_isometry_increments():
    grid = SpectralGrid(64)
    spec = QWienerSpec.power_decay(8, 1.0)
    tau = 0.1
    m = 10**5
    path = sample_path(spec, grid, 77, 0, tau, m)
    scale = np.sqrt(spec.eigenvalues(grid)) / np.sqrt(2 * np.pi)
    for sigma in (0.0, 1.0):
        w = (1.0 + np.abs(grid.mode_indices)) ** (2 * sigma)
        sq = np.empty(m)
        for block in range(0, m, 1024):
            rows = path._block(block // 1024) * scale
            sq[block : block + rows.shape[0]] = np.sum(w * np.abs(rows) ** 2, axis=1)
        emp, se = sq.mean(), sq.std(ddof=1) / np.sqrt(m)
        theory = tau * spec.hs_norm_sq(sigma, grid)
        assert abs(emp - theory) <= 3 * se


def test_disjoint_increment_independence():
    grid = SpectralGrid(8)
    spec = QWienerSpec.power_decay(8, 1.0)
    m = 20000
    path = sample_path(spec, grid, 11, 0, 0.5, 2 * m)
    a = np.empty(m, dtype=complex)
    b = np.empty(m, dtype=complex)
    for i in range(m):
        a[i] = path.fine_increment(2 * i)[5]
        b[i] = path.fine_increment(2 * i + 1)[5]
    corr = np.abs(np.mean(a * np.conj(b))) / (np.std(a) * np.std(b))
    assert corr <= 4.0 / np.sqrt(m)


def test_convolution_mode_zero_exact():
    grid = SpectralGrid(8)
    spec = QWienerSpec.power_decay(8, 1.0)
    tau = 0.25
    path = sample_path(spec, grid, 3, 0, tau, 4)
    rng = path.residual_rng(1, 2)
    conv = exact_convolution_sample(path, spec, 2, tau, rng)
    dw = wiener_increment(path, 2, 1)
    # mode 0: I_0 = delta beta_0, unit correlation
    assert conv.coefficient(0) == pytest.approx(dw.coefficient(0), rel=1e-12)


def test_convolution_correlation_near_one_small_tau():
    # Corr(I_k, e^{i k^2 t_n} delta beta_k) = |phi1(i k^2 tau)| = 1 - (k^2 tau)^2/24 + ...
    tau = 1e-4
    for k in (0, 1, 2, 3, 5, 6):
        corr = abs(phi1_scalar(1j * k * k * tau))
        assert 1.0 - corr <= 1e-6


def test_convolution_covariance_vs_riemann_sum():
    # fine Riemann-sum simulation of I_k = int e^{i k^2 s} d beta over the window
    rng = np.random.default_rng(5150)
    k, tau, t_n, m, sub = 3, 0.1, 0.7, 60000, 64
    dt = tau / sub
    z = rng.standard_normal((m, sub, 2))
    dbeta = np.sqrt(dt / 2) * (z[:, :, 0] + 1j * z[:, :, 1])
    s = t_n + dt * np.arange(sub)  # left endpoints
    i_k = np.sum(np.exp(1j * k * k * s) * dbeta, axis=1)
    total = np.sum(dbeta, axis=1)
    cov = np.mean(i_k * np.conj(total))
    expect = tau * np.exp(1j * k * k * t_n) * phi1_scalar(1j * k * k * tau)
    # Riemann bias O(k^2 tau/sub) plus Monte Carlo noise
    assert abs(cov - expect) <= 4 * tau / np.sqrt(m) + tau * (k * k * tau) / sub
    assert np.mean(np.abs(i_k) ** 2) == pytest.approx(tau, rel=0.05)


def test_convolution_variance_monte_carlo():
    grid = SpectralGrid(16)
    spec = QWienerSpec.from_table(np.full(16, 2 * np.pi), amplitude=1.0)
    tau, k_mode, m = 0.1, 5, 10**5
    path = sample_path(spec, grid, 17, 0, tau, m)
    idx = k_mode + 8
    vals = np.empty(m, dtype=complex)
    # with lambda = 2 pi the increment coefficient is delta beta itself
    for block in range(0, m, 1024):
        rows = path._block(block // 1024)
        stop = block + rows.shape[0]
        vals[block:stop] = rows[:, idx]
    corr = phi1_scalar(1j * k_mode**2 * tau)
    resvar = tau * (1.0 - abs(corr) ** 2)
    rng = np.random.default_rng(9)
    z = rng.standard_normal((m, 2))
    samples = corr * vals + np.sqrt(resvar / 2) * (z[:, 0] + 1j * z[:, 1])
    sq = np.abs(samples) ** 2
    se = sq.std(ddof=1) / np.sqrt(m)
    assert abs(sq.mean() - tau) <= 3 * se


def test_exact_convolution_sample_determinism():
    grid = SpectralGrid(16)
    spec = QWienerSpec.power_decay(8, 1.0)
    path = sample_path(spec, grid, 21, 4, 0.05, 8)
    a = exact_convolution_sample(path, spec, 3, 0.05, path.residual_rng(1, 3))
    b = exact_convolution_sample(path, spec, 3, 0.05, path.residual_rng(1, 3))
    assert np.array_equal(a.coeffs, b.coeffs)
    with pytest.raises(ValueError):
        exact_convolution_sample(path, spec, 0, 0.07, path.residual_rng(1, 0))
