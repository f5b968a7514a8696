"""Fast invariant checks over all modules, used by the selftest experiment."""

from __future__ import annotations

import numpy as np

from .analysis import ErrorRecord, compute_R_term, order_fit
from .integrators import SNRLI1, SchemeParams, g_term, h_term, snrli1_step, snrli1_twisted_step
from .noise import QWienerSpec, sample_path, wiener_increment
from .spectral import (
    SpectralGrid,
    SpectralState,
    conjugate_state,
    free_group_apply,
    phi1_scalar,
    project_low_modes,
    single_mode_coeffs,
    sobolev_norm,
)


def _random_state(grid, rng, decay=2.0):
    k = np.abs(grid.mode_indices).astype(float)
    c = (rng.standard_normal(grid.num_modes) + 1j * rng.standard_normal(grid.num_modes))
    return SpectralState(grid, c / (1.0 + k) ** decay)


def check_transform_round_trip() -> bool:
    rng = np.random.default_rng(11)
    for k in (8, 64, 256):
        grid = SpectralGrid(k)
        v = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        w = grid.coeffs_to_values(grid.values_to_coeffs(v))
        if np.max(np.abs(w - v)) > 1e-12 * np.max(np.abs(v)):
            return False
    return True


def check_group_isometry() -> bool:
    rng = np.random.default_rng(12)
    grid = SpectralGrid(64)
    for _ in range(50):
        u = _random_state(grid, rng)
        t = rng.uniform(-10, 10)
        for sigma in (0.0, 1.0, 2.0):
            a = sobolev_norm(free_group_apply(u, t), sigma)
            b = sobolev_norm(u, sigma)
            if abs(a - b) > 1e-12 * b:
                return False
    return True


def check_phi1_continuity() -> bool:
    rng = np.random.default_rng(13)
    if phi1_scalar(0.0) != 1.0:
        return False
    for _ in range(200):
        z = rng.uniform(-1e-3, 1e-3) + 1j * rng.uniform(-1e-3, 1e-3)
        if abs(phi1_scalar(z) - 1.0 - z / 2.0) > abs(z) ** 2:
            return False
    return True


def check_projector() -> bool:
    rng = np.random.default_rng(14)
    grid = SpectralGrid(32)
    u = _random_state(grid, rng)
    p1 = project_low_modes(u, 16)
    p2 = project_low_modes(p1, 16)
    if not np.array_equal(p1.coeffs, p2.coeffs):
        return False
    if sobolev_norm(p1, 1.0) > sobolev_norm(u, 1.0) + 1e-15:
        return False
    a = project_low_modes(free_group_apply(u, 0.7), 16).coeffs
    b = free_group_apply(project_low_modes(u, 16), 0.7).coeffs
    return bool(np.max(np.abs(a - b)) < 1e-12)


def check_noise_determinism_and_coupling() -> bool:
    grid = SpectralGrid(16)
    q = QWienerSpec.power_decay(8, 1.0)
    a = sample_path(q, grid, 5, 3, 0.1, 16)
    b = sample_path(q, grid, 5, 3, 0.1, 16)
    if not np.array_equal(a.fine_increment(7), b.fine_increment(7)):
        return False
    for r in (2, 4, 8, 16):
        coarse = wiener_increment(a, 0, r).coeffs
        total = wiener_increment(a, 0, 1).coeffs.copy()
        for i in range(1, r):
            total = total + wiener_increment(a, i, 1).coeffs
        if not np.array_equal(coarse, total):
            return False
    return True


def check_single_mode_closed_form() -> bool:
    rng = np.random.default_rng(15)
    grid = SpectralGrid(32)
    q = QWienerSpec.power_decay(8, 0.0)
    for _ in range(20):
        mode = int(rng.integers(-16, 16))
        c = complex(rng.standard_normal(), rng.standard_normal())
        tau = float(10.0 ** rng.uniform(-4, -1))
        mu = float(rng.uniform(-2, 2))
        params = SchemeParams(mu=mu, tau=tau, noise=q, scheme_kind=SNRLI1)
        u = SpectralState(grid, single_mode_coeffs(grid, c, mode))
        out = snrli1_step(u, None, params)
        expect = np.exp(-1j * mode * mode * tau) * (1.0 - 1j * tau * mu * abs(c) ** 2) * c
        if abs(out.coefficient(mode) - expect) > 1e-12 * abs(expect):
            return False
    return True


def check_twisted_conjugation() -> bool:
    rng = np.random.default_rng(16)
    grid = SpectralGrid(32)
    q = QWienerSpec.power_decay(8, 0.5)
    params = SchemeParams(mu=1.2, tau=0.02, noise=q, scheme_kind=SNRLI1)
    path = sample_path(q, grid, 9, 0, 0.02, 2)
    dw = wiener_increment(path, 0, 1)
    for t_n in (0.0, 2.31):
        v = _random_state(grid, rng)
        lhs = snrli1_step(free_group_apply(v, t_n), dw, params).coeffs
        rhs = free_group_apply(snrli1_twisted_step(v, t_n, dw, params), t_n + params.tau).coeffs
        if np.max(np.abs(lhs - rhs)) > 1e-12 * max(np.max(np.abs(lhs)), 1e-30):
            return False
    return True


def check_g_h_vanish_at_zero_tau() -> bool:
    rng = np.random.default_rng(17)
    grid = SpectralGrid(16)
    u = _random_state(grid, rng)
    return (
        np.max(np.abs(g_term(u, 0.0).coeffs)) == 0.0
        and np.max(np.abs(h_term(u, 0.0).coeffs)) == 0.0
    )


def check_order_fit_exact() -> bool:
    taus = [0.1, 0.05, 0.025, 0.0125]
    records = [
        ErrorRecord(tau=t, time=1.0, error_value=2.0 * t**0.5, error_sq=4.0 * t,
                    std_error=0.0, scheme_kind=SNRLI1, num_paths_used=1)
        for t in taus
    ]
    slope, _, r_sq = order_fit(records)
    return abs(slope - 0.5) < 1e-12 and r_sq > 1.0 - 1e-12


def check_r_term_resonance() -> bool:
    grid = SpectralGrid(8)
    v = SpectralState(grid, single_mode_coeffs(grid, 1.0 + 0.5j, 2))
    r = compute_R_term(v, 0.3, 0.1, 1.0)
    if np.max(np.abs(r.coeffs)) != 0.0:
        return False
    z = compute_R_term(SpectralState(grid, np.zeros(8, complex)), 0.0, 0.0, 1.0)
    return np.max(np.abs(z.coeffs)) == 0.0


def check_conjugation_involution() -> bool:
    rng = np.random.default_rng(18)
    grid = SpectralGrid(16)
    u = _random_state(grid, rng)
    return np.array_equal(conjugate_state(conjugate_state(u)).coeffs, u.coeffs)


_CHECKS = [
    ("transform round trip", check_transform_round_trip),
    ("free group isometry", check_group_isometry),
    ("phi1 continuity at 0", check_phi1_continuity),
    ("frequency projector", check_projector),
    ("noise determinism and coupling", check_noise_determinism_and_coupling),
    ("single-mode closed form", check_single_mode_closed_form),
    ("twisted conjugation identity", check_twisted_conjugation),
    ("g/h vanish at tau=0", check_g_h_vanish_at_zero_tau),
    ("order fit on exact power law", check_order_fit_exact),
    ("remainder resonance cancellation", check_r_term_resonance),
    ("conjugation involution", check_conjugation_involution),
]


def run_all():
    """Run every check; returns [(name, passed), ...]."""
    return [(name, bool(fn())) for name, fn in _CHECKS]
