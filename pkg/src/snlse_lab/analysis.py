"""Monte Carlo strong-error estimation and structural diagnostics.

The error engine couples every scheme to a reference trajectory through one
shared Brownian path per Monte Carlo sample: references run at the path's
fine resolution, coarse schemes consume aggregated increments of the same
path.  Path workers are pure functions of (config, master_seed, path_index),
and statistics are reduced in path-index order, so results are bitwise
independent of the worker count.

Also implemented here: the non-resonant oscillatory remainder evaluated from
its closed-form antiderivatives, a local-error decomposition check against a
Richardson-extrapolated fine flow, frequency-split diagnostics and moment
monitoring.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .integrators import (
    SNRLI1,
    DivergenceError,
    SchemeParams,
    integrate,
    snrli1_twisted_step,
)
from .noise import QWienerSpec, sample_path
from .spectral import (
    SpectralGrid,
    SpectralState,
    _coeffs_to_values,
    _values_to_coeffs,
    phi1_array,
    project_low_modes,
    sobolev_norm,
    sobolev_weights,
)

__all__ = [
    "ErrorConfig",
    "ErrorRecord",
    "EpsilonScalingRow",
    "strong_error",
    "order_fit",
    "longterm_error_curve",
    "epsilon_scaling_study",
    "compute_R_term",
    "local_error_decomposition_check",
    "rco_frequency_split",
    "moment_monitor",
]

# O(K^3) triple sums are refused above this grid size.
_R_TERM_MAX_MODES = 32


@dataclass(frozen=True)
class ErrorConfig:
    """Monte Carlo error-estimation parameters.

    sigma and p select the L^{2p}(Omega, H^sigma) norm; epsilon and
    q_exponent parametrize the small-data regime (nonlinearity epsilon^2,
    noise amplitude epsilon^(q-1)); gamma and nu describe data and noise
    regularity for reporting the predicted rate min(1/2, (nu-1)/2, gamma).
    """

    num_paths: int
    sigma: float = 1.0
    p_moment: int = 1
    epsilon: float = 0.1
    q_exponent: float = 3.5
    gamma: float = 1.0
    nu: float = 2.0
    master_seed: int = 0

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError(f"num_paths must be >= 1, got {self.num_paths}")
        if self.p_moment < 1:
            raise ValueError(f"p_moment must be >= 1, got {self.p_moment}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    def predicted_order(self) -> float:
        return min(0.5, (self.nu - 1.0) / 2.0, self.gamma)

    @property
    def mu_scaled(self) -> float:
        """Nonlinearity coefficient epsilon^2 of the rescaled small-data equation."""
        return self.epsilon**2

    @property
    def alpha_scaled(self) -> float:
        """Noise amplitude epsilon^(q-1) of the rescaled small-data equation."""
        return self.epsilon ** (self.q_exponent - 1.0)


@dataclass(frozen=True)
class ErrorRecord:
    """One Monte Carlo error estimate with its sampling uncertainty."""

    tau: float
    time: float
    error_value: float
    error_sq: float
    std_error: float
    scheme_kind: str
    num_paths_used: int

    def __post_init__(self):
        if self.error_value < 0 or self.std_error < 0:
            raise ValueError("error_value and std_error must be >= 0")


@dataclass(frozen=True)
class EpsilonScalingRow:
    scheme_kind: str
    epsilon: float
    q_exponent: float
    horizon: float
    error_value: float
    std_error: float


@dataclass(frozen=True)
class _Variant:
    label: str
    params: SchemeParams
    num_steps: int
    coarsening: int
    checkpoint_stride: int


@dataclass(frozen=True)
class _PathTask:
    num_modes: int
    initial_coeffs: np.ndarray
    master_seed: int
    path_index: int
    fine_step: float
    num_fine_steps: int
    ref_params: SchemeParams
    ref_stride: int
    variants: tuple
    sigma: float


@dataclass(frozen=True)
class _PathFailure:
    path_index: int
    label: str
    step_index: int


def _run_path_task(task: _PathTask):
    """Integrate the reference and every coupled variant along one path.

    Returns {label: H^sigma differences at the variant's checkpoints
    (t = 0 included)} or a _PathFailure if any trajectory diverged.
    """
    grid = SpectralGrid(task.num_modes)
    initial = SpectralState(grid, task.initial_coeffs, 0.0)
    path = sample_path(
        task.ref_params.noise,
        grid,
        task.master_seed,
        task.path_index,
        task.fine_step,
        task.num_fine_steps,
    )
    weights = sobolev_weights(grid, task.sigma)
    n_ref = task.num_fine_steps
    try:
        ref = integrate(initial, path, task.ref_params, n_ref, 1, task.ref_stride)
    except DivergenceError as exc:
        return _PathFailure(task.path_index, "reference", exc.step_index)
    ref_by_fine_index = {
        int(round((t - initial.time) / task.fine_step)): s.coeffs
        for t, s in zip(ref.times, ref.states)
    }
    out = {}
    for variant in task.variants:
        try:
            traj = integrate(
                initial,
                path,
                variant.params,
                variant.num_steps,
                variant.coarsening,
                variant.checkpoint_stride,
            )
        except DivergenceError as exc:
            return _PathFailure(task.path_index, variant.label, exc.step_index)
        diffs = np.empty(len(traj.states))
        for j, (t, s) in enumerate(zip(traj.times, traj.states)):
            fine_index = int(round((t - initial.time) / task.fine_step))
            d = s.coeffs - ref_by_fine_index[fine_index]
            diffs[j] = math.sqrt(float(np.sum(weights * (d.real**2 + d.imag**2))))
        out[variant.label] = diffs
    return out


def _collect_path_results(tasks, workers: int, allow_diverged: bool):
    """Run path tasks (serially or in a pool) and reduce in path-index order."""
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_path_task, tasks, chunksize=1))
    else:
        results = [_run_path_task(t) for t in tasks]
    failures = [r for r in results if isinstance(r, _PathFailure)]
    if failures and not allow_diverged:
        f = failures[0]
        raise DivergenceError(
            f.step_index,
            f.path_index,
            f"{len(failures)} of {len(tasks)} paths diverged (first: {f.label}); "
            "pass allow_diverged=True to exclude them from the averages",
        )
    if failures:
        warnings.warn(
            f"excluding {len(failures)} diverged path(s) out of {len(tasks)}",
            RuntimeWarning,
            stacklevel=3,
        )
    good = [r for r in results if not isinstance(r, _PathFailure)]
    if not good:
        raise DivergenceError(0, None, "every path diverged")
    return good


def _moment_estimate(samples: np.ndarray, p: int) -> float:
    """(mean of x^{2p})^{1/(2p)} for nonnegative samples x."""
    return float(np.mean(samples ** (2 * p)) ** (1.0 / (2 * p)))


def _jackknife_std(per_path: np.ndarray, statistic) -> float:
    """Jackknife standard error of ``statistic`` over the path axis.

    ``per_path`` has shape (M, ...); ``statistic`` maps an (M-1, ...) slice to
    a scalar.
    """
    m = per_path.shape[0]
    if m < 2:
        return 0.0
    loo = np.array([statistic(np.delete(per_path, i, axis=0)) for i in range(m)])
    return float(np.sqrt((m - 1) / m * np.sum((loo - loo.mean()) ** 2)))


def _validate_commensurate(tau: float, tau_ref: float, what: str) -> int:
    ratio = tau / tau_ref
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"{what}: {tau} is not an integer multiple of {tau_ref}")
    return r


def _build_tasks(variants, ref_params, config, T, initial, fine_step):
    _validate_commensurate(T, fine_step, "horizon T vs reference step")
    num_fine = int(round(T / fine_step))
    # reference snapshots must land on every variant checkpoint
    gaps = [v.coarsening * v.checkpoint_stride for v in variants]
    ref_stride = gaps[0]
    for g in gaps[1:]:
        ref_stride = math.gcd(ref_stride, g)
    tasks = [
        _PathTask(
            num_modes=initial.grid.num_modes,
            initial_coeffs=np.array(initial.coeffs),
            master_seed=config.master_seed,
            path_index=m,
            fine_step=fine_step,
            num_fine_steps=num_fine,
            ref_params=ref_params,
            ref_stride=ref_stride,
            variants=tuple(variants),
            sigma=config.sigma,
        )
        for m in range(config.num_paths)
    ]
    return tasks


def strong_error(
    scheme: SchemeParams,
    ref_driver: SchemeParams,
    config: ErrorConfig,
    tau_list,
    T: float,
    initial: SpectralState,
    *,
    workers: int = 1,
    checkpoint_stride: int = 1,
    allow_diverged: bool = False,
) -> list[ErrorRecord]:
    """Strong error of ``scheme`` against a pathwise-coupled reference.

    For every tau the estimate is max over checkpoints t_n of
    (M^-1 sum_m ||u_ref(t_n) - u^n||_sigma^{2p})^{1/(2p)}, with a jackknife
    standard error over paths.  Every tau must be an integer multiple of the
    reference step and T an integer multiple of every tau.
    """
    tau_list = [float(t) for t in tau_list]
    if not tau_list:
        raise ValueError("tau_list must not be empty")
    fine_step = ref_driver.tau
    variants = []
    for tau in tau_list:
        r = _validate_commensurate(tau, fine_step, "tau vs reference step")
        n = _validate_commensurate(T, tau, "horizon T vs tau")
        variants.append(
            _Variant(
                label=f"tau={tau!r}",
                params=replace(scheme, tau=tau),
                num_steps=n,
                coarsening=r,
                checkpoint_stride=checkpoint_stride,
            )
        )
    tasks = _build_tasks(variants, ref_driver, config, T, initial, fine_step)
    results = _collect_path_results(tasks, workers, allow_diverged)

    records = []
    p = config.p_moment
    for variant, tau in zip(variants, tau_list):
        err = np.stack([r[variant.label] for r in results])  # (M, n_check)
        times = _checkpoint_times(variant, initial.time)
        est = np.array([_moment_estimate(err[:, j], p) for j in range(err.shape[1])])
        j_star = int(np.argmax(est))
        std = _jackknife_std(err, lambda e: max(_moment_estimate(e[:, j], p) for j in range(e.shape[1])))
        records.append(
            ErrorRecord(
                tau=tau,
                time=float(times[j_star]),
                error_value=float(est[j_star]),
                error_sq=float(est[j_star] ** 2),
                std_error=std,
                scheme_kind=scheme.scheme_kind,
                num_paths_used=err.shape[0],
            )
        )
    return records


def _checkpoint_times(variant: _Variant, t0: float) -> np.ndarray:
    n, cs, tau = variant.num_steps, variant.checkpoint_stride, variant.params.tau
    idx = list(range(0, n + 1, cs))
    if idx[-1] != n:
        idx.append(n)
    return t0 + tau * np.asarray(idx, dtype=float)


def order_fit(records) -> tuple[float, float, float]:
    """Least-squares fit of log(error) against log(tau).

    Returns (slope, intercept, r_squared); the slope is the observed
    convergence order.  Requires at least 3 records with distinct tau and
    strictly positive errors.
    """
    taus = np.array([r.tau for r in records], dtype=float)
    errs = np.array([r.error_value for r in records], dtype=float)
    if len(taus) < 3 or len(np.unique(taus)) < 3:
        raise ValueError("order_fit needs at least 3 records with distinct tau")
    if np.any(errs <= 0):
        raise ValueError("order_fit needs strictly positive errors")
    x, y = np.log(taus), np.log(errs)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_sq = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r_sq


def longterm_error_curve(
    schemes,
    config: ErrorConfig,
    tau: float,
    T: float,
    checkpoint_stride: int,
    *,
    ref_driver: SchemeParams,
    initial: SpectralState,
    workers: int = 1,
    allow_diverged: bool = False,
) -> dict[str, list[ErrorRecord]]:
    """Squared L^{2p}(Omega, H^sigma) error versus time for several schemes.

    All schemes run at step ``tau`` against the same pathwise-coupled
    fine-step reference; records are emitted at every ``checkpoint_stride``-th
    step (t = 0 included, where the error is exactly zero).
    """
    tau = float(tau)
    fine_step = ref_driver.tau
    r = _validate_commensurate(tau, fine_step, "tau vs reference step")
    n = _validate_commensurate(T, tau, "horizon T vs tau")
    variants = [
        _Variant(
            label=params.scheme_kind,
            params=replace(params, tau=tau),
            num_steps=n,
            coarsening=r,
            checkpoint_stride=checkpoint_stride,
        )
        for params in schemes
    ]
    if len({v.label for v in variants}) != len(variants):
        raise ValueError("schemes must have distinct scheme kinds")
    tasks = _build_tasks(variants, ref_params=ref_driver, config=config, T=T, initial=initial, fine_step=fine_step)
    results = _collect_path_results(tasks, workers, allow_diverged)

    p = config.p_moment
    curves: dict[str, list[ErrorRecord]] = {}
    for variant in variants:
        err = np.stack([r[variant.label] for r in results])
        times = _checkpoint_times(variant, initial.time)
        records = []
        for j, t in enumerate(times):
            est = _moment_estimate(err[:, j], p)
            std = _jackknife_std(err, lambda e, j=j: _moment_estimate(e[:, j], p))
            records.append(
                ErrorRecord(
                    tau=tau,
                    time=float(t),
                    error_value=est,
                    error_sq=est**2,
                    std_error=std,
                    scheme_kind=variant.label,
                    num_paths_used=err.shape[0],
                )
            )
        curves[variant.label] = records
    return curves


def epsilon_scaling_study(
    config_base: ErrorConfig,
    eps_list,
    tau: float,
    horizon_mode: str,
    *,
    T: float,
    noise_template: QWienerSpec,
    tau_ref: float,
    initial: SpectralState,
    scheme_kind: str = SNRLI1,
    dealias: bool = False,
    workers: int = 1,
    allow_diverged: bool = False,
) -> tuple[list[EpsilonScalingRow], float]:
    """Long-time H^sigma error at the horizon for a list of epsilon values.

    Each epsilon induces nonlinearity epsilon^2 and noise amplitude
    epsilon^(q-1); the horizon is T (fixed_T) or T/epsilon^2 (scaled_T_eps).
    Returns the per-epsilon errors and the fitted exponent of error versus
    epsilon.
    """
    if horizon_mode not in ("fixed_T", "scaled_T_eps"):
        raise ValueError(f"unknown horizon_mode {horizon_mode!r}")
    if config_base.q_exponent <= 2.0:
        warnings.warn(
            f"q={config_base.q_exponent} <= 2: the long-time scaling regime assumes q > 2",
            RuntimeWarning,
            stacklevel=2,
        )
    rows = []
    for eps in eps_list:
        cfg = replace(config_base, epsilon=float(eps))
        horizon = T if horizon_mode == "fixed_T" else T / cfg.epsilon**2
        horizon = round(horizon / tau) * tau
        qspec = replace(noise_template, noise_amplitude=cfg.alpha_scaled)
        scheme = SchemeParams(
            mu=cfg.mu_scaled, tau=tau, noise=qspec, scheme_kind=scheme_kind, dealias=dealias
        )
        ref = SchemeParams(
            mu=cfg.mu_scaled, tau=tau_ref, noise=qspec, scheme_kind=SNRLI1, dealias=dealias
        )
        n = _validate_commensurate(horizon, tau, "horizon vs tau")
        records = strong_error(
            scheme,
            ref,
            cfg,
            [tau],
            horizon,
            initial,
            workers=workers,
            checkpoint_stride=n,
            allow_diverged=allow_diverged,
        )
        rec = records[0]
        rows.append(
            EpsilonScalingRow(
                scheme_kind=scheme_kind,
                epsilon=cfg.epsilon,
                q_exponent=cfg.q_exponent,
                horizon=horizon,
                error_value=rec.error_value,
                std_error=rec.std_error,
            )
        )
    eps_arr = np.array([row.epsilon for row in rows])
    err_arr = np.array([row.error_value for row in rows])
    if len(rows) >= 2 and np.all(err_arr > 0):
        exponent = float(np.polyfit(np.log(eps_arr), np.log(err_arr), 1)[0])
    else:
        exponent = float("nan")
    return rows, exponent


def compute_R_term(v: SpectralState, t_n: float, tau: float, coeff: float) -> SpectralState:
    """Non-resonant oscillatory remainder of the frozen-coefficient cubic term.

    Sums i*coeff * e^{i t_n phase} conj(v_{l1}) v_{l2} v_{l3} *
    (int_0^tau e^{2 i s l1^2} ds - int_0^tau e^{i s phase} ds) over index
    triples with l = -l1+l2+l3 on the grid and phase = l^2+l1^2-l2^2-l3^2
    nonzero; both antiderivatives are tau*phi1 evaluations.  Resonant triples
    (l1 = l2 or l1 = l3) contribute nothing.  Cost is O(K^3), refused for
    K > 32.
    """
    grid = v.grid
    k = grid.num_modes
    if k > _R_TERM_MAX_MODES:
        raise ValueError(
            f"compute_R_term is O(K^3) and limited to K <= {_R_TERM_MAX_MODES}, got K={k}"
        )
    tau = float(tau)
    modes = grid.mode_indices.astype(np.int64)
    half = k // 2
    c = v.coeffs
    l1 = modes[:, None, None]
    l2 = modes[None, :, None]
    l3 = modes[None, None, :]
    l = -l1 + l2 + l3
    phase = l**2 + l1**2 - l2**2 - l3**2
    valid = (phase != 0) & (l >= -half) & (l < half)
    amp = np.conj(c)[:, None, None] * c[None, :, None] * c[None, None, :]
    window = tau * (
        phi1_array(2j * tau * (l1.astype(np.float64) ** 2))
        - phi1_array(1j * tau * phase.astype(np.float64))
    )
    term = amp * np.exp(1j * float(t_n) * phase.astype(np.float64)) * window
    out = np.zeros(k, dtype=np.complex128)
    np.add.at(out, (l + half)[valid], term[valid])
    return SpectralState(grid, 1j * float(coeff) * out, time=v.time)


def _duhamel_integrand(grid, w_coeffs: np.ndarray, t_abs: float) -> np.ndarray:
    """S(-(t)) [ |S(t) w|^2 S(t) w ] in coefficients, collocation product."""
    k2 = grid.mode_indices.astype(np.float64) ** 2
    sw = np.exp(-1j * k2 * t_abs) * w_coeffs
    vals = _coeffs_to_values(sw)
    prod = _values_to_coeffs(vals * vals * np.conj(vals))
    return np.exp(1j * k2 * t_abs) * prod


def _simpson_weights(n: int, step: float) -> np.ndarray:
    if n % 2 != 0:
        raise ValueError("Simpson quadrature needs an even number of substeps")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (step / 3.0)


def local_error_decomposition_check(
    v: SpectralState,
    t_n: float,
    tau: float,
    params: SchemeParams,
    num_substeps: int = 256,
) -> float:
    """Residual of the one-step local-error decomposition, in H^1.

    With alpha = 0 the local error E = (exact flow) - (numerical map) of the
    twisted variable decomposes exactly into the frozen-versus-evolving
    Duhamel difference W plus the non-resonant remainder of
    ``compute_R_term``; this evaluates ||E - (W + R)||_1 with the exact flow
    realized by Richardson-extrapolated fine substeps and W by Simpson
    quadrature on the same nodes.  The returned residual is pure
    discretization error and shrinks like the substep size squared.
    """
    if params.alpha != 0.0:
        raise ValueError("the decomposition check requires alpha = 0")
    if v.grid.num_modes > _R_TERM_MAX_MODES:
        raise ValueError(f"decomposition check limited to K <= {_R_TERM_MAX_MODES}")
    n = int(num_substeps)
    if n < 2 or n % 2 != 0:
        raise ValueError("num_substeps must be an even integer >= 2")
    grid = v.grid
    tau = float(tau)
    delta = tau / n
    mu = params.mu

    def substep_states(m):
        step = tau / m
        p = replace(params, tau=step)
        states = [v.coeffs]
        w = v
        for j in range(m):
            w = snrli1_twisted_step(w, t_n + j * step, None, p)
            states.append(w.coeffs)
        return states

    coarse = substep_states(n)
    fine = substep_states(2 * n)
    nodes = [2.0 * fine[2 * j] - coarse[j] for j in range(n + 1)]

    numerical = snrli1_twisted_step(v, t_n, None, params)
    local_error = nodes[-1] - numerical.coeffs

    frozen = v.coeffs
    weights = _simpson_weights(n, delta)
    w_sum = np.zeros_like(frozen)
    for j in range(n + 1):
        s = j * delta
        diff = _duhamel_integrand(grid, frozen, t_n + s) - _duhamel_integrand(
            grid, nodes[j], t_n + s
        )
        w_sum += weights[j] * diff
    w_term = 1j * mu * w_sum

    r_term = compute_R_term(v, t_n, tau, mu).coeffs
    residual = local_error - (w_term + r_term)
    return sobolev_norm(SpectralState(grid, residual), 1.0)


def rco_frequency_split(v: SpectralState, tau0: float) -> tuple[float, float]:
    """H^1 norms of the low and high frequency parts at cutoff N0 = 2*floor(1/tau0)."""
    tau0 = float(tau0)
    if not 0.0 < tau0 < 1.0:
        raise ValueError(f"tau0 must lie in (0, 1), got {tau0}")
    n0 = 2 * int(math.floor(1.0 / tau0))
    if n0 > v.grid.num_modes:
        raise ValueError(
            f"cutoff N0={n0} exceeds grid size K={v.grid.num_modes}; increase tau0 or K"
        )
    low = project_low_modes(v, n0)
    high = SpectralState(v.grid, v.coeffs - low.coeffs, v.time)
    return sobolev_norm(low, 1.0), sobolev_norm(high, 1.0)


def moment_monitor(
    trajectories, sigma: float, p: int, warn_factor: float | None = None
):
    """Empirical E[sup_{s<=t} ||w(s)||_sigma^{2p}] along shared checkpoints.

    Returns (times, series); the series is monotone non-decreasing by
    construction.  If ``warn_factor`` is given, a RuntimeWarning is emitted
    when the final value exceeds warn_factor times the initial one, flagging
    departure from the bounded-moment regime.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("moment_monitor needs at least one trajectory")
    times = np.asarray(trajectories[0].times, dtype=float)
    for tr in trajectories[1:]:
        if len(tr.times) != len(times) or not np.allclose(tr.times, times):
            raise ValueError("trajectories must share checkpoint times")
    p = int(p)
    acc = np.zeros(len(times))
    for tr in trajectories:
        norms = np.array([sobolev_norm(s, sigma) for s in tr.states])
        acc += np.maximum.accumulate(norms ** (2 * p))
    series = acc / len(trajectories)
    if warn_factor is not None and series[0] > 0 and series[-1] > warn_factor * series[0]:
        warnings.warn(
            f"running moment grew by {series[-1] / series[0]:.3g}x, beyond the "
            f"configured factor {warn_factor}",
            RuntimeWarning,
            stacklevel=2,
        )
    return times, series
