"""One-step maps and trajectory drivers.

Two explicit schemes for the cubic stochastic Schroedinger equation with
additive Q-Wiener noise are provided, plus a distributionally exact sampler
for the linear (mu = 0) equation:

* SNRLI1, a non-resonant low-regularity integrator whose resonant frequency
  interactions (in particular the zero mode) are integrated exactly, via the
  zero-mode correction 2*(g(u))_0 and the diagonal term h(u);
* SLI1, the same one-step map without the resonant corrections;
* EXACT_LINEAR, free flight plus an exactly sampled stochastic convolution,
  pathwise coupled to the same Brownian increments.

All one-step maps are pure; a trajectory is sequential but distinct paths can
be integrated fully in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import BrownianPath, QWienerSpec, _convolution_pair
from .spectral import (
    GridMismatchError,
    SpectralGrid,
    SpectralState,
    _coeffs_to_values,
    _pad_coeffs,
    _values_to_coeffs,
    add_states,
    conjugate_state,
    free_group_apply,
    phi1_array,
    phi1_operator_apply,
    pointwise_product,
    scale_state,
)

__all__ = [
    "SNRLI1",
    "SLI1",
    "EXACT_LINEAR",
    "SchemeParams",
    "Trajectory",
    "DivergenceError",
    "g_term",
    "h_term",
    "snrli1_step",
    "snrli1_twisted_step",
    "sli1_step",
    "exact_linear_step",
    "integrate",
]

SNRLI1 = "SNRLI1"
SLI1 = "SLI1"
EXACT_LINEAR = "EXACT_LINEAR"
_SCHEMES = (SNRLI1, SLI1, EXACT_LINEAR)

# A step whose output exceeds this H^1 norm (or turns non-finite) aborts the
# path instead of poisoning Monte Carlo averages.
_DIVERGENCE_NORM_BOUND = 1e6


class DivergenceError(RuntimeError):
    """A trajectory produced a non-finite or runaway state."""

    def __init__(self, step_index: int, path_index: int | None = None, detail: str = ""):
        self.step_index = step_index
        self.path_index = path_index
        where = f"step {step_index}" + (
            f" of path {path_index}" if path_index is not None else ""
        )
        super().__init__(f"trajectory diverged at {where}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class SchemeParams:
    """Nonlinearity coefficient, step size, noise spec and scheme selector."""

    mu: float
    tau: float
    noise: QWienerSpec
    scheme_kind: str = SNRLI1
    dealias: bool = False

    def __post_init__(self):
        if self.tau <= 0 or not np.isfinite(self.tau):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")
        if self.scheme_kind not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme_kind!r}, expected one of {_SCHEMES}")
        if self.scheme_kind == EXACT_LINEAR and self.mu != 0.0:
            raise ValueError("EXACT_LINEAR requires mu = 0")

    @property
    def alpha(self) -> float:
        return self.noise.noise_amplitude


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of one integrated path at selected step times."""

    params: SchemeParams
    master_seed: int
    path_index: int
    times: np.ndarray
    states: tuple

    @property
    def final(self) -> SpectralState:
        return self.states[-1]


class _StepKernel:
    """Precomputed Fourier multipliers for repeated steps at fixed tau.

    Internally the kernel works on FFT-ordered, sign-stripped coefficient
    vectors (conversion is an exact permutation plus exact +-1 factors), which
    keeps every fftshift/roll out of the per-step loop; results are bitwise
    identical to stepping in the public ascending-mode representation.
    """

    def __init__(self, grid: SpectralGrid, params: SchemeParams):
        self.grid = grid
        self.params = params
        n = grid.num_modes
        k2 = grid.mode_indices.astype(np.float64) ** 2
        tau = params.tau
        # multiplier of phi1(-2i tau d_x^2) at mode l is phi1(2i tau l^2)
        self._f_free = np.fft.ifftshift(np.exp(-1j * k2 * tau))
        self._f_phi1 = np.fft.ifftshift(phi1_array(2j * tau * k2))
        self._f_one_minus = 1.0 - self._f_phi1
        self.sqrt_lam_2pi = np.sqrt(params.noise.eigenvalues(grid)) / np.sqrt(2.0 * np.pi)
        self._signs_asc = np.where(grid.mode_indices % 2 == 0, 1.0, -1.0)
        self._inv_n = 1.0 / n  # exact, n is a power of two
        self._conj_idx = np.concatenate(([0], np.arange(n - 1, 0, -1)))
        if params.dealias:
            self._pad_m = 3 * n // 2
            self._pad_lo = self._pad_m // 2 - n // 2

    def to_internal(self, coeffs_ascending: np.ndarray) -> np.ndarray:
        # exact: +-1 factors and a permutation
        return np.fft.ifftshift(coeffs_ascending * self._signs_asc)

    def from_internal(self, internal: np.ndarray) -> np.ndarray:
        return np.fft.fftshift(internal) * self._signs_asc

    def _values(self, internal: np.ndarray) -> np.ndarray:
        return np.fft.ifft(internal) * self.grid.num_modes

    def _coeffs(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fft(values) * self._inv_n

    def _cubic_and_g0(self, u: np.ndarray):
        """(u^2 * (phi1(-2i tau d_x^2) conj u), zero mode of g) via collocation.

        The cubic term is one three-factor collocation product, so a pure
        single-mode state incurs no intermediate truncation; g's zero mode is
        the mean of its collocation values, i.e. the k = 0 coefficient of the
        pointwise product.
        """
        phi_cu = self._f_phi1 * np.conj(u[self._conj_idx])
        if self.params.dealias:
            m, lo, n = self._pad_m, self._pad_lo, self.grid.num_modes
            asc_u = self.from_internal(u)
            asc_p = self.from_internal(phi_cu)
            vu = _coeffs_to_values(_pad_coeffs(asc_u, m))
            vphi = _coeffs_to_values(_pad_coeffs(asc_p, m))
            full = _values_to_coeffs(vu * vu * vphi)
            cubic = self.to_internal(np.array(full[lo : lo + n]))
        else:
            vu = self._values(u)
            vphi = self._values(phi_cu)
            cubic = self._coeffs(vu * vu * vphi)
        g0 = np.mean(vu * (np.conj(vu) - vphi))
        return cubic, g0

    def _h(self, u: np.ndarray) -> np.ndarray:
        return self._f_one_minus * (u.real**2 + u.imag**2) * u

    def step_snrli1(self, u: np.ndarray, dw: np.ndarray | None) -> np.ndarray:
        mu, tau, alpha = self.params.mu, self.params.tau, self.params.alpha
        cubic, g0 = self._cubic_and_g0(u)
        bracket = u - 1j * tau * mu * cubic
        if dw is not None:
            bracket = bracket - 1j * alpha * dw
        return (
            self._f_free * bracket
            - 2j * mu * tau * g0 * (self._f_free * u)
            + 1j * mu * tau * (self._f_free * self._h(u))
        )

    def step_sli1(self, u: np.ndarray, dw: np.ndarray | None) -> np.ndarray:
        mu, tau, alpha = self.params.mu, self.params.tau, self.params.alpha
        cubic, _ = self._cubic_and_g0(u)
        bracket = u - 1j * tau * mu * cubic
        if dw is not None:
            bracket = bracket - 1j * alpha * dw
        return self._f_free * bracket

    def step_exact_linear(self, u: np.ndarray, local_convolution: np.ndarray | None) -> np.ndarray:
        if local_convolution is None:
            return self._f_free * u
        return self._f_free * (u - 1j * self.params.alpha * local_convolution)


def _conj_coeffs(coeffs: np.ndarray) -> np.ndarray:
    # coefficient map of complex conjugation; -K/2 self-paired (grid alias)
    return np.conj(np.roll(coeffs[::-1], 1))


def g_term(u: SpectralState, tau: float, dealias: bool = False) -> SpectralState:
    """g(u) = u * (I - phi1(-2i tau d_x^2)) conj(u).

    The mode-l multiplier on conj(u) is 1 - phi1(2i tau l^2), zero at l = 0,
    so g vanishes identically at tau = 0.
    """
    k2 = u.grid.mode_indices.astype(np.float64) ** 2
    mult = 1.0 - phi1_array(2j * float(tau) * k2)
    filtered = SpectralState(u.grid, conjugate_state(u).coeffs * mult, u.time)
    return pointwise_product(u, filtered, dealias=dealias)


def h_term(u: SpectralState, tau: float) -> SpectralState:
    """Diagonal cubic term: coefficient k is (1 - phi1(2i k^2 tau)) |u_k|^2 u_k."""
    k2 = u.grid.mode_indices.astype(np.float64) ** 2
    mult = 1.0 - phi1_array(2j * float(tau) * k2)
    c = u.coeffs
    return SpectralState(u.grid, mult * (c.real**2 + c.imag**2) * c, u.time)


def _increment_coeffs(u: SpectralState, dw: SpectralState | None, kernel: _StepKernel):
    if dw is None or kernel.params.alpha == 0.0:
        return None
    if dw.grid.num_modes != u.grid.num_modes:
        raise GridMismatchError(
            f"state grid K={u.grid.num_modes} does not match increment grid "
            f"K={dw.grid.num_modes}"
        )
    return dw.coeffs


def snrli1_step(u: SpectralState, dw: SpectralState | None, params: SchemeParams) -> SpectralState:
    """One SNRLI1 step: S(tau) applied to the bracketed group, then the two
    resonant corrections, each carrying its own S(tau) factor.

    ``dw`` is the Wiener increment for [t_n, t_n + tau] (None for alpha = 0).
    """
    kernel = _StepKernel(u.grid, params)
    dwc = _increment_coeffs(u, dw, kernel)
    out = kernel.step_snrli1(
        kernel.to_internal(u.coeffs), None if dwc is None else kernel.to_internal(dwc)
    )
    return SpectralState(u.grid, kernel.from_internal(out), u.time + params.tau)


def sli1_step(u: SpectralState, dw: SpectralState | None, params: SchemeParams) -> SpectralState:
    """One SLI1 step: S(tau) applied to the bracketed group only."""
    kernel = _StepKernel(u.grid, params)
    dwc = _increment_coeffs(u, dw, kernel)
    out = kernel.step_sli1(
        kernel.to_internal(u.coeffs), None if dwc is None else kernel.to_internal(dwc)
    )
    return SpectralState(u.grid, kernel.from_internal(out), u.time + params.tau)


def snrli1_twisted_step(
    v: SpectralState, t_n: float, dw: SpectralState | None, params: SchemeParams
) -> SpectralState:
    """SNRLI1 in the twisted variable v(t) = S(-t) u(t).

    Implements the twisted one-step map literally; it is conjugate to
    ``snrli1_step`` through u = S(t) v at every step.
    """
    mu, tau, alpha = params.mu, params.tau, params.alpha
    u_phys = free_group_apply(v, t_n)
    filtered = phi1_operator_apply(free_group_apply(conjugate_state(v), -t_n), -2j * tau)
    triple = SpectralState(
        v.grid,
        _product_triple(u_phys.coeffs, filtered.coeffs, params.dealias),
        v.time,
    )
    osc = free_group_apply(triple, -t_n)
    g0 = g_term(v, tau, dealias=params.dealias).coeffs[v.grid.num_modes // 2]
    bracket = add_states(
        osc, add_states(scale_state(v, 2.0 * g0), scale_state(h_term(v, tau), -1.0))
    )
    out = add_states(v, scale_state(bracket, -1j * tau * mu))
    if dw is not None and alpha != 0.0:
        out = add_states(out, scale_state(free_group_apply(dw, -t_n), -1j * alpha))
    return SpectralState(v.grid, out.coeffs, v.time + tau)


def _product_triple(u: np.ndarray, w: np.ndarray, dealias: bool) -> np.ndarray:
    # u * u * w as one collocation product
    if dealias:
        m = 3 * u.shape[0] // 2
        vu = _coeffs_to_values(_pad_coeffs(u, m))
        vw = _coeffs_to_values(_pad_coeffs(w, m))
        full = _values_to_coeffs(vu * vu * vw)
        lo = m // 2 - u.shape[0] // 2
        return np.array(full[lo : lo + u.shape[0]])
    vu = _coeffs_to_values(u)
    vw = _coeffs_to_values(w)
    return _values_to_coeffs(vu * vu * vw)


def exact_linear_step(
    u: SpectralState, path: BrownianPath, step: int, params: SchemeParams
) -> SpectralState:
    """Distributionally exact step for the linear (mu = 0) equation.

    Mode k evolves by e^{-i k^2 tau} and receives the exactly sampled
    stochastic convolution of its window, coupled to the same Brownian path
    used by the approximate schemes.
    """
    if params.mu != 0.0:
        raise ValueError("exact_linear_step requires mu = 0")
    kernel = _StepKernel(u.grid, params)
    local = _exact_local_convolution(path, step, params, kernel)
    out = kernel.step_exact_linear(kernel.to_internal(u.coeffs), local)
    return SpectralState(u.grid, kernel.from_internal(out), u.time + params.tau)


def _coarsening_for(path: BrownianPath, tau: float) -> int:
    r = int(round(tau / path.fine_step))
    if r < 1 or abs(r * path.fine_step - tau) > 1e-9 * tau:
        raise ValueError(
            f"tau={tau} is not an integer multiple of the path fine step {path.fine_step}"
        )
    return r


def _exact_local_convolution(path, step, params, kernel) -> np.ndarray | None:
    """Scaled convolution sample in the kernel's internal ordering."""
    if params.alpha == 0.0:
        return None
    r = _coarsening_for(path, params.tau)
    rng = path.residual_rng(r, step)
    local, _ = _convolution_pair(path, step, r, rng)
    return kernel.to_internal(kernel.sqrt_lam_2pi * local)


def integrate(
    initial: SpectralState,
    path: BrownianPath,
    params: SchemeParams,
    num_steps: int,
    coarsening: int,
    snapshot_stride: int = 1,
) -> Trajectory:
    """Apply the selected one-step map ``num_steps`` times along one path.

    Each step consumes the increment of ``coarsening`` fine path steps
    (tau = coarsening * fine_step).  Snapshots are recorded every
    ``snapshot_stride`` steps plus the final state; the final state is
    bitwise independent of the stride.  A non-finite or runaway state raises
    DivergenceError naming the step.
    """
    num_steps = int(num_steps)
    coarsening = int(coarsening)
    if num_steps < 0:
        raise ValueError("num_steps must be >= 0")
    if coarsening < 1:
        raise ValueError("coarsening must be >= 1")
    if abs(coarsening * path.fine_step - params.tau) > 1e-9 * params.tau:
        raise ValueError(
            f"tau={params.tau} does not equal coarsening*fine_step="
            f"{coarsening * path.fine_step}"
        )
    if num_steps * coarsening > path.num_fine_steps:
        raise ValueError(
            f"path provides {path.num_fine_steps} fine steps, need "
            f"{num_steps * coarsening}"
        )
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be >= 1")

    kernel = _StepKernel(initial.grid, params)
    h1_weights = np.fft.ifftshift((1.0 + np.abs(initial.grid.mode_indices)) ** 2)
    need_noise = params.alpha != 0.0
    kind = params.scheme_kind

    u = kernel.to_internal(initial.coeffs)
    times = [initial.time]
    snapshots = [SpectralState(initial.grid, initial.coeffs, initial.time)]
    bound_sq = _DIVERGENCE_NORM_BOUND**2
    for n in range(num_steps):
        if kind == EXACT_LINEAR:
            u = kernel.step_exact_linear(u, _exact_local_convolution(path, n, params, kernel))
        else:
            dw = None
            if need_noise:
                dw = kernel.to_internal(
                    path.scaled_increment(n * coarsening, coarsening, kernel.sqrt_lam_2pi)
                )
            u = kernel.step_snrli1(u, dw) if kind == SNRLI1 else kernel.step_sli1(u, dw)
        h1_sq = float(np.sum(h1_weights * (u.real**2 + u.imag**2)))
        # a NaN fails the comparison too, catching non-finite coefficients
        if not h1_sq <= bound_sq:
            detail = (
                "non-finite coefficient"
                if not np.isfinite(h1_sq)
                else f"H^1 norm {np.sqrt(h1_sq):.3e}"
            )
            raise DivergenceError(n, path.path_index, detail)
        if (n + 1) % snapshot_stride == 0 or n + 1 == num_steps:
            t = initial.time + (n + 1) * params.tau
            times.append(t)
            snapshots.append(SpectralState(initial.grid, kernel.from_internal(u), t))
    return Trajectory(
        params=params,
        master_seed=path.master_seed,
        path_index=path.path_index,
        times=np.asarray(times),
        states=tuple(snapshots),
    )
