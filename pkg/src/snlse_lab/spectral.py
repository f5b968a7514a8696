"""Fourier pseudospectral core on the torus [-pi, pi].

Functions are represented by their Fourier coefficients u_k in the expansion
u(x) = sum_k e^{ikx} u_k over the retained modes k = -K/2 .. K/2-1.  All
operations here are pure: states are immutable values that can be shared
freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "SpectralGrid",
    "SpectralState",
    "SobolevIndex",
    "GridMismatchError",
    "forward_transform",
    "inverse_values",
    "sobolev_norm",
    "free_group_apply",
    "phi1_scalar",
    "phi1_array",
    "phi1_operator_apply",
    "pointwise_product",
    "conjugate_state",
    "scale_state",
    "add_states",
    "project_low_modes",
    "smooth_rational_coeffs",
    "single_mode_coeffs",
]

# Below this magnitude (e^z - 1)/z loses digits to cancellation; an 8-term
# Taylor series is exact to well beyond double precision there.
_PHI1_THRESHOLD = 1e-4


class GridMismatchError(ValueError):
    """Raised when two states on different grids are combined."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpectralGrid:
    """Mode set and collocation points for K retained Fourier modes.

    K must be a power of two, at least 8.  Collocation points are
    x_j = -pi + 2*pi*j/K and the retained modes are -K/2 .. K/2-1.
    """

    num_modes: int

    def __post_init__(self):
        k = self.num_modes
        if not isinstance(k, (int, np.integer)) or not _is_power_of_two(int(k)) or k < 8:
            raise ValueError(f"num_modes must be a power of two >= 8, got {k!r}")
        object.__setattr__(self, "num_modes", int(k))

    @property
    def mode_indices(self) -> np.ndarray:
        return _grid_tables(self.num_modes)[0]

    @property
    def collocation_points(self) -> np.ndarray:
        return _grid_tables(self.num_modes)[2]

    def values_to_coeffs(self, values: np.ndarray) -> np.ndarray:
        """Discrete Fourier coefficients w.r.t. e^{ikx} of point values."""
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != (self.num_modes,):
            raise ValueError(
                f"expected {self.num_modes} collocation values, got shape {values.shape}"
            )
        return _values_to_coeffs(values)

    def coeffs_to_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Point values on the collocation grid from coefficients."""
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (self.num_modes,):
            raise ValueError(f"expected {self.num_modes} coefficients, got shape {coeffs.shape}")
        return _coeffs_to_values(coeffs)


@lru_cache(maxsize=None)
def _grid_tables(num_modes: int):
    modes = np.arange(-(num_modes // 2), num_modes // 2)
    signs = np.where(modes % 2 == 0, 1.0, -1.0)
    points = -np.pi + 2.0 * np.pi * np.arange(num_modes) / num_modes
    for arr in (modes, signs, points):
        arr.setflags(write=False)
    return modes, signs, points


def _values_to_coeffs(values: np.ndarray) -> np.ndarray:
    # e^{ikx_j} = (-1)^k e^{2 pi i jk/K} on x_j = -pi + 2 pi j/K, any even length
    n = values.shape[0]
    signs = _grid_tables(n)[1] if _is_power_of_two(n) and n >= 8 else _signs_for(n)
    return np.fft.fftshift(np.fft.fft(values)) * (signs / n)


def _coeffs_to_values(coeffs: np.ndarray) -> np.ndarray:
    n = coeffs.shape[0]
    signs = _grid_tables(n)[1] if _is_power_of_two(n) and n >= 8 else _signs_for(n)
    return np.fft.ifft(np.fft.ifftshift(coeffs * signs)) * n


@lru_cache(maxsize=None)
def _signs_for(n: int) -> np.ndarray:
    modes = np.arange(-(n // 2), n - n // 2)
    signs = np.where(modes % 2 == 0, 1.0, -1.0)
    signs.setflags(write=False)
    return signs


@dataclass(frozen=True)
class SpectralState:
    """Complex Fourier coefficients of a function at one time instant."""

    grid: SpectralGrid
    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if coeffs.shape != (self.grid.num_modes,):
            raise ValueError(
                f"coefficient vector has shape {coeffs.shape}, grid expects "
                f"({self.grid.num_modes},)"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "time", float(self.time))

    def values(self) -> np.ndarray:
        """Function values on the collocation grid."""
        return _coeffs_to_values(self.coeffs)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs.view(np.float64))))

    def coefficient(self, k: int) -> complex:
        """Coefficient of mode k."""
        half = self.grid.num_modes // 2
        if not -half <= k < half:
            raise ValueError(f"mode {k} outside retained range [-{half}, {half})")
        return complex(self.coeffs[k + half])


@dataclass(frozen=True)
class SobolevIndex:
    """Order sigma >= 0 of the fractional Sobolev norm."""

    sigma: float

    def __post_init__(self):
        s = float(self.sigma)
        if not np.isfinite(s) or s < 0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma!r}")
        object.__setattr__(self, "sigma", s)


def _sigma_value(index) -> float:
    if isinstance(index, SobolevIndex):
        return index.sigma
    return SobolevIndex(float(index)).sigma


def _require_same_grid(a: SpectralState, b: SpectralState) -> None:
    if a.grid.num_modes != b.grid.num_modes:
        raise GridMismatchError(
            f"states live on different grids (K={a.grid.num_modes} vs {b.grid.num_modes})"
        )


def forward_transform(grid: SpectralGrid, values: np.ndarray, time: float = 0.0) -> SpectralState:
    """Build a state from collocation-point values.

    Inverse of ``state.values()`` up to rounding; a length mismatch raises
    ValueError.
    """
    return SpectralState(grid, grid.values_to_coeffs(values), time)


def inverse_values(state: SpectralState) -> np.ndarray:
    """Collocation-point values of a state (alias of ``state.values()``)."""
    return state.values()


def sobolev_norm(state: SpectralState, index=0.0) -> float:
    """H^sigma norm (sum_k (1+|k|)^{2 sigma} |u_k|^2)^{1/2} over retained modes."""
    sigma = _sigma_value(index)
    modes = state.grid.mode_indices
    weights = (1.0 + np.abs(modes)) ** (2.0 * sigma)
    return float(np.sqrt(np.sum(weights * (state.coeffs.real**2 + state.coeffs.imag**2))))


def sobolev_weights(grid: SpectralGrid, index=0.0) -> np.ndarray:
    """The (1+|k|)^{2 sigma} weight vector used by ``sobolev_norm``."""
    sigma = _sigma_value(index)
    return (1.0 + np.abs(grid.mode_indices)) ** (2.0 * sigma)


def free_group_apply(state: SpectralState, t: float) -> SpectralState:
    """Apply the free Schroedinger group: mode k is multiplied by e^{-i k^2 t}.

    An isometry in every H^sigma; ``free_group_apply(., -t)`` inverts it.
    """
    modes = state.grid.mode_indices
    phase = np.exp(-1j * (modes.astype(np.float64) ** 2) * float(t))
    return SpectralState(state.grid, state.coeffs * phase, state.time)


def phi1_scalar(z: complex) -> complex:
    """phi1(z) = (e^z - 1)/z, with a series branch near z = 0 (phi1(0) = 1)."""
    z = complex(z)
    if abs(z) < _PHI1_THRESHOLD:
        acc = 0.0 + 0.0j
        for j in range(7, -1, -1):
            acc = acc * z / (j + 2) + 1.0
        return acc
    return (np.exp(z) - 1.0) / z


def phi1_array(z: np.ndarray) -> np.ndarray:
    """Vectorized ``phi1_scalar``."""
    z = np.asarray(z, dtype=np.complex128)
    out = np.zeros_like(z)
    for j in range(7, -1, -1):
        out = out * z / (j + 2) + 1.0
    big = np.abs(z) >= _PHI1_THRESHOLD
    if np.any(big):
        zb = z[big]
        out[big] = (np.exp(zb) - 1.0) / zb
    return out


def phi1_operator_apply(state: SpectralState, a: complex) -> SpectralState:
    """Apply the Fourier multiplier phi1(a d_x^2).

    Mode l is multiplied by phi1(-a l^2), which is 1 at l = 0.  With
    a = -2i*tau this multiplies mode l by phi1(2i*tau*l^2).
    """
    modes = state.grid.mode_indices.astype(np.float64)
    mult = phi1_array(-complex(a) * modes**2)
    return SpectralState(state.grid, state.coeffs * mult, state.time)


def pointwise_product(a: SpectralState, b: SpectralState, dealias: bool = False) -> SpectralState:
    """Collocation-space product of two states.

    Plain K-point products alias frequencies beyond the retained band back
    into it; ``dealias=True`` pads coefficients by 3/2 before multiplying.
    """
    _require_same_grid(a, b)
    coeffs = _product_coeffs([a.coeffs, b.coeffs], dealias)
    return SpectralState(a.grid, coeffs, a.time)


def _pad_coeffs(coeffs: np.ndarray, m: int) -> np.ndarray:
    k = coeffs.shape[0]
    out = np.zeros(m, dtype=np.complex128)
    lo = m // 2 - k // 2
    out[lo : lo + k] = coeffs
    return out


def _product_coeffs(coeff_list, dealias: bool) -> np.ndarray:
    k = coeff_list[0].shape[0]
    if dealias:
        m = 3 * k // 2
        vals = _coeffs_to_values(_pad_coeffs(coeff_list[0], m))
        for c in coeff_list[1:]:
            vals = vals * _coeffs_to_values(_pad_coeffs(c, m))
        full = _values_to_coeffs(vals)
        lo = m // 2 - k // 2
        return np.array(full[lo : lo + k])
    vals = _coeffs_to_values(coeff_list[0])
    for c in coeff_list[1:]:
        vals = vals * _coeffs_to_values(c)
    return _values_to_coeffs(vals)


def conjugate_state(state: SpectralState) -> SpectralState:
    """Complex conjugate: coefficient u_k maps to conj(u_{-k}).

    The -K/2 mode is self-paired (its conjugate aliases onto itself on the
    grid), which makes the operation an exact involution.
    """
    coeffs = np.conj(np.roll(state.coeffs[::-1], 1))
    return SpectralState(state.grid, coeffs, state.time)


def scale_state(state: SpectralState, c: complex) -> SpectralState:
    return SpectralState(state.grid, state.coeffs * complex(c), state.time)


def add_states(a: SpectralState, b: SpectralState) -> SpectralState:
    _require_same_grid(a, b)
    return SpectralState(a.grid, a.coeffs + b.coeffs, a.time)


def project_low_modes(state: SpectralState, n0: int) -> SpectralState:
    """Zero every coefficient with |k| > N0/2.

    Idempotent, norm non-increasing in every H^sigma, and commutes with the
    free group.  N0 may not exceed the grid size.
    """
    n0 = int(n0)
    if n0 < 1:
        raise ValueError(f"N0 must be positive, got {n0}")
    if n0 > state.grid.num_modes:
        raise ValueError(f"N0={n0} exceeds grid size K={state.grid.num_modes}")
    modes = state.grid.mode_indices
    keep = np.abs(modes) <= n0 / 2
    return SpectralState(state.grid, np.where(keep, state.coeffs, 0.0), state.time)


def smooth_rational_coeffs(grid: SpectralGrid, scale: float = 1.0) -> np.ndarray:
    """Coefficients of scale * 2/(2 - cos x), sampled on the collocation grid."""
    points = grid.collocation_points
    return grid.values_to_coeffs(scale * 2.0 / (2.0 - np.cos(points)))


def single_mode_coeffs(grid: SpectralGrid, amplitude: complex, mode: int) -> np.ndarray:
    """Coefficients of amplitude * e^{i*mode*x}."""
    half = grid.num_modes // 2
    if not -half <= mode < half:
        raise ValueError(f"mode {mode} outside retained range [-{half}, {half})")
    coeffs = np.zeros(grid.num_modes, dtype=np.complex128)
    coeffs[mode + half] = amplitude
    return coeffs
