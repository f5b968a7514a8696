"""Complex Q-Wiener process sampling in Fourier space.

The driving noise is W(x,t) = sum_k sqrt(lambda_k) beta_k(t) e_k(x) with the
orthonormal basis e_k = e^{ikx}/sqrt(2*pi), so in the e^{ikx} coefficient
convention every noise mode carries an explicit 1/sqrt(2*pi).  The beta_k are
i.i.d. complex Brownian motions with independent real and imaginary parts of
variance t/2 each (E|beta_k(t)|^2 = t).

Paths are generated at a fine resolution tau_fine and aggregated to coarser
steps by exact floating-point summation, so reference and coarse trajectories
can share one pathwise-coupled realization.  All randomness for a given
(master_seed, path_index, mode, fine step) is a pure function of those
numbers: generation order, caching and worker count never change a value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralGrid, SpectralState, phi1_array

__all__ = [
    "QWienerSpec",
    "BrownianPath",
    "sample_path",
    "wiener_increment",
    "exact_convolution_sample",
]

# Fine increments are generated in fixed blocks of this many steps; the block
# index is a function of the step index alone, which keeps every draw
# independent of traversal order.
_BLOCK_STEPS = 1024

# Stream tags keep increment and convolution-residual randomness disjoint.
_TAG_INCREMENTS = 1
_TAG_CONVOLUTION = 2


@dataclass(frozen=True)
class QWienerSpec:
    """Diagonal covariance spectrum lambda_k plus the noise amplitude alpha.

    ``family`` is either "power" (lambda_k = 1/(1+|k|^exponent)) or "table"
    (explicit eigenvalues for the retained modes, ascending mode order).
    """

    noise_amplitude: float = 0.0
    family: str = "power"
    exponent: float = 8.0
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.noise_amplitude < 0:
            raise ValueError(f"noise amplitude must be >= 0, got {self.noise_amplitude}")
        if self.family not in ("power", "table"):
            raise ValueError(f"unknown eigenvalue family {self.family!r}")
        if self.family == "table":
            if self.table is None:
                raise ValueError("family 'table' requires explicit eigenvalues")
            table = np.array(self.table, dtype=np.float64, copy=True)
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise ValueError("eigenvalues must be finite and >= 0")
            table.setflags(write=False)
            object.__setattr__(self, "table", table)

    @classmethod
    def power_decay(cls, exponent: float = 8.0, amplitude: float = 0.0) -> "QWienerSpec":
        return cls(noise_amplitude=amplitude, family="power", exponent=float(exponent))

    @classmethod
    def from_table(cls, eigenvalues, amplitude: float = 0.0) -> "QWienerSpec":
        return cls(noise_amplitude=amplitude, family="table", table=np.asarray(eigenvalues))

    def eigenvalue_fn(self, modes) -> np.ndarray:
        """Eigenvalues lambda_k for an array of mode indices."""
        modes = np.asarray(modes)
        if self.family == "power":
            return 1.0 / (1.0 + np.abs(modes.astype(np.float64)) ** self.exponent)
        if self.table.shape != modes.shape:
            raise ValueError(
                f"eigenvalue table has {self.table.shape[0]} entries, "
                f"grid asks for {modes.shape[0]}"
            )
        return np.array(self.table)

    def eigenvalues(self, grid: SpectralGrid) -> np.ndarray:
        return self.eigenvalue_fn(grid.mode_indices)

    def hs_norm_sq(self, sigma: float, grid: SpectralGrid) -> float:
        """Squared Hilbert-Schmidt norm of Q^{1/2} into H^sigma over retained modes.

        sum_k (1+|k|)^{2 sigma} lambda_k / (2*pi) in the e^{ikx} coefficient
        convention.
        """
        lam = self.eigenvalues(grid)
        weights = (1.0 + np.abs(grid.mode_indices)) ** (2.0 * float(sigma))
        return float(np.sum(weights * lam) / (2.0 * np.pi))


@dataclass
class BrownianPath:
    """Per-mode complex Brownian increments at the finest resolution.

    Fine increments delta beta_k over each step of size ``fine_step`` satisfy
    E|delta beta_k|^2 = fine_step.  Increment blocks are generated lazily and
    cached; values depend only on (master_seed, path_index, mode, step).
    """

    grid: SpectralGrid
    qspec: QWienerSpec
    master_seed: int
    path_index: int
    fine_step: float
    num_fine_steps: int
    _blocks: dict = field(default_factory=dict, repr=False)
    _sqrt_lambda: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.fine_step <= 0:
            raise ValueError(f"fine_step must be > 0, got {self.fine_step}")
        if self.num_fine_steps < 1:
            raise ValueError(f"num_fine_steps must be >= 1, got {self.num_fine_steps}")
        self.master_seed = int(self.master_seed) % 2**64
        self.path_index = int(self.path_index)
        self._sqrt_lambda = np.sqrt(self.qspec.eigenvalues(self.grid))

    def _block(self, block_index: int) -> np.ndarray:
        cached = self._blocks.get(block_index)
        if cached is not None:
            return cached
        seq = np.random.SeedSequence(
            (self.master_seed, _TAG_INCREMENTS, self.path_index, block_index)
        )
        rng = np.random.Generator(np.random.PCG64(seq))
        # Draw only the rows this path can reach.  Normals are generated
        # sequentially, so a shorter request is a prefix of the full block and
        # the value at a given (step, mode) never depends on the path length.
        rows = min(_BLOCK_STEPS, self.num_fine_steps - block_index * _BLOCK_STEPS)
        z = rng.standard_normal((rows, self.grid.num_modes, 2))
        block = np.sqrt(self.fine_step / 2.0) * (z[:, :, 0] + 1j * z[:, :, 1])
        if len(self._blocks) >= 4:
            self._blocks.pop(next(iter(self._blocks)))
        self._blocks[block_index] = block
        return block

    def fine_increment(self, step: int) -> np.ndarray:
        """Raw delta beta vector (all retained modes) for one fine step."""
        if not 0 <= step < self.num_fine_steps:
            raise ValueError(f"fine step {step} out of range [0, {self.num_fine_steps})")
        return self._block(step // _BLOCK_STEPS)[step % _BLOCK_STEPS]

    def aggregated_increment(self, start: int, count: int) -> np.ndarray:
        """Sequential floating-point sum of ``count`` fine increments from ``start``."""
        if count < 1:
            raise ValueError("count must be >= 1")
        if start < 0 or start + count > self.num_fine_steps:
            raise ValueError(
                f"fine steps [{start}, {start + count}) exceed path length "
                f"{self.num_fine_steps}"
            )
        total = self.fine_increment(start).copy()
        for i in range(start + 1, start + count):
            total += self.fine_increment(i)
        return total

    def scaled_increment(self, start: int, count: int, scale: np.ndarray) -> np.ndarray:
        """Sequential sum of ``scale * fine increment`` over ``count`` steps.

        Scaling each fine increment before summing makes a coarse Wiener
        increment bitwise equal to the sum of its single-step pieces.
        """
        if count < 1:
            raise ValueError("count must be >= 1")
        if start < 0 or start + count > self.num_fine_steps:
            raise ValueError(
                f"fine steps [{start}, {start + count}) exceed path length "
                f"{self.num_fine_steps}"
            )
        total = scale * self.fine_increment(start)
        for i in range(start + 1, start + count):
            total += scale * self.fine_increment(i)
        return total

    def residual_rng(self, coarsening: int, step: int) -> np.random.Generator:
        """Stream for convolution residuals, disjoint from increment randomness."""
        seq = np.random.SeedSequence(
            (self.master_seed, _TAG_CONVOLUTION, self.path_index, int(coarsening), int(step))
        )
        return np.random.Generator(np.random.PCG64(seq))


def sample_path(
    qspec: QWienerSpec,
    grid: SpectralGrid,
    master_seed: int,
    path_index: int,
    fine_step: float,
    num_fine_steps: int,
) -> BrownianPath:
    """Create the Brownian path for one Monte Carlo sample.

    Increments are materialized lazily; calling this twice with the same
    seeds yields bitwise-identical values in any access order.
    """
    return BrownianPath(
        grid=grid,
        qspec=qspec,
        master_seed=master_seed,
        path_index=path_index,
        fine_step=float(fine_step),
        num_fine_steps=int(num_fine_steps),
    )


def wiener_increment(path: BrownianPath, step: int, coarsening: int = 1) -> SpectralState:
    """Increment of the Q-Wiener process over coarse step ``step``.

    Mode k carries sqrt(lambda_k) * (sum of coarsening fine delta beta_k)
    / sqrt(2*pi).  The coarse value is the exact floating-point sum of its
    fine pieces, which is what couples trajectories across step sizes.
    """
    coarsening = int(coarsening)
    scale = path._sqrt_lambda / np.sqrt(2.0 * np.pi)
    coeffs = path.scaled_increment(step * coarsening, coarsening, scale)
    return SpectralState(path.grid, coeffs, time=step * coarsening * path.fine_step)


def _convolution_pair(
    path: BrownianPath, step: int, coarsening: int, rng: np.random.Generator
):
    """Window-local oscillatory integrals J_k = int_0^tau e^{i k^2 s} d beta_k.

    Sampled jointly with the aggregated increment delta beta_k of the same
    window: E[J conj(delta beta)] = tau * phi1(i k^2 tau), Var J = tau, and the
    conditional residual is circular Gaussian.  Returns (J, delta beta).
    """
    tau = coarsening * path.fine_step
    agg = path.aggregated_increment(step * coarsening, coarsening)
    k2 = path.grid.mode_indices.astype(np.float64) ** 2
    corr = phi1_array(1j * k2 * tau)
    resvar = tau * np.maximum(0.0, 1.0 - np.abs(corr) ** 2)
    z = rng.standard_normal((path.grid.num_modes, 2))
    residual = np.sqrt(resvar / 2.0) * (z[:, 0] + 1j * z[:, 1])
    return corr * agg + residual, agg


def exact_convolution_sample(
    path: BrownianPath,
    qspec: QWienerSpec,
    step: int,
    tau: float,
    rng_stream: np.random.Generator,
) -> SpectralState:
    """Exact sample of int_{t_n}^{t_n+tau} S(-s) dW(s), coupled to the path.

    Per mode the integral I_k = int e^{i k^2 s} d beta_k is drawn from the
    bivariate complex Gaussian consistent with the window's increment
    (covariance tau * e^{i k^2 t_n} * phi1(i k^2 tau)); the independent
    residual comes from ``rng_stream``.
    """
    coarsening = int(round(tau / path.fine_step))
    if coarsening < 1 or abs(coarsening * path.fine_step - tau) > 1e-9 * tau:
        raise ValueError(f"tau={tau} is not a multiple of the fine step {path.fine_step}")
    t_n = step * tau
    local, _ = _convolution_pair(path, step, coarsening, rng_stream)
    k2 = path.grid.mode_indices.astype(np.float64) ** 2
    sqrt_lam = np.sqrt(qspec.eigenvalues(path.grid))
    coeffs = sqrt_lam * np.exp(1j * k2 * t_n) * local / np.sqrt(2.0 * np.pi)
    return SpectralState(path.grid, coeffs, time=t_n)
