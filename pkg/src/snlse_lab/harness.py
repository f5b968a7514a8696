"""Experiment orchestration: config parsing, runs, CSV/manifest emission.

Configs are TOML files whose keys mirror the flag paths accepted via
``--set`` (e.g. ``--set noise.epsilon=0.2`` overrides ``[noise] epsilon``).
Every run writes a manifest first (status "running") and finalizes it with
per-output checksums; identical configs and seeds yield byte-identical CSV
outputs regardless of the worker count.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .analysis import (
    ErrorConfig,
    epsilon_scaling_study,
    local_error_decomposition_check,
    longterm_error_curve,
    order_fit,
    strong_error,
)
from .integrators import (
    EXACT_LINEAR,
    SLI1,
    SNRLI1,
    DivergenceError,
    SchemeParams,
)
from .noise import QWienerSpec
from .spectral import (
    SpectralGrid,
    SpectralState,
    single_mode_coeffs,
    smooth_rational_coeffs,
    sobolev_norm,
)
from .svgplot import write_line_plot

__all__ = [
    "ConfigError",
    "OutputError",
    "RunConfig",
    "load_config",
    "run_experiment",
    "emit_csv",
    "EXPERIMENTS",
]

EXPERIMENTS = ("converge", "longterm", "eps-scaling", "decomposition", "selftest")

# Output directory override; the only environment variable the harness reads.
_OUT_ENV_VAR = "SNLSE_LAB_OUT"

_SCHEME_NAMES = {"snrli1": SNRLI1, "sli1": SLI1, "exact_linear": EXACT_LINEAR, "exact-linear": EXACT_LINEAR}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration; names the offending key."""


class OutputError(RuntimeError):
    """An output file could not be written."""


@dataclass(frozen=True)
class NoiseConfig:
    family: str = "power"
    exponent: float = 8.0
    epsilon: float | None = None
    q: float | None = None
    amplitude: float | None = None


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "smooth-rational"
    scale: float = 1.0
    amplitude_re: float = 1.0
    amplitude_im: float = 0.0
    mode: int = 1
    path: str = ""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved description of one experiment run."""

    experiment: str
    profile: str
    grid: int
    schemes: tuple
    mu: float | None
    tau: float
    tau_list: tuple
    tau_ref: float
    T: float
    M: int
    sigma: float
    p: int
    master_seed: int
    workers: int
    dealias: bool
    allow_diverged: bool
    emit_svg: bool
    out_dir: str
    checkpoint_stride: int
    eps_list: tuple
    horizon_mode: str
    num_substeps: int
    noise: NoiseConfig
    initial_data: InitialConfig
    defaults_applied: dict = field(default_factory=dict, repr=False)
    overrides: tuple = ()

    def derived_mu_alpha(self) -> tuple[float, float]:
        """Nonlinearity and noise amplitude implied by the noise section.

        (epsilon, q) yields mu = epsilon^2, alpha = epsilon^(q-1); an explicit
        amplitude is used verbatim with the top-level mu (default 0).
        """
        n = self.noise
        if n.amplitude is not None:
            mu = self.mu if self.mu is not None else 0.0
            return mu, n.amplitude
        eps = n.epsilon if n.epsilon is not None else 0.1
        q = n.q if n.q is not None else 3.5
        if self.mu is not None:
            return self.mu, eps ** (q - 1.0)
        return eps**2, eps ** (q - 1.0)


def _experiment_defaults(experiment: str, profile: str) -> dict:
    common = {
        "profile": profile,
        "grid": 256,
        "schemes": ["SNRLI1"],
        "mu": None,
        "tau": 0.01,
        "tau_list": [],
        "tau_ref": 1e-4,
        "T": 20.0,
        "M": 20,
        "sigma": 1.0,
        "p": 1,
        "master_seed": 2026,
        "workers": 1,
        "dealias": False,
        "allow_diverged": False,
        "emit_svg": False,
        "out_dir": f"runs/{experiment}",
        "checkpoint_stride": 1,
        "eps_list": [0.1, 0.2],
        "horizon_mode": "fixed_T",
        "num_substeps": 256,
        "noise": {"family": "power", "exponent": 8.0},
        "initial_data": {"kind": "smooth-rational", "scale": 1.0},
    }
    if experiment == "longterm":
        common["schemes"] = ["SNRLI1", "SLI1"]
        common["checkpoint_stride"] = 10
        common["noise"] = {"family": "power", "exponent": 8.0, "epsilon": 0.1, "q": 3.5}
        if profile == "paper":
            common.update({"T": 100.0, "M": 100, "tau_ref": 1e-5})
        else:
            common.update({"T": 20.0, "M": 20, "tau_ref": 1e-4})
    elif experiment == "converge":
        common.update(
            {
                "grid": 64,
                "mu": 0.0,
                "T": 1.0,
                "M": 200,
                "tau_list": [2.0**-e for e in range(4, 9)],
                "tau_ref": 2.0**-8,
                "noise": {"family": "power", "exponent": 8.0, "amplitude": 1.0},
            }
        )
    elif experiment == "eps-scaling":
        common.update(
            {
                "grid": 64,
                "T": 5.0,
                "M": 50,
                "tau": 0.01,
                "tau_ref": 1e-3,
                "noise": {"family": "power", "exponent": 8.0, "epsilon": 0.1, "q": 6.0},
            }
        )
    elif experiment == "decomposition":
        common.update({"grid": 8, "mu": 1.0, "tau": 0.05, "M": 5})
        common["noise"] = {"family": "power", "exponent": 8.0, "amplitude": 0.0}
    return common


_TOP_LEVEL_KEYS = {
    "experiment",
    "profile",
    "grid",
    "schemes",
    "mu",
    "tau",
    "tau_list",
    "tau_ref",
    "T",
    "M",
    "sigma",
    "p",
    "master_seed",
    "workers",
    "dealias",
    "allow_diverged",
    "emit_svg",
    "out_dir",
    "checkpoint_stride",
    "eps_list",
    "horizon_mode",
    "num_substeps",
    "noise",
    "initial_data",
}
_NOISE_KEYS = {"family", "exponent", "epsilon", "q", "amplitude"}
_INITIAL_KEYS = {"kind", "scale", "amplitude_re", "amplitude_im", "mode", "path"}


def _check_keys(mapping: dict, allowed: set, where: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown configuration key '{where}{key}'")


def _parse_set_value(raw: str):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def _apply_dotted(tree: dict, dotted: str, value, overrides: list) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override '{dotted}': '{part}' is not a section")
    leaf = parts[-1]
    if leaf in node:
        overrides.append({"key": dotted, "file_value": node[leaf], "flag_value": value})
    node[leaf] = value


def load_config(
    experiment: str,
    config_path: str | None = None,
    set_overrides=(),
    seed: int | None = None,
    workers: int | None = None,
    out_dir: str | None = None,
) -> RunConfig:
    """Resolve defaults, an optional TOML file and ``--set`` flags into a RunConfig.

    Flags win over file values; every default that ends up in the run is
    recorded for the manifest, as is every file/flag collision.
    """
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment '{experiment}', expected one of {EXPERIMENTS}")

    tree: dict = {}
    if config_path is not None:
        try:
            with open(config_path, "rb") as fh:
                tree = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config file {config_path}: {exc}") from exc
    file_experiment = tree.pop("experiment", None)
    if file_experiment is not None and file_experiment != experiment:
        raise ConfigError(
            f"config file sets experiment='{file_experiment}' but '{experiment}' was requested"
        )

    overrides: list = []
    for item in set_overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        key, _, raw = item.partition("=")
        _apply_dotted(tree, key.strip(), _parse_set_value(raw.strip()), overrides)
    if seed is not None:
        _apply_dotted(tree, "master_seed", int(seed), overrides)
    if workers is not None:
        _apply_dotted(tree, "workers", int(workers), overrides)
    if out_dir is not None:
        _apply_dotted(tree, "out_dir", str(out_dir), overrides)

    _check_keys(tree, _TOP_LEVEL_KEYS, "")
    _check_keys(tree.get("noise", {}), _NOISE_KEYS, "noise.")
    _check_keys(tree.get("initial_data", {}), _INITIAL_KEYS, "initial_data.")

    profile = tree.get("profile", "desk")
    if profile not in ("desk", "paper"):
        raise ConfigError(f"unknown profile '{profile}', expected 'desk' or 'paper'")
    defaults = _experiment_defaults(experiment, profile)
    defaults_applied = {}
    resolved = {}
    for key, default in defaults.items():
        if key in ("noise", "initial_data"):
            section = dict(default)
            given = dict(tree.get(key, {}))
            if key == "noise" and given:
                # an explicitly given parametrization displaces the default one
                if ("epsilon" in given or "q" in given) and "amplitude" not in given:
                    section.pop("amplitude", None)
                if "amplitude" in given and not ("epsilon" in given or "q" in given):
                    section.pop("epsilon", None)
                    section.pop("q", None)
            for sub_key, sub_default in section.items():
                if sub_key not in given:
                    defaults_applied[f"{key}.{sub_key}"] = sub_default
            section.update(given)
            resolved[key] = section
        elif key in tree:
            resolved[key] = tree[key]
        else:
            resolved[key] = default
            defaults_applied[key] = default

    try:
        grid_k = int(resolved["grid"])
        SpectralGrid(grid_k)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'grid': {exc}") from exc

    schemes = []
    raw_schemes = resolved["schemes"]
    if isinstance(raw_schemes, str):
        raw_schemes = [raw_schemes]
    for name in raw_schemes:
        kind = _SCHEME_NAMES.get(str(name).lower())
        if kind is None:
            raise ConfigError(f"unknown scheme '{name}' in 'schemes'")
        schemes.append(kind)

    noise_raw = resolved["noise"]
    if noise_raw.get("family", "power") not in ("power", "table"):
        raise ConfigError(f"unknown value '{noise_raw.get('family')}' for 'noise.family'")
    noise = NoiseConfig(
        family=noise_raw.get("family", "power"),
        exponent=float(noise_raw.get("exponent", 8.0)),
        epsilon=_opt_float(noise_raw.get("epsilon"), "noise.epsilon"),
        q=_opt_float(noise_raw.get("q"), "noise.q"),
        amplitude=_opt_float(noise_raw.get("amplitude"), "noise.amplitude"),
    )
    if noise.epsilon is not None and not 0.0 < noise.epsilon <= 1.0:
        raise ConfigError(f"'noise.epsilon' must lie in (0, 1], got {noise.epsilon}")
    if noise.amplitude is not None and noise.amplitude < 0:
        raise ConfigError(f"'noise.amplitude' must be >= 0, got {noise.amplitude}")

    init_raw = resolved["initial_data"]
    if init_raw.get("kind", "smooth-rational") not in ("smooth-rational", "single-mode", "file"):
        raise ConfigError(f"unknown value '{init_raw.get('kind')}' for 'initial_data.kind'")
    initial = InitialConfig(
        kind=init_raw.get("kind", "smooth-rational"),
        scale=float(init_raw.get("scale", 1.0)),
        amplitude_re=float(init_raw.get("amplitude_re", 1.0)),
        amplitude_im=float(init_raw.get("amplitude_im", 0.0)),
        mode=int(init_raw.get("mode", 1)),
        path=str(init_raw.get("path", "")),
    )
    if initial.kind == "file" and not initial.path:
        raise ConfigError("'initial_data.kind' = 'file' requires 'initial_data.path'")

    tau = float(resolved["tau"])
    tau_ref = float(resolved["tau_ref"])
    tau_list = tuple(float(t) for t in resolved["tau_list"])
    horizon = float(resolved["T"])
    if tau <= 0 or tau_ref <= 0:
        raise ConfigError("'tau' and 'tau_ref' must be positive")
    # commensuration is checked for the step keys the experiment consumes
    if experiment == "converge":
        used_taus = [(f"tau_list[{i}]", t) for i, t in enumerate(tau_list)]
    elif experiment in ("longterm", "eps-scaling"):
        used_taus = [("tau", tau)]
    else:
        used_taus = []
    for name, value in used_taus:
        ratio = value / tau_ref
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ConfigError(
                f"'{name}'={value} is not an integer multiple of 'tau_ref'={tau_ref}"
            )
        steps = horizon / value
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps) or round(steps) < 1:
            raise ConfigError(f"'T'={horizon} does not divide into whole steps of {name}={value}")

    hm = str(resolved["horizon_mode"])
    if hm not in ("fixed_T", "scaled_T_eps"):
        raise ConfigError(f"unknown value '{hm}' for 'horizon_mode'")

    config = RunConfig(
        experiment=experiment,
        profile=profile,
        grid=grid_k,
        schemes=tuple(schemes),
        mu=_opt_float(resolved["mu"], "mu"),
        tau=tau,
        tau_list=tau_list,
        tau_ref=tau_ref,
        T=horizon,
        M=int(resolved["M"]),
        sigma=float(resolved["sigma"]),
        p=int(resolved["p"]),
        master_seed=int(resolved["master_seed"]),
        workers=int(resolved["workers"]),
        dealias=bool(resolved["dealias"]),
        allow_diverged=bool(resolved["allow_diverged"]),
        emit_svg=bool(resolved["emit_svg"]),
        out_dir=str(resolved["out_dir"]),
        checkpoint_stride=int(resolved["checkpoint_stride"]),
        eps_list=tuple(float(e) for e in resolved["eps_list"]),
        horizon_mode=hm,
        num_substeps=int(resolved["num_substeps"]),
        noise=noise,
        initial_data=initial,
        defaults_applied=defaults_applied,
        overrides=tuple(tuple(sorted(o.items())) for o in overrides),
    )
    if config.M < 1:
        raise ConfigError(f"'M' must be >= 1, got {config.M}")
    if config.workers < 1:
        raise ConfigError(f"'workers' must be >= 1, got {config.workers}")
    if config.sigma < 0:
        raise ConfigError(f"'sigma' must be >= 0, got {config.sigma}")
    if config.p < 1:
        raise ConfigError(f"'p' must be >= 1, got {config.p}")
    if config.checkpoint_stride < 1:
        raise ConfigError(f"'checkpoint_stride' must be >= 1, got {config.checkpoint_stride}")
    return config


def _opt_float(value, key: str):
    if value is None:
        return None
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{key}' must be a number, got {value!r}") from exc


def _format_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return format(float(value), ".17g")


def emit_csv(path, columns, rows) -> None:
    """Write rows (dicts keyed by column) with 17-significant-digit floats.

    Refuses an empty row list; I/O failures are wrapped with the path.
    """
    rows = list(rows)
    if not rows:
        raise ValueError(f"refusing to write empty CSV {path}")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_format_value(row.get(c)) for c in columns) + "\n")
    except OSError as exc:
        raise OutputError(f"failed writing CSV {path}: {exc}") from exc


def _initial_state(config: RunConfig) -> SpectralState:
    grid = SpectralGrid(config.grid)
    init = config.initial_data
    if init.kind == "smooth-rational":
        return SpectralState(grid, smooth_rational_coeffs(grid, init.scale))
    if init.kind == "single-mode":
        amp = complex(init.amplitude_re, init.amplitude_im) * init.scale
        return SpectralState(grid, single_mode_coeffs(grid, amp, init.mode))
    coeffs = np.zeros(config.grid, dtype=np.complex128)
    half = config.grid // 2
    try:
        data = np.loadtxt(init.path, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read initial data file {init.path}: {exc}") from exc
    for row in data:
        k = int(row[0])
        if not -half <= k < half:
            raise ConfigError(f"initial data file mode {k} outside grid [-{half}, {half})")
        coeffs[k + half] = complex(row[1], row[2] if len(row) > 2 else 0.0)
    return SpectralState(grid, coeffs * init.scale)


def _qspec(config: RunConfig, amplitude: float) -> QWienerSpec:
    return QWienerSpec(noise_amplitude=amplitude, family="power", exponent=config.noise.exponent)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class _Manifest:
    def __init__(self, config: RunConfig, out_dir: Path):
        self.path = out_dir / "manifest.json"
        self.started = time.time()
        config_echo = asdict(replace(config, defaults_applied={}, overrides=()))
        config_echo.pop("defaults_applied", None)
        config_echo.pop("overrides", None)
        self.body = {
            "artifact": {"name": "snlse-lab", "version": __version__},
            "experiment": config.experiment,
            "config": config_echo,
            "defaults_applied": dict(config.defaults_applied),
            "overrides": [dict(o) for o in config.overrides],
            "started_at_utc": datetime.fromtimestamp(self.started, timezone.utc).isoformat(),
            "status": "running",
            "outputs": {},
        }
        self._write()

    def _write(self):
        try:
            with open(self.path, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(self.body, fh, sort_keys=True, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise OutputError(f"failed writing manifest {self.path}: {exc}") from exc

    def finalize(self, status: str, outputs) -> None:
        finished = time.time()
        self.body["status"] = status
        self.body["finished_at_utc"] = datetime.fromtimestamp(finished, timezone.utc).isoformat()
        self.body["elapsed_seconds"] = finished - self.started
        self.body["outputs"] = {p.name: _sha256(p) for p in outputs}
        self._write()


def run_experiment(config: RunConfig) -> int:
    """Dispatch one experiment; returns a process exit status.

    Writes the CSV outputs and manifest into the output directory (the
    environment variable SNLSE_LAB_OUT overrides it).  Divergence without
    ``allow_diverged`` and I/O failures produce a nonzero status with a
    structured report on stderr.
    """
    out_dir = Path(os.environ.get(_OUT_ENV_VAR) or config.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out_dir}: {exc}", file=sys.stderr)
        return 2
    manifest = _Manifest(config, out_dir)
    runner = {
        "converge": _run_converge,
        "longterm": _run_longterm,
        "eps-scaling": _run_eps_scaling,
        "decomposition": _run_decomposition,
        "selftest": _run_selftest,
    }[config.experiment]
    try:
        outputs, status = runner(config, out_dir)
    except DivergenceError as exc:
        manifest.finalize("failed", [])
        print(
            json.dumps(
                {
                    "error": "divergence",
                    "detail": str(exc),
                    "step_index": exc.step_index,
                    "path_index": exc.path_index,
                },
                sort_keys=True,
            ),
            file=sys.stderr,
        )
        return 1
    except (OutputError, ConfigError) as exc:
        manifest.finalize("failed", [])
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}, sort_keys=True), file=sys.stderr)
        return 1
    manifest.finalize("completed" if status == 0 else "failed", outputs)
    return status


def _error_config(config: RunConfig) -> ErrorConfig:
    return ErrorConfig(
        num_paths=config.M,
        sigma=config.sigma,
        p_moment=config.p,
        epsilon=config.noise.epsilon if config.noise.epsilon is not None else 0.1,
        q_exponent=config.noise.q if config.noise.q is not None else 3.5,
        master_seed=config.master_seed,
    )


def _run_converge(config: RunConfig, out_dir: Path):
    if not config.tau_list:
        raise ConfigError("'tau_list' must be set for the converge experiment")
    mu, alpha = config.derived_mu_alpha()
    qspec = _qspec(config, alpha)
    scheme = SchemeParams(
        mu=mu, tau=config.tau_list[0], noise=qspec,
        scheme_kind=config.schemes[0], dealias=config.dealias,
    )
    ref_kind = EXACT_LINEAR if mu == 0.0 else SNRLI1
    ref = SchemeParams(
        mu=mu, tau=config.tau_ref, noise=qspec, scheme_kind=ref_kind, dealias=config.dealias
    )
    records = strong_error(
        scheme,
        ref,
        _error_config(config),
        config.tau_list,
        config.T,
        _initial_state(config),
        workers=config.workers,
        checkpoint_stride=config.checkpoint_stride,
        allow_diverged=config.allow_diverged,
    )
    columns = ["scheme", "tau", "sigma", "p", "M", "error", "error_sq", "std_error", "slope_running"]
    rows = []
    for i, rec in enumerate(records):
        if i >= 1:
            subset = records[: i + 1]
            slope = np.polyfit(
                np.log([r.tau for r in subset]), np.log([r.error_value for r in subset]), 1
            )[0]
        else:
            slope = None
        rows.append(
            {
                "scheme": rec.scheme_kind,
                "tau": rec.tau,
                "sigma": config.sigma,
                "p": config.p,
                "M": rec.num_paths_used,
                "error": rec.error_value,
                "error_sq": rec.error_sq,
                "std_error": rec.std_error,
                "slope_running": slope,
            }
        )
    slope, intercept, r_sq = order_fit(records)
    rows.append(
        {
            "scheme": f"fit:{config.schemes[0]}",
            "tau": None,
            "sigma": config.sigma,
            "p": config.p,
            "M": config.M,
            "error": None,
            "error_sq": None,
            "std_error": None,
            "slope_running": slope,
        }
    )
    csv_path = out_dir / "converge.csv"
    emit_csv(csv_path, columns, rows)
    outputs = [csv_path]
    if config.emit_svg:
        svg_path = out_dir / "converge.svg"
        write_line_plot(
            svg_path,
            [(config.schemes[0], [r.tau for r in records], [r.error_value for r in records])],
            title=f"strong error vs tau (fitted order {slope:.3f})",
            xlabel="tau",
            ylabel=f"L^{2 * config.p}(Omega, H^{config.sigma:g}) error",
            xlog=True,
            ylog=True,
        )
        outputs.append(svg_path)
    return outputs, 0


def _run_longterm(config: RunConfig, out_dir: Path):
    mu, alpha = config.derived_mu_alpha()
    qspec = _qspec(config, alpha)
    schemes = [
        SchemeParams(mu=mu, tau=config.tau, noise=qspec, scheme_kind=kind, dealias=config.dealias)
        for kind in config.schemes
    ]
    ref = SchemeParams(
        mu=mu, tau=config.tau_ref, noise=qspec, scheme_kind=SNRLI1, dealias=config.dealias
    )
    curves = longterm_error_curve(
        schemes,
        _error_config(config),
        config.tau,
        config.T,
        config.checkpoint_stride,
        ref_driver=ref,
        initial=_initial_state(config),
        workers=config.workers,
        allow_diverged=config.allow_diverged,
    )
    columns = ["scheme", "t", "error_sq", "std_error", "M"]
    outputs = []
    for kind in config.schemes:
        records = curves[kind]
        rows = [
            {
                "scheme": rec.scheme_kind,
                "t": rec.time,
                "error_sq": rec.error_sq,
                "std_error": rec.std_error,
                "M": rec.num_paths_used,
            }
            for rec in records
        ]
        path = out_dir / f"longterm_{kind}.csv"
        emit_csv(path, columns, rows)
        outputs.append(path)
    if config.emit_svg:
        svg_path = out_dir / "longterm.svg"
        write_line_plot(
            svg_path,
            [
                (kind, [r.time for r in curves[kind]], [r.error_sq for r in curves[kind]])
                for kind in config.schemes
            ],
            title="long-time squared error",
            xlabel="t",
            ylabel=f"squared L^{2 * config.p}(Omega, H^{config.sigma:g}) error",
            ylog=True,
        )
        outputs.append(svg_path)
    return outputs, 0


def _run_eps_scaling(config: RunConfig, out_dir: Path):
    rows, exponent = epsilon_scaling_study(
        _error_config(config),
        config.eps_list,
        config.tau,
        config.horizon_mode,
        T=config.T,
        noise_template=_qspec(config, 0.0),
        tau_ref=config.tau_ref,
        initial=_initial_state(config),
        scheme_kind=config.schemes[0],
        dealias=config.dealias,
        workers=config.workers,
        allow_diverged=config.allow_diverged,
    )
    columns = ["scheme", "epsilon", "q", "horizon", "error", "fitted_exponent"]
    csv_rows = [
        {
            "scheme": row.scheme_kind,
            "epsilon": row.epsilon,
            "q": row.q_exponent,
            "horizon": row.horizon,
            "error": row.error_value,
            "fitted_exponent": exponent,
        }
        for row in rows
    ]
    csv_path = out_dir / "eps_scaling.csv"
    emit_csv(csv_path, columns, csv_rows)
    outputs = [csv_path]
    if config.emit_svg:
        svg_path = out_dir / "eps_scaling.svg"
        write_line_plot(
            svg_path,
            [(config.schemes[0], [r.epsilon for r in rows], [r.error_value for r in rows])],
            title=f"horizon error vs epsilon (fitted exponent {exponent:.3f})",
            xlabel="epsilon",
            ylabel="error",
            xlog=True,
            ylog=True,
        )
        outputs.append(svg_path)
    return outputs, 0


def _run_decomposition(config: RunConfig, out_dir: Path):
    grid = SpectralGrid(config.grid)
    mu = config.mu if config.mu is not None else 1.0
    params = SchemeParams(
        mu=mu, tau=config.tau, noise=_qspec(config, 0.0), scheme_kind=SNRLI1
    )
    rng = np.random.default_rng(config.master_seed)
    rows = []
    for index in range(config.M):
        coeffs = np.zeros(config.grid, dtype=np.complex128)
        for mode in (-1, 1):
            coeffs[mode + config.grid // 2] = rng.standard_normal() + 1j * rng.standard_normal()
        state = SpectralState(grid, coeffs)
        h1 = sobolev_norm(state, 1.0)
        state = SpectralState(grid, coeffs * (2.0 / h1))
        h1 = sobolev_norm(state, 1.0)
        res = local_error_decomposition_check(state, 0.4, config.tau, params, config.num_substeps)
        res4 = local_error_decomposition_check(
            state, 0.4, config.tau, params, 4 * config.num_substeps
        )
        rows.append(
            {
                "state_index": index,
                "h1_norm": h1,
                "residual": res,
                "residual_bound": 1e-8 * h1**3,
                "quadrupled_residual": res4,
                "reduction_factor": res / res4 if res4 > 0 else float("inf"),
            }
        )
    csv_path = out_dir / "decomposition.csv"
    emit_csv(
        csv_path,
        ["state_index", "h1_norm", "residual", "residual_bound", "quadrupled_residual", "reduction_factor"],
        rows,
    )
    ok = all(r["residual"] <= r["residual_bound"] for r in rows)
    return [csv_path], 0 if ok else 1


def _run_selftest(config: RunConfig, out_dir: Path):
    from . import selfcheck

    results = selfcheck.run_all()
    width = max(len(name) for name, _ in results)
    for name, passed in results:
        print(f"{name:<{width}}  {'PASS' if passed else 'FAIL'}")
    csv_path = out_dir / "selftest.csv"
    emit_csv(
        csv_path,
        ["check", "passed"],
        [{"check": name, "passed": str(passed).lower()} for name, passed in results],
    )
    return [csv_path], 0 if all(p for _, p in results) else 1
