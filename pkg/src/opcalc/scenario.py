"""Seeded instances, verification suites and curve emission."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .calculus import (
    FrechetRequest,
    central_difference,
    daletskii_krein_residual,
    duhamel_difference,
    exp_i,
    frechet_derivative,
    taylor_slope,
)
from .errors import ConfigParse
from .flow import FlowRequest, flow_shift_identity_check
from .functions import WienerFunction
from .io import load_operator, read_json, write_json
from .linalg import BlockOperator, trace_norm, uniform_norm
from .moi import DividedDifferenceKernel, MOIRequest, moi_fourier, moi_spectral
from .quadrature import QuadratureConfig
from .shift import (
    AveragedMeasure,
    averaging_identity_check,
    krein_trace_check,
    spectral_window,
    xi_bounds_check,
    xi_counting,
)

RNG_NAME = "numpy.random.Generator(PCG64), complex standard normal entries"

CHECKS = ("moi_dual_path", "dk", "frechet", "taylor", "duhamel", "krein", "birman_solomyak", "flow_identity")

DEFAULT_TOLERANCES = {
    "moi_dual_path": 1e-6,
    "dk": 1e-9,
    "frechet": 1e-6,
    # residual is (n + 1) - fitted slope, so this asks for slope >= n + 0.9
    "taylor": 0.1,
    "duhamel": 1e-9,
    "krein": 1e-9,
    "birman_solomyak": 1e-6,
    "flow_identity": 1e-6,
}


def _random_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (X + X.conj().T)


def generate_instance(seed: int, dims) -> tuple:
    """Deterministic ``(H, V)`` with Hermitian blocks and ``trace_norm(V) = 1``.

    ``dims`` is a list of ``(dimension, weight)`` pairs.
    """
    dims = [(int(d), float(w)) for d, w in dims]
    if not dims:
        raise ConfigParse("dims must be non-empty")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    hb = [_random_hermitian(rng, d) for d, _ in dims]
    vb = [_random_hermitian(rng, d) for d, _ in dims]
    weights = [w for _, w in dims]
    H = BlockOperator.hermitian(hb, weights)
    V = BlockOperator.hermitian(vb, weights)
    return H, V * (1.0 / trace_norm(V))


def parse_grid(spec: str) -> np.ndarray:
    """``"a:b:n"`` to ``n`` equispaced points from ``a`` to ``b``."""
    try:
        a, b, n = spec.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError as exc:
        raise ConfigParse(f"grid must look like a:b:n, got {spec!r}") from exc
    if n < 2 or not b > a:
        raise ConfigParse(f"grid {spec!r} needs n >= 2 and a < b")
    return np.linspace(a, b, n)


@dataclass
class ScenarioConfig:
    seed: int = 0
    dims: list = field(default_factory=lambda: [(3, 1.0), (2, 1.0 / 3.0)])
    function_specs: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    instances: int = 1
    operators: list = field(default_factory=list)
    flow_scale: float = 4.0
    epsilons: list = field(default_factory=lambda: [1.0])
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        self.seed = int(self.seed)
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigParse("seed must be a 64-bit unsigned integer")
        if not self.dims:
            raise ConfigParse("dims must be non-empty")
        self.dims = [(int(d), float(w)) for d, w in self.dims]
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise ConfigParse(f"unknown checks {sorted(unknown)}")
        tol = dict(DEFAULT_TOLERANCES)
        tol.update({k: float(v) for k, v in self.tolerances.items()})
        if any(not v > 0 for v in tol.values()):
            raise ConfigParse("tolerances must be positive")
        self.tolerances = tol
        self.functions = [WienerFunction.from_spec(s) for s in self.function_specs]

    @classmethod
    def from_json(cls, data: dict, base_dir=None) -> "ScenarioConfig":
        known = {"seed", "dims", "function_specs", "checks", "tolerances", "grids",
                 "instances", "operators", "flow_scale", "epsilons"}
        extra = set(data) - known
        if extra:
            raise ConfigParse(f"unknown config keys {sorted(extra)}")
        try:
            return cls(base_dir=Path(base_dir or Path.cwd()), **data)
        except TypeError as exc:
            raise ConfigParse(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        return cls.from_json(read_json(path), path.parent)

    @classmethod
    def default(cls) -> "ScenarioConfig":
        text = resources.files("opcalc").joinpath("default_config.json").read_text()
        return cls.from_json(json.loads(text))

    def instance_list(self) -> list:
        """``(label, H, V)`` triples: generated ones, then any listed operator files."""
        out = []
        for k in range(int(self.instances)):
            H, V = generate_instance(self.seed + k, self.dims)
            out.append((f"seed={self.seed + k}", H, V))
        for k, ref in enumerate(self.operators):
            H = load_operator(self.base_dir / ref["H"])
            V = load_operator(self.base_dir / ref["V"])
            out.append((f"file{k}", H, V))
        return out


# -- individual checks: each yields (instance_label, residual) ----------------------


def _check_moi_dual_path(cfg, label, H, V):
    quad = QuadratureConfig()
    for f in cfg.functions:
        for n in (1, 2):
            # extra operators are fixed perturbations of H so the instance stays seeded
            ops = [H + V * (0.5 * j) for j in range(n + 1)]
            dirs = [V] * n
            req = MOIRequest(ops, dirs, DividedDifferenceKernel(f, n))
            res = uniform_norm(moi_fourier(req, quad).value - moi_spectral(req).value)
            yield f"{label};f={f};n={n}", res


def _check_dk(cfg, label, H, V):
    for f in cfg.functions:
        yield f"{label};f={f}", daletskii_krein_residual(f, H, V)


def _check_frechet(cfg, label, H, V):
    for f in cfg.functions:
        D = frechet_derivative(FrechetRequest(f, H, (V,)))
        yield f"{label};f={f}", uniform_norm(D - central_difference(f, H, V, 1e-4))


def _check_taylor(cfg, label, H, V):
    for f in cfg.functions:
        for n in (1, 2):
            if f.max_order < n + 1:
                continue
            fit = taylor_slope(f, H, V * 0.5, n)
            yield f"{label};f={f};n={n}", max(0.0, (n + 1) - fit.slope)


def _check_duhamel(cfg, label, H, V):
    A = H + V
    for s in (-4.0, 1.0, 4.0):
        lhs = duhamel_difference(s, A, H)
        rhs = exp_i(s, A) - exp_i(s, H)
        # relative to the contract scale 1 + ||A - B|| |s|
        yield f"{label};s={s}", uniform_norm(lhs - rhs) / (1.0 + uniform_norm(V) * abs(s))


def _check_krein(cfg, label, H, V):
    for f in cfg.functions:
        yield f"{label};f={f}", krein_trace_check(f, H, V)
    rep = xi_bounds_check(H, V)
    yield f"{label};bounds", 0.0 if rep.ok else np.inf


def _check_birman_solomyak(cfg, label, H, V):
    a, b = spectral_window(H, V)
    yield label, averaging_identity_check(H, V, np.linspace(a, b, 33))


def _check_flow(cfg, label, H, V):
    W = V * cfg.flow_scale
    a, b = spectral_window(H, W)
    grid = parse_grid(cfg.grids["mu"]) if "mu" in cfg.grids else np.linspace(a, b, 64)
    for eps in cfg.epsilons:
        reports = flow_shift_identity_check(FlowRequest(H, W, epsilon=float(eps)), grid)
        worst = 0.0
        for r in reports:
            if r.collision:
                continue
            exact = r.consistency["counting_equals_partition"] and r.consistency["flow_equals_shift"]
            worst = max(worst, abs(r.sf_carey_phillips - r.sf_counting) if exact else np.inf)
        yield f"{label};eps={eps}", worst


_RUNNERS = {
    "moi_dual_path": _check_moi_dual_path,
    "dk": _check_dk,
    "frechet": _check_frechet,
    "taylor": _check_taylor,
    "duhamel": _check_duhamel,
    "krein": _check_krein,
    "birman_solomyak": _check_birman_solomyak,
    "flow_identity": _check_flow,
}


def thread_count() -> int:
    env = os.environ.get("OPCALC_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigParse(f"OPCALC_THREADS must be an integer, got {env!r}") from exc
        return max(1, n)
    return os.cpu_count() or 1


def run_checks(cfg: ScenarioConfig) -> list:
    """Rows ``{check, instance, residual, tolerance, pass}`` in a fixed order."""
    instances = cfg.instance_list()
    tasks = [(c, inst) for c in cfg.checks for inst in instances]

    def work(task):
        check, (label, H, V) = task
        tol = cfg.tolerances[check]
        rows = []
        for name, res in _RUNNERS[check](cfg, label, H, V):
            res = float(res)
            rows.append({"check": check, "instance": name, "residual": res,
                         "tolerance": tol, "pass": bool(res <= tol)})
        return rows

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        chunks = list(pool.map(work, tasks))
    return [row for chunk in chunks for row in chunk]


def run_suite(cfg: ScenarioConfig, report_path=None) -> tuple:
    """Run the configured checks; returns ``(report, exit_status)``."""
    rows = run_checks(cfg)
    report = {
        "header": {"rng": RNG_NAME, "seed": cfg.seed, "version": __version__},
        "results": rows,
    }
    if report_path is not None:
        write_json(report_path, report)
    status = 0 if all(r["pass"] for r in rows) else 1
    return report, status


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


def write_xi_csv(path, H, V, grid, with_average: bool = False) -> None:
    xi = xi_counting(H, V)
    grid = np.asarray(grid, dtype=float)
    avg = AveragedMeasure.birman_solomyak(H, V).on_grid(grid) if with_average else None
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "xi", "Xi"] if with_average else ["lambda", "xi"])
        for k, lam in enumerate(grid):
            row = [_fmt(lam), _fmt(xi(lam))]
            if with_average:
                # Xi over the interval from this grid point to the next one
                row.append(_fmt(avg[k]) if k < avg.size else "")
            w.writerow(row)


def write_flow_csv(path, D0, V, grid, epsilon: float = 1.0) -> None:
    reports = flow_shift_identity_check(FlowRequest(D0, V, epsilon=epsilon), grid)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mu", "sf_counting", "sf_partition", "sf_cp", "xi", "kernel_corr"])
        for r in reports:
            w.writerow([_fmt(r.mu), _fmt(r.sf_counting), _fmt(r.sf_partition),
                        _fmt(r.sf_carey_phillips), _fmt(r.xi_at_mu), _fmt(r.kernel_correction)])


def emit_curves(cfg: ScenarioConfig, outdir) -> tuple:
    """Write ``xi.csv`` and ``flow.csv`` for the first instance of the config."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _, H, V = cfg.instance_list()[0]
    W = V * cfg.flow_scale
    a, b = spectral_window(H, W)
    lam = parse_grid(cfg.grids["lambda"]) if "lambda" in cfg.grids else np.linspace(a, b, 201)
    mu = parse_grid(cfg.grids["mu"]) if "mu" in cfg.grids else np.linspace(a, b, 64)
    xi_path, flow_path = outdir / "xi.csv", outdir / "flow.csv"
    write_xi_csv(xi_path, H, W, lam)
    write_flow_csv(flow_path, H, W, mu, float(cfg.epsilons[0]))
    return xi_path, flow_path
