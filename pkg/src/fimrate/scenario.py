"""User drops, link budgets and Monte-Carlo sweeps over the four schemes.

Seeding: drop ``i`` of a run with base seed ``s`` draws its users from
``SeedSequence([s, i, attempt])`` (``attempt`` is 1 for the single resample of
an infeasible drop) and its initial morph from ``SeedSequence([s, i, attempt, 1])``.
Every sweep point reuses the same drops, so schemes and points are paired.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import constants

from .bca import SolverConfig, SolveResult, epa_powers, is_feasible, run_bca
from .correlation import UserLinkStats
from .geometry import SurfaceGeometry
from .morph import MorphProblem
from .rate import bits_to_nats, nats_to_bits, rates, sum_rate
from .units import dbm_to_watts

log = logging.getLogger(__name__)

SCHEMES = ("FIM-OPA", "FIM-EPA", "RAA-OPA", "RAA-EPA")
AXES = ("p_max_dbm", "n_elements", "spacing", "morph_range", "user_radius")


def drop_users(k: int, radius: float, center_distance: float, rng) -> np.ndarray:
    """Distances from the reference element to ``k`` users uniform on a disk.

    The disk lies in the horizontal plane, centered ``center_distance`` in
    front of the array.
    """
    rng = np.random.default_rng(rng)
    if radius < 0 or (radius > 0 and radius >= center_distance):
        raise ValueError("user disk must lie strictly in front of the array")
    r = radius * np.sqrt(rng.uniform(size=k))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=k)
    return np.hypot(r * np.cos(theta), center_distance + r * np.sin(theta))


def path_gain(d, exponent: float = 2.8, ref_loss_db: float = 30.0, d0: float = 1.0):
    """Large-scale power gain ``-ref_loss_db - 10 exponent log10(d/d0)`` dB, linear."""
    d = np.asarray(d, dtype=float)
    if np.any(d < d0):
        raise ValueError("distance below the reference distance")
    out = 10.0 ** ((-ref_loss_db - 10.0 * exponent * np.log10(d / d0)) / 10.0)
    return out if out.ndim else float(out)


def noise_power(bandwidth: float, psd_dbm_hz: float = -174.0) -> float:
    """Thermal noise in watts over ``bandwidth`` Hz."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    return dbm_to_watts(psd_dbm_hz + 10.0 * math.log10(bandwidth))


@dataclass
class ScenarioParams:
    """Physical setup, with units in the field names."""

    n_x: int = 16
    n_z: int = 16
    spacing_h_wavelengths: float = 0.25
    spacing_v_wavelengths: float = 0.25
    y_max_wavelengths: float = 0.3
    carrier_hz: float = 3.5e9
    bandwidth_hz: float = 20e6
    n_users: int = 8
    tau: int | None = None           # pilot length; defaults to n_users
    tau_c: int = 200
    r_min_bps_hz: float = 1.0
    p_max_dbm: float = 30.0
    p_train_dbm: float = 10.0
    user_radius_m: float = 20.0
    center_distance_m: float = 50.0
    pathloss_exponent: float = 2.8
    ref_loss_db: float = 30.0
    noise_psd_dbm_hz: float = -174.0
    noise_dbm_override: list | None = None
    interference: str = "uatf"
    init_morph: str = "random"       # random | flat | checkerboard

    @property
    def wavelength(self) -> float:
        return constants.c / self.carrier_hz

    @property
    def pilot_length(self) -> int:
        return self.n_users if self.tau is None else int(self.tau)

    def validate(self):
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if self.pilot_length < self.n_users:
            raise ValueError("pilot length must be at least the number of users")
        if self.pilot_length > self.tau_c:
            raise ValueError("pilot length exceeds the coherence interval")
        if self.init_morph not in ("random", "flat", "checkerboard"):
            raise ValueError(f"unknown init_morph {self.init_morph!r}")
        if self.noise_dbm_override is not None and len(self.noise_dbm_override) != self.n_users:
            raise ValueError("noise_dbm_override needs one entry per user")
        return self


@dataclass(frozen=True)
class Scenario:
    geometry: SurfaceGeometry
    users: tuple
    p_max: float
    p_train: float
    tau: int
    tau_c: int
    r_min: np.ndarray      # bps/Hz per user
    bandwidth: float
    pilot_noise: float
    seed: int
    distances: np.ndarray
    interference: str = "uatf"

    def __post_init__(self):
        if self.tau > self.tau_c:
            raise ValueError("tau must not exceed tau_c")
        if len(self.users) < 1:
            raise ValueError("at least one user required")

    @property
    def prelog(self) -> float:
        return (self.tau_c - self.tau) / self.tau_c

    @property
    def regularizer(self) -> float:
        return self.pilot_noise / (self.tau * self.p_train)

    def problem(self, y_max: float | None = None) -> MorphProblem:
        geo = self.geometry if y_max is None else replace(self.geometry, y_max=y_max).with_morph(
            np.minimum(self.geometry.y, y_max))
        return MorphProblem(geometry=geo, users=self.users, regularizer=self.regularizer,
                            prelog=self.prelog, p_max=self.p_max,
                            r_min=bits_to_nats(np.asarray(self.r_min, dtype=float)),
                            interference=self.interference)


def element_gain(beta, d_h: float, d_v: float, wavelength: float):
    """Per-element variance: path gain scaled by element area relative to (wavelength/4)^2."""
    return np.asarray(beta) * (d_h * d_v) / (wavelength / 4.0) ** 2


def build_scenario(params: ScenarioParams, seed: int, drop: int = 0, attempt: int = 0) -> Scenario:
    params.validate()
    lam = params.wavelength
    rng = np.random.default_rng(np.random.SeedSequence([seed, drop, attempt]))
    d = drop_users(params.n_users, params.user_radius_m, params.center_distance_m, rng)
    beta = path_gain(d, params.pathloss_exponent, params.ref_loss_db)
    d_h = params.spacing_h_wavelengths * lam
    d_v = params.spacing_v_wavelengths * lam
    gains = element_gain(beta, d_h, d_v, lam)
    sigma2 = noise_power(params.bandwidth_hz, params.noise_psd_dbm_hz)
    if params.noise_dbm_override is not None:
        noises = [dbm_to_watts(v) for v in params.noise_dbm_override]
    else:
        noises = [sigma2] * params.n_users
    users = tuple(UserLinkStats(float(g), float(s), k) for k, (g, s) in enumerate(zip(gains, noises)))
    y_max = params.y_max_wavelengths * lam
    geo = SurfaceGeometry(params.n_x, params.n_z, d_h, d_v, lam, y_max)
    geo = geo.with_morph(initial_morph(geo, params.init_morph,
                                       np.random.SeedSequence([seed, drop, attempt, 1])))
    return Scenario(geometry=geo, users=users, p_max=dbm_to_watts(params.p_max_dbm),
                    p_train=dbm_to_watts(params.p_train_dbm), tau=params.pilot_length,
                    tau_c=params.tau_c, r_min=np.full(params.n_users, params.r_min_bps_hz),
                    bandwidth=params.bandwidth_hz, pilot_noise=sigma2, seed=seed, distances=d,
                    interference=params.interference)


def initial_morph(geometry: SurfaceGeometry, kind: str, seed) -> np.ndarray:
    """Starting morph.  The flat surface is a stationary point of every rate, so
    the optimizer is normally started from a random or checkerboard shape."""
    N = geometry.n_elements
    if kind == "flat" or geometry.y_max == 0:
        return np.zeros(N)
    if kind == "checkerboard":
        idx = np.arange(N)
        return geometry.y_max * (((idx % geometry.n_x) + (idx // geometry.n_x)) % 2).astype(float)
    if kind == "random":
        return np.random.default_rng(seed).uniform(0.0, geometry.y_max, size=N)
    raise ValueError(f"unknown initial morph {kind!r}")


# ---------------------------------------------------------------------------
# schemes


def solve_scheme(scenario: Scenario, scheme: str, config: SolverConfig | None = None) -> SolveResult:
    """Run one of the four benchmark schemes on a scenario."""
    cfg = config or SolverConfig()
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    rigid = scheme.startswith("RAA")
    epa = scheme.endswith("EPA")
    problem = scenario.problem(y_max=0.0) if rigid else scenario.problem()
    cfg = replace(cfg, power_mode="epa" if epa else "sca", morph_enabled=cfg.morph_enabled and not rigid)
    y0 = np.zeros(problem.geometry.n_elements) if rigid else problem.geometry.y
    return run_bca(problem, init_y=y0, config=cfg)


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    schemes: tuple = SCHEMES
    drops: int = 20

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"sweep axis must be one of {AXES}, got {self.axis!r}")
        if len(self.values) == 0:
            raise ValueError("sweep needs at least one value")
        if len(self.schemes) == 0:
            raise ValueError("sweep needs at least one scheme")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ValueError(f"unknown schemes {bad}")
        if self.drops < 1:
            raise ValueError("drops must be >= 1")


def apply_axis(params: ScenarioParams, axis: str, value) -> ScenarioParams:
    if axis == "p_max_dbm":
        return replace(params, p_max_dbm=float(value))
    if axis == "n_elements":
        side = int(round(math.sqrt(value)))
        if side * side != int(value):
            raise ValueError(f"n_elements sweep values must be perfect squares, got {value}")
        return replace(params, n_x=side, n_z=side)
    if axis == "spacing":
        return replace(params, spacing_h_wavelengths=float(value), spacing_v_wavelengths=float(value))
    if axis == "morph_range":
        return replace(params, y_max_wavelengths=float(value))
    if axis == "user_radius":
        return replace(params, user_radius_m=float(value))
    raise ValueError(f"unknown axis {axis!r}")


@dataclass
class DropOutcome:
    value: float
    drop: int
    attempt: int
    feasible: bool
    sum_rates: dict = field(default_factory=dict)     # scheme -> bps/Hz
    scheme_feasible: dict = field(default_factory=dict)
    error: str | None = None


def _closed_form_raa_epa(scenario: Scenario, epa_mode: str):
    problem = scenario.problem(y_max=0.0)
    ctx = problem.context(np.zeros(problem.geometry.n_elements))
    p = epa_powers(ctx, problem.p_max, epa_mode)
    return nats_to_bits(sum_rate(p, ctx)), is_feasible(ctx, p, problem.p_max, problem.r_min)


def run_drop(params: ScenarioParams, schemes: Sequence[str], seed: int, drop: int, value: float,
             config: SolverConfig | None = None) -> DropOutcome:
    """All schemes on one user drop.  Solver errors are captured, not raised."""
    cfg = config or SolverConfig()
    opa = [s for s in schemes if s.endswith("OPA")]
    try:
        raa_opa = None
        for attempt in (0, 1):
            scenario = build_scenario(params, seed, drop, attempt)
            if opa:
                raa_opa = solve_scheme(scenario, "RAA-OPA", cfg)
                if not raa_opa.feasible:
                    continue
            break
        else:
            return DropOutcome(value=value, drop=drop, attempt=1, feasible=False)
        out = DropOutcome(value=value, drop=drop, attempt=attempt, feasible=True)
        for scheme in schemes:
            if scheme == "RAA-EPA":
                sr, ok = _closed_form_raa_epa(scenario, cfg.epa_mode)
            elif scheme == "RAA-OPA" and raa_opa is not None:
                sr, ok = raa_opa.sum_rate, raa_opa.feasible
            else:
                res = solve_scheme(scenario, scheme, cfg)
                sr, ok = res.sum_rate, res.feasible
            out.sum_rates[scheme] = float(sr)
            out.scheme_feasible[scheme] = bool(ok)
        return out
    except Exception as exc:  # recorded per drop; a sweep never aborts
        log.warning("drop %d at %s failed: %s", drop, value, exc)
        return DropOutcome(value=value, drop=drop, attempt=0, feasible=False, error=repr(exc))


def _run_drop_star(args):
    return run_drop(*args)


def run_sweep(base: ScenarioParams, spec: SweepSpec, config: SolverConfig | None = None,
              seed: int = 0, jobs: int = 1):
    """Mean and standard error of the sum rate per (value, scheme).

    Returns ``(rows, outcomes)``: one summary row per (value, scheme) and the
    per-drop outcomes in deterministic (value, drop) order.
    """
    cfg = config or SolverConfig()
    tasks = [(apply_axis(base, spec.axis, v), tuple(spec.schemes), seed, i, v, cfg)
             for v in spec.values for i in range(spec.drops)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_drop_star, tasks))
    else:
        outcomes = [_run_drop_star(t) for t in tasks]
    rows = summarize(spec, outcomes)
    return rows, outcomes


def summarize(spec: SweepSpec, outcomes: Sequence[DropOutcome]) -> list:
    rows = []
    for v in spec.values:
        at = [o for o in outcomes if o.value == v]
        used = [o for o in at if o.feasible]
        infeasible = len(at) - len(used)
        for scheme in spec.schemes:
            vals = np.array([o.sum_rates[scheme] for o in used])
            mean = float(vals.mean()) if vals.size else float("nan")
            stderr = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
            rows.append({"axis": spec.axis, "value": v, "scheme": scheme,
                         "mean_sum_rate_bps_hz": mean, "stderr": stderr,
                         "drops_used": int(vals.size), "infeasible_drops": int(infeasible)})
    return rows


def params_dict(params: ScenarioParams) -> dict:
    return asdict(params)
