"""Scenario files: strict JSON schema, defaults, and bundled presets.

A scenario file describes one episode: initial state, gain
initialization, environment (contact surfaces, disturbance pulses,
commanded-pose schedule), safe set, loop settings and metric
definitions.  Parsing is strict — an unknown key anywhere raises
``ParseError`` naming it, so typos cannot silently fall back to
defaults.  Semantic problems (an empty safe box, inverted bounds, …)
raise ``ValidationError``.

Every field has a documented default; the minimal useful file is just a
name plus whatever differs from the defaults.  ``Scenario.resolved``
holds the fully-populated primitive form (random disturbances already
materialized), sufficient to replay the episode exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .dynamics import N_AXES, N_INPUTS, ImpedanceGains, input_from_gains
from .environment import (
    ContactSurface,
    DisturbanceProfile,
    DisturbanceSegment,
    ReferenceSchedule,
)
from .optimizer import SqpOptions
from .runtime import LoopConfig, MetricsConfig
from .safety import BoxSafeSet


class ParseError(ValueError):
    """Structural problem in a scenario file: unknown key, wrong type/shape."""


class ValidationError(ValueError):
    """Well-formed scenario that violates a semantic invariant."""


def _check_keys(d: dict, allowed, where: str):
    if not isinstance(d, dict):
        raise ParseError(f"{where} must be an object, got {type(d).__name__}")
    for key in d:
        if key not in allowed:
            raise ParseError(f"unknown key '{key}' in {where}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where} must be a number, got {type(value).__name__}")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{where} must be an integer, got {type(value).__name__}")
    return int(value)


def _vector(value, n: int, where: str) -> np.ndarray:
    """A scalar (broadcast) or a length-n list of numbers."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(n, float(value))
    if isinstance(value, list):
        if len(value) != n:
            raise ParseError(f"{where} must have length {n}, got {len(value)}")
        return np.array([_number(v, f"{where}[{i}]") for i, v in enumerate(value)])
    raise ParseError(f"{where} must be a number or a list of {n} numbers")


def _pair(value, where: str) -> tuple:
    if not isinstance(value, list) or len(value) != 2:
        raise ParseError(f"{where} must be a [low, high] pair")
    lo = _number(value[0], f"{where}[0]")
    hi = _number(value[1], f"{where}[1]")
    if not lo <= hi:
        raise ValidationError(f"{where}: low must not exceed high")
    return (lo, hi)


@dataclass
class InitialGainSpec:
    """How the adaptive mode seeds its first gain input.

    "random" draws each normalized-damping component from ``kd``, each
    normalized-stiffness component from ``kp`` and each inverse-inertia
    component from ``minv`` (uniform, per axis).  "fixed" converts the
    given physical gains.
    """

    mode: str = "random"
    kd: tuple = (1.0, 8.0)
    kp: tuple = (30.0, 120.0)
    minv: tuple = (0.5, 1.5)
    gains: ImpedanceGains | None = None

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.mode == "fixed":
            return input_from_gains(self.gains)
        return np.concatenate(
            [
                rng.uniform(self.kd[0], self.kd[1], N_AXES),
                rng.uniform(self.kp[0], self.kp[1], N_AXES),
                rng.uniform(self.minv[0], self.minv[1], N_AXES),
            ]
        )


@dataclass
class Scenario:
    """A fully-resolved episode description (see module docstring)."""

    name: str
    seed: int
    episode_length: float
    e0: np.ndarray
    edot0: np.ndarray
    initial_gains: InitialGainSpec
    constant_gains: ImpedanceGains
    surfaces: list
    disturbance: DisturbanceProfile | None
    reference: ReferenceSchedule | None
    safe_set: BoxSafeSet
    loop: LoopConfig
    metrics: MetricsConfig
    resolved: dict = field(default_factory=dict, repr=False)

    def sample_initial_u(self, rng: np.random.Generator) -> np.ndarray:
        return self.initial_gains.sample(rng)

    def contact_axis(self) -> int | None:
        return self.surfaces[0].axis if self.surfaces else None

    def with_mode(self, mode: str) -> "Scenario":
        loop = replace(self.loop, baseline_mode=mode)
        resolved = json.loads(json.dumps(self.resolved))
        resolved["loop"]["baseline_mode"] = mode
        return replace(self, loop=loop, resolved=resolved)

    def with_latency(self, latency: float) -> "Scenario":
        loop = replace(self.loop, simulated_solve_latency=float(latency))
        resolved = json.loads(json.dumps(self.resolved))
        resolved["loop"]["simulated_solve_latency"] = float(latency)
        return replace(self, loop=loop, resolved=resolved)

    def resolved_json(self, indent=None) -> str:
        return json.dumps(self.resolved, sort_keys=True, indent=indent)


_TOP_KEYS = {
    "name",
    "seed",
    "episode_length",
    "initial_state",
    "initial_gains",
    "constant_gains",
    "environment",
    "safe_set",
    "loop",
    "metrics",
}


def _parse_initial_state(data) -> tuple:
    _check_keys(data, {"e", "e_dot"}, "initial_state")
    e = _vector(data.get("e", 0.0), N_AXES, "initial_state.e")
    e_dot = _vector(data.get("e_dot", 0.0), N_AXES, "initial_state.e_dot")
    return e, e_dot


def _parse_gain_triple(data, where: str, default_m, default_kd, default_kp) -> ImpedanceGains:
    _check_keys(data, {"m", "kd", "kp"}, where)
    m = _vector(data.get("m", default_m), N_AXES, f"{where}.m")
    kd = _vector(data.get("kd", default_kd), N_AXES, f"{where}.kd")
    kp = _vector(data.get("kp", default_kp), N_AXES, f"{where}.kp")
    try:
        return ImpedanceGains(m, kd, kp)
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _parse_initial_gains(data) -> InitialGainSpec:
    _check_keys(data, {"random", "fixed"}, "initial_gains")
    if "random" in data and "fixed" in data:
        raise ParseError("initial_gains must have exactly one of 'random' or 'fixed'")
    if "fixed" in data:
        gains = _parse_gain_triple(data["fixed"], "initial_gains.fixed", 1.0, 10.0, 100.0)
        return InitialGainSpec(mode="fixed", gains=gains)
    spec = InitialGainSpec()
    block = data.get("random", {})
    _check_keys(block, {"kd", "kp", "minv"}, "initial_gains.random")
    kd = _pair(block["kd"], "initial_gains.random.kd") if "kd" in block else spec.kd
    kp = _pair(block["kp"], "initial_gains.random.kp") if "kp" in block else spec.kp
    minv = _pair(block["minv"], "initial_gains.random.minv") if "minv" in block else spec.minv
    for name, rng_pair in (("kd", kd), ("kp", kp), ("minv", minv)):
        if rng_pair[0] <= 0:
            raise ValidationError(f"initial_gains.random.{name}: range must be positive")
    return InitialGainSpec(mode="random", kd=kd, kp=kp, minv=minv)


def _parse_surface(data, idx: int) -> ContactSurface:
    where = f"environment.surfaces[{idx}]"
    _check_keys(data, {"axis", "location", "stiffness", "damping", "penetration_sign"}, where)
    if "axis" not in data or "location" not in data or "stiffness" not in data:
        raise ParseError(f"{where} needs 'axis', 'location' and 'stiffness'")
    axis = _integer(data["axis"], f"{where}.axis")
    try:
        return ContactSurface(
            axis=axis,
            location=_number(data["location"], f"{where}.location"),
            stiffness=_number(data["stiffness"], f"{where}.stiffness"),
            damping=_number(data.get("damping", 0.0), f"{where}.damping"),
            penetration_sign=_integer(data.get("penetration_sign", -1), f"{where}.penetration_sign"),
        )
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _parse_disturbance(data, scenario_seed: int) -> DisturbanceProfile | None:
    _check_keys(data, {"segments", "random"}, "environment.disturbance")
    segments = []
    for i, seg in enumerate(data.get("segments", [])):
        where = f"environment.disturbance.segments[{i}]"
        _check_keys(seg, {"t_start", "t_end", "wrench"}, where)
        if "t_start" not in seg or "t_end" not in seg or "wrench" not in seg:
            raise ParseError(f"{where} needs 't_start', 't_end' and 'wrench'")
        try:
            segments.append(
                DisturbanceSegment(
                    t_start=_number(seg["t_start"], f"{where}.t_start"),
                    t_end=_number(seg["t_end"], f"{where}.t_end"),
                    wrench=_vector(seg["wrench"], N_AXES, f"{where}.wrench"),
                )
            )
        except ValueError as exc:
            raise ValidationError(f"{where}: {exc}") from exc
    profile_seed = None
    if "random" in data:
        block = data["random"]
        where = "environment.disturbance.random"
        _check_keys(block, {"count", "t_range", "duration", "magnitude", "axes", "seed"}, where)
        count = _integer(block.get("count", 3), f"{where}.count")
        if count < 0:
            raise ValidationError(f"{where}.count must be nonnegative")
        t_range = _pair(block.get("t_range", [0.0, 5.0]), f"{where}.t_range")
        duration = _pair(block.get("duration", [0.3, 0.8]), f"{where}.duration")
        magnitude = _pair(block.get("magnitude", [5.0, 25.0]), f"{where}.magnitude")
        axes_raw = block.get("axes", [0])
        if not isinstance(axes_raw, list) or not axes_raw:
            raise ParseError(f"{where}.axes must be a nonempty list of axis indices")
        axes = tuple(_integer(a, f"{where}.axes[{i}]") for i, a in enumerate(axes_raw))
        for a in axes:
            if not 0 <= a < N_AXES:
                raise ValidationError(f"{where}.axes: axis {a} out of range")
        if "seed" in block:
            profile_seed = _integer(block["seed"], f"{where}.seed")
            seed_key = profile_seed
        else:
            seed_key = [scenario_seed, 202]
        random_profile = DisturbanceProfile.from_random(
            seed=seed_key,
            count=count,
            t_range=t_range,
            duration=duration,
            magnitude=magnitude,
            axes=axes,
        )
        segments.extend(random_profile.segments)
    if not segments:
        return None
    return DisturbanceProfile(segments=segments, seed=profile_seed)


def _parse_reference(data) -> ReferenceSchedule | None:
    _check_keys(data, {"interpolation", "waypoints"}, "environment.reference")
    waypoints = data.get("waypoints", [])
    if not isinstance(waypoints, list):
        raise ParseError("environment.reference.waypoints must be a list")
    if not waypoints:
        return None
    times = []
    points = []
    for i, wp in enumerate(waypoints):
        where = f"environment.reference.waypoints[{i}]"
        if not isinstance(wp, list) or len(wp) != 2:
            raise ParseError(f"{where} must be [time, point]")
        times.append(_number(wp[0], f"{where}[0]"))
        points.append(_vector(wp[1], N_AXES, f"{where}[1]"))
    interpolation = data.get("interpolation", "hold")
    if interpolation not in ("hold", "linear"):
        raise ParseError("environment.reference.interpolation must be 'hold' or 'linear'")
    try:
        return ReferenceSchedule(np.array(times), np.array(points), interpolation)
    except ValueError as exc:
        raise ValidationError(f"environment.reference: {exc}") from exc


def _parse_environment(data, scenario_seed: int) -> tuple:
    _check_keys(data, {"surfaces", "disturbance", "reference"}, "environment")
    raw_surfaces = data.get("surfaces", [])
    if not isinstance(raw_surfaces, list):
        raise ParseError("environment.surfaces must be a list")
    surfaces = [_parse_surface(s, i) for i, s in enumerate(raw_surfaces)]
    seen = set()
    for s in surfaces:
        if s.axis in seen:
            raise ValidationError(f"environment.surfaces: duplicate surface on axis {s.axis}")
        seen.add(s.axis)
    disturbance = _parse_disturbance(data["disturbance"], scenario_seed) if "disturbance" in data else None
    reference = _parse_reference(data["reference"]) if "reference" in data else None
    return surfaces, disturbance, reference


def _parse_safe_set(data) -> BoxSafeSet:
    _check_keys(data, {"d_lb", "d_ub", "active"}, "safe_set")
    d_lb = _vector(data.get("d_lb", -1.0), N_AXES, "safe_set.d_lb")
    d_ub = _vector(data.get("d_ub", 1.0), N_AXES, "safe_set.d_ub")
    active_raw = data.get("active", True)
    if isinstance(active_raw, bool):
        active = np.full(N_AXES, active_raw)
    elif isinstance(active_raw, list):
        if len(active_raw) != N_AXES or not all(isinstance(a, bool) for a in active_raw):
            raise ParseError(f"safe_set.active must be a bool or a list of {N_AXES} bools")
        active = np.array(active_raw)
    else:
        raise ParseError(f"safe_set.active must be a bool or a list of {N_AXES} bools")
    try:
        return BoxSafeSet(d_lb=d_lb, d_ub=d_ub, active=active)
    except ValueError as exc:
        raise ValidationError(f"safe_set: {exc}") from exc


def _parse_u_bound(value, where: str, default: float) -> np.ndarray:
    """A gain-input bound: scalar, 18-list, or per-block {kd, kp, minv}."""
    if isinstance(value, dict):
        _check_keys(value, {"kd", "kp", "minv"}, where)
        parts = []
        for key in ("kd", "kp", "minv"):
            parts.append(_vector(value.get(key, default), N_AXES, f"{where}.{key}"))
        return np.concatenate(parts)
    return _vector(value, N_INPUTS, where)


_LOOP_KEYS = {
    "tick_rate",
    "buffer_period",
    "gamma",
    "substeps",
    "rollout_substeps",
    "baseline_mode",
    "simulated_solve_latency",
    "candidate_eval",
    "cost_kind",
    "u_min",
    "u_max",
    "sqp",
    "qp_tol",
}

_SQP_KEYS = {"max_iter", "step_tol", "fd_rel_step", "max_backtracks", "resample_attempts", "seed"}


def _parse_sqp(data) -> SqpOptions:
    _check_keys(data, _SQP_KEYS, "loop.sqp")
    opts = SqpOptions()
    if "max_iter" in data:
        opts = replace(opts, max_iter=_integer(data["max_iter"], "loop.sqp.max_iter"))
    if "step_tol" in data:
        opts = replace(opts, step_tol=_number(data["step_tol"], "loop.sqp.step_tol"))
    if "fd_rel_step" in data:
        opts = replace(opts, fd_rel_step=_number(data["fd_rel_step"], "loop.sqp.fd_rel_step"))
    if "max_backtracks" in data:
        opts = replace(opts, max_backtracks=_integer(data["max_backtracks"], "loop.sqp.max_backtracks"))
    if "resample_attempts" in data:
        opts = replace(opts, resample_attempts=_integer(data["resample_attempts"], "loop.sqp.resample_attempts"))
    if "seed" in data:
        opts = replace(opts, seed=_integer(data["seed"], "loop.sqp.seed"))
    return opts


def _parse_loop(data) -> LoopConfig:
    _check_keys(data, _LOOP_KEYS, "loop")
    kwargs = {}
    if "tick_rate" in data:
        kwargs["tick_rate"] = _number(data["tick_rate"], "loop.tick_rate")
    if "buffer_period" in data:
        kwargs["buffer_period"] = _number(data["buffer_period"], "loop.buffer_period")
    if "gamma" in data:
        kwargs["gamma"] = _number(data["gamma"], "loop.gamma")
    if "substeps" in data:
        kwargs["substeps"] = _integer(data["substeps"], "loop.substeps")
    if "rollout_substeps" in data:
        kwargs["rollout_substeps"] = _integer(data["rollout_substeps"], "loop.rollout_substeps")
    if "baseline_mode" in data:
        if not isinstance(data["baseline_mode"], str):
            raise ParseError("loop.baseline_mode must be a string")
        kwargs["baseline_mode"] = data["baseline_mode"]
    if "simulated_solve_latency" in data:
        kwargs["simulated_solve_latency"] = _number(data["simulated_solve_latency"], "loop.simulated_solve_latency")
    if "candidate_eval" in data:
        if not isinstance(data["candidate_eval"], str):
            raise ParseError("loop.candidate_eval must be a string")
        kwargs["candidate_eval"] = data["candidate_eval"]
    if "cost_kind" in data:
        if not isinstance(data["cost_kind"], str):
            raise ParseError("loop.cost_kind must be a string")
        kwargs["cost_kind"] = data["cost_kind"]
    if "u_min" in data:
        kwargs["u_min"] = _parse_u_bound(data["u_min"], "loop.u_min", 1e-6)
    if "u_max" in data:
        kwargs["u_max"] = _parse_u_bound(data["u_max"], "loop.u_max", 1e6)
    if "sqp" in data:
        kwargs["sqp"] = _parse_sqp(data["sqp"])
    if "qp_tol" in data:
        kwargs["qp_tol"] = _number(data["qp_tol"], "loop.qp_tol")
    try:
        return LoopConfig(**kwargs)
    except ValueError as exc:
        raise ValidationError(f"loop: {exc}") from exc


_METRICS_KEYS = {"touch_force", "band_fraction", "band_floor", "dwell", "steady_window", "axis"}


def _parse_metrics(data) -> MetricsConfig:
    _check_keys(data, _METRICS_KEYS, "metrics")
    kwargs = {}
    for key in ("touch_force", "band_fraction", "band_floor", "dwell", "steady_window"):
        if key in data:
            kwargs[key] = _number(data[key], f"metrics.{key}")
    if "axis" in data and data["axis"] is not None:
        axis = _integer(data["axis"], "metrics.axis")
        if not 0 <= axis < N_AXES:
            raise ValidationError(f"metrics.axis {axis} out of range")
        kwargs["axis"] = axis
    cfg = MetricsConfig(**kwargs)
    for key in ("touch_force", "band_fraction", "band_floor", "dwell", "steady_window"):
        if getattr(cfg, key) <= 0:
            raise ValidationError(f"metrics.{key} must be positive")
    return cfg


def _resolved_dict(sc: Scenario) -> dict:
    """Primitive snapshot of every effective setting (replayable)."""
    gains = sc.initial_gains
    if gains.mode == "fixed":
        initial_gains = {
            "fixed": {
                "m": gains.gains.m.tolist(),
                "kd": gains.gains.kd.tolist(),
                "kp": gains.gains.kp.tolist(),
            }
        }
    else:
        initial_gains = {
            "random": {"kd": list(gains.kd), "kp": list(gains.kp), "minv": list(gains.minv)}
        }
    disturbance = None
    if sc.disturbance is not None:
        disturbance = {
            "segments": [
                {"t_start": s.t_start, "t_end": s.t_end, "wrench": s.wrench.tolist()}
                for s in sc.disturbance.segments
            ]
        }
    reference = None
    if sc.reference is not None:
        reference = {
            "interpolation": sc.reference.interpolation,
            "waypoints": [
                [float(t), p.tolist()] for t, p in zip(sc.reference.times, sc.reference.points)
            ],
        }
    return {
        "name": sc.name,
        "seed": sc.seed,
        "episode_length": sc.episode_length,
        "initial_state": {"e": sc.e0.tolist(), "e_dot": sc.edot0.tolist()},
        "initial_gains": initial_gains,
        "constant_gains": {
            "m": sc.constant_gains.m.tolist(),
            "kd": sc.constant_gains.kd.tolist(),
            "kp": sc.constant_gains.kp.tolist(),
        },
        "environment": {
            "surfaces": [
                {
                    "axis": s.axis,
                    "location": s.location,
                    "stiffness": s.stiffness,
                    "damping": s.damping,
                    "penetration_sign": s.penetration_sign,
                }
                for s in sc.surfaces
            ],
            "disturbance": disturbance,
            "reference": reference,
        },
        "safe_set": {
            "d_lb": sc.safe_set.d_lb.tolist(),
            "d_ub": sc.safe_set.d_ub.tolist(),
            "active": sc.safe_set.active.tolist(),
        },
        "loop": {
            "tick_rate": sc.loop.tick_rate,
            "buffer_period": sc.loop.buffer_period,
            "gamma": sc.loop.gamma,
            "substeps": sc.loop.substeps,
            "rollout_substeps": sc.loop.rollout_substeps,
            "baseline_mode": sc.loop.baseline_mode,
            "simulated_solve_latency": sc.loop.simulated_solve_latency,
            "candidate_eval": sc.loop.candidate_eval,
            "cost_kind": sc.loop.cost_kind,
            "u_min": sc.loop.u_min.tolist(),
            "u_max": sc.loop.u_max.tolist(),
            "sqp": {
                "max_iter": sc.loop.sqp.max_iter,
                "step_tol": sc.loop.sqp.step_tol,
                "fd_rel_step": sc.loop.sqp.fd_rel_step,
                "max_backtracks": sc.loop.sqp.max_backtracks,
                "resample_attempts": sc.loop.sqp.resample_attempts,
                "seed": sc.loop.sqp.seed,
            },
            "qp_tol": sc.loop.qp_tol,
        },
        "metrics": {
            "touch_force": sc.metrics.touch_force,
            "band_fraction": sc.metrics.band_fraction,
            "band_floor": sc.metrics.band_floor,
            "dwell": sc.metrics.dwell,
            "steady_window": sc.metrics.steady_window,
            "axis": sc.metrics.axis,
        },
    }


def scenario_from_dict(data: dict, source: str = "<dict>", seed_override: int | None = None) -> Scenario:
    """Build a Scenario from parsed JSON, applying defaults strictly."""
    _check_keys(data, _TOP_KEYS, f"scenario ({source})")
    name = data.get("name", "scenario")
    if not isinstance(name, str) or not name:
        raise ParseError("name must be a nonempty string")
    seed = _integer(data.get("seed", 0), "seed")
    if seed_override is not None:
        seed = int(seed_override)
    episode_length = _number(data.get("episode_length", 6.0), "episode_length")
    if episode_length <= 0:
        raise ValidationError("episode_length must be positive")
    e0, edot0 = _parse_initial_state(data.get("initial_state", {}))
    initial_gains = _parse_initial_gains(data.get("initial_gains", {}))
    constant_gains = _parse_gain_triple(data.get("constant_gains", {}), "constant_gains", 1.0, 20.0, 100.0)
    surfaces, disturbance, reference = _parse_environment(data.get("environment", {}), seed)
    safe_set = _parse_safe_set(data.get("safe_set", {"active": False}))
    loop = _parse_loop(data.get("loop", {}))
    metrics = _parse_metrics(data.get("metrics", {}))
    sc = Scenario(
        name=name,
        seed=seed,
        episode_length=episode_length,
        e0=e0,
        edot0=edot0,
        initial_gains=initial_gains,
        constant_gains=constant_gains,
        surfaces=surfaces,
        disturbance=disturbance,
        reference=reference,
        safe_set=safe_set,
        loop=loop,
        metrics=metrics,
    )
    sc.resolved = _resolved_dict(sc)
    return sc


def load_scenario(path, seed_override: int | None = None) -> Scenario:
    """Load and resolve a scenario JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return scenario_from_dict(data, source=str(path), seed_override=seed_override)


def bundled_scenario_names() -> list:
    """Names of the scenario presets shipped with the package."""
    pkg = resources.files("vicopt.scenarios")
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str, seed_override: int | None = None) -> Scenario:
    """Load a bundled scenario preset by name (see bundled_scenario_names)."""
    pkg = resources.files("vicopt.scenarios")
    entry = pkg / f"{name}.json"
    try:
        text = entry.read_text(encoding="utf-8")
    except (FileNotFoundError, OSError) as exc:
        raise ParseError(
            f"no bundled scenario '{name}' (have: {', '.join(bundled_scenario_names())})"
        ) from exc
    data = json.loads(text)
    return scenario_from_dict(data, source=f"bundled:{name}", seed_override=seed_override)
