"""Static problem data: geometry, obstacles, LOS classification, motion energy.

Positions are length-2 float arrays [x, y] in meters on the robot's motion
plane. All quantities are stored in linear SI units (watts, Hz, bits/s,
meters); dB/dBm/Gbps appear only at the configuration-file interface.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, InvalidObstacleError, InvalidTrajectoryError

Array = np.ndarray

# Nominal path-loss exponents for line-of-sight and blocked links.
LOS_EXPONENT = 2.0
NLOS_EXPONENT = 4.5


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts * 1e3)


class LinkClass(NamedTuple):
    """Visibility of the two uplink hops from one robot position."""

    ap_los: bool
    irs_los: bool

    def label(self) -> str:
        return f"ap={'LOS' if self.ap_los else 'NLOS'} irs={'LOS' if self.irs_los else 'NLOS'}"


ALL_LINK_CLASSES = [
    LinkClass(True, True),
    LinkClass(True, False),
    LinkClass(False, True),
    LinkClass(False, False),
]


@dataclass(frozen=True)
class Obstacle:
    """Elliptic-cylinder obstacle.

    ``shape`` is the 2x2 symmetric positive-definite matrix whose unit level
    set {q : (q-center)^T shape^-1 (q-center) = 1} is the physical ellipse
    footprint; ``height`` is the cylinder height above the floor in meters.
    """

    center: Array
    shape: Array
    height: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        shape = np.asarray(self.shape, dtype=float)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "shape", shape)
        if center.shape != (2,) or not np.all(np.isfinite(center)):
            raise InvalidObstacleError("obstacle center must be a finite 2-vector")
        if shape.shape != (2, 2) or not np.all(np.isfinite(shape)):
            raise InvalidObstacleError("shape matrix must be a finite 2x2 matrix")
        if abs(shape[0, 1] - shape[1, 0]) > 1e-12:
            raise InvalidObstacleError("shape matrix must be symmetric within 1e-12")
        eigvals = np.linalg.eigvalsh(shape)
        if eigvals.min() <= 0.0:
            raise InvalidObstacleError("shape matrix must be positive definite")
        if not (self.height > 0.0):
            raise InvalidObstacleError("obstacle height must be positive")
        object.__setattr__(self, "shape_inv", np.linalg.inv(shape))

    @classmethod
    def from_extents(cls, center, length: float, width: float, angle_deg: float = 0.0,
                     height: float = 2.0) -> "Obstacle":
        """Build from full axis lengths (meters) and a rotation of the long axis."""
        a, b = length / 2.0, width / 2.0
        if a <= 0 or b <= 0:
            raise InvalidObstacleError("obstacle axis lengths must be positive")
        phi = math.radians(angle_deg)
        rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
        shape = rot @ np.diag([a * a, b * b]) @ rot.T
        shape = 0.5 * (shape + shape.T)
        return cls(np.asarray(center, dtype=float), shape, height)


@dataclass(frozen=True)
class Scenario:
    """Full static description of one planning problem.

    Internal units: meters, seconds, watts, Hz, bits/s, linear gains.
    """

    workspace: tuple  # (xmin, xmax, ymin, ymax)
    ap_pos: Array
    irs_pos: Array
    z_robot: float
    z_ap: float
    z_irs: float
    obstacles: tuple
    n_slots: int                 # K: slots per horizon; trajectory has K+1 waypoints
    slot_duration: float         # seconds
    v_max: float                 # m/s
    safety_level: float          # dimensionless ellipse level for collision avoidance
    motor_v2: float              # J*s/m^2, multiplies v^2
    motor_v1: float              # J/m, multiplies v
    motor_v0: float              # W, idle draw
    tx_power: float              # W
    noise_power: float           # W
    bandwidth_hz: float
    ref_gain: float              # linear channel power gain at 1 m
    n_antennas: int              # AP antennas
    n_irs_elements: int
    q_start: Array
    q_goal: Array
    min_avg_rate: float          # bits/s
    los_exponent: float = LOS_EXPONENT
    nlos_exponent: float = NLOS_EXPONENT

    def __post_init__(self):
        for name in ("ap_pos", "irs_pos", "q_start", "q_goal"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        xmin, xmax, ymin, ymax = self.workspace
        if not (xmax > xmin and ymax > ymin):
            raise ConfigError("workspace rectangle is empty", key="workspace")
        if self.n_slots < 1:
            raise ConfigError("need at least one timeslot", key="n_slots")
        if self.slot_duration <= 0:
            raise ConfigError("slot duration must be positive", key="slot_duration")
        if self.v_max <= 0:
            raise ConfigError("maximum speed must be positive", key="v_max")
        if self.safety_level < 1.0:
            raise ConfigError("safety level must be >= 1", key="safety_level")
        for key in ("motor_v2", "motor_v1", "motor_v0"):
            if getattr(self, key) < 0:
                raise ConfigError("motor energy constants must be nonnegative", key=key)
        if self.tx_power < 0 or self.noise_power <= 0:
            raise ConfigError("powers must be positive (tx may be zero)", key="tx_power")
        if self.n_antennas < 1:
            raise ConfigError("AP needs at least one antenna", key="n_antennas")
        if self.n_irs_elements < 0:
            raise ConfigError("IRS element count cannot be negative", key="n_irs_elements")
        if self.min_avg_rate < 0:
            raise ConfigError("rate requirement cannot be negative", key="min_avg_rate")
        for name in ("q_start", "q_goal"):
            q = getattr(self, name)
            for obs in self.obstacles:
                if obstacle_margin(q, obs) < self.safety_level:
                    raise ConfigError(
                        f"{name} violates the obstacle safety constraint", key=name
                    )

    @property
    def max_step(self) -> float:
        """Largest distance the robot can cover in one slot."""
        return self.v_max * self.slot_duration

    @property
    def snr_scale(self) -> float:
        """Transmit power over noise power; multiplies every SNR expression."""
        return self.tx_power / self.noise_power

    @property
    def ap_irs_distance(self) -> float:
        """Fixed 3D distance between the AP and the IRS."""
        planar = float(np.linalg.norm(self.ap_pos - self.irs_pos))
        return math.hypot(planar, self.z_ap - self.z_irs)

    def exponents(self, link: LinkClass) -> tuple:
        """(AP-link, IRS-link) path-loss exponents for a visibility class."""
        e_ap = self.los_exponent if link.ap_los else self.nlos_exponent
        e_irs = self.los_exponent if link.irs_los else self.nlos_exponent
        return e_ap, e_irs

    def _hash_fields(self, names) -> str:
        parts = []
        for name in names:
            value = getattr(self, name)
            if isinstance(value, np.ndarray):
                parts.append(f"{name}={value.tolist()!r}")
            elif name == "obstacles":
                for i, obs in enumerate(value):
                    parts.append(
                        f"obstacle{i}={obs.center.tolist()!r}|{obs.shape.tolist()!r}|{obs.height!r}"
                    )
            else:
                parts.append(f"{name}={value!r}")
        return hashlib.sha256(";".join(parts).encode()).hexdigest()[:16]

    def fingerprint(self) -> str:
        """Stable short hash of every field; identifies a full planning problem."""
        return self._hash_fields(sorted(self.__dataclass_fields__))

    # fields the radio map / SNR model actually depend on; planning knobs
    # (deadline, speed, motor constants, rate requirement, endpoints) excluded
    _CHANNEL_FIELDS = (
        "workspace", "ap_pos", "irs_pos", "z_robot", "z_ap", "z_irs", "obstacles",
        "tx_power", "noise_power", "ref_gain", "n_antennas", "n_irs_elements",
        "los_exponent", "nlos_exponent",
    )

    def channel_fingerprint(self) -> str:
        """Hash of the channel-relevant fields; stamped into map/model files."""
        return self._hash_fields(self._CHANNEL_FIELDS)


# ---------------------------------------------------------------------------
# Core geometric / energetic operations


def motion_energy(traj, scenario: Scenario) -> float:
    """Total motion energy of a K+1-waypoint trajectory, in joules.

    Per slot the robot pays motor_v2*v^2*dt + motor_v1*v*dt + motor_v0*dt,
    with v the (constant) slot speed implied by the waypoint displacement.
    """
    traj = np.asarray(traj, dtype=float)
    if traj.shape != (scenario.n_slots + 1, 2):
        raise InvalidTrajectoryError(
            f"expected {scenario.n_slots + 1} waypoints, got shape {traj.shape}"
        )
    if not np.all(np.isfinite(traj)):
        raise InvalidTrajectoryError("trajectory contains non-finite coordinates")
    steps = np.linalg.norm(np.diff(traj, axis=0), axis=1)
    dt = scenario.slot_duration
    return float(
        np.sum(scenario.motor_v2 * steps**2 / dt + scenario.motor_v1 * steps)
        + scenario.n_slots * scenario.motor_v0 * dt
    )


def obstacle_margin(q, obstacle: Obstacle) -> float:
    """Quadratic form (q-center)^T shape^-1 (q-center); compare against safety_level."""
    d = np.asarray(q, dtype=float) - obstacle.center
    return float(d @ obstacle.shape_inv @ d)


def distances(q, scenario: Scenario) -> tuple:
    """(robot-AP, robot-IRS) 3D distances including antenna heights."""
    q = np.asarray(q, dtype=float)
    d_ap = math.hypot(float(np.linalg.norm(q - scenario.ap_pos)), scenario.z_robot - scenario.z_ap)
    d_irs = math.hypot(float(np.linalg.norm(q - scenario.irs_pos)), scenario.z_robot - scenario.z_irs)
    return d_ap, d_irs


def distances_batch(points: Array, scenario: Scenario) -> tuple:
    """Vectorized `distances` for an (n, 2) array of positions."""
    points = np.asarray(points, dtype=float)
    dz_ap = scenario.z_robot - scenario.z_ap
    dz_irs = scenario.z_robot - scenario.z_irs
    d_ap = np.sqrt(np.sum((points - scenario.ap_pos) ** 2, axis=-1) + dz_ap**2)
    d_irs = np.sqrt(np.sum((points - scenario.irs_pos) ** 2, axis=-1) + dz_irs**2)
    return d_ap, d_irs


def _segment_blocked(points: Array, z0: float, target: Array, z1: float,
                     obstacle: Obstacle) -> Array:
    """True where the 3D segment from (points, z0) to (target, z1) crosses the cylinder.

    The planar segment p(t) enters the ellipse on a t-interval found from a
    quadratic; the crossing blocks the link only where the segment height
    z0 + t (z1 - z0) is at or below the cylinder height on that interval.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = target[None, :] - points                      # (n, 2)
    u0 = points - obstacle.center[None, :]
    pinv = obstacle.shape_inv
    a = np.einsum("ni,ij,nj->n", d, pinv, d)
    b = 2.0 * np.einsum("ni,ij,nj->n", u0, pinv, d)
    c = np.einsum("ni,ij,nj->n", u0, pinv, u0) - 1.0

    # t-interval where the segment height stays below the cylinder top
    dz = z1 - z0
    if abs(dz) < 1e-15:
        if z0 <= obstacle.height:
            z_lo, z_hi = 0.0, 1.0
        else:
            return np.zeros(len(points), dtype=bool)
    else:
        t_h = (obstacle.height - z0) / dz
        if dz > 0:
            z_lo, z_hi = 0.0, min(1.0, t_h)
        else:
            z_lo, z_hi = max(0.0, t_h), 1.0
        if z_hi <= z_lo:
            return np.zeros(len(points), dtype=bool)

    blocked = np.zeros(len(points), dtype=bool)

    degenerate = a < 1e-18
    # stationary planar point: blocked iff it sits inside the ellipse
    blocked |= degenerate & (c < 0.0)

    ok = ~degenerate
    disc = b * b - 4.0 * a * c
    cross = ok & (disc > 0.0)
    if np.any(cross):
        sq = np.sqrt(np.where(cross, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-b - sq) / (2.0 * a)
            t2 = (-b + sq) / (2.0 * a)
        lo = np.maximum(t1, z_lo)
        hi = np.minimum(t2, z_hi)
        blocked |= cross & (hi - lo > 1e-12)
    return blocked


def los_class(q, scenario: Scenario) -> LinkClass:
    """Geometric visibility of the AP and IRS links from position q."""
    ap, irs = los_class_batch(np.asarray(q, dtype=float)[None, :], scenario)
    return LinkClass(bool(ap[0]), bool(irs[0]))


def los_class_batch(points: Array, scenario: Scenario) -> tuple:
    """Vectorized LOS test: returns (ap_los, irs_los) boolean arrays."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ap_blocked = np.zeros(len(points), dtype=bool)
    irs_blocked = np.zeros(len(points), dtype=bool)
    for obs in scenario.obstacles:
        ap_blocked |= _segment_blocked(points, scenario.z_robot, scenario.ap_pos,
                                       scenario.z_ap, obs)
        irs_blocked |= _segment_blocked(points, scenario.z_robot, scenario.irs_pos,
                                        scenario.z_irs, obs)
    return ~ap_blocked, ~irs_blocked


# ---------------------------------------------------------------------------
# Configuration file interface
#
# Line-oriented key = value text. Lengths in meters, powers in dBm, the
# reference path loss in dB, rates in Gbps, bandwidth in MHz. Obstacles are
# declared as repeated [obstacle] blocks. '#' starts a comment.

_SCALAR_KEYS = {
    "workspace", "ap_pos", "irs_pos", "z_robot", "z_ap", "z_irs", "n_slots",
    "slot_duration", "v_max", "safety_level", "motor_v2", "motor_v1", "motor_v0",
    "tx_power_dbm", "noise_dbm", "bandwidth_mhz", "path_loss_db", "n_antennas",
    "n_irs_elements", "q_start", "q_goal", "min_avg_rate_gbps",
    "los_exponent", "nlos_exponent",
}

_OBSTACLE_KEYS = {"center", "length", "width", "angle_deg", "height", "shape"}

_REQUIRED_KEYS = _SCALAR_KEYS - {"los_exponent", "nlos_exponent"}


def _parse_floats(text: str, n: int, key: str) -> list:
    parts = text.split()
    if len(parts) != n:
        raise ConfigError(f"expected {n} numbers, got {len(parts)}", key=key)
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"not a number: {exc}", key=key) from None


def load_scenario(path) -> Scenario:
    """Parse a scenario configuration file. Unknown keys are errors."""
    raw: dict = {}
    obstacles_raw: list = []
    current: dict | None = None   # obstacle block under construction

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line == "[obstacle]":
                current = {}
                obstacles_raw.append((lineno, current))
                continue
            if line.startswith("["):
                raise ConfigError(f"unknown section {line!r} (line {lineno})", key=line)
            if "=" not in line:
                raise ConfigError(f"expected 'key = value' (line {lineno})", key=line)
            key, value = (part.strip() for part in line.split("=", 1))
            if current is not None:
                if key not in _OBSTACLE_KEYS:
                    raise ConfigError(f"unknown obstacle key (line {lineno})",
                                      key=f"obstacle.{key}")
                current[key] = value
            else:
                if key not in _SCALAR_KEYS:
                    raise ConfigError(f"unknown key (line {lineno})", key=key)
                if key in raw:
                    raise ConfigError(f"duplicate key (line {lineno})", key=key)
                raw[key] = value

    missing = _REQUIRED_KEYS - raw.keys()
    if missing:
        raise ConfigError(f"missing required keys: {sorted(missing)}",
                          key=sorted(missing)[0])

    obstacles = []
    for lineno, block in obstacles_raw:
        if "shape" in block:
            vals = _parse_floats(block["shape"], 3, "obstacle.shape")
            shape = np.array([[vals[0], vals[1]], [vals[1], vals[2]]])
            center = _parse_floats(block.get("center", ""), 2, "obstacle.center")
            height = float(block.get("height", "nan"))
            try:
                obstacles.append(Obstacle(np.array(center), shape, height))
            except InvalidObstacleError as exc:
                raise ConfigError(str(exc), key=f"obstacle (line {lineno})") from None
        else:
            needed = {"center", "length", "width", "height"}
            if not needed <= block.keys():
                raise ConfigError(
                    f"obstacle block needs {sorted(needed)} (line {lineno})",
                    key="obstacle",
                )
            center = _parse_floats(block["center"], 2, "obstacle.center")
            try:
                obstacles.append(
                    Obstacle.from_extents(
                        center,
                        float(block["length"]),
                        float(block["width"]),
                        float(block.get("angle_deg", "0.0")),
                        float(block["height"]),
                    )
                )
            except (ValueError, InvalidObstacleError) as exc:
                raise ConfigError(str(exc), key=f"obstacle (line {lineno})") from None

    def get_float(key):
        try:
            return float(raw[key])
        except ValueError:
            raise ConfigError(f"not a number: {raw[key]!r}", key=key) from None

    def get_int(key):
        value = get_float(key)
        if value != int(value):
            raise ConfigError("expected an integer", key=key)
        return int(value)

    return Scenario(
        workspace=tuple(_parse_floats(raw["workspace"], 4, "workspace")),
        ap_pos=np.array(_parse_floats(raw["ap_pos"], 2, "ap_pos")),
        irs_pos=np.array(_parse_floats(raw["irs_pos"], 2, "irs_pos")),
        z_robot=get_float("z_robot"),
        z_ap=get_float("z_ap"),
        z_irs=get_float("z_irs"),
        obstacles=tuple(obstacles),
        n_slots=get_int("n_slots"),
        slot_duration=get_float("slot_duration"),
        v_max=get_float("v_max"),
        safety_level=get_float("safety_level"),
        motor_v2=get_float("motor_v2"),
        motor_v1=get_float("motor_v1"),
        motor_v0=get_float("motor_v0"),
        tx_power=dbm_to_watts(get_float("tx_power_dbm")),
        noise_power=dbm_to_watts(get_float("noise_dbm")),
        bandwidth_hz=get_float("bandwidth_mhz") * 1e6,
        ref_gain=db_to_linear(-get_float("path_loss_db")),
        n_antennas=get_int("n_antennas"),
        n_irs_elements=get_int("n_irs_elements"),
        q_start=np.array(_parse_floats(raw["q_start"], 2, "q_start")),
        q_goal=np.array(_parse_floats(raw["q_goal"], 2, "q_goal")),
        min_avg_rate=get_float("min_avg_rate_gbps") * 1e9,
        los_exponent=float(raw.get("los_exponent", LOS_EXPONENT)),
        nlos_exponent=float(raw.get("nlos_exponent", NLOS_EXPONENT)),
    )


def scenario_overrides(scenario: Scenario, **updates) -> Scenario:
    """Copy a scenario with some fields replaced (e.g. n_irs_elements, min_avg_rate)."""
    fields = {name: getattr(scenario, name) for name in scenario.__dataclass_fields__}
    fields.update(updates)
    return Scenario(**fields)
