"""Deterministic synthetic vehicle: CAN traffic, GPS/IMU traces, frame clocks.

Everything is a pure function of the scenario (seed included), so identical
scenarios produce byte-identical streams.  Cameras tick at 30 fps nominal
and drop to 15 fps inside low-light segments, with bounded uniform jitter
on each frame timestamp.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .canbus import CanFrame, DecodeTable, pack_signal
from .errors import InvalidScenario
from .trip import MICROS_PER_SECOND

FRAME_JITTER_US = 500
NOMINAL_FPS = 30
LOW_LIGHT_FPS = 15
GPS_RATE_HZ = 1
IMU_RATE_HZ = 10
DEFAULT_CAN_RATE_HZ = 50

# piecewise-constant profile: ordered (start_s, value) knots
Profile = list[tuple[float, float]]


def profile_value(profile: Profile, t_s: float) -> float:
    value = profile[0][1]
    for start, v in profile:
        if t_s >= start:
            value = v
        else:
            break
    return value


def profile_integral(profile: Profile, t_s: float) -> float:
    """Integral of the piecewise-constant profile over [0, t_s]."""
    total = 0.0
    knots = list(profile) + [(float("inf"), 0.0)]
    for (start, v), (nxt, _) in zip(knots, knots[1:]):
        if t_s <= start:
            break
        total += v * (min(t_s, nxt) - start)
    return total


@dataclass
class SimScenario:
    seed: int
    duration_s: float
    speed_profile: Profile
    signal_defs: DecodeTable
    cameras: list[str] = field(default_factory=lambda: ["face", "dash", "front"])
    low_light_segments: list[tuple[float, float]] = field(default_factory=list)
    wake_delay_s: float = 0.0
    sleep_at_s: float | None = None  # defaults to duration_s
    gps_start: tuple[float, float] = (42.3601, -71.0942)
    start_ts_micro: int = 1_469_546_998_634_990
    speed_signal: str = "speed"
    can_rate_hz: float = DEFAULT_CAN_RATE_HZ
    # extra piecewise-constant signal profiles keyed by signal name
    signal_profiles: dict[str, Profile] = field(default_factory=dict)

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise InvalidScenario("duration_s must be positive")
        if not self.speed_profile or self.speed_profile[0][0] != 0.0:
            raise InvalidScenario("speed_profile must start at t=0")
        if any(v < 0 for _, v in self.speed_profile):
            raise InvalidScenario("speeds must be non-negative")
        for lo, hi in self.low_light_segments:
            if not (0 <= lo < hi <= self.duration_s):
                raise InvalidScenario(f"low-light segment [{lo},{hi}) outside trip")
        if not self.cameras:
            raise InvalidScenario("at least one camera required")
        sleep_at = self.sleep_at_s if self.sleep_at_s is not None else self.duration_s
        if not (0 <= self.wake_delay_s < sleep_at <= self.duration_s):
            raise InvalidScenario("bus-active interval must fit inside the trip")
        try:
            self.signal_defs.spec(self.speed_signal)
        except KeyError:
            raise InvalidScenario(f"decode table lacks speed signal {self.speed_signal!r}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "duration_s": self.duration_s,
            "speed_profile": [list(k) for k in self.speed_profile],
            "cameras": list(self.cameras),
            "low_light_segments": [list(k) for k in self.low_light_segments],
            "wake_delay_s": self.wake_delay_s,
            "sleep_at_s": self.sleep_at_s,
            "gps_start": list(self.gps_start),
            "start_ts_micro": self.start_ts_micro,
            "speed_signal": self.speed_signal,
            "can_rate_hz": self.can_rate_hz,
            "signal_profiles": {k: [list(p) for p in v] for k, v in self.signal_profiles.items()},
        }

    @classmethod
    def from_dict(cls, d: dict, signal_defs: DecodeTable) -> "SimScenario":
        return cls(
            seed=int(d["seed"]),
            duration_s=float(d["duration_s"]),
            speed_profile=[tuple(k) for k in d["speed_profile"]],
            signal_defs=signal_defs,
            cameras=list(d.get("cameras", ["face", "dash", "front"])),
            low_light_segments=[tuple(k) for k in d.get("low_light_segments", [])],
            wake_delay_s=float(d.get("wake_delay_s", 0.0)),
            sleep_at_s=d.get("sleep_at_s"),
            gps_start=tuple(d.get("gps_start", (42.3601, -71.0942))),
            start_ts_micro=int(d.get("start_ts_micro", 1_469_546_998_634_990)),
            speed_signal=d.get("speed_signal", "speed"),
            can_rate_hz=float(d.get("can_rate_hz", DEFAULT_CAN_RATE_HZ)),
            signal_profiles={
                k: [tuple(p) for p in v] for k, v in d.get("signal_profiles", {}).items()
            },
        )


@dataclass
class SimStreams:
    can_frames: list[CanFrame]
    gps_rows: list[tuple]  # ts, lat, lon, alt, speed, track, climb
    imu_rows: list[tuple]  # ts, ax, ay, az, roll, pitch, yaw
    camera_frames: dict[str, list[int]]  # camera -> frame timestamps
    bus_active: tuple[int, int]  # (start_ts, end_ts) microseconds


def _in_low_light(scenario: SimScenario, t_s: float) -> bool:
    return any(lo <= t_s < hi for lo, hi in scenario.low_light_segments)


def _camera_clock(scenario: SimScenario, camera: str) -> list[int]:
    rng = random.Random(f"{scenario.seed}:cam:{camera}")
    duration_us = scenario.duration_s * MICROS_PER_SECOND
    timestamps = []
    t = 0.0  # nominal relative microseconds
    while t < duration_us:
        jitter = rng.randint(-FRAME_JITTER_US, FRAME_JITTER_US)
        timestamps.append(scenario.start_ts_micro + int(round(t)) + jitter)
        fps = LOW_LIGHT_FPS if _in_low_light(scenario, t / MICROS_PER_SECOND) else NOMINAL_FPS
        t += MICROS_PER_SECOND / fps
    return timestamps


def simulate(scenario: SimScenario) -> SimStreams:
    """Generate all sensor streams for one trip."""
    scenario.validate()
    start = scenario.start_ts_micro
    sleep_at = scenario.sleep_at_s if scenario.sleep_at_s is not None else scenario.duration_s

    camera_frames = {cam: _camera_clock(scenario, cam) for cam in scenario.cameras}

    # CAN: one frame per arbitration id per tick, all signals on that id packed
    profiles: dict[str, Profile] = {scenario.speed_signal: scenario.speed_profile}
    profiles.update(scenario.signal_profiles)
    by_id: dict[int, list] = {}
    for spec in scenario.signal_defs.specs:
        if spec.name in profiles:
            by_id.setdefault(spec.arbitration_id, []).append(spec)
    can_frames: list[CanFrame] = []
    period_us = MICROS_PER_SECOND / scenario.can_rate_hz
    t = scenario.wake_delay_s * MICROS_PER_SECOND
    end_us = sleep_at * MICROS_PER_SECOND
    while t < end_us:
        t_s = t / MICROS_PER_SECOND
        ts = start + int(round(t))
        for arb_id in sorted(by_id):
            payload = bytearray(8)
            for spec in by_id[arb_id]:
                pack_signal(spec, profile_value(profiles[spec.name], t_s), payload)
            can_frames.append(
                CanFrame(ts=ts, arbitration_id=arb_id, dlc=8, payload=bytes(payload))
            )
        t += period_us

    gps_rows = []
    rng_gps = random.Random(f"{scenario.seed}:gps")
    lat0, lon0 = scenario.gps_start
    n_gps = int(scenario.duration_s * GPS_RATE_HZ)
    for i in range(n_gps):
        t_s = i / GPS_RATE_HZ
        dist_m = profile_integral(scenario.speed_profile, t_s)
        # straight-line dead reckoning due north
        lat = lat0 + dist_m / 111_320.0
        alt = 10.0 + rng_gps.uniform(-0.5, 0.5)
        gps_rows.append(
            (
                start + int(t_s * MICROS_PER_SECOND),
                round(lat, 7),
                round(lon0, 7),
                round(alt, 2),
                round(profile_value(scenario.speed_profile, t_s), 3),
                0.0,
                0.0,
            )
        )

    imu_rows = []
    rng_imu = random.Random(f"{scenario.seed}:imu")
    n_imu = int(scenario.duration_s * IMU_RATE_HZ)
    dt = 1.0 / IMU_RATE_HZ
    for i in range(n_imu):
        t_s = i * dt
        v0 = profile_value(scenario.speed_profile, t_s)
        v1 = profile_value(scenario.speed_profile, t_s + dt)
        ax = (v1 - v0) / dt + rng_imu.uniform(-0.02, 0.02)
        imu_rows.append(
            (
                start + int(t_s * MICROS_PER_SECOND),
                round(ax, 4),
                round(rng_imu.uniform(-0.02, 0.02), 4),
                round(9.81 + rng_imu.uniform(-0.02, 0.02), 4),
                round(rng_imu.uniform(-0.1, 0.1), 4),
                round(rng_imu.uniform(-0.1, 0.1), 4),
                round(rng_imu.uniform(-0.1, 0.1), 4),
            )
        )

    return SimStreams(
        can_frames=can_frames,
        gps_rows=gps_rows,
        imu_rows=imu_rows,
        camera_frames=camera_frames,
        bus_active=(
            start + int(scenario.wake_delay_s * MICROS_PER_SECOND),
            start + int(sleep_at * MICROS_PER_SECOND),
        ),
    )
