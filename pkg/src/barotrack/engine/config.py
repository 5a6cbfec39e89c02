"""Session configuration (INI text file).

Example::

    [session]
    listen = udp://0.0.0.0:9000
    calibration = calib.txt
    pose_checkpoint = pose.ckpt
    velocity_checkpoint = velocity.ckpt
    output = motion.jsonl
    rate = 30

    [filter]
    q_accel = 0.5
    r_meas = 0.0025
    subtract_gravity = false

    [body]
    known_dh = 0.66
    thigh_fraction = 0.5
    # skeleton = my_skeleton.txt

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from ..baro_fusion import FilterParams
from ..calibration import TPOSE_WRIST_ABOVE_POCKET
from ..errors import ConfigError


@dataclass
class SessionConfig:
    listen: str = "udp://0.0.0.0:9000"
    calibration: Path | None = None
    pose_checkpoint: Path | None = None
    velocity_checkpoint: Path | None = None
    output: Path | None = None
    rate: float = 30.0
    filter: FilterParams = field(default_factory=FilterParams)
    known_dh: float = TPOSE_WRIST_ABOVE_POCKET
    thigh_fraction: float = 0.5
    skeleton: Path | None = None
    queue_size: int = 64

    def __post_init__(self):
        if not self.rate > 0:
            raise ConfigError("rate must be positive")

    @classmethod
    def load(cls, path: str | Path, require_files: bool = True) -> "SessionConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        base = path.parent

        def p(section, key):
            v = cp.get(section, key, fallback=None)
            return None if v in (None, "") else (base / v).resolve()

        try:
            cfg = cls(
                listen=cp.get("session", "listen", fallback=cls.listen),
                calibration=p("session", "calibration"),
                pose_checkpoint=p("session", "pose_checkpoint"),
                velocity_checkpoint=p("session", "velocity_checkpoint"),
                output=p("session", "output"),
                rate=cp.getfloat("session", "rate", fallback=30.0),
                queue_size=cp.getint("session", "queue_size", fallback=64),
                filter=FilterParams(
                    q_accel=cp.getfloat("filter", "q_accel", fallback=0.5),
                    r_meas=cp.getfloat("filter", "r_meas", fallback=0.0025),
                    subtract_gravity=cp.getboolean("filter", "subtract_gravity", fallback=False),
                    nominal_dt=1.0 / cp.getfloat("session", "rate", fallback=30.0),
                ),
                known_dh=cp.getfloat("body", "known_dh", fallback=TPOSE_WRIST_ABOVE_POCKET),
                thigh_fraction=cp.getfloat("body", "thigh_fraction", fallback=0.5),
                skeleton=p("body", "skeleton"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if require_files:
            cfg.check_files()
        return cfg

    def check_files(self, keys=("calibration", "pose_checkpoint", "velocity_checkpoint")) -> None:
        for key in keys:
            v = getattr(self, key)
            if v is None:
                raise ConfigError(f"config lacks [session] {key}")
            if not Path(v).is_file():
                raise ConfigError(f"{key} file not found: {v}")
        if self.skeleton is not None and not self.skeleton.is_file():
            raise ConfigError(f"skeleton file not found: {self.skeleton}")

    def to_text(self) -> str:
        def s(v):
            return "" if v is None else str(v)

        return "\n".join([
            "[session]",
            f"listen = {self.listen}",
            f"calibration = {s(self.calibration)}",
            f"pose_checkpoint = {s(self.pose_checkpoint)}",
            f"velocity_checkpoint = {s(self.velocity_checkpoint)}",
            f"output = {s(self.output)}",
            f"rate = {float(self.rate)!r}",
            f"queue_size = {self.queue_size}",
            "",
            "[filter]",
            f"q_accel = {float(self.filter.q_accel)!r}",
            f"r_meas = {float(self.filter.r_meas)!r}",
            f"subtract_gravity = {str(self.filter.subtract_gravity).lower()}",
            "",
            "[body]",
            f"known_dh = {float(self.known_dh)!r}",
            f"thigh_fraction = {float(self.thigh_fraction)!r}",
            f"skeleton = {s(self.skeleton)}",
            "",
        ])
