"""Per-device sensor samples and the device-world to engine-world convention."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WRIST = 0
POCKET = 1
DEVICE_NAMES = {WRIST: "wrist", POCKET: "pocket"}

# Devices report orientation against an east-north-up world; the engine world is
# y-up. This is a -90 degree rotation about x: east -> x, up -> y, north -> -z.
ENU_TO_ENGINE = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])


@dataclass
class SensorFrame:
    """One timestamped sample of one device.

    ``acc`` is in the device frame (m/s^2), ``orient`` maps device frame to the
    (un-yawed) engine world, ``pressure`` is in hPa.
    """

    t: float
    acc: np.ndarray
    orient: np.ndarray
    pressure: float
    device: int = WRIST
    degraded: bool = False

    def world_acc(self, world_yaw: np.ndarray | None = None) -> np.ndarray:
        r = self.orient if world_yaw is None else world_yaw @ self.orient
        return r @ self.acc
