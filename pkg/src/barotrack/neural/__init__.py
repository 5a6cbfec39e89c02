from .losses import pose_loss, velocity_loss
from .nets import PoseNet, VelocityNet, pose_forward, velocity_forward
from .train import TrainConfig, pose_windows, train, velocity_windows

__all__ = [
    "PoseNet", "VelocityNet", "TrainConfig", "pose_forward", "velocity_forward",
    "pose_loss", "velocity_loss", "pose_windows", "velocity_windows", "train",
]
