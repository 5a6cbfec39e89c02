"""Full-body motion tracking from a wrist watch and a pocket phone (IMU + barometer)."""

__version__ = "0.1.0"
