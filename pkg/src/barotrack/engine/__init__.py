"""Real-time engine: wire protocol, ingestion, recordings, config and session drivers."""

from .config import SessionConfig
from .ingest import AlignedTick, BoundedQueue, FrameAligner, Ingestor, ReorderBuffer
from .pipeline import Engine, motion_to_json, replay, run_live, run_ticks
from .protocol import SensorPacket, decode_packet, encode_packet, make_packet
from .record import RecordFile, RecordWriter
from .session import DeviceSetup, LinkModel, Session, calibration_windows, make_session

__all__ = [
    "AlignedTick", "BoundedQueue", "DeviceSetup", "Engine", "FrameAligner", "Ingestor", "LinkModel",
    "RecordFile", "RecordWriter", "ReorderBuffer", "SensorPacket", "Session", "SessionConfig",
    "calibration_windows", "decode_packet", "encode_packet", "make_packet", "make_session",
    "motion_to_json", "replay", "run_live", "run_ticks",
]
