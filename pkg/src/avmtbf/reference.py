"""Published highway reference inputs, named by what they hold.

German highway, lane following, three speed ranges. Situation terms are per
range: lead decelerating, lead accelerating inside the TTC limit and lead at
constant speed inside the TTC limit.
"""
from __future__ import annotations

from .model import FailureModelTree, constant_rate_tree
from .units import SpeedRangePartition

HIGHWAY_RANGES_KMH = (80.0, 100.0, 130.0, 180.0)
HIGHWAY_SPEED_PROBABILITY = (0.234, 0.640, 0.126)
HIGHWAY_DECELERATING = (0.028, 0.021, 0.023)
HIGHWAY_ACCELERATING_CLOSE = (0.001, 0.003, 0.004)
HIGHWAY_CONSTANT_CLOSE = (0.279, 0.152, 0.088)
# row totals as published (they equal the three terms above summed)
HIGHWAY_SITUATION_PROBABILITY = (0.308, 0.176, 0.115)

# 17 frames with severe misses in 25200 frames recorded at 5 Hz
LIDAR_MISS_FRAMES = 17
LIDAR_TOTAL_FRAMES = 25200
LIDAR_FRAME_RATE = 5.0
HIGHWAY_MISS_RATE_PER_HOUR = 12.14

# severe (S2/S3) highway accidents in one year, vehicle km driven, assumed mean speed
HIGHWAY_SEVERE_ACCIDENTS = 19980
HIGHWAY_VEHICLE_KM = 252.8e9
HIGHWAY_AVERAGE_SPEED_KMH = 100.0


def highway_partition() -> SpeedRangePartition:
    return SpeedRangePartition.from_kmh(HIGHWAY_RANGES_KMH)


def highway_tree(rate_per_hour: float = HIGHWAY_MISS_RATE_PER_HOUR) -> FailureModelTree:
    """Single highway profile with a speed-independent Type II rate."""
    return constant_rate_tree(highway_partition(), HIGHWAY_SPEED_PROBABILITY, HIGHWAY_SITUATION_PROBABILITY, rate_per_hour)
