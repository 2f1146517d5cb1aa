"""Convex decomposition of lidar free space and a scan/move exploration simulator."""

__version__ = "0.1.0"
