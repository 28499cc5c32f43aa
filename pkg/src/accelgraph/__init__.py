"""Daemon-agent middleware plugging simulated accelerators into a partitioned
iterative graph engine, with pipeline shuffle, synchronization caching and
skipping, and workload balancing."""

__version__ = "0.1.0"
