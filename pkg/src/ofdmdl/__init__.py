"""Pilot-aided OFDM channel estimation and detection with classical and neural receivers."""

__version__ = "0.1.0"
