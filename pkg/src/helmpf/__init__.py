"""Holomorphic embedding power flow with PV buses, Padé continuation and a Newton baseline."""

__version__ = "0.1.0"
