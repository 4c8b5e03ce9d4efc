"""Bit-accurate LUT multiplier simulation, cost modeling and quantized inference."""
from lutna._accel import backend
from lutna.fixedpoint import QuantParams, SignMagWord
from lutna.lutcore import MultiplierConfig, Scheme, parse_config

__version__ = "0.1.0"
__all__ = ["MultiplierConfig", "QuantParams", "Scheme", "SignMagWord", "backend", "parse_config"]
