"""Quantized consensus workbench for networks of 2m-th order oscillator agents."""

__version__ = "0.1.0"
