"""Simulation and analysis toolkit for hole-grating hBN cavities and spin-defect magnetometry."""

__version__ = "0.1.0"
