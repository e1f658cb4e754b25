"""Probabilistic KAN and MLP forecasters for satellite PRB demand, with
likelihood-based training, calibration metrics and dynamic-threshold
resource allocation."""

__version__ = "0.1.0"
