"""Hand-pose recognition on the CPU: skin segmentation, cascade
initialization, MIL tracking and a small binary-input CNN classifier."""

__version__ = "0.1.0"
