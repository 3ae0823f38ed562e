"""Time-domain enclosure toolkit for inclusions in homogeneous and two-layer backgrounds."""

__version__ = "0.1.0"
