"""Face detection with boosted Haar cascades and recognition from histogram features."""

__version__ = "0.1.0"
