"""Neural precomputed radiance transfer with conformal geometric algebra encodings."""

__version__ = "0.1.0"
