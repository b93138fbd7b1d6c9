"""Complex-valued CNNs for range-Doppler denoising of FMCW radar frames."""

__version__ = "0.1.0"
