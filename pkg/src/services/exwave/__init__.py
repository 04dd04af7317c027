"""Express wavelet diffractive network simulator."""
