"""Heat-trace corner anomaly: spectra, traces and blowup finite parts for planar domains."""

__version__ = "0.1.0"
