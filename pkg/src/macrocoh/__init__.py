"""Maxwell-Bloch propagation of two-photon CPR pulses and the triggered
two-photon emission background."""

__version__ = "0.1.0"
