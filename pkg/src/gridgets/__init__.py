"""Co-optimization of network topology, dynamic line ratings and variable-impedance devices in a DC grid model."""

__version__ = "0.1.0"
