"""Energy-efficient beamforming and IRS phase design for multiuser URLLC
downlinks, with a finite-blocklength rate model and a built-in conic solver."""

__version__ = "0.1.0"
