"""entpipe: numerical models for a spin-register entanglement pipeline.

Subpackages cover the GHZ preparation schedule on exchange-coupled quantum
dots, bosonic cat-code storage with parity tracking, photon frequency
conversion through a scattering interface, and dual-rail to polarization
conversion, plus a CLI that chains them end to end.
"""
from . import (
    cat_code,
    cli,
    config,
    errors,
    hilbert,
    photon_swap,
    polarization,
    runner,
    spin_register,
)

__all__ = [
    "cat_code",
    "cli",
    "config",
    "errors",
    "hilbert",
    "photon_swap",
    "polarization",
    "runner",
    "spin_register",
]
__version__ = "0.1.0"
