"""Conversion of dual-rail photonic entanglement into polarization entanglement.

Each logical photon occupies two frequency rails, represented as a pair of
occupation qubits: |10> means the photon sits on the shifted rail, |01> on
the original one.  Downconversion plus beam-splitter routing with a
heralding detector turns rail superpositions into polarization
superpositions; the elements are modeled as exact logical branch maps with
scalar success probabilities.  Two source photons feed one heralded
polarization photon, so a 2q-photon dual-rail register yields q
polarization qubits and the herald probabilities multiply.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LayoutError, RailSubspaceError
from .hilbert import StateVector, qubits

_LEAK_TOL = 1e-9

# big-endian pair indices within one photon's two rail qubits
_SHIFTED = 2  # |10>
_ORIGINAL = 1  # |01>


@dataclass(frozen=True)
class ConversionSpec:
    """Success probabilities of the downconversion and heralding elements."""

    eta_bbo: float = 1.0
    detector_efficiency: float = 1.0

    def __post_init__(self):
        for label, p in (
            ("eta_bbo", self.eta_bbo),
            ("detector_efficiency", self.detector_efficiency),
        ):
            if not 0 < p <= 1:
                raise ValueError(f"{label} must lie in (0, 1], got {p}")

    @property
    def herald_one(self) -> float:
        """Herald probability for a single converted photon."""
        return self.eta_bbo * self.detector_efficiency


@dataclass(frozen=True)
class DualRailState:
    """Validated photonic state with one excitation in every rail pair."""

    state: StateVector

    def __post_init__(self):
        dims = self.state.layout.dims
        if any(d != 2 for d in dims):
            raise LayoutError("dual-rail states live on qubit rails")
        if len(dims) % 2 != 0 or len(dims) == 0:
            raise LayoutError("rails come in pairs, one pair per photon")
        leak = 1.0 - _paired_weight(self.state)
        if leak > _LEAK_TOL:
            raise RailSubspaceError(
                f"weight {leak:.3e} outside the one-excitation-per-pair subspace"
            )

    @property
    def n_photons(self) -> int:
        return self.state.layout.n_subsystems // 2


def _paired_weight(state: StateVector) -> float:
    """Probability weight with every rail pair in {|01>, |10>}."""
    m = state.layout.n_subsystems // 2
    grouped = state.amplitudes.reshape((4,) * m)
    valid = grouped[np.ix_(*([[_ORIGINAL, _SHIFTED]] * m))]
    return float(np.sum(np.abs(valid) ** 2))


def _as_dual_rail(state: StateVector | DualRailState) -> DualRailState:
    if isinstance(state, DualRailState):
        return state
    return DualRailState(state)


def convert_one(
    state: StateVector | DualRailState, spec: ConversionSpec
) -> tuple[StateVector, float]:
    """Convert a single dual-rail photon into a heralded polarization photon.

    The shifted-rail branch becomes |H>, the original-rail branch |V>, with
    amplitudes carried over exactly; the herald probability is the product
    of the downconversion and detection successes.
    """
    rails = _as_dual_rail(state)
    if rails.n_photons != 1:
        raise LayoutError("convert_one expects exactly one rail pair")
    amps = rails.state.amplitudes
    out = np.array([amps[_SHIFTED], amps[_ORIGINAL]], dtype=np.complex128)
    return StateVector(out, qubits(1, prefix="pol")), spec.herald_one


def convert_register(
    state: StateVector | DualRailState, spec: ConversionSpec
) -> tuple[StateVector, float]:
    """Convert a dual-rail register, two source photons per output photon.

    Branch transport per output qubit: |10,10> -> |H>, |01,01> -> |V>.  The
    register must hold an even number of photons and carry no weight on
    mixed pair branches (the two-branch structure a GHZ-class register
    provides); the herald probability is herald_one per output photon.
    """
    rails = _as_dual_rail(state)
    m = rails.n_photons
    if m % 2 != 0:
        raise LayoutError("register conversion consumes photons in pairs; odd count")
    q = m // 2
    grouped = rails.state.amplitudes.reshape((4,) * m)
    out = np.zeros(2**q, dtype=np.complex128)
    for pattern in range(2**q):
        idx = []
        for i in range(q):
            bit = (pattern >> (q - 1 - i)) & 1
            pair = _ORIGINAL if bit else _SHIFTED
            idx.extend((pair, pair))
        out[pattern] = grouped[tuple(idx)]
    kept = float(np.sum(np.abs(out) ** 2))
    if abs(kept - 1.0) > _LEAK_TOL:
        raise RailSubspaceError(
            f"weight {1 - kept:.3e} on mixed rail branches; need a two-branch register"
        )
    return StateVector(out, qubits(q, prefix="pol")), spec.herald_one**q


def polarization_ghz(n: int) -> StateVector:
    """(|H...H> + |V...V>)/sqrt(2) on n polarization qubits."""
    if n < 1:
        raise ValueError("need at least one photon")
    amps = np.zeros(2**n, dtype=np.complex128)
    amps[0] = amps[-1] = 1 / np.sqrt(2)
    return StateVector(amps, qubits(n, prefix="pol"))
