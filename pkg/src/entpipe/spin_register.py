"""GHZ-state preparation schedules for an exchange-coupled spin register.

Two native interactions drive everything: an isotropic exchange coupling
J1*(XX+YY+ZZ) on a dot pair and a longitudinal coupling J2*(ZZ).  Single-dot
rotations and Z phase corrections are treated as instantaneous.  A register of
n dots is entangled by preparing Bell pairs in parallel (one ZZ interval),
then absorbing one pair (or the final unpaired dot) at a time into a growing
block; each absorption costs one ZZ interval plus one exchange interval.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import ceil, pi
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import LayoutError, NotGhzClassError, ScheduleError
from .hilbert import (
    LinearMap,
    StateVector,
    SubsystemLayout,
    apply_local,
    embed_operator,
    fidelity,
    qubits,
    schmidt_spectrum,
)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

_ALLOWED_PULSE_ANGLES = (pi / 2, pi)

# The pi pulse used when absorbing a Bell pair rotates about the equatorial
# axis at angle -pi/4, i.e. a branch phase difference of pi/2 between the
# swapped computational states.
MERGE_AXIS_PHASE = -pi / 4

# Net overall phase of one absorption, from the -i*e^{+-i pi/4} pulse factors
# and the exchange eigenphases e^{-i pi/8}, e^{+3i pi/8}.  Canonical plans
# compensate these so the executed state carries no leftover phase.
_PAIR_ABSORB_PHASE = -11 * pi / 8
_SINGLE_ABSORB_PHASE = -pi / 8


def heisenberg_matrix(j: float) -> np.ndarray:
    """Two-dot isotropic exchange generator j*(XX + YY + ZZ)."""
    return j * (
        np.kron(SIGMA_X, SIGMA_X) + np.kron(SIGMA_Y, SIGMA_Y) + np.kron(SIGMA_Z, SIGMA_Z)
    )


def ising_matrix(j: float) -> np.ndarray:
    """Two-dot longitudinal generator j*(ZZ)."""
    return j * np.kron(SIGMA_Z, SIGMA_Z)


def rotation(angle: float, axis_phase: float) -> np.ndarray:
    """Single-dot rotation exp(-i*angle/2*(cos(phi) X + sin(phi) Y))."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array(
        [[c, -1j * s * np.exp(-1j * axis_phase)], [-1j * s * np.exp(1j * axis_phase), c]],
        dtype=np.complex128,
    )


@dataclass(frozen=True)
class CouplingSpec:
    kind: str  # "heisenberg" | "ising"
    strength: float  # angular rate in Hz; interval durations use t = pi/(4 J) etc.
    pair: tuple[int, int]

    def __post_init__(self):
        if self.kind not in ("heisenberg", "ising"):
            raise ScheduleError(f"unknown coupling kind {self.kind!r}")
        a, b = self.pair
        if a == b:
            raise ScheduleError("coupling pair must be two distinct dots")
        if self.strength <= 0:
            raise ScheduleError("coupling strength must be positive")
        object.__setattr__(self, "pair", (int(a), int(b)))

    def matrix(self) -> np.ndarray:
        if self.kind == "heisenberg":
            return heisenberg_matrix(self.strength)
        return ising_matrix(self.strength)


@dataclass(frozen=True)
class PulseSpec:
    """Instantaneous single-dot rotation, or a Z-phase correction layer.

    When ``z_corrections`` is set the step is a diagonal phase correction
    (per-dot angles phi applied as diag(1, e^{i phi})) together with an
    explicit global phase; target/angle/axis_phase are ignored.
    """

    target: int | None = None
    angle: float = 0.0
    axis_phase: float = 0.0
    z_corrections: dict[int, float] | None = None
    global_phase: float = 0.0

    def __post_init__(self):
        if self.z_corrections is None:
            if self.target is None:
                raise ScheduleError("pulse needs a target dot or z_corrections")
            if not any(abs(self.angle - a) < 1e-12 for a in _ALLOWED_PULSE_ANGLES):
                raise ScheduleError(
                    f"pulse angle {self.angle} not in allowed set (pi/2, pi)"
                )
        else:
            object.__setattr__(
                self, "z_corrections", {int(k): float(v) for k, v in self.z_corrections.items()}
            )


@dataclass(frozen=True)
class ScheduleStep:
    """One schedule entry: a timed coupling interval or an instantaneous pulse.

    Steps sharing a layer index run concurrently (their supports are disjoint
    and the generators commute); wall-clock accounting is per layer.
    """

    layer: int
    coupling: CouplingSpec | None = None
    duration: float = 0.0
    pulse: PulseSpec | None = None

    def __post_init__(self):
        if (self.coupling is None) == (self.pulse is None):
            raise ScheduleError("step must hold exactly one of coupling or pulse")
        if self.coupling is not None and self.duration <= 0:
            raise ScheduleError("coupling step needs a positive duration")


@dataclass(frozen=True)
class Schedule:
    steps: tuple[ScheduleStep, ...]
    n_dots: int

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        for st in self.steps:
            for dot in _step_dots(st):
                if not 0 <= dot < self.n_dots:
                    raise ScheduleError(f"step touches dot {dot} outside register of {self.n_dots}")

    def concat(self, other: "Schedule") -> "Schedule":
        if other.n_dots != self.n_dots:
            raise ScheduleError("cannot concatenate schedules over different registers")
        offset = max((s.layer for s in self.steps), default=-1) + 1
        shifted = tuple(
            ScheduleStep(s.layer + offset, s.coupling, s.duration, s.pulse) for s in other.steps
        )
        return Schedule(self.steps + shifted, self.n_dots)

    def to_json(self) -> str:
        items = []
        for st in self.steps:
            if st.coupling is not None:
                items.append(
                    {
                        "type": "interaction",
                        "kind": st.coupling.kind,
                        "strength": st.coupling.strength,
                        "pair": list(st.coupling.pair),
                        "duration": st.duration,
                        "layer": st.layer,
                    }
                )
            elif st.pulse.z_corrections is not None:
                items.append(
                    {
                        "type": "z_correction",
                        "phases": {str(k): v for k, v in sorted(st.pulse.z_corrections.items())},
                        "global_phase": st.pulse.global_phase,
                        "layer": st.layer,
                    }
                )
            else:
                items.append(
                    {
                        "type": "pulse",
                        "target": st.pulse.target,
                        "angle": st.pulse.angle,
                        "axis_phase": st.pulse.axis_phase,
                        "layer": st.layer,
                    }
                )
        return json.dumps({"n_dots": self.n_dots, "steps": items}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        data = json.loads(text)
        steps = []
        for item in data["steps"]:
            if item["type"] == "interaction":
                steps.append(
                    ScheduleStep(
                        layer=item["layer"],
                        coupling=CouplingSpec(item["kind"], item["strength"], tuple(item["pair"])),
                        duration=item["duration"],
                    )
                )
            elif item["type"] == "z_correction":
                steps.append(
                    ScheduleStep(
                        layer=item["layer"],
                        pulse=PulseSpec(
                            z_corrections={int(k): v for k, v in item["phases"].items()},
                            global_phase=item["global_phase"],
                        ),
                    )
                )
            else:
                steps.append(
                    ScheduleStep(
                        layer=item["layer"],
                        pulse=PulseSpec(
                            target=item["target"],
                            angle=item["angle"],
                            axis_phase=item["axis_phase"],
                        ),
                    )
                )
        return cls(tuple(steps), data["n_dots"])


def _step_dots(step: ScheduleStep) -> tuple[int, ...]:
    if step.coupling is not None:
        return step.coupling.pair
    if step.pulse.z_corrections is not None:
        return tuple(step.pulse.z_corrections)
    return (step.pulse.target,)


@dataclass(frozen=True)
class TimingReport:
    """Wall-clock accounting: coupling intervals by kind, pulses free."""

    t_ising_steps: int
    t_heisenberg_steps: int
    ising_interval: float
    heisenberg_interval: float

    @property
    def total_seconds(self) -> float:
        return (
            self.t_ising_steps * self.ising_interval
            + self.t_heisenberg_steps * self.heisenberg_interval
        )


def hamiltonian(coupling: CouplingSpec, layout: SubsystemLayout) -> LinearMap:
    """Full-register generator for one coupling (identity elsewhere)."""
    layout.check_sites(coupling.pair)
    mat = embed_operator(layout, coupling.matrix(), coupling.pair)
    return LinearMap(mat, layout, hermitian=True)


def plus_register(n: int) -> StateVector:
    """|+>^n, the idle register configuration."""
    layout = qubits(n)
    amps = np.full(2**n, 2 ** (-n / 2), dtype=np.complex128)
    return StateVector(amps, layout)


def build_bell(j2: float, n_dots: int = 2, pair: tuple[int, int] = (0, 1)) -> Schedule:
    """Schedule preparing (|00>+|11>)/sqrt(2) on ``pair`` from |+>|+>.

    One ZZ interval of pi/(4 J2) followed by a pi/2 rotation on the second
    dot of the pair.  The interval and pulse leave a known overall phase of
    -pi/4; a trailing phase step folds it away so later amplitude bookkeeping
    stays exact.
    """
    steps = (
        ScheduleStep(0, coupling=CouplingSpec("ising", j2, pair), duration=pi / (4 * j2)),
        ScheduleStep(0, pulse=PulseSpec(target=pair[1], angle=pi / 2, axis_phase=0.0)),
        ScheduleStep(0, pulse=PulseSpec(z_corrections={}, global_phase=pi / 4)),
    )
    return Schedule(steps, n_dots)


def _merge_pair_steps(
    contact_a: int,
    contact_b: int,
    j1: float,
    j2: float,
    layer: int,
    canonicalize: bool,
) -> list[ScheduleStep]:
    """Steps absorbing the Bell pair (contact_b, contact_b+1) into block A.

    ZZ on the contacts, phase corrections on both contacts, a pi pulse on the
    pair dot that is not the exchange contact, then the exchange interval on
    the pair.  With ``canonicalize`` a final pi pulse realigns the absorbed
    pair with the block's computational pattern.
    """
    partner = contact_b + 1
    steps = [
        ScheduleStep(
            layer,
            coupling=CouplingSpec("ising", j2, (contact_a, contact_b)),
            duration=pi / (4 * j2),
        ),
        ScheduleStep(
            layer,
            pulse=PulseSpec(
                z_corrections={contact_a: -pi / 2, contact_b: -pi / 2},
                global_phase=pi / 4,
            ),
        ),
        ScheduleStep(
            layer,
            pulse=PulseSpec(target=partner, angle=pi, axis_phase=MERGE_AXIS_PHASE),
        ),
        ScheduleStep(
            layer + 1,
            coupling=CouplingSpec("heisenberg", j1, (contact_b, partner)),
            duration=pi / (8 * j1),
        ),
    ]
    if canonicalize:
        steps.append(
            ScheduleStep(layer + 1, pulse=PulseSpec(target=partner, angle=pi, axis_phase=pi / 4))
        )
    return steps


def _attach_single_steps(
    contact_a: int, lone: int, j1: float, j2: float, layer: int
) -> list[ScheduleStep]:
    """Steps absorbing a final unpaired dot (still in |+>) into block A.

    The ZZ interval plus corrections entangle the dot; the pi/2 rotation
    aligns it with the block's computational branches.  The trailing exchange
    interval acts on aligned branches (|00> and |11> on the touched pair), so
    it contributes only a global phase; it is kept because the wall-clock
    budget charges every absorption one ZZ plus one exchange interval.
    """
    return [
        ScheduleStep(
            layer, coupling=CouplingSpec("ising", j2, (contact_a, lone)), duration=pi / (4 * j2)
        ),
        ScheduleStep(
            layer,
            pulse=PulseSpec(
                z_corrections={contact_a: -pi / 2, lone: -pi / 2}, global_phase=pi / 4
            ),
        ),
        ScheduleStep(layer, pulse=PulseSpec(target=lone, angle=pi / 2, axis_phase=-pi / 2)),
        ScheduleStep(layer, pulse=PulseSpec(z_corrections={lone: pi})),
        ScheduleStep(
            layer + 1,
            coupling=CouplingSpec("heisenberg", j1, (contact_a, lone)),
            duration=pi / (8 * j1),
        ),
    ]


def plan_ghz(
    n: int, j1: float, j2: float, *, canonical: bool = True
) -> tuple[Schedule, TimingReport]:
    """Plan a GHZ schedule for n dots, pairing left to right.

    Pairs (0,1), (2,3), ... are Bell-prepared concurrently in the first
    interval, then absorbed into the block anchored at dot 0 one at a time.
    With ``canonical`` the executed schedule ends at (|0..0>+|1..1>)/sqrt(2)
    exactly; without it the last absorption is left raw (one flipped dot and
    a branch phase), which is what the local-correction search is for.
    """
    if n < 2:
        raise ScheduleError("register needs at least two dots")
    if j1 <= 0 or j2 <= 0:
        raise ScheduleError("coupling strengths must be positive")
    steps: list[ScheduleStep] = []
    for a in range(0, n - 1, 2):
        bell = build_bell(j2, n_dots=n, pair=(a, a + 1))
        steps.extend(bell.steps)
    merges: list[tuple[int, ...]] = []
    pos = 2
    while pos < n:
        merges.append((pos, pos + 1) if pos + 1 < n else (pos,))
        pos += 2 if pos + 1 < n else 1
    layer = 1
    phase_acc = 0.0
    for i, blk in enumerate(merges):
        last = i == len(merges) - 1
        if len(blk) == 2:
            steps.extend(
                _merge_pair_steps(0, blk[0], j1, j2, layer, canonicalize=canonical or not last)
            )
            phase_acc += _PAIR_ABSORB_PHASE
        else:
            steps.extend(_attach_single_steps(0, blk[0], j1, j2, layer))
            phase_acc += _SINGLE_ABSORB_PHASE
        layer += 2
    if canonical and merges:
        steps.append(
            ScheduleStep(layer - 1, pulse=PulseSpec(z_corrections={}, global_phase=-phase_acc))
        )
    schedule = Schedule(tuple(steps), n)
    report = TimingReport(
        t_ising_steps=(n + 1) // 2,
        t_heisenberg_steps=(n - 1) // 2,
        ising_interval=pi / (4 * j2),
        heisenberg_interval=pi / (8 * j1),
    )
    counted = report_from_schedule(schedule)
    if (counted.t_ising_steps, counted.t_heisenberg_steps) != (
        report.t_ising_steps,
        report.t_heisenberg_steps,
    ):
        raise ScheduleError("planned layer counts disagree with interval budget")
    return schedule, report


def report_from_schedule(schedule: Schedule) -> TimingReport:
    """Recount coupling intervals per concurrency layer from the steps."""
    layers: dict[tuple[int, str], float] = {}
    for st in schedule.steps:
        if st.coupling is None:
            continue
        key = (st.layer, st.coupling.kind)
        if key in layers and abs(layers[key] - st.duration) > 1e-15:
            raise ScheduleError("concurrent steps in one layer must share a duration")
        layers[key] = st.duration
    ising = [(lk, d) for (lk, kind), d in layers.items() if kind == "ising"]
    heis = [(lk, d) for (lk, kind), d in layers.items() if kind == "heisenberg"]
    i_dur = ising[0][1] if ising else 0.0
    h_dur = heis[0][1] if heis else 0.0
    return TimingReport(len(ising), len(heis), i_dur, h_dur)


def execute(schedule: Schedule, initial: StateVector | None = None) -> StateVector:
    """Run a schedule from |+>^n (or a supplied state), exactly."""
    if initial is None:
        state = plus_register(schedule.n_dots)
    else:
        if initial.layout.dims != (2,) * schedule.n_dots:
            raise LayoutError("initial state does not match the register layout")
        state = initial
    for st in schedule.steps:
        state = _apply_step(state, st)
    return state


def _apply_step(state: StateVector, st: ScheduleStep) -> StateVector:
    if st.coupling is not None:
        gen = st.coupling.matrix()
        u = scipy.linalg.expm(-1j * st.duration * gen)
        return apply_local(state, u, st.coupling.pair)
    p = st.pulse
    if p.z_corrections is not None:
        amps = state.amplitudes * np.exp(1j * p.global_phase)
        out = StateVector(amps, state.layout)
        for dot, phi in sorted(p.z_corrections.items()):
            gate = np.diag([1.0, np.exp(1j * phi)]).astype(np.complex128)
            out = apply_local(out, gate, (dot,))
        return out
    return apply_local(state, rotation(p.angle, p.axis_phase), (p.target,))


def merge_blocks(
    state: StateVector,
    contact_a: int,
    contact_b: int,
    j1: float,
    j2: float,
    *,
    canonicalize: bool = False,
) -> StateVector:
    """Absorb the Bell pair at (contact_b, contact_b+1) into the block of contact_a.

    The two contacts must belong to different entangled blocks of the current
    state; this is checked through two-dot correlations.
    """
    n = state.layout.n_subsystems
    state.layout.check_sites((contact_a, contact_b))
    if contact_b + 1 >= n or contact_b + 1 == contact_a:
        raise ScheduleError("pair partner of contact_b must exist and differ from contact_a")
    if _dots_correlated(state, contact_a, contact_b):
        raise ScheduleError(
            f"contacts {contact_a} and {contact_b} are correlated (same block)"
        )
    steps = _merge_pair_steps(contact_a, contact_b, j1, j2, 0, canonicalize)
    for st in steps:
        state = _apply_step(state, st)
    return state


def _reduced_density(state: StateVector, sites: Sequence[int]) -> np.ndarray:
    sites = state.layout.check_sites(sites)
    dims = state.layout.dims
    arr = state.amplitudes.reshape(dims)
    arr = np.moveaxis(arr, sites, range(len(sites)))
    d = int(np.prod([dims[s] for s in sites]))
    m = arr.reshape(d, -1)
    return m @ m.conj().T

def _dots_correlated(state: StateVector, a: int, b: int, tol: float = 1e-8) -> bool:
    rho_ab = _reduced_density(state, (a, b))
    rho_a = _reduced_density(state, (a,))
    rho_b = _reduced_density(state, (b,))
    return float(np.max(np.abs(rho_ab - np.kron(rho_a, rho_b)))) > tol


def bipartitions(n: int):
    """All bipartitions of n subsystems, one representative per complement pair."""
    for mask in range(2, 2**n, 2):  # even masks never contain dot 0
        part = tuple(i for i in range(n) if mask >> i & 1)
        if part:
            yield part


def is_ghz_class(state: StateVector, tol: float = 1e-8) -> bool:
    """True when every bipartition has Schmidt spectrum (1/sqrt2, 1/sqrt2)."""
    target = 1 / np.sqrt(2)
    for part in bipartitions(state.layout.n_subsystems):
        sv = schmidt_spectrum(state, part)
        if abs(sv[0] - target) > tol or abs(sv[1] - target) > tol:
            return False
        if sv.size > 2 and np.max(sv[2:]) > tol:
            return False
    return True


def canonical_ghz(n: int) -> StateVector:
    amps = np.zeros(2**n, dtype=np.complex128)
    amps[0] = amps[-1] = 1 / np.sqrt(2)
    return StateVector(amps, qubits(n))


def canonical_correction(state: StateVector) -> tuple[StateVector, dict]:
    """Find per-dot Z phases plus X flips taking a two-branch state to GHZ.

    Returns the corrected state and a description of the correction.  Raises
    NotGhzClassError when the state has no two-branch computational structure.
    """
    n = state.layout.n_subsystems
    amps = state.amplitudes
    order = np.argsort(np.abs(amps))[::-1]
    i0, i1 = int(order[0]), int(order[1])
    c0, c1 = amps[i0], amps[i1]
    rest = np.linalg.norm(np.delete(amps, [i0, i1]))
    if rest > 1e-6 or abs(abs(c0) - abs(c1)) > 1e-6:
        raise NotGhzClassError("state is not a balanced two-branch computational state")
    if i0 & (2**n - 1 - i1) != i0:
        raise NotGhzClassError("branch patterns are not complementary")
    # Flip every dot that reads 1 in the branch with fewer set bits.
    if bin(i0).count("1") > bin(i1).count("1"):
        i0, i1 = i1, i0
        c0, c1 = c1, c0
    flips = [d for d in range(n) if i0 >> (n - 1 - d) & 1]
    out = state
    for d in flips:
        out = apply_local(out, SIGMA_X, (d,))
    # After the flips the branches sit at |0..0> and |1..1>; one phase gate
    # on dot 0 absorbs the relative branch phase.
    rel = np.angle(out.amplitudes[-1] / out.amplitudes[0])
    gate = np.diag([1.0, np.exp(-1j * rel)]).astype(np.complex128)
    out = apply_local(out, gate, (0,))
    return out, {"x_flips": flips, "z_phase_dot0": float(-rel)}
