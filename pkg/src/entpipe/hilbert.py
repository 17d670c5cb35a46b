"""Finite-dimensional composite Hilbert spaces: states, maps, exact evolution.

Subsystems are ordered big-endian: the first subsystem in a layout is the
slowest-varying index of the flat amplitude vector, matching the ordering of
``numpy.kron``.  Global phases are physical here -- no operation silently
renormalizes or strips them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    LayoutError,
    NonHermitianError,
    NormalizationError,
    ZeroProbabilityError,
)

# Dense eigendecomposition is exact and cheap up to this dimension; above it
# we fall back to Krylov propagation (or a diagonal fast path).
_DENSE_EVOLVE_LIMIT = 256

_NORM_TOL = 1e-9
_HERMITIAN_TOL = 1e-12
_PROJECTOR_TOL = 1e-12


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered list of subsystem dimensions with optional labels."""

    dims: tuple[int, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims:
            raise LayoutError("layout needs at least one subsystem")
        if any(d < 2 for d in dims):
            raise LayoutError(f"every subsystem dimension must be >= 2, got {dims}")
        labels = tuple(self.labels) if self.labels else tuple(f"s{i}" for i in range(len(dims)))
        if len(labels) != len(dims):
            raise LayoutError("label count must match dimension count")
        object.__setattr__(self, "labels", labels)

    @property
    def total_dim(self) -> int:
        return prod(self.dims)

    @property
    def n_subsystems(self) -> int:
        return len(self.dims)

    def concat(self, other: "SubsystemLayout") -> "SubsystemLayout":
        labels = self.labels + tuple(
            lb if lb not in self.labels else f"{lb}'" for lb in other.labels
        )
        return SubsystemLayout(self.dims + other.dims, labels)

    def check_sites(self, sites: Sequence[int]) -> tuple[int, ...]:
        sites = tuple(int(s) for s in sites)
        if len(set(sites)) != len(sites):
            raise LayoutError(f"repeated subsystem index in {sites}")
        for s in sites:
            if not 0 <= s < self.n_subsystems:
                raise LayoutError(f"subsystem index {s} outside layout of size {self.n_subsystems}")
        return sites


def qubits(n: int, prefix: str = "q") -> SubsystemLayout:
    return SubsystemLayout((2,) * n, tuple(f"{prefix}{i}" for i in range(n)))


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state over a subsystem layout (immutable)."""

    amplitudes: np.ndarray
    layout: SubsystemLayout

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1).copy()
        if amps.shape[0] != self.layout.total_dim:
            raise LayoutError(
                f"amplitude length {amps.shape[0]} != layout dimension {self.layout.total_dim}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > _NORM_TOL:
            raise NormalizationError(f"state norm {norm!r} deviates from 1 beyond {_NORM_TOL}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, raw, layout: SubsystemLayout) -> "StateVector":
        """Build a state from unnormalized amplitudes (explicit normalization)."""
        raw = np.asarray(raw, dtype=np.complex128).reshape(-1)
        norm = np.linalg.norm(raw)
        if norm == 0.0:
            raise NormalizationError("cannot normalize an all-zero amplitude vector")
        return cls(raw / norm, layout)

    @classmethod
    def basis(cls, layout: SubsystemLayout, index: int | Sequence[int]) -> "StateVector":
        """Computational basis state, given a flat index or per-subsystem digits."""
        if not isinstance(index, (int, np.integer)):
            flat = 0
            for d, i in zip(layout.dims, index, strict=True):
                if not 0 <= i < d:
                    raise LayoutError(f"basis digit {i} outside subsystem dimension {d}")
                flat = flat * d + int(i)
            index = flat
        amps = np.zeros(layout.total_dim, dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps, layout)

    def reshaped(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)

    def overlap(self, other: "StateVector") -> complex:
        if self.layout.dims != other.layout.dims:
            raise LayoutError("overlap requires identical layouts")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class LinearMap:
    """Matrix acting on a layout, dense or sparse, with a hermiticity flag."""

    matrix: object
    layout: SubsystemLayout
    hermitian: bool = False

    def __post_init__(self):
        mat = self.matrix
        if not scipy.sparse.issparse(mat):
            mat = np.asarray(mat, dtype=np.complex128)
            if mat.ndim != 2:
                raise LayoutError("matrix must be two-dimensional")
            mat = mat.copy()
            mat.setflags(write=False)
        d = self.layout.total_dim
        if mat.shape != (d, d):
            raise LayoutError(f"matrix shape {mat.shape} != layout dimension ({d}, {d})")
        if self.hermitian:
            dev = _max_abs(mat - mat.conj().T)
            if dev > _HERMITIAN_TOL:
                raise NonHermitianError(f"hermitian flag set but max|M - M^dag| = {dev:.3e}")
        object.__setattr__(self, "matrix", mat)

    @property
    def is_sparse(self) -> bool:
        return scipy.sparse.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def dagger(self) -> "LinearMap":
        return LinearMap(self.matrix.conj().T, self.layout, self.hermitian)

    def is_unitary(self, tol: float = 1e-10) -> bool:
        m = self.dense()
        return _max_abs(m.conj().T @ m - np.eye(m.shape[0])) <= tol

    def apply(self, state: StateVector) -> StateVector:
        if state.layout.dims != self.layout.dims:
            raise LayoutError("map and state layouts differ")
        return StateVector(self.matrix @ state.amplitudes, self.layout)


def _max_abs(mat) -> float:
    if scipy.sparse.issparse(mat):
        return 0.0 if mat.nnz == 0 else float(np.max(np.abs(mat.data)))
    return float(np.max(np.abs(mat))) if mat.size else 0.0


def tensor_states(*states: StateVector) -> StateVector:
    """Kronecker product of states; layouts concatenate left to right."""
    if not states:
        raise LayoutError("tensor_states needs at least one state")
    amps = states[0].amplitudes
    layout = states[0].layout
    for s in states[1:]:
        amps = np.kron(amps, s.amplitudes)
        layout = layout.concat(s.layout)
    return StateVector(amps, layout)


def tensor_maps(*maps: LinearMap) -> LinearMap:
    """Kronecker product of maps; preserves the hermitian flag conjunction."""
    if not maps:
        raise LayoutError("tensor_maps needs at least one map")
    mat = maps[0].dense()
    layout = maps[0].layout
    herm = maps[0].hermitian
    for m in maps[1:]:
        mat = np.kron(mat, m.dense())
        layout = layout.concat(m.layout)
        herm = herm and m.hermitian
    return LinearMap(mat, layout, herm)


def apply_local(state: StateVector, op: np.ndarray, sites: Sequence[int]) -> StateVector:
    """Apply an operator that acts only on ``sites`` (in the given order)."""
    sites = state.layout.check_sites(sites)
    dims = state.layout.dims
    op = np.asarray(op, dtype=np.complex128)
    d_site = prod(dims[s] for s in sites)
    if op.shape != (d_site, d_site):
        raise LayoutError(f"operator shape {op.shape} does not match site dims {d_site}")
    arr = state.amplitudes.reshape(dims)
    arr = np.moveaxis(arr, sites, range(len(sites)))
    moved_shape = arr.shape
    arr = op @ arr.reshape(d_site, -1)
    arr = np.moveaxis(arr.reshape(moved_shape), range(len(sites)), sites)
    return StateVector(arr.reshape(-1), state.layout)


def embed_operator(layout: SubsystemLayout, op: np.ndarray, sites: Sequence[int]) -> np.ndarray:
    """Dense matrix for an operator on ``sites`` extended by identity elsewhere."""
    sites = layout.check_sites(sites)
    dims = layout.dims
    n = len(dims)
    op = np.asarray(op, dtype=np.complex128)
    # kron the operator with identities in permuted order, then permute the
    # tensor axes back so the factors sit at the requested sites.
    order = list(sites) + [i for i in range(n) if i not in sites]
    mat = op
    for i in range(n):
        if i not in sites:
            mat = np.kron(mat, np.eye(dims[i], dtype=np.complex128))
    perm_dims = [dims[i] for i in order]
    mat = mat.reshape(perm_dims + perm_dims)
    inv = np.argsort(order)
    mat = mat.transpose(tuple(inv) + tuple(n + j for j in inv))
    d = layout.total_dim
    return np.ascontiguousarray(mat.reshape(d, d))


def evolve(state: StateVector, generator: LinearMap, t: float) -> StateVector:
    """Exact evolution exp(-i H t)|psi> for a hermitian generator.

    Dense eigendecomposition up to dimension 256, Krylov propagation above
    (with a fast path for diagonal generators).
    """
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    if state.layout.dims != generator.layout.dims:
        raise LayoutError("generator layout does not match state")
    mat = generator.matrix
    dev = _max_abs(mat - mat.conj().T)
    if dev > _HERMITIAN_TOL:
        raise NonHermitianError(f"evolution generator not hermitian: max dev {dev:.3e}")
    dim = state.layout.total_dim
    if not generator.is_sparse:
        dense = generator.dense()
        off = dense - np.diag(np.diag(dense))
        if _max_abs(off) == 0.0:
            phases = np.exp(-1j * t * np.real(np.diag(dense)))
            return StateVector(phases * state.amplitudes, state.layout)
        if dim <= _DENSE_EVOLVE_LIMIT:
            evals, evecs = scipy.linalg.eigh(dense)
            coeff = evecs.conj().T @ state.amplitudes
            out = evecs @ (np.exp(-1j * evals * t) * coeff)
            return StateVector(out, state.layout)
        mat = scipy.sparse.csr_matrix(dense)
    else:
        diag_only = (mat - scipy.sparse.diags(mat.diagonal())).nnz == 0
        if diag_only:
            phases = np.exp(-1j * t * np.real(mat.diagonal()))
            return StateVector(phases * state.amplitudes, state.layout)
    out = scipy.sparse.linalg.expm_multiply((-1j * t) * mat, state.amplitudes)
    return StateVector(out, state.layout)


def fidelity(a: StateVector, b: StateVector) -> float:
    """Squared overlap |<a|b>|^2 (insensitive to global phase)."""
    return float(abs(a.overlap(b)) ** 2)


def states_equal(a: StateVector, b: StateVector, tol: float = 1e-10) -> bool:
    """Equality up to a global phase, by fidelity."""
    return fidelity(a, b) >= 1.0 - tol


def schmidt_spectrum(state: StateVector, part: Iterable[int]) -> np.ndarray:
    """Schmidt coefficients (descending) across the bipartition part|rest."""
    part = tuple(sorted(set(int(p) for p in part)))
    n = state.layout.n_subsystems
    if not part or len(part) >= n:
        raise LayoutError("bipartition must be a nonempty proper subset of subsystems")
    state.layout.check_sites(part)
    rest = tuple(i for i in range(n) if i not in part)
    dims = state.layout.dims
    arr = state.amplitudes.reshape(dims).transpose(part + rest)
    d_a = prod(dims[i] for i in part)
    svals = np.linalg.svd(arr.reshape(d_a, -1), compute_uv=False)
    return np.sort(svals)[::-1]


def partial_project(
    state: StateVector, site: int, projector: np.ndarray
) -> tuple[StateVector, float]:
    """Project one subsystem and renormalize; returns (collapsed, probability).

    Raises ZeroProbabilityError instead of dividing by ~0 when the branch has
    no support.
    """
    (site,) = state.layout.check_sites([site])
    d = state.layout.dims[site]
    proj = np.asarray(projector, dtype=np.complex128)
    if proj.shape != (d, d):
        raise LayoutError(f"projector shape {proj.shape} != subsystem dimension {d}")
    if _max_abs(proj @ proj - proj) > 1e-10 or _max_abs(proj - proj.conj().T) > 1e-10:
        raise ValueError("projector must be hermitian and idempotent")
    arr = state.amplitudes.reshape(state.layout.dims)
    arr = np.moveaxis(arr, site, 0)
    projected = proj @ arr.reshape(d, -1)
    prob = float(np.linalg.norm(projected) ** 2)
    if prob <= 1e-14:
        raise ZeroProbabilityError(f"projection branch has probability {prob:.3e}")
    projected = np.moveaxis(projected.reshape(arr.shape), 0, site)
    collapsed = StateVector(projected.reshape(-1) / np.sqrt(prob), state.layout)
    return collapsed, prob
