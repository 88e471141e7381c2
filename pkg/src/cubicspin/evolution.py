"""Unitary propagation of collective spin states.

Sequences are written in time order: the first step in a ``PulseSequence``
is applied first, so its unitary is the product of the step unitaries in
reverse order.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .dicke import (
    CollectiveOperator,
    DickeVector,
    NumericalError,
    SpinEnsemble,
    ValidationError,
    _as_ensemble,
    build_collective_ops,
    sx_eigenbasis,
)

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class ZDiagonalHamiltonian:
    """H = c1 Sz + c2 Sz^2 + c3 Sz^3 (units of chi)."""

    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite([self.c1, self.c2, self.c3])):
            raise ValidationError("Hamiltonian coefficients must be finite")

    def energies_two_m(self, two_m: np.ndarray) -> np.ndarray:
        # (2m)^k is exact in int64 for any realistic N; divide once at the end
        two_m = np.asarray(two_m, dtype=np.int64)
        return (self.c1 * two_m / 2.0
                + self.c2 * (two_m * two_m) / 4.0
                + self.c3 * (two_m * two_m * two_m) / 8.0)

    def energies(self, ensemble) -> np.ndarray:
        return self.energies_two_m(_as_ensemble(ensemble).two_m)

    def operator(self, ensemble) -> CollectiveOperator:
        ens = _as_ensemble(ensemble)
        return CollectiveOperator(ens, sp.diags_array(self.energies(ens).astype(complex)).tocsr(),
                                  "diagonal")

    def __call__(self, jx, jy, jz):
        """Matrix of H for any spin representation given its Jz."""
        if sp.issparse(jz):
            z = jz.diagonal().real
        else:
            z = np.real(np.diag(jz))
        return np.diag(self.c1 * z + self.c2 * z**2 + self.c3 * z**3).astype(complex)


CUBIC = ZDiagonalHamiltonian(c3=1.0)
OAT = ZDiagonalHamiltonian(c2=1.0)


def evolve_zdiag(state: DickeVector, h: ZDiagonalHamiltonian, t: float) -> DickeVector:
    """exp(-i t H) for z-diagonal H, applied exactly as phases."""
    phases = np.exp(-1j * t * h.energies(state.ensemble))
    return DickeVector(state.ensemble, state.amplitudes * phases)


def evolve_zdiag_grid(state: DickeVector, h: ZDiagonalHamiltonian, t_grid) -> np.ndarray:
    """Amplitudes at every time in ``t_grid``, shape (len(t_grid), N+1)."""
    e = h.energies(state.ensemble)
    return np.exp(-1j * np.outer(np.asarray(t_grid, dtype=float), e)) * state.amplitudes


@lru_cache(maxsize=16)
def _quarter_turn_z(n_spins: int) -> np.ndarray:
    # R = exp(-i pi/2 Sz) maps Sx to Sy under R Sx R^dagger
    m = SpinEnsemble(n_spins).m
    return np.exp(-0.5j * np.pi * m)


def _axis_eigensystem(n_spins: int, axis: str):
    """Eigenvalues and unitary eigenvectors of S_axis."""
    if axis not in AXES:
        raise ValidationError(f"axis must be one of {AXES}, got {axis!r}")
    if axis == "z":
        return SpinEnsemble(n_spins).m, None
    w, v = sx_eigenbasis(n_spins)
    if axis == "y":
        v = _quarter_turn_z(n_spins)[:, None] * v
    return w, v


def _apply_function_of_axis(amps: np.ndarray, n_spins: int, axis: str, phases_of) -> np.ndarray:
    w, v = _axis_eigensystem(n_spins, axis)
    if v is None:
        return amps * phases_of(w)
    return v @ (phases_of(w) * (v.conj().T @ amps))


def rotate(state: DickeVector, axis: str, angle: float) -> DickeVector:
    """Apply exp(i * angle * S_axis)."""
    amps = _apply_function_of_axis(state.amplitudes, state.ensemble.n_spins, axis,
                                   lambda w: np.exp(1j * angle * w))
    return DickeVector(state.ensemble, amps)


def twist(state: DickeVector, axis: str, angle: float) -> DickeVector:
    """Apply exp(i * angle * S_axis^2)."""
    amps = _apply_function_of_axis(state.amplitudes, state.ensemble.n_spins, axis,
                                   lambda w: np.exp(1j * angle * w * w))
    return DickeVector(state.ensemble, amps)


def axis_unitary(ensemble, axis: str, angle: float, power: int = 1) -> np.ndarray:
    """Dense exp(i * angle * S_axis^power) for power 1 or 2."""
    ens = _as_ensemble(ensemble)
    if power not in (1, 2):
        raise ValidationError("only linear and quadratic generators are supported")
    w, v = _axis_eigensystem(ens.n_spins, axis)
    ph = np.exp(1j * angle * w**power)
    if v is None:
        return np.diag(ph)
    return (v * ph) @ v.conj().T


class Propagator:
    """exp(-i H t) from a single Hermitian eigendecomposition.

    Reuse one instance across a time grid; it is immutable after
    construction.
    """

    def __init__(self, hamiltonian, atol: float = 1e-10):
        ens = None
        if isinstance(hamiltonian, CollectiveOperator):
            ens = hamiltonian.ensemble
            mat = hamiltonian.dense()
        else:
            mat = np.asarray(hamiltonian.toarray() if sp.issparse(hamiltonian) else hamiltonian,
                             dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValidationError("Hamiltonian must be a square matrix")
        if np.max(np.abs(mat - mat.conj().T), initial=0.0) > atol:
            raise ValidationError("Hamiltonian is not Hermitian")
        self.ensemble = ens if ens is not None else SpinEnsemble(mat.shape[0] - 1)
        self.energies, self.vectors = np.linalg.eigh(0.5 * (mat + mat.conj().T))

    def amplitudes_at(self, amps: np.ndarray, t_grid) -> np.ndarray:
        """Evolved amplitudes, shape (len(t_grid), dim)."""
        t = np.atleast_1d(np.asarray(t_grid, dtype=float))
        c0 = self.vectors.conj().T @ amps
        return (np.exp(-1j * np.outer(t, self.energies)) * c0) @ self.vectors.T

    def __call__(self, state: DickeVector, t: float) -> DickeVector:
        return DickeVector(state.ensemble, self.amplitudes_at(state.amplitudes, [t])[0])

    def unitary(self, t: float) -> np.ndarray:
        return (self.vectors * np.exp(-1j * t * self.energies)) @ self.vectors.conj().T


def evolve_hermitian(state: DickeVector, H, t: float) -> DickeVector:
    """exp(-i H t)|psi> via eigendecomposition of a Hermitian H."""
    prop = Propagator(H)
    if prop.energies.shape[0] != state.ensemble.dim:
        raise ValidationError("Hamiltonian and state dimensions differ")
    out = prop(state, t)
    if abs(out.norm - 1.0) > 1e-10 * max(1.0, state.norm):
        if abs(out.norm - state.norm) > 1e-10:
            raise NumericalError(f"norm drift {abs(out.norm - state.norm):.3e}")
    return out


# ---------------------------------------------------------------------------
# Commutator-based synthesis of the cubic gate from rotations and twists


@dataclass(frozen=True)
class PulseStep:
    kind: str  # "rotation" -> exp(i a S_q), "oat" -> exp(i a S_q^2)
    axis: str
    angle: float

    def __post_init__(self):
        if self.kind not in ("rotation", "oat"):
            raise ValidationError(f"unknown pulse kind {self.kind!r}")
        if self.axis not in AXES:
            raise ValidationError(f"unknown axis {self.axis!r}")
        if not np.isfinite(self.angle):
            raise ValidationError("pulse angle must be finite")

    @property
    def power(self) -> int:
        return 1 if self.kind == "rotation" else 2

    def unitary(self, ensemble) -> np.ndarray:
        return axis_unitary(ensemble, self.axis, self.angle, self.power)


@dataclass(frozen=True)
class PulseSequence:
    steps: tuple = field(default_factory=tuple)

    def __add__(self, other: "PulseSequence") -> "PulseSequence":
        return PulseSequence(self.steps + other.steps)

    def __len__(self):
        return len(self.steps)

    def unitary(self, ensemble) -> np.ndarray:
        ens = _as_ensemble(ensemble)
        u = np.eye(ens.dim, dtype=complex)
        for step in self.steps:
            u = step.unitary(ens) @ u
        return u

    def apply(self, state: DickeVector) -> DickeVector:
        amps = state.amplitudes
        n = state.ensemble.n_spins
        for step in self.steps:
            amps = _apply_function_of_axis(
                amps, n, step.axis, lambda w, s=step: np.exp(1j * s.angle * w**s.power))
        return DickeVector(state.ensemble, amps)


def commutator_pulse(first: tuple, second: tuple, delta: float) -> PulseSequence:
    """Group commutator E(A, B): A(delta), B(delta), A(-delta), B(-delta).

    ``first`` and ``second`` are (kind, axis) pairs. To leading order the
    sequence acts as exp(delta^2 [B, A]) for generators
    A, B with pulses exp(delta A), exp(delta B).
    """
    (ka, qa), (kb, qb) = first, second
    return PulseSequence((
        PulseStep(ka, qa, delta),
        PulseStep(kb, qb, delta),
        PulseStep(ka, qa, -delta),
        PulseStep(kb, qb, -delta),
    ))


def operator_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Spectral-norm distance minimized over a global phase.

    Uses the trace-overlap phase, which is optimal for nearby unitaries.
    """
    phase = np.angle(np.trace(v.conj().T @ u))
    return float(np.linalg.norm(u * np.exp(-1j * phase) - v, 2))


@dataclass(frozen=True)
class CubicSynthesis:
    sequence: PulseSequence
    effective: CollectiveOperator
    target: np.ndarray
    error_to_target: float
    counter_rotation: float
    chi_t: float


MAX_SYNTHESIS_SPINS = 12
MAX_SYNTHESIS_DELTA = 0.3


def synthesize_cubic(ensemble, delta: float, counter_rotate: bool = True) -> CubicSynthesis:
    """Approximate exp(-i 8 delta^4 Sz^3) with rotations and one-axis twists.

    Four commutator pulses E(Sx, Sy^2), E(Sx^2, Sy), E(Sy^2, Sx), E(Sy, Sx^2)
    produce the cubic term plus a precession linear in Sz; a z rotation by
    delta^4 (1 - 4S - 4S^2) removes the precession.
    """
    ens = _as_ensemble(ensemble)
    if ens.n_spins > MAX_SYNTHESIS_SPINS:
        raise ValidationError(f"dense gate synthesis is limited to N <= {MAX_SYNTHESIS_SPINS}")
    if abs(delta) > MAX_SYNTHESIS_DELTA:
        warnings.warn(f"|delta| = {abs(delta)} > {MAX_SYNTHESIS_DELTA}: the commutator "
                      "expansion is not valid", RuntimeWarning, stacklevel=2)
    S = ens.S
    rot, oat = "rotation", "oat"
    seq = (commutator_pulse((rot, "x"), (oat, "y"), delta)
           + commutator_pulse((oat, "x"), (rot, "y"), delta)
           + commutator_pulse((oat, "y"), (rot, "x"), delta)
           + commutator_pulse((rot, "y"), (oat, "x"), delta))
    counter = delta**4 * (1 - 4 * S - 4 * S * S) if counter_rotate else 0.0
    if counter_rotate:
        seq = PulseSequence((PulseStep(rot, "z", counter),)) + seq
    u = seq.unitary(ens)
    chi_t = 8 * delta**4
    target = np.diag(np.exp(-1j * CUBIC.energies(ens) * chi_t))
    return CubicSynthesis(
        sequence=seq,
        effective=CollectiveOperator(ens, u, "dense"),
        target=target,
        error_to_target=operator_distance(u, target),
        counter_rotation=counter,
        chi_t=chi_t,
    )


def z_phase_fit(unitary: np.ndarray, ensemble) -> np.ndarray:
    """Least-squares fit of the diagonal of U to exp(-i sum_p c_p Sz^p), p = 0..3.

    Returns (c0, c1, c2, c3). Phases are unwrapped along m, which assumes
    neighbouring diagonal phases differ by less than pi.
    """
    ens = _as_ensemble(ensemble)
    m = ens.m
    phase = -np.unwrap(np.angle(np.diag(unitary)))
    basis = np.vander(m, 4, increasing=True)
    coef, *_ = np.linalg.lstsq(basis, phase, rcond=None)
    return coef


def convergence_order(deltas, errors) -> np.ndarray:
    """Successive log-ratio estimates log(e_i/e_{i+1}) / log(d_i/d_{i+1})."""
    d = np.asarray(deltas, dtype=float)
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(d[:-1] / d[1:])
