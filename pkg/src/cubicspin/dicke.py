"""Symmetric (Dicke) subspace of N two-level atoms.

Basis index k = 0..N corresponds to |S, m> with m = S - k, i.e. the
fully excited state sits at index 0. Half-integer projections are carried
internally as the integer 2m so that phase exponents stay exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

# Above this many spins the binomial weights are built in log space.
EXACT_BINOMIAL_MAX = 300


class ValidationError(ValueError):
    """Invalid physical input (bad spin number, dimension mismatch, ...)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to meet its accuracy contract."""


@dataclass(frozen=True)
class SpinEnsemble:
    """N identical spin-1/2 particles, collective spin S = N/2."""

    n_spins: int

    def __post_init__(self):
        n = self.n_spins
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
            raise ValidationError(f"n_spins must be an integer, got {n!r}")
        if n < 1:
            raise ValidationError(f"n_spins must be >= 1, got {n}")
        object.__setattr__(self, "n_spins", int(n))

    @property
    def total_spin(self) -> Fraction:
        return Fraction(self.n_spins, 2)

    @property
    def S(self) -> float:
        return self.n_spins / 2

    @property
    def parity(self) -> str:
        return "even" if self.n_spins % 2 == 0 else "odd"

    @property
    def dim(self) -> int:
        return self.n_spins + 1

    @property
    def two_m(self) -> np.ndarray:
        """Integer array 2m over the basis, descending from N to -N."""
        return self.n_spins - 2 * np.arange(self.dim, dtype=np.int64)

    @property
    def m(self) -> np.ndarray:
        return self.two_m / 2.0


def _as_ensemble(ens) -> SpinEnsemble:
    if isinstance(ens, SpinEnsemble):
        return ens
    return SpinEnsemble(ens)


@dataclass(frozen=True, eq=False)
class DickeVector:
    """Pure collective state with amplitudes over m = S..-S."""

    ensemble: SpinEnsemble
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.ensemble.dim,):
            raise ValidationError(
                f"expected {self.ensemble.dim} amplitudes, got shape {amps.shape}"
            )
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "DickeVector":
        return DickeVector(self.ensemble, self.amplitudes / self.norm)

    def overlap(self, other: "DickeVector") -> complex:
        """<self|other>."""
        if other.ensemble != self.ensemble:
            raise ValidationError("states belong to different ensembles")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "DickeVector") -> float:
        return abs(self.overlap(other)) ** 2

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True, eq=False)
class CollectiveOperator:
    """Operator on the Dicke subspace.

    ``matrix`` is a scipy sparse array for the structured operators
    (diagonal, single off-diagonal band) and a dense ndarray otherwise.
    """

    ensemble: SpinEnsemble
    matrix: object
    structure: str = "dense"

    def __post_init__(self):
        if self.matrix.shape != (self.ensemble.dim, self.ensemble.dim):
            raise ValidationError(
                f"operator shape {self.matrix.shape} does not match dimension "
                f"{self.ensemble.dim}"
            )
        if self.structure not in ("diagonal", "banded", "dense"):
            raise ValidationError(f"unknown structure tag {self.structure!r}")

    def dense(self) -> np.ndarray:
        if sp.issparse(self.matrix):
            return self.matrix.toarray()
        return np.asarray(self.matrix)

    def apply(self, amplitudes: np.ndarray) -> np.ndarray:
        return self.matrix @ amplitudes

    def __matmul__(self, other):
        if isinstance(other, DickeVector):
            return DickeVector(self.ensemble, self.apply(other.amplitudes))
        if isinstance(other, CollectiveOperator):
            return CollectiveOperator(self.ensemble, self.matrix @ other.matrix, "dense")
        return self.matrix @ other

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.conj().T
        if sp.issparse(diff):
            return diff.count_nonzero() == 0 or abs(diff).max() <= atol
        return bool(np.max(np.abs(diff), initial=0.0) <= atol)


@dataclass(frozen=True)
class CssParams:
    """Direction (theta, phi) of a coherent spin state."""

    theta: float = np.pi / 2
    phi: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.theta) and np.isfinite(self.phi)):
            raise ValidationError("CSS angles must be finite")


@dataclass(frozen=True)
class CollectiveOps:
    Sx: CollectiveOperator
    Sy: CollectiveOperator
    Sz: CollectiveOperator
    Splus: CollectiveOperator
    Sminus: CollectiveOperator
    ensemble: SpinEnsemble = field(repr=False, default=None)

    def __iter__(self):
        return iter((self.Sx, self.Sy, self.Sz))

    def along(self, n) -> CollectiveOperator:
        """S_n = n . S for a 3-vector n (not normalized here)."""
        nx, ny, nz = n
        mat = nx * self.Sx.matrix + ny * self.Sy.matrix + nz * self.Sz.matrix
        return CollectiveOperator(self.Sx.ensemble, sp.csr_array(mat), "banded")


def ladder_coefficients(n_spins: int) -> np.ndarray:
    """<S, m+1|S+|S, m> for the N lowest basis indices (k = 1..N).

    Entry k-1 is the S+ element between index k (m = S-k) and index k-1.
    S(S+1) - m(m+1) = (S - m)(S + m + 1) = k (N - k + 1) is formed exactly
    in integers before the square root.
    """
    k = np.arange(1, n_spins + 1, dtype=np.int64)
    return np.sqrt((k * (n_spins - k + 1)).astype(float))


@lru_cache(maxsize=32)
def _ops_cached(n_spins: int) -> CollectiveOps:
    ens = SpinEnsemble(n_spins)
    up = ladder_coefficients(n_spins)
    splus = sp.diags_array(up, offsets=1, shape=(ens.dim, ens.dim), dtype=complex).tocsr()
    sminus = splus.T.tocsr()
    sz = sp.diags_array(ens.m.astype(complex), offsets=0).tocsr()
    sx = ((splus + sminus) * 0.5).tocsr()
    sy = ((splus - sminus) * (-0.5j)).tocsr()
    return CollectiveOps(
        Sx=CollectiveOperator(ens, sx, "banded"),
        Sy=CollectiveOperator(ens, sy, "banded"),
        Sz=CollectiveOperator(ens, sz, "diagonal"),
        Splus=CollectiveOperator(ens, splus, "banded"),
        Sminus=CollectiveOperator(ens, sminus, "banded"),
        ensemble=ens,
    )


def build_collective_ops(ensemble) -> CollectiveOps:
    """Sx, Sy, Sz, S+ and S- in the Dicke basis of ``ensemble``."""
    return _ops_cached(_as_ensemble(ensemble).n_spins)


def spin_matrices(two_j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense (Jx, Jy, Jz) for spin j = two_j/2, basis m = j..-j."""
    if two_j == 0:
        z = np.zeros((1, 1), dtype=complex)
        return z, z.copy(), z.copy()
    ops = build_collective_ops(two_j)
    return ops.Sx.dense(), ops.Sy.dense(), ops.Sz.dense()


def log_binomial_weights(n_spins: int) -> np.ndarray:
    """log sqrt(C(N, k)) for k = 0..N."""
    k = np.arange(n_spins + 1)
    if n_spins <= EXACT_BINOMIAL_MAX:
        return 0.5 * np.log(np.array([float(math.comb(n_spins, int(i))) for i in k]))
    return 0.5 * (gammaln(n_spins + 1) - gammaln(k + 1) - gammaln(n_spins - k + 1))


def css_state(ensemble, params: CssParams | None = None, *, theta=None, phi=None) -> DickeVector:
    """Coherent spin state: every atom in cos(theta/2)|up> + e^{i phi} sin(theta/2)|down>.

    The amplitude of index k (k atoms down) is
    sqrt(C(N,k)) cos(theta/2)^(N-k) sin(theta/2)^k e^{i k phi}.
    """
    ens = _as_ensemble(ensemble)
    if params is None:
        params = CssParams(np.pi / 2 if theta is None else theta, 0.0 if phi is None else phi)
    n = ens.n_spins
    k = np.arange(n + 1)
    n_up = n - k
    c, s = math.cos(params.theta / 2), math.sin(params.theta / 2)
    # 0 * log(0) must contribute nothing
    with np.errstate(divide="ignore", invalid="ignore"):
        log_c, log_s = np.log(abs(c)), np.log(abs(s))
        log_mag = (log_binomial_weights(n)
                   + np.where(n_up == 0, 0.0, n_up * log_c)
                   + np.where(k == 0, 0.0, k * log_s))
    sign = np.where((c < 0) & (n_up % 2 == 1), -1.0, 1.0) * np.where((s < 0) & (k % 2 == 1), -1.0, 1.0)
    amps = sign * np.exp(log_mag) * np.exp(1j * k * params.phi)
    return DickeVector(ens, amps)


def dicke_state(ensemble, m: float) -> DickeVector:
    ens = _as_ensemble(ensemble)
    k = round(ens.S - m)
    if not (0 <= k <= ens.n_spins) or abs(ens.S - k - m) > 1e-12:
        raise ValidationError(f"m={m} is not a valid projection for S={ens.S}")
    amps = np.zeros(ens.dim, dtype=complex)
    amps[k] = 1.0
    return DickeVector(ens, amps)


def ghz_state(ensemble, varphi: float = 0.0, sign: int = +1) -> DickeVector:
    """(|pi/2, varphi> + sign |pi/2, varphi + pi>)/sqrt(2), renormalized."""
    ens = _as_ensemble(ensemble)
    a = css_state(ens, CssParams(np.pi / 2, varphi)).amplitudes
    b = css_state(ens, CssParams(np.pi / 2, varphi + np.pi)).amplitudes
    v = a + sign * b
    return DickeVector(ens, v / np.linalg.norm(v))


def _matrix_of(op):
    return op.matrix if isinstance(op, CollectiveOperator) else op


def expectation(state: DickeVector, op) -> complex:
    """<psi|O|psi>."""
    mat = _matrix_of(op)
    if mat.shape != (state.ensemble.dim, state.ensemble.dim):
        raise ValidationError(
            f"operator shape {mat.shape} does not match state dimension {state.ensemble.dim}"
        )
    return complex(np.vdot(state.amplitudes, mat @ state.amplitudes))


def sx_eigenbasis(n_spins: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors of Sx in the Dicke basis."""
    return _sx_eig_cached(int(n_spins))


@lru_cache(maxsize=16)
def _sx_eig_cached(n_spins: int):
    off = 0.5 * ladder_coefficients(n_spins)
    w, v = eigh_tridiagonal(np.zeros(n_spins + 1), off)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    # fix the sign so the m_x = S eigenvector is |pi/2, 0> with positive entries
    v = v * np.sign(v[0, :] + (v[0, :] == 0))
    w.flags.writeable = False
    v.flags.writeable = False
    return w, v


@dataclass(frozen=True)
class CrossElements:
    """Off-diagonal CSS matrix elements <pi/2, phi1| O |pi/2, phi2>."""

    ensemble: SpinEnsemble
    phi1: float
    phi2: float
    m_sp2: complex
    m_sm2: complex
    m_pm: complex
    m_mp: complex
    m_sp: complex
    m_sm: complex
    closed_form: dict
    discrepancy: dict

    def m_sphi(self, phi: float) -> complex:
        """<phi1| Sx cos(phi) + Sy sin(phi) |phi2>."""
        return 0.5 * np.exp(-1j * phi) * self.m_sp + 0.5 * np.exp(1j * phi) * self.m_sm


def css_cross_elements(ensemble, phi1: float, phi2: float, rtol: float = 1e-8) -> CrossElements:
    """Exact off-diagonal elements between two equatorial CSS.

    The closed forms printed alongside (first moment, S+^2, S-^2 and S+S-)
    are evaluated for comparison only; ``discrepancy`` flags each one that
    disagrees with the matrix arithmetic beyond ``rtol`` (relative to S^2).
    """
    ens = _as_ensemble(ensemble)
    ops = build_collective_ops(ens)
    bra = css_state(ens, CssParams(np.pi / 2, phi1)).amplitudes
    ket = css_state(ens, CssParams(np.pi / 2, phi2)).amplitudes
    sp_ket = ops.Splus.apply(ket)
    sm_ket = ops.Sminus.apply(ket)
    m_sp = complex(np.vdot(bra, sp_ket))
    m_sm = complex(np.vdot(bra, sm_ket))
    m_sp2 = complex(np.vdot(bra, ops.Splus.apply(sp_ket)))
    m_sm2 = complex(np.vdot(bra, ops.Sminus.apply(sm_ket)))
    m_pm = complex(np.vdot(bra, ops.Splus.apply(sm_ket)))
    m_mp = complex(np.vdot(bra, ops.Sminus.apply(sp_ket)))

    S = ens.S
    d = phi2 - phi1
    c = math.cos(d / 2)

    def first(phi):
        return S / 2 * c ** (2 * S - 1) * math.cos(d / 2 + phi1 - phi) * np.exp(1j * S * d)

    closed = {
        "sphi_at_phi1": first(phi1),
        "sp2": 0.25 * S * (2 * S - 1) * c ** (2 * S - 2) * np.exp(1j * d * (S + 1) + 2j * phi1),
        "sm2": 0.25 * S * (2 * S - 1) * c ** (2 * S - 2) * np.exp(1j * d * (S - 1) - 2j * phi1),
        "pm": c ** (2 * S - 2) * (S / 2 * np.exp(-0.5j * d) * c + S * (2 * S - 1) / 4)
        * np.exp(1j * d * S),
    }
    oracle = {
        "sphi_at_phi1": 0.5 * np.exp(-1j * phi1) * m_sp + 0.5 * np.exp(1j * phi1) * m_sm,
        "sp2": m_sp2,
        "sm2": m_sm2,
        "pm": m_pm,
    }
    scale = max(S * S, 1.0)
    discrepancy = {
        key: bool(abs(closed[key] - oracle[key]) > rtol * scale) for key in closed
    }
    return CrossElements(ens, phi1, phi2, m_sp2, m_sm2, m_pm, m_mp, m_sp, m_sm,
                         closed, discrepancy)
