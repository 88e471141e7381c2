"""Quantum Fisher information and weak-coupling closed forms."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .dicke import (
    DickeVector,
    NumericalError,
    SpinEnsemble,
    ValidationError,
    _as_ensemble,
    build_collective_ops,
    ladder_coefficients,
    spin_matrices,
)


class AnalyticRegimeWarning(UserWarning):
    """Closed-form weak-coupling result evaluated outside mu*S <= 1."""


@dataclass(frozen=True)
class QfiReport:
    qfi: float
    direction: np.ndarray

    @property
    def phase_bound(self) -> float:
        return cramer_rao(self.qfi) if self.qfi > 0 else math.inf


def cramer_rao(qfi: float) -> float:
    """Quantum Cramer-Rao phase uncertainty 1/sqrt(F) for a single shot."""
    if not qfi > 0:
        raise ValidationError("QFI must be positive for a finite Cramer-Rao bound")
    return 1.0 / math.sqrt(qfi)


# ---------------------------------------------------------------------------
# pure states


def _ladder_moments(amps: np.ndarray, n_spins: int):
    """First and second moments of the collective spin for a batch of states.

    ``amps`` has shape (..., N+1). Everything is O(N) per state through the
    ladder structure, so long time grids at N ~ 10^3 stay cheap.
    """
    c = ladder_coefficients(n_spins)  # <k-1|S+|k> for k = 1..N
    ens = SpinEnsemble(n_spins)
    m = ens.m
    p = np.abs(amps) ** 2
    # S+ psi at index k-1 collects c_k psi_k
    sp_psi = np.zeros_like(amps)
    sp_psi[..., :-1] = c * amps[..., 1:]
    mean_sp = np.sum(amps.conj() * sp_psi, axis=-1)
    sp2 = np.zeros_like(amps)
    sp2[..., :-1] = c * sp_psi[..., 1:]
    mean_sp2 = np.sum(amps.conj() * sp2, axis=-1)
    mean_sz = p @ m
    mean_sz2 = p @ (m * m)
    # <S- S+> = |S+ psi|^2 and <S+ S-> = |S- psi|^2
    mean_smsp = np.sum(np.abs(sp_psi) ** 2, axis=-1)
    sm_psi = np.zeros_like(amps)
    sm_psi[..., 1:] = c * amps[..., :-1]
    mean_spsm = np.sum(np.abs(sm_psi) ** 2, axis=-1)
    zpsi = amps * m
    mean_sp_sz = np.sum(amps.conj()[..., :-1] * c * zpsi[..., 1:], axis=-1)  # <S+ Sz>
    mean_sz_sp = np.sum((amps.conj() * m)[..., :-1] * c * amps[..., 1:], axis=-1)  # <Sz S+>
    return dict(sp=mean_sp, sp2=mean_sp2, sz=mean_sz, sz2=mean_sz2,
                spsm=mean_spsm, smsp=mean_smsp, sp_sz=mean_sp_sz, sz_sp=mean_sz_sp)


def covariance_batch(amps: np.ndarray, n_spins: int) -> np.ndarray:
    """Symmetrized covariance matrices, shape (..., 3, 3)."""
    mo = _ladder_moments(np.asarray(amps, dtype=complex), n_spins)
    sp, sp2 = mo["sp"], mo["sp2"]
    sx, sy, sz = sp.real, sp.imag, mo["sz"]
    both = mo["spsm"] + mo["smsp"]
    # S+^2 = Sx^2 - Sy^2 + i{Sx,Sy}
    sxx = 0.25 * (2 * sp2.real + both)
    syy = 0.25 * (-2 * sp2.real + both)
    sxy = 0.5 * sp2.imag  # 1/2 <{Sx,Sy}>
    # {S+, Sz} = {Sx,Sz} + i{Sy,Sz}
    anti = mo["sp_sz"] + mo["sz_sp"]
    sxz = 0.5 * anti.real
    syz = 0.5 * anti.imag
    szz = mo["sz2"]
    shape = sp.shape + (3, 3)
    cov = np.empty(shape)
    mean = np.stack([sx, sy, sz], axis=-1)
    second = np.stack([
        np.stack([sxx, sxy, sxz], axis=-1),
        np.stack([sxy, syy, syz], axis=-1),
        np.stack([sxz, syz, szz], axis=-1),
    ], axis=-2)
    cov[...] = second - mean[..., :, None] * mean[..., None, :]
    return cov


def covariance_matrix(state: DickeVector) -> np.ndarray:
    return covariance_batch(state.amplitudes, state.ensemble.n_spins)


def variance_along(state: DickeVector, phi: float, theta: float = math.pi / 2) -> float:
    """Variance of S_n for n = (sin th cos phi, sin th sin phi, cos th)."""
    n = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi),
                  math.cos(theta)])
    return float(n @ covariance_matrix(state) @ n)


def qfi_pure(state: DickeVector) -> QfiReport:
    """4 times the largest eigenvalue of the covariance matrix."""
    w, v = np.linalg.eigh(covariance_matrix(state))
    return QfiReport(qfi=float(4 * w[-1]), direction=v[:, -1])


def qfi_pure_batch(amps: np.ndarray, n_spins: int) -> np.ndarray:
    """QFI for a stack of pure states, shape (...)."""
    return 4 * np.linalg.eigvalsh(covariance_batch(amps, n_spins))[..., -1]


# ---------------------------------------------------------------------------
# mixed states


def _check_density(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-9:
        raise ValidationError("density matrix is not Hermitian")
    return 0.5 * (rho + rho.conj().T)


def qfi_matrix(blocks, generators_for, cutoff_trace: float) -> np.ndarray:
    """Sum of per-block QFI matrices.

    ``blocks`` yields Hermitian matrices carrying their physical weight
    (already multiplied by any degeneracy); ``generators_for(dim)`` returns
    the (Sx, Sy, Sz) matrices acting on that block.
    """
    M = np.zeros((3, 3))
    cutoff = 1e-12 * cutoff_trace
    for rho in blocks:
        lam, vec = np.linalg.eigh(rho)
        if lam[0] < -1e-8 * max(1.0, cutoff_trace):
            raise ValidationError(f"density matrix is not positive semidefinite (min eig {lam[0]:.3e})")
        lam = np.clip(lam, 0.0, None)
        gens = [vec.conj().T @ g @ vec for g in generators_for(rho.shape[0])]
        s = lam[:, None] + lam[None, :]
        d = lam[:, None] - lam[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(s > cutoff, d * d / s, 0.0)
        for i in range(3):
            for j in range(i, 3):
                val = 2.0 * np.sum(w * np.real(gens[i] * gens[j].T))
                M[i, j] += val
                if i != j:
                    M[j, i] += val
    return M


def qfi_mixed(rho, generators=None, *, psd_floor: float = -1e-10) -> QfiReport:
    """QFI of a mixed state, maximized over generator directions.

    ``rho`` may be a dense Dicke-basis matrix of size N+1, a full-space
    matrix together with its collective ``generators`` (Sx, Sy, Sz), or a
    block-diagonal permutation-invariant state exposing ``weighted_blocks``.
    """
    if hasattr(rho, "weighted_blocks"):
        blocks = rho.weighted_blocks()
        trace = sum(np.trace(b).real for _, b in blocks)
        if abs(trace - 1.0) > 1e-9:
            raise ValidationError(f"trace {trace} differs from 1")
        M = qfi_matrix(
            [0.5 * (b + b.conj().T) for _, b in blocks],
            lambda dim: spin_matrices(dim - 1),
            trace,
        )
    else:
        rho = _check_density(rho)
        trace = np.trace(rho).real
        if abs(trace - 1.0) > 1e-9:
            raise ValidationError(f"trace {trace} differs from 1")
        lam_min = np.linalg.eigvalsh(rho)[0]
        if lam_min < psd_floor:
            raise ValidationError(f"density matrix is not positive semidefinite (min eig {lam_min:.3e})")
        if generators is None:
            gens = spin_matrices(rho.shape[0] - 1)
        else:
            gens = [np.asarray(g.toarray() if hasattr(g, "toarray") else g, dtype=complex)
                    for g in generators]
            if any(g.shape != rho.shape for g in gens):
                raise ValidationError("generator and density matrix shapes differ")
        M = qfi_matrix([rho], lambda dim: gens, trace)
    w, v = np.linalg.eigh(M)
    return QfiReport(qfi=float(max(w[-1], 0.0)), direction=v[:, -1])


# ---------------------------------------------------------------------------
# weak-coupling closed forms


@dataclass(frozen=True)
class AnalyticMoments:
    S: float
    mu: float
    mean_sp: complex
    mean_sp2: complex
    mean_spsm: complex
    alpha: tuple  # alpha_1 .. alpha_4
    mean_sx: float
    mean_sy: float
    mean_sx2: float
    mean_sy2: float
    mean_anti_xy: float
    A: float
    B: float
    delta_angle: float
    valid: bool


def analytic_moments(n_spins: int, chi_t: float) -> AnalyticMoments:
    """Gaussian-approximation moments of the cubic-evolved equatorial CSS.

    ``valid`` is False once mu*S > 1, where the small-mu expansion has no
    business being trusted.
    """
    ens = _as_ensemble(n_spins)
    S = ens.S
    mu = 3.0 * chi_t
    alpha = tuple(1.0 / math.sqrt(1.0 + k * S * S * mu * mu) for k in (1, 2, 3, 4))
    a1, _, _, a4 = alpha
    mean_sp = S / np.sqrt(1 - 1j * mu * S + 0j)
    mean_sp2 = S * (S - 0.5) / np.sqrt(1 - 2j * mu * S + 0j)
    mean_spsm = S * S + S / 2
    mean_sx = S * math.sqrt(a1 * (a1 + 1) / 2)
    mean_sy = S * math.sqrt(a1 * (1 - a1) / 2)
    # the y-variance uses (1 + alpha_4), consistent with A and with <S+^2>
    mean_sx2 = S / 4 * ((2 * S + 1) + (2 * S - 1) * math.sqrt(a4 * (a4 + 1) / 2))
    mean_sy2 = S / 4 * ((2 * S + 1) - (2 * S - 1) * math.sqrt(a4 * (a4 + 1) / 2))
    anti = S / 2 * (2 * S - 1) * math.sqrt(a4 * (1 - a4) / 2)
    A = S / (4 * math.sqrt(2)) * (2 * S - 1) * math.sqrt(a4 * (1 + a4)) - S * S / 2 * a1 * a1
    B = S / (4 * math.sqrt(2)) * (2 * S - 1) * math.sqrt(a4 * (1 - a4)) - mu * S**3 / 2 * a1 * a1
    return AnalyticMoments(
        S=S, mu=mu, mean_sp=complex(mean_sp), mean_sp2=complex(mean_sp2),
        mean_spsm=complex(mean_spsm), alpha=alpha, mean_sx=mean_sx, mean_sy=mean_sy,
        mean_sx2=mean_sx2, mean_sy2=mean_sy2, mean_anti_xy=anti, A=A, B=B,
        delta_angle=0.5 * math.atan2(B, A), valid=mu * S <= 1.0,
    )


def analytic_weak_qfi(n_spins: int, chi_t: float, warn: bool = True) -> float:
    """Closed-form QFI of the weakly cubic-evolved CSS."""
    am = analytic_moments(n_spins, chi_t)
    if warn and not am.valid:
        warnings.warn(f"mu*S = {am.mu * am.S:.3g} > 1: weak-coupling formula outside its "
                      "domain", AnalyticRegimeWarning, stacklevel=2)
    S, a1 = am.S, am.alpha[0]
    return 4 * math.hypot(am.A, am.B) + S * (2 * (1 - a1) * S + 1)


def weak_limit_qfi(n_spins: int, alpha: float, scheme: str = "cubic") -> float:
    """Leading small-alpha QFI, alpha = N chi t.

    The one-axis-twisting form is the printed quadratic one; the exact OAT
    excess is linear in alpha at small alpha (see tests).
    """
    S = _as_ensemble(n_spins).S
    if scheme == "cubic":
        return 2 * S + 4.5 * S * S * alpha * alpha
    if scheme == "oat":
        return 2 * S + 2 * S * alpha * alpha
    raise ValidationError(f"unknown scheme {scheme!r}")


class PeakQfi(NamedTuple):
    value: float
    large_n_limit: float


def peak_even_max_qfi(n_spins: int) -> PeakQfi:
    """Closed-form QFI of the four-component cat at chi t = pi/4 (even N)."""
    ens = _as_ensemble(n_spins)
    if ens.n_spins % 2:
        raise ValidationError("peak formula holds for even N only")
    S = ens.S
    r = 1 / math.sqrt(2)
    val = (2 * S * S * (1 + r - math.cos(math.pi / 8) ** (4 * S - 2)
                        * (1 + math.cos(math.pi * S / 2)))
           + (1 - r) * S)
    return PeakQfi(val, 0.5 * (1 + r) * ens.n_spins**2)


def gaussian_binomial_check(S: float, center: float | None = None) -> float:
    """max_m |P_{2S-1}(m) - exp(-(m-c)^2/S)/sqrt(S pi)|, with c = S by default.

    The binomial mean is S - 1/2, so the default centre carries an O(1/S)
    offset error; pass ``center=S - 0.5`` for the mean-matched Gaussian.
    """
    c = S if center is None else center
    two_s = 2 * S
    if abs(two_s - round(two_s)) > 1e-12 or two_s < 2:
        raise ValidationError("S must be a positive multiple of 1/2 with 2S >= 2")
    n = int(round(two_s)) - 1
    m = np.arange(n + 1)
    log_p = gammaln(n + 1) - gammaln(m + 1) - gammaln(n - m + 1) - n * math.log(2)
    gauss = np.exp(-((m - c) ** 2) / S) / math.sqrt(S * math.pi)
    return float(np.max(np.abs(np.exp(log_p) - gauss)))
