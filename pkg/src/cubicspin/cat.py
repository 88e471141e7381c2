"""Cat-state structure of cubic-evolved coherent states.

At chi t = pi/n the cubic phase exp(-i pi m^3 / n) is periodic in m, so it
expands into a finite sum of linear phases. Each linear phase rotates the
equatorial CSS, which makes the evolved state a superposition of CSSs.

For integer m the period is 2n and component q sits at phi_q = pi q / n.
For half-integer m the period is 8n; sampling m = j + 1/2 gives components
at phi_q = pi q / (4n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .dicke import (
    CssParams,
    DickeVector,
    SpinEnsemble,
    ValidationError,
    _as_ensemble,
    css_state,
    ghz_state,
    log_binomial_weights,
)
from .evolution import CUBIC, evolve_zdiag, rotate

WEIGHT_FLOOR = 1e-9


def _check_n(n) -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _parity_name(parity) -> str:
    if parity in ("even", "odd"):
        return parity
    raise ValidationError(f"parity must be 'even' or 'odd', got {parity!r}")


def fourier_coeffs(n: int, parity: str) -> np.ndarray:
    """Coefficients f_q of exp(-i pi m^3/n) = sum_q f_q exp(-i phi_q m).

    Phases are reduced modulo the period with exact integers before any
    floating point, so the coefficients are accurate for large n.
    """
    n = _check_n(n)
    if _parity_name(parity) == "even":
        period = 2 * n
        m = np.arange(period, dtype=object)
        q = np.arange(period, dtype=object)
        # phase pi/n * (q m - m^3), reduced mod 2n
        r = (np.outer(q, m) - m**3) % period
        phase = np.pi * r.astype(np.int64) / n
    else:
        period = 8 * n
        u = 2 * np.arange(period, dtype=object) + 1  # u = 2m
        q = np.arange(period, dtype=object)
        # pi q m/(4n) - pi m^3/n = pi (q u - u^3) / (8n), reduced mod 16n
        r = (np.outer(q, u) - u**3) % (16 * n)
        phase = np.pi * r.astype(np.int64) / (8 * n)
    return np.exp(1j * phase).sum(axis=1) / period


def component_phases(n: int, parity: str) -> np.ndarray:
    n = _check_n(n)
    if _parity_name(parity) == "even":
        return np.pi * np.arange(2 * n) / n
    return np.pi * np.arange(8 * n) / (4 * n)


def reconstruct_phase(coeffs: np.ndarray, phases: np.ndarray, m) -> np.ndarray:
    """sum_q f_q exp(-i phi_q m) for an array of m.

    The phases form a uniform grid 2 pi q / P, so m is first reduced modulo
    the period P; this keeps the products small for large |m|.
    """
    m = np.asarray(m, dtype=float)
    if len(phases) > 1 and phases[1] > 0:
        m = np.mod(m, round(2 * np.pi / phases[1]))
    return np.exp(-1j * np.multiply.outer(m, phases)) @ coeffs


@dataclass(frozen=True)
class GhzComponent:
    varphi: float
    sign: int
    weight: complex


@dataclass(frozen=True)
class CatDecomposition:
    """CSS superposition sum_q c_q |pi/2, phi_q> of the cubic-evolved state.

    ``coeffs`` are the Fourier coefficients f_q. The CSS amplitudes carry an
    extra phase, c_q = f_q exp(-i phi_q S), because rotating the CSS
    |pi/2, 0> about z by phi_q gives exp(-i phi_q S) |pi/2, phi_q>.
    """

    ensemble: SpinEnsemble
    n: int
    parity: str
    coeffs: np.ndarray
    phases: np.ndarray
    amplitudes: np.ndarray = field(repr=False)

    @property
    def components(self) -> list[tuple[float, complex]]:
        keep = np.abs(self.amplitudes) > WEIGHT_FLOOR
        return [(float(p), complex(a)) for p, a in zip(self.phases[keep], self.amplitudes[keep])]

    def ghz_components(self) -> list[GhzComponent]:
        return ghz_components(self)


def decompose(ensemble, n: int) -> CatDecomposition:
    ens = _as_ensemble(ensemble)
    parity = ens.parity
    f = fourier_coeffs(n, parity)
    phases = component_phases(n, parity)
    # exp(-i phi_q S) with S = N/2; reduce exactly for large S
    c = f * np.exp(-1j * np.mod(phases * ens.n_spins / 2.0, 2 * np.pi))
    return CatDecomposition(ens, int(n), parity, f, phases, c)


@dataclass(frozen=True)
class CatState:
    decomposition: CatDecomposition
    state: DickeVector


def cat_state(ensemble, n: int) -> CatState:
    """Build the evolved state at chi t = pi/n from its CSS components."""
    dec = decompose(ensemble, n)
    ens = dec.ensemble
    amps = np.zeros(ens.dim, dtype=complex)
    for phi, c in dec.components:
        amps += c * css_state(ens, CssParams(np.pi / 2, phi % (2 * np.pi))).amplitudes
    return CatState(dec, DickeVector(ens, amps))


def ghz_components(dec: CatDecomposition) -> list[GhzComponent]:
    """Pair antipodal CSSs into GHZ states.

    c_a |phi> + c_b |phi + pi> = (c_a + c_b)/sqrt2 |GHZ+> + (c_a - c_b)/sqrt2 |GHZ->.
    Weights below the floor are dropped.
    """
    half = len(dec.phases) // 2
    out = []
    for q in range(half):
        a, b = dec.amplitudes[q], dec.amplitudes[q + half]
        for sign, w in ((+1, (a + b) / math.sqrt(2)), (-1, (a - b) / math.sqrt(2))):
            if abs(w) > WEIGHT_FLOOR:
                out.append(GhzComponent(float(dec.phases[q]), sign, complex(w)))
    return out


@dataclass(frozen=True)
class GhzProjection:
    qfi: float
    phi_opt: float


def ghz_projection_qfi(components, n_spins: int) -> GhzProjection:
    """QFI estimate from projecting each GHZ component's noise onto phi.

    Cross terms between components are neglected, which is accurate when the
    CSSs involved are nearly orthogonal (large N). The sum over components of
    |C|^2 [2S^2 + S + (2S^2 - S) cos 2(phi_c - phi)] / 4 is maximized through
    the resultant phasor sum |C|^2 exp(2 i phi_c).
    """
    comps = list(components)
    if not comps:
        raise ValidationError("no GHZ components given")
    S = _as_ensemble(n_spins).S
    w = np.array([abs(c.weight) ** 2 for c in comps])
    if not w.sum() > 0:
        raise ValidationError("component weights are all zero")
    w = w / w.sum()
    resultant = np.sum(w * np.exp(2j * np.array([c.varphi for c in comps])))
    qfi = (2 * S * S + S) + (2 * S * S - S) * abs(resultant)
    return GhzProjection(float(qfi), float(0.5 * np.angle(resultant) % np.pi))


def peak_schedule(parity: str, k_max: int, chi: float = 1.0) -> list[float]:
    """Times of the QFI peak family: pi/(12 k chi) (even N), pi/(3(2k-1) chi) (odd N)."""
    k_max = _check_n(k_max)
    if not chi > 0:
        raise ValidationError("chi must be positive")
    if _parity_name(parity) == "even":
        return [math.pi / (12 * k * chi) for k in range(1, k_max + 1)]
    return [math.pi / (3 * (2 * k - 1) * chi) for k in range(1, k_max + 1)]


# ---------------------------------------------------------------------------
# Husimi Q


@dataclass(frozen=True)
class HusimiMap:
    theta: np.ndarray
    phi: np.ndarray
    q: np.ndarray  # shape (len(theta), len(phi)), raw |<theta,phi|psi>|^2
    n_spins: int

    def integral(self) -> float:
        """(N+1)/(4 pi) * integral of Q over the sphere; 1 for a unit state."""
        ring = np.mean(self.q, axis=1) * 2 * np.pi  # phi grid is uniform and periodic
        return float((self.n_spins + 1) / (4 * np.pi)
                     * np.trapezoid(ring * np.sin(self.theta), self.theta))

    def maxima(self, rel_height: float = 0.5) -> list[tuple[float, float, float]]:
        """Local maxima above rel_height * global max, as (theta, phi, Q)."""
        footprint = np.ones((3, 3), dtype=bool)
        # wrap in phi, clamp in theta
        filt = ndimage.maximum_filter(self.q, footprint=footprint, mode=("nearest", "wrap"))
        peak = (self.q >= filt) & (self.q >= rel_height * self.q.max())
        i, j = np.nonzero(peak)
        found = []
        for a, b in zip(i, j):
            # collapse plateau duplicates (adjacent equal cells)
            if any(abs(a - x) <= 1 and min(abs(b - y), len(self.phi) - abs(b - y)) <= 1
                   for x, y, _ in found):
                continue
            found.append((a, b, self.q[a, b]))
        return [(float(self.theta[a]), float(self.phi[b]), float(v)) for a, b, v in found]


def husimi(state: DickeVector, n_theta: int = 65, n_phi: int = 128) -> HusimiMap:
    """Q(theta, phi) = |<theta, phi|psi>|^2 on a regular grid.

    theta spans [0, pi] inclusive; phi = 2 pi j / n_phi.
    """
    if n_theta < 32 or n_phi < 64:
        raise ValidationError("Husimi grid must be at least 32 x 64")
    n = state.ensemble.n_spins
    k = np.arange(n + 1)
    theta = np.linspace(0.0, np.pi, n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    logb = log_binomial_weights(n)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        lc, ls = np.log(np.abs(c)), np.log(np.abs(s))
        logmag = (logb[None, :]
                  + np.where(k[None, :] == n, 0.0, np.outer(lc, n - k))
                  + np.where(k[None, :] == 0, 0.0, np.outer(ls, k)))
    g = np.exp(logmag) * state.amplitudes[None, :]  # conj of the (real) CSS magnitudes
    phase = np.exp(-1j * np.outer(k, phi))
    q = np.abs(g @ phase) ** 2
    return HusimiMap(theta, phi, np.clip(q, 0.0, 1.0), n)


# ---------------------------------------------------------------------------
# parity detection


@dataclass(frozen=True)
class ParityProbe:
    m_x: np.ndarray
    probabilities: np.ndarray
    histogram: np.ndarray  # counts per m_x, same ordering
    p_top: float
    verdict: str
    readout_phi: float


def sx_parity_probe(state: DickeVector, samples: int = 1000, seed: int = 0,
                    readout_phi: float = math.pi / 3) -> ParityProbe:
    """Collective spin readout along the equatorial axis at ``readout_phi``.

    For even N the state at chi t = pi/3 is the CSS |pi/2, pi/3>, so the
    default axis sees every atom in the top eigenstate. For odd N the state
    is a GHZ state whose lobes lie away from that axis and P(m = S) is
    exponentially small. ``readout_phi = 0`` gives the lab-frame Sx
    distribution.
    """
    if samples < 0:
        raise ValidationError("samples must be non-negative")
    ens = state.ensemble
    # exp(i a Sz) maps |pi/2, phi> to |pi/2, phi - a>: the readout axis goes to x
    turned = rotate(state, "z", readout_phi)
    # exp(i pi/2 Sy) carries the +x eigenstates onto +z, so Sz statistics are Sx statistics
    x_basis = rotate(turned, "y", math.pi / 2)
    p = x_basis.probabilities()
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    hist = rng.multinomial(samples, p) if samples else np.zeros_like(p, dtype=np.int64)
    top = float(p[0])
    return ParityProbe(ens.m.copy(), p, hist, top, "even" if top > 0.5 else "odd", readout_phi)


@dataclass(frozen=True)
class OddPeakCheck:
    times: tuple
    qfi_over_n2: tuple
    hl_time: float


def odd_peak_time_check(n_spins: int, times=(math.pi / 3, 7 * math.pi / 12)) -> OddPeakCheck:
    """QFI/N^2 of the odd-N cubic-evolved CSS at candidate peak times."""
    from .qfi import qfi_pure

    ens = _as_ensemble(n_spins)
    if ens.parity != "odd":
        raise ValidationError("odd N required")
    css = css_state(ens)
    vals = tuple(qfi_pure(evolve_zdiag(css, CUBIC, t)).qfi / ens.n_spins**2 for t in times)
    best = times[int(np.argmax(vals))]
    return OddPeakCheck(tuple(times), vals, best)
