"""Cubic plus one-axis-twisting admixture, H = chi (eps Sz^3 + Sy^2), for fast GHZ preparation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .dicke import (
    CollectiveOperator,
    DickeVector,
    SpinEnsemble,
    ValidationError,
    _as_ensemble,
    build_collective_ops,
    css_state,
    log_binomial_weights,
)
from .evolution import Propagator
from .qfi import qfi_pure_batch


@dataclass(frozen=True)
class CqaParams:
    epsilon: float
    n_spins: int
    chi: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValidationError("epsilon must be finite and >= 0")
        if not np.isfinite(self.chi) or self.chi <= 0:
            raise ValidationError("chi must be positive")
        SpinEnsemble(self.n_spins)

    def __call__(self, jx, jy, jz):
        """Matrix of H in any spin representation."""
        jx, jy, jz = (np.asarray(a.toarray() if hasattr(a, "toarray") else a) for a in (jx, jy, jz))
        return self.chi * (self.epsilon * jz @ jz @ jz + jy @ jy)


def cqa_hamiltonian(params: CqaParams) -> CollectiveOperator:
    ens = SpinEnsemble(params.n_spins)
    ops = build_collective_ops(ens)
    return CollectiveOperator(ens, params(ops.Sx.matrix, ops.Sy.matrix, ops.Sz.matrix), "dense")


@dataclass(frozen=True)
class CqaTrajectory:
    t: np.ndarray
    mean_sz: np.ndarray
    mean_txy: np.ndarray
    qfi: np.ndarray
    energy: np.ndarray
    norm: np.ndarray
    residual: np.ndarray  # d<Sz>/dt + chi <Txy> at interior points (central differences)

    def rows(self):
        return list(zip(self.t.tolist(), self.mean_sz.tolist(), self.mean_txy.tolist(),
                        self.qfi.tolist()))

    def sign_change_times(self) -> np.ndarray:
        s = np.sign(self.mean_txy)
        idx = np.flatnonzero(s[:-1] * s[1:] < 0)
        return self.t[idx]


def cqa_trajectory(params: CqaParams, t_grid=None, initial: DickeVector | None = None,
                   stencil: int = 2) -> CqaTrajectory:
    """Exact CQA evolution on a time grid, with the <Sz> rate equation checked.

    d<Sz>/dt = -chi <Sx Sy + Sy Sx>, since Sz commutes with the cubic part.
    The derivative uses a 3-point (``stencil=2``) or 5-point (``stencil=4``)
    central difference on a uniform grid; points without a full stencil get NaN.
    """
    ens = SpinEnsemble(params.n_spins)
    t = np.arange(0.0, 1.0 + 5e-4, 1e-3) if t_grid is None else np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0):
        raise ValidationError("t_grid must be strictly increasing")
    psi0 = css_state(ens) if initial is None else initial
    H = cqa_hamiltonian(params)
    prop = Propagator(H)
    amps = prop.amplitudes_at(psi0.amplitudes, t)
    ops = build_collective_ops(ens)
    sx, sy, sz = (o.matrix for o in ops)
    txy = (sx @ sy + sy @ sx)
    hm = H.dense()
    m = ens.m
    p = np.abs(amps) ** 2
    mean_sz = p @ m
    mean_txy = np.real(np.einsum("ti,ti->t", amps.conj(), (txy @ amps.T).T))
    energy = np.real(np.einsum("ti,ti->t", amps.conj(), (hm @ amps.T).T))
    residual = np.full(t.size, np.nan)
    if stencil == 2:
        if t.size >= 3:
            dsz = (mean_sz[2:] - mean_sz[:-2]) / (t[2:] - t[:-2])
            residual[1:-1] = dsz + params.chi * mean_txy[1:-1]
    elif stencil == 4:
        h = np.diff(t)
        if not np.allclose(h, h[0], rtol=1e-9, atol=0):
            raise ValidationError("the 5-point stencil needs a uniform grid")
        if t.size >= 5:
            f = mean_sz
            dsz = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h[0])
            residual[2:-2] = dsz + params.chi * mean_txy[2:-2]
    else:
        raise ValidationError("stencil must be 2 or 4")
    return CqaTrajectory(t, mean_sz, mean_txy, qfi_pure_batch(amps, ens.n_spins), energy,
                         np.sqrt(p.sum(axis=1)), residual)


# ---------------------------------------------------------------------------
# GHZ fidelity


def _equatorial_overlaps(state: DickeVector, phis: np.ndarray):
    """<pi/2, phi|psi> and <pi/2, phi + pi|psi> for an array of phi."""
    n = state.ensemble.n_spins
    k = np.arange(n + 1)
    mag = np.exp(log_binomial_weights(n) - 0.5 * n * math.log(2.0))
    g = mag * state.amplitudes
    a = np.exp(-1j * np.outer(phis, k)) @ g
    b = np.exp(-1j * np.outer(phis, k)) @ (g * (-1.0) ** k)
    return a, b


@dataclass(frozen=True)
class GhzFidelity:
    fidelity: float
    phi_best: float
    sign_best: int
    # same search with the relative phase between the two lobes left free
    fidelity_any_phase: float = float("nan")
    relative_phase: float = float("nan")


def ghz_fidelity(state: DickeVector, step: float = math.pi / 720) -> GhzFidelity:
    """max over phi and sign of |<GHZ_phi^+-|psi>|^2, grid search plus local polish.

    The two CSSs in a GHZ state are exactly orthogonal at theta = pi/2, so
    the overlap is (a +- b)/sqrt(2) with a, b the CSS overlaps. Letting the
    lobe phase float gives (|a| + |b|)^2 / 2 instead.
    """
    phis = np.arange(0.0, math.pi, step)
    a, b = _equatorial_overlaps(state, phis)
    fid = {+1: np.abs(a + b) ** 2 / 2, -1: np.abs(a - b) ** 2 / 2}
    sign = max(fid, key=lambda s: fid[s].max())
    i = int(np.argmax(fid[sign]))
    best_f, best_phi = _polish(state, phis[i], step, fid[sign][i],
                               lambda aa, bb: np.abs(aa + sign * bb) ** 2 / 2)
    free = (np.abs(a) + np.abs(b)) ** 2 / 2
    k = int(np.argmax(free))
    free_f, free_phi = _polish(state, phis[k], step, free[k],
                               lambda aa, bb: (np.abs(aa) + np.abs(bb)) ** 2 / 2)
    aa, bb = _equatorial_overlaps(state, np.array([free_phi]))
    return GhzFidelity(float(min(best_f, 1.0)), float(best_phi % math.pi), sign,
                       float(min(free_f, 1.0)), float(np.angle(bb[0] / aa[0])) if abs(aa[0]) else 0.0)


def _polish(state, phi0, step, f0, score):
    def neg(phi):
        aa, bb = _equatorial_overlaps(state, np.array([phi]))
        return -float(score(aa[0], bb[0]))

    res = minimize_scalar(neg, bounds=(phi0 - step, phi0 + step), method="bounded",
                          options={"xatol": 1e-10})
    if -res.fun > f0:
        return -res.fun, float(res.x)
    return f0, float(phi0)


# ---------------------------------------------------------------------------
# (eps, t) optimization


@dataclass(frozen=True)
class GhzSearchResult:
    n_spins: int
    epsilon_opt: float
    t_f: float
    qfi_max: float
    fidelity: float
    phi_best: float
    sign_best: int
    fidelity_any_phase: float = float("nan")
    t_cap: float | None = None

    @property
    def qfi_over_n2(self) -> float:
        return self.qfi_max / self.n_spins**2

    @property
    def speedup(self) -> float:
        """t_f relative to the one-axis-twisting GHZ time pi/2."""
        return self.t_f * 2 / math.pi


def _qfi_at(n_spins: int, eps: float, t: float, psi0) -> float:
    prop = Propagator(cqa_hamiltonian(CqaParams(eps, n_spins)))
    return float(qfi_pure_batch(prop.amplitudes_at(psi0.amplitudes, [t]), n_spins)[0])


def qfi_grid(n_spins: int, eps_values, t_values) -> np.ndarray:
    """QFI over an (eps, t) grid, shape (len(eps), len(t))."""
    ens = SpinEnsemble(n_spins)
    psi0 = css_state(ens)
    out = np.empty((len(eps_values), len(t_values)))
    for i, eps in enumerate(eps_values):
        prop = Propagator(cqa_hamiltonian(CqaParams(float(eps), n_spins)))
        out[i] = qfi_pure_batch(prop.amplitudes_at(psi0.amplitudes, t_values), n_spins)
    return out


def optimize_ghz(n_spins: int, eps_range=(0.01, 1.0), t_range=(0.0, math.pi), *,
                 d_eps: float = 0.01, d_t: float = 0.01, t_cap: float | None = None,
                 xatol: float = 1e-5) -> GhzSearchResult:
    """Maximize the QFI over (eps, t): coarse grid, then Nelder-Mead from the best cell.

    ``t_cap`` restricts the search to t <= t_cap, which picks out the early,
    slightly lower QFI branch.
    """
    e_lo, e_hi = map(float, eps_range)
    t_lo, t_hi = map(float, t_range)
    if t_cap is not None:
        t_hi = min(t_hi, float(t_cap))
    if not (e_hi > e_lo >= 0) or not (t_hi > t_lo >= 0):
        raise ValidationError("empty search range")
    ens = SpinEnsemble(n_spins)
    psi0 = css_state(ens)
    eps_grid = np.arange(e_lo, e_hi + 0.5 * d_eps, d_eps)
    t_grid = np.arange(max(t_lo, d_t), t_hi + 0.5 * d_t, d_t)
    t_grid = t_grid[t_grid <= t_hi]
    if eps_grid.size == 0 or t_grid.size == 0:
        raise ValidationError("empty search grid")
    grid = qfi_grid(n_spins, eps_grid, t_grid)
    i, j = np.unravel_index(int(np.argmax(grid)), grid.shape)

    def neg(x):
        eps, t = x
        if not (e_lo <= eps <= e_hi and t_lo < t <= t_hi):
            return 0.0
        return -_qfi_at(n_spins, eps, t, psi0)

    x0 = np.array([eps_grid[i], t_grid[j]])
    simplex = np.array([x0, x0 + [d_eps, 0.0], x0 + [0.0, d_t]])
    res = minimize(neg, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": xatol, "fatol": 1e-12,
                            "maxiter": 2000})
    eps_opt, t_opt = (res.x if -res.fun >= grid[i, j] else x0)
    qmax = max(-res.fun, grid[i, j])
    final = Propagator(cqa_hamiltonian(CqaParams(float(eps_opt), n_spins)))(psi0, float(t_opt))
    fid = ghz_fidelity(final)
    return GhzSearchResult(n_spins, float(eps_opt), float(t_opt), float(qmax), fid.fidelity,
                           fid.phi_best, fid.sign_best, fid.fidelity_any_phase, t_cap)


def constrained_branch(n_spins: int, t_caps, **kw) -> list[GhzSearchResult]:
    """optimize_ghz for each time cap; traces QFI sacrificed for speed."""
    return [optimize_ghz(n_spins, t_cap=float(c), **kw) for c in t_caps]
