"""Collective dephasing and single-atom decay of a permutation-invariant ensemble.

Master equation, with D[O] rho = 2 O rho O^+ - {O^+ O, rho}:

    d rho/dt = -i [H, rho] + Gamma D[Sz] rho + gamma sum_k D[sigma_-^k] rho

A permutation-invariant state is block diagonal in total spin j, with every
block repeated d_j times (the multiplicity of spin j in N spin-1/2s). We
store one copy per j. Local decay moves weight between neighbouring j; the
coefficients follow from coupling the decaying spin to the other N-1 spins
with spin-1/2 Clebsch-Gordan coefficients.

The full 2^N solver at the bottom is an independent oracle for small N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .dicke import (
    DickeVector,
    NumericalError,
    SpinEnsemble,
    ValidationError,
    _as_ensemble,
    css_state,
    spin_matrices,
)
from .evolution import CUBIC, OAT, ZDiagonalHamiltonian
from .qfi import qfi_mixed

TRACE_TOL = 1e-9
HERMITIAN_TOL = 1e-9
PSD_FLOOR = -1e-8
MAX_FULL_SPINS = 8


@dataclass(frozen=True)
class LindbladParams:
    gamma: float = 0.0        # single-atom decay (units of chi)
    Gamma_deph: float = 0.0   # collective dephasing (units of chi)

    def __post_init__(self):
        for name in ("gamma", "Gamma_deph"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be >= 0, got {v}")


def degeneracy(n_spins: int, two_j: int) -> int:
    """Multiplicity of total spin j = two_j/2 among n_spins spin-1/2s."""
    if two_j < 0 or two_j > n_spins or (n_spins - two_j) % 2:
        return 0
    k = (n_spins - two_j) // 2
    return math.comb(n_spins, k) - (math.comb(n_spins, k - 1) if k > 0 else 0)


def block_spins(n_spins: int) -> list[int]:
    """Allowed 2j values, largest first."""
    return list(range(n_spins, -1, -2))


@dataclass(eq=False)
class DickeBlockState:
    """Permutation-invariant density matrix, one representative block per j.

    ``blocks[two_j]`` is the (2j+1)-dimensional block in basis m = j..-j.
    The physical state is the direct sum of d_j copies of each block, so the
    physical trace is sum_j d_j tr(block_j).
    """

    n_spins: int
    blocks: dict = field(default_factory=dict)

    def __post_init__(self):
        SpinEnsemble(self.n_spins)
        for two_j in block_spins(self.n_spins):
            b = self.blocks.get(two_j)
            if b is None:
                self.blocks[two_j] = np.zeros((two_j + 1, two_j + 1), dtype=complex)
            elif np.shape(b) != (two_j + 1, two_j + 1):
                raise ValidationError(f"block 2j={two_j} has shape {np.shape(b)}")
        extra = set(self.blocks) - set(block_spins(self.n_spins))
        if extra:
            raise ValidationError(f"invalid block labels {sorted(extra)}")

    @classmethod
    def from_pure(cls, state: DickeVector) -> "DickeBlockState":
        n = state.ensemble.n_spins
        a = state.amplitudes
        return cls(n, {n: np.outer(a, a.conj())})

    @classmethod
    def from_dicke_matrix(cls, rho: np.ndarray) -> "DickeBlockState":
        rho = np.asarray(rho, dtype=complex)
        return cls(rho.shape[0] - 1, {rho.shape[0] - 1: rho.copy()})

    def degeneracies(self) -> dict:
        return {j: degeneracy(self.n_spins, j) for j in self.blocks}

    def weighted_blocks(self) -> list[tuple[int, np.ndarray]]:
        return [(j, degeneracy(self.n_spins, j) * b) for j, b in sorted(self.blocks.items(), reverse=True)]

    @property
    def trace(self) -> float:
        return float(sum(np.trace(b).real for _, b in self.weighted_blocks()))

    def expectation(self, op_of_spin) -> complex:
        """Tr(rho O) for O given as a function two_j -> block matrix."""
        return complex(sum(np.trace(b @ op_of_spin(j)) for j, b in self.weighted_blocks()))

    @property
    def mean_sz(self) -> float:
        return float(sum(np.real(np.diag(b)) @ (j / 2 - np.arange(j + 1))
                         for j, b in self.weighted_blocks()))

    def populations(self) -> dict:
        """Physical population of each m, summed over blocks; keys are 2m."""
        out = {}
        for j, b in self.weighted_blocks():
            for a, p in enumerate(np.real(np.diag(b))):
                key = j - 2 * a
                out[key] = out.get(key, 0.0) + p
        return out

    def check(self, trace_tol=TRACE_TOL, herm_tol=HERMITIAN_TOL, psd_floor=PSD_FLOOR):
        tr = self.trace
        if abs(tr - 1.0) > trace_tol:
            raise NumericalError(f"trace drift {tr - 1.0:.3e}")
        for j, b in self.weighted_blocks():
            if b.size and np.max(np.abs(b - b.conj().T)) > herm_tol:
                raise NumericalError(f"block 2j={j} lost Hermiticity")
            if b.size and np.linalg.eigvalsh(0.5 * (b + b.conj().T))[0] < psd_floor:
                raise NumericalError(f"block 2j={j} is not positive semidefinite")
        return self


# ---------------------------------------------------------------------------
# Liouvillian in the block representation


def _cg_up(two_a: int, two_j: int, two_m: int) -> float:
    """|<a, m-1/2; 1/2, +1/2 | j, m>| for j = a +- 1/2."""
    a2, m2 = two_a, two_m
    if two_j == two_a + 1:
        num = a2 + m2 + 1
    else:
        num = a2 - m2 + 1
    return math.sqrt(max(num, 0) / (2 * (a2 + 1))) if abs(m2 - 1) <= a2 else 0.0


def _cg_down(two_a: int, two_j: int, two_mu: int) -> float:
    """|<a, mu+1/2; 1/2, -1/2 | j, mu>| for j = a +- 1/2."""
    a2, m2 = two_a, two_mu
    if two_j == two_a + 1:
        num = a2 - m2 + 1
    else:
        num = a2 + m2 + 1
    return math.sqrt(max(num, 0) / (2 * (a2 + 1))) if abs(m2 + 1) <= a2 else 0.0


@lru_cache(maxsize=32)
def _block_layout(n_spins: int):
    spins = block_spins(n_spins)
    offsets, pos = {}, 0
    for j in spins:
        offsets[j] = pos
        pos += (j + 1) ** 2
    return tuple(spins), offsets, pos


def _decay_transfer(n_spins: int, two_j: int, two_jp: int):
    """Jump-term coefficients from block j to block j' for pair (m, m') -> (m-1, m'-1).

    Returns a dict {(a, b): K} on source indices. K sums over the spin a of
    the remaining N-1 atoms; the ratio d_a(N-1) / d_j'(N) converts between
    per-copy blocks.
    """
    n = n_spins
    d_target = degeneracy(n, two_jp)
    out = {}
    if d_target == 0:
        return out
    for two_a in (two_j - 1, two_j + 1):
        if two_a < 0 or abs(two_a - two_jp) != 1:
            continue
        d_a = degeneracy(n - 1, two_a)
        if d_a == 0:
            continue
        pref = float(Fraction(n * d_a, d_target))
        for a in range(two_j + 1):
            m2 = two_j - 2 * a
            if m2 - 2 < -two_jp:
                continue
            up_a = _cg_up(two_a, two_j, m2)
            dn_a = _cg_down(two_a, two_jp, m2 - 2)
            if up_a == 0.0 or dn_a == 0.0:
                continue
            for b in range(two_j + 1):
                mp2 = two_j - 2 * b
                if mp2 - 2 < -two_jp:
                    continue
                val = pref * up_a * dn_a * _cg_up(two_a, two_j, mp2) * _cg_down(two_a, two_jp, mp2 - 2)
                if val:
                    out[(a, b)] = out.get((a, b), 0.0) + val
    return out


def _hamiltonian_block(hamiltonian, two_j: int) -> np.ndarray:
    jx, jy, jz = spin_matrices(two_j)
    return np.asarray(hamiltonian(jx, jy, jz), dtype=complex)


def _check_pi_hamiltonian(hamiltonian):
    if hamiltonian is None:
        return ZDiagonalHamiltonian()
    if isinstance(hamiltonian, np.ndarray) or sp.issparse(hamiltonian) or not callable(hamiltonian):
        raise ValidationError("the Hamiltonian must be a function of the collective spin "
                              "(callable on Jx, Jy, Jz) so it acts on every j block")
    return hamiltonian


def build_liouvillian(n_spins: int, hamiltonian, params: LindbladParams) -> sp.csr_matrix:
    """Sparse generator acting on the concatenated row-major blocks."""
    hamiltonian = _check_pi_hamiltonian(hamiltonian)
    spins, offsets, size = _block_layout(n_spins)
    rows, cols, vals = [], [], []
    g, G = params.gamma, params.Gamma_deph
    for j in spins:
        dim = j + 1
        off = offsets[j]
        h = _hamiltonian_block(hamiltonian, j)
        if np.max(np.abs(h - h.conj().T), initial=0.0) > 1e-10:
            raise ValidationError("Hamiltonian block is not Hermitian")
        eye = np.eye(dim)
        # -i (H (x) 1 - 1 (x) H^T) on row-major vec
        gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
        m = (j - 2 * np.arange(dim)) / 2.0
        mm = m[:, None]
        mp = m[None, :]
        diag = (-G * (mm - mp) ** 2 - g * (n_spins + mm + mp)).ravel()
        gen = gen + np.diag(diag)
        r, c = np.nonzero(gen)
        rows.append(r + off)
        cols.append(c + off)
        vals.append(gen[r, c])
        if g > 0:
            for jp in (j - 2, j, j + 2):
                if jp < 0 or jp > n_spins:
                    continue
                shift = (jp - j) // 2 + 1  # target index = source index + shift
                dim_t = jp + 1
                for (a, b), k in _decay_transfer(n_spins, j, jp).items():
                    ta, tb = a + shift, b + shift
                    if ta >= dim_t or tb >= dim_t:
                        continue
                    rows.append(np.array([offsets[jp] + ta * dim_t + tb]))
                    cols.append(np.array([off + a * dim + b]))
                    vals.append(np.array([2 * g * k]))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals).astype(complex)
    return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))


def _pack(state: DickeBlockState) -> np.ndarray:
    spins, offsets, size = _block_layout(state.n_spins)
    y = np.zeros(size, dtype=complex)
    for j in spins:
        y[offsets[j]: offsets[j] + (j + 1) ** 2] = state.blocks[j].ravel()
    return y


def _unpack(n_spins: int, y: np.ndarray) -> DickeBlockState:
    spins, offsets, _ = _block_layout(n_spins)
    return DickeBlockState(n_spins, {
        j: y[offsets[j]: offsets[j] + (j + 1) ** 2].reshape(j + 1, j + 1).copy() for j in spins})


def _coherence_sectors(n_spins: int):
    """Index sets of fixed 2(m - m'); a z-diagonal generator never mixes them."""
    spins, offsets, size = _block_layout(n_spins)
    label = np.empty(size, dtype=np.int64)
    for j in spins:
        a = np.arange(j + 1)
        label[offsets[j]: offsets[j] + (j + 1) ** 2] = (2 * (a[None, :] - a[:, None])).ravel()
    return [np.flatnonzero(label == q) for q in np.unique(label)]


@dataclass
class Trajectory:
    t: np.ndarray
    states: list

    def observables(self):
        """Rows (t, trace, qfi, n_x, n_y, n_z, mean_sz)."""
        rows = []
        for t, s in zip(self.t, self.states):
            rep = qfi_mixed(s)
            n = rep.direction
            rows.append((float(t), s.trace, rep.qfi, float(n[0]), float(n[1]), float(n[2]), s.mean_sz))
        return rows


def _as_block_state(initial) -> DickeBlockState:
    if isinstance(initial, DickeBlockState):
        return initial
    if isinstance(initial, DickeVector):
        return DickeBlockState.from_pure(initial)
    raise ValidationError("initial state must be a DickeVector or DickeBlockState")


def _check_grid(t_grid) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t.ndim != 1 or t.size == 0 or not np.all(np.isfinite(t)):
        raise ValidationError("t_grid must be a non-empty 1-D array of finite times")
    if np.any(np.diff(t) < 0) or t[0] < 0:
        raise ValidationError("t_grid must be non-negative and increasing")
    return t


def lindblad_evolve_pi(initial, hamiltonian, params: LindbladParams, t_grid, *,
                       method: str = "auto", rtol: float = 1e-10, atol: float = 1e-12,
                       check: bool = True) -> Trajectory:
    """Integrate the master equation in the block representation.

    ``hamiltonian`` is a callable (Jx, Jy, Jz) -> matrix such as a
    ZDiagonalHamiltonian. With ``method="auto"`` a z-diagonal Hamiltonian is
    propagated exactly by exponentiating the generator in each fixed m - m'
    sector; anything else uses an adaptive Runge-Kutta integrator.
    """
    if not isinstance(params, LindbladParams):
        raise ValidationError("params must be LindbladParams")
    hamiltonian = _check_pi_hamiltonian(hamiltonian)
    rho0 = _as_block_state(initial)
    n = rho0.n_spins
    t = _check_grid(t_grid)
    L = build_liouvillian(n, hamiltonian, params)
    y0 = _pack(rho0)
    if method == "auto":
        method = "expm" if isinstance(hamiltonian, ZDiagonalHamiltonian) else "rk"
    if method == "expm":
        if not isinstance(hamiltonian, ZDiagonalHamiltonian):
            raise ValidationError("sector exponentiation needs a z-diagonal Hamiltonian")
        ys = np.empty((t.size, y0.size), dtype=complex)
        Ld = L.tocsc()
        for idx in _coherence_sectors(n):
            sub = Ld[idx][:, idx].toarray()
            y = y0[idx]
            prev = 0.0
            cache = {}
            for i, ti in enumerate(t):
                dt = ti - prev
                if dt != 0.0:
                    key = round(dt, 15)
                    if key not in cache:
                        cache[key] = expm(sub * dt)
                    y = cache[key] @ y
                ys[i, idx] = y
                prev = ti
    elif method == "rk":
        def rhs(_, y):
            return L @ y
        if t[-1] == t[0]:
            ys = np.repeat(y0[None, :], t.size, axis=0)
        else:
            sol = solve_ivp(rhs, (t[0], t[-1]), y0, method="DOP853", t_eval=t,
                            rtol=rtol, atol=atol)
            if not sol.success:
                raise NumericalError(f"integrator failed: {sol.message}")
            ys = sol.y.T
    else:
        raise ValidationError(f"unknown method {method!r}")
    states = [_unpack(n, y) for y in ys]
    if check:
        for s in states:
            s.check()
    return Trajectory(t, states)


# ---------------------------------------------------------------------------
# full tensor-space oracle


def full_space_ops(n_spins: int):
    """Collective (Sx, Sy, Sz) on 2^N, basis bit 0 = up, bit 1 = down."""
    if n_spins > MAX_FULL_SPINS:
        raise ValidationError(f"full-space oracle is limited to N <= {MAX_FULL_SPINS}")
    sx = np.array([[0, 1], [1, 0]], dtype=complex) / 2
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
    sz = np.array([[1, 0], [0, -1]], dtype=complex) / 2
    out = []
    for s in (sx, sy, sz):
        tot = sp.csr_matrix((2**n_spins, 2**n_spins), dtype=complex)
        for k in range(n_spins):
            op = sp.identity(1, dtype=complex, format="csr")
            for i in range(n_spins):
                op = sp.kron(op, s if i == k else sp.identity(2), format="csr")
            tot = tot + op
        out.append(tot.toarray())
    return tuple(out)


def symmetric_embedding(n_spins: int) -> np.ndarray:
    """Isometry from the Dicke basis (k down spins) into 2^N, shape (2^N, N+1)."""
    dim = 2**n_spins
    pop = np.array([bin(x).count("1") for x in range(dim)])
    V = np.zeros((dim, n_spins + 1))
    for k in range(n_spins + 1):
        V[pop == k, k] = 1.0 / math.sqrt(math.comb(n_spins, k))
    return V


def lowering_ops(n_spins: int) -> list:
    """Sparse sigma_-^k on 2^N for k = 0..N-1 (sigma_- sends up to down)."""
    lower = sp.csr_matrix(np.array([[0, 0], [1, 0]], dtype=complex))
    out = []
    for k in range(n_spins):
        op = sp.identity(1, dtype=complex, format="csr")
        for i in range(n_spins):
            op = sp.kron(op, lower if i == k else sp.identity(2, format="csr"), format="csr")
        out.append(op)
    return out


@dataclass
class FullTrajectory:
    t: np.ndarray
    states: list  # 2^N x 2^N density matrices
    n_spins: int

    def observables(self):
        ops = full_space_ops(self.n_spins)
        sz = ops[2]
        rows = []
        for t, r in zip(self.t, self.states):
            rep = qfi_mixed(0.5 * (r + r.conj().T), generators=ops)
            n = rep.direction
            rows.append((float(t), float(np.trace(r).real), rep.qfi, float(n[0]), float(n[1]),
                         float(n[2]), float(np.trace(r @ sz).real)))
        return rows


def lindblad_evolve_full(initial, hamiltonian, params: LindbladParams, t_grid, *,
                         rtol: float = 1e-11, atol: float = 1e-13) -> FullTrajectory:
    """Brute-force integration on the 2^N space with explicit sigma_-^k jumps."""
    t = _check_grid(t_grid)
    if isinstance(initial, DickeVector):
        n = initial.ensemble.n_spins
        if n > MAX_FULL_SPINS:
            raise ValidationError(f"full-space oracle is limited to N <= {MAX_FULL_SPINS}")
        psi = symmetric_embedding(n) @ initial.amplitudes
        rho0 = np.outer(psi, psi.conj())
    else:
        rho0 = np.asarray(initial, dtype=complex)
        n = int(round(math.log2(rho0.shape[0])))
        if 2**n != rho0.shape[0] or n > MAX_FULL_SPINS:
            raise ValidationError(f"full-space oracle needs a 2^N matrix with N <= {MAX_FULL_SPINS}")
    hamiltonian = _check_pi_hamiltonian(hamiltonian)
    jx, jy, jz = full_space_ops(n)
    H = np.asarray(hamiltonian(jx, jy, jz), dtype=complex)
    dim = 2**n
    z = np.real(np.diag(jz))
    n_up = n / 2 + z  # sum_k sigma_+ sigma_- is diagonal
    g, G = params.gamma, params.Gamma_deph
    # row-major vec(A rho B) = (A kron B^T) vec(rho); sigma_+^T = sigma_-
    jump = sum(sp.kron(op, op, format="csr") for op in lowering_ops(n)) if g > 0 else None
    h_diag = np.allclose(H, np.diag(np.diag(H)))
    hd = np.diag(H) if h_diag else np.zeros(dim)
    # every term except the off-diagonal H part and the jumps is elementwise
    rates = (-1j * (hd[:, None] - hd[None, :])
             + G * (2 * z[:, None] * z[None, :] - (z**2)[:, None] - (z**2)[None, :])
             - g * (n_up[:, None] + n_up[None, :])).ravel()

    def rhs(_, y):
        out = rates * y
        if not h_diag:
            rho = y.reshape(dim, dim)
            out += (-1j * (H @ rho - rho @ H)).ravel()
        if jump is not None:
            out += 2 * g * (jump @ y)
        return out

    y0 = rho0.ravel()
    if t[-1] == t[0]:
        ys = np.repeat(y0[None, :], t.size, axis=0)
    else:
        sol = solve_ivp(rhs, (t[0], t[-1]), y0, method="DOP853", t_eval=t, rtol=rtol, atol=atol)
        if not sol.success:
            raise NumericalError(f"integrator failed: {sol.message}")
        ys = sol.y.T
    return FullTrajectory(t, [y.reshape(dim, dim) for y in ys], n)


# ---------------------------------------------------------------------------


SCHEMES = {"cubic": CUBIC, "oat": OAT}


def damped_qfi_sweep(scheme: str, n_spins: int, params: LindbladParams, t_grid, **kw):
    """QFI trajectory of |pi/2, 0> under the damped cubic or one-axis-twisting model.

    Returns rows (t, trace, qfi, n_x, n_y, n_z, mean_sz).
    """
    if scheme not in SCHEMES:
        raise ValidationError(f"scheme must be one of {sorted(SCHEMES)}")
    ens = _as_ensemble(n_spins)
    traj = lindblad_evolve_pi(css_state(ens), SCHEMES[scheme], params, t_grid, **kw)
    return traj.observables()
