"""Cubic collective-spin dynamics: Dicke-basis evolution, QFI, cat states, damping and cavity mapping."""

__version__ = "0.1.0"

from .dicke import (
    CollectiveOperator,
    CssParams,
    DickeVector,
    NumericalError,
    SpinEnsemble,
    ValidationError,
    build_collective_ops,
    css_state,
    dicke_state,
    expectation,
    ghz_state,
)
from .evolution import (
    CUBIC,
    OAT,
    PulseSequence,
    ZDiagonalHamiltonian,
    evolve_hermitian,
    evolve_zdiag,
    rotate,
    synthesize_cubic,
    twist,
)
from .qfi import analytic_weak_qfi, cramer_rao, peak_even_max_qfi, qfi_mixed, qfi_pure
from .cat import cat_state, decompose, ghz_components, ghz_projection_qfi, husimi, sx_parity_probe
from .open_dynamics import DickeBlockState, LindbladParams, lindblad_evolve_full, lindblad_evolve_pi
from .hybrid import CqaParams, cqa_trajectory, ghz_fidelity, optimize_ghz
from .cavity import CavityParams, effective_coupling, phase_expansion_error

__all__ = [name for name in dir() if not name.startswith("_")]
