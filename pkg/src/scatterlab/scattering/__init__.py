"""Two-body scattering: orbits, eikonal phases, identification and wave operators."""

from scatterlab.scattering.identification import (
    Identification,
    InverseResult,
    choose_R0,
    identification_adjoint,
    identification_apply,
    identification_inverse,
    identification_matrix,
    left_inverse,
    probe_defect,
    probe_set,
)
from scatterlab.scattering.orbits import (
    OrbitSolver,
    classical_orbit,
    contraction_margin,
    orbit_inverse,
    reference_orbit,
)
from scatterlab.scattering.phase import (
    EikonalValue,
    PhaseFunction,
    PhaseTable,
    build_phase_function,
    eikonal_phase,
    good_cone_samples,
    tabulate,
)
from scatterlab.scattering.waveops import (
    ConvergenceWarning,
    Spectral,
    WaveOperatorResult,
    completeness_defect,
    cook_wave_operator,
    energy_window,
    intertwining_defect,
    modified_wave_operator,
    outgoing_projection,
)

__all__ = [
    "ConvergenceWarning", "EikonalValue", "Identification", "InverseResult", "OrbitSolver",
    "PhaseFunction", "PhaseTable", "Spectral", "WaveOperatorResult", "build_phase_function",
    "choose_R0", "classical_orbit", "completeness_defect", "contraction_margin",
    "cook_wave_operator", "eikonal_phase", "energy_window", "good_cone_samples",
    "identification_adjoint", "identification_apply", "identification_inverse",
    "identification_matrix", "intertwining_defect", "left_inverse", "modified_wave_operator",
    "orbit_inverse",
    "reference_orbit", "outgoing_projection", "probe_defect", "probe_set", "tabulate",
]
