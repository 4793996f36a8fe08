"""Decoherence of a qubit coupled to a transverse-field Ising chain driven through
its quantum critical points."""
__version__ = "0.1.0"

from .quench import (G_CRITICAL, ISING, CouplingSplit, KzScales, ModeGrid, QuenchSchedule,
                     UniversalityClass, k_m, kz_scales, scaling_exponent)
from .modes import IntegrationError, IntegratorConfig, ModeAmplitudes
from .decoherence import (DecoherenceTrace, ExactOverlap, ModeSnapshot, QubitState,
                          decoherence_integral, decoherence_integral_batched,
                          decoherence_product, run_quench)
