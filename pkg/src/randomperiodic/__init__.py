"""Random periodic solutions of noisy oscillators: simulation, pullback and curve extraction."""
from __future__ import annotations

from .cocycle import ConditionViolation, CocycleSystem, CylinderPoint, LiftedPoint, SdeCocycle, flow, verify_cocycle
from .example import ExampleSystem, closed_form_rho, stationary_rho
from .integrate import SdeSpec, heun_step, integrate, tangent_integrate
from .noise import WienerPath, extend_left, extend_right, generate_path, refine, shift, zero_path
from .pullback import pullback_curve, pullback_point
from .winding import (
    ExtractionConfig,
    RandomCurve,
    WindingSystem,
    apply_H,
    build_winding_system,
    extract_curves,
    sample_fiber,
    trace_permutation,
    verify_invariance,
)
from .lyapunov import estimate_contraction, lyapunov_exponent

__version__ = "0.1.0"

__all__ = [
    "CocycleSystem", "ConditionViolation", "CylinderPoint", "ExampleSystem", "ExtractionConfig", "LiftedPoint",
    "RandomCurve", "SdeCocycle", "SdeSpec", "WienerPath", "WindingSystem", "apply_H", "build_winding_system",
    "closed_form_rho", "estimate_contraction", "extend_left", "extend_right", "extract_curves", "flow",
    "generate_path", "heun_step", "integrate", "lyapunov_exponent", "pullback_curve", "pullback_point", "refine",
    "sample_fiber", "shift", "stationary_rho", "tangent_integrate", "trace_permutation", "verify_cocycle",
    "verify_invariance", "zero_path",
]
