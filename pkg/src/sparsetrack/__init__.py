"""Sparse-representation particle-filter video object tracker.

Core pieces: an l1-regularized appearance model over shifted target patches
(`sparse`), affine motion states and rotated-quad geometry (`geometry`),
the particle-filter loop with detector fusion (`tracker`), file formats
(`dataio`), metrics (`metrics`), and a synthetic-sequence oracle (`synth`).
"""

from .dataio import Detection, RunConfig, Sequence, load_config, load_sequence
from .geometry import LegacyStateVector, QuadBB, StateVector
from .imaging import BinaryMask, Frame, PatchVector
from .sparse import Coefficients, Dictionary, SolverConfig
from .tracker import FrameResult, Particle, Tracker

__all__ = [
    "BinaryMask", "Coefficients", "Detection", "Dictionary", "Frame",
    "FrameResult", "LegacyStateVector", "Particle", "PatchVector", "QuadBB",
    "RunConfig", "Sequence", "SolverConfig", "StateVector", "Tracker",
    "load_config", "load_sequence",
]
