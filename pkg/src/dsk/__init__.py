"""Discretized sumsets, dyadic entropy, uniformization and structure checks."""
__version__ = "0.1.0"

from .errors import GuaranteeViolation, TheoremCheckFailed
from .grid import DyadicCube, GridSet, NonUniform, UniformProfile, is_uniform
from .measures import GridMeasure, convolve, entropy, lq_norm
from .sumsets import additive_energy, iterated_sumset, pr_check, scale_energy, sumset
from .uniformize import UniformSubset, center_by_translation, collapse_branching, uniform_subset
from .geometry import AffineFlat, fit_flat, porosity_check
from .analysis import StructureAnalyzer, analyze_structure, check_theorem1_conclusions, check_theorem2
from .fup import fup_norm
from .generators import CorpusSpec, default_corpus, generate

__all__ = [
    "GuaranteeViolation",
    "TheoremCheckFailed",
    "DyadicCube",
    "GridSet",
    "NonUniform",
    "UniformProfile",
    "is_uniform",
    "GridMeasure",
    "convolve",
    "entropy",
    "lq_norm",
    "additive_energy",
    "iterated_sumset",
    "pr_check",
    "scale_energy",
    "sumset",
    "UniformSubset",
    "center_by_translation",
    "collapse_branching",
    "uniform_subset",
    "AffineFlat",
    "fit_flat",
    "porosity_check",
    "StructureAnalyzer",
    "analyze_structure",
    "check_theorem1_conclusions",
    "check_theorem2",
    "fup_norm",
    "CorpusSpec",
    "default_corpus",
    "generate",
]
