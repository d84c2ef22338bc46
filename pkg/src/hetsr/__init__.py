"""Heterodyne super-resolution of two spectral lines: simulation, estimation and Fisher bounds."""

__version__ = "0.1.0"

from .errors import ConvergenceError, DegenerateSignalError, QuadratureError
from .estimator import EstimateReport, SearchConfig, estimate
from .evaluation import PrecisionRecord, SweepPoint, evaluate_point, run_sweep, sweep_points
from .fisher import FisherCurve, Scheme, fisher_curve, fisher_value
from .model import SourceKind, SourceParams, hg_mode, overlap_coefficient
from .traces import GridSpec, TraceBatch, load_batch, save_batch, synthesize_batch

__all__ = [
    "ConvergenceError", "DegenerateSignalError", "QuadratureError",
    "EstimateReport", "SearchConfig", "estimate",
    "PrecisionRecord", "SweepPoint", "evaluate_point", "run_sweep", "sweep_points",
    "FisherCurve", "Scheme", "fisher_curve", "fisher_value",
    "SourceKind", "SourceParams", "hg_mode", "overlap_coefficient",
    "GridSpec", "TraceBatch", "load_batch", "save_batch", "synthesize_batch",
]
