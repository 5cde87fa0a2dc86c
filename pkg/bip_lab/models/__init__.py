from .space import FiniteMetricMeasureSpace, RealFunction, ValidationReport, Violation
from .measure import Coupling, ProbMeasure, TransportResult
from .curve import DiscreteCurve, TestPlan
from .interpolation import DyadicGeodesic, LevelTrace, ProfileFunction
from .curvature import CurvatureParams, ExtendedReal, is_infinite
from .sobolev import GradientCandidate, PlanFamily, PlanTag
from .report import CheckReport, CheckResult
from .experiment import ExperimentConfig
from .pmgh import EmbeddedSpace, TransferResult

__all__ = [
    'FiniteMetricMeasureSpace', 'RealFunction', 'ValidationReport', 'Violation',
    'Coupling', 'ProbMeasure', 'TransportResult',
    'DiscreteCurve', 'TestPlan',
    'DyadicGeodesic', 'LevelTrace', 'ProfileFunction',
    'CurvatureParams', 'ExtendedReal', 'is_infinite',
    'GradientCandidate', 'PlanFamily', 'PlanTag',
    'CheckReport', 'CheckResult',
    'ExperimentConfig',
    'EmbeddedSpace', 'TransferResult',
]
