from .space_service import space_service
from .transport_service import transport_service
from .curve_service import curve_service
from .interpolation_service import interpolation_service
from .curvature_service import curvature_service
from .sobolev_service import sobolev_service
from .pmgh_service import pmgh_service
from .report_service import report_service

__all__ = [
    'space_service',
    'transport_service',
    'curve_service',
    'interpolation_service',
    'curvature_service',
    'sobolev_service',
    'pmgh_service',
    'report_service',
]
