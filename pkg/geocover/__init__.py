from .config import get_settings
from .models.schemas import GeodesicCover, Isometry, PointSet, Surface, UhpPoint


__version__ = "0.3.0"
__author__ = "geocover developers"
__description__ = "Geodesic covers, Fuchsian groups and distinct distances on hyperbolic surfaces"


__all__ = [
    "get_settings",
    "GeodesicCover",
    "Isometry",
    "PointSet",
    "Surface",
    "UhpPoint",
]
