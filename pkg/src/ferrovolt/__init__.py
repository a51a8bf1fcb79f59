"""Multi-region cell-centred finite volume magnetostatics."""

from ferrovolt.field import MU0, chi_from_mu_r, magnetization_from_B
from ferrovolt.mesh import MultiRegionMesh, Region, load_mesh

__all__ = [
    "MU0",
    "MultiRegionMesh",
    "Region",
    "chi_from_mu_r",
    "load_mesh",
    "magnetization_from_B",
]

__version__ = "0.1.0"
