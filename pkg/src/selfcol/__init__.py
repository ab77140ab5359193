"""Self-intersection analysis and penetration-volume loss for triangle meshes."""

from .closure import ClosureResult, close_garment, select_loops
from .diagnostics import Diagnostic
from .energy import BodySDF, Capsule, ClothModel, EnergyParams, HalfSpace, SimState, Sphere
from .gia import IntersectionPath, PenetrationRegion, extract_regions
from .mesh import BoundaryLoop, MeshError, TriMesh, find_boundary_loops, load_obj, save_obj, surface_area
from .pipeline import Analysis, SelfCollisionPipeline, penetration_volume
from .proximity import SelfCollisionEdgeSet, build_self_collision_edges
from .selfx import IntersectionRecord, RemeshResult, detect_self_intersections, remesh_on_intersections
from .sim import Scene, SimConfig, Simulator, WindSpec, run_sequence
from .volume import signed_volume

__version__ = "0.1.0"

__all__ = [
    "Analysis",
    "BodySDF",
    "BoundaryLoop",
    "Capsule",
    "ClosureResult",
    "ClothModel",
    "Diagnostic",
    "EnergyParams",
    "HalfSpace",
    "IntersectionPath",
    "IntersectionRecord",
    "MeshError",
    "PenetrationRegion",
    "RemeshResult",
    "Scene",
    "SelfCollisionEdgeSet",
    "SelfCollisionPipeline",
    "SimConfig",
    "SimState",
    "Simulator",
    "Sphere",
    "TriMesh",
    "WindSpec",
    "build_self_collision_edges",
    "close_garment",
    "detect_self_intersections",
    "extract_regions",
    "find_boundary_loops",
    "load_obj",
    "penetration_volume",
    "remesh_on_intersections",
    "run_sequence",
    "save_obj",
    "select_loops",
    "signed_volume",
    "surface_area",
    "__version__",
]
