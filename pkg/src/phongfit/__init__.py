"""Model fitting of triangulated surfaces with interpolated normal fields."""

from .mesh import (
    BOUNDARY,
    ControlMesh,
    MeshError,
    NonManifoldEdgeError,
    SurfaceCoordinate,
    WalkResult,
    build_adjacency,
    load_mesh_text,
    remap_across_edge,
    save_mesh_text,
    walk,
    walk_batch,
)
from .surfaces import (
    DegenerateFaceError,
    DegenerateNormalError,
    SurfaceEvaluation,
    eval_phong,
    eval_phong_batch,
    eval_trimesh,
    eval_trimesh_batch,
    loop_limit_mesh,
    loop_limit_stencil,
)
from .kinematics import (
    Joint,
    PosedControlData,
    RigidModel,
    RigidPose,
    SkinnedFitModel,
    SkinnedModel,
    TranslationModel,
    load_skinned_json,
    normal_path_divergence,
    pose_lbs,
    pose_rigid,
    rotation_matrix,
    save_skinned_json,
)
from .energy import FitConfig, Observation, Observations, ResidualSystem, assemble, energy_only
from .solvers import (
    CorrespondenceSet,
    FitReport,
    FitState,
    SolveAbort,
    closest_point,
    closest_point_batch,
    icp_step,
    lifted_step,
    run_fit,
)

__version__ = "0.1.0"
