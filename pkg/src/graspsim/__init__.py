"""Synthetic multi-fingered precision-grasp datasets from meshed objects.

The package enumerates gripper poses around an object, evaluates them with
a kinematic three-finger hand and a force-closure test, renders RGB-D and
mask images from a camera behind the palm, filters and splits the results,
and writes them as raw-tensor shards.
"""
from .candidates import RotationGrid, build_candidate_db, candidate_pose, enumerate_grid
from .config import PipelineConfig, load_config
from .grasping import camera_pose, evaluate_candidate, force_closure, prepare_object
from .hand import HandModel, close_fingers, fingertip_fk, solve_wrist_ik
from .mesh import TriMesh, bounding_box, is_watertight, load_obj, mass_properties, parse_obj
from .pipeline import plan_jobs, run_pipeline
from .render import Camera, decode_depth, render
from .transforms import Transform, compose, decode_frame, encode_frame, euler_xyz, invert

__version__ = "0.1.0"

__all__ = [
    "Camera", "HandModel", "PipelineConfig", "RotationGrid", "Transform", "TriMesh",
    "bounding_box", "build_candidate_db", "camera_pose", "candidate_pose", "close_fingers",
    "compose", "decode_depth", "decode_frame", "encode_frame", "enumerate_grid", "euler_xyz",
    "evaluate_candidate", "fingertip_fk", "force_closure", "invert", "is_watertight",
    "load_config", "load_obj", "mass_properties", "parse_obj", "plan_jobs", "prepare_object",
    "render", "run_pipeline", "solve_wrist_ik",
]
