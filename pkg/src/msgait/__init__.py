"""Gait assessment from skeletal joint recordings.

Segments gait cycles from ankle motion, computes time-distance and joint
angle indices, compares joint-angle patterns with dynamic time warping and
summarises cohorts with reliability, correlation and paired tests.
"""
__version__ = "0.1.0"

from .dtw import brute_force_dtw, dtw, dtw_distance, mean_dtw_control, mean_dtw_patient
from .gait_cycle import GaitCycle, GaitEvents, detect_gait_events, extract_cycle
from .kinematics import GaitIndexSet, hip_angle_series, knee_angle_series, time_distance_indices
from .skeletal_io import SubjectRecord, TrialRecording, load_manifest, load_trial
from .synthesis import GaitParams, synthesize_trial

__all__ = [
    "GaitCycle", "GaitEvents", "GaitIndexSet", "GaitParams", "SubjectRecord", "TrialRecording",
    "brute_force_dtw", "detect_gait_events", "dtw", "dtw_distance", "extract_cycle",
    "hip_angle_series", "knee_angle_series", "load_manifest", "load_trial",
    "mean_dtw_control", "mean_dtw_patient", "synthesize_trial", "time_distance_indices",
]
