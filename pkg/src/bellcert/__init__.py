"""Self-testing of a Bell-pair source with three-angle qubit measurements.

Given any finite-dimensional pure bipartite state and local projective
measurements at angles -pi/8, 0, pi/8, check the 36 outcome probabilities
against the ideal Bell-state correlations and, when they match, construct
local isometries that map the device onto the ideal one.
"""
__version__ = "0.1.0"

from .devices import DeviceRealization, ProjectorFamily, PovmFamily, embed_ideal, naimark_dilate, perturb, scramble, validate_device
from .engine import Refusal, SelfTestCertificate, Tolerances, bb84_collapse_check, self_test
from .ideal import ANGLES, SETTINGS, Angle, Setting
from .statistics import compare_tables, probability_table

__all__ = [
    "ANGLES", "SETTINGS", "Angle", "Setting",
    "DeviceRealization", "ProjectorFamily", "PovmFamily",
    "embed_ideal", "scramble", "perturb", "naimark_dilate", "validate_device",
    "probability_table", "compare_tables",
    "Tolerances", "SelfTestCertificate", "Refusal", "self_test", "bb84_collapse_check",
]
