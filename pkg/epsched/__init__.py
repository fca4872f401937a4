"""
Epsched schedules HTTP/3 streams with bandwidth shares derived from their
extensible priorities and compares scheduling strategies on simulated page
loads.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
from importlib.metadata import version

from .common import Error, OptionError
from .manifest import Resource, ResourceManifest, RoleFlag, SyntheticProfile, generate_synthetic, load_manifest
from .metrics import ComparisonCell, QoeReport, derive_report, improvement_table
from .netsim import DeliveryTrace, LinkParams, replay_check, simulate
from .priority import ChromiumPriority, PriorityParams, Urgency, map_chromium_priority, parse_priority_field
from .scheduler import Allocation, Quantum, StreamCompleted, StreamOpened, StreamScheduler, StreamState, Strategy
from .weights import RequestSet, WeightTable, compute_weight_table

__version__ = version(__name__)

__all__ = [
    "__version__",
    "compute_weight_table",
    "derive_report",
    "generate_synthetic",
    "improvement_table",
    "load_manifest",
    "map_chromium_priority",
    "parse_priority_field",
    "replay_check",
    "simulate",
    "Allocation",
    "ChromiumPriority",
    "ComparisonCell",
    "DeliveryTrace",
    "Error",
    "LinkParams",
    "OptionError",
    "PriorityParams",
    "QoeReport",
    "Quantum",
    "RequestSet",
    "Resource",
    "ResourceManifest",
    "RoleFlag",
    "StreamCompleted",
    "StreamOpened",
    "StreamScheduler",
    "StreamState",
    "Strategy",
    "SyntheticProfile",
    "Urgency",
    "WeightTable",
]
