"""
Manifests describing the resources of a web page: their sizes, priorities,
discovery dependencies and their role for page rendering.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import collections
import csv
import glob
import json
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, TextIO

import numpy as np

from .common import CycleError, Error, ManifestError, ProfileError, mapped_repr
from .priority import (
    DEFAULT_URGENCY,
    ChromiumPriority,
    PriorityParams,
    Urgency,
    chromium_priority_from,
    map_chromium_priority,
)

#: Version of the manifest JSON format this module reads and writes.
MANIFEST_SCHEMA_VERSION = 1

#: Folder containing the manifests that come with epsched.
BUNDLED_MANIFESTS_FOLDER = os.path.join(os.path.dirname(__file__), "manifests")

#: Glob pattern for the bundled manifests modeled after real web sites.
SITE_MANIFEST_PATTERN = "inspired_by_*.json"

_SCRIPT_PROBABILITY = 0.25
_TOP_LEVEL_KEYS = {"schema_version", "site_name", "resources"}
_RESOURCE_KEYS = {"id", "size_bytes", "chromium_priority", "urgency", "incremental", "discovered_after", "role_flags"}

_log = logging.getLogger("epsched")


class RoleFlag(Enum):
    """
    Role of a resource for rendering a page, used to derive proxy QoE metrics.
    """

    #: needed before anything can be painted
    render_critical = "render_critical"
    #: the largest element painted above the fold
    lcp_candidate = "lcp_candidate"
    #: a script needed for the page to become interactive
    script = "script"


@dataclass(frozen=True)
class Resource:
    """
    A single resource of a web page.

    The effective :py:attr:`urgency` is the explicit urgency if any,
    otherwise the urgency mapped from the Chromium priority, otherwise the
    EPS default.
    """

    resource_id: str
    size_bytes: int
    chromium_priority: Optional[ChromiumPriority] = None
    explicit_urgency: Optional[Urgency] = None
    incremental: bool = True
    discovered_after: Optional[str] = None
    role_flags: FrozenSet[RoleFlag] = field(default_factory=frozenset)

    def __post_init__(self):
        if not isinstance(self.resource_id, str) or self.resource_id == "":
            raise ManifestError(f"resource id must be a non empty text: {self.resource_id!r}")
        if isinstance(self.size_bytes, bool) or not isinstance(self.size_bytes, int) or self.size_bytes <= 0:
            raise ManifestError(f"resource {self.resource_id}: size must be a positive integer: {self.size_bytes!r}")
        object.__setattr__(self, "role_flags", frozenset(self.role_flags))

    @property
    def urgency(self) -> Urgency:
        if self.explicit_urgency is not None:
            result = self.explicit_urgency
        elif self.chromium_priority is not None:
            result = map_chromium_priority(self.chromium_priority)
        else:
            result = DEFAULT_URGENCY
        return result

    @property
    def priority(self) -> PriorityParams:
        return PriorityParams(self.urgency, self.incremental)

    def has_role(self, role_flag: RoleFlag) -> bool:
        return role_flag in self.role_flags


class ResourceManifest:
    """
    Validated, immutable set of resources of a web page in the order they
    are requested.
    """

    def __init__(self, site_name: str, resources: Iterable[Resource], source: Optional[str] = None):
        self._site_name = site_name
        self._resources = tuple(resources)
        self._resource_id_to_index_map: Dict[str, int] = {}
        self._validate(source)
        self._resource_id_to_dependents_map: Dict[str, List[Resource]] = collections.defaultdict(list)
        for resource in self._resources:
            if resource.discovered_after is not None:
                self._resource_id_to_dependents_map[resource.discovered_after].append(resource)

    def _validate(self, source: Optional[str]):
        if not isinstance(self._site_name, str) or self._site_name.strip() == "":
            raise ManifestError("site name must be a non empty text", "site_name", source)
        if len(self._resources) == 0:
            raise ManifestError("manifest must contain at least one resource", "resources", source)
        for index, resource in enumerate(self._resources):
            if resource.resource_id in self._resource_id_to_index_map:
                raise ManifestError(f"duplicate resource id: {resource.resource_id}", f"resources[{index}].id", source)
            self._resource_id_to_index_map[resource.resource_id] = index
        for index, resource in enumerate(self._resources):
            if (
                resource.discovered_after is not None
                and resource.discovered_after not in self._resource_id_to_index_map
            ):
                raise ManifestError(
                    f"unknown trigger resource: {resource.discovered_after}",
                    f"resources[{index}].discovered_after",
                    source,
                )
        self._check_acyclic(source)
        if self._resources[0].discovered_after is not None:
            raise ManifestError("first resource must not be discovered after another", "resources[0]", source)
        lcp_candidate_ids = [
            resource.resource_id for resource in self._resources if resource.has_role(RoleFlag.lcp_candidate)
        ]
        if len(lcp_candidate_ids) >= 2:
            raise ManifestError(f"at most one resource can be an LCP candidate: {lcp_candidate_ids}", None, source)

    def _check_acyclic(self, source: Optional[str]):
        resource_id_to_trigger_id_map = {
            resource.resource_id: resource.discovered_after for resource in self._resources
        }
        acyclic_ids = set()
        for resource in self._resources:
            path = []
            resource_id = resource.resource_id
            while resource_id is not None and resource_id not in acyclic_ids:
                if resource_id in path:
                    cycle_text = " -> ".join([*path[path.index(resource_id) :], resource_id])
                    prefix = f"{source}: " if source is not None else ""
                    raise CycleError(f"{prefix}discovery cycle: {cycle_text}")
                path.append(resource_id)
                resource_id = resource_id_to_trigger_id_map[resource_id]
            acyclic_ids.update(path)

    @property
    def site_name(self) -> str:
        return self._site_name

    @property
    def resources(self) -> Sequence[Resource]:
        """resources in request order"""
        return self._resources

    @property
    def total_bytes(self) -> int:
        return sum(resource.size_bytes for resource in self._resources)

    def resource(self, resource_id: str) -> Resource:
        return self._resources[self._resource_id_to_index_map[resource_id]]

    def arrival_index(self, resource_id: str) -> int:
        return self._resource_id_to_index_map[resource_id]

    def roots(self) -> List[Resource]:
        """resources requested right away because they do not need to be discovered"""
        return [resource for resource in self._resources if resource.discovered_after is None]

    def dependents(self, resource_id: str) -> List[Resource]:
        """resources discovered once ``resource_id`` is complete, in request order"""
        return list(self._resource_id_to_dependents_map.get(resource_id, []))

    def urgency_histogram(self) -> Dict[int, int]:
        level_to_count_map = collections.Counter(resource.urgency.level for resource in self._resources)
        return dict(sorted(level_to_count_map.items()))

    def role_flag_counts(self) -> Dict[RoleFlag, int]:
        return {
            role_flag: sum(1 for resource in self._resources if resource.has_role(role_flag)) for role_flag in RoleFlag
        }

    def __eq__(self, other):
        return (
            isinstance(other, ResourceManifest)
            and self.site_name == other.site_name
            and self.resources == other.resources
        )

    def __hash__(self):
        return hash((self.site_name, self.resources))

    def __repr__(self):
        return mapped_repr(
            self,
            {
                "site_name": repr(self.site_name),
                "resource_count": len(self.resources),
                "total_bytes": self.total_bytes,
            },
        )


def _checked_resource(resource_map: Any, index: int, source: Optional[str]) -> Resource:
    path = f"resources[{index}]"
    if not isinstance(resource_map, dict):
        raise ManifestError("resource must be an object", path, source)
    unknown_keys = sorted(set(resource_map.keys()) - _RESOURCE_KEYS)
    if len(unknown_keys) >= 1:
        raise ManifestError(f"unknown fields: {', '.join(unknown_keys)}", path, source)

    resource_id = resource_map.get("id")
    if not isinstance(resource_id, str) or resource_id.strip() == "":
        raise ManifestError(f"id must be a non empty text: {resource_id!r}", f"{path}.id", source)

    size_bytes = resource_map.get("size_bytes")
    if isinstance(size_bytes, bool) or not isinstance(size_bytes, int) or size_bytes <= 0:
        raise ManifestError(f"size_bytes must be a positive integer: {size_bytes!r}", f"{path}.size_bytes", source)

    chromium_priority = None
    chromium_priority_value = resource_map.get("chromium_priority")
    if chromium_priority_value is not None:
        try:
            chromium_priority = chromium_priority_from(chromium_priority_value)
        except Error as error:
            raise ManifestError(str(error), f"{path}.chromium_priority", source) from error

    explicit_urgency = None
    urgency_value = resource_map.get("urgency")
    if urgency_value is not None:
        try:
            explicit_urgency = Urgency(urgency_value)
        except Error as error:
            raise ManifestError(str(error), f"{path}.urgency", source) from error

    incremental = resource_map.get("incremental", True)
    if not isinstance(incremental, bool):
        raise ManifestError(f"incremental must be true or false: {incremental!r}", f"{path}.incremental", source)

    discovered_after = resource_map.get("discovered_after")
    if discovered_after is not None and not isinstance(discovered_after, str):
        raise ManifestError(
            f"discovered_after must be a resource id: {discovered_after!r}", f"{path}.discovered_after", source
        )

    role_flag_values = resource_map.get("role_flags", [])
    if not isinstance(role_flag_values, list):
        raise ManifestError("role_flags must be a list", f"{path}.role_flags", source)
    role_flags = set()
    for role_flag_index, role_flag_value in enumerate(role_flag_values):
        try:
            role_flags.add(RoleFlag(role_flag_value))
        except ValueError:
            valid_names = ", ".join(role_flag.value for role_flag in RoleFlag)
            raise ManifestError(
                f"role flag is {role_flag_value!r} but must be one of: {valid_names}",
                f"{path}.role_flags[{role_flag_index}]",
                source,
            ) from None

    return Resource(
        resource_id=resource_id,
        size_bytes=size_bytes,
        chromium_priority=chromium_priority,
        explicit_urgency=explicit_urgency,
        incremental=incremental,
        discovered_after=discovered_after,
        role_flags=frozenset(role_flags),
    )


def manifest_from_json_map(json_map: Any, source: Optional[str] = None) -> ResourceManifest:
    """
    Validated :py:class:`ResourceManifest` from already parsed JSON data.

    :param source: name to prefix error messages with, typically the path
      of the manifest file
    """
    if not isinstance(json_map, dict):
        raise ManifestError("manifest must be a JSON object", None, source)
    unknown_keys = sorted(set(json_map.keys()) - _TOP_LEVEL_KEYS)
    if len(unknown_keys) >= 1:
        raise ManifestError(f"unknown fields: {', '.join(unknown_keys)}", None, source)
    schema_version = json_map.get("schema_version")
    if schema_version != MANIFEST_SCHEMA_VERSION:
        raise ManifestError(
            f"schema_version is {schema_version!r} but must be {MANIFEST_SCHEMA_VERSION}", "schema_version", source
        )
    site_name = json_map.get("site_name")
    if not isinstance(site_name, str):
        raise ManifestError(f"site_name must be a text: {site_name!r}", "site_name", source)
    resource_maps = json_map.get("resources")
    if not isinstance(resource_maps, list):
        raise ManifestError("resources must be a list", "resources", source)
    resources = [_checked_resource(resource_map, index, source) for index, resource_map in enumerate(resource_maps)]
    return ResourceManifest(site_name, resources, source)


def load_manifest(manifest_path: str) -> ResourceManifest:
    """
    Read and validate the JSON manifest stored in ``manifest_path``.
    """
    try:
        with open(manifest_path, encoding="utf-8") as manifest_file:
            json_map = json.load(manifest_file)
    except json.JSONDecodeError as error:
        raise ManifestError(f"cannot parse JSON: {error}", None, manifest_path) from error
    except (OSError, RecursionError, UnicodeError) as error:
        raise ManifestError(f"cannot read manifest: {error}", None, manifest_path) from error
    result = manifest_from_json_map(json_map, manifest_path)
    _log.info("%s: loaded %d resources of %s", manifest_path, len(result.resources), result.site_name)
    return result


def manifest_to_json_map(manifest: ResourceManifest) -> Dict[str, Any]:
    resource_maps = []
    for resource in manifest.resources:
        resource_map: Dict[str, Any] = {"id": resource.resource_id, "size_bytes": resource.size_bytes}
        if resource.chromium_priority is not None:
            resource_map["chromium_priority"] = int(resource.chromium_priority)
        if resource.explicit_urgency is not None:
            resource_map["urgency"] = resource.explicit_urgency.level
        resource_map["incremental"] = resource.incremental
        if resource.discovered_after is not None:
            resource_map["discovered_after"] = resource.discovered_after
        if len(resource.role_flags) >= 1:
            resource_map["role_flags"] = sorted(role_flag.value for role_flag in resource.role_flags)
        resource_maps.append(resource_map)
    return {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "site_name": manifest.site_name,
        "resources": resource_maps,
    }


def write_manifest(manifest: ResourceManifest, target_stream: TextIO) -> None:
    json.dump(manifest_to_json_map(manifest), target_stream, indent=2)
    target_stream.write("\n")


def save_manifest(manifest: ResourceManifest, manifest_path: str) -> None:
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as manifest_file:
        write_manifest(manifest, manifest_file)


def write_manifest_summary_csv(manifest: ResourceManifest, target_stream: TextIO) -> None:
    """
    Write one CSV row per resource with its id, size, effective urgency and
    flags to ``target_stream``.
    """
    csv_writer = csv.writer(target_stream, lineterminator="\n")
    csv_writer.writerow(["id", "size_bytes", "urgency", "incremental", "discovered_after", "role_flags"])
    for resource in manifest.resources:
        csv_writer.writerow(
            [
                resource.resource_id,
                resource.size_bytes,
                resource.urgency.level,
                str(resource.incremental).lower(),
                resource.discovered_after or "",
                ";".join(sorted(role_flag.value for role_flag in resource.role_flags)),
            ]
        )


def bundled_manifest_paths(pattern: str = SITE_MANIFEST_PATTERN) -> List[str]:
    """
    Paths of the bundled manifests matching ``pattern``, sorted by name.
    """
    return sorted(glob.glob(os.path.join(BUNDLED_MANIFESTS_FOLDER, pattern)))


def bundled_manifest_path(name: str) -> str:
    """
    Path of the bundled manifest ``name``, for example "late_lcp".
    """
    return os.path.join(BUNDLED_MANIFESTS_FOLDER, f"{name}.json")


@dataclass(frozen=True)
class SyntheticProfile:
    """
    Shape of a synthetic page for :py:func:`generate_synthetic`.
    """

    resource_count: int
    total_bytes: int
    urgency_mix: Mapping[int, float]
    depth: int = 1
    site_name: str = "synthetic"


def _checked_profile(profile: SyntheticProfile):
    if profile.resource_count < 1:
        raise ProfileError(f"resource count is {profile.resource_count} but must be at least 1")
    if profile.depth < 1:
        raise ProfileError(f"depth is {profile.depth} but must be at least 1")
    if profile.depth > profile.resource_count:
        raise ProfileError(
            f"depth is {profile.depth} but must not exceed the resource count {profile.resource_count}"
        )
    if profile.resource_count > profile.total_bytes:
        raise ProfileError(
            f"total bytes {profile.total_bytes} are not enough for {profile.resource_count} resources of 1 byte or more"
        )
    if len(profile.urgency_mix) == 0:
        raise ProfileError("urgency mix must contain at least one urgency level")
    for level, fraction in profile.urgency_mix.items():
        try:
            Urgency(level)
        except Error as error:
            raise ProfileError(f"urgency mix: {error}") from error
        if not fraction >= 0:
            raise ProfileError(f"fraction for urgency {level} is {fraction} but must be at least 0")
    fraction_sum = math.fsum(profile.urgency_mix.values())
    if abs(fraction_sum - 1.0) > 1e-9:
        raise ProfileError(f"fractions of urgency mix must sum up to 1 but sum up to {fraction_sum}")


def _urgency_counts(urgency_mix: Mapping[int, float], resource_count: int) -> Dict[int, int]:
    # Largest remainder method; ties go to the more urgent level.
    levels = sorted(urgency_mix.keys())
    exact_counts = {level: urgency_mix[level] * resource_count for level in levels}
    result = {level: math.floor(exact_counts[level] + 1e-9) for level in levels}
    missing_count = resource_count - sum(result.values())
    levels_by_remainder = sorted(levels, key=lambda level: (-(exact_counts[level] - result[level]), level))
    for level in levels_by_remainder[:missing_count]:
        result[level] += 1
    return result


def _synthetic_sizes(random_generator: np.random.Generator, resource_count: int, total_bytes: int) -> List[int]:
    weights = random_generator.lognormal(mean=0.0, sigma=1.0, size=resource_count)
    spare_bytes = total_bytes - resource_count
    exact_extras = weights / weights.sum() * spare_bytes
    extras = np.floor(exact_extras).astype(np.int64)
    missing_bytes = spare_bytes - int(extras.sum())
    order = np.argsort(-(exact_extras - extras), kind="stable")
    for position in range(missing_bytes):
        extras[order[position % resource_count]] += 1
    return [1 + int(extra) for extra in extras]


def generate_synthetic(profile: SyntheticProfile, seed: int) -> ResourceManifest:
    """
    Deterministic synthetic manifest shaped according to ``profile``.

    The resulting manifest has exactly the requested number of resources
    and total size, an urgency histogram rounded from the mix with the
    largest remainder method and discovery of exactly the requested depth.
    The first resource starts the deepest discovery chain. Other resources
    drawn for the top level are requested right away too, so the discovery
    graph is a forest rather than a single tree, and with depth 1 every
    resource is a root.
    """
    _checked_profile(profile)
    random_generator = np.random.default_rng(seed)
    count = profile.resource_count

    urgency_counts = _urgency_counts(profile.urgency_mix, count)
    levels = [level for level, level_count in urgency_counts.items() for _ in range(level_count)]
    levels = [int(level) for level in random_generator.permutation(levels)]
    sizes = _synthetic_sizes(random_generator, count, profile.total_bytes)
    resource_ids = [f"resource-{index:03d}" for index in range(count)]

    # The first resources form a chain reaching the requested depth, all others attach randomly below it.
    tree_levels = [min(index, profile.depth - 1) for index in range(count)]
    for index in range(profile.depth, count):
        tree_levels[index] = int(random_generator.integers(0, profile.depth))
    triggers: List[Optional[str]] = [None] * count
    for index in range(1, count):
        tree_level = tree_levels[index]
        if tree_level >= 1:
            candidate_indices = [
                candidate_index for candidate_index in range(index) if tree_levels[candidate_index] == tree_level - 1
            ]
            triggers[index] = resource_ids[int(random_generator.choice(candidate_indices))]

    is_scripts = [False] + [bool(random_generator.random() < _SCRIPT_PROBABILITY) for _ in range(1, count)]
    lcp_candidate_index = None
    non_script_indices = [index for index in range(1, count) if not is_scripts[index]]
    if len(non_script_indices) >= 1:
        most_urgent_level = min(levels[index] for index in non_script_indices)
        lcp_candidate_index = max(
            (index for index in non_script_indices if levels[index] == most_urgent_level),
            key=lambda index: (sizes[index], -index),
        )

    resources = []
    for index in range(count):
        role_flags = set()
        if index == 0:
            role_flags.add(RoleFlag.render_critical)
        if is_scripts[index]:
            role_flags.add(RoleFlag.script)
        if index == lcp_candidate_index:
            role_flags.add(RoleFlag.lcp_candidate)
        resources.append(
            Resource(
                resource_id=resource_ids[index],
                size_bytes=sizes[index],
                explicit_urgency=Urgency(levels[index]),
                discovered_after=triggers[index],
                role_flags=frozenset(role_flags),
            )
        )
    return ResourceManifest(profile.site_name, resources)
