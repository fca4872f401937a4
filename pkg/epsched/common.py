"""
Common classes and functions for epsched.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
from typing import List, Optional, Sequence, Union


class Error(Exception):
    """
    Error to indicate that something went wrong during an epsched run.
    """


class OptionError(Error):
    """
    Error to indicate that a value passed to a command line option must be
    fixed.
    """

    def __init__(self, message, source=None):
        super().__init__(message)
        self.option_error_message = (source + ": ") if source is not None else ""
        self.option_error_message += message

    def __str__(self):
        return self.option_error_message


class ParseError(Error):
    """
    Error to indicate that a text could not be parsed, for example a
    priority field value.
    """


class RangeError(Error):
    """
    Error to indicate that a numeric value is outside of its valid range.
    """


class InvariantError(Error):
    """
    Error to indicate that a value violates a precondition of a computation,
    for example a non-positive weight.
    """


class EmptySetError(Error):
    """
    Error to indicate that an operation requires at least one element.
    """


class StateError(Error):
    """
    Error to indicate that an event does not fit the current scheduler state.
    """


class NothingToSchedule(StateError):
    """
    Error to indicate that a scheduler was asked for an allocation without
    any active stream.
    """


class CycleError(Error):
    """
    Error to indicate that the discovery graph of a manifest contains a cycle.
    """


class ManifestError(Error):
    """
    Error to indicate that a manifest violates its schema or invariants.
    """

    def __init__(self, message: str, field_path: Optional[str] = None, source: Optional[str] = None):
        super().__init__(message)
        self.field_path = field_path
        self.source = source
        self.manifest_error_message = ""
        if source is not None:
            self.manifest_error_message += source + ": "
        if field_path is not None:
            self.manifest_error_message += field_path + ": "
        self.manifest_error_message += message

    def __str__(self):
        return self.manifest_error_message


class ProfileError(Error):
    """
    Error to indicate that a synthetic manifest profile cannot be realized.
    """


class InputError(Error):
    """
    Error to indicate that inputs of a computation do not belong together,
    for example a trace and the manifest of another site.
    """


def as_list(items_or_text: Union[str, Sequence[str]]) -> List[str]:
    if isinstance(items_or_text, str):
        result = [item.strip() for item in items_or_text.split(",") if item.strip() != ""]
    else:
        result = list(items_or_text)
    return result


def mapped_repr(type_, name_to_value_map) -> str:
    result = ", ".join(f"{name}={value}" for name, value in name_to_value_map.items())
    result = f"{type_.__class__.__name__}({result})"
    return result
