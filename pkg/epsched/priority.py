"""
Priority parameters of the HTTP Extensible Prioritization Scheme (EPS) and
the mapping of Chromium request priorities to EPS urgencies.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Optional, Union

from .common import ParseError, RangeError

#: Most urgent urgency level.
MIN_URGENCY_LEVEL = 0

#: Least urgent urgency level.
MAX_URGENCY_LEVEL = 7

#: Urgency level of a request without priority signal.
DEFAULT_URGENCY_LEVEL = 3

_KEY_PATTERN = r"[a-z*][a-z0-9_\-.*]*"
# NOTE: Decimals come first so that "1.5" is not matched as integer "1" followed by garbage.
_BARE_ITEM_PATTERN = (
    r"-?\d{1,12}\.\d{1,3}"
    r"|-?\d{1,15}"
    r'|"(?:[^"\\\x00-\x1f\x7f]|\\[\\"])*"'
    r"|\?[01]"
    r"|[A-Za-z*][!#$%&'*+\-.^_`|~0-9A-Za-z:/]*"
)
_MEMBER_REGEX = re.compile(
    rf"(?P<key>{_KEY_PATTERN})"
    rf"(?:=(?P<value>{_BARE_ITEM_PATTERN}))?"
    rf"(?P<parameters>(?:; *{_KEY_PATTERN}(?:=(?:{_BARE_ITEM_PATTERN}))?)*)"
)
_MEMBER_SEPARATOR_REGEX = re.compile(r"[ \t]*,[ \t]*")
_INTEGER_REGEX = re.compile(r"-?\d{1,15}")


@dataclass(frozen=True, order=True)
class Urgency:
    """
    EPS urgency level between 0 (most urgent) and 7 (least urgent).
    """

    level: int = DEFAULT_URGENCY_LEVEL

    def __post_init__(self):
        if isinstance(self.level, bool) or not isinstance(self.level, int):
            raise RangeError(f"urgency must be an integer but is {self.level!r}")
        if not MIN_URGENCY_LEVEL <= self.level <= MAX_URGENCY_LEVEL:
            raise RangeError(
                f"urgency is {self.level} but must be between {MIN_URGENCY_LEVEL} and {MAX_URGENCY_LEVEL}"
            )

    def __int__(self):
        return self.level


#: Urgency of a request without priority signal.
DEFAULT_URGENCY = Urgency(DEFAULT_URGENCY_LEVEL)


@dataclass(frozen=True)
class PriorityParams:
    """
    Priority parameters of a single request; absent parameters take the EPS
    defaults.
    """

    urgency: Urgency = field(default_factory=Urgency)
    incremental: bool = False


class ChromiumPriority(IntEnum):
    """
    The five request priority tiers Chromium assigns to resources.
    """

    very_high = 0
    high = 1
    medium = 2
    low = 3
    very_low = 4


_CHROMIUM_PRIORITY_TO_URGENCY_LEVEL_MAP = {
    ChromiumPriority.very_high: 0,
    ChromiumPriority.high: 2,
    ChromiumPriority.medium: DEFAULT_URGENCY_LEVEL,
    ChromiumPriority.low: 5,
    ChromiumPriority.very_low: 7,
}
assert set(_CHROMIUM_PRIORITY_TO_URGENCY_LEVEL_MAP.keys()) == set(ChromiumPriority)

_NAME_TO_CHROMIUM_PRIORITY_MAP: Dict[str, ChromiumPriority] = {
    chromium_priority.name.replace("_", ""): chromium_priority for chromium_priority in ChromiumPriority
}
_NON_LETTER_REGEX = re.compile(r"[^a-z]")


def map_chromium_priority(chromium_priority: ChromiumPriority) -> Urgency:
    """
    The EPS urgency a Chromium priority tier maps to.
    """
    return Urgency(_CHROMIUM_PRIORITY_TO_URGENCY_LEVEL_MAP[ChromiumPriority(chromium_priority)])


def chromium_priority_from(value: Union[int, str]) -> ChromiumPriority:
    """
    The :py:class:`ChromiumPriority` for ``value``, which can be the numeric
    tier or a name like "VeryHigh", "very_high" or "Very High".
    """
    result: Optional[ChromiumPriority] = None
    if isinstance(value, bool):
        pass
    elif isinstance(value, int):
        if 0 <= value < len(ChromiumPriority):
            result = ChromiumPriority(value)
    elif isinstance(value, str):
        result = _NAME_TO_CHROMIUM_PRIORITY_MAP.get(_NON_LETTER_REGEX.sub("", value.lower()))
    if result is None:
        raise ParseError(f"Chromium priority must be one of 0 to 4 or VeryHigh, High, Medium, Low, VeryLow: {value!r}")
    return result


def _dictionary_members(text: str) -> Dict[str, Optional[str]]:
    result = {}
    position = 0
    while True:
        member_match = _MEMBER_REGEX.match(text, position)
        if member_match is None:
            raise ParseError(f"cannot parse dictionary member at column {position + 1}: {text!r}")
        # Later members override earlier ones with the same key.
        result[member_match.group("key")] = member_match.group("value")
        position = member_match.end()
        if position == len(text):
            break
        separator_match = _MEMBER_SEPARATOR_REGEX.match(text, position)
        if separator_match is None:
            raise ParseError(f"comma expected at column {position + 1}: {text!r}")
        position = separator_match.end()
        if position == len(text):
            raise ParseError(f"dictionary must not end with a comma: {text!r}")
    return result


def parse_priority_field(text: str) -> PriorityParams:
    """
    Parse the value of a ``Priority`` header field or ``PRIORITY_UPDATE``
    frame, for example "u=3, i".

    Only the members ``u`` (integer urgency) and ``i`` (boolean incremental)
    are interpreted; other members are ignored.
    """
    assert text is not None
    text_to_parse = text.strip(" ")
    if text_to_parse == "":
        return PriorityParams()

    key_to_value_map = _dictionary_members(text_to_parse)
    urgency = Urgency()
    if "u" in key_to_value_map:
        urgency_text = key_to_value_map["u"]
        if urgency_text is None or _INTEGER_REGEX.fullmatch(urgency_text) is None:
            raise ParseError(f"urgency u must be an integer: {text!r}")
        urgency = Urgency(int(urgency_text))
    incremental = False
    if "i" in key_to_value_map:
        incremental_text = key_to_value_map["i"]
        if incremental_text in (None, "?1"):
            incremental = True
        elif incremental_text != "?0":
            raise ParseError(f"incremental i must be a boolean: {text!r}")
    return PriorityParams(urgency, incremental)


def format_priority_field(priority: PriorityParams) -> str:
    """
    Canonical field value for ``priority`` that always contains both the
    urgency and the incremental member, for example "u=3, i" or "u=5, i=?0".
    """
    incremental_text = "i" if priority.incremental else "i=?0"
    return f"u={priority.urgency.level}, {incremental_text}"
