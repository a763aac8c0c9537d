"""Topic names and subscription filters with MQTT 3.1.1 wildcard matching.

Filters are slash-separated levels where ``+`` matches exactly one level
and ``#``, allowed only as the final level, matches any suffix including
the empty one (``a/#`` matches ``a``). Topic names carry no wildcards.
"""

from __future__ import annotations


class InvalidFilter(Exception):
    pass


class InvalidTopic(Exception):
    pass


def validate_topic(topic: str) -> None:
    if not topic:
        raise InvalidTopic("topic must be non-empty")
    if "+" in topic or "#" in topic:
        raise InvalidTopic(f"topic must not contain wildcards: {topic!r}")


def validate_filter(topic_filter: str) -> None:
    if not topic_filter:
        raise InvalidFilter("filter must be non-empty")
    levels = topic_filter.split("/")
    for i, level in enumerate(levels):
        if "#" in level:
            if level != "#" or i != len(levels) - 1:
                raise InvalidFilter(
                    f"'#' must be the whole final level: {topic_filter!r}")
        elif "+" in level and level != "+":
            raise InvalidFilter(f"'+' must occupy a whole level: {topic_filter!r}")


def topic_matches(topic_filter: str, topic: str) -> bool:
    """Does a subscription filter match a concrete topic name."""
    validate_filter(topic_filter)
    validate_topic(topic)
    filter_levels = topic_filter.split("/")
    topic_levels = topic.split("/")
    for i, level in enumerate(filter_levels):
        if level == "#":
            return True
        if i >= len(topic_levels):
            return False
        if level != "+" and level != topic_levels[i]:
            return False
    return len(filter_levels) == len(topic_levels)
