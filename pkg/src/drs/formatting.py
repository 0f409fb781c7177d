"""Shared human-readable rendering of dates, magnitudes, and story counts."""

from __future__ import annotations

import datetime as dt

_STORY_WORDS = {
    1: "One", 2: "Two", 3: "Three", 4: "Four", 5: "Five",
    6: "Six", 7: "Seven", 8: "Eight", 9: "Nine", 10: "Ten",
}


def format_magnitude(magnitude: float) -> str:
    """6.4 -> 'M6.4'."""
    return f"M{magnitude:g}"


def format_date(value: dt.date) -> str:
    """date(2020, 1, 11) -> 'January 11, 2020'."""
    return f"{value.strftime('%B')} {value.day}, {value.year}"


def stories_phrase(stories: int) -> str:
    """3 -> 'Three-story'; counts above ten fall back to digits ('12-story')."""
    word = _STORY_WORDS.get(stories)
    return f"{word}-story" if word else f"{stories}-story"


def format_decimal_degrees(value: float) -> str:
    """Fixed six decimal places, the precision carried through the pipeline."""
    return f"{value:.6f}"
