"""Slot-value masking.

Replaces slot values inside utterances with ``<slot_name>`` placeholders
so that entity strings cannot bias the downstream embeddings. Span-backed
fillings are replaced exactly; span-less fillings fall back to a
case-insensitive longest-value-first substring search.
"""
from __future__ import annotations

from dataclasses import dataclass

from .corpus import Conversation, SlotFilling, Turn


@dataclass(frozen=True)
class AppliedMask:
    slot_name: str
    original_value: str
    replaced_range: tuple[int, int]  # offsets into the masked text, end exclusive


@dataclass(frozen=True)
class MaskedUtterance:
    text: str
    masks_applied: tuple[AppliedMask, ...]
    unapplied: tuple[SlotFilling, ...] = ()


def placeholder(slot_name: str) -> str:
    return f"<{slot_name}>"


class _Segment:
    """Either a literal run of the utterance or an applied placeholder."""

    __slots__ = ("text", "slot_name", "original_value")

    def __init__(self, text: str, slot_name: str | None = None, original_value: str = ""):
        self.text = text
        self.slot_name = slot_name
        self.original_value = original_value

    @property
    def is_mask(self) -> bool:
        return self.slot_name is not None


def mask_turn(turn: Turn) -> MaskedUtterance:
    """Mask one turn's utterance.

    Span-bearing fillings are applied first (earlier-starting span wins on
    overlap; the loser is reported unapplied). Remaining fillings are
    located by case-insensitive search, longest value first, masking the
    first occurrence that does not touch an existing placeholder. Values
    that cannot be located are reported unapplied, never fatal.
    """
    utterance = turn.utterance
    unapplied: list[SlotFilling] = []

    spanned = sorted(
        (f for f in turn.slot_fillings if f.span is not None),
        key=lambda f: (f.span[0], f.span[1]),
    )
    searched = sorted(
        (f for f in turn.slot_fillings if f.span is None),
        key=lambda f: -len(f.value),
    )

    # pass 1: exact spans over the original text
    segments: list[_Segment] = []
    cursor = 0
    last_end = 0
    for f in spanned:
        start, end = f.span  # type: ignore[misc]
        if start < last_end:  # overlaps an earlier span: annotation noise
            unapplied.append(f)
            continue
        if start > cursor:
            segments.append(_Segment(utterance[cursor:start]))
        segments.append(_Segment(placeholder(f.slot_name), f.slot_name, f.value))
        cursor = end
        last_end = end
    if cursor < len(utterance):
        segments.append(_Segment(utterance[cursor:]))
    if not segments:
        segments.append(_Segment(""))

    # pass 2: locate span-less values in the not-yet-masked remainder
    for f in searched:
        if not f.value:
            unapplied.append(f)
            continue
        if not _mask_by_search(segments, f):
            unapplied.append(f)

    text = "".join(s.text for s in segments)
    applied: list[AppliedMask] = []
    pos = 0
    for s in segments:
        if s.is_mask:
            applied.append(
                AppliedMask(
                    slot_name=s.slot_name,  # type: ignore[arg-type]
                    original_value=s.original_value,
                    replaced_range=(pos, pos + len(s.text)),
                )
            )
        pos += len(s.text)
    return MaskedUtterance(
        text=text, masks_applied=tuple(applied), unapplied=tuple(unapplied)
    )


def _mask_by_search(segments: list[_Segment], filling: SlotFilling) -> bool:
    needle = filling.value.lower()
    for idx, seg in enumerate(segments):
        if seg.is_mask:
            continue
        found = seg.text.lower().find(needle)
        if found < 0:
            continue
        end = found + len(filling.value)
        replacement = [
            _Segment(seg.text[:found]),
            _Segment(placeholder(filling.slot_name), filling.slot_name,
                     seg.text[found:end]),
            _Segment(seg.text[end:]),
        ]
        segments[idx:idx + 1] = [s for s in replacement if s.text or s.is_mask]
        return True
    return False


def mask_conversation(conversation: Conversation) -> list[MaskedUtterance]:
    """One MaskedUtterance per turn, order preserved."""
    return [mask_turn(turn) for turn in conversation.turns]
