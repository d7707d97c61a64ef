"""Coarse instruction decomposition.

An instruction is split into a navigation part and an activity part at the
first "and" that introduces an action verb, then the navigation part is
chunked into short keyphrases. Chunk boundaries open at prepositions and at
movement verbs, so "On the second level go the bathroom inside the second
bedroom on the right" becomes four keyphrases, one intermediate goal each.

Keyphrase text is taken verbatim from the instruction (original casing and
punctuation); matching against the preposition, verb, and "and" anchors is
done on lowercased, punctuation-stripped tokens. An external decomposer can
be plugged in through the DecomposerClient protocol; its response is a
numbered step list which is grounded verbatim.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from typing import Protocol, Sequence

DEFAULT_MAX_KEYPHRASE_WORDS = 6

DECOMPOSER_PROMPT = "Break this down into steps."

PREPOSITIONS = frozenset(
    {
        "to", "into", "in", "inside", "on", "at", "near", "above", "below",
        "by", "under", "over", "from", "towards", "behind", "beside",
    }
)
# "next to" is a two-token preposition; handled explicitly while scanning.

MOVEMENT_VERBS = frozenset(
    {"go", "walk", "head", "enter", "exit", "climb", "continue", "proceed", "leave"}
)

ACTION_VERBS = frozenset(
    {
        "replace", "clean", "pick", "bring", "move", "dust", "water", "wash",
        "turn", "open", "close", "put", "place", "grab", "fetch", "tidy",
        "fill", "empty", "hang", "fold", "wipe", "stop",
    }
)

_NUMBERED_LINE = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$")


class DecompositionError(ValueError):
    """External decomposition failed or returned an unusable response."""


@dataclass(frozen=True)
class Instruction:
    """Raw natural-language guidance; must be non-empty after trimming."""

    raw: str

    def __post_init__(self):
        if not self.raw.strip():
            raise ValueError("instruction text is empty")


@dataclass(frozen=True)
class DecomposedInstruction:
    """Ordered navigation keyphrases plus an optional activity phrase."""

    nc_keyphrases: tuple[str, ...]
    ac_phrase: str
    source: str  # "preposition" | "external" | "passthrough"

    def __post_init__(self):
        if not self.nc_keyphrases or any(not k.strip() for k in self.nc_keyphrases):
            raise ValueError("nc_keyphrases must be a non-empty list of non-empty strings")
        if self.source not in ("preposition", "external", "passthrough"):
            raise ValueError(f"unknown decomposition source {self.source!r}")


class DecomposerClient(Protocol):
    """External decomposer transport.

    The wire body is fixed regardless of transport: the request is
    ``{"instruction": ..., "prompt": "Break this down into steps."}`` and
    the response is ``{"steps": [...]}``. Implementations return the steps
    list, or the raw completion text when the backend emits one blob.
    """

    def decompose(self, instruction: str, prompt: str) -> str | Sequence[str]: ...


def normalize_token(token: str) -> str:
    return token.strip(string.punctuation).lower()


def phrase_tokens(text: str) -> frozenset[str]:
    """Normalized token set of a phrase; the unit of oracle tag matching."""
    return frozenset(t for t in (normalize_token(w) for w in text.split()) if t)


def split_nc_ac(instruction: Instruction) -> tuple[str, str]:
    """Split at the first "and" that introduces an action verb.

    The verb must directly follow the "and" (an intervening "then" is
    skipped), which keeps compound noun phrases like "the den and the
    hallway" intact. Without such an "and" the whole text is navigation.
    """
    words = instruction.raw.split()
    norms = [normalize_token(w) for w in words]
    for i, norm in enumerate(norms):
        if norm != "and" or i == 0 or i + 1 >= len(norms):
            continue
        after = i + 1
        if norms[after] == "then" and after + 1 < len(norms):
            after += 1
        if norms[after] in ACTION_VERBS:
            return " ".join(words[:i]), " ".join(words[i + 1:])
    return instruction.raw.strip(), ""


def _chunk_boundaries(norms: list[str]) -> list[int]:
    boundaries = [0]
    skip_next = False
    for i, norm in enumerate(norms):
        if skip_next:
            skip_next = False
            continue
        if norm == "next" and i + 1 < len(norms) and norms[i + 1] == "to":
            # Two-token preposition: the "to" never opens its own chunk.
            skip_next = True
            if i > 0:
                boundaries.append(i)
        elif i > 0 and (norm in PREPOSITIONS or norm in MOVEMENT_VERBS):
            boundaries.append(i)
    return boundaries


def keyphrases_by_preposition(nc: str, max_words: int = DEFAULT_MAX_KEYPHRASE_WORDS) -> list[str]:
    """Chunk the navigation component into grounding keyphrases.

    Each chunk opens at a preposition or movement verb and keeps that
    anchor word; chunks are truncated to max_words tokens and empty chunks
    are dropped. Order follows the original left-to-right text.
    """
    if max_words < 1:
        raise ValueError(f"max_words must be >= 1, got {max_words}")
    words = nc.split()
    if not words:
        return []
    norms = [normalize_token(w) for w in words]
    boundaries = _chunk_boundaries(norms)
    boundaries.append(len(words))
    chunks = []
    for lo, hi in zip(boundaries, boundaries[1:]):
        chunk = " ".join(words[lo:hi][:max_words])
        if chunk:
            chunks.append(chunk)
    return chunks


def _parse_numbered_steps(response: str | Sequence[str]) -> list[str]:
    if isinstance(response, str):
        text = response
    else:
        text = "\n".join(str(entry) for entry in response)
    steps = [m.group(1) for m in (_NUMBERED_LINE.match(line) for line in text.splitlines()) if m]
    if not steps:
        raise DecompositionError("decomposer response contains no numbered lines")
    return steps


def decompose(
    instruction: Instruction,
    mode: str = "preposition",
    client: DecomposerClient | None = None,
    max_words: int = DEFAULT_MAX_KEYPHRASE_WORDS,
) -> DecomposedInstruction:
    """Produce the keyphrase sequence and activity phrase for an instruction."""
    if mode == "preposition":
        nc, ac = split_nc_ac(instruction)
        keyphrases = keyphrases_by_preposition(nc, max_words=max_words)
        return DecomposedInstruction(
            nc_keyphrases=tuple(keyphrases), ac_phrase=ac, source="preposition"
        )
    if mode == "external":
        if client is None:
            raise ValueError("external mode requires a DecomposerClient")
        try:
            response = client.decompose(instruction.raw, DECOMPOSER_PROMPT)
        except DecompositionError:
            raise
        except Exception as exc:
            raise DecompositionError(f"decomposer client failed: {exc}") from exc
        steps = _parse_numbered_steps(response)
        ac = ""
        first_word = normalize_token(steps[-1].split()[0]) if steps[-1].split() else ""
        # A lone activity step stays in the navigation list so the
        # keyphrase sequence is never empty.
        if first_word in ACTION_VERBS and len(steps) > 1:
            ac = steps[-1]
            steps = steps[:-1]
        keyphrases = tuple(" ".join(s.split()[:max_words]) for s in steps)
        return DecomposedInstruction(nc_keyphrases=keyphrases, ac_phrase=ac, source="external")
    raise ValueError(f"unknown decomposition mode {mode!r}")
