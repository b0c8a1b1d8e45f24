"""Deterministic instruction mini-grammar.

    use <policy> on <label>[,<label>...] [avoid <label>[,<label>...]]

Labels are single whitespace-free tokens, comma-separated without spaces,
lower-cased and trimmed on parse. This is the batch stand-in for free-form
instruction decomposition: the grammar names the policy to run, the objects
it should observe, and the objects to avoid.
"""

from __future__ import annotations

from dataclasses import dataclass


class TaskSpecError(ValueError):
    """Instruction does not match the grammar; names the offending token."""


@dataclass(frozen=True)
class TaskSpec:
    policy_name: str
    target_labels: tuple[str, ...]
    obstacle_labels: tuple[str, ...]


def _split_labels(token: str) -> tuple[str, ...]:
    labels = tuple(part.strip().lower() for part in token.split(",") if part.strip())
    if not labels:
        raise TaskSpecError(f"empty label list in token {token!r}")
    return labels


def parse_task_spec(text: str) -> TaskSpec:
    """Parse an instruction; raises TaskSpecError citing the bad token."""
    tokens = text.split()
    if not tokens:
        raise TaskSpecError("empty instruction")

    def expect(idx: int, keyword: str):
        if idx >= len(tokens):
            raise TaskSpecError(f"instruction ends where {keyword!r} was expected")
        if tokens[idx] != keyword:
            raise TaskSpecError(f"expected {keyword!r} but found token {tokens[idx]!r}")

    expect(0, "use")
    if len(tokens) < 2:
        raise TaskSpecError("instruction ends where the policy name was expected")
    policy = tokens[1].strip().lower()
    expect(2, "on")
    if len(tokens) < 4:
        raise TaskSpecError("instruction ends where the target labels were expected")
    targets = _split_labels(tokens[3])

    obstacles: tuple[str, ...] = ()
    if len(tokens) > 4:
        expect(4, "avoid")
        if len(tokens) < 6:
            raise TaskSpecError("instruction ends where the obstacle labels were expected")
        obstacles = _split_labels(tokens[5])
        if len(tokens) > 6:
            raise TaskSpecError(f"unexpected trailing token {tokens[6]!r}")

    overlap = set(targets) & set(obstacles)
    if overlap:
        raise TaskSpecError(f"labels {sorted(overlap)} appear as both target and obstacle")
    return TaskSpec(policy_name=policy, target_labels=targets,
                    obstacle_labels=obstacles)
