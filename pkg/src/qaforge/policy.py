"""Generation policy and the accuracy-gate rule.

Kept free of engine/role imports so the gate stays a pure, independently
testable function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidPolicyError

ACCEPT = "accept"
REFINE = "refine"

THRESHOLD_PRESETS = {"none": None, "half": 0.5, "quarter": 0.25}


@dataclass(frozen=True)
class GatePolicy:
    """Generation policy: gate threshold, refinement budget, swarm shape.

    accuracy_threshold None disables the gate entirely (every judged
    question is accepted on its first pass). level_mix maps question
    level (1..3) to the number of drafts requested per chunk.

    enrichment=False skips layout enrichment when materializing chunks
    (the layout-ablation condition); validate_evidence=False skips the
    final evidence check (the validator-ablation condition). Both default
    to the full pipeline.
    """

    accuracy_threshold: float | None = 0.5
    max_refinement_rounds: int = 4
    swarm_size: int = 5
    level_mix: tuple[tuple[int, int], ...] = ((1, 1), (2, 1), (3, 1))
    chunk_parallelism: int = 1
    enrichment: bool = True
    validate_evidence: bool = True

    def __post_init__(self):
        if isinstance(self.level_mix, dict):
            normalized = tuple(sorted((int(k), int(v)) for k, v in self.level_mix.items()))
            object.__setattr__(self, "level_mix", normalized)
        if self.accuracy_threshold is not None and not 0 <= self.accuracy_threshold <= 1:
            raise InvalidPolicyError(f"accuracy_threshold must be in [0, 1], got {self.accuracy_threshold}")
        if self.max_refinement_rounds < 1:
            raise InvalidPolicyError("max_refinement_rounds must be >= 1")
        if self.swarm_size < 1:
            raise InvalidPolicyError("swarm_size must be >= 1")
        if self.chunk_parallelism < 1:
            raise InvalidPolicyError("chunk_parallelism must be >= 1")
        seen = set()
        for level, count in self.level_mix:
            if level not in (1, 2, 3):
                raise InvalidPolicyError(f"level_mix level must be 1..3, got {level}")
            if level in seen:
                raise InvalidPolicyError(f"duplicate level {level} in level_mix")
            if count < 0:
                raise InvalidPolicyError("level_mix counts must be >= 0")
            seen.add(level)
        if sum(c for _, c in self.level_mix) < 1:
            raise InvalidPolicyError("level_mix must request at least one question")

    @property
    def level_counts(self) -> dict[int, int]:
        return {level: count for level, count in self.level_mix}

    def to_dict(self) -> dict:
        return {
            "accuracy_threshold": self.accuracy_threshold,
            "max_refinement_rounds": self.max_refinement_rounds,
            "swarm_size": self.swarm_size,
            "level_mix": {str(level): count for level, count in self.level_mix},
            "chunk_parallelism": self.chunk_parallelism,
            "enrichment": self.enrichment,
            "validate_evidence": self.validate_evidence,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GatePolicy":
        known = {
            "accuracy_threshold",
            "max_refinement_rounds",
            "swarm_size",
            "level_mix",
            "chunk_parallelism",
            "enrichment",
            "validate_evidence",
        }
        unknown = set(d) - known
        if unknown:
            raise InvalidPolicyError(f"unknown policy keys: {sorted(unknown)}")
        kwargs = dict(d)
        threshold = kwargs.get("accuracy_threshold")
        if isinstance(threshold, str):
            if threshold not in THRESHOLD_PRESETS:
                raise InvalidPolicyError(f"unknown threshold preset {threshold!r}")
            kwargs["accuracy_threshold"] = THRESHOLD_PRESETS[threshold]
        if "level_mix" in kwargs and isinstance(kwargs["level_mix"], dict):
            kwargs["level_mix"] = {int(k): int(v) for k, v in kwargs["level_mix"].items()}
        return cls(**kwargs)


def gate_decision(accuracy_rate: float, policy: GatePolicy) -> str:
    """Refine iff a gate is set and the swarm beat it, strictly."""
    if not 0 <= accuracy_rate <= 1:
        raise ValueError(f"accuracy_rate must be in [0, 1], got {accuracy_rate}")
    if policy.accuracy_threshold is None:
        return ACCEPT
    return REFINE if accuracy_rate > policy.accuracy_threshold else ACCEPT
