"""Gap statistics and preference-strength pair selection."""

from __future__ import annotations

from dataclasses import dataclass

from ospo.errors import NoCandidates
from ospo.perturbation import PerturbKind

EPSILON = 1e-6
NO_POSITIVE_LOCAL_GAP = "no_positive_local_gap"


@dataclass(frozen=True)
class GapRecord:
    kind: PerturbKind
    delta_local: float
    delta_global: float


def compute_gaps(cards) -> list[GapRecord | None]:
    """One GapRecord per candidate; ``cards`` maps kind -> ScoreCard or None (skipped)."""
    items = cards.items() if isinstance(cards, dict) else zip((PerturbKind.SWAP, PerturbKind.REPLACE,
                                                              PerturbKind.DROP), cards)
    out = []
    for kind, card in sorted(items, key=lambda kv: PerturbKind(kv[0])):
        out.append(None if card is None else GapRecord(PerturbKind(kind), card.delta_local, card.delta_global))
    return out


@dataclass(frozen=True)
class SelectionResult:
    """``t_scores`` has one slot per kind (Swap, Replace, Drop); None marks a skipped
    or excluded candidate. ``chosen_index`` is 1-based over the same slots."""

    t_scores: tuple[float | None, float | None, float | None]
    chosen_index: int | None
    delta_max_local: float
    delta_max_global: float
    discarded: bool = False
    reason: str | None = None

    @property
    def chosen_kind(self) -> PerturbKind | None:
        return None if self.chosen_index is None else PerturbKind(self.chosen_index - 1)

    def to_dict(self) -> dict:
        return {"t_scores": list(self.t_scores), "chosen_index": self.chosen_index,
                "chosen_kind": None if self.chosen_kind is None else self.chosen_kind.label,
                "delta_max_local": self.delta_max_local, "delta_max_global": self.delta_max_global,
                "discarded": self.discarded, "reason": self.reason}

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionResult":
        return cls(tuple(d["t_scores"]), d["chosen_index"], d["delta_max_local"], d["delta_max_global"],
                   d["discarded"], d["reason"])


def t_score(dl: float, dg: float, max_local: float, max_global: float, epsilon: float = EPSILON) -> float:
    return (dl / max(max_local, epsilon)) / (max(dg, epsilon) / max(max_global, epsilon))


def select_pair(gaps, epsilon: float = EPSILON, rng=None) -> SelectionResult:
    """Pick the candidate with the largest preference strength T.

    Candidates with non-positive local gap are excluded; ties go to the
    earlier perturbation kind. With ``rng`` the choice is instead uniform
    over the non-skipped candidates (random-selection ablation).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    present = sorted((g for g in gaps if g is not None), key=lambda g: g.kind)
    if not present:
        raise NoCandidates("every candidate was skipped upstream")
    max_local = max(g.delta_local for g in present)
    max_global = max(g.delta_global for g in present)
    scores: list[float | None] = [None, None, None]
    for g in present:
        if g.delta_local > 0:
            scores[int(g.kind)] = t_score(g.delta_local, g.delta_global, max_local, max_global, epsilon)
    if rng is not None:
        pick = present[int(rng.integers(len(present)))]
        return SelectionResult(tuple(scores), int(pick.kind) + 1, max_local, max_global)
    best = None
    for i, t in enumerate(scores):
        if t is not None and (best is None or t > scores[best]):
            best = i
    if best is None:
        return SelectionResult(tuple(scores), None, max_local, max_global, True, NO_POSITIVE_LOCAL_GAP)
    return SelectionResult(tuple(scores), best + 1, max_local, max_global)
