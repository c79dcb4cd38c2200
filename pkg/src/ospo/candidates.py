"""Per-sample candidate construction shared by the pipeline stages and the analysis runs.

One sample yields up to three candidates (one per perturbation kind). Each
candidate is a (winning, losing) image pair: the winning image realizes the
densified base prompt, the losing one the densified negative prompt.
"""

from __future__ import annotations

from dataclasses import dataclass

from ospo.backend import CorruptionParams, DecodeParams, ImageArtifact
from ospo.errors import NotPerturbable
from ospo.perturbation import KINDS, DensePromptPair, PerturbKind, densify_pair, perturb
from ospo.prompts import KeywordPools, StructuredPrompt
from ospo.rng import derive_seed, substream
from ospo.selection import GapRecord, SelectionResult, select_pair
from ospo.vqa_scoring import QuestionSet, ScoreCard, score_pair


@dataclass(frozen=True)
class Ablations:
    no_negative_prompts: bool = False
    no_densification: bool = False
    random_selection: bool = False


@dataclass(frozen=True)
class Candidate:
    kind: PerturbKind
    negative: StructuredPrompt | None
    skip_reason: str | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.label, "negative": None if self.negative is None else self.negative.to_dict(),
                "skip_reason": self.skip_reason}

    @classmethod
    def from_dict(cls, d: dict) -> "Candidate":
        neg = d.get("negative")
        return cls(PerturbKind.parse(d["kind"]), None if neg is None else StructuredPrompt.from_dict(neg),
                   d.get("skip_reason"))


def make_candidates(sample_id: str, base: StructuredPrompt, pools: KeywordPools, seed: int,
                    ablations: Ablations = Ablations()) -> list[Candidate]:
    out = []
    for kind in KINDS:
        if ablations.no_negative_prompts:
            out.append(Candidate(kind, base))
            continue
        try:
            out.append(Candidate(kind, perturb(base, kind, pools, derive_seed(seed, "perturb", sample_id, kind.label))))
        except NotPerturbable as exc:
            out.append(Candidate(kind, None, f"not_perturbable: {exc}"))
    return out


def densify_candidate(sample_id: str, base: StructuredPrompt, cand: Candidate, seed: int, mode: str = "rule",
                      backend=None, ablations: Ablations = Ablations(), allow_fallback: bool = True) -> DensePromptPair:
    if ablations.no_densification:
        return DensePromptPair(base, cand.negative, cand.kind, (), {"mode": "none"})
    return densify_pair(base, cand.negative, cand.kind, mode=mode,
                        seed=derive_seed(seed, "densify", sample_id, cand.kind.label), backend=backend,
                        allow_fallback=allow_fallback)


def image_decode(decode: DecodeParams, seed: int, sample_id: str, kind: PerturbKind, side: str) -> DecodeParams:
    return DecodeParams(decode.guidance_weight, decode.temperature,
                        derive_seed(seed, "image", sample_id, kind.label, side))


def candidate_images(sample_id: str, dense: DensePromptPair, backend, decode: DecodeParams, seed: int,
                     corruption: CorruptionParams | None = None) -> tuple[ImageArtifact, ImageArtifact]:
    w = backend.generate_image(dense.base_dense, image_decode(decode, seed, sample_id, dense.kind, "w"),
                               corruption, f"{sample_id}/{dense.kind.label}/w")
    l_ = backend.generate_image(dense.negative_dense, image_decode(decode, seed, sample_id, dense.kind, "l"),
                                corruption, f"{sample_id}/{dense.kind.label}/l")
    return w, l_


def select(sample_id: str, cards: dict, epsilon: float, seed: int, ablations: Ablations = Ablations()) -> SelectionResult:
    """``cards`` maps PerturbKind -> ScoreCard (absent or None when skipped)."""
    gaps = [GapRecord(k, c.delta_local, c.delta_global) for k, c in sorted(cards.items()) if c is not None]
    rng = substream(seed, "select", sample_id) if ablations.random_selection else None
    return select_pair(gaps, epsilon, rng)


@dataclass
class SampleOutcome:
    candidates: list[Candidate]
    dense: dict
    cards: dict
    selection: SelectionResult | None


def run_sample(sample_id: str, base: StructuredPrompt, questions: QuestionSet, pools: KeywordPools, backend,
               decode: DecodeParams, seed: int, epsilon: float = 1e-6, corruption: CorruptionParams | None = None,
               densify_mode: str = "rule", ablations: Ablations = Ablations()) -> SampleOutcome:
    """All OSPO steps for one base prompt, in memory."""
    cands = make_candidates(sample_id, base, pools, seed, ablations)
    dense, cards = {}, {}
    for c in cands:
        if c.negative is None:
            continue
        d = densify_candidate(sample_id, base, c, seed, densify_mode, backend, ablations)
        w, l_ = candidate_images(sample_id, d, backend, decode, seed, corruption)
        dense[c.kind] = d
        cards[c.kind] = score_pair(w, l_, questions, backend)
    selection = select(sample_id, cards, epsilon, seed, ablations) if cards else None
    return SampleOutcome(cands, dense, cards, selection)


def representative_kind(outcome: SampleOutcome) -> PerturbKind | None:
    """Selected kind, or for a discarded sample the candidate with the largest local gap."""
    if outcome.selection is None:
        return None
    if not outcome.selection.discarded:
        return outcome.selection.chosen_kind
    return max(sorted(outcome.cards), key=lambda k: (outcome.cards[k].delta_local, -int(k)))


def card_answers(card: ScoreCard, side: str) -> tuple[bool, ...]:
    return tuple(py > pn for py, pn in card.transcript[side]["local"])
