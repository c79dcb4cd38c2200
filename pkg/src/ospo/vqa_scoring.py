"""Question decomposition and yes-minus-no image scores."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ospo import facts as factlib
from ospo import fewshot
from ospo.errors import EmptyPrompt, UnanswerableQuestion
from ospo.prompts import KeywordPools, StructuredPrompt


@dataclass(frozen=True)
class Question:
    text: str
    fact: tuple | None


@dataclass(frozen=True)
class QuestionSet:
    local: tuple[Question, ...]
    global_question: str

    def __post_init__(self):
        if not self.local:
            raise EmptyPrompt("question set needs at least one local question")

    @property
    def local_texts(self) -> list[str]:
        return [q.text for q in self.local]

    def to_dict(self) -> dict:
        return {"local": [[q.text, list(q.fact) if q.fact else None] for q in self.local],
                "global": self.global_question}

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionSet":
        return cls(tuple(Question(t, tuple(f) if f else None) for t, f in d["local"]), d["global"])


def fact_list(p: StructuredPrompt) -> list[tuple]:
    """Facts of ``p`` in question order: per entity existence, attributes, count; then relations."""
    out: list[tuple] = []
    counts = dict(p.counts)
    for i, e in enumerate(p.entities):
        out.append(("obj", e.object))
        out += [("attr", e.object, k, v) for k, v in e.attributes]
        if i in counts:
            out.append(("count", e.object, counts[i]))
    for r in p.relations:
        out.append(("rel", p.entities[r.subject].object, r.kind, r.phrase, p.entities[r.object].object))
    return out


def global_question(prompt: str) -> str:
    return factlib.global_question(prompt)


def decompose_questions(base: StructuredPrompt, mode: str = "rule", backend=None, seed: int = 0,
                        pools: KeywordPools | None = None) -> QuestionSet:
    """Local questions from the base prompt's structure plus the single global question.

    ``backend`` mode asks the model for the question list instead; each
    returned question is grounded to a fact when it parses, else left
    ungrounded.
    """
    if not base.entities:
        raise EmptyPrompt(f"prompt {base.surface!r} has no entities")
    core = base.surface.split(", ")[0] if base.context else base.surface
    if mode == "rule":
        local = tuple(Question(factlib.question_for(f), f) for f in fact_list(base))
    elif mode == "backend":
        parser = factlib.QuestionParser(pools or KeywordPools.builtin())
        texts = fewshot.parse_question_transcript(
            backend.text_complete(fewshot.question_messages(base.category, core), seed=seed))
        local = []
        for t in texts:
            try:
                local.append(Question(t, parser.parse(t)))
            except UnanswerableQuestion:
                local.append(Question(t, None))
        local = tuple(local)
    else:
        raise ValueError(f"unknown question mode {mode!r}")
    return QuestionSet(local, global_question(core))


def mean_margin(answers) -> float:
    """Mean of p_yes - p_no over ``(p_yes, p_no)`` pairs."""
    answers = list(answers)
    if not answers:
        raise ValueError("no answers to score")
    for py, pn in answers:
        if not (0.0 <= py <= 1.0 and 0.0 <= pn <= 1.0):
            raise ValueError(f"probabilities out of range: ({py}, {pn})")
    return math.fsum(py - pn for py, pn in answers) / len(answers)


@dataclass(frozen=True)
class ImageScore:
    s_local: float
    s_global: float
    local_answers: tuple[tuple[float, float], ...]
    global_answer: tuple[float, float]


def probe_image(image, questions: QuestionSet, backend) -> ImageScore:
    local = tuple(tuple(backend.vqa_probe(image, q.text)) for q in questions.local)
    glob = tuple(backend.vqa_probe(image, questions.global_question))
    return ImageScore(mean_margin(local), mean_margin([glob]), local, glob)


def score_image(image, questions: QuestionSet, backend) -> tuple[float, float]:
    s = probe_image(image, questions, backend)
    return s.s_local, s.s_global


@dataclass(frozen=True)
class ScoreCard:
    s_local_w: float
    s_global_w: float
    s_local_l: float
    s_global_l: float
    transcript: dict = field(default_factory=dict, compare=False)

    @property
    def delta_local(self) -> float:
        return self.s_local_w - self.s_local_l

    @property
    def delta_global(self) -> float:
        return self.s_global_w - self.s_global_l

    def to_dict(self) -> dict:
        return {"s_local_w": self.s_local_w, "s_global_w": self.s_global_w, "s_local_l": self.s_local_l,
                "s_global_l": self.s_global_l, "transcript": self.transcript}

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreCard":
        return cls(d["s_local_w"], d["s_global_w"], d["s_local_l"], d["s_global_l"], d.get("transcript", {}))


def _side(score: ImageScore) -> dict:
    return {"local": [list(a) for a in score.local_answers], "global": list(score.global_answer)}


def score_pair(winning, losing, questions: QuestionSet, backend) -> ScoreCard:
    """Score both images of a candidate pair against the same question set."""
    w = probe_image(winning, questions, backend)
    l_ = probe_image(losing, questions, backend)
    return ScoreCard(w.s_local, w.s_global, l_.s_local, l_.s_global,
                     {"questions": questions.local_texts, "w": _side(w), "l": _side(l_)})


def binary_answers(answers) -> tuple[bool, ...]:
    """Yes iff p_yes > p_no (ties count as no)."""
    return tuple(py > pn for py, pn in answers)
