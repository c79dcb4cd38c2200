"""Negative prompt construction (swap / replace / drop) and pairwise densification."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace

from ospo import fewshot, lexicon
from ospo.errors import BindingViolation, NotPerturbable
from ospo.prompts import (
    Entity,
    KeywordPools,
    Relation,
    StructuredPrompt,
    rendered,
    values,
)
from ospo.rng import derive_seed, substream


class PerturbKind(enum.IntEnum):
    SWAP = 0
    REPLACE = 1
    DROP = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: "str | int | PerturbKind") -> "PerturbKind":
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(value)


KINDS = (PerturbKind.SWAP, PerturbKind.REPLACE, PerturbKind.DROP)


def _family(p: StructuredPrompt) -> str:
    if p.category in ("Attribute", "Complex"):
        return "attribute"
    if p.category == "Layout":
        return "layout"
    return "nonspatial"


def _fresh(pool, p: StructuredPrompt) -> list:
    taken = values(p)
    return [v for v in pool if v not in taken]


def eligible_targets(p: StructuredPrompt, kind: PerturbKind, pools: KeywordPools) -> list[tuple]:
    """All selections ``perturb`` may draw from, in a fixed order.

    Degenerate shapes (empty list, hence NotPerturbable):

    * Swap: NonSpatial prompts; Attribute/Complex prompts with fewer than two
      entities carrying distinct non-empty attribute lists and no single
      reversible relation; Layout prompts without a relation and without two
      differing counts.
    * Replace: no attribute/object (Attribute, Complex), relation or count
      (Layout), or action (NonSpatial) to replace, or no fresh value left.
    * Drop: nothing removable while keeping at least one entity, e.g. a single
      bare object.
    """
    kind = PerturbKind(kind)
    fam = _family(p)
    n = len(p.entities)
    out: list[tuple] = []
    if kind is PerturbKind.SWAP:
        if fam == "attribute":
            for i in range(n):
                for j in range(i + 1, n):
                    a, b = p.entities[i].attributes, p.entities[j].attributes
                    if a and b and set(a) != set(b):
                        out.append(("attrs", i, j))
            if len(p.relations) == 1 and n == 2:
                out.append(("reverse", 0))
        elif fam == "layout":
            for r in range(len(p.relations)):
                out.append(("reverse", r))
            counted = dict(p.counts)
            idx = sorted(counted)
            for a in range(len(idx)):
                for b in range(a + 1, len(idx)):
                    if counted[idx[a]] != counted[idx[b]]:
                        out.append(("counts", idx[a], idx[b]))
    elif kind is PerturbKind.REPLACE:
        if fam == "attribute":
            for i, e in enumerate(p.entities):
                for a, (akind, _) in enumerate(e.attributes):
                    if _fresh(pools.attribute_pool(akind), p):
                        out.append(("attr", i, a))
            if _fresh(pools.objects, p):
                out += [("obj", i) for i in range(n)]
        elif fam == "layout":
            if _fresh(pools.spatial, p):
                out += [("phrase", r) for r in range(len(p.relations))]
            if _fresh(range(1, 10), p):
                out += [("count", i) for i, _ in p.counts]
        else:
            if _fresh(pools.actions, p):
                out += [("phrase", r) for r, rel in enumerate(p.relations) if rel.kind == "action"]
    else:
        if fam == "attribute":
            for i, e in enumerate(p.entities):
                out += [("attr", i, a) for a in range(len(e.attributes))]
            if n >= 2:
                out += [("entity", i) for i in range(n)]
        elif fam == "layout":
            out += [("relation", r) for r in range(len(p.relations))]
            if p.counts:
                out += [("count", i) for i, _ in p.counts]
                if n >= 2:
                    out += [("entity", i) for i in range(n)]
        else:
            subjects = {r.subject for r in p.relations}
            if n >= 2:
                out += [("entity", i) for i in range(n) if i not in subjects]
    return out


def _drop_entity(p: StructuredPrompt, idx: int) -> StructuredPrompt:
    def remap(i):
        return i - 1 if i > idx else i
    ents = tuple(e for i, e in enumerate(p.entities) if i != idx)
    rels = tuple(Relation(remap(r.subject), r.kind, r.phrase, remap(r.object))
                 for r in p.relations if idx not in (r.subject, r.object))
    counts = tuple((remap(i), c) for i, c in p.counts if i != idx)
    return replace(p, entities=ents, relations=rels, counts=counts)


def _set_entity(p: StructuredPrompt, idx: int, ent: Entity) -> StructuredPrompt:
    ents = list(p.entities)
    ents[idx] = ent
    return replace(p, entities=tuple(ents))


def apply_target(p: StructuredPrompt, kind: PerturbKind, target: tuple, pools: KeywordPools, rng) -> StructuredPrompt:
    kind = PerturbKind(kind)
    op = target[0]
    if kind is PerturbKind.SWAP:
        if op == "attrs":
            i, j = target[1:]
            ents = list(p.entities)
            ents[i] = Entity(ents[i].object, p.entities[j].attributes)
            ents[j] = Entity(ents[j].object, p.entities[i].attributes)
            out = replace(p, entities=tuple(ents))
        elif op == "reverse":
            rels = list(p.relations)
            r = rels[target[1]]
            rels[target[1]] = Relation(r.object, r.kind, r.phrase, r.subject)
            out = replace(p, relations=tuple(rels))
        elif op == "counts":
            i, j = target[1:]
            c = dict(p.counts)
            c[i], c[j] = c[j], c[i]
            out = replace(p, counts=tuple(sorted(c.items())))
        else:
            raise NotPerturbable(f"unknown swap target {target}")
    elif kind is PerturbKind.REPLACE:
        if op == "attr":
            i, a = target[1:]
            e = p.entities[i]
            akind = e.attributes[a][0]
            cand = _fresh(pools.attribute_pool(akind), p)
            attrs = list(e.attributes)
            attrs[a] = (akind, cand[int(rng.integers(len(cand)))])
            out = _set_entity(p, i, Entity(e.object, tuple(attrs)))
        elif op == "obj":
            i = target[1]
            cand = _fresh(pools.objects, p)
            out = _set_entity(p, i, Entity(cand[int(rng.integers(len(cand)))], p.entities[i].attributes))
        elif op == "phrase":
            r = p.relations[target[1]]
            pool = pools.actions if r.kind == "action" else pools.spatial
            cand = _fresh(pool, p)
            phrase = cand[int(rng.integers(len(cand)))]
            new_kind = "action" if r.kind == "action" else lexicon.spatial_kind(phrase)
            rels = list(p.relations)
            rels[target[1]] = Relation(r.subject, new_kind, phrase, r.object)
            out = replace(p, relations=tuple(rels))
        elif op == "count":
            cand = _fresh(range(1, 10), p)
            new = cand[int(rng.integers(len(cand)))]
            out = replace(p, counts=tuple((i, new if i == target[1] else c) for i, c in p.counts))
        else:
            raise NotPerturbable(f"unknown replace target {target}")
    else:
        if op == "attr":
            i, a = target[1:]
            e = p.entities[i]
            out = _set_entity(p, i, Entity(e.object, e.attributes[:a] + e.attributes[a + 1:]))
        elif op == "entity":
            out = _drop_entity(p, target[1])
        elif op == "relation":
            out = replace(p, relations=p.relations[:target[1]] + p.relations[target[1] + 1:])
        elif op == "count":
            out = replace(p, counts=tuple((i, c) for i, c in p.counts if i != target[1]))
        else:
            raise NotPerturbable(f"unknown drop target {target}")
    return rendered(replace(out, context=()))


def choose_target(base: StructuredPrompt, kind: PerturbKind, pools: KeywordPools, seed: int):
    targets = eligible_targets(base, kind, pools)
    if not targets:
        raise NotPerturbable(f"{PerturbKind(kind).label} not applicable to {base.category} prompt {base.surface!r}")
    rng = substream(seed, "perturb", PerturbKind(kind).label)
    return targets[int(rng.integers(len(targets)))], rng


def perturb(base: StructuredPrompt, kind: PerturbKind, pools: KeywordPools, seed: int,
            target: tuple | None = None) -> StructuredPrompt:
    """Negative prompt for ``base``.

    ``target`` pins the selection (one of :func:`eligible_targets`); otherwise
    it is drawn uniformly from the seeded substream.
    """
    kind = PerturbKind(kind)
    chosen, rng = choose_target(base, kind, pools, seed)
    if target is not None:
        if tuple(target) not in eligible_targets(base, kind, pools):
            raise NotPerturbable(f"target {target} not eligible for {kind.label} on {base.surface!r}")
        chosen = tuple(target)
    return apply_target(base, kind, chosen, pools, rng)


# ------------------------------------------------------------- densification


@dataclass(frozen=True)
class DensePromptPair:
    base_dense: StructuredPrompt
    negative_dense: StructuredPrompt
    kind: PerturbKind
    shared_context: tuple[str, ...]
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.label,
            "base_dense": self.base_dense.to_dict(),
            "negative_dense": self.negative_dense.to_dict(),
            "shared_context": list(self.shared_context),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DensePromptPair":
        return cls(StructuredPrompt.from_dict(d["base_dense"]), StructuredPrompt.from_dict(d["negative_dense"]),
                   PerturbKind.parse(d["kind"]), tuple(d["shared_context"]), d.get("provenance", {}))


def rule_context(seed: int) -> tuple[str, str, str]:
    rng = substream(seed, "densify", "context")
    return tuple(pool[int(rng.integers(len(pool)))]
                 for pool in (lexicon.PLACEMENTS, lexicon.SETTINGS, lexicon.LIGHTING))


def _rule_pair(base, negative, kind, seed, provenance) -> DensePromptPair:
    ctx = rule_context(seed)
    return DensePromptPair(rendered(replace(base, context=ctx)), rendered(replace(negative, context=ctx)),
                           PerturbKind(kind), ctx, provenance)


def _mentions(text: str, phrase: str) -> bool:
    return re.search(r"(?<![a-z])" + re.escape(phrase) + r"(?![a-z])", text) is not None


def missing_bindings(p: StructuredPrompt, text: str) -> list[str]:
    """Binding words of ``p`` that do not appear in ``text``."""
    text = text.lower()
    missing = []
    for i, e in enumerate(p.entities):
        if not (_mentions(text, e.object) or _mentions(text, lexicon.pluralize(e.object))):
            missing.append(e.object)
        missing += [v for _, v in e.attributes if not _mentions(text, v)]
    for i, c in p.counts:
        words = {lexicon.number_word(c), str(c)} | ({"a", "an", "single"} if c == 1 else set())
        if not any(_mentions(text, w) for w in words):
            missing.append(f"{c} {p.entities[i].object}")
    missing += [r.phrase for r in p.relations if not _mentions(text, r.phrase)]
    return missing


_STOP = frozenset("a an the and of on in with by to its their is are at as from for while under over into "
                  "beside near same this that it them they".split())


def _shared_terms(d1: str, d2: str, base: StructuredPrompt, negative: StructuredPrompt) -> tuple[str, ...]:
    def words(s):
        return set(re.findall(r"[a-z][a-z\-]+", s.lower()))
    bound = set()
    for p in (base, negative):
        for v in values(p):
            if isinstance(v, str):
                bound |= words(v)
                bound |= words(lexicon.pluralize(v))
    return tuple(sorted((words(d1) & words(d2)) - bound - _STOP))


def densify_pair(base: StructuredPrompt, negative: StructuredPrompt, kind: PerturbKind, mode: str = "rule",
                 seed: int = 0, backend=None, allow_fallback: bool = True) -> DensePromptPair:
    """Jointly densify a (base, negative) pair so both share one global context."""
    kind = PerturbKind(kind)
    if mode == "rule":
        return _rule_pair(base, negative, kind, seed, {"mode": "rule"})
    if mode != "backend":
        raise ValueError(f"unknown densify mode {mode!r}")
    variant = fewshot.densify_variant(base.category, numeracy=bool(base.counts))
    messages = fewshot.densify_messages(variant, base.surface, negative.surface)
    transcript = backend.text_complete(messages, seed=derive_seed(seed, "densify", kind.label))
    d1, d2 = fewshot.parse_densify_transcript(transcript)
    problems = missing_bindings(base, d1) + missing_bindings(negative, d2)
    if problems:
        if not allow_fallback:
            raise BindingViolation(f"dense prompts dropped bindings: {problems}")
        return _rule_pair(base, negative, kind, seed, {"mode": "rule", "fallback": True,
                                                       "violations": problems, "transcript": transcript})
    shared = _shared_terms(d1, d2, base, negative)
    return DensePromptPair(replace(base, surface=d1, context=shared), replace(negative, surface=d2, context=shared),
                           kind, shared, {"mode": "backend", "transcript": transcript})
