"""Keyword pools, structured prompts and category-stratified base prompt generation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Sequence

from ospo import lexicon
from ospo.errors import BackendUnavailable, PoolExhausted, PoolTooSmall, PromptParseError
from ospo.rng import derive_seed, substream

CATEGORIES = ("Attribute", "Layout", "NonSpatial", "Complex")
ATTR_KINDS = ("color", "shape", "texture")
RELATION_KINDS = ("spatial2d", "spatial3d", "action")
POOL_NAMES = ("objects", "colors", "shapes", "textures", "spatial")
BUILTIN_TARGETS = {"objects": 120, "colors": 70, "shapes": 70, "textures": 70, "spatial": 40}
_KIND_POOL = {"color": "colors", "shape": "shapes", "texture": "textures"}


@dataclass(frozen=True)
class Entity:
    object: str
    attributes: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Relation:
    subject: int
    kind: str
    phrase: str
    object: int


@dataclass(frozen=True)
class StructuredPrompt:
    category: str
    entities: tuple[Entity, ...]
    relations: tuple[Relation, ...] = ()
    counts: tuple[tuple[int, int], ...] = ()
    surface: str = ""
    context: tuple[str, ...] = ()

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        names = [e.object for e in self.entities]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate objects in prompt: {names}")
        n = len(self.entities)
        for e in self.entities:
            for kind, _ in e.attributes:
                if kind not in ATTR_KINDS:
                    raise ValueError(f"bad attribute kind {kind!r}")
        for r in self.relations:
            if r.kind not in RELATION_KINDS or not (0 <= r.subject < n and 0 <= r.object < n):
                raise ValueError(f"invalid relation {r}")
        for i, c in self.counts:
            if not 0 <= i < n or c < 1:
                raise ValueError(f"invalid count ({i}, {c})")

    def count_of(self, index: int) -> int | None:
        for i, c in self.counts:
            if i == index:
                return c
        return None

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "entities": [{"object": e.object, "attributes": [list(a) for a in e.attributes]} for e in self.entities],
            "relations": [[r.subject, r.kind, r.phrase, r.object] for r in self.relations],
            "counts": [list(c) for c in self.counts],
            "surface": self.surface,
            "context": list(self.context),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StructuredPrompt":
        return cls(
            category=d["category"],
            entities=tuple(Entity(e["object"], tuple(tuple(a) for a in e["attributes"])) for e in d["entities"]),
            relations=tuple(Relation(int(s), k, p, int(o)) for s, k, p, o in d.get("relations", [])),
            counts=tuple((int(i), int(c)) for i, c in d.get("counts", [])),
            surface=d.get("surface", ""),
            context=tuple(d.get("context", [])),
        )


def _clean_pool(words: Iterable[str]) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for w in words:
        w = " ".join(w.strip().lower().split())
        if w:
            seen.setdefault(w, None)
    return tuple(seen)


@dataclass(frozen=True)
class KeywordPools:
    objects: tuple[str, ...]
    colors: tuple[str, ...]
    shapes: tuple[str, ...]
    textures: tuple[str, ...]
    spatial: tuple[str, ...]
    actions: tuple[str, ...] = lexicon.ACTIONS
    actors: tuple[str, ...] = ()

    def __post_init__(self):
        for name in POOL_NAMES + ("actions",):
            words = getattr(self, name)
            if not words:
                raise ValueError(f"pool {name!r} is empty")
            if any(w != w.lower() or not w.strip() for w in words):
                raise ValueError(f"pool {name!r} must be lowercase and non-blank")
            if len(set(words)) != len(words):
                raise ValueError(f"pool {name!r} has duplicates")
        object_words = {w for o in self.objects for w in o.split()}
        bad = [s for s in self.spatial if object_words & set(s.split())]
        if bad:
            raise ValueError(f"spatial phrases contain object nouns: {bad}")
        if not self.actors:
            actors = tuple(o for o in self.objects if o in lexicon.ACTORS) or self.objects[:8]
            object.__setattr__(self, "actors", actors)

    def attribute_pool(self, kind: str) -> tuple[str, ...]:
        return getattr(self, _KIND_POOL[kind])

    def sizes(self) -> dict[str, int]:
        return {name: len(getattr(self, name)) for name in POOL_NAMES}

    @classmethod
    def builtin(cls) -> "KeywordPools":
        return _builtin_pools()


@lru_cache(maxsize=1)
def _builtin_pools() -> KeywordPools:
    return KeywordPools(
        objects=lexicon.OBJECTS,
        colors=lexicon.COLORS,
        shapes=lexicon.SHAPES,
        textures=lexicon.TEXTURES,
        spatial=lexicon.SPATIAL,
        actions=lexicon.ACTIONS,
        actors=lexicon.ACTORS,
    )


# ---------------------------------------------------------------- rendering


def canonicalize(p: StructuredPrompt) -> StructuredPrompt:
    """Reorder entities so the relation subject comes first, then relation objects in order."""
    if not p.relations:
        return p
    order: list[int] = [p.relations[0].subject]
    for r in p.relations:
        for idx in (r.subject, r.object):
            if idx not in order:
                order.append(idx)
    order += [i for i in range(len(p.entities)) if i not in order]
    if order == list(range(len(p.entities))):
        return p
    remap = {old: new for new, old in enumerate(order)}
    return replace(
        p,
        entities=tuple(p.entities[i] for i in order),
        relations=tuple(Relation(remap[r.subject], r.kind, r.phrase, remap[r.object]) for r in p.relations),
        counts=tuple(sorted((remap[i], c) for i, c in p.counts)),
    )


def noun_phrase(p: StructuredPrompt, index: int) -> str:
    e = p.entities[index]
    words = [v for _, v in e.attributes]
    n = p.count_of(index)
    if n is None:
        return lexicon.with_article(" ".join(words + [e.object]))
    head = e.object if n == 1 else lexicon.pluralize(e.object)
    return " ".join([lexicon.number_word(n)] + words + [head])


def render_core(p: StructuredPrompt) -> str:
    p = canonicalize(p)
    if not p.relations:
        return " and ".join(noun_phrase(p, i) for i in range(len(p.entities)))
    if any(r.subject != 0 for r in p.relations):
        raise PromptParseError(f"relations must share one subject to render: {p.relations}")
    parts = []
    prev_phrase = None
    for r in p.relations:
        np_ = noun_phrase(p, r.object)
        if prev_phrase is None:
            parts.append(f"{noun_phrase(p, 0)} {r.phrase} {np_}")
        elif r.phrase == prev_phrase:
            parts.append(f"and {np_}")
        else:
            parts.append(f"and {r.phrase} {np_}")
        prev_phrase = r.phrase
    related = {0} | {r.object for r in p.relations}
    loose = [i for i in range(len(p.entities)) if i not in related]
    if loose:
        raise PromptParseError(f"entities {loose} are outside every relation")
    return " ".join(parts)


def render(p: StructuredPrompt) -> str:
    core = render_core(p)
    return ", ".join((core,) + tuple(p.context))


def rendered(p: StructuredPrompt) -> StructuredPrompt:
    """Canonical form of ``p`` with its surface regenerated from the structured fields."""
    p = canonicalize(p)
    return replace(p, surface=render(p))


# ------------------------------------------------------------------ parsing


@dataclass(frozen=True)
class _Tok:
    type: str  # ART NUM ATTR OBJ SP ACT AND
    value: object
    plural: bool = False


@lru_cache(maxsize=8)
def _lexicon_table(pools: KeywordPools) -> tuple[dict[tuple[str, ...], _Tok], int]:
    table: dict[tuple[str, ...], _Tok] = {}

    def add(phrase: str, tok: _Tok):
        table.setdefault(tuple(phrase.split()), tok)

    for o in pools.objects:
        add(o, _Tok("OBJ", o))
    for o in pools.objects:
        add(lexicon.pluralize(o), _Tok("OBJ", o, plural=True))
    for kind in ATTR_KINDS:
        for v in pools.attribute_pool(kind):
            add(v, _Tok("ATTR", (kind, v)))
    for s in pools.spatial:
        add(s, _Tok("SP", (lexicon.spatial_kind(s), s)))
    for a in pools.actions:
        add(a, _Tok("ACT", ("action", a)))
    for i, w in enumerate(lexicon.NUMBER_WORDS):
        add(w, _Tok("NUM", i + 1))
    add("a", _Tok("ART", None))
    add("an", _Tok("ART", None))
    add("and", _Tok("AND", None))
    longest = max(len(k) for k in table)
    return table, longest


def _tokenize(text: str, pools: KeywordPools, lenient: bool = False) -> list[_Tok]:
    table, longest = _lexicon_table(pools)
    words = re.findall(r"[a-z0-9][a-z0-9'\-]*", text.lower())
    toks: list[_Tok] = []
    i = 0
    while i < len(words):
        for n in range(min(longest, len(words) - i), 0, -1):
            tok = table.get(tuple(words[i:i + n]))
            if tok is not None:
                toks.append(tok)
                i += n
                break
        else:
            if words[i].isdigit() and int(words[i]) >= 1:
                toks.append(_Tok("NUM", int(words[i])))
            elif not lenient:
                raise PromptParseError(f"unknown word {words[i]!r} in {text!r}")
            i += 1
    return toks


class _Parser:
    def __init__(self, toks: list[_Tok], text: str):
        self.toks = toks
        self.pos = 0
        self.text = text
        self.entities: list[Entity] = []
        self.counts: list[tuple[int, int]] = []

    def peek(self, offset: int = 0) -> _Tok | None:
        j = self.pos + offset
        return self.toks[j] if j < len(self.toks) else None

    def take(self, type_: str) -> _Tok:
        tok = self.peek()
        if tok is None or tok.type != type_:
            raise PromptParseError(f"expected {type_} at token {self.pos} in {self.text!r}")
        self.pos += 1
        return tok

    def noun_phrase(self) -> int:
        tok = self.peek()
        count = None
        if tok is not None and tok.type == "ART":
            self.pos += 1
        elif tok is not None and tok.type == "NUM":
            count = tok.value
            self.pos += 1
        attrs = []
        while self.peek() is not None and self.peek().type == "ATTR":
            attrs.append(self.take("ATTR").value)
        obj = self.take("OBJ")
        idx = len(self.entities)
        self.entities.append(Entity(obj.value, tuple(attrs)))
        if count is not None:
            self.counts.append((idx, count))
        return idx


def parse(text: str, category: str, pools: KeywordPools) -> StructuredPrompt:
    """Inverse of :func:`render` for prompts built from ``pools``."""
    surface = " ".join(text.strip().split())
    body = surface.rstrip(".").strip()
    core, *context = [s.strip() for s in body.split(", ")]
    p = _Parser(_tokenize(core, pools), core)
    relations: list[Relation] = []
    subject = p.noun_phrase()
    phrase: tuple[str, str] | None = None
    tok = p.peek()
    if tok is not None and tok.type in ("SP", "ACT"):
        phrase = tok.value
        p.pos += 1
        relations.append(Relation(subject, phrase[0], phrase[1], p.noun_phrase()))
    while p.peek() is not None:
        p.take("AND")
        tok = p.peek()
        if tok is not None and tok.type in ("SP", "ACT"):
            if phrase is None:
                raise PromptParseError(f"relation after coordination in {text!r}")
            phrase = tok.value
            p.pos += 1
            relations.append(Relation(subject, phrase[0], phrase[1], p.noun_phrase()))
        elif phrase is not None:
            relations.append(Relation(subject, phrase[0], phrase[1], p.noun_phrase()))
        else:
            p.noun_phrase()
    try:
        return StructuredPrompt(category, tuple(p.entities), tuple(relations), tuple(p.counts),
                                surface=surface.lower().rstrip("."), context=tuple(context))
    except ValueError as exc:
        raise PromptParseError(str(exc)) from exc


def extract_structure(text: str, category: str, pools: KeywordPools) -> StructuredPrompt:
    """Lenient structure extraction from free text (backend-generated prompts).

    Attributes bind to the next object; a spatial or action phrase between two
    objects becomes a relation from the preceding object (actions bind to the
    first actor found). Unknown words are skipped.
    """
    toks = _tokenize(text, pools, lenient=True)
    entities: list[Entity] = []
    counts: list[tuple[int, int]] = []
    relations: list[Relation] = []
    pending_attrs: list[tuple[str, str]] = []
    pending_count = None
    pending_rel: tuple[str, str] | None = None
    index_of: dict[str, int] = {}
    for tok in toks:
        if tok.type == "ATTR":
            pending_attrs.append(tok.value)
        elif tok.type == "NUM":
            pending_count = tok.value
        elif tok.type in ("SP", "ACT"):
            if entities:
                pending_rel = tok.value
        elif tok.type == "OBJ":
            name = tok.value
            if name in index_of:
                idx = index_of[name]
            else:
                idx = len(entities)
                attrs = tuple(dict.fromkeys(pending_attrs))
                entities.append(Entity(name, attrs))
                index_of[name] = idx
                if pending_count is not None and pending_count > 1:
                    counts.append((idx, pending_count))
            if pending_rel is not None and entities:
                kind, phrase = pending_rel
                if kind == "action":
                    subj = next((i for i, e in enumerate(entities) if e.object in pools.actors), 0)
                else:
                    subj = idx - 1 if idx > 0 else 0
                if subj != idx:
                    relations.append(Relation(subj, kind, phrase, idx))
            pending_attrs, pending_count, pending_rel = [], None, None
    return StructuredPrompt(category, tuple(entities), tuple(relations), tuple(counts),
                            surface=" ".join(text.strip().split()))


# ----------------------------------------------------------------- bindings


def bindings(p: StructuredPrompt) -> frozenset:
    """Object-keyed binding facts: existence, attributes, counts and relations."""
    out = set()
    for i, e in enumerate(p.entities):
        out.add(("obj", e.object))
        for kind, v in e.attributes:
            out.add(("attr", e.object, kind, v))
    for i, c in p.counts:
        out.add(("count", p.entities[i].object, c))
    for r in p.relations:
        out.add(("rel", p.entities[r.subject].object, r.kind, r.phrase, p.entities[r.object].object))
    return frozenset(out)


def values(p: StructuredPrompt) -> set:
    """Every substitutable value in the prompt (objects, attribute words, counts, phrases)."""
    out: set = set()
    for e in p.entities:
        out.add(e.object)
        out.update(v for _, v in e.attributes)
    out.update(c for _, c in p.counts)
    out.update(r.phrase for r in p.relations)
    return out


def is_layout_numeracy(p: StructuredPrompt) -> bool:
    return p.category == "Layout" and bool(p.counts)


def prompt_record(sample_id: str, p: StructuredPrompt, seed: int) -> dict:
    return {"id": sample_id, "category": p.category, "surface": p.surface, "structured": p.to_dict(), "seed": seed}


# ------------------------------------------------------------ keyword pools

def parse_keyword_list(text: str) -> list[str]:
    text = text.split("\n")[0] if "," in text.split("\n")[0] else text
    return [w for w in (" ".join(x.strip().strip(".").lower().split()) for x in re.split(r"[,\n]", text)) if w]


def build_keyword_pools(source: str = "builtin", seed: int = 0, targets: dict | None = None,
                        backend=None, max_attempts: int = 50) -> KeywordPools:
    targets = {**BUILTIN_TARGETS, **(targets or {})}
    for name, t in targets.items():
        if name not in POOL_NAMES:
            raise ValueError(f"unknown pool {name!r}")
        if t < 1:
            raise ValueError(f"target for {name!r} must be >= 1")
    if source == "builtin":
        pools = KeywordPools.builtin()
        short = {n: (len(getattr(pools, n)), t) for n, t in targets.items() if len(getattr(pools, n)) < t}
        if short:
            raise PoolExhausted(f"builtin pools below target: {short}")
        return pools
    if source != "backend":
        raise ValueError(f"unknown pool source {source!r}")
    if backend is None:
        raise BackendUnavailable("backend pool source selected but no backend configured")

    from ospo import fewshot

    collected: dict[str, list[str]] = {}
    taken: set[str] = set()
    object_words: set[str] = set()
    for name in POOL_NAMES:
        words: list[str] = []
        attempts = 0
        while len(words) < targets[name]:
            if attempts >= max_attempts:
                raise PoolExhausted(f"pool {name!r} reached {len(words)}/{targets[name]} after {attempts} attempts")
            messages = fewshot.keyword_messages(name)
            reply = backend.text_complete(messages, seed=derive_seed(seed, "pools", name, attempts))
            attempts += 1
            for w in parse_keyword_list(reply):
                if w in taken:
                    continue
                if name == "spatial" and object_words & set(w.split()):
                    continue
                words.append(w)
                taken.add(w)
        collected[name] = words
        if name == "objects":
            object_words = {x for o in words for x in o.split()}
    return KeywordPools(**{k: tuple(v) for k, v in collected.items()})


# ------------------------------------------------------- base prompt generation


def _split_counts(total: int, weights: Sequence[int]) -> list[int]:
    """Largest-remainder split of ``total`` proportional to ``weights``."""
    s = sum(weights)
    raw = [total * w / s for w in weights]
    out = [math.floor(x) for x in raw]
    rem = total - sum(out)
    order = sorted(range(len(weights)), key=lambda i: (-(raw[i] - out[i]), i))
    for i in order[:rem]:
        out[i] += 1
    return out


class _Unique:
    def __init__(self, count: int):
        self.seen: set[str] = set()
        self.items: list[StructuredPrompt] = []
        self.budget = max(1000, 200 * count)

    def fill(self, n: int, make, label: str):
        target = len(self.items) + n
        tries = 0
        while len(self.items) < target:
            if tries >= self.budget:
                raise PoolTooSmall(f"could not produce {n} unique {label} prompts")
            tries += 1
            p = rendered(make())
            if p.surface not in self.seen:
                self.seen.add(p.surface)
                self.items.append(p)


def _pick(rng, seq, k=1, exclude=()):
    cand = [x for x in seq if x not in exclude]
    if len(cand) < k:
        raise PoolTooSmall(f"need {k} values, only {len(cand)} available")
    idx = rng.choice(len(cand), size=k, replace=False)
    return [cand[i] for i in idx]


def _attribute_prompts(n: int, pools: KeywordPools, rng, out: _Unique):
    n_one, n_two = _split_counts(n, [1, 1])
    per_kind = _split_counts(n_one, [1, 1, 1])
    for kind, k in zip(ATTR_KINDS, per_kind):
        def one(kind=kind):
            (obj,) = _pick(rng, pools.objects)
            (val,) = _pick(rng, pools.attribute_pool(kind))
            return StructuredPrompt("Attribute", (Entity(obj, ((kind, val),)),))
        out.fill(k, one, f"Attribute/{kind}")

    def two():
        kinds = _pick(rng, ATTR_KINDS, 2)
        objs = _pick(rng, pools.objects, 2)
        ents = tuple(Entity(o, ((k, _pick(rng, pools.attribute_pool(k))[0]),)) for o, k in zip(objs, kinds))
        return StructuredPrompt("Attribute", ents)
    out.fill(n_two, two, "Attribute/two-entity")


def _layout_prompts(n: int, pools: KeywordPools, rng, out: _Unique):
    n_spatial, n_single, n_dual = _split_counts(n, [2, 1, 1])
    sp2 = [s for s in pools.spatial if lexicon.spatial_kind(s) == "spatial2d"]
    sp3 = [s for s in pools.spatial if lexicon.spatial_kind(s) == "spatial3d"]
    groups = [g for g in (sp2, sp3) if g]
    per_group = _split_counts(n_spatial, [1] * len(groups))
    for group, k in zip(groups, per_group):
        def spatial(group=group):
            objs = _pick(rng, pools.objects, 2)
            (phrase,) = _pick(rng, group)
            return StructuredPrompt("Layout", (Entity(objs[0]), Entity(objs[1])),
                                    (Relation(0, lexicon.spatial_kind(phrase), phrase, 1),))
        out.fill(k, spatial, "Layout/spatial")

    combos = [(o, q) for o in pools.objects for q in range(1, 10)]
    if n_single > len(combos):
        raise PoolTooSmall(f"single-count template supports {len(combos)} prompts, {n_single} requested")
    order = iter(rng.permutation(len(combos)))

    def single():
        o, q = combos[next(order)]
        return StructuredPrompt("Layout", (Entity(o),), counts=((0, q),))
    if n_single:
        try:
            out.fill(n_single, single, "Layout/single-count")
        except StopIteration:
            raise PoolTooSmall("single-count combinations exhausted") from None

    def dual():
        objs = _pick(rng, pools.objects, 2)
        q = rng.integers(1, 6, size=2)
        return StructuredPrompt("Layout", (Entity(objs[0]), Entity(objs[1])), counts=((0, int(q[0])), (1, int(q[1]))))
    out.fill(n_dual, dual, "Layout/dual-count")


def _nonspatial_prompts(n: int, pools: KeywordPools, rng, out: _Unique):
    n_one, n_two = _split_counts(n, [1, 1])

    def make(k):
        (subj,) = _pick(rng, pools.actors)
        objs = _pick(rng, pools.objects, k, exclude=(subj,))
        acts = _pick(rng, pools.actions, k)
        ents = (Entity(subj),) + tuple(Entity(o) for o in objs)
        return StructuredPrompt("NonSpatial", ents, tuple(Relation(0, "action", a, i + 1) for i, a in enumerate(acts)))
    out.fill(n_one, lambda: make(1), "NonSpatial/one-action")
    out.fill(n_two, lambda: make(2), "NonSpatial/two-action")


def _attrs(rng, pools: KeywordPools) -> tuple[tuple[str, str], ...]:
    k = int(rng.integers(1, 3))
    kinds = _pick(rng, ATTR_KINDS, k)
    return tuple((kind, _pick(rng, pools.attribute_pool(kind))[0]) for kind in kinds)


def _complex_prompts(n: int, pools: KeywordPools, rng, out: _Unique):
    n_sp, n_act, n_three = _split_counts(n, [1, 1, 1])

    def spatial_pair():
        objs = _pick(rng, pools.objects, 2)
        (phrase,) = _pick(rng, pools.spatial)
        return StructuredPrompt("Complex", tuple(Entity(o, _attrs(rng, pools)) for o in objs),
                                (Relation(0, lexicon.spatial_kind(phrase), phrase, 1),))

    def action_pair():
        (subj,) = _pick(rng, pools.actors)
        (obj,) = _pick(rng, pools.objects, exclude=(subj,))
        (act,) = _pick(rng, pools.actions)
        return StructuredPrompt("Complex", (Entity(subj, _attrs(rng, pools)), Entity(obj, _attrs(rng, pools))),
                                (Relation(0, "action", act, 1),))

    def spatial_three():
        objs = _pick(rng, pools.objects, 3)
        (phrase,) = _pick(rng, pools.spatial)
        kind = lexicon.spatial_kind(phrase)
        return StructuredPrompt("Complex", tuple(Entity(o, _attrs(rng, pools)) for o in objs),
                                (Relation(0, kind, phrase, 1), Relation(0, kind, phrase, 2)))

    out.fill(n_sp, spatial_pair, "Complex/spatial")
    out.fill(n_act, action_pair, "Complex/action")
    out.fill(n_three, spatial_three, "Complex/three-entity")


_GENERATORS = {
    "Attribute": _attribute_prompts,
    "Layout": _layout_prompts,
    "NonSpatial": _nonspatial_prompts,
    "Complex": _complex_prompts,
}


def generate_base_prompts(category: str, count: int, pools: KeywordPools, seed: int,
                          mode: str = "rule", backend=None, max_attempts: int | None = None) -> list[StructuredPrompt]:
    """Generate ``count`` unique prompts of one category.

    Attribute and Layout always use the templates. NonSpatial and Complex use
    structure-first sampling in ``rule`` mode, or in-context generation through
    ``backend`` in ``backend`` mode (structure is then extracted from the text).
    """
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}")
    if count < 1:
        raise ValueError("count must be >= 1")
    out = _Unique(count)
    if mode == "backend" and category in ("NonSpatial", "Complex"):
        _backend_prompts(category, count, pools, seed, backend, out, max_attempts or 20 * count)
    elif mode in ("rule", "backend"):
        _GENERATORS[category](count, pools, substream(seed, "prompts", category), out)
    else:
        raise ValueError(f"unknown generation mode {mode!r}")
    return out.items


def _backend_prompts(category, count, pools, seed, backend, out: _Unique, max_attempts):
    if backend is None:
        raise BackendUnavailable(f"{category} generation in backend mode needs a backend")
    from ospo import fewshot

    attempts = 0
    while len(out.items) < count:
        if attempts >= max_attempts:
            raise PoolTooSmall(f"backend produced {len(out.items)}/{count} usable unique {category} prompts")
        text = backend.text_complete(fewshot.prompt_generation_messages(category),
                                     seed=derive_seed(seed, "prompts", category, attempts))
        attempts += 1
        text = " ".join(text.strip().split())
        if not text or text.lower() in out.seen:
            continue
        p = extract_structure(text, category, pools)
        if not p.entities:
            continue
        out.seen.add(text.lower())
        out.items.append(replace(p, surface=text))
