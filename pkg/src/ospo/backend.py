"""Model capability contract and the deterministic scene-graph simulator.

A backend offers three calls:

``text_complete(messages, seed) -> str``
``generate_image(dense, decode, corruption, source_prompt_id) -> ImageArtifact``
``vqa_probe(image, question) -> (p_yes, p_no)``

:class:`SimulatorBackend` realizes a prompt as a :class:`SceneGraph`,
corrupts it with seeded omissions and misbindings, and answers yes/no
questions by looking facts up in the graph. The remote HTTP client lives in
:mod:`ospo.remote`.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Protocol

from ospo import facts as factlib
from ospo import lexicon
from ospo.errors import PromptParseError, UnanswerableQuestion
from ospo.prompts import KeywordPools, StructuredPrompt, bindings, parse
from ospo.rng import substream


@dataclass(frozen=True)
class DecodeParams:
    guidance_weight: float = 5.0
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.guidance_weight < 0:
            raise ValueError("guidance_weight must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")


@dataclass(frozen=True)
class CorruptionParams:
    p_omit: float = 0.0
    p_misbind: float = 0.0
    p_wrong_attr: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        for name in ("p_omit", "p_misbind", "p_wrong_attr"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not 0.0 <= self.eta < 0.5:
            raise ValueError("eta must be in [0, 0.5)")

    def scaled(self, temperature: float) -> "CorruptionParams":
        """Temperatures above 1 scale the three corruption rates linearly (capped at 1)."""
        f = max(1.0, float(temperature))
        return CorruptionParams(min(1.0, self.p_omit * f), min(1.0, self.p_misbind * f),
                                min(1.0, self.p_wrong_attr * f), self.eta)


# ------------------------------------------------------------- scene graphs

PAD, BOS, EOS, OBJ, REL = range(5)
_COUNT0 = 5
_WORD_CATEGORIES = ("objects", "colors", "shapes", "textures", "spatial", "actions", "context")
_ATTR_CATEGORY = {"color": "colors", "shape": "shapes", "texture": "textures"}
_CATEGORY_ATTR = {v: k for k, v in _ATTR_CATEGORY.items()}


@dataclass(frozen=True)
class SceneObject:
    object: str
    attributes: tuple[tuple[str, str], ...] = ()
    count: int = 1


@dataclass(frozen=True)
class SceneGraph:
    objects: tuple[SceneObject, ...]
    relations: tuple[tuple[str, str, str], ...]
    context: tuple[str, ...] = ()
    token_sequence: tuple[int, ...] = ()

    def get(self, name: str) -> SceneObject | None:
        for o in self.objects:
            if o.object == name:
                return o
        return None

    def holds(self, fact: tuple) -> bool:
        tag = fact[0]
        if tag == "obj":
            return self.get(fact[1]) is not None
        if tag == "attr":
            o = self.get(fact[1])
            return o is not None and (fact[2], fact[3]) in o.attributes
        if tag == "count":
            o = self.get(fact[1])
            return o is not None and o.count == fact[2]
        if tag == "rel":
            return (self.get(fact[1]) is not None and self.get(fact[4]) is not None
                    and (fact[1], fact[3], fact[4]) in self.relations)
        raise UnanswerableQuestion(f"unknown fact {fact!r}")

    def to_dict(self) -> dict:
        return {
            "objects": [{"object": o.object, "attributes": [list(a) for a in o.attributes], "count": o.count}
                        for o in self.objects],
            "relations": [list(r) for r in self.relations],
            "context": list(self.context),
            "token_sequence": list(self.token_sequence),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneGraph":
        return cls(tuple(SceneObject(o["object"], tuple(tuple(a) for a in o["attributes"]), int(o["count"]))
                         for o in d["objects"]),
                   tuple(tuple(r) for r in d["relations"]), tuple(d.get("context", [])),
                   tuple(int(t) for t in d.get("token_sequence", [])))


class Vocabulary:
    """Fixed token table for scene serialization.

    Layout: PAD BOS EOS OBJ REL, counts 1..MAX_COUNT, then one id per
    (category, word) over objects, attribute pools, spatial phrases, actions
    and context phrases. An object record is ``OBJ obj count attr*`` and a
    relation record is ``REL subj phrase obj``.
    """

    def __init__(self, pools: KeywordPools, size: int = 512):
        entries = []
        for cat in _WORD_CATEGORIES:
            words = lexicon.CONTEXT_PHRASES if cat == "context" else getattr(pools, cat)
            entries += [(cat, w) for w in words]
        entries = list(dict.fromkeys(entries))
        needed = _COUNT0 + lexicon.MAX_COUNT + len(entries)
        if needed > size:
            raise ValueError(f"vocabulary needs {needed} ids but size is {size}")
        self.size = size
        self.pools = pools
        self._id = {e: _COUNT0 + lexicon.MAX_COUNT + k for k, e in enumerate(entries)}
        self._entry = {v: k for k, v in self._id.items()}

    def token(self, category: str, word: str) -> int:
        try:
            return self._id[(category, word)]
        except KeyError:
            raise KeyError(f"{word!r} is not in the {category} vocabulary") from None

    def _phrase_category(self, phrase: str) -> str:
        return "actions" if ("actions", phrase) in self._id else "spatial"

    def serialize(self, objects, relations, context) -> tuple[int, ...]:
        toks = [BOS]
        for o in objects:
            if not 1 <= o.count <= lexicon.MAX_COUNT:
                raise ValueError(f"count {o.count} outside 1..{lexicon.MAX_COUNT}")
            toks += [OBJ, self.token("objects", o.object), _COUNT0 + o.count - 1]
            toks += [self.token(_ATTR_CATEGORY[k], v) for k, v in o.attributes]
        for s, phrase, obj in relations:
            toks += [REL, self.token("objects", s), self.token(self._phrase_category(phrase), phrase),
                     self.token("objects", obj)]
        toks += [self.token("context", c) for c in context]
        toks.append(EOS)
        return tuple(toks)

    def graph(self, objects, relations, context=()) -> SceneGraph:
        objects, relations, context = tuple(objects), tuple(tuple(r) for r in relations), tuple(context)
        return SceneGraph(objects, relations, context, self.serialize(objects, relations, context))

    def deserialize(self, tokens) -> SceneGraph:
        toks = list(tokens)
        if len(toks) < 2 or toks[0] != BOS or toks[-1] != EOS:
            raise ValueError("token sequence must be framed by BOS ... EOS")
        body, pos = toks[1:-1], 0
        objects, relations, context = [], [], []
        while pos < len(body):
            t = body[pos]
            if t == OBJ:
                name = self._entry[body[pos + 1]][1]
                count = body[pos + 2] - _COUNT0 + 1
                pos += 3
                attrs = []
                while pos < len(body) and body[pos] > REL and self._entry[body[pos]][0] in _CATEGORY_ATTR:
                    cat, word = self._entry[body[pos]]
                    attrs.append((_CATEGORY_ATTR[cat], word))
                    pos += 1
                objects.append(SceneObject(name, tuple(attrs), count))
            elif t == REL:
                relations.append(tuple(self._entry[x][1] for x in body[pos + 1:pos + 4]))
                pos += 4
            else:
                cat, word = self._entry[t]
                if cat != "context":
                    raise ValueError(f"unexpected token {t} ({cat}:{word})")
                context.append(word)
                pos += 1
        return SceneGraph(tuple(objects), tuple(relations), tuple(context), tuple(toks))


def intended_scene(dense: StructuredPrompt, vocab: Vocabulary) -> SceneGraph:
    counts = dict(dense.counts)
    objects = [SceneObject(e.object, e.attributes, counts.get(i, 1)) for i, e in enumerate(dense.entities)]
    relations = [(dense.entities[r.subject].object, r.phrase, dense.entities[r.object].object)
                 for r in dense.relations]
    context = [c for c in dense.context if c in lexicon.CONTEXT_PHRASES][:3]
    return vocab.graph(objects, relations, context)


# ------------------------------------------------------------------ images


@dataclass(frozen=True)
class ImageArtifact:
    id: str
    payload: object  # SceneGraph (simulator) or bytes (remote)
    source_prompt_id: str
    decode: DecodeParams
    token_ids: tuple[int, ...] | None = None

    @property
    def token_sequence(self) -> tuple[int, ...] | None:
        if isinstance(self.payload, SceneGraph):
            return self.payload.token_sequence
        return self.token_ids


class Backend(Protocol):
    def text_complete(self, messages, seed: int = 0) -> str: ...

    def generate_image(self, dense: StructuredPrompt, decode: DecodeParams,
                       corruption: CorruptionParams | None = None, source_prompt_id: str = "") -> ImageArtifact: ...

    def vqa_probe(self, image: ImageArtifact, question: str) -> tuple[float, float]: ...


@dataclass
class CorruptionLog:
    omitted: list = field(default_factory=list)
    misbound: list = field(default_factory=list)
    replaced: list = field(default_factory=list)


def corrupt_scene(scene: SceneGraph, corruption: CorruptionParams, pools: KeywordPools, vocab: Vocabulary,
                  rng, log: CorruptionLog | None = None) -> SceneGraph:
    """Apply omission, then misbinding, then wrong-value corruption.

    Every eligible slot consumes one uniform draw whether or not it fires, so
    raising a rate only ever adds events on the same seed.
    """
    log = log if log is not None else CorruptionLog()
    objects = list(scene.objects)
    relations = list(scene.relations)

    keep = []
    for o in objects:
        if rng.random() < corruption.p_omit:
            log.omitted.append(o.object)
        else:
            keep.append(o)
    objects = keep
    present = {o.object for o in objects}
    relations = [r for r in relations if r[0] in present and r[2] in present]

    for i in range(len(objects)):
        for j in range(i + 1, len(objects)):
            a, b = objects[i], objects[j]
            if a.attributes and b.attributes and set(a.attributes) != set(b.attributes):
                if rng.random() < corruption.p_misbind:
                    objects[i] = SceneObject(a.object, b.attributes, a.count)
                    objects[j] = SceneObject(b.object, a.attributes, b.count)
                    log.misbound.append(("attrs", a.object, b.object))
            a, b = objects[i], objects[j]
            if a.count != b.count:
                if rng.random() < corruption.p_misbind:
                    objects[i] = SceneObject(a.object, a.attributes, b.count)
                    objects[j] = SceneObject(b.object, b.attributes, a.count)
                    log.misbound.append(("counts", a.object, b.object))
    for k, (s, phrase, o) in enumerate(relations):
        if rng.random() < corruption.p_misbind:
            relations[k] = (o, phrase, s)
            log.misbound.append(("reverse", s, phrase, o))

    numeracy = any(o.count > 1 for o in scene.objects)
    for i, o in enumerate(objects):
        attrs = list(o.attributes)
        for a, (kind, v) in enumerate(attrs):
            u = rng.random()
            pool = pools.attribute_pool(kind)
            pick = int(rng.integers(len(pool) - 1))
            if u < corruption.p_wrong_attr:
                new = [x for x in pool if x != v][pick]
                attrs[a] = (kind, new)
                log.replaced.append((o.object, v, new))
        count = o.count
        if numeracy:
            u, up = rng.random(), rng.random() < 0.5
            if u < corruption.p_wrong_attr:
                count = count + 1 if (up or count == 1) and count < lexicon.MAX_COUNT else count - 1
                log.replaced.append((o.object, o.count, count))
        objects[i] = SceneObject(o.object, tuple(attrs), count)
    for k, (s, phrase, o) in enumerate(relations):
        u = rng.random()
        is_action = phrase in pools.actions
        pool = pools.actions if is_action else pools.spatial
        pick = int(rng.integers(len(pool) - 1))
        if u < corruption.p_wrong_attr:
            new = [x for x in pool if x != phrase][pick]
            relations[k] = (s, new, o)
            log.replaced.append((s, phrase, new))
    return vocab.graph(objects, relations, scene.context)


class SimulatorBackend:
    """Deterministic stand-in for an image generator and a VQA judge."""

    def __init__(self, pools: KeywordPools | None = None, corruption: CorruptionParams | None = None,
                 vocab_size: int = 512):
        self.pools = pools or KeywordPools.builtin()
        self.corruption = corruption or CorruptionParams()
        self.vocab = Vocabulary(self.pools, vocab_size)
        self.questions = factlib.QuestionParser(self.pools)

    # -- images
    def generate_image(self, dense: StructuredPrompt, decode: DecodeParams,
                       corruption: CorruptionParams | None = None, source_prompt_id: str = "",
                       log: CorruptionLog | None = None) -> ImageArtifact:
        if not dense.entities:
            raise ValueError("simulator needs a prompt with structured entities")
        corruption = (corruption or self.corruption).scaled(decode.temperature)
        rng = substream(decode.seed, "simulate", dense.surface)
        scene = corrupt_scene(intended_scene(dense, self.vocab), corruption, self.pools, self.vocab, rng, log)
        digest = hashlib.blake2b(json.dumps([list(scene.token_sequence), decode.seed, corruption.eta]).encode(),
                                 digest_size=8).hexdigest()
        return ImageArtifact(f"sim-{digest}", scene, source_prompt_id, decode)

    # -- VQA
    def fact_truth(self, scene: SceneGraph, question: str) -> bool:
        fact = self.questions.parse(question)
        if fact[0] == "global":
            try:
                p = parse(fact[1], "Complex", self.pools)
            except PromptParseError as exc:
                raise UnanswerableQuestion(f"cannot ground global prompt {fact[1]!r}: {exc}") from exc
            return all(scene.holds(f) for f in bindings(p))
        return scene.holds(fact)

    def vqa_probe(self, image: ImageArtifact, question: str) -> tuple[float, float]:
        if not isinstance(image.payload, SceneGraph):
            raise UnanswerableQuestion("simulator can only answer questions about simulated scenes")
        eta = self.corruption.eta
        if self.fact_truth(image.payload, question):
            return 1.0 - eta, eta
        return eta, 1.0 - eta

    # -- text
    def text_complete(self, messages, seed: int = 0) -> str:
        """Canned transcripts in the few-shot formats of :mod:`ospo.fewshot`.

        Keyword and prompt-generation requests are sampled fresh from the seed.
        For densification and questions, a final user turn that repeats a
        demonstration returns that demonstration's answer; otherwise the reply
        is synthesized from the request.
        """
        if not messages:
            raise ValueError("text_complete needs at least one message")
        msgs = [(r, t) for r, t in messages]
        role, last = msgs[-1]
        if role != "user":
            raise ValueError("last message must come from the user")
        system = msgs[0][1] if msgs[0][0] == "system" else ""
        rng = substream(seed, "text", last)
        # keyword and generation few-shots repeat one request verbatim, so they are never echoed
        if "generates common" in system:
            return self._keyword_reply(last, rng)
        if "generating natural" in system:
            return self._generation_reply(system, seed)
        for k in range(len(msgs) - 2):
            if msgs[k] == ("user", last) and msgs[k + 1][0] == "assistant":
                return msgs[k + 1][1]
        if "Prompt 2 Dense" in system or "Step 4. For Prompt 2" in system:
            return self._densify_reply(last, rng)
        if "transforming a sentence into several questions" in system:
            return self._question_reply(last)
        return "I am a simulated assistant."

    def _densify_reply(self, user: str, rng) -> str:
        m = re.search(r"Prompt 1:\s*(.+?)\nPrompt 2:\s*(.+?)\n", user + "\n", re.S)
        if not m:
            return "I could not find two prompts."
        base, neg = m.group(1).strip().rstrip("."), m.group(2).strip().rstrip(".")
        ctx = ", ".join(pool[int(rng.integers(len(pool)))]
                        for pool in (lexicon.PLACEMENTS, lexicon.SETTINGS, lexicon.LIGHTING))
        return (f"Step 1. Prompt 1 Object Bindings: {base}\n"
                f"Step 2. Prompt 1 Dense: {base}, {ctx}.\n"
                f"Step 3. Prompt 2 Object Bindings: {neg}\n"
                f"Step 4. Prompt 2 Dense: {neg}, {ctx}.")

    def _question_reply(self, user: str) -> str:
        p = parse(user, "Complex", self.pools)
        from ospo.vqa_scoring import fact_list

        fs = fact_list(p)
        return ("Concepts and relations: " + ", ".join(f[1] if f[0] == "obj" else " ".join(map(str, f[1:]))
                                                        for f in fs)
                + "; Questions: " + " ".join(factlib.question_for(f) for f in fs))

    def _keyword_reply(self, user: str, rng) -> str:
        from ospo.fewshot import _KEYWORD_USER

        name = next((k for k, v in _KEYWORD_USER.items() if v == user), "objects")
        pool = getattr(self.pools, name)
        picks = rng.integers(len(pool), size=30)
        return ", ".join(pool[int(i)] for i in picks)

    def _generation_reply(self, system: str, seed: int) -> str:
        from ospo.prompts import generate_base_prompts

        category = "NonSpatial" if "nonspatial relationship" in system else "Complex"
        return generate_base_prompts(category, 1, self.pools, seed)[0].surface
