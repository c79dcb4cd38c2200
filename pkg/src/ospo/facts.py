"""Atomic facts, their yes/no question templates, and the inverse question parser.

A fact is one of the binding tuples produced by :func:`ospo.prompts.bindings`:

* ``("obj", o)``
* ``("attr", o, kind, value)``
* ``("count", o, n)``
* ``("rel", s, kind, phrase, o)``

The global question wraps a whole prompt and parses to ``("global", text)``.
"""

from __future__ import annotations

import re

from ospo import lexicon
from ospo.errors import UnanswerableQuestion
from ospo.prompts import KeywordPools

GLOBAL_TEMPLATE = "This image is generated by a prompt: {prompt}. Does this image accurately represent the prompt?"
_GLOBAL_RE = re.compile(r"^This image is generated by a prompt: (.+)\. Does this image accurately represent the prompt\?$",
                        re.S)


def question_for(fact: tuple) -> str:
    tag = fact[0]
    if tag == "obj":
        return f"Is there {lexicon.with_article(fact[1])}?"
    if tag == "attr":
        return f"Is the {fact[1]} {fact[3]}?"
    if tag == "count":
        o, n = fact[1], fact[2]
        if n == 1:
            return f"Is there one {o}?"
        return f"Are there {lexicon.number_word(n)} {lexicon.pluralize(o)}?"
    if tag == "rel":
        return f"Is {lexicon.with_article(fact[1])} {fact[3]} {lexicon.with_article(fact[4])}?"
    raise ValueError(f"unknown fact {fact!r}")


def global_question(prompt: str) -> str:
    return GLOBAL_TEMPLATE.format(prompt=prompt.strip().rstrip("."))


class QuestionParser:
    """Maps question text produced by :func:`question_for` back to its fact."""

    def __init__(self, pools: KeywordPools):
        self.pools = pools
        self.objects = set(pools.objects)
        self.plurals = {lexicon.pluralize(o): o for o in pools.objects}
        self.attr_kind: dict[str, str] = {}
        for kind in ("color", "shape", "texture"):
            for v in pools.attribute_pool(kind):
                self.attr_kind[v] = kind
        self.phrase_kind = {p: lexicon.spatial_kind(p) for p in pools.spatial}
        self.phrase_kind.update({a: "action" for a in pools.actions})
        # longest phrases first so "on the left of" wins over "on"
        self._phrases = sorted(self.phrase_kind, key=len, reverse=True)

    def _strip_article(self, text: str) -> str | None:
        for art in ("a ", "an "):
            if text.startswith(art):
                return text[len(art):]
        return None

    def parse(self, question: str) -> tuple:
        q = " ".join(question.strip().split())
        m = _GLOBAL_RE.match(q)
        if m:
            return ("global", m.group(1))
        if not q.endswith("?"):
            raise UnanswerableQuestion(f"not a question: {question!r}")
        body = q[:-1]
        if body.startswith("Is there one "):
            o = body[len("Is there one "):]
            if o in self.objects:
                return ("count", o, 1)
        if body.startswith("Is there "):
            o = self._strip_article(body[len("Is there "):])
            if o in self.objects:
                return ("obj", o)
        if body.startswith("Are there "):
            num, _, rest = body[len("Are there "):].partition(" ")
            n = lexicon.parse_number(num)
            if n is not None and rest in self.plurals:
                return ("count", self.plurals[rest], n)
        if body.startswith("Is the "):
            words = body[len("Is the "):].split(" ")
            for k in range(1, len(words)):
                o, v = " ".join(words[:k]), " ".join(words[k:])
                if o in self.objects and v in self.attr_kind:
                    return ("attr", o, self.attr_kind[v], v)
        if body.startswith("Is "):
            rest = self._strip_article(body[len("Is "):])
            if rest is not None:
                fact = self._relation(rest)
                if fact is not None:
                    return fact
        raise UnanswerableQuestion(f"cannot ground question {question!r}")

    def _relation(self, rest: str) -> tuple | None:
        words = rest.split(" ")
        for k in range(1, len(words)):
            s = " ".join(words[:k])
            if s not in self.objects:
                continue
            tail = " ".join(words[k:])
            for phrase in self._phrases:
                if tail.startswith(phrase + " "):
                    o = self._strip_article(tail[len(phrase) + 1:])
                    if o in self.objects:
                        return ("rel", s, self.phrase_kind[phrase], phrase, o)
        return None
