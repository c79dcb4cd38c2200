"""Random structured prompts covering ordinary and degenerate shapes."""

from __future__ import annotations

from collections import Counter

import numpy as np

from ospo import lexicon
from ospo.prompts import ATTR_KINDS, CATEGORIES, Entity, Relation, StructuredPrompt, rendered


def _objects(rng, pools, k, pool=None):
    pool = pool or pools.objects
    return [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]


def _attrs(rng, pools, k):
    kinds = [ATTR_KINDS[i] for i in rng.choice(3, size=k, replace=False)]
    return tuple((kd, pools.attribute_pool(kd)[int(rng.integers(len(pools.attribute_pool(kd))))]) for kd in kinds)


def random_prompt(rng, pools, category=None) -> StructuredPrompt:
    cat = category or CATEGORIES[int(rng.integers(4))]
    if cat in ("Attribute", "Complex"):
        n = int(rng.integers(1, 4))
        ents = [Entity(o, _attrs(rng, pools, int(rng.integers(0, 3)))) for o in _objects(rng, pools, n)]
        if n >= 2 and rng.random() < 0.15:  # identical attribute lists
            ents[1] = Entity(ents[1].object, ents[0].attributes)
        rels = ()
        if cat == "Complex" and n >= 2 and rng.random() < 0.8:
            pool = pools.actions if rng.random() < 0.3 else pools.spatial
            phrase = pool[int(rng.integers(len(pool)))]
            kind = "action" if pool is pools.actions else lexicon.spatial_kind(phrase)
            rels = tuple(Relation(0, kind, phrase, j) for j in range(1, n))
        return rendered(StructuredPrompt(cat, tuple(ents), rels))
    if cat == "Layout":
        shape = int(rng.integers(5))
        if shape == 0:
            a, b = _objects(rng, pools, 2)
            phrase = pools.spatial[int(rng.integers(len(pools.spatial)))]
            return rendered(StructuredPrompt(cat, (Entity(a), Entity(b)),
                                             (Relation(0, lexicon.spatial_kind(phrase), phrase, 1),)))
        if shape == 1:
            (a,) = _objects(rng, pools, 1)
            return rendered(StructuredPrompt(cat, (Entity(a),), counts=((0, int(rng.integers(1, 10))),)))
        if shape == 2:
            a, b = _objects(rng, pools, 2)
            c = rng.integers(1, 6, size=2)
            return rendered(StructuredPrompt(cat, (Entity(a), Entity(b)), counts=((0, int(c[0])), (1, int(c[1])))))
        if shape == 3:
            return rendered(StructuredPrompt(cat, (Entity(_objects(rng, pools, 1)[0]),)))
        return rendered(StructuredPrompt(cat, tuple(Entity(o) for o in _objects(rng, pools, 2))))
    k = int(rng.integers(0, 3))
    subj = _objects(rng, pools, 1, pools.actors)[0]
    objs = [o for o in _objects(rng, pools, k + 1) if o != subj][:k]
    acts = _objects(rng, pools, len(objs), pools.actions)
    ents = (Entity(subj),) + tuple(Entity(o) for o in objs)
    return rendered(StructuredPrompt(cat, ents, tuple(Relation(0, "action", a, i + 1) for i, a in enumerate(acts))))


def random_prompts(n, pools, seed=0):
    rng = np.random.default_rng(seed)
    return [random_prompt(rng, pools) for _ in range(n)]


# -- independent statements of the documented degenerate shapes


def degenerate(p: StructuredPrompt, kind: str) -> bool:
    n = len(p.entities)
    attr_lists = [frozenset(e.attributes) for e in p.entities]
    counts = [c for _, c in p.counts]
    if kind == "swap":
        if p.category == "NonSpatial":
            return True
        if p.category in ("Attribute", "Complex"):
            distinct_pair = any(a and b and a != b for i, a in enumerate(attr_lists) for b in attr_lists[i + 1:])
            reversible = len(p.relations) == 1 and n == 2
            return not (distinct_pair or reversible)
        return not p.relations and len(set(counts)) < 2
    if kind == "replace":
        if p.category in ("Attribute", "Complex"):
            return False  # builtin pools always leave a fresh object
        if p.category == "Layout":
            return not p.relations and not p.counts
        return not any(r.kind == "action" for r in p.relations)
    if p.category in ("Attribute", "Complex"):
        return n < 2 and not any(p.entities[0].attributes)
    if p.category == "Layout":
        return not p.relations and not p.counts
    return n < 2


def slot_signature(p: StructuredPrompt):
    """Multisets of the values filling each binding slot type, ignoring which object holds them."""
    return (
        frozenset(e.object for e in p.entities),
        Counter(a for e in p.entities for a in e.attributes),
        Counter(c for _, c in p.counts),
        Counter((r.kind, r.phrase, frozenset((p.entities[r.subject].object, p.entities[r.object].object)))
                for r in p.relations),
    )


# -- gradient checking


def random_simpo_case(rng, vocab=5, max_len=4, buckets=2, batch=3):
    from ospo.simpo import PreferenceRecord, SimpoConfig, ToyPolicy

    policy = ToyPolicy.random(rng, vocab, max_len, buckets, scale=1.0)
    recs = []
    for i in range(batch):
        yw = tuple(int(t) for t in rng.integers(vocab, size=int(rng.integers(1, max_len + 1))))
        yl = tuple(int(t) for t in rng.integers(vocab, size=int(rng.integers(1, max_len + 1))))
        recs.append(PreferenceRecord(f"prompt {int(rng.integers(1 << 20))}", yw, yl))
    cfg = SimpoConfig(beta=float(rng.uniform(0.5, 10.0)), gamma=float(rng.uniform(0.0, 5.0)),
                      vocab_size=vocab, max_len=max_len, buckets=buckets)
    return policy, recs, cfg


def finite_difference(policy, batch, cfg, h=1e-4):
    from ospo.simpo import simpo_loss

    theta = policy.theta
    num = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        old = theta[idx]
        theta[idx] = old + h
        up = simpo_loss(policy, batch, cfg, with_grad=False)[0]
        theta[idx] = old - h
        down = simpo_loss(policy, batch, cfg, with_grad=False)[0]
        theta[idx] = old
        num[idx] = (up - down) / (2 * h)
    return num


def relative_error(analytic, numeric):
    """max |a - n| relative to the larger of the two gradients' max-norms."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max())
    return 0.0 if scale == 0 else float(np.abs(analytic - numeric).max() / scale)
