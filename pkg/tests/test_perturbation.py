from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import degenerate, random_prompt, slot_signature
from ospo.errors import BindingViolation, NotPerturbable
from ospo.perturbation import (KINDS, DensePromptPair, PerturbKind, densify_pair, eligible_targets,
                               missing_bindings, perturb)
from ospo.prompts import Entity, KeywordPools, StructuredPrompt, bindings, parse, values
from ospo.backend import SimulatorBackend

seeds = st.integers(0, 2**32 - 1)


def test_kind_order():
    assert list(PerturbKind) == [PerturbKind.SWAP, PerturbKind.REPLACE, PerturbKind.DROP]
    assert PerturbKind.SWAP < PerturbKind.REPLACE < PerturbKind.DROP
    assert PerturbKind.parse("Drop") is PerturbKind.DROP
    assert PerturbKind.parse(1) is PerturbKind.REPLACE


def test_swap_tire_desk(pools):
    p = parse("a rubber tire and a wooden desk", "Attribute", pools)
    assert perturb(p, PerturbKind.SWAP, pools, 0).surface == "a wooden tire and a rubber desk"


def test_drop_apples(pools):
    p = parse("two apples and a blouse", "Layout", pools)
    assert p.counts == ((0, 2),)
    out = perturb(p, PerturbKind.DROP, pools, 0, target=("entity", 1))
    assert out.surface == "two apples"


def test_replace_colors(pools):
    p = parse("a blue bench and a red car", "Attribute", pools)
    for seed in range(50):
        for t in eligible_targets(p, PerturbKind.REPLACE, pools):
            if t[0] != "attr":
                continue
            out = perturb(p, PerturbKind.REPLACE, pools, seed, target=t)
            new = out.entities[t[1]].attributes[0][1]
            assert new in pools.colors and new not in {"blue", "red"}


def test_nonspatial_swap_not_perturbable(pools):
    p = parse("a dog chasing a ball", "NonSpatial", pools)
    with pytest.raises(NotPerturbable):
        perturb(p, PerturbKind.SWAP, pools, 0)


def test_single_bare_object_drop(pools):
    p = parse("a car", "Attribute", pools)
    with pytest.raises(NotPerturbable):
        perturb(p, PerturbKind.DROP, pools, 0)


def test_pinned_target_must_be_eligible(pools):
    p = parse("a red car", "Attribute", pools)
    with pytest.raises(NotPerturbable):
        perturb(p, PerturbKind.DROP, pools, 0, target=("entity", 0))


@settings(max_examples=300, deadline=None)
@given(seeds, seeds, st.sampled_from(KINDS))
def test_structural_postconditions(pools, pseed, seed, kind):
    p = random_prompt(np.random.default_rng(pseed), pools)
    assert (not eligible_targets(p, kind, pools)) == degenerate(p, kind.label)
    if degenerate(p, kind.label):
        with pytest.raises(NotPerturbable):
            perturb(p, kind, pools, seed)
        return
    out = perturb(p, kind, pools, seed)
    assert out.category == p.category
    assert bindings(out) != bindings(p)
    if kind is PerturbKind.SWAP:
        assert slot_signature(out) == slot_signature(p)
    elif kind is PerturbKind.REPLACE:
        fresh = values(out) - values(p)
        assert fresh
    else:
        assert bindings(out) < bindings(p)


@settings(max_examples=100, deadline=None)
@given(seeds, seeds)
def test_swap_involution(pools, pseed, seed):
    p = random_prompt(np.random.default_rng(pseed), pools, "Attribute")
    targets = [t for t in eligible_targets(p, PerturbKind.SWAP, pools) if t[0] == "attrs"]
    if not targets:
        return
    t = targets[seed % len(targets)]
    once = perturb(p, PerturbKind.SWAP, pools, seed, target=t)
    back = perturb(once, PerturbKind.SWAP, pools, seed, target=t)
    assert bindings(back) == bindings(p)


@settings(max_examples=100, deadline=None)
@given(seeds, seeds)
def test_perturb_is_seed_deterministic(pools, pseed, seed):
    p = random_prompt(np.random.default_rng(pseed), pools)
    for kind in KINDS:
        try:
            a = perturb(p, kind, pools, seed)
        except NotPerturbable:
            continue
        assert a == perturb(p, kind, pools, seed)


def test_replace_freshness_from_pools(pools):
    rng = np.random.default_rng(4)
    allowed = set(pools.objects) | set(pools.colors) | set(pools.shapes) | set(pools.textures) \
        | set(pools.spatial) | set(pools.actions) | set(range(1, 10))
    for _ in range(500):
        p = random_prompt(rng, pools)
        try:
            out = perturb(p, PerturbKind.REPLACE, pools, int(rng.integers(1 << 30)))
        except NotPerturbable:
            continue
        assert (values(out) - values(p)) <= allowed


def test_replace_exhausted_pool():
    tiny = KeywordPools(objects=("cat", "dog"), colors=("red", "blue"), shapes=("round",), textures=("wooden",),
                        spatial=("on the left of",))
    p = parse("a red cat and a blue dog", "Attribute", tiny)
    assert not eligible_targets(p, PerturbKind.REPLACE, tiny)
    with pytest.raises(NotPerturbable):
        perturb(p, PerturbKind.REPLACE, tiny, 0)


# -- densification


def test_rule_densify_preserves_bindings(pools):
    rng = np.random.default_rng(2)
    for _ in range(200):
        base = random_prompt(rng, pools)
        for kind in KINDS:
            try:
                neg = perturb(base, kind, pools, 1)
            except NotPerturbable:
                continue
            pair = densify_pair(base, neg, kind, "rule", seed=9)
            assert bindings(pair.base_dense) == bindings(base)
            assert bindings(pair.negative_dense) == bindings(neg)
            assert pair.base_dense.context == pair.negative_dense.context == pair.shared_context
            assert pair.provenance == {"mode": "rule"}


def test_rule_densify_deterministic(pools):
    base = parse("a rubber tire and a wooden desk", "Attribute", pools)
    neg = perturb(base, PerturbKind.SWAP, pools, 0)
    a = densify_pair(base, neg, PerturbKind.SWAP, "rule", seed=5)
    b = densify_pair(base, neg, PerturbKind.SWAP, "rule", seed=5)
    assert a.shared_context == b.shared_context
    assert a.base_dense.surface.startswith("a rubber tire and a wooden desk, ")
    assert DensePromptPair.from_dict(a.to_dict()) == a


def test_backend_densify_watermelon(pools):
    sim = SimulatorBackend(pools)
    base = StructuredPrompt("Attribute", (Entity("watermelon", (("shape", "large"),)),), surface="A large watermelon")
    neg = StructuredPrompt("Attribute", (Entity("watermelon", (("shape", "small"),)),), surface="A small watermelon")
    pair = densify_pair(base, neg, PerturbKind.REPLACE, "backend", seed=0, backend=sim)
    assert pair.provenance["mode"] == "backend"
    assert "Step 4. Prompt 2 Dense:" in pair.provenance["transcript"]
    assert "handwoven wicker basket" in pair.base_dense.surface and "garden shed" in pair.base_dense.surface
    assert "large" in pair.base_dense.surface and "small" in pair.negative_dense.surface
    assert pair.shared_context and pair.base_dense.context == pair.negative_dense.context


class _LyingBackend:
    def text_complete(self, messages, seed=0):
        return ("Step 1. Prompt 1 Object Bindings: x\nStep 2. Prompt 1 Dense: a blue car in a garden.\n"
                "Step 3. Prompt 2 Object Bindings: y\nStep 4. Prompt 2 Dense: a green car in a garden.")


def test_backend_densify_fallback(pools):
    base = parse("a red car", "Attribute", pools)
    neg = parse("a green car", "Attribute", pools)
    pair = densify_pair(base, neg, PerturbKind.REPLACE, "backend", seed=0, backend=_LyingBackend())
    assert pair.provenance["mode"] == "rule" and pair.provenance["fallback"]
    assert pair.provenance["violations"] == ["red"]
    assert bindings(pair.base_dense) == bindings(base)
    with pytest.raises(BindingViolation):
        densify_pair(base, neg, PerturbKind.REPLACE, "backend", seed=0, backend=_LyingBackend(),
                     allow_fallback=False)


def test_missing_bindings(pools):
    p = parse("a red car", "Attribute", pools)
    assert missing_bindings(p, "a red car parked in the rain") == []
    assert missing_bindings(p, "a blue car") != []
