"""In-context message templates for backend mode, and parsers for their transcripts.

Messages are lists of ``(role, text)`` pairs; roles are ``system``, ``user``
and ``assistant``.
"""

from __future__ import annotations

import re

from ospo.errors import TranscriptParseError

Messages = list[tuple[str, str]]

_KEYWORD_SYSTEM = {
    "objects": "You are a helpful assistant that generates common object spanning various categories, including "
               "animals, plants, fruits, household items, clothing, vehicles, food, musical instruments, and "
               "electronic devices.",
    "colors": "You are a helpful assistant that generates common colors spanning various categories, including "
              "animals, plants, fruits, household items, clothing, vehicles, food, musical instruments, and "
              "electronic devices.",
    "shapes": "You are a helpful assistant that generates common shape spanning various categories, including "
              "animals, plants, fruits, household items, clothing, vehicles, food, musical instruments, and "
              "electronic devices.\nAvoid containing objects names in the output.",
    "textures": "You are a helpful assistant that generates common texture spanning various categories, including "
                "animals, plants, fruits, household items, clothing, vehicles, food, musical instruments, and "
                "electronic devices.",
    "spatial": "You are a helpful assistant that generates common spatial relative word or phrase spanning various "
               "categories, including animals, plants, fruits, household items, clothing, vehicles, food, musical "
               "instruments, and electronic devices.\nContain only one spatial relative phrase.\nAvoid compound "
               "spatial relative word such as farther up for the right of, closer down for the left of, etc.\n"
               "Avoid containing objects names such as image, window, screen, etc. in the output.",
}

_KEYWORD_USER = {
    "objects": "Generate common objects spanning various categories.",
    "colors": "Generate common colors spanning various categories.\nOutput only simple color names "
              "(e.g., red, blue, gray). Avoid compound colors (e.g., dark gray, light blue).",
    "shapes": "Generate common shape spanning various categories.\nAvoid compound shape.\n"
              "Avoid object names like car, house...",
    "textures": "Generate common texture spanning various categories.\nAvoid compound texture.",
    "spatial": "Generate common spatial relative word or phrase spanning various categories.\n"
               "Avoid compound spatial relative word.",
}

_KEYWORD_SHOTS = {
    "objects": ("dog, rose, apple, chair, shirt, car, pizza, guitar, cell phone",
                "cat, cactus, banana, sofa, jacket, bicycle, sushi, piano, laptop"),
    "colors": ("red, blue, green, yellow, black, white, orange, pink, purple, brown",
               "cyan, magenta, lime, indigo, teal, navy, beige, maroon, olive, gold"),
    "shapes": ("diamond, square, pyramidal, triangular, rectangular, oval, short, teardrop, cubic, oblong",
               "circular, small, spherical, conical, cylindrical, heart, big, spiral, tall"),
    "textures": ("rubber, metallic, leather, fabric, wooden, rough, smooth, soft, fluffy, glass",
                 "gritty, silky, woolly, grainy, velvety, bumpy, slick, crinkled, coarse, porous"),
    "spatial": ("in the left of, among, above, below, beside, opposite to, next to, above of, below of, beside of",
                "in the right of, in the middle of, in front of, hidden by, top of, next to"),
}


def keyword_messages(pool: str) -> Messages:
    user = _KEYWORD_USER[pool]
    msgs: Messages = [("system", _KEYWORD_SYSTEM[pool])]
    for shot in _KEYWORD_SHOTS[pool]:
        msgs += [("user", user), ("assistant", shot)]
    msgs.append(("user", user))
    return msgs


_GEN_SYSTEM = {
    "NonSpatial": "You are an assistant dedicated to generating natural prompts that contain subjects and objects by "
                  "using nonspatial relationship words such as wear, watch, speak, hold, have, run, look at, talk to, "
                  "jump, play, walk with, stand on, and sit on.",
    "Complex": "You are an assistant dedicated to generating natural compositional phrases or prompts, containing "
               "multiple objects (number >= 2) with one or several adjectives from color, shape, and texture "
               "descriptions and spatial (left/right/top/bottom/next to/near/on side of) or nonspatial relationships.",
}
_GEN_USER = {
    "NonSpatial": "Generate a prompt that contains subjects and objects by using non-spatial relationship words.",
    "Complex": "Please generate a compositional phrase or sentence containing multiple objects with one or several "
               "adjectives and relationships.",
}
_GEN_SHOTS = {
    "NonSpatial": ("Two friends are watching a movie together on a large TV screen.",
                   "Two athletes are running along the beach as the sun sets behind them."),
    "Complex": ("The fluffy white cat sat next to the black leather couch.",
                "The sleek black phone rested beside the textured brown leather wallet.",
                "The red spherical balloon floated above the striped rectangular kite and the green triangular flag."),
}


def prompt_generation_messages(category: str) -> Messages:
    msgs: Messages = [("system", _GEN_SYSTEM[category])]
    for shot in _GEN_SHOTS[category]:
        msgs += [("user", _GEN_USER[category]), ("assistant", shot)]
    msgs.append(("user", _GEN_USER[category]))
    return msgs


# -------------------------------------------------------------- densification

_DENSE_SYSTEM = (
    "You are an expert prompt engineer for text-to-image models. Your job is to take short and vague prompts and "
    "expand them into detailed, descriptive, and unambiguous prompts suitable for high-quality image generation.\n"
    "Focus on using full sentences and include visual attributes such as {focus}.\n"
    "Avoid abstract or subjective words and instead use concrete and visual language.\n"
    "Do not invent unrelated concepts; Only expand and clarify the given prompt.\n"
    "Follow these steps:\n"
    "Step 1. Extract all objects and their visual attributes from Prompt 1.\n"
    "Step 2. For Prompt 1, write a long, rich description that includes all identified objects and attributes "
    "from Step 1.\n"
    "Step 3. Extract all objects and their visual attributes from Prompt 2.\n"
    "Step 4. For Prompt 2, write a long, rich description that includes all identified objects and attributes "
    "from Step 3.\n"
    "Ensure both outputs share a similar global context or scene."
)
_DENSE_FOCUS = {
    "attribute": "objects, colors, texture, shape",
    "spatial": "objects and 2d, 3d spatial relations",
    "numeracy": "objects and numeracy",
    "nonspatial": "actions",
    "complex": "objects, colors, texture, shape",
}
_DENSE_ASK = {
    "nonspatial": "Generate dense, detailed prompts. Ensure both outputs share a similar global context or scene but "
                  "have different action-related (non-spatial) bindings. Let's think step by step.",
}
_DENSE_ASK_DEFAULT = ("Generate dense, detailed prompts. Ensure both outputs share a similar global context or scene "
                      "but have different object-attribute bindings. Let's think step by step.")

_DENSE_SHOTS = {
    "attribute": [
        ("A large watermelon", "A small watermelon",
         "Step 1. Prompt 1 Object Bindings: watermelon-['large']\n"
         "Step 2. Prompt 1 Dense: A large, ripe watermelon with deep green rinds and faint striping rests heavily in "
         "a handwoven wicker basket placed on the grass under dappled sunlight beside a weathered garden shed.\n"
         "Step 3. Prompt 2 Object Bindings: watermelon-['small']\n"
         "Step 4. Prompt 2 Dense: A small, round watermelon with bright green skin and subtle mottling sits neatly in "
         "a handwoven wicker basket placed on the grass under dappled sunlight beside a weathered garden shed."),
        ("A peach tree and a square computer keyboard", "An orange tree and a square keyboard",
         "Step 1. Prompt 1 Object Bindings: tree-['peach']; keyboard-['square', 'computer']\n"
         "Step 2. Prompt 1 Dense: A peach tree in full bloom stands beside a sleek, square-shaped computer keyboard "
         "resting on a polished wooden desk, with soft morning sunlight streaming through the windows of a quiet "
         "home office.\n"
         "Step 3. Prompt 2 Object Bindings: tree-['orange']; keyboard-['square']\n"
         "Step 4. Prompt 2 Dense: An orange tree with lush green leaves and dangling fruit stands beside a sleek, "
         "square-shaped computer keyboard resting on a polished wooden desk, with soft morning sunlight streaming "
         "through the windows of a quiet home office."),
    ],
    "spatial": [
        ("A tall cactus behind a metal chair", "A short cactus in front of a metal chair",
         "Step 1. Prompt 1 Object Bindings: ['tall cactus', 'behind', 'metal chair']\n"
         "Step 2. Prompt 1 Dense: A tall green cactus in a terracotta pot stands behind a minimalist metal chair on "
         "a sunlit balcony, its spines casting elongated shadows across the concrete floor.\n"
         "Step 3. Prompt 2 Object Bindings: ['short cactus', 'in front of', 'metal chair']\n"
         "Step 4. Prompt 2 Dense: A short, stubby cactus in a terracotta pot sits in front of a minimalist metal "
         "chair on a sunlit balcony, its compact form creating a rounded shadow on the concrete floor."),
    ],
    "numeracy": [
        ("Two apples and four oranges.", "Five bananas and one pear.",
         "Step 1. Prompt 1 Object Bindings: ['two', 'apples']; ['four', 'oranges']\n"
         "Step 2. Prompt 1 Dense: Two shiny red apples lie beside four plump oranges in a shallow wicker basket "
         "placed on a sunny kitchen counter.\n"
         "Step 3. Prompt 2 Object Bindings: ['five bananas', 'one pear']\n"
         "Step 4. Prompt 2 Dense: Five curved yellow bananas are stacked casually beside a single ripe green pear on "
         "the same wicker basket atop a bright kitchen counter."),
    ],
    "nonspatial": [
        ("A child is crouched in the garden, digging into the soil with a small trowel.",
         "A child is crouched in the garden, observing ants crawling across a rock with great fascination.",
         "Step 1. Prompt 1 Object Bindings: child-['crouched', 'digging soil']; tool-['small trowel']; garden\n"
         "Step 2. Prompt 1 Dense: A child crouches low in a sunny backyard garden, using a small blue trowel to dig "
         "carefully into the soft soil, their sleeves rolled up and cheeks dusted with earth.\n"
         "Step 3. Prompt 2 Object Bindings: child-['crouched', 'observing ants']; rock; garden\n"
         "Step 4. Prompt 2 Dense: A child crouches in the same garden, completely absorbed in watching a trail of "
         "ants move across a mossy rock, their eyes wide with curiosity as they follow each tiny movement."),
    ],
}
_DENSE_SHOTS["complex"] = _DENSE_SHOTS["attribute"]


def densify_variant(category: str, numeracy: bool = False) -> str:
    if category == "Layout":
        return "numeracy" if numeracy else "spatial"
    return {"Attribute": "attribute", "NonSpatial": "nonspatial", "Complex": "complex"}[category]


def densify_user_message(variant: str, base: str, negative: str) -> str:
    return f"Prompt 1: {base}\nPrompt 2: {negative}\n{_DENSE_ASK.get(variant, _DENSE_ASK_DEFAULT)}"


def densify_messages(variant: str, base: str, negative: str) -> Messages:
    msgs: Messages = [("system", _DENSE_SYSTEM.format(focus=_DENSE_FOCUS[variant]))]
    for b, n, answer in _DENSE_SHOTS[variant]:
        msgs += [("user", densify_user_message(variant, b, n)), ("assistant", answer)]
    msgs.append(("user", densify_user_message(variant, base, negative)))
    return msgs


_DENSE_RE = {
    1: re.compile(r"Step 2\.\s*Prompt 1 Dense:\s*(.+?)\s*(?=Step 3\.|$)", re.S),
    2: re.compile(r"Step 4\.\s*Prompt 2 Dense:\s*(.+?)\s*(?=Step 5\.|$)", re.S),
}


def parse_densify_transcript(text: str) -> tuple[str, str]:
    """Extract the two dense prompts from a Step 1..Step 4 transcript."""
    out = []
    for k in (1, 2):
        m = _DENSE_RE[k].search(text)
        if not m or not m.group(1).strip():
            raise TranscriptParseError(f"missing 'Prompt {k} Dense' step in transcript: {text[:200]!r}")
        out.append(" ".join(m.group(1).split()))
    return out[0], out[1]


# ------------------------------------------------------------- VQA questions

_VQA_SYSTEM = ("You are an assistant dedicated to transforming a sentence into several questions. You should first "
               "divide it into simple concepts and relations, and then provide the corresponding questions. Avoid "
               "using pronouns, such as he, she, it, and they.")
_VQA_SHOTS = {
    "attribute": [
        ("A white harp and a rust soup.",
         "Concepts and relations: a white harp, a rust soup; Questions: Is there a white harp? Is there a rust soup?"),
        ("Shiny mop and metal key holder.",
         "Concepts and relations: a shiny mop, a metal key holder; Questions: Is there a shiny mop? "
         "Is there a metal key holder?"),
    ],
    "layout": [
        ("A pancake on the left of a pasta.",
         "Concepts and relations: a pancake, a pasta, a pancake is on the left of a pasta; Questions: Is there a "
         "pancake? Is there a pasta? Is a pancake on the left of a pasta?"),
        ("Three light bulbs and eight pumpkins.",
         "Concepts and relations: three light bulbs, eight pumpkins; Questions: Are there three light bulbs? "
         "Are there eight pumpkins?"),
    ],
    "composition": [
        ("A chef is holding a knife and preparing a dish on the stove.",
         "Concepts and relations: a chef, a knife, a dish, the stove, a chef is holding a knife, a chef is preparing "
         "a dish; Questions: Is there a chef? Is there a knife? Is there a dish? Is there a stove? Is a chef holding "
         "a knife? Is a chef preparing a dish?"),
    ],
}


def question_messages(category: str, prompt: str) -> Messages:
    variant = {"Attribute": "attribute", "Layout": "layout"}.get(category, "composition")
    msgs: Messages = [("system", _VQA_SYSTEM)]
    for u, a in _VQA_SHOTS[variant]:
        msgs += [("user", u), ("assistant", a)]
    msgs.append(("user", prompt))
    return msgs


def parse_question_transcript(text: str) -> list[str]:
    m = re.search(r"Questions:\s*(.+)", text, re.S)
    if not m:
        raise TranscriptParseError(f"no 'Questions:' segment in transcript: {text[:200]!r}")
    qs = [q.strip() + "?" for q in m.group(1).split("?") if q.strip()]
    if not qs:
        raise TranscriptParseError("empty 'Questions:' segment")
    return qs
