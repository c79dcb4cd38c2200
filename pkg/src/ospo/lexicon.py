"""Static vocabularies and English surface helpers (articles, plurals, numbers)."""

from __future__ import annotations

OBJECTS = (
    # people and animals (the first block doubles as the actor list)
    "man", "woman", "child", "girl", "boy", "chef", "teacher", "farmer",
    "dog", "cat", "horse", "rabbit", "monkey", "bear", "bird", "owl",
    "elephant", "giraffe", "sheep", "cow", "pig", "duck", "mouse", "fox",
    # plants, fruit and food
    "rose", "cactus", "tulip", "sunflower", "tree", "leaf", "apple", "banana",
    "watermelon", "mango", "pear", "strawberry", "cherry", "tomato", "sweet potato", "pumpkin",
    "carrot", "pizza", "sushi", "pancake", "pasta", "sandwich", "donut", "cake",
    "cookie", "egg",
    # household items and furniture
    "chair", "sofa", "desk", "bench", "table", "lamp", "light bulb", "clock",
    "mirror", "vase", "candle", "pillow", "blanket", "rug", "bowl", "plate",
    "cup", "coffee cup", "teapot", "spoon", "knife", "bottle", "basket", "box",
    "book", "key", "towel", "bucket",
    # clothing
    "shirt", "jacket", "hat", "scarf", "shoe", "boot", "dress", "sock",
    "glove", "backpack", "blouse", "sweatshirt",
    # vehicles
    "car", "bicycle", "bus", "truck", "boat", "train", "airplane", "motorcycle",
    "tire", "lantern",
    # instruments
    "guitar", "piano", "violin", "drum", "flute", "trumpet", "harp", "xylophone",
    # electronics
    "laptop", "cell phone", "computer", "keyboard", "camera", "television", "microwave oven", "radio",
    # misc
    "ball", "kite", "umbrella", "balloon",
)

ACTORS = OBJECTS[:24]

COLORS = (
    "red", "blue", "green", "yellow", "black", "white", "orange", "pink", "purple", "brown",
    "cyan", "magenta", "lime", "indigo", "teal", "navy", "beige", "maroon", "olive", "gold",
    "silver", "gray", "violet", "turquoise", "crimson", "scarlet", "amber", "ivory", "lavender", "coral",
    "mint", "khaki", "tan", "charcoal", "cream", "burgundy", "mauve", "ochre", "aqua", "azure",
    "cobalt", "emerald", "jade", "ruby", "sapphire", "lilac", "plum", "rust", "sepia", "taupe",
    "fuchsia", "vermilion", "cerulean", "chartreuse", "saffron", "mustard", "salmon", "periwinkle", "sienna", "umber",
    "ebony", "copper", "bronze", "platinum", "blush", "denim", "sand", "slate", "cinnamon", "auburn",
)

SHAPES = (
    "diamond", "square", "pyramidal", "triangular", "rectangular", "oval", "short", "teardrop", "cubic", "oblong",
    "circular", "small", "spherical", "conical", "cylindrical", "heart-shaped", "big", "spiral", "tall", "round",
    "flat", "curved", "hexagonal", "octagonal", "pentagonal", "star-shaped", "crescent", "elliptical", "long", "wide",
    "narrow", "thin", "thick", "tiny", "huge", "giant", "slender", "stubby", "angular", "boxy",
    "bulbous", "domed", "arched", "tapered", "pointed", "jagged", "wavy", "zigzag", "twisted", "coiled",
    "hollow", "rounded", "squat", "lanky", "compact", "massive", "miniature", "skinny", "chunky", "broad",
    "asymmetrical", "symmetrical", "ring-shaped", "cross-shaped", "fan-shaped", "bell-shaped", "egg-shaped",
    "kidney-shaped", "trapezoidal", "semicircular",
)

TEXTURES = (
    "rubber", "metallic", "leather", "fabric", "wooden", "rough", "smooth", "soft", "fluffy", "glass",
    "gritty", "silky", "woolly", "grainy", "velvety", "bumpy", "slick", "crinkled", "coarse", "porous",
    "plastic", "ceramic", "marble", "stone", "furry", "fuzzy", "glossy", "matte", "shiny", "polished",
    "rusty", "wrinkled", "scaly", "spiky", "prickly", "sandy", "muddy", "icy", "frosted", "knitted",
    "woven", "quilted", "embroidered", "lacy", "satin", "suede", "corduroy", "cotton", "linen", "wicker",
    "bamboo", "paper", "cardboard", "concrete", "brick", "tiled", "granite", "crystal", "porcelain", "steel",
    "iron", "aluminum", "chrome", "waxy", "sticky", "slimy", "feathery", "hairy", "knotted", "pebbled",
)

SPATIAL_2D = (
    "on the left of", "on the right of", "on top of", "at the bottom of", "above",
    "below", "next to", "beside", "near", "on the side of",
    "to the left of", "to the right of", "over", "under", "beneath",
    "across from", "alongside", "adjacent to", "at the top of", "close to",
)

SPATIAL_3D = (
    "in front of", "behind", "hidden by", "inside", "in the middle of",
    "among", "opposite to", "facing", "surrounded by", "within",
    "enclosed by", "in the back of", "in the foreground of", "in the background of", "obscured by",
    "tucked behind", "peeking out from", "nestled in", "leaning against", "resting against",
)

SPATIAL = SPATIAL_2D + SPATIAL_3D

# markers used to classify spatial phrases that did not come from the builtin lists
_DEPTH_MARKERS = ("front", "behind", "hidden", "inside", "middle", "among", "opposite", "facing",
                  "surround", "within", "enclosed", "back", "foreground", "background", "obscur",
                  "tucked", "peek", "nestled", "leaning", "against", "in")

ACTIONS = (
    "holding", "watching", "riding", "carrying", "pushing", "pulling", "looking at", "sitting on",
    "standing on", "playing with", "walking with", "talking to", "wearing", "eating", "chasing", "kicking",
    "throwing", "painting", "feeding", "cleaning", "reading", "hugging", "lifting", "touching",
    "smelling", "jumping over", "catching", "dragging", "biting", "licking",
)

SETTINGS = (
    "in a sunlit kitchen", "in a quiet home office", "on a grassy meadow", "in a cozy living room",
    "on a sandy beach", "in a misty forest", "on a busy city street", "in a small garden",
    "in a mountain cabin", "in a bright studio", "on a wooden porch", "in an empty classroom",
)
LIGHTING = (
    "under soft morning light", "at golden hour", "under warm lamplight", "on an overcast afternoon",
    "under bright noon sun", "in the blue light of dusk", "under dappled sunlight", "in diffuse studio light",
)
PLACEMENTS = (
    "arranged on a low table", "set on a woven rug", "placed on a stone ledge", "resting on a wooden floor",
    "laid out on a linen cloth", "set against a plain wall", "gathered on a wide shelf", "placed on a tiled counter",
)
CONTEXT_PHRASES = SETTINGS + LIGHTING + PLACEMENTS

NUMBER_WORDS = ("one", "two", "three", "four", "five", "six", "seven", "eight", "nine")
MAX_COUNT = 20

_IRREGULAR = {
    "man": "men", "woman": "women", "child": "children", "mouse": "mice", "sheep": "sheep",
    "leaf": "leaves", "knife": "knives", "scarf": "scarves", "fish": "fish", "person": "people",
    "goose": "geese", "foot": "feet", "tooth": "teeth", "wolf": "wolves", "shelf": "shelves",
    "cactus": "cacti", "tomato": "tomatoes", "potato": "potatoes", "headphones": "headphones",
    "loaf": "loaves", "ox": "oxen",
}


def pluralize(noun: str) -> str:
    """Plural of a (possibly multi-word) noun; only the head word inflects."""
    head, _, last = noun.rpartition(" ")
    prefix = head + " " if head else ""
    if last in _IRREGULAR:
        return prefix + _IRREGULAR[last]
    if last.endswith(("s", "x", "z", "ch", "sh")):
        return prefix + last + "es"
    if last.endswith("y") and len(last) > 1 and last[-2] not in "aeiou":
        return prefix + last[:-1] + "ies"
    return prefix + last + "s"


def article(word: str) -> str:
    return "an" if word[:1] in "aeiou" else "a"


def with_article(phrase: str) -> str:
    return f"{article(phrase)} {phrase}"


def number_word(n: int) -> str:
    if n < 1:
        raise ValueError(f"count must be >= 1, got {n}")
    return NUMBER_WORDS[n - 1] if n <= 9 else str(n)


def parse_number(token: str) -> int | None:
    if token in NUMBER_WORDS:
        return NUMBER_WORDS.index(token) + 1
    if token.isdigit() and int(token) >= 1:
        return int(token)
    return None


def counted(n: int, noun: str) -> str:
    return f"{number_word(n)} {noun if n == 1 else pluralize(noun)}"


def spatial_kind(phrase: str) -> str:
    if phrase in SPATIAL_2D:
        return "spatial2d"
    if phrase in SPATIAL_3D:
        return "spatial3d"
    words = phrase.split()
    if any(w.startswith(m) for w in words for m in _DEPTH_MARKERS if m != "in") or words[:1] == ["in"]:
        return "spatial3d"
    return "spatial2d"
