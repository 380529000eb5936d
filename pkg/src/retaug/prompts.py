"""Class-name strings and query/sampling prompts built from WordNet synsets.

All functions are pure and deterministic: template sampling runs off an
explicit seed, so every emitted prompt is reproducible from
(method, template_id, wnid, seed).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .errors import EmptyResult, MissingDefinition, MissingHypernym, TemplateFileMissing


class PromptMethod(str, Enum):
    SIMPLE = "simple"
    SIMPLE_NO_WS = "simple-no-ws"
    CLIP = "clip"
    CATEGORY = "sariyildiz"


class MultiTokenRule(str, Enum):
    SINGLE = "single"
    MEAN_OF_EMBEDDINGS = "mean-of-embeddings"


@dataclass(frozen=True)
class ClassSynset:
    """A target class: WordNet id plus its surface spellings."""

    wnid: str
    lemmas: tuple[str, ...]
    hypernym_lemmas: tuple[str, ...] = ()
    definition: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lemmas", tuple(self.lemmas))
        object.__setattr__(self, "hypernym_lemmas", tuple(self.hypernym_lemmas))
        if not self.lemmas or any(not lemma.strip() for lemma in self.lemmas):
            raise ValueError(f"synset {self.wnid!r} needs non-empty lemmas")


@dataclass(frozen=True)
class PromptSpec:
    class_wnid: str
    method: PromptMethod
    template_id: int
    text: str


@dataclass(frozen=True)
class PseudowordInit:
    """Seed word for pseudo-word conditioning; tokenization happens downstream."""

    word: str
    multi_token_rule: MultiTokenRule


def class_name(synset: ClassSynset) -> str:
    """Join the synset's lemmas with ", " in synset order."""
    return ", ".join(synset.lemmas)


def strip_whitespace(name: str) -> str:
    """Remove every Unicode whitespace character, keeping all else in order."""
    stripped = "".join(name.split())
    if not stripped:
        raise EmptyResult(f"stripping whitespace from {name!r} left nothing")
    return stripped


def simple_prompt(synset: ClassSynset, no_ws: bool) -> PromptSpec:
    name = class_name(synset)
    if no_ws:
        name = strip_whitespace(name)
    return PromptSpec(
        class_wnid=synset.wnid,
        method=PromptMethod.SIMPLE_NO_WS if no_ws else PromptMethod.SIMPLE,
        template_id=0,
        text=f"A photo of {name}.",
    )


def _load_data_text(filename: str) -> str:
    try:
        return resources.files("retaug.data").joinpath(filename).read_text(encoding="utf-8")
    except (FileNotFoundError, ModuleNotFoundError) as exc:
        raise TemplateFileMissing(f"bundled data file {filename!r} not found") from exc


def clip_templates() -> list[str]:
    """The bundled list of CLIP-style caption templates (fixed, versioned)."""
    lines = [line for line in _load_data_text("clip_templates.txt").splitlines() if line]
    return lines


def sample_clip_prompt(synset: ClassSynset, rng_seed: int) -> PromptSpec:
    """Pick one caption template uniformly (seeded) and fill in w(name)."""
    templates = clip_templates()
    template_id = random.Random(rng_seed).randrange(len(templates))
    word = strip_whitespace(class_name(synset))
    return PromptSpec(
        class_wnid=synset.wnid,
        method=PromptMethod.CLIP,
        template_id=template_id,
        text=templates[template_id].replace("{}", word),
    )


def category_templates() -> list[dict]:
    """Category-tagged template config: name-only, +hypernym, +multiplicity,
    +definition, and +background families."""
    return json.loads(_load_data_text("category_templates.json"))["categories"]


def _first_hypernym(synset: ClassSynset) -> str:
    if not synset.hypernym_lemmas or not synset.hypernym_lemmas[0].strip():
        raise MissingHypernym(f"synset {synset.wnid!r} has no hypernym lemma")
    return synset.hypernym_lemmas[0]


def sariyildiz_prompts(
    synset: ClassSynset,
    backgrounds: list[str],
    per_category: int,
    rng_seed: int,
) -> list[PromptSpec]:
    """Emit per_category prompts for each of the five template categories.

    Template variants within a category and backgrounds are sampled uniformly
    with replacement; the whole list is deterministic under rng_seed.
    """
    if per_category < 1:
        raise ValueError(f"per_category must be >= 1, got {per_category}")
    categories = category_templates()
    rng = random.Random(rng_seed)
    name = class_name(synset)

    # template_id is the position in the flattened file-order template list
    base_ids: dict[str, int] = {}
    next_id = 0
    for cat in categories:
        base_ids[cat["name"]] = next_id
        next_id += len(cat["templates"])

    prompts: list[PromptSpec] = []
    for cat in categories:
        needs = set(cat["requires"])
        if "background" in needs and not backgrounds:
            raise ValueError(f"category {cat['name']!r} needs a non-empty background list")
        fields = {"name": name}
        if "hypernym" in needs:
            fields["hypernym"] = _first_hypernym(synset)
        if "definition" in needs:
            if not synset.definition.strip():
                raise MissingDefinition(f"synset {synset.wnid!r} has no definition")
            fields["definition"] = synset.definition
        for _ in range(per_category):
            variant = rng.randrange(len(cat["templates"]))
            if "background" in needs:
                fields["background"] = backgrounds[rng.randrange(len(backgrounds))]
            prompts.append(
                PromptSpec(
                    class_wnid=synset.wnid,
                    method=PromptMethod.CATEGORY,
                    template_id=base_ids[cat["name"]] + variant,
                    text=cat["templates"][variant].format(**fields),
                )
            )
    return prompts


def pseudoword_init(synset: ClassSynset) -> PseudowordInit:
    """Last word of the first lemma; multi-token words average their embeddings."""
    word = synset.lemmas[0].split()[-1]
    return PseudowordInit(word=word, multi_token_rule=MultiTokenRule.MEAN_OF_EMBEDDINGS)


# -- JSON-lines I/O ---------------------------------------------------------


def load_synsets(path) -> list[ClassSynset]:
    """Read synsets from JSON-lines (wnid, lemmas, hypernyms, definition)."""
    synsets = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            synsets.append(
                ClassSynset(
                    wnid=obj["wnid"],
                    lemmas=tuple(obj["lemmas"]),
                    hypernym_lemmas=tuple(obj.get("hypernyms", ())),
                    definition=obj.get("definition", ""),
                )
            )
    return synsets


def dump_prompts(prompts, fh) -> None:
    for p in prompts:
        fh.write(
            json.dumps(
                {
                    "class_wnid": p.class_wnid,
                    "method": p.method.value,
                    "template_id": p.template_id,
                    "text": p.text,
                },
                ensure_ascii=False,
            )
            + "\n"
        )
