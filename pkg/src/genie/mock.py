"""Keyword-driven responder that lets MockBackend imitate an extraction model.

Answers are a deterministic function of (model id, prompt). Per-model noise
flips labels and per-model sloppiness damages JSON, so different simulated
models land at different accuracy and parse-rate levels.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from .backend import ModelRef, stable_fraction
from .geonorm import default_gazetteer, fold
from .prompts import IMPACT_CATEGORIES, category_field_name, load_template

IMPACT_KEYWORDS = {
    "agriculture": ("agricult", "cosecha", "cultivo", "crop", "harvest", "cereal", "olivar", "regad"),
    "livestock": ("ganad", "livestock", "cattle", "pasto", "sheep", "oveja", "pienso"),
    "hydrological_resources": ("embalse", "reservoir", "acuifer", "aquifer", "caudal", "agua potable", "water supply"),
    "energy": ("hidroelectric", "hydroelectric", "energ", "electric"),
}
RELEVANCE_KEYWORDS = ("sequia", "drought", "escasez de agua", "falta de lluvia")

_TEXT_MARKERS = ("\nText:\n", "\nArticle to analyze:\n")
_FORMAT_MARK = "\n\nFormat instructions:"
_SC_MARK = "And the following response:\n"
_SC_TAIL = "\n\nAnalyze the response"
_LINE_RE = re.compile(r"^-\s*([a-z_ ]+):\s*(yes|no)\s*$", re.MULTILINE)
_PROVINCES_RE = re.compile(r"^Provinces:\s*(.*)$", re.MULTILINE)


def _body(prompt: str) -> str:
    """The text the prompt asks about, stripped of trailing instructions."""
    cut = -1
    for m in _TEXT_MARKERS:
        i = prompt.rfind(m)
        if i > cut:
            cut, mark = i, m
    text = prompt[cut + len(mark):] if cut >= 0 else prompt
    text = text.split(_FORMAT_MARK, 1)[0]
    cot = load_template("cot.txt").strip()
    return text.replace(cot, "").strip()


def _fold_text(text: str) -> str:
    return " " + fold(text) + " "


def _find_provinces(text: str) -> list[str]:
    g = default_gazetteer()
    hay = _fold_text(text)
    found = []
    for key, canon in sorted(g._index.items()):
        if f" {key} " in hay and canon not in found:
            found.append(canon)
    return sorted(found)


@dataclass
class KeywordResponder:
    """Callable ``(model, prompt) -> reply`` for MockBackend.

    ``noise`` maps model id to the probability of flipping each boolean or
    dropping each province; ``sloppy`` maps model id to the probability of a
    trailing comma in emitted JSON.
    """

    noise: Mapping[str, float] = field(default_factory=dict)
    sloppy: Mapping[str, float] = field(default_factory=dict)
    summary_words: int = 80
    location_field: str = "response"

    def __call__(self, model: ModelRef, prompt: str) -> Any:
        if prompt.startswith("Summarize the following"):
            words = _body(prompt).split()
            return "Summary: " + " ".join(words[: self.summary_words])
        if prompt.startswith("Given the following prompt:"):
            return self._criticize(prompt)
        if prompt.startswith("Extract "):
            return self._reformat(model, prompt)
        return self._extract(model, prompt)

    # answer construction

    def _task(self, prompt: str) -> str:
        if "list of affected provinces" in prompt or "the provinces" in prompt:
            return "locations"
        if "aspects to consider" in prompt or "impact of" in prompt:
            return "impacts"
        return "relevance"

    def _flip(self, model: ModelRef, text: str, key: str) -> bool:
        return stable_fraction(model.id, text, key) < self.noise.get(model.id, 0.0)

    def _answer(self, model: ModelRef, task: str, text: str) -> dict:
        folded = _fold_text(text)
        if task == "impacts":
            out = {}
            for cat in IMPACT_CATEGORIES:
                name = category_field_name(cat)
                hit = any(k in folded for k in IMPACT_KEYWORDS.get(name, (fold(cat),)))
                out[name] = hit != self._flip(model, text, name)
            return out
        if task == "relevance":
            hit = any(k in folded for k in RELEVANCE_KEYWORDS)
            return {"drought": hit != self._flip(model, text, "drought")}
        provinces = [p for p in _find_provinces(text) if not self._flip(model, text, p)]
        return {self.location_field: provinces}

    def _json(self, model: ModelRef, prompt: str, obj: dict) -> str:
        s = json.dumps(obj, ensure_ascii=False, indent=4)
        if stable_fraction(model.id, prompt, "sloppy") < self.sloppy.get(model.id, 0.0):
            s = s[:-2] + ",\n}"
        return s

    def _free_text(self, task: str, obj: dict) -> str:
        if task == "locations":
            return "Provinces: " + ", ".join(obj[self.location_field])
        lines = [f"- {k.replace('_', ' ')}: {'yes' if v else 'no'}" for k, v in obj.items()]
        return "Assessment:\n" + "\n".join(lines)

    def _extract(self, model: ModelRef, prompt: str) -> Any:
        task = self._task(prompt)
        obj = self._answer(model, task, _body(prompt))
        cot = load_template("cot.txt").strip() in prompt
        lead = "Reasoning: the article was read aspect by aspect.\n\n" if cot else ""
        if _FORMAT_MARK in prompt:
            body = self._json(model, prompt, obj)
            return lead + (f"```json\n{body}\n```" if cot else body)
        return {"text": lead + self._free_text(task, obj), "tool_call": obj}

    def _criticize(self, prompt: str) -> Any:
        i = prompt.find(_SC_MARK)
        response = prompt[i + len(_SC_MARK):].split(_SC_TAIL, 1)[0]
        try:
            obj = json.loads(response)
        except ValueError:
            return response
        return {"text": response, "tool_call": obj} if isinstance(obj, dict) else response

    def _reformat(self, model: ModelRef, prompt: str) -> Any:
        text = _body(prompt)
        if "the provinces" in prompt:
            m = _PROVINCES_RE.search(text)
            names = [x.strip() for x in m.group(1).split(",") if x.strip()] if m else []
            obj: dict = {self.location_field: names}
        else:
            obj = {k.strip().replace(" ", "_"): v == "yes" for k, v in _LINE_RE.findall(text)}
            if not obj and text.startswith("{"):
                try:
                    obj = json.loads(text)
                except ValueError:
                    obj = {}
        if _FORMAT_MARK in prompt:
            return self._json(model, prompt, obj)
        return {"text": json.dumps(obj, ensure_ascii=False), "tool_call": obj}
