"""Checkpoint-name to canonical-name mapping, driven by a JSON manifest.

The mapping is data on purpose: when inspection of a real checkpoint
reveals a different layout (a fused projection, an extra wrapper prefix,
transposed linear weights), the fix is an edit to a manifest file, not a
code change.

Manifest grammar: a JSON object with a `rules` array, applied in order,
first full match wins. Each rule:

    {"match": "<regex>", "name": "<template>"}       rename
    {"match": "<regex>", "drop": true}                discard silently
    ... "transpose": [axes]                           permute axes
    ... "reshape": [dims]                             then reshape

`match` must cover the whole checkpoint name; `name` may use \\1-style
group references. Directives run transpose first, then reshape, on the
mapped tensor. Names matching no rule are reported as unmapped, never
silently dropped.
"""

import json
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ManifestError, MappingError


@dataclass(frozen=True)
class Rule:
    pattern: re.Pattern
    template: str | None      # None means drop
    transpose: tuple[int, ...] | None
    reshape: tuple[int, ...] | None

    def apply(self, src: str) -> tuple[bool, str | None]:
        """(matched, canonical name or None-for-drop)."""
        m = self.pattern.fullmatch(src)
        if not m:
            return False, None
        if self.template is None:
            return True, None
        return True, m.expand(self.template)


def _parse_rule(i: int, raw: dict) -> Rule:
    if not isinstance(raw, dict):
        raise ManifestError(f"rule {i}: not an object")
    unknown = set(raw) - {"match", "name", "drop", "transpose", "reshape",
                          "comment"}
    if unknown:
        raise ManifestError(f"rule {i}: unknown keys {sorted(unknown)}")
    try:
        pattern = re.compile(raw["match"])
    except KeyError:
        raise ManifestError(f"rule {i}: no match pattern") from None
    except re.error as e:
        raise ManifestError(f"rule {i}: bad pattern: {e}") from None
    drop = bool(raw.get("drop", False))
    template = raw.get("name")
    if drop == (template is not None):
        raise ManifestError(f"rule {i}: need exactly one of name/drop")
    for key in ("transpose", "reshape"):
        v = raw.get(key)
        if v is not None and not (isinstance(v, list) and
                                  all(isinstance(x, int) for x in v)):
            raise ManifestError(f"rule {i}: {key} must be a list of ints")
    return Rule(
        pattern=pattern,
        template=template,
        transpose=tuple(raw["transpose"]) if raw.get("transpose") else None,
        reshape=tuple(raw["reshape"]) if raw.get("reshape") else None,
    )


class NameMap:
    def __init__(self, rules: list[Rule]):
        self.rules = rules

    @classmethod
    def from_json(cls, text: str) -> "NameMap":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ManifestError(f"manifest is not valid JSON: {e}") from None
        if not isinstance(doc, dict) or not isinstance(doc.get("rules"), list):
            raise ManifestError("manifest must be an object with a rules array")
        return cls([_parse_rule(i, r) for i, r in enumerate(doc["rules"])])

    @classmethod
    def from_file(cls, path) -> "NameMap":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(f.read())

    @classmethod
    def bundled(cls, name: str) -> "NameMap":
        """A manifest shipped with the package (identity, reference)."""
        try:
            text = resources.files("ckpt_export.manifests") \
                .joinpath(f"{name}.json").read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ManifestError(f"no bundled manifest {name!r}") from None
        return cls.from_json(text)

    def map_tensors(self, tensors: dict[str, np.ndarray]):
        """Relabel a checkpoint's tensors.

        Returns (mapped, events): mapped is canonical name -> array with
        directives applied; events is one dict per source tensor, kinds
        `mapped`, `dropped`, `unmapped`. Duplicate canonical targets are
        an error, not a warning: the manifest is broken.
        """
        mapped: dict[str, np.ndarray] = {}
        origin: dict[str, str] = {}
        events = []
        for src, arr in tensors.items():
            for rule in self.rules:
                hit, dst = rule.apply(src)
                if not hit:
                    continue
                if dst is None:
                    events.append({"event": "dropped", "src": src})
                    break
                if dst in mapped:
                    raise MappingError(
                        f"both {origin[dst]!r} and {src!r} map to {dst!r}")
                out = arr
                if rule.transpose is not None:
                    if sorted(rule.transpose) != list(range(out.ndim)):
                        raise MappingError(
                            f"{src}: transpose {rule.transpose} does not fit "
                            f"rank {out.ndim}")
                    out = np.ascontiguousarray(out.transpose(rule.transpose))
                if rule.reshape is not None:
                    try:
                        out = np.ascontiguousarray(out).reshape(rule.reshape)
                    except ValueError:
                        raise MappingError(
                            f"{src}: cannot reshape {out.shape} to "
                            f"{rule.reshape}") from None
                mapped[dst] = out
                origin[dst] = src
                events.append({"event": "mapped", "src": src, "dst": dst})
                break
            else:
                events.append({"event": "unmapped", "src": src})
        return mapped, events
