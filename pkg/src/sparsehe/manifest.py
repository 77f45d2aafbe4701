"""Experiment manifests: JSON documents checked against a versioned schema."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from .errors import ConfigurationError
from .orchestrator import FlConfig

SCHEMA_VERSION = 1
KINDS = ("fl_run", "ablation", "accounting", "mia", "convergence", "sparsity_sweep")


class ManifestError(ConfigurationError):
    """Invalid manifest; ``diagnostics`` holds one dict per problem."""

    def __init__(self, diagnostics: list[dict]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(_format(d) for d in diagnostics))


def _format(diag: dict) -> str:
    where = f"line {diag['line']}" if diag.get("line") else "manifest"
    return f"{where}, field {diag.get('field') or '<root>'}: {diag['message']}"


def load_schema() -> dict:
    text = resources.files("sparsehe").joinpath("schema/manifest.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class Manifest:
    kind: str
    seeds: tuple
    config: dict = field(default_factory=dict)
    output_dir: str | None = None
    name: str = ""
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "seeds": list(self.seeds),
            "config": self.config,
        }
        if self.name:
            out["name"] = self.name
        return out

    @property
    def hash(self) -> str:
        """SHA-256 of the canonical JSON form; the output directory is not hashed."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_seeds(self, seeds) -> "Manifest":
        return Manifest(self.kind, tuple(int(s) for s in seeds), self.config, self.output_dir, self.name)

    def fl_config(self, section: str | None = None) -> FlConfig:
        raw = self.config if section is None else self.config.get(section, {})
        return fl_config_from(raw)


def deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def fl_config_from(raw: dict) -> FlConfig:
    """Partial config layered over the ``FlConfig`` defaults."""
    merged = deep_merge(FlConfig().to_dict(), raw or {})
    try:
        return FlConfig.from_dict(merged)
    except ConfigurationError as exc:
        raise ManifestError([{"field": "config", "line": None, "message": str(exc)}]) from exc


# set from the manifest seeds and the FL settings, so never written by hand
DERIVED_KEYS = ("seed",)
DERIVED_DP_KEYS = ("rounds", "sparsity")


def manifest_section(cfg: FlConfig) -> dict:
    """``cfg`` as a manifest ``config`` section, without the derived fields."""
    out = {k: v for k, v in cfg.to_dict().items() if k not in DERIVED_KEYS}
    out["dp"] = {k: v for k, v in out["dp"].items() if k not in DERIVED_DP_KEYS}
    return out


def _line_of(text: str, path) -> int | None:
    """Best-effort line of the innermost named key on ``path``."""
    pos = None
    # walk the keys in order so a nested duplicate resolves to the right one
    for key in (p for p in path if isinstance(p, str)):
        hit = text.find(json.dumps(key), 0 if pos is None else pos)
        if hit < 0:
            break
        pos = hit
    return None if pos is None else text.count("\n", 0, pos) + 1


def parse_manifest(text: str) -> Manifest:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(
            [{"line": exc.lineno, "column": exc.colno, "field": None, "message": exc.msg}]
        ) from exc
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        diags = []
        for err in errors:
            path = list(err.absolute_path)
            if err.validator == "additionalProperties" and isinstance(err.instance, dict):
                # point at the first unexpected key rather than its parent
                known = set(err.schema.get("properties", {}))
                extra = [k for k in err.instance if k not in known]
                path += extra[:1]
            diags.append(
                {
                    "line": _line_of(text, path),
                    "field": ".".join(str(p) for p in path) or None,
                    "message": err.message,
                }
            )
        raise ManifestError(diags)
    manifest = Manifest(
        kind=raw["kind"],
        seeds=tuple(raw.get("seeds", ())),
        config=raw.get("config", {}),
        output_dir=raw.get("output_dir"),
        name=raw.get("name", ""),
    )
    # construct configs now so semantic errors surface as exit-2 diagnostics
    if manifest.kind in ("fl_run", "mia"):
        manifest.fl_config()
    elif manifest.kind in ("ablation", "sparsity_sweep"):
        manifest.fl_config("fl")
    return manifest


def load_manifest(path) -> Manifest:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ManifestError([{"line": None, "field": None, "message": f"cannot read {path}: {exc}"}]) from exc
    return parse_manifest(text)
